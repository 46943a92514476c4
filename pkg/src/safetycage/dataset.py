"""Synthetic transit light-curve datasets, drift injection and persistence.

A dataset holds, for every planet, 10 stellar-spot configurations times
10 photon-noise instances of a (channels x series_length) flux matrix.
Flux is stored as one array of shape (planets, 10, 10, C, L); datasets
loaded from disk keep it memory-mapped, so only the planets being
processed are paged in.

Binary layout (little-endian)::

    header   "OCDS" | version u16 | n_planets u32 | C u16 | L u16 | center u16
    planets  per planet: id length u16, id UTF-8 bytes, 6 x f64 aux, C x f64 target
    blocks   (planet, spot, noise) lexicographic, each C x L f64 row-major
    trailer  CRC32 (u32) of every byte between header and trailer
"""
from __future__ import annotations

import csv
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"OCDS"
FORMAT_VERSION = 1
N_SPOTS = 10
N_NOISE = 10
N_CHANNELS = 55
N_AUX = 6
DEFAULT_LENGTH = 300

_HEADER = struct.Struct("<4sHIHHH")
_CHUNK = 1 << 22

# name, low, high of the uniform draw for each auxiliary parameter
AUX_PARAMS = (
    ("star_temperature_K", 3000.0, 7000.0),
    ("star_logg", 3.5, 5.0),
    ("star_radius_rsun", 0.5, 2.0),
    ("star_mass_msun", 0.5, 1.5),
    ("planet_period_days", 1.0, 20.0),
    ("planet_mass_mjup", 0.01, 3.0),
)
DEPTH_RANGE = (1e-4, 1e-2)
NOISE_SIGMA_RANGE = (0.1, 1.0)  # multiples of the base depth
SPOT_AMPLITUDE_MAX = 0.3  # multiple of the base depth
FLAT_WIDTH_RANGE = (1 / 30, 4 / 15)  # fractions of the series length
RAMP_WIDTH_RANGE = (1 / 60, 2 / 15)
DURATION_SKEW = 3.0
AR_COEFFICIENT = 0.9
TARGET_CLAMP = 1e-9


class DatasetFormatError(ValueError):
    """Raised when a dataset file cannot be decoded."""


class BadMagicError(DatasetFormatError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class TruncatedDataError(DatasetFormatError):
    pass


class ChecksumMismatchError(DatasetFormatError):
    pass


@dataclass(frozen=True)
class PlanetSystem:
    planet_id: str
    aux_params: np.ndarray
    target_spectrum: np.ndarray

    def __post_init__(self):
        aux = np.asarray(self.aux_params, dtype=np.float64)
        target = np.asarray(self.target_spectrum, dtype=np.float64)
        if aux.shape != (N_AUX,) or not np.all(np.isfinite(aux)):
            raise ValueError(f"{self.planet_id}: aux_params must be {N_AUX} finite values")
        if target.ndim != 1 or not np.all(np.isfinite(target)):
            raise ValueError(f"{self.planet_id}: target_spectrum must be a finite vector")
        if np.any(target <= 0) or np.any(target >= 1):
            raise ValueError(f"{self.planet_id}: target radii must lie in (0, 1)")
        object.__setattr__(self, "aux_params", aux)
        object.__setattr__(self, "target_spectrum", target)

    def __eq__(self, other):
        if not isinstance(other, PlanetSystem):
            return NotImplemented
        return (
            self.planet_id == other.planet_id
            and _bits_equal(self.aux_params, other.aux_params)
            and _bits_equal(self.target_spectrum, other.target_spectrum)
        )


@dataclass(frozen=True)
class LightCurveBlock:
    planet_id: str
    spot_config_index: int
    noise_instance_index: int
    flux: np.ndarray


@dataclass(frozen=True)
class DriftConfig:
    gain_nonlinearity: float = 0.0
    red_noise_amplitude: float = 0.0
    target_shift_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("gain_nonlinearity", "red_noise_amplitude", "target_shift_sigma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def is_identity(self) -> bool:
        return (
            self.gain_nonlinearity == 0
            and self.red_noise_amplitude == 0
            and self.target_shift_sigma == 0
        )


@dataclass(eq=False)
class Dataset:
    series_length: int
    channels: int
    planets: list[PlanetSystem]
    flux: np.ndarray  # (planets, spots, noise, C, L)
    transit_center: int = field(default=-1)

    def __post_init__(self):
        if self.transit_center < 0:
            self.transit_center = self.series_length // 2
        expected = (len(self.planets), N_SPOTS, N_NOISE, self.channels, self.series_length)
        if tuple(self.flux.shape) != expected:
            raise ValueError(f"flux shape {self.flux.shape} != {expected}")
        if not 0 < self.transit_center < self.series_length:
            raise ValueError("transit_center must lie strictly inside the series")
        for p in self.planets:
            if p.target_spectrum.shape != (self.channels,):
                raise ValueError(f"{p.planet_id}: expected {self.channels} target channels")

    @property
    def planet_ids(self) -> list[str]:
        return [p.planet_id for p in self.planets]

    def iter_planets(self) -> Iterator[tuple[PlanetSystem, np.ndarray]]:
        for i, planet in enumerate(self.planets):
            yield planet, np.asarray(self.flux[i])

    @property
    def blocks(self) -> Iterator[LightCurveBlock]:
        for i, planet in enumerate(self.planets):
            for s in range(N_SPOTS):
                for n in range(N_NOISE):
                    yield LightCurveBlock(planet.planet_id, s, n, self.flux[i, s, n])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.series_length == other.series_length
            and self.channels == other.channels
            and self.transit_center == other.transit_center
            and self.planets == other.planets
            and _bits_equal(np.asarray(self.flux), np.asarray(other.flux))
        )


def _bits_equal(a: np.ndarray, b: np.ndarray) -> bool:
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return a.shape == b.shape and np.array_equal(a.view(np.uint64), b.view(np.uint64))


# --------------------------------------------------------------------------
# generation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanetDraw:
    """Generative parameters of one synthetic planet."""

    aux: np.ndarray
    depth: np.ndarray  # per channel, fraction of stellar flux blocked
    w_flat: float
    w_ramp: float
    spot_amplitude: np.ndarray  # (spots,)
    spot_center: np.ndarray
    spot_halfwidth: np.ndarray
    noise_sigma: np.ndarray  # (C,)

    @property
    def base_depth(self) -> float:
        return float(np.mean(self.depth))


def planet_rng(seed: int, index: int) -> np.random.Generator:
    """RNG stream for planet ``index``; independent of generation order."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _skewed_long(u: float, bounds: tuple[float, float]) -> float:
    # density rises toward the upper bound: short transits form a sparse tail
    lo, hi = bounds
    return lo + (hi - lo) * (1.0 - u**DURATION_SKEW)


def draw_planet(rng: np.random.Generator, L: int, C: int) -> PlanetDraw:
    lows = np.array([lo for _, lo, _ in AUX_PARAMS])
    highs = np.array([hi for _, _, hi in AUX_PARAMS])
    aux = lows + (highs - lows) * rng.random(N_AUX)

    d_base = float(rng.uniform(*DEPTH_RANGE))
    wave_amp, wave_freq, wave_phase, tilt = rng.uniform(
        [0.0, 0.5, 0.0, -0.2], [0.3, 3.0, 2 * np.pi, 0.2]
    )
    x = np.arange(C) / max(C - 1, 1)
    modulation = 1 + wave_amp * np.sin(2 * np.pi * wave_freq * x + wave_phase) + tilt * (x - 0.5)
    depth = d_base * modulation

    u_flat, u_ramp = rng.random(2)
    w_flat = L * _skewed_long(u_flat, FLAT_WIDTH_RANGE)
    w_ramp = L * _skewed_long(u_ramp, RAMP_WIDTH_RANGE)
    reach = w_flat / 2 + w_ramp
    spot_amplitude = rng.uniform(-SPOT_AMPLITUDE_MAX, SPOT_AMPLITUDE_MAX, N_SPOTS) * d_base
    spot_center = rng.uniform(-reach, reach, N_SPOTS)  # relative to transit center
    spot_halfwidth = rng.uniform(L / 60, L / 10, N_SPOTS)
    noise_sigma = rng.uniform(*NOISE_SIGMA_RANGE, C) * d_base
    return PlanetDraw(aux, depth, w_flat, w_ramp, spot_amplitude, spot_center,
                      spot_halfwidth, noise_sigma)


def transit_profile(L: int, center: int, depth, w_flat: float, w_ramp: float) -> np.ndarray:
    """Trapezoidal transit: 1.0 out of transit, 1 - depth on the flat bottom."""
    depth = np.atleast_1d(np.asarray(depth, dtype=np.float64))
    dt = np.abs(np.arange(L) - center)
    shape = np.clip((w_flat / 2 + w_ramp - dt) / w_ramp, 0.0, 1.0)
    return 1.0 - depth[:, None] * shape[None, :]


def spot_factor(draw: PlanetDraw, L: int, center: int, spot: int) -> np.ndarray:
    """Multiplicative (C, L) perturbation of one spot configuration.

    The bump has compact support inside the transit, so out-of-transit
    flux is left at exactly 1.0.
    """
    C = draw.depth.shape[0]
    u = (np.arange(L) - center - draw.spot_center[spot]) / draw.spot_halfwidth[spot]
    bump = np.where(np.abs(u) < 1, (1 - u * u) ** 2, 0.0)
    chroma = 1 - 0.5 * np.arange(C) / max(C - 1, 1)
    return 1.0 + draw.spot_amplitude[spot] * chroma[:, None] * bump[None, :]


def noiseless_flux(draw: PlanetDraw, L: int, center: int) -> np.ndarray:
    """(spots, C, L) flux before photon noise."""
    base = transit_profile(L, center, draw.depth, draw.w_flat, draw.w_ramp)
    return np.stack([base * spot_factor(draw, L, center, s) for s in range(N_SPOTS)])


def _planet_id(index: int) -> str:
    return f"P{index:05d}"


def _check_sizes(n_planets: int, L: int, C: int):
    if n_planets < 1:
        raise ValueError("n_planets must be >= 1")
    if L < 200 or L % 2:
        raise ValueError("series length must be even and >= 200")
    if not 1 <= C < 2**16:
        raise ValueError("channel count out of range")


def iter_synthetic_planets(n_planets: int, L: int = DEFAULT_LENGTH, seed: int = 0,
                           channels: int = N_CHANNELS, start: int = 0,
                           ) -> Iterator[tuple[PlanetSystem, np.ndarray]]:
    """Yield (planet, flux) pairs one planet at a time."""
    _check_sizes(n_planets, L, channels)
    center = L // 2
    for i in range(start, start + n_planets):
        rng = planet_rng(seed, i)
        draw = draw_planet(rng, L, channels)
        clean = noiseless_flux(draw, L, center)
        noise = rng.standard_normal((N_SPOTS, N_NOISE, channels, L))
        flux = clean[:, None] + draw.noise_sigma[None, None, :, None] * noise
        planet = PlanetSystem(_planet_id(i), draw.aux, np.sqrt(draw.depth))
        yield planet, flux


def generate_synthetic_dataset(n_planets: int, L: int = DEFAULT_LENGTH, seed: int = 0,
                               channels: int = N_CHANNELS) -> Dataset:
    planets, fluxes = [], []
    for planet, flux in iter_synthetic_planets(n_planets, L, seed, channels):
        planets.append(planet)
        fluxes.append(flux)
    return Dataset(L, channels, planets, np.stack(fluxes), L // 2)


# --------------------------------------------------------------------------
# drift
# --------------------------------------------------------------------------

def drift_planet(flux: np.ndarray, planet: PlanetSystem, cfg: DriftConfig,
                 index: int) -> tuple[PlanetSystem, np.ndarray]:
    """Apply ``cfg`` to one planet's (spots, noise, C, L) flux stack.

    ``red_noise_amplitude`` is the stationary standard deviation of the
    AR(1) series; one series per (spot, channel), shared by all noise
    instances of that spot configuration.
    """
    if cfg.is_identity:
        return planet, flux
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, index]))
    S, N, C, L = flux.shape
    out = np.array(flux, dtype=np.float64, copy=True)
    if cfg.gain_nonlinearity:
        out += cfg.gain_nonlinearity * (out - 1.0) ** 2
    if cfg.red_noise_amplitude:
        innov = rng.standard_normal((S, C, L)) * cfg.red_noise_amplitude
        red = np.empty_like(innov)
        red[..., 0] = innov[..., 0]
        scale = math.sqrt(1 - AR_COEFFICIENT**2)
        for t in range(1, L):
            red[..., t] = AR_COEFFICIENT * red[..., t - 1] + scale * innov[..., t]
        out += red[:, None]
    target = planet.target_spectrum
    if cfg.target_shift_sigma:
        target = target + rng.normal(0.0, cfg.target_shift_sigma, target.shape)
        target = np.clip(target, TARGET_CLAMP, 1 - TARGET_CLAMP)
    return PlanetSystem(planet.planet_id, planet.aux_params, target), out


def iter_drifted(planets: Iterable[tuple[PlanetSystem, np.ndarray]], cfg: DriftConfig
                 ) -> Iterator[tuple[PlanetSystem, np.ndarray]]:
    for i, (planet, flux) in enumerate(planets):
        yield drift_planet(flux, planet, cfg, i)


def inject_drift(ds: Dataset, cfg: DriftConfig) -> Dataset:
    planets, fluxes = [], []
    for planet, flux in iter_drifted(ds.iter_planets(), cfg):
        planets.append(planet)
        fluxes.append(flux)
    flux = np.stack(fluxes) if fluxes else np.asarray(ds.flux).copy()
    return Dataset(ds.series_length, ds.channels, planets, flux, ds.transit_center)


# --------------------------------------------------------------------------
# persistence
# --------------------------------------------------------------------------

def _planet_record(planet: PlanetSystem) -> bytes:
    raw = planet.planet_id.encode("utf-8")
    if len(raw) >= 2**16:
        raise ValueError("planet id too long")
    return (struct.pack("<H", len(raw)) + raw
            + planet.aux_params.astype("<f8").tobytes()
            + planet.target_spectrum.astype("<f8").tobytes())


def write_dataset_stream(path, L: int, C: int, center: int, n_planets: int,
                         planets: Iterable[tuple[PlanetSystem, np.ndarray]],
                         meta: list[PlanetSystem]) -> None:
    """Write a dataset without holding every flux block in memory.

    ``meta`` lists all planets up front (the planet table precedes the
    blocks); ``planets`` then yields their flux stacks in the same order.
    """
    if len(meta) != n_planets:
        raise ValueError("planet table length does not match n_planets")
    path = Path(path)
    crc = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n_planets, C, L, center))
        for planet in meta:
            rec = _planet_record(planet)
            crc = zlib.crc32(rec, crc)
            fh.write(rec)
        written = 0
        for (planet, flux), expected in zip(planets, meta):
            if planet.planet_id != expected.planet_id:
                raise ValueError("flux stream out of order with planet table")
            arr = np.ascontiguousarray(flux, dtype="<f8")
            if arr.shape != (N_SPOTS, N_NOISE, C, L):
                raise ValueError(f"{planet.planet_id}: bad flux shape {arr.shape}")
            buf = memoryview(arr).cast("B")
            crc = zlib.crc32(buf, crc)
            fh.write(buf)
            written += 1
        if written != n_planets:
            raise ValueError("flux stream ended early")
        fh.write(struct.pack("<I", crc))


def save_dataset(ds: Dataset, path) -> None:
    write_dataset_stream(path, ds.series_length, ds.channels, ds.transit_center,
                         len(ds.planets), ds.iter_planets(), ds.planets)


def write_synthetic_dataset(path, n_planets: int, L: int = DEFAULT_LENGTH, seed: int = 0,
                            channels: int = N_CHANNELS) -> None:
    """Same bytes as ``save_dataset(generate_synthetic_dataset(...))``, streamed."""
    _check_sizes(n_planets, L, channels)
    meta = []
    for i in range(n_planets):
        draw = draw_planet(planet_rng(seed, i), L, channels)
        meta.append(PlanetSystem(_planet_id(i), draw.aux, np.sqrt(draw.depth)))
    write_dataset_stream(path, L, channels, L // 2, n_planets,
                         iter_synthetic_planets(n_planets, L, seed, channels), meta)


def _need(buf: bytes, pos: int, n: int) -> None:
    if pos + n > len(buf):
        raise TruncatedDataError("unexpected end of data")


def load_dataset(path, mmap: bool = True) -> Dataset:
    """Read a dataset file, verifying its checksum.

    With ``mmap`` the flux array is a read-only memory map of the file.
    """
    path = Path(path)
    size = path.stat().st_size
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != MAGIC:
            raise BadMagicError("bad magic")
        if len(head) < _HEADER.size:
            raise TruncatedDataError("unexpected end of data")
        _, version, n_planets, C, L, center = _HEADER.unpack(head)
        if version != FORMAT_VERSION:
            raise UnsupportedVersionError(f"unsupported format version {version}")

        planets = []
        crc = 0
        for _ in range(n_planets):
            raw_len = fh.read(2)
            _need(raw_len, 0, 2)
            crc = zlib.crc32(raw_len, crc)
            (n_id,) = struct.unpack("<H", raw_len)
            body = fh.read(n_id + 8 * (N_AUX + C))
            _need(body, 0, n_id + 8 * (N_AUX + C))
            crc = zlib.crc32(body, crc)
            try:
                pid = body[:n_id].decode("utf-8")
            except UnicodeDecodeError as exc:
                raise DatasetFormatError(f"planet id is not UTF-8: {exc}") from None
            vals = np.frombuffer(body, dtype="<f8", offset=n_id).astype(np.float64)
            try:
                planets.append(PlanetSystem(pid, vals[:N_AUX], vals[N_AUX:]))
            except ValueError as exc:
                raise DatasetFormatError(str(exc)) from None

        offset = fh.tell()
        n_bytes = n_planets * N_SPOTS * N_NOISE * C * L * 8
        if size < offset + n_bytes + 4:
            raise TruncatedDataError("unexpected end of data")
        if size > offset + n_bytes + 4:
            raise DatasetFormatError("trailing bytes after checksum")
        remaining = n_bytes
        while remaining:
            chunk = fh.read(min(_CHUNK, remaining))
            if not chunk:
                raise TruncatedDataError("unexpected end of data")
            crc = zlib.crc32(chunk, crc)
            remaining -= len(chunk)
        (stored,) = struct.unpack("<I", fh.read(4))
        if stored != crc:
            raise ChecksumMismatchError(f"checksum mismatch: stored {stored:#010x}, computed {crc:#010x}")

    shape = (n_planets, N_SPOTS, N_NOISE, C, L)
    if mmap and n_bytes:
        flux = np.memmap(path, dtype="<f8", mode="r", offset=offset, shape=shape)
    else:
        with open(path, "rb") as fh:
            fh.seek(offset)
            flux = np.frombuffer(fh.read(n_bytes), dtype="<f8").astype(np.float64).reshape(shape)
    return Dataset(L, C, planets, flux, center)


def export_csv(ds: Dataset, directory) -> tuple[Path, Path]:
    """Write ``params.csv`` and ``targets.csv`` for inspection."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    params_path = directory / "params.csv"
    targets_path = directory / "targets.csv"
    with open(params_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["planet_id"] + [name for name, _, _ in AUX_PARAMS])
        for p in ds.planets:
            w.writerow([p.planet_id] + [repr(float(v)) for v in p.aux_params])
    with open(targets_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["planet_id"] + [f"t{c:02d}" for c in range(ds.channels)])
        for p in ds.planets:
            w.writerow([p.planet_id] + [repr(float(v)) for v in p.target_spectrum])
    return params_path, targets_path
