"""Fixed-length encoding of light-curve stacks.

Each (planet, spot configuration) becomes one sample: for every channel
and every grid time point, the flux of all noise instances inside a
window around that point, together with the time-mirrored window
(t -> 2*center - t), is reduced with a harmonic mean and converted to a
relative radius. Feature order is channel-major, grid-minor, with the
auxiliary star/planet parameters appended last.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._backend import get_kernels
from .dataset import AUX_PARAMS, N_AUX, N_NOISE, Dataset, PlanetSystem

FLUX_FLOOR = 1e-9


@dataclass(frozen=True)
class EncodingConfig:
    grid_start: int = 100
    grid_end: int = 150
    grid_step: int = 5
    window_radius: int = 10

    def __post_init__(self):
        if self.grid_step <= 0 or self.window_radius < 0:
            raise ValueError("grid_step must be positive and window_radius non-negative")
        if not self.grid_start < self.grid_end:
            raise ValueError("grid_start must be below grid_end")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.grid_start, self.grid_end + 1, self.grid_step, dtype=np.int64)

    def validate_for(self, L: int, center: int) -> None:
        if self.grid_end > center:
            raise ValueError(f"grid_end {self.grid_end} beyond transit center {center}")
        if self.grid_start < 0 or self.grid_end >= L:
            raise ValueError("grid lies outside the series")


@dataclass(frozen=True)
class EncodedSample:
    planet_id: str
    spot_config_index: int
    features: np.ndarray
    target: np.ndarray


@dataclass(frozen=True)
class Encoding:
    """Design matrix, targets and group labels for a whole dataset."""

    X: np.ndarray
    Y: np.ndarray
    groups: np.ndarray  # planet id per row
    spots: np.ndarray
    config: EncodingConfig

    def __len__(self):
        return self.X.shape[0]


def flux_to_radius(f):
    """Relative planet radius ``sqrt(1 - min(1, f))``; accepts scalars or arrays."""
    arr = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("flux must be finite")
    out = np.sqrt(1.0 - np.minimum(1.0, arr))
    return float(out) if out.ndim == 0 else out


def mirror_stack(flux: np.ndarray, center: int) -> np.ndarray:
    """Concatenate each row with its reflection about ``center``.

    Column ``L + t`` of the result holds the original value at
    ``2*center - t``; reflections falling outside the series are NaN.
    """
    flux = np.asarray(flux, dtype=np.float64)
    L = flux.shape[-1]
    if not 0 < center < L:
        raise ValueError(f"center {center} outside (0, {L})")
    src = 2 * center - np.arange(L)
    ok = (src >= 0) & (src < L)
    mirrored = np.full(flux.shape, np.nan)
    mirrored[..., ok] = flux[..., src[ok]]
    return np.concatenate([flux, mirrored], axis=-1)


def mirror_index(t: int, center: int, L: int) -> int | None:
    m = 2 * center - t
    return m if 0 <= m < L else None


def harmonic_window_aggregate(values: Sequence[float]) -> float:
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("harmonic mean of an empty window")
    if np.any(~(vals > 0)):
        raise ValueError("harmonic mean needs strictly positive values")
    return float(vals.size / np.sum(1.0 / vals))


def window_counts(L: int, center: int, cfg: EncodingConfig, n_noise: int = N_NOISE) -> np.ndarray:
    """Number of flux values aggregated at each grid point."""
    counts = np.zeros(cfg.grid.shape[0], dtype=np.int64)
    for j in range(-cfg.window_radius, cfg.window_radius + 1):
        s = cfg.grid + j
        m = 2 * center - s
        counts += ((s >= 0) & (s < L)).astype(np.int64) + ((m >= 0) & (m < L))
    return counts * n_noise


def radius_features(flux: np.ndarray, center: int, cfg: EncodingConfig,
                    backend: str | None = None) -> np.ndarray:
    """Radius aggregates for a (S, N, C, L) stack, returned as (S, C * G)."""
    flux = np.ascontiguousarray(flux, dtype=np.float64)
    S, N, C, L = flux.shape
    cfg.validate_for(L, center)
    if not np.all(np.isfinite(flux)):
        raise ValueError("flux contains non-finite values")
    kernels = get_kernels(backend)
    recip = kernels.harmonic_reciprocal_sums(flux, center, cfg.grid, cfg.window_radius, FLUX_FLOOR)
    counts = window_counts(L, center, cfg, N)
    harmonic = counts / recip
    return np.sqrt(1.0 - np.minimum(1.0, harmonic)).reshape(S, C * cfg.grid.shape[0])


def encode_group(blocks, planet: PlanetSystem, cfg: EncodingConfig = EncodingConfig(),
                 center: int | None = None, backend: str | None = None) -> EncodedSample:
    """Encode the 10 noise-instance blocks of one (planet, spot configuration)."""
    blocks = list(blocks)
    if len(blocks) != N_NOISE:
        raise ValueError(f"expected {N_NOISE} blocks, got {len(blocks)}")
    ids = {(b.planet_id, b.spot_config_index) for b in blocks}
    if len(ids) != 1 or next(iter(ids))[0] != planet.planet_id:
        raise ValueError("blocks must share one planet id and spot configuration")
    flux = np.stack([np.asarray(b.flux, dtype=np.float64) for b in blocks])[None]
    if center is None:
        center = flux.shape[-1] // 2
    radii = radius_features(flux, center, cfg, backend)[0]
    features = np.concatenate([radii, planet.aux_params])
    return EncodedSample(planet.planet_id, blocks[0].spot_config_index, features,
                         planet.target_spectrum.copy())


def encode_planet(flux: np.ndarray, planet: PlanetSystem, center: int,
                  cfg: EncodingConfig = EncodingConfig(), backend: str | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Encode all spot configurations of one planet -> (X rows, Y rows)."""
    radii = radius_features(flux, center, cfg, backend)
    S = radii.shape[0]
    X = np.hstack([radii, np.broadcast_to(planet.aux_params, (S, N_AUX))])
    Y = np.broadcast_to(planet.target_spectrum, (S, planet.target_spectrum.shape[0])).copy()
    return X, Y


def encode_planets(planets: Iterable[tuple[PlanetSystem, np.ndarray]], center: int,
                   cfg: EncodingConfig = EncodingConfig(), backend: str | None = None
                   ) -> Encoding:
    xs, ys, groups, spots = [], [], [], []
    for planet, flux in planets:
        X, Y = encode_planet(flux, planet, center, cfg, backend)
        xs.append(X)
        ys.append(Y)
        groups.extend([planet.planet_id] * X.shape[0])
        spots.extend(range(X.shape[0]))
    if not xs:
        raise ValueError("no planets to encode")
    return Encoding(np.vstack(xs), np.vstack(ys), np.array(groups), np.array(spots), cfg)


def encode_dataset(ds: Dataset, cfg: EncodingConfig = EncodingConfig(),
                   backend: str | None = None) -> Encoding:
    return encode_planets(ds.iter_planets(), ds.transit_center, cfg, backend)


def feature_names(channels: int, cfg: EncodingConfig = EncodingConfig()) -> list[str]:
    names = [f"c{c:02d}_t{t:03d}" for c in range(channels) for t in cfg.grid]
    return names + [name for name, _, _ in AUX_PARAMS]


def export_encoding_csv(enc: Encoding, path) -> Path:
    """CSV ``planet_id,spot,f000..,t00..`` plus a JSON sidecar with the config."""
    path = Path(path)
    d = enc.X.shape[1]
    m = enc.Y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["planet_id", "spot"] + [f"f{i:03d}" for i in range(d)]
                   + [f"t{i:02d}" for i in range(m)])
        for pid, spot, x, y in zip(enc.groups, enc.spots, enc.X, enc.Y):
            w.writerow([pid, int(spot)] + [repr(float(v)) for v in x] + [repr(float(v)) for v in y])
    channels = (d - N_AUX) // enc.config.grid.shape[0]
    sidecar = {
        "encoding_config": asdict(enc.config),
        "feature_order": "channel-major, grid-minor, auxiliary parameters last",
        "feature_names": feature_names(channels, enc.config),
        "flux_floor": FLUX_FLOOR,
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2))
    return path


def expected_feature_count(channels: int, cfg: EncodingConfig = EncodingConfig()) -> int:
    return channels * cfg.grid.shape[0] + N_AUX

