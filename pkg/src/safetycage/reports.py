"""CSV tables written and read by the command line tools."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .harness import (
    SampleRecord,
    TradeoffCurve,
    TradeoffPoint,
    evaluate_threshold,
    fold_average_curves,
    mean_sample_rmse,
    per_fold_curves,
    pooled_rmse,
    score_error_spearman,
)

RECORD_HEADER = ["setup", "fold", "planet_id", "spot", "decision_score", "rmse"]
TRADEOFF_HEADER = ["setup", "threshold", "coverage", "rmse_accepted"]


class CsvFormatError(ValueError):
    pass


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_records_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in records:
            w.writerow([r.setup, r.fold, r.planet_id, r.spot, _fmt(r.decision_score), _fmt(r.rmse)])


def write_tradeoff_csv(path, curves: dict[str, TradeoffCurve]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADEOFF_HEADER)
        for setup, curve in curves.items():
            for p in curve.points:
                w.writerow([setup, _fmt(p.threshold), _fmt(p.coverage), _fmt(p.rmse_accepted)])


def _rows(path, header):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: no records (empty file)") from None
        if first != header:
            raise CsvFormatError(f"{path}: line 1: expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path}: line {reader.line_num}: expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _float(path, line, text, allow_empty=False):
    if allow_empty and text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise CsvFormatError(f"{path}: line {line}: not a number: {text!r}") from None


def _int(path, line, text):
    try:
        return int(text)
    except ValueError:
        raise CsvFormatError(f"{path}: line {line}: not an integer: {text!r}") from None


def read_records_csv(path) -> list[SampleRecord]:
    """Records from ``records.csv``; the per-sample MSE is rebuilt as rmse**2."""
    out = []
    for line, (setup, fold, pid, spot, score, rmse) in _rows(path, RECORD_HEADER):
        r = _float(path, line, rmse)
        out.append(SampleRecord(setup, _int(path, line, fold), pid, _int(path, line, spot),
                                _float(path, line, score), r, r * r))
    return out


def read_tradeoff_csv(path) -> dict[str, TradeoffCurve]:
    points: dict[str, list[TradeoffPoint]] = {}
    for line, (setup, thr, cov, rmse) in _rows(path, TRADEOFF_HEADER):
        points.setdefault(setup, []).append(TradeoffPoint(
            _float(path, line, thr), _float(path, line, cov),
            _float(path, line, rmse, allow_empty=True)))
    return {s: TradeoffCurve(p, s) for s, p in points.items()}


def group_by_setup(records) -> dict[str, list[SampleRecord]]:
    out: dict[str, list[SampleRecord]] = {}
    for r in records:
        out.setdefault(r.setup, []).append(r)
    return out


def operating_point_for_coverage(curve: TradeoffCurve, coverage: float) -> TradeoffPoint | None:
    """Highest threshold whose coverage still reaches ``coverage``."""
    ok = [p for p in curve.points if p.coverage >= coverage]
    return max(ok, key=lambda p: p.threshold) if ok else None


def _fmt_rmse(value):
    return "n/a" if value is None else f"{value:.6g}"


def summarize(records, curves: dict[str, TradeoffCurve] | None = None,
              thresholds=(0.0,), coverage_target: float = 0.98, title: str = "") -> str:
    """Plain-text summary, one block per setup."""
    if not records:
        raise ValueError("no records")
    lines = [title] if title else []
    for setup, recs in group_by_setup(records).items():
        rho = score_error_spearman(recs) if len(recs) >= 3 else None
        lines.append(f"[{setup}] samples={len(recs)}")
        lines.append(f"  spearman(-score, rmse) = {'degenerate' if rho is None else f'{rho:.4f}'}")
        lines.append(f"  full-coverage rmse: pooled={pooled_rmse(recs):.6g}"
                     f" mean-per-sample={mean_sample_rmse(recs):.6g}")
        for thr in thresholds:
            p = evaluate_threshold(recs, thr)
            lines.append(f"  threshold {thr:+.4f}: coverage={p.coverage:.4f}"
                         f" rmse={_fmt_rmse(p.rmse_accepted)}")
        if curves and setup in curves:
            p = operating_point_for_coverage(curves[setup], coverage_target)
            if p is not None:
                lines.append(f"  coverage>={coverage_target:.2f}: threshold={p.threshold:+.4f}"
                             f" coverage={p.coverage:.4f} rmse={_fmt_rmse(p.rmse_accepted)}")
    return "\n".join(lines)


def write_plot_csvs(records, curves: dict[str, TradeoffCurve], directory, prefix: str = "") -> list[Path]:
    """Per-setup fold-averaged curves and threshold sweeps for external plotting."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for setup, recs in group_by_setup(records).items():
        avg = fold_average_curves(per_fold_curves(recs))
        path = directory / f"{prefix}curve_{setup}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["coverage", "rmse_fold_mean"])
            for p in avg.points:
                w.writerow([_fmt(p.coverage), _fmt(p.rmse_accepted)])
        written.append(path)
        if setup in curves:
            path = directory / f"{prefix}sweep_{setup}.csv"
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["threshold", "coverage", "rmse_accepted"])
                for p in curves[setup].points:
                    if math.isfinite(p.threshold):
                        w.writerow([_fmt(p.threshold), _fmt(p.coverage), _fmt(p.rmse_accepted)])
            written.append(path)
        path = directory / f"{prefix}scatter_{setup}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["decision_score", "rmse"])
            for r in recs:
                w.writerow([_fmt(r.decision_score), _fmt(r.rmse)])
        written.append(path)
    return written


def write_shap_csv(path, planet_ids, spots, vectors) -> None:
    """Reduced SHAP vectors, one row per sample: ``planet_id,spot,s000..``."""
    vectors = np.asarray(vectors)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["planet_id", "spot"] + [f"s{i:03d}" for i in range(vectors.shape[1])])
        for pid, spot, v in zip(planet_ids, spots, vectors):
            w.writerow([pid, int(spot)] + [repr(float(x)) for x in v])
