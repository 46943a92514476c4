"""Command line entry point: ``safetycage {generate,run,report}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import active_backend
from .dataset import (
    AUX_PARAMS,
    DEPTH_RANGE,
    DriftConfig,
    export_csv,
    iter_drifted,
    load_dataset,
    write_synthetic_dataset,
)
from .encode import EncodingConfig, encode_dataset, encode_planets, export_encoding_csv
from .explain import reduced_shap
from .harness import (
    DEFAULT_PCA_K,
    DEFAULT_THRESHOLDS,
    ModelParams,
    SetupKind,
    group_kfold_split,
    pooled_rmse,
    run_cross_dataset,
    run_setup,
    score_error_spearman,
    tradeoff_curve,
)
from .reports import (
    read_records_csv,
    read_tradeoff_csv,
    summarize,
    write_plot_csvs,
    write_records_csv,
    write_shap_csv,
    write_tradeoff_csv,
)

ASSUMPTIONS = [
    "ridge alpha 1.0 with unpenalised intercept; targets not standardised",
    "PCA via covariance eigendecomposition, largest-magnitude loading made positive",
    "isolation forest: 100 trees, subsample min(256, n), depth cap ceil(log2 psi), offset -0.5",
    "y_true setup scores validation predictions, not validation targets",
    "trade-off RMSE pools squared errors over accepted samples' channels",
    "thresholds accept scores >= threshold",
    "harmonic-mean inputs floored at 1e-9; out-of-range mirror indices dropped",
    "fold-averaged curves interpolate linearly on a 101-point coverage grid",
]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    dataset: str | None = None
    valid_dataset: str | None = None
    output: str | None = None
    encoding: EncodingConfig = field(default_factory=EncodingConfig)
    alpha: float = 1.0
    pca_k: int = DEFAULT_PCA_K
    n_trees: int = 100
    psi: int | None = None
    cv_k: int = 10
    cross_k: int = 5
    cv_seed: int = 0
    seed: int = 0
    setups: list[str] = field(default_factory=lambda: [k.value for k in SetupKind])
    drift: DriftConfig | None = None
    n_thresholds: int = DEFAULT_THRESHOLDS
    export_encoding: bool = False
    export_shap: bool = False

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        if "config" in data and isinstance(data["config"], dict):
            data = data["config"]  # a previous run's meta.json
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if isinstance(data.get("encoding"), dict):
            data["encoding"] = EncodingConfig(**data["encoding"])
        if isinstance(data.get("drift"), dict):
            data["drift"] = DriftConfig(**data["drift"])
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if not self.dataset:
            raise UsageError("a dataset is required (--dataset or config 'dataset')")
        if not self.output:
            raise UsageError("an output directory is required (--out or config 'output')")
        if not self.setups:
            raise UsageError("no setups selected")
        for s in self.setups:
            try:
                SetupKind.parse(s)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        if self.alpha <= 0:
            raise UsageError("alpha must be positive")
        if self.pca_k < 1 or self.n_trees < 1 or self.n_thresholds < 1:
            raise UsageError("pca_k, n_trees and n_thresholds must be positive")
        if self.cv_k < 2 or self.cross_k < 2:
            raise UsageError("fold counts must be at least 2")
        if self.psi is not None and self.psi < 2:
            raise UsageError("psi must be at least 2")
        if self.cv_seed < 0 or self.seed < 0:
            raise UsageError("seeds must be non-negative")


def _load_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def build_run_config(args) -> RunConfig:
    cfg = RunConfig.from_dict(_load_json(args.config)) if args.config else RunConfig()
    overrides = {
        "dataset": args.dataset, "valid_dataset": args.valid_dataset, "output": args.out,
        "alpha": args.alpha, "pca_k": args.pca_k, "n_trees": args.trees, "psi": args.psi,
        "cv_k": args.folds, "cross_k": args.cross_folds, "cv_seed": args.cv_seed,
        "seed": args.seed, "n_thresholds": args.thresholds,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.setups:
        cfg.setups = [s.strip() for s in args.setups.split(",") if s.strip()]
    if args.drift_config:
        try:
            cfg.drift = DriftConfig(**_load_json(args.drift_config))
        except TypeError as exc:
            raise UsageError(f"bad drift config: {exc}") from None
    if args.export_encoding:
        cfg.export_encoding = True
    if args.export_shap:
        cfg.export_shap = True
    cfg.validate()
    cfg.setups = [SetupKind.parse(s).value for s in cfg.setups]
    return cfg


def _evaluate_all(train, valid, cfg: RunConfig, k: int, threads: int, cross: bool, tag: str,
                  workdir: Path):
    plan = group_kfold_split(train.groups, k, cfg.cv_seed)
    params = ModelParams(cfg.pca_k, cfg.alpha, cfg.n_trees, cfg.psi)
    records, curves, summary = [], {}, {}
    for setup in cfg.setups:
        models = []
        if cross:
            recs = run_cross_dataset(train, valid, plan, setup, cfg.seed, params, threads, models)
        else:
            recs = run_setup(train, plan, setup, cfg.seed, params, threads, models)
        records.extend(recs)
        curves[setup] = tradeoff_curve(recs, cfg.n_thresholds, setup)
        rho = score_error_spearman(recs)
        summary[setup] = {"spearman": rho, "rmse_full_coverage": pooled_rmse(recs),
                          "n_records": len(recs)}
        print(f"{tag} {setup}: spearman={'degenerate' if rho is None else f'{rho:.4f}'}"
              f" rmse={pooled_rmse(recs):.6g} records={len(recs)}")
        if cfg.export_shap and setup == SetupKind.X_SHAP.value:
            folds = plan.folds_for(valid.groups)
            ids, spots, vecs = [], [], []
            for f, m in enumerate(models):
                rows = np.flatnonzero(folds == f)
                ids.extend(valid.groups[rows])
                spots.extend(valid.spots[rows])
                vecs.append(reduced_shap(m.ridge, m.x_scaler.transform(valid.X[rows])))
            write_shap_csv(workdir / f"shap{tag_suffix(tag)}.csv", ids, spots, np.vstack(vecs))
    suffix = tag_suffix(tag)
    write_records_csv(workdir / f"records{suffix}.csv", records)
    write_tradeoff_csv(workdir / f"tradeoff{suffix}.csv", curves)
    return summary


def tag_suffix(tag: str) -> str:
    return "" if tag == "cv" else "_cross"


def cmd_run(args) -> int:
    cfg = build_run_config(args)
    threads = args.threads or os.cpu_count() or 1
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    workdir = Path(tempfile.mkdtemp(prefix=".run-", dir=out.parent))
    try:
        ds = load_dataset(cfg.dataset)
        clean = encode_dataset(ds, cfg.encoding)
        if cfg.export_encoding:
            export_encoding_csv(clean, workdir / "encoded.csv")
        meta = {"config": cfg.to_dict(), "version": __version__, "backend": active_backend(),
                "assumptions": ASSUMPTIONS,
                "generator": {"aux_params": [list(a) for a in AUX_PARAMS],
                              "depth_range": list(DEPTH_RANGE)},
                "n_samples": len(clean), "n_features": int(clean.X.shape[1])}
        meta["cv"] = _evaluate_all(clean, clean, cfg, cfg.cv_k, threads, False, "cv", workdir)

        valid = None
        if cfg.valid_dataset:
            vds = load_dataset(cfg.valid_dataset)
            valid = encode_dataset(vds, cfg.encoding)
        elif cfg.drift is not None:
            valid = encode_planets(iter_drifted(ds.iter_planets(), cfg.drift),
                                   ds.transit_center, cfg.encoding)
        if valid is not None:
            meta["cross"] = _evaluate_all(clean, valid, cfg, cfg.cross_k, threads, True, "cross",
                                          workdir)
        (workdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

        out.mkdir(parents=True, exist_ok=True)
        for item in workdir.iterdir():
            os.replace(item, out / item.name)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
    return 0


def cmd_generate(args) -> int:
    if args.planets < 1:
        raise UsageError("--planets must be at least 1")
    out = Path(args.out)
    tmp = out.with_name(out.name + ".partial")
    try:
        write_synthetic_dataset(tmp, args.planets, args.length, args.seed, args.channels)
        os.replace(tmp, out)
    finally:
        tmp.unlink(missing_ok=True)
    if args.csv:
        export_csv(load_dataset(out), out.parent)
    print(f"wrote {out}: {args.planets} planets x 100 blocks of {args.channels}x{args.length}")
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir) if args.run_dir else None
    sources = []
    if args.records:
        sources.append(("", Path(args.records), Path(args.tradeoff) if args.tradeoff else None))
    elif run_dir:
        for suffix in ("", "_cross"):
            rec = run_dir / f"records{suffix}.csv"
            if rec.exists():
                sources.append((suffix, rec, run_dir / f"tradeoff{suffix}.csv"))
        if not sources:
            raise FileNotFoundError(f"no records.csv in {run_dir}")
    else:
        raise UsageError("give --run-dir or --records")
    thresholds = [0.0] + [t for t in args.threshold if t != 0.0]
    for suffix, rec_path, trade_path in sources:
        records = read_records_csv(rec_path)
        if not records:
            raise ValueError(f"{rec_path}: no records")
        curves = read_tradeoff_csv(trade_path) if trade_path and trade_path.exists() else {}
        title = "cross-dataset run" if suffix else "cross-validation run"
        print(summarize(records, curves, thresholds, args.coverage, title=f"== {title} =="))
        out_dir = Path(args.out_dir) if args.out_dir else (run_dir or rec_path.parent) / "plots"
        write_plot_csvs(records, curves, out_dir, prefix=suffix.lstrip("_") + "_" if suffix else "")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="safetycage", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic dataset file")
    g.add_argument("--planets", type=int, required=True, help="number of star/planet systems")
    g.add_argument("--length", type=int, default=300, help="time steps per light curve (even, >= 200)")
    g.add_argument("--channels", type=int, default=55, help="wavelength channels")
    g.add_argument("--seed", type=int, default=0, help="generator seed")
    g.add_argument("--out", required=True, help="output dataset path")
    g.add_argument("--csv", action="store_true", help="also write params.csv and targets.csv")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="cross-validate the anomaly-detection setups")
    r.add_argument("--config", help="run config JSON (a previous meta.json also works)")
    r.add_argument("--dataset", help="training dataset file")
    r.add_argument("--valid-dataset", help="second dataset for cross-dataset validation folds")
    r.add_argument("--drift-config", help="JSON DriftConfig; validates on a drifted copy")
    r.add_argument("--out", help="output directory")
    r.add_argument("--setups", help="comma-separated subset of x,y_true,x_shap")
    r.add_argument("--alpha", type=float, help="ridge L2 strength (default 1.0)")
    r.add_argument("--pca-k", type=int, help="PCA components (default 30)")
    r.add_argument("--trees", type=int, help="isolation trees (default 100)")
    r.add_argument("--psi", type=int, help="isolation subsample size (default min(256, n))")
    r.add_argument("--folds", type=int, help="folds for the clean run (default 10)")
    r.add_argument("--cross-folds", type=int, help="folds for the cross-dataset run (default 5)")
    r.add_argument("--cv-seed", type=int, help="fold assignment seed")
    r.add_argument("--seed", type=int, help="isolation forest seed")
    r.add_argument("--thresholds", type=int, help="threshold grid size (default 201)")
    r.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    r.add_argument("--export-encoding", action="store_true", help="write encoded.csv")
    r.add_argument("--export-shap", action="store_true", help="write reduced SHAP vectors")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("report", help="summarise a run and write plot-ready CSVs")
    s.add_argument("--run-dir", help="directory written by 'run'")
    s.add_argument("--records", help="records CSV (instead of --run-dir)")
    s.add_argument("--tradeoff", help="trade-off CSV matching --records")
    s.add_argument("--threshold", type=float, action="append", default=[],
                   help="extra acceptance threshold to report (repeatable)")
    s.add_argument("--coverage", type=float, default=0.98, help="coverage target (default 0.98)")
    s.add_argument("--out-dir", help="where plot CSVs go (default <run-dir>/plots)")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"safetycage: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"safetycage: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
