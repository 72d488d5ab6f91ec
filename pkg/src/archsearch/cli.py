"""Command-line front end: dataset generation, search runs, evaluation, reports.

Subcommands:
  gen-eggbox    write the synthetic egg-carton regression dataset as CSV
  search        run a configured search; writes trials.jsonl, report.json,
                layers.csv, model.json and test.csv into the output directory
  eval          score a saved model file on a CSV dataset
  sweep-report  regenerate layers.csv from an existing report.json

Exit codes: 0 success, 2 configuration error, 3 data error, 4 every trial
of an iteration failed. The output directory may be overridden with the
ARCHSEARCH_OUTPUT_DIR environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import data as datamod
from . import persist, search, space as spacemod
from .errors import AllTrialsFailedError, ArchSearchError, ConfigError, DataError
from .nn import CLASSIFICATION, REGRESSION

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_ALL_FAILED = 4

OUTPUT_DIR_ENV = "ARCHSEARCH_OUTPUT_DIR"


# --- run configuration ----------------------------------------------------------


@dataclass(frozen=True)
class DatasetConfig:
    source: str  # builtin:eggbox | builtin:bars | csv
    count: int = 4000
    seed: int = 0
    scheme: str = "uniform"
    height: int = 8
    width: int = 8
    path: Optional[str] = None
    targets: tuple[str, ...] = ()
    task: Optional[str] = None
    image_shape: Optional[tuple[int, int, int]] = None


@dataclass(frozen=True)
class SplitConfig:
    test_fraction: float = 0.10
    val_fraction: float = 0.10
    seed: int = 0


@dataclass(frozen=True)
class SearchSection:
    kind: str = search.GREEDY
    family: str = spacemod.MLP
    trials_per_iteration: int = 25
    depth_cap: int = 5
    score_threshold: float = 0.99
    master_seed: int = 0
    max_concurrency: int = 1


@dataclass(frozen=True)
class TrainSection:
    learning_rate: float = 0.001
    max_epochs: Optional[int] = None
    patience: int = 10
    min_delta: float = 1e-4
    baseline_batch_size: int = 32
    standardize: bool = True


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig
    split: SplitConfig = SplitConfig()
    search: SearchSection = SearchSection()
    train: TrainSection = TrainSection()
    output_dir: str = "runs/out"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dataset"] = {k: v for k, v in out["dataset"].items() if v not in (None, ())}
        if "targets" in out["dataset"]:
            out["dataset"]["targets"] = list(out["dataset"]["targets"])
        if out["dataset"].get("image_shape"):
            out["dataset"]["image_shape"] = list(out["dataset"]["image_shape"])
        return out


def _build_section(cls, raw: dict, where: str):
    allowed = {f for f in cls.__dataclass_fields__}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("run configuration must be a JSON object")
    unknown = set(raw) - {"dataset", "split", "search", "train", "output_dir"}
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    if "dataset" not in raw:
        raise ConfigError("missing 'dataset' section")
    ds_raw = dict(raw["dataset"])
    if "targets" in ds_raw:
        ds_raw["targets"] = tuple(ds_raw["targets"])
    if ds_raw.get("image_shape") is not None:
        ds_raw["image_shape"] = tuple(ds_raw["image_shape"])
    cfg = RunConfig(
        dataset=_build_section(DatasetConfig, ds_raw, "dataset"),
        split=_build_section(SplitConfig, dict(raw.get("split", {})), "split"),
        search=_build_section(SearchSection, dict(raw.get("search", {})), "search"),
        train=_build_section(TrainSection, dict(raw.get("train", {})), "train"),
        output_dir=raw.get("output_dir", "runs/out"),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    ds = cfg.dataset
    if ds.source not in ("builtin:eggbox", "builtin:bars", "csv"):
        raise ConfigError(f"unknown dataset source {ds.source!r}")
    if ds.source == "csv":
        if not ds.path:
            raise ConfigError("csv dataset needs a 'path'")
        if not ds.targets:
            raise ConfigError("csv dataset needs 'targets'")
        if ds.task not in (REGRESSION, CLASSIFICATION):
            raise ConfigError("csv dataset needs 'task': regression or classification")
        if not Path(ds.path).exists():
            raise ConfigError(f"dataset file does not exist: {ds.path}")
    if not 0.0 < cfg.split.test_fraction < 1.0 or not 0.0 < cfg.split.val_fraction < 1.0:
        raise ConfigError("split fractions must lie in (0, 1)")
    s = cfg.search
    if s.kind not in (search.GREEDY, search.RANDOM):
        raise ConfigError(f"search kind must be greedy or random, got {s.kind!r}")
    if s.family not in (spacemod.MLP, spacemod.CNN):
        raise ConfigError(f"family must be mlp or cnn, got {s.family!r}")
    if s.trials_per_iteration < 1 or s.depth_cap < 1 or s.max_concurrency < 1:
        raise ConfigError("trials_per_iteration, depth_cap, max_concurrency must be >= 1")
    if not 0.0 <= s.score_threshold <= 1.0:
        raise ConfigError("score_threshold must lie in [0, 1]")
    if s.family == spacemod.CNN and ds.source == "builtin:eggbox":
        raise ConfigError("the eggbox dataset has no image shape; cnn family needs one")
    if s.family == spacemod.CNN and ds.source == "csv" and ds.image_shape is None:
        raise ConfigError("cnn family on csv data needs dataset.image_shape")


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"no such config file: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


# --- dataset materialization -------------------------------------------------------


def build_dataset(ds_cfg: DatasetConfig) -> datamod.Dataset:
    if ds_cfg.source == "builtin:eggbox":
        return datamod.gen_eggbox(count=ds_cfg.count, seed=ds_cfg.seed, scheme=ds_cfg.scheme)
    if ds_cfg.source == "builtin:bars":
        return datamod.gen_bars(
            count=ds_cfg.count, seed=ds_cfg.seed, height=ds_cfg.height, width=ds_cfg.width
        )
    ds = datamod.load_csv(ds_cfg.path, list(ds_cfg.targets), ds_cfg.task)
    if ds_cfg.image_shape is not None:
        ds = replace(ds, image_shape=tuple(ds_cfg.image_shape))
    return ds


def prepare_run(cfg: RunConfig):
    """Dataset -> split -> optional standardization -> SearchData.

    Returns (search_data, raw_test_dataset, transform_record, search_config).
    """
    ds = build_dataset(cfg.dataset)
    split_spec = datamod.SplitSpec(
        test_fraction=cfg.split.test_fraction,
        val_fraction_of_remainder=cfg.split.val_fraction,
        seed=cfg.split.seed,
    )
    train_ds, val_ds, test_ds = datamod.split(ds, split_spec)
    record = None
    parts = (train_ds, val_ds, test_ds)
    if cfg.train.standardize:
        parts, record = datamod.standardize(*parts)
    sd = search.SearchData.from_datasets(*parts)

    s = cfg.search
    if s.family == spacemod.CNN:
        h, w, _ = sd.image_shape
        sspace = spacemod.cnn_space(sd.n_train, (h, w), depth_cap=s.depth_cap)
    else:
        sspace = spacemod.mlp_space(sd.n_train, depth_cap=s.depth_cap)
    scfg = search.SearchConfig(
        space=sspace,
        trials_per_iteration=s.trials_per_iteration,
        score_threshold=s.score_threshold,
        master_seed=s.master_seed,
        max_concurrency=s.max_concurrency,
        learning_rate=cfg.train.learning_rate,
        max_epochs=cfg.train.max_epochs,
        early_stop_patience=cfg.train.patience,
        early_stop_min_delta=cfg.train.min_delta,
        baseline_batch_size=cfg.train.baseline_batch_size,
    )
    return sd, test_ds, record, scfg


# --- artifact writers -----------------------------------------------------------------


def _atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(path: Path, report_dict: dict) -> None:
    _atomic_write_text(path, json.dumps(report_dict, indent=2, sort_keys=True) + "\n")


def write_layers_csv(path: Path, sweep_rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hidden_layers", "best_val_score"])
        for depth, score in sweep_rows:
            writer.writerow([depth, repr(float(score))])


# --- subcommands ---------------------------------------------------------------------


def cmd_gen_eggbox(args) -> int:
    ds = datamod.gen_eggbox(count=args.count, seed=args.seed, scheme=args.scheme)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    datamod.write_csv(ds, out)
    print(f"wrote {ds.num_rows} rows to {out}")
    return EXIT_OK


def cmd_search(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    for name in ("kind", "master_seed", "max_concurrency", "trials_per_iteration",
                 "depth_cap", "score_threshold"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if overrides:
        cfg = replace(cfg, search=replace(cfg.search, **overrides))
        validate_config(cfg)
    out_dir = os.environ.get(OUTPUT_DIR_ENV) or args.output_dir or cfg.output_dir
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    sd, test_ds, record, scfg = prepare_run(cfg)

    trials_path = out_dir / "trials.jsonl"
    run = search.greedy_search if cfg.search.kind == search.GREEDY else search.random_search
    with trials_path.open("w", encoding="utf-8") as trials_file:

        def sink(result):
            line = json.dumps(search.trial_result_to_dict(result), sort_keys=True)
            trials_file.write(line + "\n")
            trials_file.flush()

        try:
            report = run(scfg, sd, trial_sink=sink)
        except AllTrialsFailedError as exc:
            if exc.report is not None:
                write_report(out_dir / "report.json", search.report_to_dict(exc.report))
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_ALL_FAILED

    report_dict = search.report_to_dict(report)
    write_report(out_dir / "report.json", report_dict)
    write_layers_csv(out_dir / "layers.csv", search.layer_sweep(report))
    datamod.write_csv(test_ds, out_dir / "test.csv")
    persist.save_model(
        out_dir / "model.json",
        report.final_best.model,
        record=record,
        feature_names=test_ds.feature_names,
        target_names=test_ds.target_names,
        class_names=test_ds.class_names,
        extra={
            "metric": "r2" if sd.task == REGRESSION else "f1_macro",
            "val_score": report.final_best.val_score,
            "test_score": report.final_best.test_score,
            "image_shape": list(sd.image_shape) if sd.image_shape else None,
        },
    )
    for rec in report.iterations:
        depth = rec.depth if rec.depth is not None else "mixed"
        print(f"iteration depth={depth}: best val {rec.best.val_score:.6f} "
              f"(trial {rec.best_trial_index})")
    print(f"models trained: {report.models_trained}")
    print(f"final best: val {report.final_best.val_score:.6f} "
          f"test {report.final_best.test_score:.6f}")
    print(f"global best: val {report.global_best.val_score:.6f} "
          f"test {report.global_best.test_score:.6f}")
    print(f"artifacts in {out_dir}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, record, meta = persist.load_model(args.model)
    task = model.arch.task
    ds = datamod.load_csv(args.data, list(meta["target_names"]), task)
    if ds.feature_names != meta["feature_names"]:
        raise DataError(
            f"feature columns {list(ds.feature_names)} do not match the model's "
            f"{list(meta['feature_names'])}"
        )
    targets = ds.targets
    if task == CLASSIFICATION:
        known = {name: i for i, name in enumerate(meta["class_names"])}
        unknown = [c for c in ds.class_names if c not in known]
        if unknown:
            raise DataError(f"labels {unknown} were not seen by the model")
        remap = np.array([known[c] for c in ds.class_names], dtype=np.int64)
        targets = remap[ds.targets]
    scores = search.evaluate_on(model, record, ds.features, targets)
    for name, value in scores.items():
        print(f"{name} {value:.10f}")
    return EXIT_OK


def cmd_sweep_report(args) -> int:
    path = Path(args.report)
    if not path.exists():
        raise DataError(f"no such report: {path}")
    try:
        report_dict = json.loads(path.read_text(encoding="utf-8"))
        rows = [(r["depth"], r["best_val_score"]) for r in report_dict["layer_sweep"]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: not a search report ({exc})") from None
    write_layers_csv(Path(args.out), rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# --- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="archsearch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-eggbox", help="write the egg-carton dataset as CSV")
    p.add_argument("--count", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scheme", choices=("uniform", "grid"), default="uniform")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_eggbox)

    p = sub.add_parser("search", help="run a configured architecture search")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None, help="overrides the config value")
    p.add_argument("--kind", choices=(search.GREEDY, search.RANDOM), default=None)
    p.add_argument("--master-seed", type=int, default=None)
    p.add_argument("--max-concurrency", type=int, default=None)
    p.add_argument("--trials-per-iteration", dest="trials_per_iteration", type=int, default=None)
    p.add_argument("--depth-cap", type=int, default=None)
    p.add_argument("--score-threshold", type=float, default=None)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="score a saved model on CSV data")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep-report", help="rewrite layers.csv from report.json")
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AllTrialsFailedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except ArchSearchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
