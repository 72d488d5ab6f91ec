"""Greedy layer-wise architecture search and the plain random-search baseline.

The greedy loop starts from a depth-0 model (linear or logistic
regression), then repeatedly adds one hidden layer: the layers inherited
from the current best model are frozen and only the newest layer's
hyperparameters (plus the batch size) are sampled, C candidates per
iteration. Candidates can be trained concurrently; results are collected
in trial-index order so reports do not depend on scheduling. The loop
stops when the best validation score reaches the threshold or the depth
cap is exhausted.

Every trial owns a private generator seeded by (master_seed, iteration,
trial_index), which makes whole searches reproducible at any concurrency
level. A diverged trial is recorded with a -inf sentinel score instead of
aborting the search.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import space as spacemod
from .conv import CnnArchitecture, ConvLayerSpec
from .data import Dataset, TransformRecord
from .errors import AllTrialsFailedError, ShapeError, TrainingDivergedError
from .metrics import accuracy
from .nn import (
    CLASSIFICATION,
    REGRESSION,
    ArchitectureSpec,
    LayerSpec,
    TrainConfig,
    TrainedModel,
    predict,
    train,
    validation_score,
)
from .space import MLP, LayerSample, SearchSpace, TrialSpec

GREEDY = "greedy"
RANDOM = "random"

STATUS_OK = "ok"
STATUS_DIVERGED = "diverged"
STATUS_INFEASIBLE = "infeasible"

FAILED_SCORE = float("-inf")


@dataclass(frozen=True)
class SearchData:
    """Standardized array views of the three split parts; safe to share."""

    task: str
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int = 0
    image_shape: Optional[tuple[int, int, int]] = None

    @classmethod
    def from_datasets(cls, train: Dataset, val: Dataset, test: Dataset) -> "SearchData":
        num_classes = train.num_classes if train.task == CLASSIFICATION else 0
        return cls(
            task=train.task,
            train_x=train.features,
            train_y=train.targets,
            val_x=val.features,
            val_y=val.targets,
            test_x=test.features,
            test_y=test.targets,
            num_classes=num_classes,
            image_shape=train.image_shape,
        )

    @property
    def n_train(self) -> int:
        return int(self.train_x.shape[0])

    @property
    def input_dim(self) -> int:
        return int(self.train_x.shape[1])

    @property
    def output_dim(self) -> int:
        if self.task == CLASSIFICATION:
            return self.num_classes
        return int(self.train_y.shape[1]) if self.train_y.ndim > 1 else 1


@dataclass(frozen=True)
class SearchConfig:
    space: SearchSpace
    trials_per_iteration: int  # candidate models built and scored per iteration
    score_threshold: float = 0.99
    master_seed: int = 0
    max_concurrency: int = 1
    learning_rate: float = 0.001
    max_epochs: Optional[int] = None  # None: training-set size
    early_stop_patience: int = 10
    early_stop_min_delta: float = 1e-4
    baseline_batch_size: int = 32

    def __post_init__(self):
        if self.trials_per_iteration < 1:
            raise ValueError("trials_per_iteration must be >= 1")
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError("score_threshold must lie in [0, 1]")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @property
    def depth_cap(self) -> int:
        return self.space.depth_cap


@dataclass
class TrialResult:
    trial: TrialSpec
    iteration: int
    status: str
    val_score: float  # -inf sentinel when the trial failed
    epochs_used: int
    wall_seconds: float
    model: Optional[TrainedModel] = None
    test_score: Optional[float] = None  # filled for the finally selected models only
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK


@dataclass
class IterationRecord:
    depth: Optional[int]  # None for the single random-search batch
    results: list
    best_trial_index: int
    sample_seconds: float
    select_seconds: float

    @property
    def best(self) -> TrialResult:
        for r in self.results:
            if r.trial.trial_index == self.best_trial_index:
                return r
        raise LookupError("best_trial_index not present in results")


@dataclass
class SearchReport:
    kind: str
    task: str
    family: str
    baseline: Optional[TrialResult]
    iterations: list
    final_best: TrialResult  # what the greedy loop returns: the last iteration's best
    global_best: TrialResult  # best over the baseline and every iteration
    models_trained: int
    iterations_run: int
    total_seconds: float
    training_seconds: float
    coordination_seconds: float
    config: dict = field(default_factory=dict)

    def all_results(self) -> list:
        out = [self.baseline] if self.baseline is not None else []
        for record in self.iterations:
            out.extend(record.results)
        return out


# --- architecture materialization ---------------------------------------------


def build_architecture(trial: TrialSpec, data: SearchData, family: str):
    """Turn a trial into a concrete architecture.

    The depth-0 baseline is always a plain dense model (linear or logistic
    regression on the flat features), for the CNN family too.
    """
    layers = trial.layers()
    if not layers or family == MLP:
        hidden = tuple(LayerSpec(l.width, l.activation) for l in layers)
        return ArchitectureSpec(
            input_dim=data.input_dim,
            output_dim=data.output_dim,
            hidden=hidden,
            task=data.task,
        )
    if data.image_shape is None:
        raise ShapeError("cnn search needs a dataset with an image shape")
    conv_layers = tuple(
        ConvLayerSpec(
            channels=l.width,
            kernel_size=l.kernel_size,
            pooling=l.pooling,
            dropout_rate=l.dropout_rate,
            activation=l.activation,
        )
        for l in layers
    )
    return CnnArchitecture(
        input_shape=data.image_shape,
        conv_layers=conv_layers,
        output_dim=data.output_dim,
        task=data.task,
    )


def _train_config(trial: TrialSpec, cfg: SearchConfig) -> TrainConfig:
    return TrainConfig(
        batch_size=trial.batch_size,
        learning_rate=cfg.learning_rate,
        max_epochs=cfg.max_epochs,
        early_stop_patience=cfg.early_stop_patience,
        early_stop_min_delta=cfg.early_stop_min_delta,
        seed=trial.trial_seed,
    )


Trainer = Callable[[object, tuple, tuple, TrainConfig], TrainedModel]


def evaluate_trial(
    trial: TrialSpec,
    iteration: int,
    data: SearchData,
    cfg: SearchConfig,
    trainer: Optional[Trainer] = None,
) -> TrialResult:
    """Materialize, train and score one candidate.

    Training failures become sentinel-scored results so the surrounding
    search continues; only unexpected errors propagate.
    """
    trainer = trainer or train
    t0 = time.perf_counter()
    try:
        arch = build_architecture(trial, data, cfg.space.family)
    except ShapeError as exc:
        return TrialResult(
            trial=trial,
            iteration=iteration,
            status=STATUS_INFEASIBLE,
            val_score=FAILED_SCORE,
            epochs_used=0,
            wall_seconds=time.perf_counter() - t0,
            failure=str(exc),
        )
    try:
        model = trainer(arch, (data.train_x, data.train_y), (data.val_x, data.val_y), _train_config(trial, cfg))
    except TrainingDivergedError as exc:
        return TrialResult(
            trial=trial,
            iteration=iteration,
            status=STATUS_DIVERGED,
            val_score=FAILED_SCORE,
            epochs_used=0,
            wall_seconds=time.perf_counter() - t0,
            failure=str(exc),
        )
    return TrialResult(
        trial=trial,
        iteration=iteration,
        status=STATUS_OK,
        val_score=model.val_score,
        epochs_used=model.stopped_epoch,
        wall_seconds=time.perf_counter() - t0,
        model=model,
    )


def baseline_model(data: SearchData, cfg: SearchConfig, trainer: Optional[Trainer] = None) -> TrialResult:
    """Depth-0 model whose validation score seeds the greedy loop."""
    trial = TrialSpec(
        frozen_prefix=(),
        new_layer=None,
        batch_size=max(1, min(cfg.baseline_batch_size, data.n_train)),
        trial_index=0,
        trial_seed=spacemod.derive_trial_seed(cfg.master_seed, 0, 0),
    )
    result = evaluate_trial(trial, 0, data, cfg, trainer)
    if not result.ok:
        raise TrainingDivergedError(f"baseline model failed: {result.failure}")
    return result


# --- worker pool ----------------------------------------------------------------

_POOL_DATA: Optional[SearchData] = None


def _pool_init(data: SearchData) -> None:
    global _POOL_DATA
    _POOL_DATA = data


def _pool_eval(trial: TrialSpec, iteration: int, cfg: SearchConfig) -> TrialResult:
    return evaluate_trial(trial, iteration, _POOL_DATA, cfg)


class _EvalPool:
    """Bounded-concurrency evaluation; inline when one worker suffices.

    A custom trainer cannot cross process boundaries, so it forces inline
    execution regardless of max_concurrency.
    """

    def __init__(self, data: SearchData, cfg: SearchConfig, trainer: Optional[Trainer]):
        self.data = data
        self.cfg = cfg
        self.trainer = trainer
        self.executor = None
        if cfg.max_concurrency > 1 and trainer is None:
            self.executor = ProcessPoolExecutor(
                max_workers=cfg.max_concurrency,
                initializer=_pool_init,
                initargs=(data,),
            )

    def evaluate(self, trials: list, iteration: int) -> list:
        if self.executor is None:
            return [evaluate_trial(t, iteration, self.data, self.cfg, self.trainer) for t in trials]
        futures = [self.executor.submit(_pool_eval, t, iteration, self.cfg) for t in trials]
        return [f.result() for f in futures]  # submission order == trial_index order

    def close(self) -> None:
        if self.executor is not None:
            self.executor.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# --- iteration machinery ----------------------------------------------------------


def sample_iteration_trials(prefix, depth: int, cfg: SearchConfig) -> list:
    """C trial specs for one iteration, one private generator per trial."""
    trials = []
    for j in range(cfg.trials_per_iteration):
        rng = spacemod.trial_rng(cfg.master_seed, depth, j)
        trial = spacemod.sample_trial(
            cfg.space,
            prefix,
            depth,
            rng,
            trial_index=j,
            trial_seed=spacemod.derive_trial_seed(cfg.master_seed, depth, j),
        )
        trials.append(trial)
    return trials


def run_iteration(
    prefix,
    depth: int,
    data: SearchData,
    cfg: SearchConfig,
    pool: Optional[_EvalPool] = None,
    trainer: Optional[Trainer] = None,
) -> IterationRecord:
    """Sample and evaluate C candidates at the given depth.

    The returned results are ordered by trial_index whatever the
    completion order was.
    """
    if depth > cfg.depth_cap:
        raise ValueError(f"depth {depth} exceeds the cap {cfg.depth_cap}")
    t0 = time.perf_counter()
    trials = sample_iteration_trials(prefix, depth, cfg)
    sample_seconds = time.perf_counter() - t0

    if pool is not None:
        results = pool.evaluate(trials, depth)
    else:
        results = [evaluate_trial(t, depth, data, cfg, trainer) for t in trials]

    t1 = time.perf_counter()
    best = _argmax_result(results)
    select_seconds = time.perf_counter() - t1
    return IterationRecord(
        depth=depth,
        results=results,
        best_trial_index=best.trial.trial_index if best.ok else -1,
        sample_seconds=sample_seconds,
        select_seconds=select_seconds,
    )


def _argmax_result(results: list) -> TrialResult:
    best = None
    for r in sorted(results, key=lambda r: r.trial.trial_index):
        if best is None or r.val_score > best.val_score:
            best = r
    return best


def select_best(results: list) -> TrialResult:
    """Pure argmax over val_score; ties keep the lowest trial_index."""
    if not results:
        raise ValueError("select_best needs a nonempty result list")
    best = _argmax_result(results)
    if not best.ok:
        raise AllTrialsFailedError("every trial of the iteration failed")
    return best


def _prefix_of(result: TrialResult) -> tuple:
    return result.trial.layers()


def _with_test_score(result: TrialResult, data: SearchData) -> TrialResult:
    model = result.model
    score = validation_score(model.arch, model.params, data.test_x, data.test_y)
    return replace(result, test_score=score)


def _config_summary(cfg: SearchConfig, kind: str) -> dict:
    # max_concurrency is deliberately absent: it is an execution knob that
    # never affects results, and reports must not depend on it.
    return {
        "kind": kind,
        "family": cfg.space.family,
        "trials_per_iteration": cfg.trials_per_iteration,
        "depth_cap": cfg.depth_cap,
        "score_threshold": cfg.score_threshold,
        "master_seed": cfg.master_seed,
        "max_nodes": cfg.space.max_nodes,
        "batch_range": [cfg.space.batch_lo, cfg.space.batch_hi],
    }


# --- the two search algorithms ------------------------------------------------------


def greedy_search(
    cfg: SearchConfig,
    data: SearchData,
    trainer: Optional[Trainer] = None,
    trial_sink: Optional[Callable[[TrialResult], None]] = None,
) -> SearchReport:
    """Layer-wise greedy search (see module docstring).

    trial_sink, when given, receives every TrialResult as soon as its
    iteration completes (used for append-only trial logs).
    """
    t_start = time.perf_counter()
    with _EvalPool(data, cfg, trainer) as pool:
        baseline = baseline_model(data, cfg, trainer)
        if trial_sink:
            trial_sink(baseline)
        best = baseline
        iterations: list[IterationRecord] = []
        depth = 1
        while best.val_score < cfg.score_threshold and depth <= cfg.depth_cap:
            record = run_iteration(
                _prefix_of(best), depth, data, cfg,
                pool=pool if pool.executor is not None else None,
                trainer=trainer,
            )
            if trial_sink:
                for r in record.results:
                    trial_sink(r)
            if record.best_trial_index < 0:
                exc = AllTrialsFailedError(f"every trial of iteration {depth} failed")
                exc.report = _assemble_report(
                    GREEDY, cfg, data, baseline, iterations + [record], t_start, partial=True
                )
                raise exc
            iterations.append(record)
            best = record.best
            depth += 1

    return _assemble_report(GREEDY, cfg, data, baseline, iterations, t_start)


def random_search(
    cfg: SearchConfig,
    data: SearchData,
    trainer: Optional[Trainer] = None,
    trial_sink: Optional[Callable[[TrialResult], None]] = None,
) -> SearchReport:
    """Plain random search with the same total budget C * depth_cap.

    Each draw picks a depth uniformly in [1, depth_cap], samples every
    layer independently, and trains with the shared evaluation pool.
    """
    t_start = time.perf_counter()
    budget = cfg.trials_per_iteration * cfg.depth_cap
    t0 = time.perf_counter()
    trials = []
    for j in range(budget):
        rng = spacemod.trial_rng(cfg.master_seed, 1, j)
        depth = int(rng.integers(1, cfg.depth_cap + 1))
        layers, batch = spacemod.sample_architecture(cfg.space, depth, rng)
        trials.append(
            TrialSpec(
                frozen_prefix=layers[:-1],
                new_layer=layers[-1],
                batch_size=batch,
                trial_index=j,
                trial_seed=spacemod.derive_trial_seed(cfg.master_seed, 1, j),
            )
        )
    sample_seconds = time.perf_counter() - t0

    with _EvalPool(data, cfg, trainer) as pool:
        results = pool.evaluate(trials, 1)
    if trial_sink:
        for r in results:
            trial_sink(r)

    t1 = time.perf_counter()
    try:
        best = select_best(results)
    except AllTrialsFailedError as exc:
        record = IterationRecord(None, results, -1, sample_seconds, time.perf_counter() - t1)
        exc.report = _assemble_report(RANDOM, cfg, data, None, [record], t_start, partial=True)
        raise
    record = IterationRecord(
        depth=None,
        results=results,
        best_trial_index=best.trial.trial_index,
        sample_seconds=sample_seconds,
        select_seconds=time.perf_counter() - t1,
    )
    return _assemble_report(RANDOM, cfg, data, None, [record], t_start)


def _assemble_report(kind, cfg, data, baseline, iterations, t_start, partial=False):
    candidates = ([baseline] if baseline is not None else []) + [
        rec.best for rec in iterations if rec.best_trial_index >= 0
    ]
    training_seconds = sum(r.wall_seconds for rec in iterations for r in rec.results)
    coordination_seconds = sum(rec.sample_seconds + rec.select_seconds for rec in iterations)
    if baseline is not None:
        training_seconds += baseline.wall_seconds
    if partial:
        final_best = global_best = None
    else:
        final_best = candidates[-1]
        global_best = max(candidates, key=lambda r: r.val_score)  # ties keep the earliest
        final_best = _with_test_score(final_best, data)
        global_best = _with_test_score(global_best, data)
    return SearchReport(
        kind=kind,
        task=data.task,
        family=cfg.space.family,
        baseline=baseline,
        iterations=iterations,
        final_best=final_best,
        global_best=global_best,
        models_trained=(1 if baseline is not None else 0)
        + sum(len(rec.results) for rec in iterations),
        iterations_run=len(iterations),
        total_seconds=time.perf_counter() - t_start,
        training_seconds=training_seconds,
        coordination_seconds=coordination_seconds,
        config=_config_summary(cfg, kind),
    )


# --- reporting helpers ----------------------------------------------------------------


def layer_sweep(report: SearchReport) -> list[tuple[int, float]]:
    """(depth, best validation score) rows, depth-0 baseline included."""
    rows: list[tuple[int, float]] = []
    if report.baseline is not None:
        rows.append((0, report.baseline.val_score))
    for rec in report.iterations:
        if rec.depth is not None:
            rows.append((rec.depth, rec.best.val_score))
        else:
            by_depth: dict[int, float] = {}
            for r in rec.results:
                if r.ok:
                    d = r.trial.depth
                    by_depth[d] = max(by_depth.get(d, FAILED_SCORE), r.val_score)
            rows.extend(sorted(by_depth.items()))
    return rows


def _layer_to_dict(layer: LayerSample) -> dict:
    out = {"width": layer.width, "activation": layer.activation}
    if layer.kernel_size is not None:
        out.update(
            kernel_size=layer.kernel_size,
            pooling=layer.pooling,
            dropout_rate=layer.dropout_rate,
        )
    return out


def trial_result_to_dict(result: TrialResult) -> dict:
    """JSON-safe view of one trial; params stay out, -inf becomes null."""
    trial = result.trial
    out = {
        "iteration": result.iteration,
        "trial_index": trial.trial_index,
        "depth": trial.depth,
        "layers": [_layer_to_dict(l) for l in trial.layers()],
        "batch_size": trial.batch_size,
        "trial_seed": trial.trial_seed,
        "status": result.status,
        "val_score": result.val_score if result.ok else None,
        "epochs_used": result.epochs_used,
        "wall_seconds": result.wall_seconds,
    }
    if result.test_score is not None:
        out["test_score"] = result.test_score
    if result.failure is not None:
        out["failure"] = result.failure
    return out


def report_to_dict(report: SearchReport) -> dict:
    """JSON-safe report; every timing field ends in '_seconds'."""
    return {
        "kind": report.kind,
        "task": report.task,
        "family": report.family,
        "config": report.config,
        "baseline": trial_result_to_dict(report.baseline) if report.baseline else None,
        "iterations": [
            {
                "depth": rec.depth,
                "best_trial_index": rec.best_trial_index,
                "sample_seconds": rec.sample_seconds,
                "select_seconds": rec.select_seconds,
                "trials": [trial_result_to_dict(r) for r in rec.results],
            }
            for rec in report.iterations
        ],
        "final_best": trial_result_to_dict(report.final_best) if report.final_best else None,
        "global_best": trial_result_to_dict(report.global_best) if report.global_best else None,
        "models_trained": report.models_trained,
        "iterations_run": report.iterations_run,
        "layer_sweep": [{"depth": d, "best_val_score": s} for d, s in layer_sweep(report)],
        "total_seconds": report.total_seconds,
        "training_seconds": report.training_seconds,
        "coordination_seconds": report.coordination_seconds,
    }


def strip_timing(value):
    """Recursively drop every *_seconds field; used for determinism checks."""
    if isinstance(value, dict):
        return {
            k: strip_timing(v)
            for k, v in value.items()
            if not (isinstance(k, str) and k.endswith("_seconds"))
        }
    if isinstance(value, list):
        return [strip_timing(v) for v in value]
    return value


def evaluate_on(model: TrainedModel, record: Optional[TransformRecord], features, targets) -> dict:
    """Score a trained model on raw (untransformed) features and targets.

    Returns {'r2': ...} for regression or {'f1': ..., 'accuracy': ...} for
    classification, matching how searches score internally.
    """
    x = record.apply_features(features) if record is not None else np.asarray(features)
    if model.arch.task == REGRESSION:
        y = record.apply_targets(targets) if record is not None else np.asarray(targets)
        return {"r2": validation_score(model.arch, model.params, x, y)}
    labels = predict(model, x)
    return {
        "f1": validation_score(model.arch, model.params, x, targets),
        "accuracy": accuracy(targets, labels),
    }
