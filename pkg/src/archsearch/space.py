"""Bounded hyperparameter domains, per-layer sampling, cardinality arithmetic.

Widths (or channel counts) span [1, floor(sqrt(n))], batch sizes
[10, floor(n/10)], with n the training-set size. One search iteration
samples only the newest layer, so the number of architecture variants
explored per iteration stays at max_nodes * |activations| instead of
growing exponentially with depth.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nn import HIDDEN_ACTIVATIONS

MLP = "mlp"
CNN = "cnn"

KERNEL_RANGE = (2, 5)
POOL_WINDOWS = (1, 2)
FEASIBILITY_RETRIES = 20


@dataclass(frozen=True)
class SearchSpace:
    family: str
    max_nodes: int
    batch_lo: int
    batch_hi: int
    depth_cap: int = 5
    activations: tuple[str, ...] = HIDDEN_ACTIVATIONS
    # CNN extras; input_hw is needed to keep pooled spatial sizes >= 1
    kernel_range: tuple[int, int] = KERNEL_RANGE
    pool_windows: tuple[int, ...] = POOL_WINDOWS
    dropout_range: tuple[float, float] = (0.0, 1.0)
    input_hw: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if self.family not in (MLP, CNN):
            raise ValueError(f"unknown family {self.family!r}")
        if self.max_nodes < 1:
            raise ValueError("max_nodes must be >= 1")
        if self.depth_cap < 1:
            raise ValueError("depth_cap must be >= 1")
        if self.batch_lo < 1 or self.batch_hi < self.batch_lo:
            raise ValueError("empty batch range")
        if self.family == CNN and self.input_hw is None:
            raise ValueError("cnn space needs the input spatial size")


@dataclass(frozen=True)
class LayerSample:
    width: int  # neurons for mlp, channels for cnn
    activation: str
    kernel_size: Optional[int] = None
    pooling: Optional[int] = None
    dropout_rate: Optional[float] = None


@dataclass(frozen=True)
class TrialSpec:
    """One candidate: frozen prefix, freshly sampled last layer, batch size.

    new_layer None denotes the depth-0 baseline (no hidden layers).
    """

    frozen_prefix: tuple[LayerSample, ...]
    new_layer: Optional[LayerSample]
    batch_size: int
    trial_index: int
    trial_seed: int

    @property
    def depth(self) -> int:
        return len(self.frozen_prefix) + (1 if self.new_layer is not None else 0)

    def layers(self) -> tuple[LayerSample, ...]:
        if self.new_layer is None:
            return self.frozen_prefix
        return self.frozen_prefix + (self.new_layer,)


def _batch_range(n_train: int) -> tuple[int, int]:
    lo, hi = 10, n_train // 10
    if hi < lo:
        warnings.warn(
            f"training set of {n_train} rows is too small for the batch range "
            f"[10, n/10]; clamping",
            stacklevel=3,
        )
        lo = min(10, n_train)
        hi = max(hi, lo)
    return lo, hi


def mlp_space(n_train: int, depth_cap: int = 5) -> SearchSpace:
    """Dense-network domain: widths [1, floor(sqrt(n))], four activations."""
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    lo, hi = _batch_range(n_train)
    return SearchSpace(
        family=MLP,
        max_nodes=math.isqrt(n_train),
        batch_lo=lo,
        batch_hi=hi,
        depth_cap=depth_cap,
    )


def cnn_space(n_train: int, input_hw: tuple[int, int], depth_cap: int = 5) -> SearchSpace:
    """Conv-network domain: adds kernel [2,5], pooling {1,2}, dropout [0,1)."""
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    lo, hi = _batch_range(n_train)
    return SearchSpace(
        family=CNN,
        max_nodes=math.isqrt(n_train),
        batch_lo=lo,
        batch_hi=hi,
        depth_cap=depth_cap,
        input_hw=tuple(input_hw),
    )


# --- sampling -----------------------------------------------------------------


def spatial_after(space: SearchSpace, layers) -> tuple[int, int]:
    """Spatial size left after the pooling stages of `layers`."""
    h, w = space.input_hw
    for layer in layers:
        if layer.pooling == 2:
            h, w = h // 2, w // 2
    return h, w


def _sample_layer(space: SearchSpace, rng: np.random.Generator) -> LayerSample:
    width = int(rng.integers(1, space.max_nodes + 1))
    activation = space.activations[int(rng.integers(0, len(space.activations)))]
    if space.family == MLP:
        return LayerSample(width=width, activation=activation)
    k_lo, k_hi = space.kernel_range
    d_lo, d_hi = space.dropout_range
    return LayerSample(
        width=width,
        activation=activation,
        kernel_size=int(rng.integers(k_lo, k_hi + 1)),
        pooling=int(space.pool_windows[int(rng.integers(0, len(space.pool_windows)))]),
        dropout_rate=float(rng.uniform(d_lo, d_hi)),
    )


def sample_new_layer(space: SearchSpace, prefix, rng: np.random.Generator) -> LayerSample:
    """Sample the newest layer; CNN layers are resampled (bounded) until the
    pooled spatial size stays >= 1, then pooling is forced to 1."""
    if space.family == MLP:
        return _sample_layer(space, rng)
    h, w = spatial_after(space, prefix)
    layer = _sample_layer(space, rng)
    for _ in range(FEASIBILITY_RETRIES):
        if layer.pooling == 1 or (h // 2 >= 1 and w // 2 >= 1):
            return layer
        layer = _sample_layer(space, rng)
    return LayerSample(
        width=layer.width,
        activation=layer.activation,
        kernel_size=layer.kernel_size,
        pooling=1,
        dropout_rate=layer.dropout_rate,
    )


def sample_trial(space: SearchSpace, prefix, depth: int, rng: np.random.Generator,
                 trial_index: int = 0, trial_seed: int = 0) -> TrialSpec:
    """Freeze the prefix verbatim, sample the new layer and the batch size."""
    prefix = tuple(prefix)
    if len(prefix) != depth - 1:
        raise ValueError(f"prefix of length {len(prefix)} does not match depth {depth}")
    new_layer = sample_new_layer(space, prefix, rng)
    batch = int(rng.integers(space.batch_lo, space.batch_hi + 1))
    return TrialSpec(
        frozen_prefix=prefix,
        new_layer=new_layer,
        batch_size=batch,
        trial_index=trial_index,
        trial_seed=trial_seed,
    )


def sample_architecture(space: SearchSpace, depth: int, rng: np.random.Generator):
    """Independent draw of a full depth-`depth` stack plus batch size.

    Used by the plain random-search baseline.
    """
    layers: list[LayerSample] = []
    for _ in range(depth):
        layers.append(sample_new_layer(space, layers, rng))
    batch = int(rng.integers(space.batch_lo, space.batch_hi + 1))
    return tuple(layers), batch


# --- cardinality ----------------------------------------------------------------


def layer_choice_count(space: SearchSpace) -> int:
    """Width-activation combinations available for a single layer."""
    return space.max_nodes * len(space.activations)


def full_cardinality(space: SearchSpace, depth: int) -> int:
    """Architecture variants a flat search over `depth` layers must span."""
    if not 1 <= depth <= space.depth_cap:
        raise ValueError(f"depth {depth} outside [1, {space.depth_cap}]")
    return layer_choice_count(space) ** depth


def stratified_cardinality(space: SearchSpace) -> int:
    """Variants spanned per iteration when only the newest layer is sampled."""
    return layer_choice_count(space)


# --- deterministic per-trial generators -------------------------------------------


def trial_rng(master_seed: int, iteration: int, trial_index: int) -> np.random.Generator:
    """Independent sampling stream per (master_seed, iteration, trial_index)."""
    return np.random.default_rng([master_seed, iteration, trial_index, 0])


def derive_trial_seed(master_seed: int, iteration: int, trial_index: int) -> int:
    """Training seed decoupled from the sampling stream."""
    return int(np.random.default_rng([master_seed, iteration, trial_index, 1]).integers(2**63))
