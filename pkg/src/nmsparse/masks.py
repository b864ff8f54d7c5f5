"""Hard N:M masks, multi-axis importance, soft masks, and mask folding.

A hard mask zeroes the m-n smallest-magnitude entries of each selected
block; blocks are selected by l1 norm until a fraction delta of them is
sparsified. On top of the hard mask, each surviving weight is scored along
the filter axis and the kernel axis with a sigmoid of its distance to a
magnitude threshold, and the soft mask is b * (1 + filter_score +
kernel_score), so kept entries live in the open interval (1, 3). Folding
multiplies the weights by the soft mask, which preserves the N:M support.

Tie-breaking is everywhere "lowest index wins" (stable argsort), so masks
are bit-reproducible across runs and thread counts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import expit

from .errors import DegenerateAxisError, DimensionError
from .schedule import Schedule, delta as schedule_delta
from .tensors import (
    AxisVector,
    BlockMatrix,
    WeightTensor4,
    block_l1_norms,
    block_layout,
    rearrange_to_blocks,
)


@dataclass(frozen=True)
class SparsePattern:
    """Keep at most n of every m consecutive weights along the input channel."""

    n: int
    m: int

    def __post_init__(self):
        if not (isinstance(self.n, int) and isinstance(self.m, int)):
            raise ValueError("pattern n and m must be integers")
        if not 1 <= self.n < self.m:
            raise ValueError(f"need 1 <= n < m, got {self.n}:{self.m}")

    @property
    def sparse_rate(self) -> float:
        return (self.m - self.n) / self.m

    @classmethod
    def parse(cls, text: str) -> "SparsePattern":
        try:
            n_str, m_str = text.split(":")
            return cls(int(n_str), int(m_str))
        except (ValueError, AttributeError) as exc:
            if isinstance(exc, ValueError) and "need 1 <= n < m" in str(exc):
                raise
            raise ValueError(f"cannot parse sparse pattern {text!r}, expected 'n:m'") from exc

    def __str__(self) -> str:
        return f"{self.n}:{self.m}"


@dataclass(eq=False)
class HardMask:
    """Binary (g, m) mask; ``sparsified`` lists the block rows pruned to n ones.

    In block_width mode rows may carry an intermediate number of ones while
    the kept width ramps from m down to n.
    """

    bits: np.ndarray
    sparsified: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 2:
            raise DimensionError("mask bits must be 2D")
        self.bits = bits
        self.sparsified = np.asarray(self.sparsified, dtype=np.int64)

    @property
    def g(self) -> int:
        return self.bits.shape[0]

    @property
    def m(self) -> int:
        return self.bits.shape[1]


@dataclass(eq=False)
class SoftMask:
    """Nonnegative (g, m) mask with the same support as its hard mask."""

    values: np.ndarray

    @property
    def g(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ImportanceParams:
    """Sparse rate p in [0, 1) and sigmoid temperature tau > 0."""

    p: float
    tau: float

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"sparse rate must lie in [0, 1), got {self.p}")
        if not self.tau > 0.0:
            raise ValueError(f"temperature must be positive, got {self.tau}")


@dataclass(eq=False)
class AxisScores:
    """Per-element importance scores in (0, 1), same shape as the source tensor."""

    values: np.ndarray
    axis_tag: str


def arg_bottom_per_block(bm: BlockMatrix, pattern: SparsePattern) -> np.ndarray:
    """Indices of the m-n smallest |values| per block, each row strictly increasing.

    Ties go to the lowest column index.
    """
    if bm.m != pattern.m:
        raise DimensionError(f"block width {bm.m} does not match pattern {pattern}")
    drop = pattern.m - pattern.n
    order = np.argsort(np.abs(bm.values), axis=1, kind="stable")
    return np.sort(order[:, :drop], axis=1)


def select_sparsify_blocks(
    norms: np.ndarray, delta: float, ordering: str = "l1_descending"
) -> np.ndarray:
    """Indices of the ceil(G*delta) blocks to sparsify, sorted ascending.

    l1_descending picks the largest-norm blocks first; l1_ascending is the
    inverse strategy. Norm ties go to the lowest block index.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    norms = np.asarray(norms, dtype=np.float64)
    count = math.ceil(norms.size * delta)
    if count == 0:
        return np.empty(0, dtype=np.int64)
    if ordering == "l1_descending":
        order = np.argsort(-norms, kind="stable")
    elif ordering == "l1_ascending":
        order = np.argsort(norms, kind="stable")
    else:
        raise ValueError(f"unknown ordering {ordering!r}")
    return np.sort(order[:count]).astype(np.int64)


def hard_mask(
    bm: BlockMatrix,
    pattern: SparsePattern,
    delta: float,
    ordering: str = "l1_descending",
) -> HardMask:
    """All-ones mask with the bottom m-n entries of each selected block zeroed."""
    bottom = arg_bottom_per_block(bm, pattern)
    chosen = select_sparsify_blocks(block_l1_norms(bm), delta, ordering)
    bits = np.ones((bm.g, bm.m), dtype=np.uint8)
    if chosen.size:
        bits[chosen[:, None], bottom[chosen]] = 0
    return HardMask(bits, chosen)


def hard_mask_top_width(bm: BlockMatrix, kept: int) -> HardMask:
    """Width-ramp variant: every block keeps its ``kept`` largest magnitudes."""
    if not 1 <= kept <= bm.m:
        raise DimensionError(f"kept width {kept} out of range for m={bm.m}")
    bits = np.ones((bm.g, bm.m), dtype=np.uint8)
    drop = bm.m - kept
    if drop == 0:
        return HardMask(bits, np.empty(0, dtype=np.int64))
    order = np.argsort(np.abs(bm.values), axis=1, kind="stable")
    rows = np.arange(bm.g)[:, None]
    bits[rows, order[:, :drop]] = 0
    return HardMask(bits, np.arange(bm.g, dtype=np.int64))


def kept_width_from_delta(delta: float, pattern: SparsePattern) -> int:
    """Kept entries per block for the width-ramp mode: m - round(delta*(m-n)).

    Rounding is half away from zero so the ramp hits its midpoint eagerly.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    x = delta * (pattern.m - pattern.n)
    return pattern.m - int(math.floor(x + 0.5))


def kept_width_at(t: float, sched: Schedule, pattern: SparsePattern) -> int:
    """Kept width at epoch t under ``sched``; m at the ramp start, n at the end."""
    return kept_width_from_delta(schedule_delta(t, sched), pattern)


def _axis_values(v: Union[AxisVector, np.ndarray]) -> np.ndarray:
    vals = v.values if isinstance(v, AxisVector) else np.asarray(v, dtype=np.float64)
    return np.abs(vals.reshape(-1))


def _kept_count(length: int, p: float) -> int:
    if length < 2:
        raise DegenerateAxisError(f"axis vector of length {length} has no threshold")
    k_real = (1.0 - p) * length
    k = int(round(k_real))
    if abs(k_real - k) > 1e-9 * max(1.0, length):
        raise DimensionError(f"(1-p)*length = {k_real} is not an integer")
    if k <= 0 or k >= length:
        raise DegenerateAxisError(f"kept count {k} is degenerate for length {length}")
    return k


def threshold_bounds(v: Union[AxisVector, np.ndarray], p: float) -> tuple[float, float]:
    """(smallest kept magnitude, largest pruned magnitude) at sparse rate p."""
    mags = _axis_values(v)
    k = _kept_count(mags.size, p)
    ordered = np.sort(mags)
    return float(ordered[mags.size - k]), float(ordered[mags.size - k - 1])


def importance_threshold(v: Union[AxisVector, np.ndarray], p: float) -> float:
    """Midpoint between the smallest kept and largest pruned magnitude."""
    high, low = threshold_bounds(v, p)
    return (high + low) / 2.0


def importance_scores(v: Union[AxisVector, np.ndarray], params: ImportanceParams) -> np.ndarray:
    """sigmoid((|v_i| - threshold) / tau); exactly 0.5 at the threshold."""
    mags = _axis_values(v)
    sigma = importance_threshold(mags, params.p)
    return expit((mags - sigma) / params.tau)


def filter_axis_scores(w: WeightTensor4, pattern: SparsePattern, tau: float) -> AxisScores:
    """Importance of every weight within its output filter's flattened slice."""
    if w.c_in % pattern.m != 0:
        raise DimensionError(f"pattern {pattern} does not divide c_in={w.c_in}")
    mags = np.abs(w.values).reshape(w.c_out, -1)
    length = mags.shape[1]
    k = _kept_count(length, pattern.sparse_rate)
    ordered = np.sort(mags, axis=1)
    sigma = (ordered[:, length - k] + ordered[:, length - k - 1]) / 2.0
    scores = expit((mags - sigma[:, None]) / tau)
    return AxisScores(scores.reshape(w.dims), "filter")


def kernel_axis_scores(w: WeightTensor4, pattern: SparsePattern, tau: float) -> AxisScores:
    """Importance of every weight within its spatial kernel position's slice."""
    if w.c_in % pattern.m != 0:
        raise DimensionError(f"pattern {pattern} does not divide c_in={w.c_in}")
    # group (k1, k2): one vector of length c_out*c_in per kernel position
    mags = np.abs(w.values.transpose(2, 3, 0, 1)).reshape(w.k_h * w.k_w, -1)
    length = mags.shape[1]
    k = _kept_count(length, pattern.sparse_rate)
    ordered = np.sort(mags, axis=1)
    sigma = (ordered[:, length - k] + ordered[:, length - k - 1]) / 2.0
    scores = expit((mags - sigma[:, None]) / tau)
    scores = scores.reshape(w.k_h, w.k_w, w.c_out, w.c_in).transpose(2, 3, 0, 1)
    return AxisScores(scores, "kernel")


def soft_mask(hard: HardMask, sf: AxisScores, sk: AxisScores) -> SoftMask:
    """Combine b * (1 + filter scores + kernel scores) in block layout."""
    if sf.values.shape != sk.values.shape:
        raise DimensionError(
            f"axis score shapes differ: {sf.values.shape} vs {sk.values.shape}"
        )
    if sf.values.size != hard.g * hard.m:
        raise DimensionError(
            f"axis scores hold {sf.values.size} entries, mask needs {hard.g * hard.m}"
        )
    filt = block_layout(sf.values, hard.m)
    kern = block_layout(sk.values, hard.m)
    return SoftMask(hard.bits * (1.0 + filt + kern))


def fold(bm: BlockMatrix, soft: SoftMask) -> BlockMatrix:
    """Multiply weights by the soft mask; support shrinks to the mask's."""
    if bm.values.shape != soft.values.shape:
        raise DimensionError(
            f"block matrix {bm.values.shape} does not match soft mask {soft.values.shape}"
        )
    return BlockMatrix(bm.values * soft.values, bm.origin_dims)


def build_masks(
    w: WeightTensor4,
    pattern: SparsePattern,
    tau: float,
    delta: float,
    ordering: str = "l1_descending",
    mode: str = "block_percentage",
) -> tuple[HardMask, SoftMask]:
    """One full mask pass for a layer: hard mask, both axis queries, soft mask."""
    bm = rearrange_to_blocks(w, pattern.m)
    if mode == "block_width":
        hard = hard_mask_top_width(bm, kept_width_from_delta(delta, pattern))
    elif mode == "block_percentage":
        hard = hard_mask(bm, pattern, delta, ordering)
    else:
        raise ValueError(f"unknown mask mode {mode!r}")
    sf = filter_axis_scores(w, pattern, tau)
    sk = kernel_axis_scores(w, pattern, tau)
    return hard, soft_mask(hard, sf, sk)
