"""Dense 4D weight tensors and their block-matrix view.

A convolution weight of shape (c_out, c_in, k_h, k_w) is regrouped into a
(g, m) block matrix whose rows hold m consecutive input channels at a fixed
(output filter, kernel position). Fully connected weights are handled as
1x1 convolutions. The regrouping is a bijection on coordinates and
round-trips values bit-exactly.

Block rows enumerate (c_out, k_h, k_w, channel-block) lexicographically
with the channel-block fastest, so all blocks of one output filter are
contiguous; the compressed runtime format relies on that ordering.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DimensionError

Dims4 = tuple[int, int, int, int]


def block_layout(values: np.ndarray, m: int) -> np.ndarray:
    """Regroup a (c_out, c_in, k_h, k_w) array into (g, m) blocks.

    May return a view of ``values`` when the source layout permits.
    """
    if values.ndim != 4:
        raise DimensionError(f"expected a 4D array, got {values.ndim}D")
    c_in = values.shape[1]
    if m < 2:
        raise DimensionError(f"block width must be >= 2, got {m}")
    if c_in % m != 0:
        raise DimensionError(f"block width {m} does not divide c_in={c_in}")
    return values.transpose(0, 2, 3, 1).reshape(-1, m)


def block_layout_inverse(blocks: np.ndarray, dims: Dims4) -> np.ndarray:
    """Inverse of :func:`block_layout`; restores the 4D layout."""
    c_out, c_in, k_h, k_w = dims
    if blocks.size != c_out * c_in * k_h * k_w:
        raise DimensionError(
            f"block matrix holds {blocks.size} values, target dims need "
            f"{c_out * c_in * k_h * k_w}"
        )
    return blocks.reshape(c_out, k_h, k_w, c_in).transpose(0, 3, 1, 2)


@dataclass(frozen=True, eq=False)
class WeightTensor4:
    """Dense conv weight (c_out, c_in, k_h, k_w), float64, all values finite."""

    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 4:
            raise DimensionError(f"expected 4D weight, got {v.ndim}D")
        if v.size == 0:
            raise DimensionError("empty weight tensor")
        if not np.isfinite(v).all():
            raise ValueError("weight tensor contains NaN/Inf")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_flat(cls, dims: Dims4, flat) -> "WeightTensor4":
        flat = np.asarray(flat, dtype=np.float64)
        expected = int(np.prod(dims))
        if flat.size != expected:
            raise DimensionError(f"got {flat.size} values for dims {dims} ({expected} expected)")
        return cls(flat.reshape(dims))

    @property
    def dims(self) -> Dims4:
        return tuple(self.values.shape)  # type: ignore[return-value]

    @property
    def c_out(self) -> int:
        return self.values.shape[0]

    @property
    def c_in(self) -> int:
        return self.values.shape[1]

    @property
    def k_h(self) -> int:
        return self.values.shape[2]

    @property
    def k_w(self) -> int:
        return self.values.shape[3]


@dataclass(frozen=True, eq=False)
class BlockMatrix:
    """(g, m) view of a weight tensor plus the dims needed to map back."""

    values: np.ndarray
    origin_dims: Dims4

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DimensionError(f"expected a 2D block matrix, got {v.ndim}D")
        if v.size != int(np.prod(self.origin_dims)):
            raise DimensionError(
                f"{v.shape} blocks cannot come from a tensor of dims {self.origin_dims}"
            )
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "origin_dims", tuple(int(d) for d in self.origin_dims))

    @property
    def g(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class AxisVector:
    """A flattened slice of a weight tensor along one query axis.

    ``axis_tag`` is "filter" (one output filter, length c_in*k_h*k_w) or
    "kernel" (one spatial position, length c_out*c_in); ``axis_index`` is the
    filter index or the (k1, k2) kernel position.
    """

    values: np.ndarray
    axis_tag: str
    axis_index: Union[int, tuple[int, int]]


def rearrange_to_blocks(w: WeightTensor4, m: int) -> BlockMatrix:
    """Group every m consecutive input channels of ``w`` into one block row."""
    return BlockMatrix(block_layout(w.values, m), w.dims)


def rearrange_from_blocks(bm: BlockMatrix) -> WeightTensor4:
    """Exact inverse of :func:`rearrange_to_blocks`."""
    return WeightTensor4(block_layout_inverse(bm.values, bm.origin_dims))


def block_l1_norms(bm: BlockMatrix) -> np.ndarray:
    """Per-block sum of absolute values, shape (g,)."""
    return np.abs(bm.values).sum(axis=1)


def block_of_coord(dims: Dims4, m: int, o: int, c: int, kh: int, kw: int) -> tuple[int, int]:
    """Map a 4D weight coordinate to its (block row, column)."""
    c_out, c_in, k_h, k_w = dims
    cb, j = divmod(c, m)
    g = ((o * k_h + kh) * k_w + kw) * (c_in // m) + cb
    return g, j


def coord_of_block(dims: Dims4, m: int, g: int, j: int) -> tuple[int, int, int, int]:
    """Inverse of :func:`block_of_coord`."""
    c_out, c_in, k_h, k_w = dims
    g2, cb = divmod(g, c_in // m)
    g3, kw = divmod(g2, k_w)
    o, kh = divmod(g3, k_h)
    return o, cb * m + j, kh, kw


def axis_group_filter(w: WeightTensor4, i: int) -> AxisVector:
    """Filter-axis slice w[i, :, :, :] flattened in (c_in, k_h, k_w) order."""
    if not 0 <= i < w.c_out:
        raise DimensionError(f"filter index {i} out of range for c_out={w.c_out}")
    return AxisVector(w.values[i].reshape(-1), "filter", i)


def axis_group_kernel(w: WeightTensor4, k1: int, k2: int) -> AxisVector:
    """Kernel-axis slice w[:, :, k1, k2] flattened in (c_out, c_in) order."""
    if not 0 <= k1 < w.k_h:
        raise DimensionError(f"kernel row {k1} out of range for k_h={w.k_h}")
    if not 0 <= k2 < w.k_w:
        raise DimensionError(f"kernel col {k2} out of range for k_w={w.k_w}")
    return AxisVector(np.ascontiguousarray(w.values[:, :, k1, k2]).reshape(-1), "kernel", (k1, k2))
