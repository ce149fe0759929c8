"""Lattice windows, multi-index helpers and shift-equivalent cluster shapes.

Conventions used throughout the package:

* a multi-index is a plain tuple of ints of length ``d``;
* a :class:`LatticeWindow` holds a dense d-dimensional array observed on the
  lattice box ``{1..n_1} x ... x {1..n_d}``;
* a :class:`ClusterShape` is the canonical representative of a finite array
  modulo translation: the first maximum (in absolute value, lexicographic
  tie-break) sits at the origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import DegenerateCluster, DimensionMismatch

MultiIndex = tuple

ORIGIN_1D = (0,)


def check_same_dim(a, b):
    if len(a) != len(b):
        raise DimensionMismatch(f"multi-index dimensions differ: {len(a)} vs {len(b)}")


def lex_compare(a, b) -> int:
    """Lexicographic comparison of two multi-indices.

    Returns -1, 0 or 1.  This is a translation-invariant total group order
    on the integer lattice.
    """
    check_same_dim(a, b)
    for x, y in zip(a, b):
        if x < y:
            return -1
        if x > y:
            return 1
    return 0


def chebyshev(idx) -> int:
    """Sup-norm of a multi-index."""
    return max(abs(k) for k in idx)


def add_index(a, b):
    return tuple(x + y for x, y in zip(a, b))


def sub_index(a, b):
    return tuple(x - y for x, y in zip(a, b))


@dataclass(frozen=True)
class LatticeWindow:
    """Dense real-valued observation on the box ``{1..n_1} x ... x {1..n_d}``.

    ``values[i1-1, ..., id-1]`` is the field value at lattice point
    ``(i1, ..., id)``.  Values are immutable after construction.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim < 1 or min(arr.shape) < 1:
            raise ValueError("window extent must be >= 1 on every axis")
        if not np.all(np.isfinite(arr)):
            raise ValueError("window contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def extent(self):
        return self.values.shape

    def value_at(self, idx) -> float:
        """Value at the (1-based) lattice point ``idx``."""
        if len(idx) != self.dim:
            raise DimensionMismatch(f"expected dimension {self.dim}, got {len(idx)}")
        return float(self.values[tuple(k - 1 for k in idx)])


@dataclass(frozen=True)
class ClusterShape:
    """Finite-support representative of a shift-equivalence class.

    Stored in canonical form: the anchor (first maximum of ``abs(value)``,
    lexicographic tie-break) is translated to the origin, so ``anchor`` is
    always the zero multi-index and ``norm == abs(support[anchor])``.
    """

    dim: int
    support: Mapping
    anchor: MultiIndex
    norm: float

    def __post_init__(self):
        object.__setattr__(self, "support", dict(self.support))

    def value(self, idx) -> float:
        return self.support.get(tuple(idx), 0.0)

    def exceedance_count(self, level: float = 1.0) -> int:
        """Number of support entries with ``abs(value) > level``."""
        return sum(1 for v in self.support.values() if abs(v) > level)

    def indices(self):
        return sorted(self.support.keys())

    def scaled(self, factor: float) -> "ClusterShape":
        """Shape with every value multiplied by ``factor > 0``."""
        if factor <= 0:
            raise ValueError("scaling factor must be positive")
        return ClusterShape(
            dim=self.dim,
            support={k: v * factor for k, v in self.support.items()},
            anchor=self.anchor,
            norm=self.norm * factor,
        )

    def to_text(self) -> str:
        lines = [f"d={self.dim} anchor=origin"]
        for idx in self.indices():
            coords = " ".join(str(k) for k in idx)
            lines.append(f"{coords} {self.support[idx]!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "ClusterShape":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        header = lines[0].split()
        if len(header) != 2 or not header[0].startswith("d=") or header[1] != "anchor=origin":
            raise ValueError(f"bad cluster shape header: {lines[0]!r}")
        dim = int(header[0][2:])
        support = {}
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != dim + 1:
                raise ValueError(f"bad cluster shape line: {ln!r}")
            idx = tuple(int(p) for p in parts[:dim])
            support[idx] = float(parts[dim])
        return canonicalize(support)


def _as_support(values, offset=None):
    """Normalize array-or-mapping input to a zero-free index->value dict."""
    if isinstance(values, Mapping):
        items = {tuple(k): float(v) for k, v in values.items()}
        if offset is not None:
            items = {add_index(k, tuple(offset)): v for k, v in items.items()}
        return {k: v for k, v in items.items() if v != 0.0}
    arr = np.asarray(values, dtype=float)
    if offset is None:
        offset = (0,) * arr.ndim
    offset = tuple(offset)
    if len(offset) != arr.ndim:
        raise DimensionMismatch(f"offset dimension {len(offset)} vs array dimension {arr.ndim}")
    support = {}
    for pos in np.argwhere(arr != 0.0):
        idx = add_index(tuple(int(p) for p in pos), offset)
        support[idx] = float(arr[tuple(pos)])
    return support


def canonicalize(values, offset=None) -> ClusterShape:
    """Canonical :class:`ClusterShape` of a finite array.

    ``values`` is either a d-dimensional array (with ``offset`` giving the
    lattice position of its first entry) or a mapping from multi-index to
    value.  Two inputs that differ only by a translation produce identical
    outputs.  Raises :class:`DegenerateCluster` on all-zero input.
    """
    support = _as_support(values, offset)
    if not support:
        raise DegenerateCluster("cannot canonicalize an all-zero array")
    norm = max(abs(v) for v in support.values())
    anchor = min(k for k, v in support.items() if abs(v) == norm)
    dim = len(anchor)
    shifted = {sub_index(k, anchor): v for k, v in support.items()}
    return ClusterShape(dim=dim, support=shifted, anchor=(0,) * dim, norm=norm)


def shift_distance(a: ClusterShape, b: ClusterShape, radius: int) -> float:
    """Minimum sup-norm distance between ``a`` and translates of ``b``.

    The minimum runs over shifts ``k`` with ``chebyshev(k) <= radius``; this
    upper-bounds the true quotient metric and is exact once ``radius``
    exceeds both supports' diameters.
    """
    if radius < 0:
        raise ValueError("search radius must be >= 0")
    if a.dim != b.dim:
        raise DimensionMismatch(f"shape dimensions differ: {a.dim} vs {b.dim}")
    d = a.dim
    best = np.inf
    for k in box_offsets(d, radius):
        # distance between a and b shifted so that b's index i lands on i + k
        dist = 0.0
        for idx, va in a.support.items():
            dist = max(dist, abs(va - b.support.get(sub_index(idx, k), 0.0)))
            if dist >= best:
                break
        else:
            for idx, vb in b.support.items():
                tgt = add_index(idx, k)
                if tgt not in a.support:
                    dist = max(dist, abs(vb))
                if dist >= best:
                    break
        best = min(best, dist)
        if best == 0.0:
            return 0.0
    return float(best)


def box_offsets(d: int, radius: int) -> list:
    """All multi-indices with sup-norm at most ``radius``, lex order."""
    if d == 1:
        return [(k,) for k in range(-radius, radius + 1)]
    grids = np.meshgrid(*([np.arange(-radius, radius + 1)] * d), indexing="ij")
    flat = np.stack([g.ravel() for g in grids], axis=1)
    return [tuple(int(x) for x in row) for row in flat]
