"""Axis-aligned grid partitions, class lookup and per-class termination."""

from __future__ import annotations

from typing import Sequence

import numpy as np


class Grid:
    """Regular grid over a box with half-open cells, indexed row-major.

    Dimension 0 varies slowest. The upper boundary of the box belongs to the
    last cell, and coordinates outside the box are clamped first.
    """

    def __init__(self, bounds, dims: Sequence[int]):
        bounds = np.asarray(bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("bounds must be a sequence of [low, high] pairs")
        dims = tuple(int(d) for d in dims)
        if len(dims) != len(bounds):
            raise ValueError(f"dims has {len(dims)} entries but bounds has {len(bounds)}")
        if any(d < 1 for d in dims):
            raise ValueError("every dims entry must be >= 1")
        if not np.all(np.isfinite(bounds)) or np.any(bounds[:, 0] >= bounds[:, 1]):
            raise ValueError("degenerate bounds: need low < high in every dimension")
        self.bounds = bounds
        self.dims = dims
        self.size = int(np.prod(dims))
        self._low = [float(v) for v in bounds[:, 0]]
        self._high = [float(v) for v in bounds[:, 1]]
        self._scale = [n / (hi - lo) for n, lo, hi in zip(dims, self._low, self._high)]
        strides = []
        acc = 1
        for n in reversed(dims):
            strides.append(acc)
            acc *= n
        self._strides = tuple(reversed(strides))

    def cell(self, s) -> tuple[int, ...]:
        out = []
        for x, lo, hi, sc, n in zip(s, self._low, self._high, self._scale, self.dims):
            if x != x:
                raise ValueError("NaN coordinate")
            if x <= lo:
                k = 0
            elif x >= hi:
                k = n - 1
            else:
                k = int((x - lo) * sc)
                if k >= n:
                    k = n - 1
            out.append(k)
        return tuple(out)

    def index(self, s) -> int:
        idx = 0
        for x, lo, hi, sc, n, st in zip(s, self._low, self._high, self._scale, self.dims, self._strides):
            if x != x:
                raise ValueError("NaN coordinate")
            if x <= lo:
                k = 0
            elif x >= hi:
                k = n - 1
            else:
                k = int((x - lo) * sc)
                if k >= n:
                    k = n - 1
            idx += k * st
        return idx

    def unravel(self, i: int) -> tuple[int, ...]:
        if not 0 <= i < self.size:
            raise IndexError(f"cell index {i} outside [0, {self.size})")
        return tuple(int(k) for k in np.unravel_index(i, self.dims))

    def cell_box(self, i: int) -> np.ndarray:
        ks = self.unravel(i)
        box = np.empty((len(ks), 2))
        for d, k in enumerate(ks):
            w = (self._high[d] - self._low[d]) / self.dims[d]
            box[d] = (self._low[d] + k * w, self._low[d] + (k + 1) * w)
        return box

    def center(self, i: int) -> tuple[float, ...]:
        box = self.cell_box(i)
        return tuple(float(v) for v in box.mean(axis=1))


class GridPartition(Grid):
    """Partition of the state box into ``m = prod(dims)`` classes."""

    @property
    def m(self) -> int:
        return self.size

    def class_of(self, s) -> int:
        return self.index(s)

    def termination(self, i: int, s) -> int:
        """beta_i(s): 0 while ``s`` stays in class ``i``, 1 once it leaves."""
        if not 0 <= i < self.size:
            raise IndexError(f"class {i} outside [0, {self.size})")
        return 0 if self.index(s) == i else 1

    def sample_in_class(self, i: int, rng: np.random.Generator):
        box = self.cell_box(i)
        while True:
            s = tuple(float(v) for v in box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(len(box)))
            # rounding can land a sample on the neighbouring cell's edge
            if self.index(s) == i:
                return s

    def __repr__(self) -> str:
        return f"GridPartition(dims={self.dims})"


class LabelPartition:
    """Partition of a finite state set given by one class label per state."""

    def __init__(self, labels: Sequence[int]):
        labels = [int(v) for v in labels]
        if not labels:
            raise ValueError("labels must be non-empty")
        m = max(labels) + 1
        used = set(labels)
        if min(labels) < 0 or used != set(range(m)):
            raise ValueError("labels must use every class in 0..m-1")
        self.labels = labels
        self.m = m
        self.members = [[s for s, c in enumerate(labels) if c == i] for i in range(m)]

    def class_of(self, s) -> int:
        return self.labels[int(s)]

    def termination(self, i: int, s) -> int:
        if not 0 <= i < self.m:
            raise IndexError(f"class {i} outside [0, {self.m})")
        return 0 if self.labels[int(s)] == i else 1

    def sample_in_class(self, i: int, rng: np.random.Generator):
        members = self.members[i]
        return members[int(rng.integers(len(members)))]

    def __repr__(self) -> str:
        return f"LabelPartition(m={self.m})"


def make_grid_partition(bounds, dims) -> GridPartition:
    return GridPartition(bounds, dims)


def class_of(partition, s) -> int:
    """mu(s): index of the class containing ``s``."""
    return partition.class_of(s)


def termination(partition, i: int, s) -> int:
    return partition.termination(i, s)
