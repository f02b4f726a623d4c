"""Geometry of the d-dimensional discrete torus.

Vertices are the points of {0,...,n-1}^d with all arithmetic mod n.  Every
vertex gets a flat integer index (first coordinate varies fastest), and every
undirected edge is identified by its base vertex together with the axis along
which it points in the +1 direction.  Edge index = axis * n^d + base.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class TorusConfig:
    d: int
    n: int

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got {self.d}")
        if self.n < 3:
            # n >= 3 keeps the 2d neighbors of a vertex distinct
            raise ValueError(f"side length must be >= 3, got {self.n}")

    @property
    def n_vertices(self) -> int:
        return self.n ** self.d

    @property
    def n_edges(self) -> int:
        return self.d * self.n ** self.d

    # ---- index <-> coordinate maps ----

    def vertex_index(self, coords: Sequence[int]) -> int:
        if len(coords) != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {len(coords)}")
        idx = 0
        for axis in range(self.d - 1, -1, -1):
            idx = idx * self.n + (int(coords[axis]) % self.n)
        return idx

    def vertex_coords(self, v: int) -> tuple[int, ...]:
        if not 0 <= v < self.n_vertices:
            raise ValueError(f"vertex index {v} out of range")
        out = []
        for _ in range(self.d):
            out.append(v % self.n)
            v //= self.n
        return tuple(out)

    @cached_property
    def coords_table(self) -> np.ndarray:
        """(n_vertices, d) array of coordinates, row v = vertex_coords(v)."""
        nv = self.n_vertices
        table = np.empty((nv, self.d), dtype=np.int64)
        v = np.arange(nv)
        for axis in range(self.d):
            table[:, axis] = v % self.n
            v = v // self.n
        return table

    @cached_property
    def _axis_shift(self) -> tuple[np.ndarray, np.ndarray]:
        """Vertex index maps for a +1 / -1 step along each axis, shape (d, n_vertices)."""
        nv = self.n_vertices
        coords = self.coords_table
        plus = np.empty((self.d, nv), dtype=np.int64)
        minus = np.empty((self.d, nv), dtype=np.int64)
        stride = 1
        for axis in range(self.d):
            c = coords[:, axis]
            plus[axis] = np.arange(nv) + np.where(c == self.n - 1, -(self.n - 1) * stride, stride)
            minus[axis] = np.arange(nv) + np.where(c == 0, (self.n - 1) * stride, -stride)
            stride *= self.n
        return plus, minus

    # ---- edges ----

    def edge_index(self, base: int, axis: int) -> int:
        if not 0 <= axis < self.d:
            raise ValueError(f"axis {axis} out of range")
        return axis * self.n_vertices + base

    def edge_base_axis(self, e: int) -> tuple[int, int]:
        if not 0 <= e < self.n_edges:
            raise ValueError(f"edge index {e} out of range")
        return e % self.n_vertices, e // self.n_vertices

    @cached_property
    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Arrays (u, w) of length n_edges: edge e joins u[e] and w[e] = u[e] + e_axis."""
        plus, _ = self._axis_shift
        nv = self.n_vertices
        u = np.tile(np.arange(nv), self.d)
        w = plus.reshape(-1)
        return u, w

    @cached_property
    def neighbor_vertices(self) -> np.ndarray:
        """(n_vertices, 2d) neighbor table; columns 2a, 2a+1 are the +1 / -1 step on axis a."""
        plus, minus = self._axis_shift
        out = np.empty((self.n_vertices, 2 * self.d), dtype=np.int64)
        for axis in range(self.d):
            out[:, 2 * axis] = plus[axis]
            out[:, 2 * axis + 1] = minus[axis]
        return out

    @cached_property
    def neighbor_edges(self) -> np.ndarray:
        """(n_vertices, 2d) edge ids matching neighbor_vertices column for column."""
        _, minus = self._axis_shift
        nv = self.n_vertices
        out = np.empty((nv, 2 * self.d), dtype=np.int64)
        v = np.arange(nv)
        for axis in range(self.d):
            out[:, 2 * axis] = axis * nv + v
            out[:, 2 * axis + 1] = axis * nv + minus[axis]
        return out

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        """The 2d (edge_index, neighbor_vertex) pairs incident to v."""
        return list(zip(self.neighbor_edges[v].tolist(), self.neighbor_vertices[v].tolist()))

    # ---- boxes and displacement ----

    def box(self, center: int, r: int) -> np.ndarray:
        """Vertex ids of the axis-aligned box with exactly r planes per axis.

        The box is centered at `center`; for even r the extra plane sits on the
        negative-displacement side.  Requires 1 <= r <= n, so the r residues per
        axis are distinct and |box| = r^d.
        """
        if not 1 <= r <= self.n:
            raise ValueError(f"box side {r} must lie in [1, n={self.n}]")
        offs = np.arange(-(r // 2), r - r // 2)
        c = self.coords_table[center]
        out = np.zeros(1, dtype=np.int64)
        stride = 1
        for axis in range(self.d):
            vals = (c[axis] + offs) % self.n
            out = (out[:, None] + (vals * stride)[None, :]).reshape(-1)
            stride *= self.n
        return out

    def linf_displacement(self, u: int, v: int) -> int:
        """Toroidal L-infinity distance between two vertices."""
        cu = self.coords_table[u]
        cv = self.coords_table[v]
        delta = np.abs(cu - cv)
        return int(np.max(np.minimum(delta, self.n - delta)))

    def axis_distance(self, a: int, b: int) -> int:
        """Circular distance between two residues mod n."""
        delta = abs(int(a) - int(b))
        return min(delta, self.n - delta)
