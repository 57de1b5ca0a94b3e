"""Problem instances and results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def _edge_param(value, m: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(m, float(arr))
    arr = arr.reshape(-1)
    if arr.size != m:
        raise ValueError(f"{name} needs {m} entries, got {arr.size}")
    return arr.copy()


def _check_common(t, lam, gamma, delta):
    if not np.all(np.isfinite(t)):
        raise ValueError("heights must be finite")
    if not np.all(lam > 0) or not np.all(np.isfinite(lam)):
        raise ValueError("weights must be positive and finite")
    if np.any(np.isnan(gamma)) or np.any(gamma == -math.inf):
        raise ValueError("gamma must be a number or +inf")
    if not np.all(np.isfinite(delta)):
        raise ValueError("delta must be finite")
    if np.any(delta > gamma):
        raise ValueError("every edge needs delta <= gamma")


@dataclass(frozen=True, eq=False)
class PathInstance:
    """Heights on a path v_0..v_{n-1}.

    The directed problem asks for delta_i <= s_{i+1} - s_i <= gamma_i.
    """

    t: np.ndarray
    lam: np.ndarray = None
    gamma: np.ndarray = math.inf
    delta: np.ndarray = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        if t.size == 0:
            raise ValueError("a path needs at least one vertex")
        n = t.size
        lam = np.ones(n) if self.lam is None else _edge_param(self.lam, n, "lam")
        gamma = _edge_param(self.gamma, n - 1, "gamma")
        delta = _edge_param(self.delta, n - 1, "delta")
        _check_common(t, lam, gamma, delta)
        for k, v in (("t", t), ("lam", lam), ("gamma", gamma), ("delta", delta)):
            object.__setattr__(self, k, v)

    @property
    def n(self) -> int:
        return self.t.size

    def reversed(self) -> "PathInstance":
        return PathInstance(self.t[::-1], self.lam[::-1], self.gamma[::-1], self.delta[::-1])

    def as_tree(self) -> "TreeInstance":
        """The same path as a tree rooted at its last vertex."""
        n = self.n
        parent = np.arange(1, n + 1)
        parent[-1] = -1
        gamma = np.append(self.gamma, math.inf)
        delta = np.append(self.delta, 0.0)
        return TreeInstance(self.t, parent, self.lam, gamma, delta)


@dataclass(frozen=True, eq=False)
class TreeInstance:
    """Heights on a tree given by parent pointers.

    ``gamma[v]`` and ``delta[v]`` belong to the edge between v and
    ``parent[v]``; entries of the root are ignored. For the rooted problem
    the constraint is delta <= s(parent) - s(v) <= gamma. For the unrooted
    problem the parent pointers only define the edge set, and the same
    bounds apply in whichever direction the edge points toward the peak.
    """

    t: np.ndarray
    parent: np.ndarray
    lam: np.ndarray = None
    gamma: np.ndarray = math.inf
    delta: np.ndarray = 0.0

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        n = t.size
        if n == 0:
            raise ValueError("a tree needs at least one vertex")
        parent = np.asarray(self.parent, dtype=np.int64).reshape(-1)
        if parent.size != n:
            raise ValueError("parent array has the wrong length")
        lam = np.ones(n) if self.lam is None else _edge_param(self.lam, n, "lam")
        gamma = _edge_param(self.gamma, n, "gamma")
        delta = _edge_param(self.delta, n, "delta")
        roots = np.flatnonzero(parent < 0)
        if roots.size != 1:
            raise ValueError("forest" if roots.size > 1 else "no root")
        gamma[roots] = math.inf
        delta[roots] = 0.0
        if np.any(parent >= n):
            bad = int(np.flatnonzero(parent >= n)[0])
            raise ValueError(f"vertex {bad} has an unknown parent")
        _check_common(t, lam, gamma, delta)
        for k, v in (("t", t), ("parent", parent), ("lam", lam), ("gamma", gamma),
                     ("delta", delta)):
            object.__setattr__(self, k, v)
        order = self.topological_order()  # raises on cycles
        object.__setattr__(self, "_order", order)

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def root(self) -> int:
        return int(np.flatnonzero(self.parent < 0)[0])

    def children(self) -> list:
        ch = [[] for _ in range(self.n)]
        for v, p in enumerate(self.parent):
            if p >= 0:
                ch[p].append(v)
        return ch

    def topological_order(self) -> np.ndarray:
        """Vertices with every parent before its children."""
        if hasattr(self, "_order"):
            return self._order
        ch = self.children()
        order = [self.root]
        for v in order:
            order.extend(ch[v])
        if len(order) != self.n:
            seen = np.zeros(self.n, dtype=bool)
            seen[order] = True
            bad = int(np.flatnonzero(~seen)[0])
            raise ValueError(f"cycle through vertex {bad}")
        return np.asarray(order)

    def neighbours(self) -> list:
        """Adjacency lists as (neighbour, edge owner) pairs."""
        adj = [[] for _ in range(self.n)]
        for v, p in enumerate(self.parent):
            if p >= 0:
                adj[v].append((int(p), v))
                adj[p].append((v, v))
        return adj

    def rerooted(self, r: int) -> "TreeInstance":
        """Same edges and edge parameters, oriented toward r."""
        parent = np.full(self.n, -1)
        gamma = np.full(self.n, math.inf)
        delta = np.zeros(self.n)
        adj = self.neighbours()
        seen = np.zeros(self.n, dtype=bool)
        seen[r] = True
        stack = [r]
        while stack:
            v = stack.pop()
            for u, e in adj[v]:
                if not seen[u]:
                    seen[u] = True
                    parent[u] = v
                    gamma[u] = self.gamma[e]
                    delta[u] = self.delta[e]
                    stack.append(u)
        return TreeInstance(self.t, parent, self.lam, gamma, delta)


@dataclass
class RegressionResult:
    s: np.ndarray
    energy: float
    stars: np.ndarray
    root: int | None = None
    stats: dict = field(default_factory=dict)


def energy_of(t, lam, s) -> float:
    d = np.asarray(s, dtype=float) - np.asarray(t, dtype=float)
    return float(np.dot(np.asarray(lam, dtype=float), d * d))


def pick_root(energies, rel: float = 1e-9) -> int:
    """Smallest index whose energy is within rel of the minimum."""
    energies = np.asarray(energies, dtype=float)
    lo = energies.min()
    return int(np.flatnonzero(energies <= lo + rel * max(1.0, abs(lo)))[0])
