"""Reference solvers that share no arithmetic with the fast path.

The dynamic programs keep the optimal-energy functions explicitly as
convex piecewise quadratics, which costs O(n) per step but is easy to
trust. PAVA and the all-roots unimodal search sit on top.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .instance import PathInstance, RegressionResult, TreeInstance, energy_of, pick_root

PATH_GUARD = 10_000
TREE_GUARD = 2_000
LUR_GUARD = 500


def _guard(n: int, default: int, what: str) -> None:
    limit = int(os.environ.get("LIPREG_ORACLE_GUARD", default))
    if n > limit:
        raise ValueError(f"{what}: n={n} exceeds the oracle guard {limit}")


@dataclass(frozen=True)
class QuadPiece:
    lo: float
    hi: float
    a: float
    b: float
    c: float

    def __call__(self, x):
        return (self.a * x + self.b) * x + self.c


class PiecewiseQuad:
    """Convex piecewise quadratic on the real line.

    ``bp`` holds the p-1 inner breakpoints; piece j is
    a[j] x^2 + b[j] x + c[j] on [bp[j-1], bp[j]].
    """

    def __init__(self, bp, a, b, c):
        self.bp = np.asarray(bp, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)

    @classmethod
    def quadratic(cls, lam: float, t: float) -> "PiecewiseQuad":
        return cls([], [lam], [-2 * lam * t], [lam * t * t])

    @classmethod
    def zero(cls) -> "PiecewiseQuad":
        return cls([], [0.0], [0.0], [0.0])

    @property
    def pieces(self) -> list:
        edges = np.concatenate([[-math.inf], self.bp, [math.inf]])
        return [QuadPiece(edges[j], edges[j + 1], self.a[j], self.b[j], self.c[j])
                for j in range(self.a.size)]

    def __call__(self, x: float) -> float:
        j = int(np.searchsorted(self.bp, x))
        return (self.a[j] * x + self.b[j]) * x + self.c[j]

    def derivative(self, x: float) -> float:
        j = int(np.searchsorted(self.bp, x))
        return 2 * self.a[j] * x + self.b[j]

    def add_quadratic(self, lam: float, t: float) -> "PiecewiseQuad":
        return PiecewiseQuad(self.bp, self.a + lam, self.b - 2 * lam * t, self.c + lam * t * t)

    def __add__(self, other: "PiecewiseQuad") -> "PiecewiseQuad":
        bp = np.union1d(self.bp, other.bp)
        if bp.size:
            probes = np.concatenate([[bp[0] - 1.0], 0.5 * (bp[:-1] + bp[1:]), [bp[-1] + 1.0]])
        else:
            probes = np.zeros(1)
        i = np.searchsorted(self.bp, probes)
        k = np.searchsorted(other.bp, probes)
        return PiecewiseQuad(bp, self.a[i] + other.a[k], self.b[i] + other.b[k],
                             self.c[i] + other.c[k])

    def argmin(self) -> float:
        """Minimizer, located by the sign change of the derivative."""
        a, b, bp = self.a, self.b, self.bp
        right_slope = 2 * a[:-1] * bp + b[:-1]
        j = int(np.argmax(right_slope >= 0)) if np.any(right_slope >= 0) else a.size - 1
        lo = bp[j - 1] if j > 0 else -math.inf
        hi = bp[j] if j < bp.size else math.inf
        if a[j] <= 0:
            if b[j] == 0 and lo == -math.inf:
                raise ValueError("energy has no unique minimizer")
            return lo if b[j] >= 0 else hi
        return min(max(-b[j] / (2 * a[j]), lo), hi)

    @staticmethod
    def _shift(a, b, c, d):
        return a, b - 2 * a * d, (a * d - b) * d + c

    def window_min(self, gamma: float, delta: float) -> "PiecewiseQuad":
        """x -> min of self over [x - gamma, x - delta]."""
        m = self.argmin()
        e_min = self(m)
        j = int(np.searchsorted(self.bp, m))
        la, lb, lc = self._shift(self.a[:j + 1], self.b[:j + 1], self.c[:j + 1], delta)
        left_bp = self.bp[:j] + delta
        if gamma == delta:
            ra, rb, rc = self._shift(self.a[j:], self.b[j:], self.c[j:], gamma)
            return PiecewiseQuad(np.concatenate([left_bp, [m + delta], self.bp[j:] + gamma]),
                                 np.concatenate([la, ra]), np.concatenate([lb, rb]),
                                 np.concatenate([lc, rc]))
        if math.isinf(gamma):
            return PiecewiseQuad(np.append(left_bp, m + delta), np.append(la, 0.0),
                                 np.append(lb, 0.0), np.append(lc, e_min))
        ra, rb, rc = self._shift(self.a[j:], self.b[j:], self.c[j:], gamma)
        return PiecewiseQuad(np.concatenate([left_bp, [m + delta, m + gamma], self.bp[j:] + gamma]),
                             np.concatenate([la, [0.0], ra]), np.concatenate([lb, [0.0], rb]),
                             np.concatenate([lc, [e_min], rc]))

    def convexity_defect(self) -> float:
        """Largest drop of the derivative across a junction (0 when convex)."""
        if self.bp.size == 0:
            return max(0.0, -self.a[0])
        left = 2 * self.a[:-1] * self.bp + self.b[:-1]
        right = 2 * self.a[1:] * self.bp + self.b[1:]
        return float(max(0.0, np.max(left - right), -np.min(self.a)))


# ------------------------------------------------------------------ checks

def feasible(inst, s, tol: float = 1e-9) -> bool:
    """Whether s meets every edge constraint of the directed instance."""
    s = np.asarray(s, dtype=float)
    if isinstance(inst, PathInstance):
        if s.size != inst.n:
            raise ValueError("size mismatch")
        d = np.diff(s)
        return bool(np.all(d >= inst.delta - tol) and np.all(d <= inst.gamma + tol))
    if s.size != inst.n:
        raise ValueError("size mismatch")
    kids = inst.parent >= 0
    d = s[inst.parent[kids]] - s[kids]
    return bool(np.all(d >= inst.delta[kids] - tol) and np.all(d <= inst.gamma[kids] + tol))


def energy(inst, s) -> float:
    return energy_of(inst.t, inst.lam, s)


# -------------------------------------------------------------------- PAVA

def pava(t, lam=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit by pooling adjacent violators."""
    t = np.asarray(t, dtype=float)
    w = np.ones_like(t) if lam is None else np.asarray(lam, dtype=float)
    means, weights, sizes = [], [], []
    for x, wx in zip(t, w):
        means.append(x)
        weights.append(wx)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), weights.pop(), sizes.pop()
            m1, w1, n1 = means.pop(), weights.pop(), sizes.pop()
            ww = w1 + w2
            means.append((m1 * w1 + m2 * w2) / ww)
            weights.append(ww)
            sizes.append(n1 + n2)
    return np.repeat(means, sizes)


# ------------------------------------------------------------ dynamic programs

def dp_lir_path(inst: PathInstance) -> RegressionResult:
    _guard(inst.n, PATH_GUARD, "dp_lir_path")
    n = inst.n
    stars = np.empty(n)
    e = PiecewiseQuad.quadratic(inst.lam[0], inst.t[0])
    stars[0] = e.argmin()
    for i in range(1, n):
        e = e.window_min(inst.gamma[i - 1], inst.delta[i - 1]).add_quadratic(inst.lam[i], inst.t[i])
        stars[i] = e.argmin()
    s = np.empty(n)
    s[-1] = stars[-1]
    for i in range(n - 2, -1, -1):
        s[i] = min(max(stars[i], s[i + 1] - inst.gamma[i]), s[i + 1] - inst.delta[i])
    return RegressionResult(s, energy(inst, s), stars)


def dp_energy_functions(inst: TreeInstance) -> list:
    """Optimal subtree energy as a function of the subtree root's value."""
    _guard(inst.n, TREE_GUARD, "dp_lir_tree")
    ch = inst.children()
    funcs = [None] * inst.n
    for v in inst.topological_order()[::-1]:
        e = PiecewiseQuad.quadratic(inst.lam[v], inst.t[v])
        for u in ch[v]:
            e = e + funcs[u].window_min(inst.gamma[u], inst.delta[u])
        funcs[v] = e
    return funcs


def dp_lir_tree(inst: TreeInstance) -> RegressionResult:
    funcs = dp_energy_functions(inst)
    stars = np.array([f.argmin() for f in funcs])
    s = np.empty(inst.n)
    for v in inst.topological_order():
        p = inst.parent[v]
        s[v] = stars[v] if p < 0 else min(max(stars[v], s[p] - inst.gamma[v]), s[p] - inst.delta[v])
    return RegressionResult(s, energy(inst, s), stars, root=inst.root)


def brute_lur(inst) -> RegressionResult:
    """Unimodal regression by solving the isotonic problem toward every root."""
    tree = inst.as_tree() if isinstance(inst, PathInstance) else inst
    _guard(tree.n, LUR_GUARD, "brute_lur")
    results = [dp_lir_tree(tree.rerooted(r)) for r in range(tree.n)]
    energies = np.array([res.energy for res in results])
    r = pick_root(energies)
    best = results[r]
    best.root = r
    return best

