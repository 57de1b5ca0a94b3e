"""Implicit sums of monotone piecewise-linear functions.

A :class:`TreeSet` holds Acts F_1..F_k and stands for F = sum F_j without
ever adding them up. Member 0 is the merge target; further members are
pushed and popped in LIFO order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .act import Act, _as_map
from .pwl import PwlMonotone


@dataclass
class PlateauRecord:
    """Per-member undo information of one update."""

    rank: int
    params: np.ndarray  # kernel P array before the update
    dropped_x: np.ndarray
    dropped_y: np.ndarray
    touched: bool


@dataclass
class UpdateRecord:
    t: float
    lam: float
    gamma: float
    delta: float
    s_star: float
    members: list


def _is_zero(act: Act) -> bool:
    return len(act) == 0 and act.mu_minus == 0 and act.mu_plus == 0


class TreeSet:
    def __init__(self, members=None):
        self.members: list[Act] = list(members) if members else [Act()]
        self.history: list[UpdateRecord] = []

    def __len__(self):
        return len(self.members)

    @property
    def k(self) -> int:
        return len(self.members)

    # ------------------------------------------------------------ queries
    def evaluate(self, x: float) -> float:
        return sum(m.evaluate(x) for m in self.members)

    def integrate(self, a: float) -> float:
        return sum(m.integrate(a) for m in self.members)

    def extract(self) -> PwlMonotone:
        from .pwl import add
        out = PwlMonotone()
        for m in self.members:
            out = add(out, m.extract())
        return out

    def evaluate_inverse(self, y: float) -> float:
        """Leftmost x with sum F_j(x) = y.

        Each member's breakpoints are binary searched in turn, shrinking a
        bracket [lo, hi] with full-sum evaluations until no breakpoint is
        left inside, then the remaining linear piece is solved.
        """
        for m in self.members:
            m._require_anchor()
        lo, hi = -math.inf, math.inf
        f_lo = f_hi = math.nan
        for m in self.members:
            F, _, G, S, _ = m.arrays
            a = 0 if lo == -math.inf else int(K.rank_below(F, G, S, 0, lo, False))
            b = int(S[K.COUNT]) if hi == math.inf else int(K.rank_below(F, G, S, 0, hi, True))
            while a < b:
                mid = (a + b) // 2
                x = K.vertex_at_rank(F, G, S, mid)[0]
                v = self.evaluate(x)
                if v < y:
                    lo, f_lo = x, v
                    a = mid + 1
                else:
                    hi, f_hi = x, v
                    b = mid
        if lo == -math.inf and hi == math.inf:
            raise ValueError("sum has no breakpoints to anchor a root")
        if lo == -math.inf:
            slope = sum(m.mu_minus for m in self.members)
            if slope <= 0:
                raise ValueError(f"{y!r} has no preimage")
            return hi - (f_hi - y) / slope
        if hi == math.inf:
            slope = sum(m.mu_plus for m in self.members)
            if slope <= 0 and abs(f_lo - y) <= K.ZERO_TOL * max(1.0, abs(y)):
                return lo  # flat tail at the target, off only by roundoff
            if slope <= 0:
                raise ValueError(f"{y!r} has no preimage")
            return lo + (y - f_lo) / slope
        if f_hi == y:
            return hi
        return lo + (y - f_lo) * (hi - lo) / (f_hi - f_lo)

    def peak(self, t_v: float, lam: float) -> tuple[float, float]:
        """Minimiser and minimum of the energy plus lam (x - t_v)^2.

        The vertex term is added to member 0 for the query only.
        """
        first = self.members[0]
        saved = first._P.copy()
        F, A, G, S, P = first.arrays
        K.shear(F, G, S, P, t_v, lam)
        anchored = len(first) == 0
        if anchored:
            first.reserve(1)
            F, A, G, S, P = first.arrays
            K.insert(F, A, G, S, t_v, 0.0)
        try:
            x = self.evaluate_inverse(0.0)
            e = self.integrate(x)
        finally:
            if anchored:
                K.delete_rank(F, A, G, S, 0)
            K.unshear(F, G, S, t_v, lam)
            first._P[:] = saved
        return x, e

    # ------------------------------------------------------ set surgery
    def include(self, act: Act) -> None:
        self.members.append(act)

    def uninclude(self) -> Act:
        if len(self.members) < 2:
            raise IndexError("the merge target cannot be removed")
        return self.members.pop()

    def merge(self, g: PwlMonotone, energy_c=(0.0, 0.0, 0.0)) -> None:
        self.members[0].merge_add(g, energy_c)

    def unmerge(self, g: PwlMonotone, energy_c=(0.0, 0.0, 0.0)) -> None:
        self.members[0].unmerge_subtract(g, energy_c)

    # ----------------------------------------------------------- affine
    def affine(self, psi) -> None:
        """Apply psi to the graph of the sum.

        The abscissa map and the y-scaling act on every member; the additive
        part m21 x + c2 is given to member 0 alone so it is counted once.
        """
        m = _as_map(psi)
        if m[1] != 0.0:
            raise ValueError("maps of a sum may not mix y into x")
        shared = (m[0], 0.0, 0.0, m[3], m[4], 0.0)
        self.members[0].affine(m)
        for act in self.members[1:]:
            if not _is_zero(act):
                act.affine(shared)

    def interval(self, axis, psi, lo: float, hi: float) -> None:
        """Apply psi to the part of the sum over abscissae [lo, hi]."""
        if axis not in ("x", 0):
            raise ValueError("sums only support abscissa intervals")
        m = _as_map(psi)
        if m[1] != 0.0:
            raise ValueError("maps of a sum may not mix y into x")
        shared = (m[0], 0.0, 0.0, m[3], m[4], 0.0)
        self.members[0].interval("x", m, lo, hi)
        for act in self.members[1:]:
            if not _is_zero(act):
                act.interval("x", shared, lo, hi)

    # ----------------------------------------------------------- update
    def update(self, t_v: float, gamma: float, delta: float = 0.0, lam: float = 1.0) -> float:
        """Add lam (x - t_v)^2 to the energy and take the windowed minimum.

        Afterwards the sum represents the derivative of
        x -> min over y in [x - gamma, x - delta] of the updated energy.
        Returns the minimizer s* of the updated energy.
        """
        if not lam >= 0:
            raise ValueError("vertex weight must be nonnegative")
        if not (delta <= gamma and math.isfinite(delta)):
            raise ValueError("need finite delta <= gamma")
        first = self.members[0]
        saved = [act._P.copy() for act in self.members]
        F, A, G, S, P = first.arrays
        K.shear(F, G, S, P, t_v, lam)
        anchored = len(first) == 0
        if anchored:
            K.insert(F, A, G, S, t_v, 0.0)
        s = self.evaluate_inverse(0.0)
        values = [act.evaluate(s) for act in self.members]
        if anchored:
            K.delete_rank(F, A, G, S, 0)
        records = []
        for act, v, p in zip(self.members, values, saved):
            if _is_zero(act):
                records.append(PlateauRecord(0, p, np.empty(0), np.empty(0), False))
                continue
            act.reserve(2)
            n = len(act) + 1
            out_x, out_y = np.empty(n), np.empty(n)
            F, A, G, S, P = act.arrays
            r = K.rank_below(F, G, S, 0, s, True)
            r, ndel = K.plateau(F, A, G, S, P, s, v, r, gamma, delta, out_x, out_y)
            records.append(PlateauRecord(int(r), p, out_x[:ndel].copy(), out_y[:ndel].copy(), True))
        self.history.append(UpdateRecord(t_v, lam, gamma, delta, s, records))
        return s

    def unupdate(self) -> float:
        """Revert the most recent :meth:`update`; returns its s*."""
        if not self.history:
            raise IndexError("no update to revert")
        rec = self.history[-1]
        if len(rec.members) != len(self.members):
            raise RuntimeError("members changed since the update being reverted")
        self.history.pop()
        for act, pr in zip(reversed(self.members), reversed(rec.members)):
            if pr.touched:
                act.reserve(len(pr.dropped_x))
                K.unplateau(*act.arrays, pr.rank, rec.gamma, rec.delta,
                            pr.dropped_x, pr.dropped_y, len(pr.dropped_x))
            act._P[:] = pr.params
        first = self.members[0]
        K.unshear(first._F, first._G, first._S, rec.t, rec.lam)
        return rec.s_star
