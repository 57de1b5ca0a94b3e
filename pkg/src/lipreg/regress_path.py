"""Lipschitz isotonic and unimodal regression on paths.

Directed problem: minimise sum lam_i (s_i - t_i)^2 subject to
delta_i <= s_{i+1} - s_i <= gamma_i. A forward sweep keeps the derivative
F of the optimal prefix energy in an Act; each vertex shears F, reads off
the prefix minimiser s*_i as the zero of F, and opens a flat window at
s*_i that encodes the edge constraint toward the next vertex. A backward
clamp pass then recovers the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .act import Act
from .instance import PathInstance, RegressionResult, energy_of, pick_root
from .pwl import PwlMonotone
from .treeset import TreeSet

_NO_DROP = np.empty(0)


@dataclass
class UpdateRecord:
    """What :func:`unupdate` needs to revert one :func:`update`."""

    s_star: float
    t: float
    lam: float
    gamma: float
    delta: float
    rank: int
    params: np.ndarray
    dropped_x: np.ndarray
    dropped_y: np.ndarray
    undone: bool = False


def update(act: Act, t_v: float, gamma: float, delta: float = 0.0,
           lam: float = 1.0) -> tuple[float, UpdateRecord]:
    """Advance ``act`` by one vertex; returns (s*, record).

    ``act`` holds the windowed derivative of the energy so far (the zero
    function at the start). It is sheared by 2 lam (x - t_v), its zero s*
    is found, and the flat window [s* + delta, s* + gamma] is opened.
    """
    if not lam >= 0:
        raise ValueError("vertex weight must be nonnegative")
    if not (delta <= gamma and math.isfinite(delta)):
        raise ValueError("need finite delta <= gamma")
    act.reserve(2)
    params = act._P.copy()
    if math.isinf(gamma):
        out_x, out_y = np.empty(len(act) + 1), np.empty(len(act) + 1)
    else:
        out_x = out_y = _NO_DROP
    s, r, ndel = K.update(*act.arrays, t_v, lam, gamma, delta, out_x, out_y)
    if math.isnan(s):
        raise ValueError("derivative has no zero; input was not a windowed derivative")
    rec = UpdateRecord(s, t_v, lam, gamma, delta, int(r), params,
                       out_x[:ndel].copy(), out_y[:ndel].copy())
    return s, rec


def unupdate(act: Act, rec: UpdateRecord) -> None:
    """Revert :func:`update`; records must be undone newest first."""
    if rec.undone:
        raise ValueError("record was already reverted")
    if not 0 <= rec.rank < len(act):
        raise ValueError("record does not match the tree")
    x = act.select(rec.rank).x
    if abs(x - (rec.s_star + rec.delta)) > 1e-7 * max(1.0, abs(x)):
        raise ValueError("record does not match the tree")
    act.reserve(len(rec.dropped_x))
    K.unplateau(*act.arrays, rec.rank, rec.gamma, rec.delta,
                rec.dropped_x, rec.dropped_y, len(rec.dropped_x))
    K.unshear(act._F, act._G, act._S, rec.t, rec.lam)
    act._P[:] = rec.params
    rec.undone = True


def backsolve_step(s_next: float, s_star: float, gamma: float, delta: float = 0.0) -> float:
    """Best value for a vertex given its already fixed successor."""
    return min(max(s_star, s_next - gamma), s_next - delta)


# ---------------------------------------------------------------- compiled sweep

def lir_path(inst: PathInstance) -> RegressionResult:
    """Lipschitz isotonic regression on a directed path."""
    s, stars, rotations, max_rot = K.lir_sweep(inst.t, inst.lam, inst.gamma, inst.delta)
    return RegressionResult(s, energy_of(inst.t, inst.lam, s), stars,
                            stats={"rotations": int(rotations), "max_rotations_per_update": int(max_rot)})


def final_derivative(inst: PathInstance) -> PwlMonotone:
    """Derivative of the optimal energy as a function of the last value."""
    act = Act(capacity=2 * inst.n + 8)
    n = inst.n
    for i in range(n - 1):
        update(act, inst.t[i], inst.gamma[i], inst.delta[i], inst.lam[i])
    K.shear(act._F, act._G, act._S, act._P, inst.t[n - 1], inst.lam[n - 1])
    if len(act) == 0:
        act.insert(inst.t[n - 1], 0.0)
    return act.extract()


# ------------------------------------------------------------------ unimodal

def _point_act(t_v: float, lam: float) -> Act:
    """The derivative of lam (x - t_v)^2 together with its energy."""
    act = Act(2 * lam, 2 * lam, capacity=4)
    act.insert(t_v, 0.0)
    act.energy_accumulate(t_v, lam)
    return act


def lur_path(inst: PathInstance) -> RegressionResult:
    """Lipschitz unimodal regression on an undirected path.

    Every vertex i is tried as the peak: the prefix structure grows by
    updates, the suffix structure (built once from the right) shrinks by
    reverting its updates, and the optimal energy with peak i is read off
    the sum of both plus vertex i's own term.
    """
    t, lam, gamma, delta = inst.t, inst.lam, inst.gamma, inst.delta
    n = inst.n
    if n == 1:
        return RegressionResult(t.copy(), 0.0, t.copy(), root=0)
    left, right = Act(capacity=2 * n + 8), Act(capacity=2 * n + 8)
    right_stars = np.empty(n)
    left_stars = np.empty(n)
    records = []
    for j in range(n - 1, 0, -1):
        right_stars[j], rec = update(right, t[j], gamma[j - 1], delta[j - 1], lam[j])
        records.append(rec)
    xi = np.empty(n)
    peak = np.empty(n)
    for i in range(n):
        ts = TreeSet([left, right, _point_act(t[i], lam[i])])
        peak[i] = ts.evaluate_inverse(0.0)
        xi[i] = ts.integrate(peak[i])
        if i < n - 1:
            left_stars[i], _ = update(left, t[i], gamma[i], delta[i], lam[i])
            unupdate(right, records.pop())
    k = pick_root(xi)
    s = np.empty(n)
    s[k] = peak[k]
    for i in range(k - 1, -1, -1):
        s[i] = backsolve_step(s[i + 1], left_stars[i], gamma[i], delta[i])
    for i in range(k + 1, n):
        s[i] = backsolve_step(s[i - 1], right_stars[i], gamma[i - 1], delta[i - 1])
    stars = np.where(np.arange(n) < k, left_stars, right_stars)
    stars[k] = peak[k]
    return RegressionResult(s, energy_of(t, lam, s), stars, root=int(k),
                            stats={"xi": xi})
