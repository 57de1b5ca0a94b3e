"""Lipschitz isotonic and unimodal regression on trees.

Rooted problem: minimise sum lam_v (s_v - t_v)^2 subject to
delta_v <= s(parent v) - s(v) <= gamma_v. Each vertex's derivative F_v is
its own term plus the windowed derivatives of its children; the larger
child's Act is reused and the smaller one is merged into it.

Unrooted problem: the peak may sit anywhere. One rooted sweep from a leaf
keeps snapshots of every light subtree, after which a depth-first walk
moves the peak across each edge, maintaining the function of "everything
above" as a tree set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .act import Act
from .instance import RegressionResult, TreeInstance, energy_of, pick_root
from .pwl import PwlMonotone, evaluate
from .regress_path import unupdate, update
from .treeset import TreeSet


@dataclass(frozen=True, eq=False)
class BinarizedTree:
    """A rooted tree in which every vertex has at most two children.

    Vertices ``0..n_orig-1`` are the original ones; dummies follow. A dummy
    has weight 0 and an equality edge (gamma = delta = 0) to its parent, so
    it always takes its parent's value and adds no energy.
    """

    parent: np.ndarray
    t: np.ndarray
    lam: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    heavy: np.ndarray
    light: np.ndarray
    omega: np.ndarray  # original vertices in the subtree
    post: np.ndarray  # children before parents, root last
    n_orig: int

    @property
    def n(self) -> int:
        return self.t.size

    @property
    def n_dummies(self) -> int:
        return self.n - self.n_orig

    @property
    def root(self) -> int:
        return int(self.post[-1])

    def children(self, v: int) -> list:
        return [c for c in (self.heavy[v], self.light[v]) if c >= 0]


def binarize(inst: TreeInstance) -> BinarizedTree:
    """Split every vertex with more than two children by a chain of dummies.

    A vertex with k > 2 children keeps its first child and hands the others
    to a dummy, which does the same, so k - 2 dummies are added. Children
    keep their own edge parameters.
    """
    n = inst.n
    kids = inst.children()
    parent = list(inst.parent)
    t, lam = list(inst.t), list(inst.lam)
    gamma, delta = list(inst.gamma), list(inst.delta)
    slots = [[] for _ in range(n)]
    for v in range(n):
        cur, rest = v, kids[v]
        while len(rest) > 2:
            d = len(parent)
            slots[cur].append(rest[0])
            parent[rest[0]] = cur
            parent.append(cur)
            t.append(t[v])
            lam.append(0.0)
            gamma.append(0.0)
            delta.append(0.0)
            slots.append([])
            slots[cur].append(d)
            cur, rest = d, rest[1:]
        for c in rest:
            slots[cur].append(c)
            parent[c] = cur
    nb = len(parent)
    order = [inst.root]
    for v in order:
        order.extend(slots[v])
    post = np.asarray(order[::-1], dtype=np.int64)
    omega = np.zeros(nb, dtype=np.int64)
    size = np.zeros(nb, dtype=np.int64)
    heavy = np.full(nb, -1, dtype=np.int64)
    light = np.full(nb, -1, dtype=np.int64)
    for v in post:
        omega[v] += v < n
        size[v] += 1
        ch = sorted(slots[v], key=lambda c: (-omega[c], -size[c], c))
        if ch:
            heavy[v] = ch[0]
        if len(ch) > 1:
            light[v] = ch[1]
        p = parent[v]
        if p >= 0:
            omega[p] += omega[v]
            size[p] += size[v]
    return BinarizedTree(np.asarray(parent, dtype=np.int64), np.asarray(t), np.asarray(lam),
                         np.asarray(gamma), np.asarray(delta), heavy, light, omega, post, n)


def lir_tree(inst: TreeInstance) -> RegressionResult:
    """Lipschitz isotonic regression toward the root of a tree."""
    bt = binarize(inst)
    s, stars, merged, rotations = K.tree_sweep(bt.post, bt.heavy, bt.light, bt.t, bt.lam,
                                               bt.gamma, bt.delta)
    n = inst.n
    s, stars = s[:n].copy(), stars[:n].copy()
    return RegressionResult(s, energy_of(inst.t, inst.lam, s), stars, root=inst.root,
                            stats={"merged_breakpoints": int(merged),
                                   "rotations": int(rotations), "dummies": bt.n_dummies})


# ------------------------------------------------------------------ unimodal

@dataclass
class Snapshot:
    """A light subtree's windowed derivative, kept after its Act is merged away."""

    xs: np.ndarray  # raw vertices, in Act order
    ys: np.ndarray
    mu_minus: float
    mu_plus: float
    energy_c: tuple
    pwl: PwlMonotone = field(repr=False, default=None)

    @classmethod
    def of(cls, act: Act) -> "Snapshot":
        xs, ys = act.vertex_arrays()
        return cls(xs.copy(), ys.copy(), act.mu_minus, act.mu_plus, act.energy_c, act.extract())

    def build(self) -> Act:
        return Act.from_vertices(self.xs, self.ys, self.mu_minus, self.mu_plus, self.energy_c)

    def __len__(self) -> int:
        return self.xs.size


def _honorary_root(inst: TreeInstance) -> int:
    """Smallest-id vertex with at most one neighbour."""
    deg = np.bincount(inst.parent[inst.parent >= 0], minlength=inst.n) + (inst.parent >= 0)
    return int(np.flatnonzero(deg <= 1)[0])


def _state(acts) -> list:
    return [(a.extract(), a._P.copy()) for a in acts]


def _drift(before, after) -> float:
    """Largest change of any tracked function or energy coefficient.

    Functions are compared by value on the union of their breakpoints, so
    a redundant duplicate vertex that moved along a straight piece does
    not count as drift.
    """
    worst = 0.0
    for (f0, p0), (f1, p1) in zip(before, after):
        grid = np.union1d(f0.xs, f1.xs)
        if grid.size:
            gap = np.abs(evaluate(f0, grid) - evaluate(f1, grid))
            worst = max(worst, float(np.max(gap)))
        worst = max(worst, abs(f0.mu_minus - f1.mu_minus), abs(f0.mu_plus - f1.mu_plus),
                    float(np.max(np.abs(p0 - p1))))
    return worst


def _sweep_acts(bt: BinarizedTree, records=None, snaps=None) -> Act:
    """Rooted sweep with one Python-level Act per live subtree.

    Returns the root's Act after merging its children, before its own term.
    Fills ``records`` with each vertex's update record and ``snaps`` with
    every light child's function at the moment it is merged.
    """
    acts = [None] * bt.n
    for v in bt.post:
        h, l = bt.heavy[v], bt.light[v]
        act = acts[h] if h >= 0 else Act()
        if l >= 0:
            snap = Snapshot.of(acts[l])
            if snaps is not None:
                snaps[int(l)] = snap
            act.merge_add(snap.pwl, snap.energy_c)
            acts[l] = None
        if v != bt.root:
            _, rec = update(act, bt.t[v], bt.gamma[v], bt.delta[v], bt.lam[v])
            if records is not None:
                records[v] = rec
        acts[v] = act
        if h >= 0:
            acts[h] = None
    return acts[bt.root]


def root_derivative(inst: TreeInstance) -> PwlMonotone:
    """Derivative of the optimal energy as a function of the root's value."""
    bt = binarize(inst)
    act = _sweep_acts(bt)
    root = bt.root
    K.shear(act._F, act._G, act._S, act._P, bt.t[root], bt.lam[root])
    if len(act) == 0:
        act.insert(bt.t[root], 0.0)
    return act.extract()


class _Traversal:
    """Moves the peak through a binarized tree rooted at a leaf.

    At the current vertex v it holds the tree set S for everything above v
    (already windowed by v's parent edge) and Acts for v's heavy and light
    children. Going down an edge pushes v's other parts into S; going back
    up pops them again.
    """

    def __init__(self, bt: BinarizedTree):
        self.bt = bt
        self.records = [None] * bt.n
        self.snaps: dict[int, Snapshot] = {}
        self.width = 0
        self._prepare()

    def _prepare(self) -> None:
        bt = self.bt
        root_act = _sweep_acts(bt, self.records, self.snaps)
        self.S = TreeSet()
        self.H = root_act if bt.heavy[bt.root] >= 0 else None
        self.L = None

    def _tracked(self) -> list:
        return [a for a in [self.H, self.L] + self.S.members if a is not None]

    def _parts(self) -> list:
        return [a for a in (self.H, self.L) if a is not None and len(a)]

    def xi(self, v: int) -> tuple[float, float]:
        bt = self.bt
        ts = TreeSet(self.S.members + self._parts())
        self.width = max(self.width, len(ts))
        return ts.peak(bt.t[v], bt.lam[v])

    def down(self, v: int, c: int):
        bt, S = self.bt, self.S
        saved = (self.H, self.L)
        if c == bt.heavy[v]:
            l = bt.light[v]
            if l >= 0:
                snap = self.snaps[int(l)]
                S.merge(snap.pwl, snap.energy_c)
            X = self.H
        else:
            S.include(self.H)
            X = self.L
        self.width = max(self.width, len(S))
        S.update(bt.t[v], bt.gamma[c], bt.delta[c], bt.lam[v])
        unupdate(X, self.records[c])
        lc = bt.light[c]
        if lc >= 0:
            snap = self.snaps[int(lc)]
            X.unmerge_subtract(snap.pwl, snap.energy_c)
            self.L = snap.build()
        else:
            self.L = None
        self.H = X if bt.heavy[c] >= 0 else None
        return (v, c, saved, X)

    def up(self, frame) -> None:
        bt, S = self.bt, self.S
        v, c, saved, X = frame
        lc = bt.light[c]
        if lc >= 0:
            snap = self.snaps[int(lc)]
            X.merge_add(snap.pwl, snap.energy_c)
        _, self.records[c] = update(X, bt.t[c], bt.gamma[c], bt.delta[c], bt.lam[c])
        S.unupdate()
        if c == bt.heavy[v]:
            l = bt.light[v]
            if l >= 0:
                snap = self.snaps[int(l)]
                S.unmerge(snap.pwl, snap.energy_c)
        else:
            S.uninclude()
        self.H, self.L = saved

    def run(self) -> tuple[np.ndarray, np.ndarray]:
        """Peak value and energy for every original vertex as the peak."""
        bt = self.bt
        n = bt.n_orig
        xi = np.full(n, math.inf)
        peak = np.full(n, math.nan)
        stack = [("visit", bt.root)]
        while stack:
            item = stack.pop()
            if item[0] == "visit":
                v = item[1]
                if v < n:
                    peak[v], xi[v] = self.xi(v)
                for c in (bt.light[v], bt.heavy[v]):
                    if c >= 0:
                        stack.append(("down", v, int(c)))
            elif item[0] == "down":
                _, v, c = item
                stack.append(("up", self.down(v, c)))
                stack.append(("visit", c))
            else:
                self.up(item[1])
        return peak, xi


def lur_tree(inst: TreeInstance) -> RegressionResult:
    """Lipschitz unimodal regression on a tree; the peak vertex is chosen freely.

    ``inst.parent`` only supplies the edges. Ties between peaks go to the
    smallest vertex id.
    """
    n = inst.n
    if n == 1:
        return RegressionResult(inst.t.copy(), 0.0, inst.t.copy(), root=0,
                                stats={"xi": np.zeros(1), "max_width": 1})
    r_hat = _honorary_root(inst)
    bt = binarize(inst.rerooted(r_hat))
    walk = _Traversal(bt)
    before = _state(walk._tracked())
    peak, xi = walk.run()
    drift = _drift(before, _state(walk._tracked()))
    r = pick_root(xi)
    res = lir_tree(inst.rerooted(r))
    res.root = r
    res.stats.update({
        "xi": xi, "peak": peak, "honorary_root": r_hat, "max_width": walk.width,
        "snapshot_breakpoints": sum(len(s) for s in walk.snaps.values()),
        "drift": drift,
    })
    return res
