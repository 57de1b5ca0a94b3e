"""Acceptance criteria 1-11, one PASS/FAIL line each.

Every test records its line before asserting, so the summary at the end of
the pytest run shows failures too.
"""

import math
import statistics
import time

import numpy as np
import pytest

from lipreg.act import Act
from lipreg.instance import PathInstance, TreeInstance
from lipreg.oracle import brute_lur, dp_lir_path, dp_lir_tree, pava
from lipreg.pwl import AffineMap2, PwlMonotone, add, apply_affine, evaluate, evaluate_inverse, integrate_prefix
from lipreg.regress_path import lir_path, lur_path, unupdate, update
from lipreg.regress_tree import lir_tree, lur_tree
from lipreg.treeset import TreeSet

import conftest
from conftest import random_binary_tree, random_path, random_tree


def report(k: int, ok: bool, detail: str, capsys=None) -> None:
    line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE[k] = line
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    assert ok, line


def test_c01_path_lir_oracle(capsys):
    rng = np.random.default_rng(1)
    ds = de = fast_time = 0.0
    t0 = time.perf_counter()
    for _ in range(1000):
        inst = random_path(rng, 200)
        a = time.perf_counter()
        res = lir_path(inst)
        fast_time += time.perf_counter() - a
        ref = dp_lir_path(inst)
        ds = max(ds, float(np.max(np.abs(res.s - ref.s))))
        de = max(de, abs(res.energy - ref.energy) / max(1.0, abs(ref.energy)))
    total = time.perf_counter() - t0
    report(1, ds <= 1e-6 and de <= 1e-8 and total < 30,
           f"max|ds|={ds:.2e} max rel|de|={de:.2e} solver {fast_time:.2f}s, with oracle {total:.1f}s", capsys)


def test_c02_pava(capsys):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(1, 501))
        t = rng.uniform(-10, 10, n)
        lam = None if rng.random() < 0.5 else rng.uniform(0.1, 10, n)
        s = lir_path(PathInstance(t, lam)).s
        worst = max(worst, float(np.max(np.abs(s - pava(t, lam)))))
    report(2, worst <= 1e-9, f"max|ds|={worst:.2e}", capsys)


def _compare_lur(fast, ref, ds, de, roots):
    ds = max(ds, float(np.max(np.abs(fast.s - ref.s))))
    de = max(de, abs(fast.energy - ref.energy) / max(1.0, abs(ref.energy)))
    return ds, de, roots + (fast.root != ref.root)


def test_c03_path_lur(capsys):
    rng = np.random.default_rng(3)
    ds = de = 0.0
    roots = 0
    for _ in range(300):
        inst = random_path(rng, 100)
        ds, de, roots = _compare_lur(lur_path(inst), brute_lur(inst), ds, de, roots)
    report(3, ds <= 1e-6 and de <= 1e-8 and roots == 0,
           f"max|ds|={ds:.2e} max rel|de|={de:.2e} root mismatches={roots}", capsys)


def test_c04_tree_lir(capsys):
    rng = np.random.default_rng(4)
    ds = de = 0.0
    dummies = 0
    for _ in range(300):
        inst = random_tree(rng, 200, max_degree=6)
        res, ref = lir_tree(inst), dp_lir_tree(inst)
        dummies += res.stats["dummies"]
        ds = max(ds, float(np.max(np.abs(res.s - ref.s))))
        de = max(de, abs(res.energy - ref.energy) / max(1.0, abs(ref.energy)))
    report(4, ds <= 1e-6 and de <= 1e-8,
           f"max|ds|={ds:.2e} max rel|de|={de:.2e} dummies used={dummies}", capsys)


def test_c05_tree_lur(capsys):
    rng = np.random.default_rng(5)
    ds = de = 0.0
    roots = 0
    for _ in range(100):
        inst = random_tree(rng, 100)
        ds, de, roots = _compare_lur(lur_tree(inst), brute_lur(inst), ds, de, roots)
    report(5, ds <= 1e-6 and de <= 1e-8 and roots == 0,
           f"max|ds|={ds:.2e} max rel|de|={de:.2e} root mismatches={roots}", capsys)


# ---------------------------------------------------------------- criterion 6

class _ModelRun:
    """One random operation sequence on an Act and a PwlMonotone in lockstep."""

    def __init__(self, rng):
        self.rng = rng
        self.act = Act(1.0, 1.0)
        self.act.insert(0.0, 0.0)
        self.model = PwlMonotone([0.0], [0.0], 1.0, 1.0)
        self.worst = 0.0

    def scale(self) -> float:
        m = self.model
        return max(1.0, float(np.max(np.abs(m.xs))), float(np.max(np.abs(m.ys))))

    def _set(self, xs, ys, mu_minus=None, mu_plus=None):
        m = self.model
        self.model = PwlMonotone(xs, ys, m.mu_minus if mu_minus is None else mu_minus,
                                 m.mu_plus if mu_plus is None else mu_plus)

    def insert(self):
        m, rng = self.model, self.rng
        j = int(rng.integers(-1, len(m)))
        u, dy = rng.uniform(0.05, 0.95), rng.uniform(0, 1)
        if j == -1:
            x = m.xs[0] - u
            y = m.ys[0] - dy * m.mu_minus * u
        elif j == len(m) - 1:
            x = m.xs[-1] + u
            y = m.ys[-1] + dy * m.mu_plus * u
        else:
            x = m.xs[j] + u * (m.xs[j + 1] - m.xs[j])
            y = m.ys[j] + dy * (m.ys[j + 1] - m.ys[j])
            if not m.xs[j] < x < m.xs[j + 1]:
                return
        self.act.insert(x, y)
        k = int(np.searchsorted(m.xs, x))
        self._set(np.insert(m.xs, k, x), np.insert(m.ys, k, y))

    def delete(self):
        m = self.model
        if len(m) < 2:
            return
        j = int(self.rng.integers(len(m)))
        self.act.delete(m.xs[j])
        self._set(np.delete(m.xs, j), np.delete(m.ys, j))

    def affine(self):
        r = self.rng
        psi = AffineMap2(r.uniform(0.8, 1.25), 0.0, r.uniform(0, 0.5), r.uniform(0.8, 1.25),
                         r.uniform(-2, 2), r.uniform(-2, 2))
        self.act.affine(psi)
        self.model = apply_affine(self.model, psi)

    def interval(self):
        m, r = self.model, self.rng
        j = int(r.integers(len(m)))
        cut = m.xs[0] - 1.0 if j == 0 else 0.5 * (m.xs[j - 1] + m.xs[j])
        dx = r.uniform(0, 2)
        if r.random() < 0.5:
            self.act.interval("x", AffineMap2.translation(dx), cut, math.inf)
            self._set(np.where(m.xs >= cut, m.xs + dx, m.xs), m.ys)
        else:
            self.act.interval("x", AffineMap2.translation(-dx), -math.inf, cut)
            self._set(np.where(m.xs < cut, m.xs - dx, m.xs), m.ys)

    def merge(self):
        r, m = self.rng, self.model
        k = int(r.integers(1, 4))
        xs = np.sort(r.uniform(m.xs[0] - 2, m.xs[-1] + 2, k))
        ys = np.cumsum(r.uniform(0, 1, k)) - 1
        g = PwlMonotone(xs, ys, r.uniform(0, 1), r.uniform(0, 1))
        if np.intersect1d(xs, m.xs).size:
            return
        self.act.merge_add(g)
        self.model = add(m, g)

    def queries(self):
        m, r, act = self.model, self.rng, self.act
        tol = 1e-9 * self.scale()
        e0 = act.energy_at_first()
        for x in r.uniform(m.xs[0] - 1, m.xs[-1] + 1, 2):
            self.worst = max(self.worst, abs(act.evaluate(x) - evaluate(m, x)) / self.scale())
            assert abs(act.evaluate(x) - evaluate(m, x)) <= tol
            span = max(1.0, abs(x - m.xs[0]))
            assert abs(act.integrate(x) - integrate_prefix(m, x, e0)) <= tol * self.scale() * span
        y = r.uniform(m.ys[0] - 1, m.ys[-1] + 1)
        x = act.evaluate_inverse(y)
        assert abs(evaluate(m, x) - y) <= tol
        assert abs(x - evaluate_inverse(m, y)) <= 1e-6 * self.scale() or \
            abs(evaluate(m, evaluate_inverse(m, y)) - y) <= tol

    def step(self):
        op = self.rng.choice([self.insert, self.insert, self.delete, self.affine, self.interval, self.merge])
        op()
        self.queries()
        self.act.check(aug_tol=1e-9 * self.scale())


def test_c06_act_model(capsys):
    rng = np.random.default_rng(6)
    worst = 0.0
    sizes = []
    for _ in range(200):
        run = _ModelRun(rng)
        for k in range(1000):
            run.step()
            if k % 100 == 99:
                assert run.act.extract().allclose(run.model, atol=1e-9 * run.scale(), rtol=1e-9)
        worst = max(worst, run.worst)
        sizes.append(len(run.act))
    report(6, True, f"200 x 1000 ops, worst scaled evaluate error {worst:.1e}, "
           f"final sizes up to {max(sizes)}", capsys)


# ---------------------------------------------------------------- criterion 7

def _random_act(rng, n):
    xs = np.cumsum(rng.uniform(0.05, 1, n))
    ys = np.cumsum(rng.uniform(0, 1, n))
    return Act.from_pwl(PwlMonotone(xs - xs.mean(), ys - ys.mean(), 1.0, 1.0), tuple(rng.uniform(0, 1, 3)))


def _gap(act, f, p):
    g = act.extract()
    if g.xs.shape != f.xs.shape:
        return math.inf
    return max(float(np.max(np.abs(g.xs - f.xs))), float(np.max(np.abs(g.ys - f.ys))),
               float(np.max(np.abs(act._P - p))))


def test_c07_reversibility(capsys):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        act = _random_act(rng, int(rng.integers(1, 256)))
        f, p = act.extract(), act._P.copy()
        recs = []
        for t in rng.normal(size=5):
            g, d = [(0.5, 0.0), (math.inf, 0.0), (0.0, 0.0), (2.0, -1.0)][int(rng.integers(4))]
            recs.append(update(act, t, g, d, float(rng.uniform(0.5, 2)))[1])
        for rec in reversed(recs):
            unupdate(act, rec)
        worst = max(worst, _gap(act, f, p))

        g_pwl = PwlMonotone(np.sort(rng.uniform(-5, 5, 4)), np.sort(rng.uniform(-1, 1, 4)), 0.3, 0.3)
        act.merge_add(g_pwl, (0.1, 0.2, 0.3))
        act.unmerge_subtract(g_pwl, (0.1, 0.2, 0.3))
        worst = max(worst, _gap(act, f, p))

        other = _random_act(rng, 20)
        ts = TreeSet([act])
        ts.include(other)
        ts.update(0.3, 1.0, -0.2, 1.0)
        ts.unupdate()
        assert ts.uninclude() is other
        worst = max(worst, _gap(act, f, p))
    drift = 0.0
    for _ in range(50):
        inst = random_tree(rng, 200, n_min=2)
        drift = max(drift, lur_tree(inst).stats["drift"])
    report(7, worst <= 1e-9 and drift <= 1e-6,
           f"round trips max gap {worst:.1e}; lur_tree traversal drift {drift:.1e}", capsys)


# ---------------------------------------------------------------- criterion 8

def test_c08_path_scaling(capsys):
    def inst(n):
        return PathInstance(np.cumsum(np.random.default_rng(n).normal(size=n)), None, 0.5, -0.1)

    lir_path(inst(64))
    times, max_rot_ok, worst_c = {}, True, 0.0
    for e in range(14, 21):
        n = 2 ** e
        p = inst(n)
        runs = []
        for _ in range(3):
            t0 = time.perf_counter()
            res = lir_path(p)
            runs.append(time.perf_counter() - t0)
        times[e] = statistics.median(runs)
        c = res.stats["max_rotations_per_update"] / math.log2(n)
        worst_c = max(worst_c, c)
        max_rot_ok &= c <= 40
    ratio = statistics.median(times[e + 1] / times[e] for e in range(14, 20))
    ok = times[20] < 5.0 and ratio <= 2.6 and max_rot_ok
    report(8, ok, f"n=2^20 in {times[20]:.2f}s, median doubling ratio {ratio:.2f}, "
           f"max rotations per update {worst_c:.2f} log2 n", capsys)


# ---------------------------------------------------------------- criterion 9

def test_c09_merge_budget(capsys):
    rng = np.random.default_rng(9)
    worst = 0.0
    for e in range(10, 19):
        n = 2 ** e
        inst = TreeInstance(rng.normal(size=n), random_binary_tree(rng, n), None, 0.5, -0.1)
        merged = lir_tree(inst).stats["merged_breakpoints"]
        worst = max(worst, merged / (n * math.log2(n)))
    report(9, worst <= 3, f"max merged breakpoints {worst:.3f} n log2 n (budget 3)", capsys)


# --------------------------------------------------------------- criterion 10

def test_c10_treeset_width(capsys):
    rng = np.random.default_rng(10)
    worst, worst_n = 0, 0
    instances = [random_tree(rng, 300, n_min=2) for _ in range(60)]
    for e in range(2, 11):
        n = 2 ** e
        instances.append(TreeInstance(rng.normal(size=n), random_binary_tree(rng, n), None, 0.5, -0.1))
        instances.append(TreeInstance(rng.normal(size=n - 1), [(i - 1) // 2 for i in range(n - 1)], None, 1.0))
    slack = math.inf
    for inst in instances:
        w = lur_tree(inst).stats["max_width"]
        bound = math.ceil(math.log2(inst.n)) + 3
        slack = min(slack, bound - w)
        if w > worst:
            worst, worst_n = w, inst.n
    report(10, slack >= 0, f"{len(instances)} runs, widest set {worst} members (n={worst_n}), "
           f"min slack to ceil(log2 n)+3 is {slack}", capsys)


# --------------------------------------------------------------- criterion 11

def test_c11_breakpoint_count(capsys):
    rng = np.random.default_rng(11)
    bad = 0
    checked = 0
    for _ in range(50):
        n = int(rng.integers(2, 300))
        gamma = float(rng.uniform(0.1, 3))
        delta = -float(rng.uniform(0, 1)) if rng.random() < 0.5 else 0.0
        act = Act()
        for i, t in enumerate(rng.normal(0, 3, n), start=1):
            update(act, t, gamma, delta, float(rng.uniform(0.5, 2)))
            checked += 1
            bad += len(act) != 2 * i
    report(11, bad == 0, f"{checked} updates, {bad} with a vertex count other than 2i "
           "(so F_(i+1) has 2(i+1)-2 breakpoints)", capsys)
