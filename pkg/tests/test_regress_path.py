import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lipreg.act import Act
from lipreg.instance import PathInstance
from lipreg.oracle import brute_lur, dp_energy_functions, dp_lir_path, feasible, pava
from lipreg.regress_path import backsolve_step, final_derivative, lir_path, lur_path, unupdate, update

from conftest import random_path


# -------------------------------------------------------------- update

def test_update_first_step():
    act = Act()
    s, _ = update(act, 1.0, 0.5, 0.0, 1.0)
    assert s == 1.0
    f = act.extract()
    assert list(f.xs) == [1.0, 1.5] and list(f.ys) == [0.0, 0.0]
    assert f.mu_minus == 2 and f.mu_plus == 2


def test_update_second_step():
    act = Act()
    update(act, 1.0, 0.5)
    s, _ = update(act, 0.0, 0.5)
    assert s == pytest.approx(0.5)


def test_update_zero_window_returns_root():
    act = Act()
    update(act, 2.0, 0.0)
    s, _ = update(act, 0.0, 0.0)
    assert s == pytest.approx(1.0)
    f = act.extract()
    assert f.mu_minus == 4 and f.mu_plus == 4


def test_update_rejects_bad_params():
    with pytest.raises(ValueError):
        update(Act(), 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        update(Act(), 0.0, 1.0, 0.0, -1.0)


def test_update_keeps_derivative_monotone(rng):
    for _ in range(30):
        inst = random_path(rng, 60)
        act = Act()
        lam_min = math.inf
        for i in range(inst.n - 1):
            update(act, inst.t[i], inst.gamma[i], inst.delta[i], inst.lam[i])
            lam_min = min(lam_min, inst.lam[i])
            f = act.extract()
            assert np.all(np.diff(f.xs) >= 0) and np.all(np.diff(f.ys) >= -1e-9)
            assert f.mu_minus >= 2 * lam_min - 1e-12
            if math.isfinite(inst.gamma[i]):
                assert f.mu_plus >= 2 * lam_min - 1e-12


# ------------------------------------------------------------ unupdate

@pytest.mark.parametrize("gamma,delta", [(0.5, 0.0), (math.inf, 0.0), (0.0, 0.0), (2.0, -1.0)])
def test_update_unupdate_round_trip(rng, gamma, delta):
    for _ in range(10):
        n = int(rng.integers(1, 256))
        act = Act()
        for t in rng.normal(0, 4, n):
            update(act, t, 1.0, -0.3, float(rng.uniform(0.5, 2)))
        before, params = act.extract(), act._P.copy()
        _, rec = update(act, float(rng.normal()), gamma, delta, 1.3)
        unupdate(act, rec)
        assert act.extract().allclose(before, atol=1e-9)
        assert np.allclose(act._P, params, atol=1e-9)


def test_double_unupdate_raises():
    act = Act()
    update(act, 0.0, 1.0)
    _, rec = update(act, 1.0, 1.0)
    unupdate(act, rec)
    with pytest.raises(ValueError):
        unupdate(act, rec)


def test_alternating_updates_keep_balance(rng):
    act = Act()
    for t in rng.normal(size=256):
        update(act, t, 0.7)
    n = len(act)
    for _ in range(100):
        _, rec = update(act, float(rng.normal()), 0.7)
        unupdate(act, rec)
        assert act.height <= 2 * math.log2(n + 2)
    act.check()


# ------------------------------------------------------------ backsolve

def test_backsolve_examples():
    assert backsolve_step(1.0, 0.7, 1.0, 0.0) == 0.7
    assert backsolve_step(0.5, 1.0, 0.5, 0.0) == 0.5
    assert backsolve_step(0.0, -3.0, 1.0, 0.0) == -1.0
    assert backsolve_step(0.0, 5.0, 1.0, -2.0) == 2.0


# ------------------------------------------------------------ lir_path

def test_lir_single_vertex():
    for gamma in (0.0, 1.0, math.inf):
        res = lir_path(PathInstance([5.0], None, gamma))
        assert list(res.s) == [5.0] and res.energy == 0


def test_lir_two_vertices():
    res = lir_path(PathInstance([0.0, 10.0], None, 1.0))
    assert res.s == pytest.approx([4.5, 5.5], abs=1e-12)
    assert res.energy == pytest.approx(40.5)


def test_lir_isotonic_example():
    res = lir_path(PathInstance([3.0, 1.0, 2.0], None, math.inf))
    assert res.s == pytest.approx([2, 2, 2], abs=1e-12)
    assert res.energy == pytest.approx(2.0)


def test_lir_worked_backsolve():
    res = lir_path(PathInstance([1.0, 0.0], None, 0.5))
    assert res.stars == pytest.approx([1.0, 0.5])
    assert res.s == pytest.approx([0.5, 0.5])


def test_lir_matches_dp(rng):
    worst = 0.0
    for _ in range(150):
        inst = random_path(rng, 200)
        a, b = lir_path(inst), dp_lir_path(inst)
        worst = max(worst, float(np.max(np.abs(a.s - b.s))))
        assert a.energy == pytest.approx(b.energy, abs=1e-8, rel=1e-10)
    assert worst <= 1e-6


def test_lir_integer_collisions(rng):
    """Integer data makes s* land on existing breakpoints."""
    for _ in range(100):
        n = int(rng.integers(2, 40))
        inst = PathInstance(rng.integers(-3, 4, n).astype(float), None,
                            float(rng.integers(0, 3)), -float(rng.integers(0, 2)))
        assert np.allclose(lir_path(inst).s, dp_lir_path(inst).s, atol=1e-9)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60),
       st.floats(0, 5), st.floats(-2, 0))
def test_lir_feasible(t, gamma, delta):
    inst = PathInstance(t, None, gamma, delta)
    res = lir_path(inst)
    assert feasible(inst, res.s)
    assert res.energy == pytest.approx(float(np.sum((res.s - inst.t) ** 2)), rel=1e-9, abs=1e-12)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=60), st.floats(0, 3), st.floats(0, 3))
def test_lir_energy_monotone_in_gamma(t, g1, extra):
    tight = lir_path(PathInstance(t, None, g1)).energy
    loose = lir_path(PathInstance(t, None, g1 + extra)).energy
    free = lir_path(PathInstance(t, None, math.inf)).energy
    assert loose <= tight * (1 + 1e-9) + 1e-9
    assert free <= loose * (1 + 1e-9) + 1e-9


def test_lir_equals_pava(rng):
    for _ in range(100):
        n = int(rng.integers(1, 300))
        t = rng.normal(0, 5, n)
        lam = rng.uniform(0.1, 5, n)
        assert np.allclose(lir_path(PathInstance(t, lam, math.inf)).s, pava(t, lam), atol=1e-9)


def test_final_derivative_matches_dp(rng):
    for _ in range(20):
        inst = random_path(rng, 40)
        f = final_derivative(inst)
        e = dp_energy_functions(inst.as_tree())[-1]
        for x in rng.uniform(-15, 15, 10):
            y = np.interp(x, f.xs, f.ys) if f.xs[0] <= x <= f.xs[-1] else (
                f.ys[0] + f.mu_minus * (x - f.xs[0]) if x < f.xs[0] else
                f.ys[-1] + f.mu_plus * (x - f.xs[-1]))
            assert y == pytest.approx(e.derivative(x), abs=1e-7)


# ------------------------------------------------------------ lur_path

def test_lur_already_unimodal():
    res = lur_path(PathInstance([0.0, 1.0, 2.0], None, 10.0))
    assert res.root == 2
    assert res.s == pytest.approx([0, 1, 2], abs=1e-12) and res.energy == pytest.approx(0, abs=1e-12)


def test_lur_peak_example():
    res = lur_path(PathInstance([0.0, 2.0, 0.0], None, 1.0))
    assert res.root == 1
    assert res.s == pytest.approx([1 / 3, 4 / 3, 1 / 3], abs=1e-12)
    assert res.energy == pytest.approx(2 / 3)


def test_lur_single_vertex():
    res = lur_path(PathInstance([7.0]))
    assert list(res.s) == [7.0] and res.root == 0


def test_lur_matches_brute_force(rng):
    for _ in range(40):
        inst = random_path(rng, 40)
        a, b = lur_path(inst), brute_lur(inst)
        assert a.energy == pytest.approx(b.energy, abs=1e-8, rel=1e-9)
        assert np.allclose(a.s, b.s, atol=1e-6)
        assert a.root == b.root or a.energy == pytest.approx(b.energy, rel=1e-9)


def test_lur_peak_energies_match_rooted_runs(rng):
    inst = random_path(rng, 30, n_min=5)
    xi = lur_path(inst).stats["xi"]
    tree = inst.as_tree()
    for r in range(inst.n):
        assert xi[r] == pytest.approx(dp_lir_path_at(tree, r), abs=1e-8, rel=1e-9)


def dp_lir_path_at(tree, r):
    from lipreg.oracle import dp_lir_tree
    return dp_lir_tree(tree.rerooted(r)).energy
