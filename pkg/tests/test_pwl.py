import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lipreg.pwl import (AffineMap2, PwlMonotone, add, apply_affine, evaluate, evaluate_inverse,
                        integrate_prefix)

F04 = PwlMonotone([0, 2], [0, 4], 1, 3)


@pytest.mark.parametrize("a,expected", [(1, 2), (-1, -1), (3, 7)])
def test_evaluate_examples(a, expected):
    assert evaluate(F04, a) == expected


def test_evaluate_inverse_examples():
    f = PwlMonotone([0, 2], [0, 4], 1, 1)
    assert evaluate_inverse(f, 2) == 1
    assert evaluate_inverse(PwlMonotone([1, 1.5], [0, 0], 2, 2), 0) == 1
    assert evaluate_inverse(f, -3) == -3


def test_evaluate_inverse_without_preimage():
    f = PwlMonotone([0, 2], [0, 4], 0, 1)
    with pytest.raises(ValueError):
        evaluate_inverse(f, -1)
    with pytest.raises(ValueError):
        evaluate_inverse(PwlMonotone([0, 2], [0, 4], 1, 0), 5)


def test_integrate_prefix_examples():
    assert integrate_prefix(PwlMonotone([0, 2], [0, 2], 1, 1), 2, 5) == pytest.approx(7)
    assert integrate_prefix(F04, 0.0, 3.25) == 3.25
    assert integrate_prefix(PwlMonotone([1, 1.5], [0, 0], 0, 2), 2.5, 0) == pytest.approx(1)


def test_apply_affine_examples():
    g = apply_affine(PwlMonotone(), AffineMap2(1, 0, 2, 1, 0, -2))
    for x in (-3.0, 0.0, 1.0, 4.5):
        assert evaluate(g, x) == pytest.approx(2 * x - 2)
    f = PwlMonotone([0, 1], [0, 1], 1, 1)
    assert apply_affine(f, AffineMap2()).allclose(f)
    moved = apply_affine(f, AffineMap2.translation(1, 0))
    assert np.allclose(moved.xs, [1, 2]) and np.allclose(moved.ys, [0, 1])


def test_apply_affine_rejects_folding_map():
    with pytest.raises(ValueError):
        apply_affine(PwlMonotone([0, 1], [0, 1], 1, 1), AffineMap2(-1, 0, 0, 1))


def test_add_examples():
    s = add(PwlMonotone([1], [1], 1, 1), PwlMonotone([2], [2], 1, 1))
    assert np.allclose(s.xs, [1, 2]) and np.allclose(s.ys, [2, 4])
    assert add(F04, PwlMonotone()).allclose(F04)
    s = add(PwlMonotone([0], [0], 1, 1), PwlMonotone([0], [5], 2, 2))
    assert np.allclose(s.xs, [0]) and np.allclose(s.ys, [5]) and s.mu_minus == 3 == s.mu_plus


def test_validation():
    with pytest.raises(ValueError):
        PwlMonotone([0, 0], [0, 1])
    with pytest.raises(ValueError):
        PwlMonotone([0, 1], [1, 0])
    with pytest.raises(ValueError):
        PwlMonotone([0], [0], -1, 1)
    with pytest.raises(ValueError):
        AffineMap2(1, 1, 1, 1)


def test_json_round_trip():
    g = PwlMonotone.from_json(F04.to_json())
    assert g.allclose(F04, atol=0, rtol=0)
    assert F04.to_dict() == {"mu_minus": 1, "mu_plus": 3, "vertices": [[0.0, 0.0], [2.0, 4.0]]}


def test_affine_compose_and_inverse():
    a = AffineMap2(2, 0, 1, 3, 1, -1)
    b = AffineMap2(1, 0.5, 0, 1, 0, 2)
    x, y = 0.3, -1.7
    assert np.allclose(a.compose(b)(x, y), a(*b(x, y)))
    assert np.allclose(a.inverse()(*a(x, y)), (x, y))


# ------------------------------------------------------------ properties

@st.composite
def pwls(draw, n_max=12):
    n = draw(st.integers(1, n_max))
    dx = draw(st.lists(st.floats(0.01, 5), min_size=n, max_size=n))
    dy = draw(st.lists(st.floats(0, 5), min_size=n, max_size=n))
    x0 = draw(st.floats(-10, 10))
    y0 = draw(st.floats(-10, 10))
    xs = x0 + np.cumsum(dx)
    ys = y0 + np.cumsum(dy)
    mu = draw(st.tuples(st.floats(0.01, 4), st.floats(0.01, 4)))
    return PwlMonotone(xs, ys, *mu)


probes = st.lists(st.floats(-30, 30), min_size=1, max_size=20)


@given(pwls(), pwls(), probes)
def test_add_is_pointwise(f, g, xs):
    s = add(f, g)
    for x in xs:
        assert evaluate(s, x) == pytest.approx(evaluate(f, x) + evaluate(g, x), abs=1e-9, rel=1e-9)


@given(pwls(), st.floats(-20, 20), st.floats(0.2, 3), st.floats(0, 3), st.floats(0.2, 3))
def test_affine_graph_image(f, c1, m11, m21, m22):
    psi = AffineMap2(m11, 0.0, m21, m22, c1, 1.0)
    g = apply_affine(f, psi)
    for x, y in zip(f.xs, f.ys):
        u, v = psi(x, y)
        assert evaluate(g, u) == pytest.approx(v, abs=1e-9, rel=1e-9)


@given(pwls(), st.floats(-40, 40))
def test_inverse_round_trip(f, y):
    if f.ys[0] < y < f.ys[-1] and np.all(np.diff(f.ys) > 0):
        assert evaluate(f, evaluate_inverse(f, y)) == pytest.approx(y, abs=1e-9)
    elif y <= f.ys[0] or y >= f.ys[-1]:
        assert evaluate(f, evaluate_inverse(f, y)) == pytest.approx(y, abs=1e-9)


@given(pwls(), st.floats(-20, 20), st.floats(-20, 20), st.floats(-5, 5))
def test_integral_additivity(f, a, m, e):
    whole = integrate_prefix(f, a, e)
    split = integrate_prefix(f, m, e) + (integrate_prefix(f, a) - integrate_prefix(f, m))
    assert whole == pytest.approx(split, abs=1e-7, rel=1e-9)


def test_evaluate_inverse_plateau_is_leftmost():
    f = PwlMonotone([0, 1, 3], [0, 2, 2], 1, 1)
    assert evaluate_inverse(f, 2) == 1
    assert math.isclose(evaluate_inverse(f, 3), 4)
