import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from controlkam.cost import pmp_shoot
from controlkam.errors import DomainError, InvalidInputError
from controlkam.example import (
    ExampleParams, adaptive_simpson, bound_floor, demo_params, discontinuity_demo, loop_integral,
    lower_bound, phase_portrait, reduced_hamiltonian,
)
from controlkam.systems import Lagrangian, shear_family


def test_kappa_closed_form():
    assert ExampleParams(3, -2.0).kappa == pytest.approx(1.0)
    k, p2 = 4, -0.7
    kap = ExampleParams(k, p2).kappa
    assert kap ** (2 * k - 2) * p2 ** 2 / 2 + p2 == pytest.approx(0.0, abs=1e-12)


def test_example_params_validation():
    with pytest.raises(InvalidInputError):
        ExampleParams(1, -1.0)
    with pytest.raises(InvalidInputError):
        ExampleParams(3, 0.0)
    with pytest.raises(DomainError):
        ExampleParams(3, -1e-3)  # kappa = 2000**(1/4) > 2


def test_reduced_hamiltonian_matches_full_one():
    from controlkam.systems import eval_hamiltonian

    rng = np.random.default_rng(0)
    x = np.column_stack([rng.uniform(-1.5, 1.5, 50), np.zeros(50)])
    p = np.column_stack([rng.normal(size=50), -rng.uniform(0.1, 3, 50)])
    for k in (2, 3):
        full = eval_hamiltonian(shear_family(k), Lagrangian.pure_quadratic(2, 2), x, p)
        np.testing.assert_allclose(reduced_hamiltonian(k, p[:, 1], x[:, 0], p[:, 0]), full, rtol=1e-13)


def test_zero_level_meets_axis_at_roots():
    k, p2 = 3, -2.0
    kap = ExampleParams(k, p2).kappa
    res = 512
    curves = phase_portrait(k, p2, levels=[0.0], resolution=res)[0.0]
    crossings = []
    for c in curves:
        s = np.sign(c[:, 1])
        for i in np.flatnonzero(s[:-1] * s[1:] < 0):
            a, b = c[i], c[i + 1]
            crossings.append(a[0] - a[1] * (b[0] - a[0]) / (b[1] - a[1]))
        crossings += list(c[c[:, 1] == 0, 0])
    step = 4.0 / (res - 1)
    for x in crossings:
        assert min(abs(x), abs(x - kap), abs(x + kap)) <= step
    for root in (-kap, kap):
        assert min(abs(np.array(crossings) - root)) <= step


def test_portrait_is_symmetric_in_p1():
    curves = phase_portrait(3, -2.0, levels=[-0.2, 0.0, 0.5], resolution=128)
    for level, polys in curves.items():
        pts = np.vstack(polys)
        mirrored = pts * [1, -1]
        d = np.min(np.linalg.norm(pts[:, None, :] - mirrored[None, :, :], axis=2), axis=1)
        assert np.max(d) <= 4.0 / 127
        H = reduced_hamiltonian(3, -2.0, pts[:, 0], pts[:, 1])
        assert np.max(np.abs(H - level)) <= 0.1


def test_portrait_needs_resolution():
    with pytest.raises(InvalidInputError):
        phase_portrait(3, -2.0, resolution=32)


def test_adaptive_simpson_against_quad():
    for f, a, b in [(np.sin, 0, np.pi), (lambda x: np.sqrt(max(x - x ** 6, 0)), 0, 1), (np.exp, -1, 2)]:
        assert adaptive_simpson(f, a, b) == pytest.approx(quad(f, a, b, epsabs=1e-13)[0], abs=1e-9)


def test_loop_integral_k3():
    assert loop_integral(3) == pytest.approx(np.pi / 8, abs=1e-10)


@given(p2=st.floats(-50, -1e-3))
def test_area_term_k3_is_pi_over_four(p2):
    area, escape, both = lower_bound(3, p2)
    assert area == pytest.approx(np.pi / 4, abs=1e-9)
    assert both >= 0.5


def test_escape_term_k3():
    assert lower_bound(3, -2.0)[1] == pytest.approx(0.5)


def test_k2_bound_degenerates():
    a1 = lower_bound(2, -1.0)[0]
    a4 = lower_bound(2, -4.0)[0]
    assert a4 / a1 == pytest.approx(0.5, rel=1e-12)
    assert lower_bound(2, -1e8)[2] < 1e-3
    assert bound_floor(2) == 0.0


@pytest.mark.parametrize("k", [3, 4, 5])
def test_bound_floor_is_the_minimum_over_p2(k):
    p2 = -np.exp(np.linspace(-12, 12, 801))
    dense = min(lower_bound(k, q)[2] for q in p2)
    floor = bound_floor(k)
    assert floor <= dense + 1e-12
    assert floor >= dense - 1e-2
    if k == 3:
        assert floor == pytest.approx(np.pi / 4, abs=1e-9)


def test_lower_bound_input_checks():
    with pytest.raises(InvalidInputError):
        lower_bound(1, -1.0)
    with pytest.raises(InvalidInputError):
        lower_bound(3, 1.0)


@pytest.mark.parametrize("k", [2, 3])
def test_hamiltonian_nonnegative_on_returning_arcs(k):
    rng = np.random.default_rng(k)
    system, lag = shear_family(k), Lagrangian.pure_quadratic(2, 2)
    returns = 0
    for _ in range(6):
        w = rng.uniform(-0.5, 0.5)
        p0 = np.array([rng.uniform(-1.5, 1.5), -rng.uniform(0.2, 3)])
        try:
            arc = pmp_shoot(system, lag, [0.0, w], p0, 3.0, steps=3000)
        except DomainError:
            continue
        assert np.max(np.abs(arc.covectors[:, 1] - p0[1])) <= 1e-10
        x1 = arc.states[:, 0]
        hits = np.flatnonzero(np.sign(x1[1:-1]) * np.sign(x1[2:]) < 0) + 1
        for i in hits:
            returns += 1
            assert arc.hamiltonian[i] >= -1e-8
            assert arc.hamiltonian[i] == pytest.approx(0.5 * p0[0] ** 2, abs=1e-8)
    assert returns > 0


def test_demo_zero_gap_costs_nothing():
    rows = discontinuity_demo(3, [0.0])
    k, delta, cost, floor, res = rows[0]
    assert (k, delta, cost) == (3, 0.0, 0.0)
    assert floor == pytest.approx(np.pi / 4)


def test_demo_input_checks():
    with pytest.raises(InvalidInputError):
        discontinuity_demo(3, [1e-3], demo_params(restarts=8))
    with pytest.raises(InvalidInputError):
        discontinuity_demo(3, [-1e-3])
    with pytest.raises(DomainError):
        discontinuity_demo(3, [2.0])
