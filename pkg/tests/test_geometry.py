from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm
from scipy.optimize import linprog

from controlkam.errors import DomainError, IndeterminateExpansionError, InvalidInputError
from controlkam.geometry import (
    ControlSchedule, bracket_field, bracket_words, chow_control, control_flow, exponent_feasible,
    k_generating_check, lie_bracket, pullback_fields, pulled_back_flow, rescale_control,
    verify_bracket_expansion,
)
from controlkam.systems import (
    ControlAffineSystem, StateSpace, VectorField, heisenberg_like_torus, shear_family, state_symbols,
)

CATALOG_FIELDS = [
    VectorField([1, 0]), VectorField([0, "x1**2"]), VectorField(["sin(x2)", "x1*x2"]),
    VectorField(["cos(x1) + x2**2", 3]), VectorField(["x1**3 - x2", "sin(x1)*cos(x2)"]),
]
point = arrays(float, 2, elements=st.floats(-1.5, 1.5))


def sym_bracket(X, Y):
    """Independent oracle: (DY)X - (DX)Y computed directly with sympy."""
    xs = sp.Matrix(state_symbols(2))
    Xm, Ym = sp.Matrix(X.exprs), sp.Matrix(Y.exprs)
    return Ym.jacobian(xs) * Xm - Xm.jacobian(xs) * Ym


def test_bracket_of_shear_fields():
    X1, X2 = VectorField([1, 0]), VectorField([0, "x1**2"])
    np.testing.assert_allclose(lie_bracket(X1, X2, [1.0, 0.0]), [0.0, 2.0])
    oracle = sym_bracket(X1, X2).subs({state_symbols(2)[0]: 1, state_symbols(2)[1]: 0})
    np.testing.assert_allclose(lie_bracket(X1, X2, [1.0, 0.0]), np.array(oracle, dtype=float).ravel())


@given(pt=point, i=st.integers(0, 4))
def test_self_bracket_vanishes(pt, i):
    X = CATALOG_FIELDS[i]
    assert np.all(lie_bracket(X, X, pt) == 0)


def test_constant_fields_commute():
    assert np.all(lie_bracket(VectorField([1, 2]), VectorField([-3, 0.5]), [0.3, 0.1]) == 0)


@given(pt=point, i=st.integers(0, 4), j=st.integers(0, 4))
def test_bracket_antisymmetry(pt, i, j):
    X, Y = CATALOG_FIELDS[i], CATALOG_FIELDS[j]
    np.testing.assert_array_equal(lie_bracket(X, Y, pt), -lie_bracket(Y, X, pt))


@settings(max_examples=15)
@given(pt=point, ijk=st.tuples(st.integers(0, 4), st.integers(0, 4), st.integers(0, 4)))
def test_jacobi_identity(pt, ijk):
    X, Y, Z = (CATALOG_FIELDS[i] for i in ijk)
    total = (X.bracket(Y.bracket(Z))(pt) + Y.bracket(Z.bracket(X))(pt) + Z.bracket(X.bracket(Y))(pt))
    assert np.max(np.abs(total)) <= 1e-10


@given(pt=point, i=st.integers(0, 4), j=st.integers(0, 4))
def test_bracket_matches_sympy_oracle(pt, i, j):
    X, Y = CATALOG_FIELDS[i], CATALOG_FIELDS[j]
    x1, x2 = state_symbols(2)
    oracle = np.array(sym_bracket(X, Y).subs({x1: pt[0], x2: pt[1]}).evalf(), dtype=float).ravel()
    np.testing.assert_allclose(lie_bracket(X, Y, pt), oracle, rtol=1e-12, atol=1e-12)


def test_shear_fields_three_generating_at_origin():
    fields = shear_family(2).controls
    ok, words = k_generating_check(fields, [0.0, 0.0], 3)
    assert ok and [tuple(w) for w in words] == [(1,), (1, 1, 2)]
    assert k_generating_check(fields, [0.0, 0.0], 2) == (False, [])


def test_single_constant_field_never_generates():
    for k in range(1, 5):
        assert not k_generating_check([VectorField([1, 0])], [0.2, 0.2], k)[0]


def test_k_generating_rejects_zero_order():
    with pytest.raises(InvalidInputError):
        k_generating_check(shear_family(2).controls, [0.0, 0.0], 0)


def test_bracket_words_enumeration():
    assert list(bracket_words(2, 2)) == [(1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]


def test_bracket_field_word_convention():
    X1, X2 = shear_family(2).controls
    np.testing.assert_allclose(bracket_field([X1, X2], (1, 1, 2))([0.0, 0.0]), [0.0, 2.0])


# pullback fields

def test_pullback_zero_control_driftless_is_identity():
    system = heisenberg_like_torus()
    sched = ControlSchedule.uniform(np.zeros((3, 2)), 1.0)
    pts = np.array([[0.3, 1.0], [2.0, 4.0]])
    pb = pullback_fields(system, sched, [0.0, 0.4, 1.0], pts)
    for ti in range(3):
        for i, X in enumerate(system.controls):
            np.testing.assert_allclose(pb.at(ti, i), X(pts), atol=1e-14)


def test_pullback_at_time_zero_is_exact():
    system = shear_family(2)
    sched = ControlSchedule.uniform([[0.3, -0.2], [0.1, 0.4]], 1.0)
    pts = np.array([[0.2, 0.1]])
    pb = pullback_fields(system, sched, [0.0], pts)
    for i, X in enumerate(system.controls):
        np.testing.assert_array_equal(pb.at(0, i), X(pts))


def test_pullback_linear_drift_matches_matrix_exponential():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    b = np.array([0.5, -1.0])
    system = ControlAffineSystem(StateSpace.torus(50.0, 50.0),
                                 VectorField(["x2", "-2*x1 - 0.3*x2"]), [VectorField(list(b))])
    sched = ControlSchedule.uniform(np.zeros((1, 1)), 2.0)
    times = [0.5, 1.0, 2.0]
    pb = pullback_fields(system, sched, times, [[0.1, 0.2]])
    for ti, t in enumerate(times):
        np.testing.assert_allclose(pb.at(ti, 0)[0], expm(-t * A) @ b, atol=1e-10)


def test_pullback_rejects_times_beyond_horizon():
    sched = ControlSchedule.uniform(np.zeros((1, 2)), 1.0)
    with pytest.raises(InvalidInputError):
        pullback_fields(shear_family(2), sched, [1.5], [[0.0, 0.0]])


def test_pullback_flow_leaving_chart():
    sched = ControlSchedule.uniform([[5.0, 0.0]], 1.0)
    with pytest.raises(DomainError):
        pullback_fields(shear_family(2), sched, [1.0], [[0.0, 0.0]])


def _sum_schedules(a: ControlSchedule, b: ControlSchedule) -> ControlSchedule:
    bps = np.union1d(a.breakpoints, b.breakpoints)
    mids = 0.5 * (bps[:-1] + bps[1:])
    return ControlSchedule(bps, [a.value_at(t) + b.value_at(t) for t in mids])


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_endpoint_decomposition(seed):
    # flow of u + v equals the u-flow applied after the pulled-back v-flow
    rng = np.random.default_rng(seed)
    system = shear_family(2)
    u = ControlSchedule.uniform(rng.uniform(-0.5, 0.5, (3, 2)), 1.0)
    v = ControlSchedule.uniform(rng.uniform(-0.5, 0.5, (5, 2)), 1.0)
    x0 = np.array([0.2, -0.1])
    direct = control_flow(system, _sum_schedules(u, v), x0, h=1e-3)
    y = pulled_back_flow(system, u, v, x0, h_outer=0.02, h_inner=0.005)
    composed = control_flow(system, u, y, h=1e-3)
    np.testing.assert_allclose(composed, direct, atol=1e-7)


# Chow schedules

def test_chow_single_letter():
    s = chow_control((2,), T=1.0, n=2)
    assert len(s) == 1
    np.testing.assert_array_equal(s.values, [[0.0, 1.0]])


def test_chow_two_letter_pattern():
    s = chow_control((1, 2), T=1.0)
    assert len(s) == 4
    pattern = np.sign(s.values)
    np.testing.assert_array_equal(pattern, [[-1, 0], [0, -1], [1, 0], [0, 1]])
    assert s.horizon == pytest.approx(1.0)


def test_chow_three_letter_length():
    s = chow_control((1, 1, 2), T=1.0)
    assert len(s) == 10
    assert s.horizon == pytest.approx(1.0)


@given(word=st.lists(st.integers(1, 3), min_size=1, max_size=4), T=st.floats(0.1, 5.0))
def test_chow_one_channel_and_zero_mean(word, T):
    s = chow_control(word, T=T, n=3)
    assert np.all(np.count_nonzero(s.values, axis=1) == 1)
    if len(word) > 1:
        integral = s.durations @ s.values
        assert np.max(np.abs(integral)) <= 1e-12 * max(1.0, np.max(np.abs(s.values)))


def test_chow_rejects_empty_word():
    with pytest.raises(InvalidInputError):
        chow_control(())


# bracket expansions

def test_expansion_single_letter():
    system = heisenberg_like_torus()
    fit = verify_bracket_expansion(system.controls, (1,), chow_control((1,), n=2), "x1", [0.3, 0.4])
    assert fit.slope == pytest.approx(1.0, abs=0.05)
    assert fit.coefficient == pytest.approx(fit.expected_coefficient, rel=0.05)
    assert fit.expected_coefficient == pytest.approx(1.0)


def test_expansion_two_letters_shear_fields():
    fields = shear_family(2).controls
    fit = verify_bracket_expansion(fields, (1, 2), chow_control((1, 2)), "x2", [1.0, 0.0])
    assert fit.expected_coefficient == pytest.approx(2.0)
    assert fit.slope == pytest.approx(2.0, abs=0.05)
    assert fit.coefficient == pytest.approx(2.0, rel=0.05)


def test_expansion_three_letters_shear_fields():
    fields = shear_family(2).controls
    fit = verify_bracket_expansion(fields, (1, 1, 2), chow_control((1, 1, 2)), "x2", [0.0, 0.0])
    assert fit.expected_coefficient == pytest.approx(2.0)
    assert fit.slope == pytest.approx(3.0, abs=0.05)
    assert fit.coefficient == pytest.approx(2.0, rel=0.05)


def test_expansion_quadratic_test_function():
    fields = heisenberg_like_torus().controls
    x0 = [0.4, 0.2]
    fit = verify_bracket_expansion(fields, (1, 2), chow_control((1, 2)), "x2 + x1**2/2", x0)
    assert fit.slope == pytest.approx(2.0, abs=0.05)
    assert fit.coefficient == pytest.approx(fit.expected_coefficient, rel=0.05)


def test_expansion_indeterminate_when_bracket_vanishes():
    fields = [VectorField([1, 0]), VectorField([0, 1])]
    with pytest.raises(IndeterminateExpansionError):
        verify_bracket_expansion(fields, (1, 2), chow_control((1, 2)), "x2", [0.0, 0.0])


def test_expansion_needs_decreasing_epsilons():
    fields = shear_family(2).controls
    with pytest.raises(InvalidInputError):
        verify_bracket_expansion(fields, (1,), chow_control((1,), n=2), "x1", [0, 0], epsilons=[0.1, 0.2])


# rescaling

def test_rescale_identity_case():
    v = ControlSchedule.uniform([[1.0, -2.0], [0.5, 0.0]], 1.0)
    for beta in (0.5, 1.0, 2.0):
        w = rescale_control(v, 0.0, 0.0, beta, 1.0)
        for p in (1, 2):
            assert w.lp_norm(p) == pytest.approx(v.lp_norm(p), rel=1e-14)


def test_rescale_closed_form_ratio():
    v = ControlSchedule.uniform([[1.0], [3.0], [-2.0]], 1.0)
    w = rescale_control(v, 0.2, 0.0, 1.0, 0.25)
    assert w.lp_norm(2) / v.lp_norm(2) == pytest.approx(0.5, rel=1e-14)


def test_rescale_norm_vanishes_on_sweep():
    v = ControlSchedule.uniform([[1.0], [-1.0]], 1.0)
    alpha, beta, p = 0.25, 1.0, 2.0
    eps = 2.0 ** -np.arange(1, 40)
    norms = np.array([rescale_control(v, 0.0, alpha, beta, e).lp_norm(p) for e in eps])
    assert np.all(np.diff(norms) < 0)
    rate = np.polyfit(np.log(eps), np.log(norms), 1)[0]
    assert rate == pytest.approx((beta - alpha * p) / p, abs=1e-12)
    assert norms[-1] < 1e-2


@given(vals=arrays(float, (4, 2), elements=st.floats(-3, 3)), alpha=st.floats(0, 2),
       beta=st.floats(0.1, 2), eps=st.floats(0.05, 1.0), p=st.sampled_from([1, 2]),
       tau=st.floats(0, 0.5))
def test_rescale_norm_law(vals, alpha, beta, eps, p, tau):
    v = ControlSchedule.uniform(vals, 0.5)
    w = rescale_control(v, tau, alpha, beta, eps, horizon=1.0)
    law = eps ** ((beta - alpha * p) / p) * v.lp_norm(p)
    assert abs(w.lp_norm(p) - law) <= 1e-12 * max(1.0, law)


def test_rescale_support_beyond_horizon():
    v = ControlSchedule.uniform([[1.0]], 1.0)
    with pytest.raises(DomainError):
        rescale_control(v, 0.5, 0.0, 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        rescale_control(v, 0.0, 0.0, 0.0, 1.0)


# exponent feasibility

def lp_feasible(k, p):
    """Independent oracle: maximize the slack of the three inequalities with beta = 1."""
    if p > 2:
        return False
    # variables (a, s); maximize s
    A_ub = [[2 - k, 1], [k, 1], [p, 1]]
    b_ub = [3 - k, k, 1]
    res = linprog([0, -1], A_ub=A_ub, b_ub=b_ub, bounds=[(0, 10), (None, 1)])
    return res.status == 0 and -res.fun > 1e-9


@pytest.mark.parametrize("k,p,expected", [
    (3, 2, True), (4, 2, False), (3, 3, False), (3, 1.5, True), (4, 1.5, True),
    (5, 1.5, False), (5, 1.25, True), (4, 2.5, False),
])
def test_exponent_table(k, p, expected):
    wit = exponent_feasible(k, p)
    assert (wit is not None) == expected == lp_feasible(k, p)
    if wit is not None:
        assert wit.feasible


@given(k=st.integers(3, 8), p=st.fractions(1, 3, max_denominator=12))
def test_exponent_search_matches_lp(k, p):
    assert (exponent_feasible(k, p) is not None) == lp_feasible(k, float(p))


def test_exponent_search_is_consistent_with_excluded_region():
    for k in range(4, 9):
        edge = Fraction(k - 2, k - 3)
        if edge <= 2:
            assert exponent_feasible(k, edge) is None


def test_exponent_input_validation():
    with pytest.raises(InvalidInputError):
        exponent_feasible(2, 1.5)
    with pytest.raises(InvalidInputError):
        exponent_feasible(3, 0.5)
