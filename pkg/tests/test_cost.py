import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from controlkam.cost import (
    CostMatrix, OptimizerParams, build_cost_matrix, calibrate_t_short, minplus_compose,
    minplus_identity, minplus_product, optimize_pairs, optimize_trajectory, pmp_shoot,
)
from controlkam.errors import DomainError, InvalidInputError, UnreachedError
from controlkam.systems import (
    ControlAffineSystem, Lagrangian, StateSpace, VectorField, heisenberg_like_torus,
    integrator_1d, shear_family,
)

FAST = OptimizerParams(segments=8, restarts=1, substeps=1)
circle = integrator_1d()
circle_lag = Lagrangian.quadratic(1, 1, A=[[1]], b=1)


def minplus_brute(A, B):
    n = len(A)
    C = np.full((n, B.shape[1]), np.inf)
    for i, j, z in itertools.product(range(n), range(B.shape[1]), range(A.shape[1])):
        C[i, j] = min(C[i, j], A[i, z] + B[z, j])
    return C


cost_matrices = st.integers(2, 6).flatmap(
    lambda n: arrays(float, (n, n), elements=st.one_of(st.floats(0, 10), st.just(np.inf))))


# direct method

def test_same_point_driftless_costs_zero():
    res = optimize_trajectory(heisenberg_like_torus(), Lagrangian.pure_quadratic(2, 2),
                              [1.0, 2.0], [1.0, 2.0], 1.0)
    assert res.cost == 0.0
    assert np.all(res.schedule.values == 0.0)


def test_integrator_straight_line():
    res = optimize_trajectory(circle, Lagrangian.pure_quadratic(1, 1), [0.0], [1.0], 1.0)
    assert res.cost == pytest.approx(0.5, abs=1e-6)
    np.testing.assert_allclose(res.schedule.values, 1.0, atol=1e-4)
    assert res.converged and res.endpoint_residual < 1e-6


@pytest.mark.parametrize("w", [-0.8, 0.0, 1.1])
def test_vertical_axis_loop_costs_zero(w):
    res = optimize_trajectory(shear_family(3), Lagrangian.pure_quadratic(2, 2), [0.0, w], [0.0, w], 1.0)
    assert res.cost == 0.0


def test_pmp_matches_optimizer_on_integrator():
    lag = Lagrangian.pure_quadratic(1, 1)
    arc = pmp_shoot(circle, lag, [0.0], [1.0], 1.0)
    assert arc.states[-1, 0] == pytest.approx(1.0, abs=1e-12)
    assert arc.running_cost == pytest.approx(0.5, abs=1e-12)
    direct = optimize_trajectory(circle, lag, [0.0], [1.0], 1.0)
    assert abs(direct.cost - arc.running_cost) <= 1e-4


@pytest.mark.parametrize("seed", range(4))
def test_pmp_conservation_on_shear_family(seed):
    rng = np.random.default_rng(seed)
    k = [2, 3, 4][seed % 3]
    x0 = rng.uniform(-0.5, 0.5, 2)
    p0 = np.array([rng.uniform(-1, 1), -rng.uniform(0.2, 2)])
    arc = pmp_shoot(shear_family(k), Lagrangian.pure_quadratic(2, 2), x0, p0, 1.0)
    assert np.max(np.abs(arc.hamiltonian - arc.hamiltonian[0])) <= 1e-8
    assert np.max(np.abs(arc.covectors[:, 1] - p0[1])) <= 1e-10
    x1, p1, p2 = arc.states[:, 0], arc.covectors[:, 0], arc.covectors[:, 1]
    np.testing.assert_allclose(arc.controls[:, 0], p1, atol=1e-12)
    np.testing.assert_allclose(arc.controls[:, 1], x1 ** k * p2, atol=1e-12)
    # x1' = p1 along the arc (central differences, RK4 step T/4000)
    dx1 = np.gradient(x1, arc.times)
    assert np.max(np.abs(dx1[1:-1] - p1[1:-1])) <= 1e-6


def test_pmp_hamiltonian_equals_closed_form():
    arc = pmp_shoot(shear_family(3), Lagrangian.pure_quadratic(2, 2), [1.0, 0.0], [0.0, -1.0], 0.01)
    assert arc.hamiltonian[0] == pytest.approx(-0.5)


def test_pmp_abnormal_keeps_zero_control():
    arc = pmp_shoot(shear_family(2), Lagrangian.pure_quadratic(2, 2), [0.0, 0.3], [0.0, -1.0], 1.0, nu=0)
    assert arc.running_cost == 0.0
    np.testing.assert_allclose(arc.states[-1], [0.0, 0.3])


def test_pmp_input_errors():
    lag = Lagrangian.pure_quadratic(2, 2)
    with pytest.raises(InvalidInputError):
        pmp_shoot(shear_family(2), lag, [0, 0], [1, 1], 1.0, nu=1)
    with pytest.raises(InvalidInputError):
        pmp_shoot(shear_family(2), lag, [0, 0], [0, 0], 1.0, nu=0)
    with pytest.raises(DomainError):
        pmp_shoot(shear_family(2), lag, [0, 0], [10.0, 0], 1.0)


def test_unreached_raises_with_residual():
    # a single control direction cannot reach a point off the x1 axis
    system = ControlAffineSystem(StateSpace.torus(10.0, 10.0), VectorField([0, 0]), [VectorField([1, 0])])
    with pytest.raises(UnreachedError) as err:
        optimize_trajectory(system, Lagrangian.pure_quadratic(2, 1), [0, 0], [0, 1], 1.0, FAST)
    assert err.value.residual == pytest.approx(1.0, abs=1e-6)


def test_optimizer_param_validation():
    with pytest.raises(InvalidInputError):
        OptimizerParams(segments=3)
    with pytest.raises(InvalidInputError):
        OptimizerParams(endpoint_tol=-1e-6)
    with pytest.raises(InvalidInputError):
        OptimizerParams(penalty_energy=0.0)


def test_refinement_does_not_increase_cost():
    system, lag = shear_family(2), Lagrangian.pure_quadratic(2, 2)
    x, y = [0.0, 0.0], [0.4, 0.3]
    p = OptimizerParams(segments=8, restarts=2, seed=3)
    coarse = optimize_trajectory(system, lag, x, y, 1.0, p)
    fine = optimize_trajectory(system, lag, x, y, 1.0, OptimizerParams(segments=16, restarts=2, seed=3),
                               warm_start=coarse.schedule)
    assert fine.cost <= coarse.cost + 1e-6


def test_batched_and_single_solves_agree():
    system, lag = shear_family(2), Lagrangian.pure_quadratic(2, 2)
    X = np.array([[0.0, 0.0], [0.2, -0.1]])
    Y = np.array([[0.3, 0.2], [-0.2, 0.1]])
    p = OptimizerParams(segments=8, restarts=2, seed=1)
    cost, _, _, _ = optimize_pairs(system, lag, X, Y, 1.0, p, keys=[(0, 1), (2, 3)])
    for b, key in enumerate([(0, 1), (2, 3)]):
        single = optimize_trajectory(system, lag, X[b], Y[b], 1.0, p, entry=key)
        assert single.cost == cost[b]


# cost matrices

def test_driftless_matrix_has_zero_diagonal():
    grid = StateSpace.torus(2 * np.pi, 2 * np.pi).uniform_grid([2, 2])
    M = build_cost_matrix(heisenberg_like_torus(), Lagrangian.pure_quadratic(2, 2), grid, 1.0, FAST)
    assert np.all(np.diag(M.entries) == 0)


def test_circle_matrix_matches_analytic_cost():
    grid = circle.space.uniform_grid([8])
    M = build_cost_matrix(circle, circle_lag, grid, 1.0, FAST)
    d = circle.space.distance(grid[:, None, :], grid[None, :, :])
    np.testing.assert_allclose(M.entries, 1 + d ** 2 / 2, atol=1e-5)
    np.testing.assert_allclose(M.entries, M.entries.T, atol=1e-5)
    assert M.meta["unreached"] == 0 and M.meta["note"] == "discretization upper bound"


def test_cost_matrix_deterministic():
    grid = circle.space.uniform_grid([5])
    p = OptimizerParams(segments=8, restarts=3, substeps=1, seed=11)
    A = build_cost_matrix(circle, circle_lag, grid, 1.0, p)
    B = build_cost_matrix(circle, circle_lag, grid, 1.0, p)
    np.testing.assert_array_equal(A.entries, B.entries)


def test_cost_matrix_rejects_bad_entries():
    with pytest.raises(InvalidInputError):
        CostMatrix.from_array([[0, -np.inf], [1, 0]])
    with pytest.raises(InvalidInputError):
        CostMatrix.from_array([[0, 1, 2], [1, 0, 1]])


def test_calibration_prefers_order_one_controls():
    grid = circle.space.uniform_grid([8])
    t, table = calibrate_t_short(circle, circle_lag, grid, FAST)
    assert t in dict(table)
    rms = dict(table)[t]
    assert all(abs(np.log(rms)) <= abs(np.log(m)) for _, m in table if np.isfinite(m) and m > 0)


def test_circle_cost_is_continuous():
    # |c(x, y) - c(x + d, y)| shrinks with d; analytic modulus is about d * dist
    lag, p = circle_lag, OptimizerParams(segments=8, restarts=1, substeps=1)
    rng = np.random.default_rng(5)
    x, y = rng.uniform(0, 2 * np.pi, (2, 20, 1))
    moduli = []
    for d in [1e-1, 1e-2, 1e-3]:
        c0, _, _, _ = optimize_pairs(circle, lag, x, y, 1.0, p)
        c1, _, _, _ = optimize_pairs(circle, lag, circle.space.canonical(x + d), y, 1.0, p)
        moduli.append(np.max(np.abs(c1 - c0)))
    assert moduli[0] > moduli[1] > moduli[2]
    assert moduli[-1] < 1e-2


# min-plus algebra

def test_minplus_hand_instance():
    A = np.array([[1.0, 5.0], [2.0, 1.0]])
    C, Z = minplus_product(A, A)
    np.testing.assert_array_equal(C, [[2, 6], [3, 2]])
    np.testing.assert_array_equal(C, minplus_brute(A, A))
    np.testing.assert_array_equal(Z, [[0, 0], [0, 1]])


def test_minplus_ties_take_smallest_index():
    A = np.array([[1.0, 1.0], [0.0, 0.0]])
    _, Z = minplus_product(A, np.zeros((2, 2)))
    assert np.all(Z == 0)


def test_minplus_all_inf_row():
    A = np.array([[np.inf, np.inf], [0.0, 1.0]])
    C, Z = minplus_product(A, A)
    assert np.all(np.isinf(C[0])) and np.all(Z[0] == -1)


@given(A=cost_matrices)
def test_minplus_identity(A):
    M = CostMatrix.from_array(A)
    E = minplus_identity(M.grid)
    np.testing.assert_array_equal(minplus_compose(M, E).entries, A)
    np.testing.assert_array_equal(minplus_compose(E, M).entries, A)


@given(A=cost_matrices, seed=st.integers(0, 2 ** 16))
def test_minplus_matches_brute_force(A, seed):
    B = np.random.default_rng(seed).permutation(A.ravel()).reshape(A.shape)
    np.testing.assert_array_equal(minplus_product(A, B)[0], minplus_brute(A, B))


@given(A=cost_matrices, seed=st.integers(0, 2 ** 16))
def test_minplus_associative(A, seed):
    rng = np.random.default_rng(seed)
    B = rng.permutation(A.ravel()).reshape(A.shape)
    C = rng.permutation(A.ravel()).reshape(A.shape)
    left = minplus_product(minplus_product(A, B)[0], C)[0]
    right = minplus_product(A, minplus_product(B, C)[0])[0]
    np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12)


def _power(A, k):
    P = A
    for _ in range(k - 1):
        P = minplus_product(P, A)[0]
    return P


@settings(max_examples=30)
@given(A=arrays(float, (5, 5), elements=st.floats(0, 10)), a=st.integers(1, 4), b=st.integers(1, 4))
def test_minplus_powers_sub_and_superadditive(A, a, b):
    Pa, Pb, Pab = _power(A, a), _power(A, b), _power(A, a + b)
    assert Pab.max() <= Pa.max() + Pb.max() + 1e-9
    assert Pab.min() >= Pa.min() + Pb.min() - 1e-9


def test_compose_records_horizon_and_argmin():
    A = CostMatrix.from_array([[1.0, 5.0], [2.0, 1.0]], t=0.5)
    C = minplus_compose(A, A)
    assert C.t == 1.0 and C.argmin is not None


def test_compose_requires_same_grid():
    A = CostMatrix.from_array(np.zeros((2, 2)))
    B = CostMatrix.from_array(np.zeros((3, 3)))
    with pytest.raises(InvalidInputError):
        minplus_compose(A, B)
