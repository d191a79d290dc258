"""The two-dimensional family x1' = u1, x2' = x1^2 + u2 x1^k with L = |u|^2/2.

Normal extremals reduce to a one-degree-of-freedom Hamiltonian in
``(x1, p1)`` with ``p2 < 0`` frozen; the level set through the origin bounds
the cost of loops that return to the x2 axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import OptimizerParams, optimize_pairs
from .errors import DomainError, InvalidInputError
from .systems import SHEAR_BOX, Lagrangian, shear_family


@dataclass(frozen=True)
class ExampleParams:
    k: int
    p2: float
    x1_extent: float = SHEAR_BOX[0][1]

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise InvalidInputError("exponent k must be an integer >= 2")
        if not self.p2 < 0:
            raise InvalidInputError("p2 must be negative")
        if self.kappa > self.x1_extent:
            raise DomainError(f"kappa={self.kappa:.4g} lies outside the chart")

    @property
    def kappa(self) -> float:
        """Positive zero of ``x -> x^(2k-2) p2^2/2 + p2``."""
        return (-2.0 / self.p2) ** (1.0 / (2 * self.k - 2))


def reduced_hamiltonian(k: int, p2: float, x1, p1):
    x1 = np.asarray(x1, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    return 0.5 * p1 ** 2 + 0.5 * x1 ** (2 * k) * p2 ** 2 + x1 ** 2 * p2


def phase_portrait(k: int, p2: float, levels=(0.0,), resolution: int = 256,
                   x1_range=(-2.0, 2.0), p1_range=(-2.0, 2.0)):
    """Level curves of the reduced Hamiltonian, ``{level: [array (L, 2) of (x1, p1)]}``."""
    from skimage.measure import find_contours

    if resolution < 64:
        raise InvalidInputError("resolution must be at least 64")
    xs = np.linspace(*x1_range, resolution)
    ps = np.linspace(*p1_range, resolution)
    H = reduced_hamiltonian(k, p2, xs[:, None], ps[None, :])
    out = {}
    for level in levels:
        curves = []
        for c in find_contours(H, level):
            x1 = np.interp(c[:, 0], np.arange(resolution), xs)
            p1 = np.interp(c[:, 1], np.arange(resolution), ps)
            curves.append(np.column_stack([x1, p1]))
        out[float(level)] = curves
    return out


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 60) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""

    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6 * (fa + 4 * fm + fb)

    fa, fb, fm = f(a), f(b), f((a + b) / 2)
    stack = [(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)]
    total = 0.0
    while stack:
        a, b, fa, fm, fb, whole, eps, depth = stack.pop()
        m = (a + b) / 2
        flm, frm = f((a + m) / 2), f((m + b) / 2)
        left, right = simpson(fa, flm, fm, a, m), simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15
        else:
            stack.append((a, m, fa, flm, fm, left, eps / 2, depth + 1))
            stack.append((m, b, fm, frm, fb, right, eps / 2, depth + 1))
    return total


def loop_integral(k: int, tol: float = 1e-10) -> float:
    """``int_0^1 sqrt(z^2 - z^(2k)) dz``."""
    return adaptive_simpson(lambda z: np.sqrt(max(z * z - z ** (2 * k), 0.0)), 0.0, 1.0, tol)


def lower_bound(k: int, p2: float, tol: float = 1e-10):
    """``(area term, escape term, max of both)`` for a normal arc with covector ``p2``."""
    if k < 2:
        raise InvalidInputError("k must be >= 2")
    if not p2 < 0:
        raise InvalidInputError("p2 must be negative")
    area = 2.0 ** ((k + 1) / (2 * k - 2)) * (-p2) ** ((k - 3) / (2 * k - 2)) * loop_integral(k, tol)
    escape = 0.5 * (-2.0 / p2) ** (1.0 / (2 * k - 2))
    area, escape = float(area), float(escape)
    return area, escape, max(area, escape)


def bound_floor(k: int) -> float:
    """``inf_{p2 < 0}`` of the combined bound."""
    if k == 3:
        return lower_bound(3, -1.0)[0]
    if k == 2:
        return 0.0  # both terms scale like (-p2)^(-1/2)
    # area grows and escape decays in -p2; the max is smallest where they cross
    lo, hi = -30.0, 30.0
    I = loop_integral(k)
    for _ in range(200):
        mid = (lo + hi) / 2
        area = 2.0 ** ((k + 1) / (2 * k - 2)) * np.exp(mid * (k - 3) / (2 * k - 2)) * I
        escape = 0.5 * (2.0 * np.exp(-mid)) ** (1.0 / (2 * k - 2))
        lo, hi = (mid, hi) if area < escape else (lo, mid)
    return lower_bound(k, -float(np.exp(lo)))[2]


def demo_params(**overrides) -> OptimizerParams:
    """Optimizer settings used for the x2-axis loops: many restarts, stiff penalty.

    Controls that leave u = 0 must climb away from an abnormal stationary
    point, so the first augmented-Lagrangian round already uses a large
    penalty, raised further for starts whose endpoint miss is small.
    """
    base = dict(segments=16, restarts=32, substeps=2, penalty=1e5, penalty_energy=50.0, seed=0)
    base.update(overrides)
    return OptimizerParams(**base)


def discontinuity_demo(k: int, deltas, params: OptimizerParams | None = None):
    """Optimized ``c_1((0,0), (0,-delta))`` per delta, with the analytic floor.

    Returns rows ``(k, delta, cost, bound, residual)``; costs are upper bounds
    (piecewise-constant controls), ``bound`` is the floor of the combined
    bound over ``p2 < 0``; unreached rows carry ``inf`` cost.
    """
    params = params or demo_params()
    if params.restarts < 32:
        raise InvalidInputError("the demo needs at least 32 restarts")
    deltas = [float(d) for d in deltas]
    if any(d < 0 for d in deltas):
        raise InvalidInputError("deltas must be nonnegative")
    system = shear_family(k)
    lo, hi = system.space.lower[1], system.space.upper[1]
    if any(not lo <= -d <= hi for d in deltas):
        raise DomainError("target outside the chart")
    lag = Lagrangian.pure_quadratic(2, 2)
    floor = bound_floor(k)
    # continuation: each target is warm-started from the next larger one
    order = sorted(range(len(deltas)), key=lambda i: -deltas[i])
    rows, warm = [None] * len(deltas), None
    for i in order:
        x, y = np.zeros((1, 2)), np.array([[0.0, -deltas[i]]])
        cost, res, U, _ = optimize_pairs(system, lag, x, y, 1.0, params, keys=[(k, i)], warm=warm)
        reached = res[0] < params.unreached_tol
        if reached and deltas[i] > 0:
            warm = U
        rows[i] = (k, deltas[i], float(cost[0]) if reached else float("inf"), floor, float(res[0]))
    return rows
