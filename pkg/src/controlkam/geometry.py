"""Lie brackets, piecewise-constant schedules and commutator controls.

Bracket words use 1-based channel indices; the word ``(i1, ..., il)`` stands
for ``ad_{X_i1} ... ad_{X_i(l-1)} X_il`` with ``[X, Y] = (DY) X - (DX) Y``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy as sp

from .errors import DomainError, IndeterminateExpansionError, InvalidInputError
from .systems import ControlAffineSystem, VectorField, state_symbols

MAX_WORD_LENGTH = 4


def _check_word(word, n: int, max_length: int = MAX_WORD_LENGTH) -> tuple:
    word = tuple(int(i) for i in word)
    if not 1 <= len(word) <= max_length:
        raise InvalidInputError(f"bracket word length must be in 1..{max_length}")
    if any(not 1 <= i <= n for i in word):
        raise InvalidInputError(f"bracket word {word} uses channels outside 1..{n}")
    return word


@lru_cache(maxsize=None)
def _word_field_cached(fields: tuple, word: tuple) -> VectorField:
    if len(word) == 1:
        return fields[word[0] - 1]
    return fields[word[0] - 1].bracket(_word_field_cached(fields, word[1:]))


def bracket_field(fields: Sequence[VectorField], word) -> VectorField:
    """Symbolic vector field of an iterated bracket word."""
    fields = tuple(fields)
    return _word_field_cached(fields, _check_word(word, len(fields)))


def lie_bracket(X: VectorField, Y: VectorField, point) -> np.ndarray:
    """``[X, Y]`` evaluated at ``point``."""
    if X.dimension != Y.dimension:
        raise InvalidInputError("fields live on different spaces")
    return X.bracket(Y)(np.asarray(point, dtype=float))


def bracket_words(n: int, k: int):
    """All words of length <= k, shortest first, lexicographic within a length."""
    for length in range(1, k + 1):
        yield from itertools.product(range(1, n + 1), repeat=length)


def k_generating_check(fields: Sequence[VectorField], point, k: int, rtol: float = 1e-10):
    """Do the brackets of length <= k span the tangent space at ``point``?

    Returns ``(True, spanning_words)`` or ``(False, [])``.  Independence is
    decided by Gram-Schmidt with a tolerance relative to the largest bracket
    norm seen.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    fields = tuple(fields)
    m = fields[0].dimension
    x = np.asarray(point, dtype=float)
    words = list(bracket_words(len(fields), min(k, MAX_WORD_LENGTH) if k <= MAX_WORD_LENGTH else k))
    vals = [np.asarray(_word_field_cached(fields, w)(x), dtype=float) for w in words]
    scale = max((np.linalg.norm(v) for v in vals), default=0.0)
    if scale == 0.0:
        return False, []
    basis, chosen = [], []
    for w, v in zip(words, vals):
        r = v.copy()
        for b in basis:
            r -= (r @ b) * b
        nr = np.linalg.norm(r)
        if nr > rtol * scale:
            basis.append(r / nr)
            chosen.append(w)
            if len(basis) == m:
                return True, chosen
    return False, []


@dataclass
class ControlSchedule:
    """Piecewise-constant control: ``values[j]`` on ``[breakpoints[j], breakpoints[j+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.breakpoints.ndim != 1 or len(self.breakpoints) != len(self.values) + 1:
            raise InvalidInputError("need len(breakpoints) == number of segments + 1")
        if self.breakpoints[0] != 0.0 or np.any(np.diff(self.breakpoints) <= 0):
            raise InvalidInputError("breakpoints must start at 0 and increase strictly")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("control values must be finite")

    @classmethod
    def uniform(cls, values, horizon: float):
        values = np.atleast_2d(np.asarray(values, dtype=float))
        return cls(np.linspace(0.0, horizon, len(values) + 1), values)

    @property
    def horizon(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return len(self.values)

    def value_at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self.breakpoints, t, side="right") - 1)
        return self.values[min(max(j, 0), len(self.values) - 1)]

    def pieces(self, t_end: float | None = None):
        """Yield ``(start, duration, value)`` covering ``[0, t_end]``."""
        t_end = self.horizon if t_end is None else t_end
        if t_end > self.horizon * (1 + 1e-12):
            raise DomainError(f"time {t_end} beyond schedule horizon {self.horizon}")
        for a, b, v in zip(self.breakpoints[:-1], self.breakpoints[1:], self.values):
            if a >= t_end:
                break
            yield a, min(b, t_end) - a, v

    def lp_norm(self, p: float) -> float:
        mags = np.linalg.norm(self.values, axis=1)
        return float(np.sum(self.durations * mags ** p) ** (1.0 / p))

    def inverse(self) -> "ControlSchedule":
        """Time-reversed, negated schedule (its flow inverts the driftless flow)."""
        d = self.durations[::-1]
        return ControlSchedule(np.concatenate([[0.0], np.cumsum(d)]), -self.values[::-1])

    def concat(self, *others: "ControlSchedule") -> "ControlSchedule":
        d = np.concatenate([self.durations] + [o.durations for o in others])
        v = np.vstack([self.values] + [o.values for o in others])
        return ControlSchedule(np.concatenate([[0.0], np.cumsum(d)]), v)

    def merged(self) -> "ControlSchedule":
        """Merge adjacent segments carrying identical values."""
        keep_b, keep_v = [0.0], []
        for b, v in zip(self.breakpoints[1:], self.values):
            if keep_v and np.array_equal(keep_v[-1], v):
                keep_b[-1] = b
            else:
                keep_v.append(v)
                keep_b.append(b)
        return ControlSchedule(np.array(keep_b), np.array(keep_v))


def _rk4_piece(rhs, x, u, duration, h):
    steps = max(1, int(np.ceil(duration / h - 1e-9)))
    dt = duration / steps
    for _ in range(steps):
        k1 = rhs(x, u)
        k2 = rhs(x + 0.5 * dt * k1, u)
        k3 = rhs(x + 0.5 * dt * k2, u)
        k4 = rhs(x + dt * k3, u)
        x = x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def schedule_flow(rhs, x0, schedule: ControlSchedule, h: float, t_end: float | None = None,
                  space=None) -> np.ndarray:
    """RK4 flow of ``x' = rhs(x, u(t))`` with steps aligned to the schedule breakpoints."""
    x = np.asarray(x0, dtype=float)
    for _, dur, v in schedule.pieces(t_end):
        x = _rk4_piece(rhs, x, v, dur, h)
        if space is not None and not np.all(space.inside(x)):
            raise DomainError("flow left the box chart")
    return x


def control_flow(system: ControlAffineSystem, schedule: ControlSchedule, x0, h: float | None = None,
                 t_end: float | None = None) -> np.ndarray:
    """Endpoint of the control-affine flow under a schedule."""
    h = schedule.horizon / 2000 if h is None else h
    space = system.space if system.space.kind == "box" else None
    return schedule_flow(system.velocity, x0, schedule, h, t_end, space)


@dataclass
class PullbackField:
    """Values ``g_i^t(x)`` with shape ``(len(times), n, len(points), m)``."""

    times: np.ndarray
    points: np.ndarray
    values: np.ndarray

    def at(self, time_index: int, channel: int) -> np.ndarray:
        return self.values[time_index, channel]


def _pullback_at(system, schedule, t, points, h):
    """``dPhi_t^{-1} X_i(Phi_t(x))`` for all channels at time ``t``; shape (n, P, m)."""
    m = system.m
    P = np.atleast_2d(np.asarray(points, dtype=float))
    J = np.broadcast_to(np.eye(m), (len(P), m, m)).copy()
    state = np.concatenate([P, J.reshape(len(P), m * m)], axis=1)

    def rhs(z, u):
        x = z[:, :m]
        Jx = z[:, m:].reshape(-1, m, m)
        A = system.velocity_jacobian(x, np.broadcast_to(u, (len(x), system.n)))
        return np.concatenate([system.velocity(x, np.broadcast_to(u, (len(x), system.n))),
                               (A @ Jx).reshape(len(x), m * m)], axis=1)

    if t > 0:
        space = system.space if system.space.kind == "box" else None
        for _, dur, v in schedule.pieces(t):
            state = _rk4_piece(rhs, state, v, dur, h)
            if space is not None and not np.all(space.inside(state[:, :m])):
                raise DomainError("reference flow left the box chart")
    x = state[:, :m]
    J = state[:, m:].reshape(-1, m, m)
    out = np.empty((system.n, len(P), m))
    for i, X in enumerate(system.controls):
        out[i] = np.linalg.solve(J, X(x)[..., None])[..., 0]
    return out


def pullback_fields(system: ControlAffineSystem, schedule: ControlSchedule, query_times, query_points,
                    h: float | None = None) -> PullbackField:
    """Control fields transported back along the reference flow of ``schedule``.

    Integrates the flow and its variational equation with RK4 (default step
    ``T/2000``) and returns ``dPhi_t^{-1} X_i(Phi_t(x))`` at every query.
    """
    times = np.atleast_1d(np.asarray(query_times, dtype=float))
    if np.max(times) > schedule.horizon * (1 + 1e-12) or np.min(times) < 0:
        raise InvalidInputError("query times must lie within the schedule horizon")
    h = schedule.horizon / 2000 if h is None else h
    pts = np.atleast_2d(np.asarray(query_points, dtype=float))
    vals = np.stack([_pullback_at(system, schedule, t, pts, h) for t in times])
    return PullbackField(times, pts, vals)


def pulled_back_flow(system: ControlAffineSystem, u: ControlSchedule, v: ControlSchedule, x0,
                     h_outer: float, h_inner: float) -> np.ndarray:
    """Endpoint of ``x' = sum_i v_i(t) g_i^t(x)`` on ``[0, T]`` (RK4, nested reference flows)."""
    T = u.horizon
    x = np.asarray(x0, dtype=float)
    grid = np.union1d(np.union1d(u.breakpoints, v.breakpoints), np.linspace(0, T, int(np.ceil(T / h_outer)) + 1))
    grid = grid[grid <= T]

    def rhs(t, y, vt):
        g = _pullback_at(system, u, t, y[None], h_inner)[:, 0, :]
        return vt @ g

    for a, b in zip(grid[:-1], grid[1:]):
        dt = b - a
        vt = v.value_at(0.5 * (a + b))
        k1 = rhs(a, x, vt)
        k2 = rhs(a + dt / 2, x + dt / 2 * k1, vt)
        k3 = rhs(a + dt / 2, x + dt / 2 * k2, vt)
        k4 = rhs(b, x + dt * k3, vt)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _raw_chow(word: tuple, n: int) -> ControlSchedule:
    if len(word) == 1:
        return ControlSchedule(np.array([0.0, 1.0]), np.eye(n)[word[0] - 1][None])
    P = _raw_chow(word[:1], n)
    Q = _raw_chow(word[1:], n)
    return P.inverse().concat(Q.inverse(), P, Q)


def chow_control(word, T: float = 1.0, n: int | None = None) -> ControlSchedule:
    """Commutator schedule realizing the bracket ``word`` at order ``eps^len(word)``.

    A word ``(i, rest...)`` is built as ``P^-1, Q^-1, P, Q`` where ``P`` is the
    unit control on channel ``i`` and ``Q`` the schedule for ``rest``; the
    inverse of a schedule is its time reversal with negated values.  With unit
    segment lengths the leading coefficient is exactly 1, so compressing the
    raw horizon ``R`` into ``T`` and scaling amplitudes by ``R/T`` keeps it 1.
    """
    word = tuple(int(i) for i in word)
    if not word:
        raise InvalidInputError("empty bracket word")
    n = max(word) if n is None else n
    word = _check_word(word, n, max_length=max(MAX_WORD_LENGTH, len(word)))
    raw = _raw_chow(word, n)
    R = raw.horizon
    return ControlSchedule(raw.breakpoints * (T / R), raw.values * (R / T))


def parse_test_function(f, m: int) -> sp.Expr:
    from .systems import parse_expression

    return parse_expression(f, state_symbols(m))


@dataclass
class ExpansionFit:
    slope: float
    coefficient: float
    epsilons: np.ndarray
    deltas: np.ndarray
    expected_coefficient: float


def verify_bracket_expansion(fields: Sequence[VectorField], word, schedule: ControlSchedule, f, x0,
                             epsilons=None, steps_per_segment: int = 64) -> ExpansionFit:
    """Fit ``log|f(end) - f(x0)| ~ s log(eps) + log|c| + b eps`` for the flow of ``eps * w``.

    ``slope`` should equal the word length and ``coefficient`` the bracket
    applied to ``f`` at ``x0``.
    """
    fields = tuple(fields)
    m = fields[0].dimension
    word = _check_word(word, len(fields), max_length=max(MAX_WORD_LENGTH, len(tuple(word))))
    eps = np.asarray(2.0 ** -np.arange(3, 10) if epsilons is None else epsilons, dtype=float)
    if len(eps) < 2 or np.any(np.diff(eps) >= 0):
        raise InvalidInputError("epsilons must be a decreasing sequence")
    expr = parse_test_function(f, m)
    fn = sp.lambdify(list(state_symbols(m)), expr, "numpy")
    x0 = np.asarray(x0, dtype=float)
    f0 = float(fn(*x0))
    h = float(np.min(schedule.durations)) / steps_per_segment

    def run(e):
        def rhs(x, w):
            return e * sum(wi * X(x) for wi, X in zip(w, fields) if wi != 0.0) + 0.0 * x
        return float(fn(*schedule_flow(rhs, x0, schedule, h))) - f0

    deltas = np.array([run(e) for e in eps])
    expected = float(sp.lambdify(list(state_symbols(m)), bracket_field(fields, word).apply(expr), "numpy")(*x0))
    mask = np.abs(deltas) > 1e-13
    if mask.sum() < 2:
        raise IndeterminateExpansionError(f"endpoint displacement below 1e-13 for word {word}")
    le, e = np.log(eps[mask]), eps[mask]
    # the eps column absorbs the next-order term of the expansion
    design = np.column_stack([le, np.ones_like(le), e] if mask.sum() >= 4 else [le, np.ones_like(le)])
    coef = np.linalg.lstsq(design, np.log(np.abs(deltas[mask])), rcond=None)[0]
    slope, intercept = coef[0], coef[1]
    sign = np.sign(deltas[mask][-1])
    return ExpansionFit(float(slope), float(sign * np.exp(intercept)), eps, deltas, expected)


def rescale_control(v: ControlSchedule, tau: float, alpha: float, beta: float, eps: float,
                    horizon: float | None = None) -> ControlSchedule:
    """``eps^-alpha v((t - tau)/eps^beta)`` supported on ``(tau, tau + eps^beta T_v)``.

    The result lives on ``[0, horizon]`` (default: the horizon of ``v``) and is
    zero outside the support.  Its L^p norm is ``eps^((beta - alpha p)/p) ||v||_p``.
    """
    if not 0 < eps <= 1:
        raise InvalidInputError("eps must lie in (0, 1]")
    if beta <= 0 or alpha < 0:
        raise InvalidInputError("need alpha >= 0 and beta > 0")
    horizon = v.horizon if horizon is None else float(horizon)
    width = eps ** beta * v.horizon
    if tau < 0 or tau + width > horizon * (1 + 1e-12):
        raise DomainError(f"support ({tau}, {tau + width}) exceeds horizon {horizon}")
    bps = [0.0] if tau == 0 else [0.0, tau]
    vals = [] if tau == 0 else [np.zeros(v.channels)]
    bps.extend(tau + eps ** beta * v.breakpoints[1:])
    vals.extend(eps ** (-alpha) * v.values)
    if horizon - bps[-1] > 1e-15 * max(horizon, 1.0):
        bps.append(horizon)
        vals.append(np.zeros(v.channels))
    else:
        bps[-1] = max(bps[-1], horizon)
    return ControlSchedule(np.array(bps), np.array(vals))


@dataclass(frozen=True)
class RescaleExponents:
    alpha: Fraction
    beta: Fraction
    k: int
    p: Fraction

    @property
    def feasible(self) -> bool:
        a, b, k, p = self.alpha, self.beta, self.k, self.p
        return 3 * b - 2 * a > k * (b - a) > 0 and b - a * p > 0 and p <= 2 and a >= 0 and b > 0


def exponent_feasible(k: int, p, denominators: int = 64) -> RescaleExponents | None:
    """Search rational ``(alpha, beta)`` with ``3b - 2a > k(b - a) > 0``, ``b > a p``, ``p <= 2``.

    The inequalities are homogeneous, so ``beta = 1`` loses nothing; ``alpha``
    runs over fractions with denominator up to ``denominators``.  Arithmetic is
    exact (``p`` is converted with ``Fraction``).
    """
    if k < 3 or p < 1:
        raise InvalidInputError("need k >= 3 and p >= 1")
    p = Fraction(p)
    if p > 2:
        return None
    seen = set()
    for q in range(1, denominators + 1):
        for j in range(0, q + 1):
            a = Fraction(j, q)
            if a in seen:
                continue
            seen.add(a)
            cand = RescaleExponents(a, Fraction(1), int(k), p)
            if cand.feasible:
                return cand
    return None
