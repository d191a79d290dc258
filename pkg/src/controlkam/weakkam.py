"""Lax-Oleinik semigroup on cost matrices, critical constant, weak-KAM potentials."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cost import CostMatrix, minplus_product
from .errors import DisconnectedError, InvalidInputError, NonConvergenceError, UnreachablePointError
from .systems import ControlAffineSystem, Lagrangian, eval_hamiltonian


@dataclass
class PotentialField:
    """Values on grid points, shifted so that ``values[anchor] == 0``."""

    grid: np.ndarray
    values: np.ndarray
    anchor: int = 0

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid.ndim == 1:
            self.grid = self.grid[:, None]
        self.values = np.asarray(self.values, dtype=float).copy()
        if self.values.shape != (len(self.grid),):
            raise InvalidInputError("potential needs one value per grid point")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInputError("potential values must be finite")
        self.values -= self.values[self.anchor]

    @classmethod
    def zeros(cls, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.zeros(len(grid)))


def _values(f) -> np.ndarray:
    return np.asarray(f.values if isinstance(f, PotentialField) else f, dtype=float)


def lax_oleinik_raw(C, f) -> np.ndarray:
    """``(S f)(y) = min_x C[x, y] + f(x)`` without re-anchoring."""
    E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    out = np.min(E + _values(f)[:, None], axis=0)
    bad = ~np.isfinite(out)
    if bad.any():
        raise UnreachablePointError(f"grid points {np.flatnonzero(bad).tolist()} are unreachable")
    return out


def lax_oleinik(C: CostMatrix, f: PotentialField) -> PotentialField:
    if len(_values(f)) != C.size:
        raise InvalidInputError("potential and cost matrix live on different grids")
    anchor = f.anchor if isinstance(f, PotentialField) else 0
    return PotentialField(C.grid, lax_oleinik_raw(C, f), anchor)


# ---------------------------------------------------------------------------
# critical value


@dataclass
class SubadditiveTrace:
    """Rows ``(t, M_t, m_t, M_t/t, m_t/t)`` over doubling horizons."""

    rows: list
    h: float
    K: float
    depth: int
    powers: list = field(default_factory=list, repr=False)

    @property
    def spread(self) -> float:
        """``(M_t - m_t)/t`` at the deepest horizon."""
        t, M, m = self.rows[-1][:3]
        return (M - m) / t


def estimate_h_subadditive(generator: CostMatrix, doublings: int = 8, keep_powers: bool = False) -> SubadditiveTrace:
    """Bracket ``h`` between ``m_t/t`` and ``M_t/t`` for ``t = 2^d t_short``."""
    if doublings < 4:
        raise InvalidInputError("at least 4 doublings are required")
    if not generator.t > 0:
        raise InvalidInputError("generator horizon must be positive")
    A = generator.entries
    rows, powers = [], []
    for d in range(doublings + 1):
        if d:
            A, _ = minplus_product(A, A)
        fin = A[np.isfinite(A)]
        t = generator.t * 2 ** d
        if fin.size == 0:
            if d == doublings:
                raise DisconnectedError("every entry of the deepest power is +inf")
            rows.append((t, np.inf, np.inf, np.inf, np.inf))
        else:
            M, m = float(fin.max()), float(fin.min())
            rows.append((t, M, m, M / t, m / t))
        if keep_powers:
            powers.append(A.copy())
    t, M, m = rows[-1][:3]
    return SubadditiveTrace(rows, (M / t + m / t) / 2, (M - m) / 2, doublings, powers)


def _cycle_mean(E, cycle) -> float:
    return float(sum(E[cycle[i], cycle[(i + 1) % len(cycle)]] for i in range(len(cycle))) / len(cycle))


def _rotate(cycle):
    k = int(np.argmin(cycle))
    return [int(v) for v in cycle[k:] + cycle[:k]]


def _walk_cycles(walk):
    """Simple cycles met while scanning a vertex walk (stack decomposition)."""
    out, stack, pos = [], [], {}
    for v in walk:
        if v in pos:
            k = pos[v]
            cyc = stack[k:]
            out.append(cyc)
            for u in cyc:
                del pos[u]
            stack = stack[:k]
        pos[v] = len(stack)
        stack.append(v)
    return out


def min_mean_cycle(C) -> tuple[float, list]:
    """Karp's minimum mean cycle: ``(value per step, cycle as index list)``.

    The value is the exact mean of the returned cycle's weights.  The cycle is
    rotated to start at its smallest index; among optimal cycles found the one
    with the smallest rotated index sequence is kept.
    """
    E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    n = len(E)
    D = np.full((n + 1, n), np.inf)
    P = np.full((n + 1, n), -1, dtype=int)
    D[0] = 0.0
    for k in range(1, n + 1):
        S = D[k - 1][:, None] + E
        P[k] = np.argmin(S, axis=0)
        D[k] = S[P[k], np.arange(n)]
    ok = np.isfinite(D[n])
    if not ok.any():
        raise DisconnectedError("no finite cycle in the cost matrix")
    with np.errstate(invalid="ignore"):
        ratios = (D[n][None, :] - D[:n]) / (n - np.arange(n))[:, None]
    ratios[~np.isfinite(D[:n])] = -np.inf
    score = np.where(ok, ratios.max(axis=0), np.inf)
    lam = float(score.min())
    tol = 1e-9 * max(1.0, abs(lam))
    best = None
    for v in np.flatnonzero(score <= lam + tol):
        walk, u = [], int(v)
        for k in range(n, 0, -1):
            walk.append(u)
            u = int(P[k, u])
        walk.append(u)
        for cyc in _walk_cycles(walk[::-1]):
            cand = (_cycle_mean(E, _rotate(cyc)), _rotate(cyc))
            if best is None or cand[0] < best[0] - tol or (abs(cand[0] - best[0]) <= tol and cand[1] < best[1]):
                best = cand
    if best is None or best[0] > lam + tol:
        raise DisconnectedError("failed to recover an optimal cycle")  # pragma: no cover
    return best


# ---------------------------------------------------------------------------
# potentials


@dataclass
class FixedPointResult:
    potential: PotentialField
    residual: float
    iterations: int
    approach: list
    trace: list


def fixed_point_residual(C: CostMatrix, f, ht: float) -> float:
    v = _values(f)
    return float(np.max(np.abs(lax_oleinik_raw(C, v) - ht - v)))


def weak_kam_potential(C: CostMatrix, ht: float | None = None, f0=None, tail: int = 1,
                       cap_doublings: int = 10, tol: float = 1e-9, max_iter: int = 10_000,
                       stall: float = 1e-6) -> FixedPointResult:
    """Fixed point of ``f -> S f - ht`` started from ``inf_{n >= tail} S^n f0 - n ht``.

    The infimum runs over every step count from ``tail`` up to
    ``2**cap_doublings * tail``, which makes it an exact fixed point once the
    power sequence has become periodic; the iteration then polishes rounding.
    """
    if ht is None:
        ht = min_mean_cycle(C)[0]
    f = np.zeros(C.size) if f0 is None else _values(f0).copy()
    if tail < 1:
        raise InvalidInputError("tail must be a positive step count")
    for _ in range(tail):
        f = lax_oleinik_raw(C, f) - ht
    fbar = f.copy()
    approach = []
    last = tail * 2 ** cap_doublings
    checkpoints = {tail * 2 ** d for d in range(cap_doublings + 1)}
    for n in range(tail + 1, last + 1):
        f = lax_oleinik_raw(C, f) - ht
        fbar = np.minimum(fbar, f)
        if n in checkpoints:
            approach.append((n, fbar - fbar[0]))
    f = fbar - fbar[0]
    trace = []
    for it in range(1, max_iter + 1):
        g = lax_oleinik_raw(C, f) - ht
        change = float(np.max(np.abs(g - f)))
        trace.append(change)
        f = g - g[0]
        if change < tol:
            break
    res = fixed_point_residual(C, f, ht)
    if res > stall:
        raise NonConvergenceError(f"fixed-point residual stalled at {res:.3e}", trace)
    return FixedPointResult(PotentialField(C.grid, f), res, it, approach, trace)


def monotone_approach(C: CostMatrix, f, ht: float, steps: list) -> np.ndarray:
    """Rows ``S_n f - n ht`` for the requested step counts (unanchored)."""
    out, v, done = [], _values(f).copy(), 0
    for n in sorted(steps):
        for _ in range(n - done):
            v = lax_oleinik_raw(C, v) - ht
        done = n
        out.append(v.copy())
    return np.array(out)


def verify_h_uniqueness(C: CostMatrix, f, k: float, claim_tol: float = 1e-8,
                        tol: float = 1e-6) -> tuple[bool, float]:
    """Check that a claimed ``S f - k t = f`` forces ``k = h``; returns ``(ok, |k - h| t)``."""
    defect = fixed_point_residual(C, f, k * C.t)
    if defect > claim_tol:
        raise InvalidInputError(f"f is not a fixed point for k={k}: defect {defect:.3e}")
    gap = abs(k * C.t - min_mean_cycle(C)[0])
    return gap <= tol, gap


@dataclass
class CriticalValueReport:
    h_subadditive: float
    h_karp: float
    h_alpha: float
    t: float
    depth: int
    K: float
    spread: float
    subadditive_bracket: float
    cycle: list
    kind: dict = field(default_factory=lambda: {"matrix_exact": ["h_karp", "h_alpha"],
                                                 "continuum_estimate": ["h_subadditive", "K"]})

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def critical_value_report(C: CostMatrix, doublings: int = 8) -> CriticalValueReport:
    """Compute ``h`` by Karp, the stationary transport problem and subadditivity."""
    from .transport import alpha_T

    lam, cycle = min_mean_cycle(C)
    h_alpha, _ = alpha_T(C)
    tr = estimate_h_subadditive(C, doublings)
    vals = [tr.h, lam / C.t, h_alpha]
    spread = max(vals) - min(vals)
    return CriticalValueReport(tr.h, lam / C.t, h_alpha, C.t, doublings, tr.K, spread, tr.spread, cycle)


# ---------------------------------------------------------------------------
# viscosity diagnostic


def _axis_layout(space, grid):
    """Index array of shape ``counts`` for a tensor-product grid, plus steps."""
    axes = [np.unique(np.round(grid[:, d], 12)) for d in range(grid.shape[1])]
    counts = [len(a) for a in axes]
    if int(np.prod(counts)) != len(grid):
        raise InvalidInputError("viscosity residual needs a tensor-product grid")
    idx = np.empty(counts, dtype=int)
    pos = [np.searchsorted(a, np.round(grid[:, d], 12)) for d, a in enumerate(axes)]
    idx[tuple(pos)] = np.arange(len(grid))
    steps = []
    for d, a in enumerate(axes):
        gaps = np.diff(a)
        if space.kind == "torus":
            gaps = np.append(gaps, space.periods[d] - (a[-1] - a[0]))
        if len(gaps) == 0 or np.ptp(gaps) > 1e-9 * max(1.0, gaps.max()):
            raise InvalidInputError("viscosity residual needs a uniform grid")
        steps.append(float(gaps.mean()))
    return idx, steps


def viscosity_residual(system: ControlAffineSystem, lagrangian: Lagrangian, f: PotentialField, h: float,
                       proxy_factor: float = 10.0):
    """Max of ``|H(x, df) + h|`` over grid points where ``f`` looks differentiable.

    Returns ``(max residual, table, skipped fraction)``; table rows are
    ``(index, residual or nan, skipped)``.
    """
    space = system.space
    idx, steps = _axis_layout(space, f.grid)
    v = f.values[idx]
    m = idx.ndim
    grads = np.zeros(idx.shape + (m,))
    keep = np.ones(idx.shape, dtype=bool)
    for d, hstep in enumerate(steps):
        fwd_v = np.roll(v, -1, axis=d)
        bwd_v = np.roll(v, 1, axis=d)
        fwd = (fwd_v - v) / hstep
        bwd = (v - bwd_v) / hstep
        if space.kind == "box":
            edge = np.zeros(idx.shape, dtype=bool)
            sl = [slice(None)] * m
            sl[d] = 0
            edge[tuple(sl)] = True
            sl[d] = -1
            edge[tuple(sl)] = True
            keep &= ~edge
        keep &= np.abs(fwd - bwd) <= proxy_factor * hstep
        grads[..., d] = (fwd + bwd) / 2
    order = idx.ravel()
    flat_keep = keep.ravel()
    res = np.full(len(order), np.nan)
    if flat_keep.any():
        pts = f.grid[order[flat_keep]]
        Hval = eval_hamiltonian(system, lagrangian, pts, grads.reshape(-1, m)[flat_keep])
        res[flat_keep] = np.abs(Hval + h)
    table = np.zeros((len(order), 3))
    table[:, 0] = order
    table[:, 1] = res
    table[:, 2] = ~flat_keep
    table = table[np.argsort(order)]
    skipped = float(1 - flat_keep.mean())
    if not flat_keep.any():
        warnings.warn("degenerate potential: every grid point failed the differentiability proxy")
        return float("nan"), table, skipped
    return float(np.nanmax(res)), table, skipped
