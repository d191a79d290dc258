"""Exact discrete optimal transport and the stationary (closed-loop) problem."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .cost import CostMatrix
from .errors import DisconnectedError, InfeasibleError, InvalidInputError, NonConvergenceError


@dataclass
class DiscreteMeasure:
    grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise InvalidInputError("measure weights must be finite and nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidInputError(f"measure weights sum to {self.weights.sum()!r}, not 1")

    @classmethod
    def dirac(cls, grid, i):
        w = np.zeros(len(grid))
        w[i] = 1.0
        return cls(grid, w)

    @classmethod
    def uniform(cls, grid):
        n = len(grid)
        return cls(grid, np.full(n, 1.0 / n))


@dataclass
class TransportPlan:
    grid: np.ndarray
    matrix: np.ndarray
    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if np.any(self.matrix < 0):
            raise InvalidInputError("plan weights must be nonnegative")
        if (np.max(np.abs(self.matrix.sum(axis=1) - self.mu)) > 1e-10
                or np.max(np.abs(self.matrix.sum(axis=0) - self.nu)) > 1e-10):
            raise InvalidInputError("plan marginals do not match")

    def support(self, eps: float = 1e-12):
        return np.argwhere(self.matrix > eps)

    def cost(self, C) -> float:
        E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
        mask = self.matrix > 0
        return float(np.sum(E[mask] * self.matrix[mask]))

    def triplets(self, eps: float = 0.0):
        idx = np.argwhere(self.matrix > eps)
        return [(int(i), int(j), float(self.matrix[i, j])) for i, j in idx]


@dataclass
class DualPair:
    f: np.ndarray
    g: np.ndarray

    def value(self, mu, nu) -> float:
        return float(np.dot(nu, self.g) - np.dot(mu, self.f))

    def max_violation(self, C) -> float:
        """``max(g(y) - f(x) - C[x, y])`` over finite entries (<= 0 when feasible)."""
        E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
        fin = np.isfinite(E)
        return float(np.max((self.g[None, :] - self.f[:, None] - E)[fin]))


def _weights(m) -> np.ndarray:
    return np.asarray(m.weights if isinstance(m, DiscreteMeasure) else m, dtype=float)


# ---------------------------------------------------------------------------
# network simplex


def _network_simplex(cost, supply, demand):
    """Min-cost flow from ``supply`` rows to ``demand`` columns over finite arcs.

    Artificial arcs through a root node carry a big-M cost and form the
    starting tree; entering arcs follow Bland's rule (smallest eligible
    index) and so do leaving arcs.  Returns ``(flow, pi_rows, pi_cols)`` with
    reduced costs ``cost + pi_row - pi_col >= 0`` on every finite arc.
    """
    m, n = cost.shape
    root = m + n
    fin = np.argwhere(np.isfinite(cost))
    big = (m + n + 1) * (float(np.max(np.abs(cost[np.isfinite(cost)]), initial=0.0)) + 1.0)
    tail = np.concatenate([fin[:, 0], np.arange(m), np.full(n, root)])
    head = np.concatenate([m + fin[:, 1], np.full(m, root), m + np.arange(n)])
    c = np.concatenate([cost[fin[:, 0], fin[:, 1]], np.full(m + n, big)])
    A = len(fin)
    flow = np.concatenate([np.zeros(A), supply, demand]).astype(float)
    tree = set(range(A, A + m + n))
    scale = max(1.0, float(np.max(np.abs(c))))
    eps = 1e-12 * scale
    for _ in range(50 * (A + m + n) + 1000):
        adj = [[] for _ in range(m + n + 1)]
        for a in tree:
            adj[tail[a]].append(a)
            adj[head[a]].append(a)
        pi = np.zeros(m + n + 1)
        parent = np.full(m + n + 1, -1)
        depth = np.zeros(m + n + 1, dtype=int)
        seen = np.zeros(m + n + 1, dtype=bool)
        seen[root] = True
        q = deque([root])
        while q:
            v = q.popleft()
            for a in adj[v]:
                w = head[a] if tail[a] == v else tail[a]
                if not seen[w]:
                    seen[w] = True
                    parent[w], depth[w] = a, depth[v] + 1
                    # tree arcs have zero reduced cost c + pi_tail - pi_head
                    pi[w] = pi[v] + c[a] if w == head[a] else pi[v] - c[a]
                    q.append(w)
        rc = c + pi[tail] - pi[head]
        cand = np.flatnonzero(rc < -eps)
        if not len(cand):
            return flow[:A], fin, pi[:m], pi[m:m + n], flow[A:]
        e = int(cand[0])
        # cycle: e = (u -> v) then tree path v -> ... -> u; walk both ends up to the LCA
        u, v = tail[e], head[e]
        fwd, bwd = [], []  # arcs traversed along / against the push direction
        a_, b_ = u, v
        up_u, up_v = [], []
        while a_ != b_:
            if depth[a_] >= depth[b_]:
                up_u.append(a_)
                a_ = tail[parent[a_]] if head[parent[a_]] == a_ else head[parent[a_]]
            else:
                up_v.append(b_)
                b_ = tail[parent[b_]] if head[parent[b_]] == b_ else head[parent[b_]]
        # flow moves u -> v -> (up to lca) -> (down to u)
        for x in up_v:
            a = parent[x]
            (fwd if tail[a] == x else bwd).append(a)
        for x in up_u:
            a = parent[x]
            (fwd if head[a] == x else bwd).append(a)
        if bwd:
            theta = min(flow[a] for a in bwd)
            leaving = min(a for a in bwd if flow[a] <= theta)
        else:  # pragma: no cover - unbounded cannot happen with nonnegative cycle costs
            raise InfeasibleError("unbounded transport problem")
        for a in fwd:
            flow[a] += theta
        for a in bwd:
            flow[a] = max(flow[a] - theta, 0.0)
        flow[e] += theta
        tree.discard(leaving)
        tree.add(e)
    raise NonConvergenceError("network simplex exceeded its pivot budget")  # pragma: no cover


def solve_ot(C, mu, nu):
    """Exact optimal coupling, its cost and an optimal dual pair.

    The problem is solved on the supports of ``mu`` and ``nu``; potentials are
    then extended to the whole grid by ``g(y) = min_x C[x,y] + f(x)`` over
    supported ``x`` and ``f(x) = max_y g(y) - C[x,y]``, which keeps the pair
    feasible without changing its value.
    """
    E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    grid = C.grid if isinstance(C, CostMatrix) else np.arange(len(E), dtype=float)[:, None]
    a, b = _weights(mu), _weights(nu)
    if len(a) != E.shape[0] or len(b) != E.shape[1]:
        raise InvalidInputError("measures and cost matrix sizes differ")
    for w in (a, b):
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidInputError("marginals must be probability vectors")
    rows, cols = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    sub = E[np.ix_(rows, cols)]
    flow, arcs, pr, pc, art = _network_simplex(sub, a[rows], b[cols])
    if np.any(art > 1e-12):
        raise InfeasibleError("no coupling of the marginals uses only finite costs")
    plan = np.zeros(E.shape)
    plan[rows[arcs[:, 0]], cols[arcs[:, 1]]] = flow
    # rounding can leave marginals off by an ulp; nothing is rescaled
    f = np.full(len(a), np.nan)
    f[rows] = pr
    with np.errstate(invalid="ignore"):
        g = np.min(E[rows] + f[rows, None], axis=0)
    finite_g = np.isfinite(g)
    g[~finite_g] = np.max(g[finite_g]) if finite_g.any() else 0.0
    others = np.setdiff1d(np.arange(len(a)), rows)
    if len(others):
        slack = g[None, :] - E[others]
        slack[~np.isfinite(slack)] = -np.inf
        fo = slack.max(axis=1)
        fo[~np.isfinite(fo)] = np.min(f[rows])
        f[others] = fo
    duals = DualPair(f, g)
    tp = TransportPlan(grid, plan, a, b)
    return tp, tp.cost(E), duals


def slackness_violation(C, plan: TransportPlan, duals: DualPair, eps: float = 1e-12) -> float:
    E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    idx = plan.support(eps)
    if not len(idx):
        return 0.0
    i, j = idx[:, 0], idx[:, 1]
    return float(np.max(np.abs(duals.g[j] - duals.f[i] - E[i, j])))


# ---------------------------------------------------------------------------
# stationary problem


def _prune(E):
    """Nodes that can start an infinite walk over finite arcs."""
    alive = np.ones(len(E), dtype=bool)
    fin = np.isfinite(E)
    while True:
        keep = alive & (fin[:, alive].any(axis=1) if alive.any() else False)
        if np.array_equal(keep, alive):
            return alive
        alive = keep


def _evaluate(E, pol, nodes):
    """Cycle gains and biases of a positional policy (Howard evaluation step)."""
    eta, bias = {}, {}
    cycles = []
    for s in nodes:
        if s in eta:
            continue
        path, pos, v = [], {}, s
        while v not in eta and v not in pos:
            pos[v] = len(path)
            path.append(v)
            v = pol[v]
        if v in eta:
            start = len(path)
        else:
            start = pos[v]
            cyc = path[start:]
            k = cyc.index(min(cyc))
            cyc = cyc[k:] + cyc[:k]
            mean = sum(E[cyc[i], cyc[(i + 1) % len(cyc)]] for i in range(len(cyc))) / len(cyc)
            cycles.append((mean, cyc))
            eta[cyc[0]], bias[cyc[0]] = mean, 0.0
            for i in range(len(cyc) - 1, 0, -1):
                w = cyc[i]
                eta[w] = mean
                bias[w] = E[w, pol[w]] - mean + bias[pol[w]]
        for w in reversed(path[:start]):
            eta[w] = eta[pol[w]]
            bias[w] = E[w, pol[w]] - eta[w] + bias[pol[w]]
    return eta, bias, cycles


def _policy_iteration(E, max_iter: int = 10_000):
    alive = _prune(E)
    nodes = [int(v) for v in np.flatnonzero(alive)]
    if not nodes:
        raise DisconnectedError("no finite cycle in the cost matrix")
    W = np.where(alive[None, :], E, np.inf)
    scale = max(1.0, float(np.max(np.abs(W[np.isfinite(W)]))))
    tol = 1e-12 * scale
    pol = {v: int(np.argmin(W[v])) for v in nodes}
    for _ in range(max_iter):
        eta, bias, cycles = _evaluate(W, pol, nodes)
        changed = False
        et = np.array([eta.get(w, np.inf) for w in range(len(W))])
        bs = np.array([bias.get(w, 0.0) for w in range(len(W))])
        for v in nodes:
            row = W[v]
            reach = np.where(np.isfinite(row), et, np.inf)
            best_eta = reach.min()
            if best_eta < eta[v] - tol:
                cand = np.flatnonzero(reach <= best_eta + tol)
                pol[v] = int(cand[np.argmin(row[cand] + bs[cand])])
                changed = True
                continue
            same = np.flatnonzero(np.isfinite(row) & (np.abs(et - eta[v]) <= tol))
            vals = row[same] - eta[v] + bs[same]
            k = int(np.argmin(vals))
            if vals[k] < bias[v] - tol and same[k] != pol[v]:
                pol[v] = int(same[k])
                changed = True
        if not changed:
            return min(cycles, key=lambda mc: (mc[0], mc[1]))
    raise NonConvergenceError("policy iteration did not settle")  # pragma: no cover


def alpha_T(C):
    """Minimum of ``<C, P>/t`` over stationary probability plans ``P``.

    Extreme points of the stationary polytope are uniform measures on simple
    cycles, so the optimum is computed by policy iteration on positional
    policies and returned with the uniform plan on an optimal cycle.
    """
    E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    t = C.t if isinstance(C, CostMatrix) else 1.0
    grid = C.grid if isinstance(C, CostMatrix) else np.arange(len(E), dtype=float)[:, None]
    _, cyc = _policy_iteration(E)
    plan = np.zeros(E.shape)
    L = len(cyc)
    for i in range(L):
        plan[cyc[i], cyc[(i + 1) % L]] += 1.0 / L
    marg = plan.sum(axis=1)
    tp = TransportPlan(grid, plan, marg, plan.sum(axis=0))
    value = tp.cost(E)
    return (value / t if t > 0 else value), tp


def interpolate_measure(P1: TransportPlan, P2: TransportPlan) -> TransportPlan:
    """Glue ``P1: nu1 -> nu`` and ``P2: nu -> nu2`` through the shared marginal."""
    mid1, mid2 = P1.matrix.sum(axis=0), P2.matrix.sum(axis=1)
    gap = float(np.max(np.abs(mid1 - mid2)))
    if gap > 1e-10:
        raise InvalidInputError(f"middle marginals differ by {gap:.3e}")
    nu = (mid1 + mid2) / 2
    inv = np.zeros_like(nu)
    inv[nu > 0] = 1.0 / nu[nu > 0]
    glued = (P1.matrix * inv[None, :]) @ P2.matrix
    return TransportPlan(P1.grid, glued, P1.mu, P2.nu)


def split_through_midpoints(plan: TransportPlan, argmin) -> tuple[TransportPlan, TransportPlan]:
    """Route every pair ``(x, y)`` of ``plan`` through its recorded midpoint ``argmin[x, y]``.

    ``argmin`` comes from :func:`~controlkam.cost.minplus_compose`; the two
    returned plans share the middle marginal, so gluing them gives back a plan
    from ``plan.mu`` to ``plan.nu``.
    """
    Z = np.asarray(argmin)
    n = len(plan.matrix)
    P1, P2 = np.zeros((n, n)), np.zeros((n, n))
    for x, y in plan.support(0.0):
        z = Z[x, y]
        if z < 0:
            raise InvalidInputError(f"pair ({x}, {y}) has no finite midpoint")
        w = plan.matrix[x, y]
        P1[x, z] += w
        P2[z, y] += w
    mid = P1.sum(axis=0)
    return TransportPlan(plan.grid, P1, plan.mu, mid), TransportPlan(plan.grid, P2, mid, plan.nu)


def mather_support_check(plan: TransportPlan, g, h: float, t: float, C, strict: bool = True) -> float:
    """Largest ``|C[x,y] - g(y) + g(x) - h t|`` over the support of a stationary plan."""
    from .weakkam import fixed_point_residual

    E = C.entries if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    gv = np.asarray(g.values if hasattr(g, "values") else g, dtype=float)
    if strict:
        defect = fixed_point_residual(E, gv, h * t)
        if defect > 1e-6:
            raise InvalidInputError(f"g is not a fixed point: defect {defect:.3e}")
        stat = float(np.max(np.abs(plan.matrix.sum(axis=0) - plan.matrix.sum(axis=1))))
        avg = abs(plan.cost(E) / t - h)
        if stat > 1e-10 or avg > 1e-6:
            raise InvalidInputError(f"plan is not an optimal stationary plan: defect {max(stat, avg):.3e}")
    idx = plan.support()
    i, j = idx[:, 0], idx[:, 1]
    return float(np.max(np.abs(E[i, j] - gv[j] + gv[i] - h * t)))
