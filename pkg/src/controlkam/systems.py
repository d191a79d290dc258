"""Control-affine systems, Lagrangians and Hamiltonians.

Vector fields and Lagrangians are closed sympy expressions built from
polynomials, ``sin`` and ``cos`` in the state coordinates ``x1..xm`` (and the
controls ``u1..un`` for general Lagrangians).  Every numeric entry point is
vectorized over leading batch axes: states have shape ``(..., m)`` and
controls ``(..., n)``.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import sympy as sp

from .errors import DivergenceError, DomainError, InvalidInputError

_ALLOWED_FUNCS = {sp.sin, sp.cos}
_ALLOWED_NODES = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
                  ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd)


def _screen(text: str, names) -> None:
    # sympify evaluates Python, so only arithmetic on known names gets through
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise InvalidInputError(f"cannot parse expression {text!r}: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise InvalidInputError(f"{type(node).__name__} not allowed in {text!r}")
        if isinstance(node, ast.Name) and node.id not in names:
            raise InvalidInputError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.Call) and (node.keywords or not isinstance(node.func, ast.Name)):
            raise InvalidInputError(f"unsupported call in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise InvalidInputError(f"non-numeric literal in {text!r}")


def state_symbols(m: int):
    return sp.symbols(" ".join(f"x{i + 1}" for i in range(m)), real=True, seq=True)


def control_symbols(n: int):
    return sp.symbols(" ".join(f"u{i + 1}" for i in range(n)), real=True, seq=True)


def parse_expression(text, allowed_symbols) -> sp.Expr:
    """Parse a catalog expression and reject anything outside the catalog."""
    if isinstance(text, (int, float)):
        return sp.nsimplify(text) if float(text).is_integer() else sp.Float(text)
    if isinstance(text, sp.Basic):
        expr = text
    else:
        names = {str(s): s for s in allowed_symbols}
        names.update({"sin": sp.sin, "cos": sp.cos, "pi": sp.pi})
        _screen(str(text), names)
        try:
            expr = sp.sympify(text, locals=names)
        except (sp.SympifyError, SyntaxError, TypeError) as exc:
            raise InvalidInputError(f"cannot parse expression {text!r}: {exc}") from exc
    extra = expr.free_symbols - set(allowed_symbols)
    if extra:
        raise InvalidInputError(f"unknown symbols {sorted(map(str, extra))} in {text!r}")
    for f in expr.atoms(sp.Function):
        if f.func not in _ALLOWED_FUNCS:
            raise InvalidInputError(f"function {f.func} not in the expression catalog")
    for pw in expr.atoms(sp.Pow):
        if not (pw.exp.is_Integer and pw.exp >= 0):
            raise InvalidInputError(f"non-polynomial power {pw} in {text!r}")
    return expr


def _compile(exprs, syms):
    """Vectorized numpy evaluator for a list of expressions in ``syms``."""
    fn = sp.lambdify(list(syms), list(exprs), "numpy")
    k = len(syms)

    def call(*arrays):
        cols = []
        for a in arrays:
            a = np.asarray(a, dtype=float)
            cols.extend(a[..., i] for i in range(a.shape[-1]))
        assert len(cols) == k
        shape = np.broadcast_shapes(*(c.shape for c in cols)) if cols else ()
        vals = fn(*cols)
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in vals], axis=-1)

    return call


@dataclass(frozen=True)
class StateSpace:
    """Flat torus (``extents`` are periods) or box chart (``extents`` are bounds)."""

    kind: str
    extents: tuple

    def __post_init__(self):
        if self.kind not in ("torus", "box"):
            raise InvalidInputError(f"unknown state space kind {self.kind!r}")
        if self.kind == "torus":
            ext = tuple(float(p) for p in self.extents)
            if not ext or min(ext) <= 0:
                raise InvalidInputError("torus periods must be strictly positive")
        else:
            ext = tuple((float(lo), float(hi)) for lo, hi in self.extents)
            if not ext or any(hi <= lo for lo, hi in ext):
                raise InvalidInputError("box bounds must satisfy lo < hi")
        object.__setattr__(self, "extents", ext)

    @classmethod
    def torus(cls, *periods):
        return cls("torus", tuple(periods))

    @classmethod
    def box(cls, *bounds):
        return cls("box", tuple(bounds))

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def periods(self) -> np.ndarray:
        return np.asarray(self.extents, dtype=float)

    @property
    def lower(self) -> np.ndarray:
        if self.kind == "torus":
            return np.zeros(self.dimension)
        return np.array([lo for lo, _ in self.extents])

    @property
    def upper(self) -> np.ndarray:
        if self.kind == "torus":
            return self.periods
        return np.array([hi for _, hi in self.extents])

    def inside(self, x, slack: float = 0.0) -> np.ndarray:
        """Boolean mask over the batch axes (always true on a torus)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "torus":
            return np.all(np.isfinite(x), axis=-1)
        return np.all((x >= self.lower - slack) & (x <= self.upper + slack), axis=-1)

    def canonical(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "torus":
            return np.mod(x, self.periods)
        if not np.all(self.inside(x)):
            raise DomainError(f"state {x} outside box chart {self.extents}")
        return x

    def displacement(self, a, b) -> np.ndarray:
        """Shortest coordinate displacement from ``a`` to ``b``."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.kind == "torus":
            P = self.periods
            d = d - P * np.round(d / P)
        return d

    def distance(self, a, b) -> np.ndarray:
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def uniform_grid(self, counts) -> np.ndarray:
        """Uniform subdivision; torus grids omit the duplicated endpoint."""
        counts = np.broadcast_to(np.atleast_1d(counts), (self.dimension,))
        axes = []
        for c, lo, hi in zip(counts, self.lower, self.upper):
            c = int(c)
            if self.kind == "torus":
                axes.append(lo + (hi - lo) * np.arange(c) / c)
            else:
                axes.append(np.linspace(lo, hi, c))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)


class VectorField:
    """Smooth vector field given by catalog expressions in ``x1..xm``."""

    def __init__(self, components: Sequence, dimension: int | None = None):
        m = dimension if dimension is not None else len(components)
        if len(components) != m:
            raise InvalidInputError(f"expected {m} components, got {len(components)}")
        self.symbols = state_symbols(m)
        self.exprs = tuple(sp.expand(parse_expression(c, self.symbols)) for c in components)
        self._jac_exprs = None
        self._f = None
        self._jac = None

    @property
    def dimension(self) -> int:
        return len(self.exprs)

    def __repr__(self):
        return f"VectorField({[str(e) for e in self.exprs]})"

    def __eq__(self, other):
        return isinstance(other, VectorField) and tuple(map(str, self.exprs)) == tuple(map(str, other.exprs))

    def __hash__(self):
        return hash(tuple(map(str, self.exprs)))

    @property
    def jacobian_exprs(self) -> sp.Matrix:
        if self._jac_exprs is None:
            self._jac_exprs = sp.Matrix(self.exprs).jacobian(sp.Matrix(self.symbols))
        return self._jac_exprs

    def __call__(self, x) -> np.ndarray:
        if self._f is None:
            self._f = _compile(self.exprs, self.symbols)
        return self._f(x)

    def jacobian(self, x) -> np.ndarray:
        """``(..., m, m)`` array with ``J[..., i, j] = d X_i / d x_j``."""
        if self._jac is None:
            self._jac = _compile(list(self.jacobian_exprs), self.symbols)
        m = self.dimension
        flat = self._jac(x)
        return flat.reshape(flat.shape[:-1] + (m, m))

    def bracket(self, other: "VectorField") -> "VectorField":
        """Symbolic Lie bracket ``[self, other] = (D other) self - (D self) other``."""
        X = sp.Matrix(self.exprs)
        Y = sp.Matrix(other.exprs)
        Z = other.jacobian_exprs * X - self.jacobian_exprs * Y
        return VectorField([sp.expand(z) for z in Z], self.dimension)

    def apply(self, fn_expr: sp.Expr) -> sp.Expr:
        """Lie derivative ``X f`` of a scalar expression."""
        return sp.expand(sum(c * sp.diff(fn_expr, s) for c, s in zip(self.exprs, self.symbols)))

    def is_zero(self) -> bool:
        return all(e == 0 for e in self.exprs)


@dataclass
class ControlAffineSystem:
    """``x' = X0(x) + sum_i u_i X_i(x)`` on a state space."""

    space: StateSpace
    drift: VectorField
    controls: list
    name: str = "custom"

    def __post_init__(self):
        m = self.space.dimension
        if not self.controls:
            raise InvalidInputError("a control-affine system needs at least one control field")
        for f in [self.drift, *self.controls]:
            if f.dimension != m:
                raise InvalidInputError("vector field dimension does not match the state space")

    @property
    def m(self) -> int:
        return self.space.dimension

    @property
    def n(self) -> int:
        return len(self.controls)

    def _fused(self):
        # one lambdified call per quantity keeps batched integrators cheap
        if not hasattr(self, "_fns"):
            xs, us = state_symbols(self.m), control_symbols(self.n)
            B = sp.Matrix.hstack(*[sp.Matrix(X.exprs) for X in self.controls])
            F = sp.Matrix(self.drift.exprs) + B * sp.Matrix(us)
            self._fns = (_compile(list(F), (*xs, *us)),
                         _compile(list(F.jacobian(sp.Matrix(xs))), (*xs, *us)),
                         _compile(list(B), xs))
        return self._fns

    def control_matrix(self, x) -> np.ndarray:
        """``(..., m, n)`` matrix whose columns are the control fields."""
        flat = self._fused()[2](x)
        return flat.reshape(flat.shape[:-1] + (self.m, self.n))

    def velocity(self, x, u) -> np.ndarray:
        """Dynamics without domain checks (used inside integrators)."""
        return self._fused()[0](x, u)

    def velocity_jacobian(self, x, u) -> np.ndarray:
        """``d/dx`` of the dynamics, shape ``(..., m, m)``."""
        flat = self._fused()[1](x, u)
        return flat.reshape(flat.shape[:-1] + (self.m, self.m))


def eval_dynamics(system: ControlAffineSystem, state, control) -> np.ndarray:
    """Velocity ``X0(x) + sum u_i X_i(x)``; raises DomainError outside a box chart."""
    x = np.asarray(state, dtype=float)
    u = np.asarray(control, dtype=float)
    if u.shape[-1] != system.n or x.shape[-1] != system.m:
        raise InvalidInputError("state/control shape does not match the system")
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("control must be finite")
    if not np.all(system.space.inside(x)):
        raise DomainError(f"state {x} outside box chart {system.space.extents}")
    return system.velocity(x, u)


class Lagrangian:
    """Running cost ``L(x, u)``.

    ``kind`` is one of ``"pure-quadratic"`` (``|u|^2/2``),
    ``"quadratic-with-state-weight"`` (``u^T A(x) u / 2 + b(x)``) or
    ``"general-expression"``.
    """

    KINDS = ("pure-quadratic", "quadratic-with-state-weight", "general-expression")

    def __init__(self, kind: str, m: int, n: int, A=None, b=0, expr=None, control_bound: float | None = None):
        if kind not in self.KINDS:
            raise InvalidInputError(f"unknown Lagrangian kind {kind!r}")
        self.kind = kind
        self.m, self.n = m, n
        self.xs = state_symbols(m)
        self.us = control_symbols(n)
        self.control_bound = control_bound
        if kind == "pure-quadratic":
            A_expr = sp.eye(n)
            b_expr = sp.Integer(0)
        elif kind == "quadratic-with-state-weight":
            if A is None:
                A = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
            A = np.atleast_2d(np.asarray(A, dtype=object))
            if A.shape != (n, n):
                raise InvalidInputError(f"weight matrix must be {n}x{n}")
            A_expr = sp.Matrix(n, n, lambda i, j: parse_expression(A[i, j], self.xs))
            if A_expr != A_expr.T:
                raise InvalidInputError("weight matrix must be symmetric")
            b_expr = parse_expression(b, self.xs)
        else:
            if expr is None:
                raise InvalidInputError("general-expression Lagrangian needs 'expr'")
            A_expr = b_expr = None
        if A_expr is not None:
            u = sp.Matrix(self.us)
            self.expr = sp.expand((u.T * A_expr * u)[0, 0] / 2 + b_expr)
            self._A = _compile(list(A_expr), self.xs)
            self._b = _compile([b_expr], self.xs)
            self.A_expr, self.b_expr = A_expr, b_expr
        else:
            self.expr = parse_expression(expr, (*self.xs, *self.us))
            self.A_expr = self.b_expr = None
        syms = (*self.xs, *self.us)
        self._L = _compile([self.expr], syms)
        self._Lx = _compile([sp.diff(self.expr, s) for s in self.xs], syms)
        self._Lu = _compile([sp.diff(self.expr, s) for s in self.us], syms)
        self._Luu = _compile(list(sp.hessian(self.expr, self.us)), syms)

    @classmethod
    def pure_quadratic(cls, m, n):
        return cls("pure-quadratic", m, n)

    @classmethod
    def quadratic(cls, m, n, A=None, b=0):
        return cls("quadratic-with-state-weight", m, n, A=A, b=b)

    @classmethod
    def general(cls, m, n, expr, control_bound=50.0):
        return cls("general-expression", m, n, expr=expr, control_bound=control_bound)

    @property
    def is_quadratic(self) -> bool:
        return self.A_expr is not None

    def __repr__(self):
        return f"Lagrangian({self.kind}: {self.expr})"

    def __call__(self, x, u) -> np.ndarray:
        return self._L(x, u)[..., 0]

    def grad_x(self, x, u) -> np.ndarray:
        return self._Lx(x, u)

    def grad_u(self, x, u) -> np.ndarray:
        return self._Lu(x, u)

    def hess_u(self, x, u) -> np.ndarray:
        flat = self._Luu(x, u)
        return flat.reshape(flat.shape[:-1] + (self.n, self.n))

    def weight(self, x) -> np.ndarray:
        flat = self._A(x)
        return flat.reshape(flat.shape[:-1] + (self.n, self.n))

    def offset(self, x) -> np.ndarray:
        return self._b(x)[..., 0]

    def optimal_control(self, system: ControlAffineSystem, x, p) -> np.ndarray:
        """Maximizer ``u* = A(x)^{-1} B(x)^T p`` (quadratic kinds only)."""
        if not self.is_quadratic:
            raise InvalidInputError("closed-form maximizer needs a quadratic Lagrangian")
        Btp = np.einsum("...mn,...m->...n", system.control_matrix(x), np.asarray(p, dtype=float))
        if self.kind == "pure-quadratic":
            return Btp
        return np.linalg.solve(self.weight(x), Btp[..., None])[..., 0]


def eval_hamiltonian(system: ControlAffineSystem, lagrangian: Lagrangian, state, covector,
                     cap: float = 1e8, starts: int = 8) -> np.ndarray:
    """``sup_u [p . F(x, u) - L(x, u)]``.

    Quadratic Lagrangians use the closed form; general expressions run a
    damped Newton iteration from several deterministic starting controls.
    """
    x = np.asarray(state, dtype=float)
    p = np.asarray(covector, dtype=float)
    if lagrangian.is_quadratic:
        u = lagrangian.optimal_control(system, x, p)
        Btp = np.einsum("...mn,...m->...n", system.control_matrix(x), p)
        drift = np.einsum("...m,...m->...", p, system.drift(x))
        return drift + 0.5 * np.einsum("...n,...n->...", Btp, u) - lagrangian.offset(x)
    if lagrangian.control_bound is None:
        raise InvalidInputError("general-expression Hamiltonian needs a control_bound")
    x, p = np.broadcast_arrays(x, p)
    out = np.empty(x.shape[:-1])
    for idx in np.ndindex(out.shape):
        out[idx] = _hamiltonian_newton(system, lagrangian, x[idx], p[idx], cap, starts)
    return out


def _hamiltonian_newton(system, lagrangian, x, p, cap, starts):
    bound = lagrangian.control_bound
    n = system.n
    B = system.control_matrix(x)
    Btp = B.T @ p
    base = float(p @ system.drift(x))

    def phi(u):
        return base + float(Btp @ u) - float(lagrangian(x, u))

    rng = np.random.default_rng(0)
    guesses = [np.zeros(n)] + [rng.uniform(-1, 1, n) * bound / 4 for _ in range(starts - 1)]
    best = -np.inf
    for u in guesses:
        for _ in range(100):
            g = Btp - lagrangian.grad_u(x, u)
            Hs = lagrangian.hess_u(x, u)
            try:
                step = np.linalg.solve(Hs, g)
            except np.linalg.LinAlgError:
                step = g
            if np.min(np.linalg.eigvalsh(Hs)) <= 0:
                step = g  # ascent direction when not locally concave
            t = 1.0
            f0 = phi(u)
            while t > 1e-12 and phi(u + t * step) < f0 - 1e-14:
                t *= 0.5
            u = u + t * step
            if np.max(np.abs(u)) > bound:
                raise DivergenceError(f"Hamiltonian maximizer left the control bound at x={x}, p={p}")
            if np.linalg.norm(t * step) < 1e-13:
                break
        val = phi(u)
        if val > cap:
            raise DivergenceError(f"Hamiltonian exceeds cap {cap} at x={x}, p={p}")
        best = max(best, val)
    return best


@dataclass
class ConditionStatus:
    status: str  # satisfied | violated | unchecked
    witness: tuple | None = None
    detail: str = ""

    def __post_init__(self):
        if self.status == "violated" and self.witness is None:
            raise InvalidInputError("a violated condition must carry a witness")


@dataclass
class ConditionReport:
    growth: ConditionStatus
    state_derivative: ConditionStatus
    convexity: ConditionStatus
    generating: ConditionStatus
    constants: dict = field(default_factory=dict)
    generating_order: int | None = None
    sample_points: int = 0
    control_radii: tuple = ()

    def as_dict(self) -> dict:
        def st(s):
            w = None if s.witness is None else [np.asarray(v).tolist() for v in s.witness]
            return {"status": s.status, "witness": w, "detail": s.detail}

        return {
            "growth": st(self.growth),
            "state_derivative": st(self.state_derivative),
            "convexity": st(self.convexity),
            "generating": st(self.generating),
            "constants": self.constants,
            "generating_order": self.generating_order,
            "sample_points": self.sample_points,
            "control_radii": list(self.control_radii),
        }


def _control_samples(n: int, radii) -> np.ndarray:
    dirs = [np.eye(n)[i] * s for i in range(n) for s in (1.0, -1.0)]
    if n > 1:
        dirs.append(np.ones(n) / np.sqrt(n))
        dirs.append(-np.ones(n) / np.sqrt(n))
    us = [np.zeros(n)] + [r * d for r in radii for d in dirs]
    return np.array(us)


def check_conditions(system: ControlAffineSystem, lagrangian: Lagrangian, sample_grid,
                     k_max: int = 4, radii=(0.25, 0.5, 1.0, 2.0, 4.0, 8.0)) -> ConditionReport:
    """Sample-based check of the growth, derivative, convexity and generating hypotheses."""
    from .geometry import k_generating_check

    X = np.atleast_2d(np.asarray(sample_grid, dtype=float))
    if X.size == 0:
        raise InvalidInputError("sample grid must be nonempty")
    U = _control_samples(system.n, radii)
    XX = np.repeat(X[:, None, :], len(U), axis=1)
    UU = np.broadcast_to(U[None], (len(X), len(U), system.n))
    Lv = lagrangian(XX, UU)
    unorm = np.linalg.norm(UU, axis=-1)
    constants = {}

    # growth: C1 |u|^q + K1 <= L <= C2 |u|^2 + K2
    K2 = float(np.max(Lv[:, 0]))
    K1 = float(np.min(Lv[:, 0]))
    nz = unorm > 0
    upper_ratio = (Lv - K2)[nz] / unorm[nz] ** 2
    C2 = float(max(np.max(upper_ratio), 0.0))
    lower_excess = np.maximum(Lv - K1, 0.0)
    r_hi, r_lo = max(radii), sorted(radii)[-2]
    e_hi = np.min(lower_excess[np.isclose(unorm, r_hi)])
    e_lo = np.min(lower_excess[np.isclose(unorm, r_lo)])
    q = float(np.log(e_hi / e_lo) / np.log(r_hi / r_lo)) if e_hi > 0 and e_lo > 0 else 0.0
    C1 = float(e_hi / r_hi ** q) if q > 0 else 0.0
    # upper quadratic growth fails if the ratio still grows at the outer radii
    r_outer = np.isclose(unorm, r_hi)
    r_inner = np.isclose(unorm, r_lo)
    ratio_outer = np.max((Lv - K2)[r_outer] / r_hi ** 2)
    ratio_inner = np.max((Lv - K2)[r_inner] / r_lo ** 2)
    constants.update(C1=C1, q=q, K1=K1, C2=C2, K2=K2)
    if ratio_outer > 1.5 * max(ratio_inner, 1e-12) and ratio_outer > 1e-9:
        flat = np.argmax(np.where(r_outer, Lv, -np.inf))
        i, j = np.unravel_index(flat, Lv.shape)
        growth = ConditionStatus("violated", (X[i], U[j]), "L grows faster than |u|^2")
    elif q <= 1.0 or C1 <= 0:
        flat = np.argmin(np.where(r_outer, Lv, np.inf))
        i, j = np.unravel_index(flat, Lv.shape)
        growth = ConditionStatus("violated", (X[i], U[j]), f"fitted lower exponent q={q:.3g} <= 1")
    else:
        growth = ConditionStatus("satisfied", detail="constants fitted on samples; K1 may be <= 0")

    # |dL/dx| <= C3 |u|^2
    Lx = np.linalg.norm(lagrangian.grad_x(XX, UU), axis=-1)
    at_zero = Lx[:, 0]
    if np.max(at_zero) > 1e-12:
        i = int(np.argmax(at_zero))
        state_deriv = ConditionStatus("violated", (X[i], U[0]),
                                      f"|dL/dx| = {at_zero[i]:.3g} > C3*0 at u=0")
        constants["C3"] = float("inf")
    else:
        C3 = float(np.max(Lx[nz] / unorm[nz] ** 2))
        constants["C3"] = C3
        state_deriv = ConditionStatus("satisfied", detail="C3 arbitrary" if C3 == 0 else "")

    # positive definite Hessian in u
    Huu = lagrangian.hess_u(XX, UU)
    lam = np.linalg.eigvalsh(Huu)[..., 0]
    if np.min(lam) <= 0:
        i, j = np.unravel_index(int(np.argmin(lam)), lam.shape)
        convexity = ConditionStatus("violated", (X[i], U[j]), f"min eigenvalue {lam[i, j]:.3g}")
    else:
        convexity = ConditionStatus("satisfied", detail=f"min eigenvalue {np.min(lam):.3g}")
    constants["hessian_min_eig"] = float(np.min(lam))

    order = None
    for k in range(1, k_max + 1):
        if all(k_generating_check(system.controls, x, k)[0] for x in X):
            order = k
            break
    if order is not None and order <= 3:
        generating = ConditionStatus("satisfied", detail=f"{order}-generating on samples")
    elif order is not None:
        generating = ConditionStatus("violated", (X[0], np.zeros(system.n)),
                                     f"{order}-generating but not 3-generating")
    else:
        bad = next(x for x in X if not k_generating_check(system.controls, x, k_max)[0])
        generating = ConditionStatus("violated", (bad, np.zeros(system.n)),
                                     f"not {k_max}-generating")
    return ConditionReport(growth, state_deriv, convexity, generating, constants, order,
                           len(X), tuple(radii))


# ---------------------------------------------------------------------------
# built-in catalog

SHEAR_BOX = ((-2.0, 2.0), (-1.5, 1.5))


def shear_family(k: int, box=SHEAR_BOX) -> ControlAffineSystem:
    """``x1' = u1, x2' = x1^2 + u2 x1^k`` on a box chart."""
    space = StateSpace.box(*box)
    return ControlAffineSystem(space, VectorField([0, "x1**2"]),
                               [VectorField([1, 0]), VectorField([0, f"x1**{k}"])],
                               name=f"paper-example-k{k}")


def integrator_1d(period: float = 2 * np.pi) -> ControlAffineSystem:
    return ControlAffineSystem(StateSpace.torus(period), VectorField([0]), [VectorField([1])],
                               name="integrator-1d")


def heisenberg_like_torus() -> ControlAffineSystem:
    """Two controls on T^2, 2-generating everywhere."""
    space = StateSpace.torus(2 * np.pi, 2 * np.pi)
    return ControlAffineSystem(space, VectorField([0, 0]),
                               [VectorField([1, 0]), VectorField([0, "sin(x1)"])],
                               name="torus-2d-heisenberg-like")


CATALOG = {
    "integrator-1d": (integrator_1d, lambda: Lagrangian.quadratic(1, 1, A=[[1]], b=1)),
    "paper-example-k2": (lambda: shear_family(2), lambda: Lagrangian.pure_quadratic(2, 2)),
    "paper-example-k3": (lambda: shear_family(3), lambda: Lagrangian.pure_quadratic(2, 2)),
    "paper-example-k4": (lambda: shear_family(4), lambda: Lagrangian.pure_quadratic(2, 2)),
    "torus-2d-heisenberg-like": (heisenberg_like_torus,
                                 lambda: Lagrangian.quadratic(2, 2, b=1)),
}


def catalog_system(name: str):
    """Return ``(system, default_lagrangian)`` for a catalog name."""
    try:
        make_sys, make_lag = CATALOG[name]
    except KeyError:
        raise InvalidInputError(f"unknown catalog system {name!r}; known: {sorted(CATALOG)}") from None
    return make_sys(), make_lag()
