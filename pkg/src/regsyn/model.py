"""System definitions and their local linearizations.

Plants, exosystems and controllers are given by parsed expressions; the
linearization at the origin is computed by central finite differences.
All types are immutable after construction and the operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr
from .expr import Expr

ORIGIN_TOL = 1e-12


class ModelError(Exception):
    pass


def _as_exprs(items):
    return tuple(expr.parse(e) if isinstance(e, str) else e for e in items)


def _check_vars(exprs, allowed, what):
    for e in exprs:
        extra = expr.free_vars(e) - set(allowed)
        if extra:
            raise ModelError(f"{what} uses unknown variables {sorted(extra)}")


def x_names(n):
    return tuple(f"x{i + 1}" for i in range(n))


def w_names(p):
    return tuple(f"w{i + 1}" for i in range(p))


def xi_names(nc):
    return tuple(f"xi{i + 1}" for i in range(nc))


@dataclass(frozen=True)
class PlantModel:
    """Plant dx = f(x, u, w), output y = g(x, u, w), reference q(w)."""

    n: int
    p: int
    f: tuple[Expr, ...]
    g: Expr
    q: Expr
    h: Expr = field(init=False)  # tracking error g - q

    def __post_init__(self):
        if len(self.f) != self.n:
            raise ModelError(f"expected {self.n} state equations, got {len(self.f)}")
        allowed = x_names(self.n) + ("u",) + w_names(self.p)
        _check_vars(self.f, allowed, "f")
        _check_vars([self.g], allowed, "g")
        _check_vars([self.q], w_names(self.p), "q")
        object.__setattr__(self, "h", expr.Bin("-", self.g, self.q))
        origin = dict.fromkeys(allowed, 0.0)
        for i, fi in enumerate(self.f):
            if abs(expr.evaluate(fi, origin)) > ORIGIN_TOL:
                raise ModelError(f"f{i + 1}(0,0,0) != 0")
        if abs(expr.evaluate(self.g, origin)) > ORIGIN_TOL:
            raise ModelError("g(0,0,0) != 0")
        if abs(expr.evaluate(self.q, origin)) > ORIGIN_TOL:
            raise ModelError("q(0) != 0")

    @classmethod
    def from_strings(cls, f, g, q, p):
        f = _as_exprs(f)
        return cls(len(f), p, f, expr.parse(g), expr.parse(q))


@dataclass(frozen=True)
class ExosystemModel:
    """Exosystem dw = s(w)."""

    p: int
    s: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.s) != self.p:
            raise ModelError(f"expected {self.p} exosystem equations, got {len(self.s)}")
        _check_vars(self.s, w_names(self.p), "s")
        origin = dict.fromkeys(w_names(self.p), 0.0)
        for i, si in enumerate(self.s):
            if abs(expr.evaluate(si, origin)) > ORIGIN_TOL:
                raise ModelError(f"s{i + 1}(0) != 0")

    @classmethod
    def from_strings(cls, s):
        s = _as_exprs(s)
        return cls(len(s), s)


@dataclass(frozen=True)
class ControllerModel:
    """Controller dxi = phi(xi) + Bc*e, u = lambda(xi)."""

    nc: int
    phi: tuple[Expr, ...]
    lam: Expr
    Bc: tuple[float, ...]

    def __post_init__(self):
        if len(self.phi) != self.nc or len(self.Bc) != self.nc:
            raise ModelError("controller dimension mismatch")
        _check_vars(self.phi, xi_names(self.nc), "phi")
        _check_vars([self.lam], xi_names(self.nc), "lambda")
        origin = dict.fromkeys(xi_names(self.nc), 0.0)
        for i, pe in enumerate(self.phi):
            if abs(expr.evaluate(pe, origin)) > ORIGIN_TOL:
                raise ModelError(f"phi{i + 1}(0) != 0")
        if abs(expr.evaluate(self.lam, origin)) > ORIGIN_TOL:
            raise ModelError("lambda(0) != 0")

    @classmethod
    def from_strings(cls, phi, lam, Bc):
        phi = _as_exprs(phi)
        return cls(len(phi), phi, expr.parse(lam), tuple(float(b) for b in Bc))


@dataclass(frozen=True)
class LinearizedData:
    """Matrices of the local linearization at the origin."""

    A: np.ndarray  # n x n
    B: np.ndarray  # n x 1
    P: np.ndarray  # n x p
    C: np.ndarray  # 1 x n
    D: np.ndarray  # 1 x 1
    Q: np.ndarray  # 1 x p
    S: np.ndarray  # p x p

    def __post_init__(self):
        n = self.A.shape[0]
        p = self.S.shape[0]
        shapes = {
            "A": (n, n), "B": (n, 1), "P": (n, p),
            "C": (1, n), "D": (1, 1), "Q": (1, p), "S": (p, p),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise ModelError(f"matrix {name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def p(self):
        return self.S.shape[0]


def numeric_jacobian(exprs, vars_, point, fixed=None):
    """Central-difference Jacobian of a vector expression map.

    vars_ are the differentiation variables, point their values; fixed holds
    values of any other variables appearing in the expressions.  Step is
    1e-5 * max(1, |point|_inf) per the C^2 smoothness of the maps.
    """
    exprs = list(exprs)
    point = np.asarray(point, dtype=float)
    env = dict(fixed) if fixed else {}
    h = 1e-5 * max(1.0, float(np.max(np.abs(point))) if point.size else 0.0)
    J = np.empty((len(exprs), len(vars_)))
    for j, name in enumerate(vars_):
        for name_k, v_k in zip(vars_, point):
            env[name_k] = float(v_k)
        for i, e in enumerate(exprs):
            env[name] = float(point[j]) + h
            try:
                fp = expr.evaluate(e, env)
                env[name] = float(point[j]) - h
                fm = expr.evaluate(e, env)
            except expr.EvalError as exc:
                raise ModelError(f"jacobian entry ({i},{j}): {exc}") from exc
            env[name] = float(point[j])
            J[i, j] = (fp - fm) / (2.0 * h)
    # central differences carry O(h^2) truncation noise (~1e-10); entries
    # below that level are artifacts of higher-order terms, not structure
    snap = 1e-8 * max(1.0, float(np.max(np.abs(J))))
    J[np.abs(J) < snap] = 0.0
    return J


def linearize(plant: PlantModel, exo: ExosystemModel) -> LinearizedData:
    """All seven linearization matrices, evaluated at the origin."""
    if plant.p != exo.p:
        raise ModelError("plant and exosystem disagree on the exosystem dimension")
    xv, wv = x_names(plant.n), w_names(plant.p)
    all_vars = xv + ("u",) + wv
    origin = np.zeros(len(all_vars))
    Jf = numeric_jacobian(plant.f, all_vars, origin)
    Jh = numeric_jacobian([plant.h], all_vars, origin)
    Js = numeric_jacobian(exo.s, wv, np.zeros(exo.p))
    n = plant.n
    return LinearizedData(
        A=Jf[:, :n],
        B=Jf[:, n:n + 1],
        P=Jf[:, n + 1:],
        C=Jh[:, :n],
        D=Jh[:, n:n + 1],
        Q=Jh[:, n + 1:],
        S=Js,
    )


def controller_jacobians(ctrl: ControllerModel):
    """Linearization (Phi, Lambda) of a controller at the origin."""
    xv = xi_names(ctrl.nc)
    origin = np.zeros(ctrl.nc)
    Phi = numeric_jacobian(ctrl.phi, xv, origin)
    Lam = numeric_jacobian([ctrl.lam], xv, origin)
    return Phi, Lam
