"""Regulator-equation residuals, immersions and the boost-converter PDE.

The first half verifies candidate solutions (pi, gamma) of the nonlinear
regulator equations and candidate immersions at sample points.  The second
half solves the boost-converter regulator PDE: on circles of constant w1
and radius rho the PDE reduces to a scalar periodic ODE, solved per circle
by fixed-step RK4 and a fixed-point iteration on the initial value.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .expr import Expr
from .model import ExosystemModel, PlantModel, _as_exprs, numeric_jacobian, w_names

ORIGIN_TOL = 1e-12
DENOM_GUARD = 1e-12


class RegulatorError(Exception):
    pass


# ------------------------------------------------------ residual checkers

@dataclass(frozen=True)
class RegulatorSolution:
    """Candidate maps pi: W -> X and gamma: W -> U."""

    pi: tuple[Expr, ...]
    gamma: Expr
    radius: float = 0.3

    def __post_init__(self):
        origin = {f"w{i + 1}": 0.0 for i in range(9)}
        for i, e in enumerate(self.pi):
            if abs(expr.evaluate(e, origin)) > ORIGIN_TOL:
                raise RegulatorError(f"pi{i + 1}(0) != 0")
        if abs(expr.evaluate(self.gamma, origin)) > ORIGIN_TOL:
            raise RegulatorError("gamma(0) != 0")

    @classmethod
    def from_strings(cls, pi, gamma, radius=0.3):
        return cls(_as_exprs(pi), expr.parse(gamma), radius)


@dataclass(frozen=True)
class ImmersionMap:
    """Candidate immersion tau: W -> E into a target system (phi, lambda)."""

    tau: tuple[Expr, ...]      # in w variables
    phi: tuple[Expr, ...]      # in xi variables
    lam: Expr                  # in xi variables

    def __post_init__(self):
        origin = {f"w{i + 1}": 0.0 for i in range(9)}
        for i, e in enumerate(self.tau):
            if abs(expr.evaluate(e, origin)) > ORIGIN_TOL:
                raise RegulatorError(f"tau{i + 1}(0) != 0")

    @classmethod
    def from_strings(cls, tau, phi, lam):
        return cls(_as_exprs(tau), _as_exprs(phi), expr.parse(lam))


def regulator_residual(sol: RegulatorSolution, plant: PlantModel,
                       exo: ExosystemModel, samples):
    """Max residuals of the nonlinear regulator equations over samples.

    residual1 = max || dpi/dw s(w) - f(pi(w), gamma(w), w) ||_inf
    residual2 = max | h(pi(w), gamma(w), w) |
    """
    wv = w_names(exo.p)
    r1 = r2 = 0.0
    for w in samples:
        w = np.asarray(w, dtype=float)
        env = dict(zip(wv, map(float, w)))
        try:
            dpi = numeric_jacobian(sol.pi, wv, w)
            s_val = np.array([expr.evaluate(e, env) for e in exo.s])
            pi_val = [expr.evaluate(e, env) for e in sol.pi]
            g_val = expr.evaluate(sol.gamma, env)
            full = dict(env)
            full.update({f"x{i + 1}": v for i, v in enumerate(pi_val)})
            full["u"] = g_val
            f_val = np.array([expr.evaluate(e, full) for e in plant.f])
            h_val = expr.evaluate(plant.h, full)
        except expr.EvalError as exc:
            raise RegulatorError(f"evaluation failed at w = {w.tolist()}: {exc}") from exc
        r1 = max(r1, float(np.max(np.abs(dpi @ s_val - f_val))))
        r2 = max(r2, abs(h_val))
    return r1, r2


def immersion_residual(im: ImmersionMap, exo: ExosystemModel, gamma: Expr, samples):
    """Max residuals of the immersion conditions over samples.

    residual1 = max || dtau/dw s(w) - phi(tau(w)) ||_inf
    residual2 = max | gamma(w) - lambda(tau(w)) |
    """
    wv = w_names(exo.p)
    nu = len(im.tau)
    xiv = [f"xi{i + 1}" for i in range(nu)]
    r1 = r2 = 0.0
    for w in samples:
        w = np.asarray(w, dtype=float)
        env = dict(zip(wv, map(float, w)))
        try:
            dtau = numeric_jacobian(im.tau, wv, w)
            s_val = np.array([expr.evaluate(e, env) for e in exo.s])
            tau_val = [expr.evaluate(e, env) for e in im.tau]
            xi_env = dict(zip(xiv, tau_val))
            phi_val = np.array([expr.evaluate(e, xi_env) for e in im.phi])
            lam_val = expr.evaluate(im.lam, xi_env)
            g_val = expr.evaluate(gamma, env)
        except expr.EvalError as exc:
            raise RegulatorError(f"evaluation failed at w = {w.tolist()}: {exc}") from exc
        r1 = max(r1, float(np.max(np.abs(dtau @ s_val - phi_val))))
        r2 = max(r2, abs(g_val - lam_val))
    return r1, r2


# ------------------------------------------------------------ boost model

@dataclass(frozen=True)
class BoostParams:
    """Averaged boost-converter parameters and the derived operating point."""

    C: float            # capacitance [F]
    L: float            # inductance [H]
    R: float            # load resistance [Ohm]
    r: float            # inductor loss resistance [Ohm]
    v0: float           # nominal input voltage [V]
    z10: float          # reference output voltage [V]
    alpha: float        # disturbance frequency [rad/s]
    beta: float = 0.9   # admissible-domain shrink factor in (0, 1)
    D0: float = field(init=False)
    z20: float = field(init=False)

    def __post_init__(self):
        for name in ("C", "L", "R", "r", "v0", "z10", "alpha"):
            if getattr(self, name) <= 0:
                raise RegulatorError(f"parameter {name} must be positive")
        if not 0.0 < self.beta < 1.0:
            raise RegulatorError("beta must lie in (0, 1)")
        D0, z20 = boost_equilibrium(self.v0, self.z10, self.R, self.r)
        object.__setattr__(self, "D0", D0)
        object.__setattr__(self, "z20", z20)
        scale = max(1.0, self.z10 / self.R, self.v0)
        if abs(-self.z10 / self.R + D0 * z20) > 1e-9 * scale:
            raise RegulatorError("equilibrium residual in the capacitor equation")
        if abs(-self.r * z20 + self.v0 - D0 * self.z10) > 1e-9 * scale:
            raise RegulatorError("equilibrium residual in the inductor equation")

    @classmethod
    def default(cls):
        """Nominal 100 V -> 400 V converter with a 400 ohm load."""
        return cls(C=40e-6, L=4e-3, R=400.0, r=0.25, v0=100.0, z10=400.0,
                   alpha=200.0 * math.pi, beta=0.9)


def boost_equilibrium(v0, z10, R, r):
    """Duty ratio D0 and equilibrium current z20 at the operating point.

    Solves z10*D0^2 - v0*D0 + z10*r/R = 0 and keeps the root giving the
    smaller current z20 = z10/(R*D0) (the efficient branch); the other root
    carries a physically absurd circulating current.
    """
    if min(v0, z10, R, r) <= 0:
        raise RegulatorError("v0, z10, R, r must be positive")
    disc = v0 * v0 - 4.0 * z10 * z10 * r / R
    if disc < 0:
        raise RegulatorError("no real duty ratio: discriminant negative")
    D0 = (v0 + math.sqrt(disc)) / (2.0 * z10)
    if not 0.0 < D0 < 1.0:
        raise RegulatorError(f"duty ratio {D0} outside (0, 1)")
    z20 = z10 / (R * D0)
    if not D0 * z10 > r * z20:
        raise RegulatorError("standing assumption D0*z10 > r*z20 violated")
    return D0, z20


def psi_rhs(psi, tau_angle, w1, rho, params: BoostParams):
    """Right side of the circle ODE for psi; accepts scalars or arrays."""
    pr = params
    denom = pr.alpha * pr.L * (psi + pr.z20)
    num = (pr.r * psi * psi + (pr.r * pr.z20 - w1 - pr.D0 * pr.z10) * psi
           - pr.z20 * w1 + pr.z10 * rho * np.cos(tau_angle))
    if np.ndim(denom) == 0:
        if denom < DENOM_GUARD:
            raise RegulatorError(
                f"psi = {psi} too close to -z20 (denominator {denom})")
        return num / denom
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom < DENOM_GUARD, np.nan, num / denom)


def psi_bounds(w1, rho, params: BoostParams):
    """Bracketing values (psi1, psi2) of the periodic-orbit initial value."""
    pr = params
    b = pr.r * pr.z20 - w1 - pr.D0 * pr.z10
    d1 = b * b - 4.0 * pr.r * (-pr.z20 * w1 + pr.z10 * rho)
    d2 = b * b - 4.0 * pr.r * (-pr.z20 * w1 - pr.z10 * rho)
    if d1 < 0 or d2 < 0:
        raise RegulatorError(f"negative discriminant at (w1, rho) = ({w1}, {rho})")
    psi1 = (-b - math.sqrt(d1)) / (2.0 * pr.r)
    psi2 = (-b - math.sqrt(d2)) / (2.0 * pr.r)
    return psi1, psi2


def admissible_domain(params: BoostParams):
    """(w1max, rho_max) where rho_max is a function of w1 on |w1| < w1max."""
    pr = params
    w1max = pr.D0 * pr.z10 - pr.r * pr.z20

    def rho_max(w1):
        b = pr.r * pr.z20 - w1 - pr.D0 * pr.z10
        return min(pr.beta * pr.D0 * pr.z20,
                   b * b / (4.0 * pr.r * pr.z10) - pr.z20 * abs(w1) / pr.z10)

    return w1max, rho_max


def _integrate_circle(psi0, w1, rho, params: BoostParams, steps):
    """RK4 over tau in [0, 2*pi]; psi0/w1/rho may be arrays (broadcast).

    Returns the orbit samples, shape (..., steps + 1).  Cells whose orbit
    hits the psi = -z20 guard come back as NaN.
    """
    psi0 = np.asarray(psi0, dtype=float)
    h = 2.0 * math.pi / steps
    orbit = np.empty(psi0.shape + (steps + 1,))
    psi = psi0.copy()
    orbit[..., 0] = psi
    pr = params
    aL = pr.alpha * pr.L
    b_lin = pr.r * pr.z20 - w1 - pr.D0 * pr.z10
    c_con = -pr.z20 * w1

    def rhs(p, t):
        denom = aL * (p + pr.z20)
        num = pr.r * p * p + b_lin * p + c_con + pr.z10 * rho * np.cos(t)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(denom < DENOM_GUARD, np.nan, num / denom)

    for k in range(steps):
        t = k * h
        k1 = rhs(psi, t)
        k2 = rhs(psi + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(psi + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(psi + h * k3, t + h)
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        orbit[..., k + 1] = psi
    return orbit


def solve_psi0(w1, rho, params: BoostParams, ode_steps=2000, max_iter=200,
               tol=None):
    """Periodic-orbit initial value on one characteristic circle.

    Iterates psi^1(0) = (psi1 + psi2)/2, psi^n(0) = psi^{n-1}(2*pi) until
    |psi^n(2*pi) - psi^n(0)| < tol.  Returns (psi0, orbit, iterations) with
    orbit sampled on the uniform tau grid (ode_steps + 1 points).
    """
    psi1, psi2 = psi_bounds(w1, rho, params)
    if tol is None:
        tol = 1e-9 * (1.0 + abs(psi1))
    psi_start = 0.5 * (psi1 + psi2)
    for it in range(1, max_iter + 1):
        orbit = _integrate_circle(psi_start, w1, rho, params, ode_steps)
        if not np.all(np.isfinite(orbit)):
            raise RegulatorError(
                f"orbit escaped psi <= -z20 at (w1, rho) = ({w1}, {rho})")
        end = float(orbit[-1])
        if abs(end - psi_start) < tol:
            return psi_start, np.asarray(orbit, dtype=float), it
        psi_start = end
    raise RegulatorError(
        f"no periodic orbit within {max_iter} iterations at (w1, rho) = ({w1}, {rho})")


@dataclass
class BoostCell:
    w1: float
    rho: float
    present: bool
    converged: bool = False
    psi0: float = math.nan
    iters: int = 0
    orbit: np.ndarray | None = None   # psi(tau_k), len ode_steps + 1
    gamma: np.ndarray | None = None   # gamma(tau_k)
    psi1: float = math.nan
    psi2: float = math.nan
    message: str = ""


@dataclass
class BoostSolution:
    params: BoostParams
    w1_values: np.ndarray            # n_w1
    rho_values: np.ndarray           # n_w1 x n_rho (per-column uniform grids)
    cells: list                      # n_w1 lists of n_rho BoostCell
    ode_steps: int

    @property
    def tau_grid(self):
        return np.linspace(0.0, 2.0 * math.pi, self.ode_steps + 1)


def recover_gamma(orbit, w1, rho, params: BoostParams):
    """Feedforward gamma(tau) = (rho*cos(tau) - D0*psi) / (psi + z20),
    eliminated from the algebraic regulator equation."""
    orbit = np.asarray(orbit, dtype=float)
    pr = params
    tau = np.linspace(0.0, 2.0 * math.pi, orbit.shape[-1])
    denom = orbit + pr.z20
    if np.any(denom * pr.alpha * pr.L < DENOM_GUARD):
        raise RegulatorError("orbit too close to psi = -z20 for gamma recovery")
    return (rho * np.cos(tau) - pr.D0 * orbit) / denom


def _solve_column(params, w1, rhos, ode_steps, max_iter):
    """All cells of one w1 column, integrated together as an array.

    Elementwise arithmetic matches the per-cell solve_psi0 iteration; cells
    are frozen as soon as their own stopping test passes.
    """
    rhos = np.asarray(rhos, dtype=float)
    cells = [BoostCell(w1=float(w1), rho=float(rho), present=True) for rho in rhos]
    bounds_ok = np.ones(len(rhos), dtype=bool)
    for k, cell in enumerate(cells):
        try:
            cell.psi1, cell.psi2 = psi_bounds(w1, rhos[k], params)
        except RegulatorError as exc:
            cell.message = str(exc)
            bounds_ok[k] = False
    psi1 = np.array([c.psi1 for c in cells])
    psi2 = np.array([c.psi2 for c in cells])
    tols = 1e-9 * (1.0 + np.abs(psi1))
    start = np.where(bounds_ok, 0.5 * (psi1 + psi2), np.nan)
    active = bounds_ok.copy()
    for it in range(1, max_iter + 1):
        if not np.any(active):
            break
        orbit = _integrate_circle(start, w1, rhos, params, ode_steps)
        escaped = active & ~np.all(np.isfinite(orbit), axis=-1)
        for k in np.flatnonzero(escaped):
            cells[k].message = "orbit escaped psi <= -z20"
        active &= ~escaped
        end = orbit[..., -1]
        done = active & (np.abs(end - start) < tols)
        for k in np.flatnonzero(done):
            cells[k].psi0 = float(start[k])
            cells[k].orbit = orbit[k].copy()
            cells[k].iters = it
            cells[k].gamma = recover_gamma(cells[k].orbit, w1, rhos[k], params)
            cells[k].converged = True
        active &= ~done
        start = np.where(active, end, start)
    for k in np.flatnonzero(active):
        cells[k].message = f"no periodic orbit within {max_iter} iterations"
    return cells


def solve_boost_grid(params: BoostParams, n_w1=21, n_rho=21, ode_steps=2000,
                     max_iter=200, shrink=0.95, threads=None) -> BoostSolution:
    """psi0 (and orbits) on a uniform grid over the admissible set.

    w1 is uniform on [-shrink*w1max, shrink*w1max]; for each w1, rho is
    uniform on [0, shrink*rho_max(w1)].  Columns where rho_max(w1) <= 0 are
    marked absent.  Columns are independent and may be solved concurrently;
    the merged result is ordered by (w1, rho) regardless of thread timing.
    """
    if n_w1 < 2 or n_rho < 2:
        raise RegulatorError("grid resolutions must be >= 2")
    w1max, rho_max = admissible_domain(params)
    w1s = np.linspace(-shrink * w1max, shrink * w1max, n_w1)
    rho_grid = np.full((n_w1, n_rho), np.nan)
    columns = [None] * n_w1
    jobs = []
    for i, w1 in enumerate(w1s):
        rmax = rho_max(float(w1))
        if rmax <= 0:
            columns[i] = [BoostCell(w1=float(w1), rho=math.nan, present=False,
                                    message="outside admissible domain")
                          for _ in range(n_rho)]
            continue
        rhos = np.linspace(0.0, shrink * rmax, n_rho)
        rho_grid[i] = rhos
        jobs.append((i, float(w1), rhos))
    if threads is None:
        threads = int(os.environ.get("REGSYN_THREADS", os.cpu_count() or 1))
    threads = max(1, threads)
    if threads == 1 or len(jobs) <= 1:
        for i, w1, rhos in jobs:
            columns[i] = _solve_column(params, w1, rhos, ode_steps, max_iter)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_solve_column, params, w1, rhos, ode_steps,
                                max_iter): i for i, w1, rhos in jobs}
            for fut, i in futs.items():
                columns[i] = fut.result()
    return BoostSolution(params, w1s, rho_grid, columns, ode_steps)


def pde_residual(boost: BoostSolution, params: BoostParams = None):
    """Max normalized residual of the quasilinear regulator PDE.

    The partial derivatives of pi2 with respect to w2 and w3 are
    reconstructed from the (rho, tau) parametrization by central
    differences across grid cells, then substituted into the PDE.  The
    residual at each point is normalized by (1 + |w1| + rho).
    """
    pr = params or boost.params
    worst = 0.0
    n_tau = boost.ode_steps
    tau = boost.tau_grid[:-1]
    cos_t, sin_t = np.cos(tau), np.sin(tau)
    for i, col in enumerate(boost.cells):
        cells = [c for c in col if c.present]
        if len(cells) < 3:
            continue
        if not all(c.converged for c in cells):
            continue
        rhos = boost.rho_values[i]
        drho = rhos[1] - rhos[0]
        psi = np.array([c.orbit[:-1] for c in cells])  # n_rho x n_tau
        # rho interior only: rho = 0 is the degenerate circle
        for j in range(1, len(cells) - 1):
            rho = rhos[j]
            w1 = cells[j].w1
            pj = psi[j]
            dpsi_drho = (psi[j + 1] - psi[j - 1]) / (2.0 * drho)
            dpsi_dtau = (np.roll(pj, -1) - np.roll(pj, 1)) * n_tau / (4.0 * math.pi)
            dpi_dw2 = cos_t * dpsi_drho - sin_t / rho * dpsi_dtau
            dpi_dw3 = sin_t * dpsi_drho + cos_t / rho * dpsi_dtau
            w2, w3 = rho * cos_t, rho * sin_t
            bracket = (-pr.alpha * dpi_dw2 * w3 + pr.alpha * dpi_dw3 * w2
                       - pr.r / pr.L * pj + w1 / pr.L)
            resid = ((pr.D0 + pr.L / pr.z10 * bracket) * pj
                     + pr.z20 * pr.L / pr.z10 * bracket - w2)
            scale = 1.0 + abs(w1) + rho
            worst = max(worst, float(np.max(np.abs(resid))) / scale)
    if worst == 0.0:
        raise RegulatorError("grid has no interior converged cells")
    return worst


# ---------------------------------------------------------------- exports

def write_grid_csv(boost: BoostSolution, path):
    """CSV with header w1,rho,psi0,converged,iters; absent cells skipped."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["w1", "rho", "psi0", "converged", "iters"])
        for col in boost.cells:
            for c in col:
                if not c.present:
                    continue
                writer.writerow([f"{c.w1:.17g}", f"{c.rho:.17g}",
                                 f"{c.psi0:.17g}", int(c.converged), c.iters])


def write_orbit_csv(cell: BoostCell, ode_steps, path):
    """CSV with header tau,psi,gamma for one converged cell."""
    if not cell.converged:
        raise RegulatorError("cannot export an unconverged cell")
    tau = np.linspace(0.0, 2.0 * math.pi, ode_steps + 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "psi", "gamma"])
        for t, p, g in zip(tau, cell.orbit, cell.gamma):
            writer.writerow([f"{t:.17g}", f"{p:.17g}", f"{g:.17g}"])
