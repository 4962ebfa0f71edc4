"""Closed-loop and exosystem simulation with fixed-step RK4.

Integrates the forced nonlinear closed loop (plant + exosystem +
controller) and computes trajectory diagnostics: error decay metrics and
period detection for exosystem orbits.  The integrator is deterministic:
identical inputs produce bit-identical trajectories.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .expr import compile_fn
from .model import ControllerModel, ExosystemModel, PlantModel, w_names, x_names, xi_names

DIVERGENCE_CAP = 1e6


class SimulationError(Exception):
    pass


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray      # uniform time grid, length N+1
    x: np.ndarray      # (N+1) x n
    xi: np.ndarray     # (N+1) x nc
    w: np.ndarray      # (N+1) x p
    e: np.ndarray      # N+1
    u: np.ndarray      # N+1

    @property
    def dt(self):
        return float(self.t[1] - self.t[0])


def _check_grid(T, dt):
    if dt <= 0 or T < dt:
        raise SimulationError("need dt > 0 and T >= dt")
    steps = int(round(T / dt))
    return steps


def simulate(plant: PlantModel, exo: ExosystemModel, ctrl: ControllerModel,
             x0, xi0, w0, T, dt) -> Trajectory:
    """RK4 on dx = f(x, lambda(xi), w), dxi = phi(xi) + Bc h(x, lambda(xi), w),
    dw = s(w).  Aborts when the state infinity-norm exceeds the divergence
    cap (local results only cover small data; runaway must fail loudly)."""
    n, nc, p = plant.n, ctrl.nc, exo.p
    x0, xi0, w0 = (np.asarray(v, dtype=float) for v in (x0, xi0, w0))
    if x0.shape != (n,) or xi0.shape != (nc,) or w0.shape != (p,):
        raise SimulationError("initial state dimensions do not match the models")
    steps = _check_grid(T, dt)

    xv, wv, cv = x_names(n), w_names(p), xi_names(nc)
    f_fn = compile_fn(list(plant.f), xv + ("u",) + wv)
    h_fn = compile_fn(plant.h, xv + ("u",) + wv)
    s_fn = compile_fn(list(exo.s), wv)
    phi_fn = compile_fn(list(ctrl.phi), cv)
    lam_fn = compile_fn(ctrl.lam, cv)
    Bc = ctrl.Bc

    def deriv(state):
        x = state[:n]
        xi = state[n:n + nc]
        w = state[n + nc:]
        u = lam_fn(*xi)
        args = (*x, u, *w)
        fx = f_fn(*args)
        e = h_fn(*args)
        dphi = phi_fn(*xi)
        dxi = tuple(dphi[i] + Bc[i] * e for i in range(nc))
        return fx + dxi + s_fn(*w)

    dim = n + nc + p
    out = np.empty((steps + 1, dim))
    e_out = np.empty(steps + 1)
    u_out = np.empty(steps + 1)
    state = tuple(np.concatenate([x0, xi0, w0]).tolist())
    half = dt / 2.0
    sixth = dt / 6.0
    for k in range(steps + 1):
        out[k] = state
        u_k = lam_fn(*state[n:n + nc])
        e_out[k] = h_fn(*state[:n], u_k, *state[n + nc:])
        u_out[k] = u_k
        if max(abs(v) for v in state) > DIVERGENCE_CAP:
            raise SimulationError(f"state diverged at t = {k * dt}")
        if k == steps:
            break
        k1 = deriv(state)
        k2 = deriv(tuple(state[i] + half * k1[i] for i in range(dim)))
        k3 = deriv(tuple(state[i] + half * k2[i] for i in range(dim)))
        k4 = deriv(tuple(state[i] + dt * k3[i] for i in range(dim)))
        state = tuple(state[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                      for i in range(dim))
    t = np.arange(steps + 1) * dt
    return Trajectory(t, out[:, :n], out[:, n:n + nc], out[:, n + nc:], e_out, u_out)


def decay_metrics(traj: Trajectory, window: float):
    """(final_rms, peak, settle_fraction): RMS of e over the last window,
    overall peak |e|, and final-window RMS over first-window RMS."""
    T = float(traj.t[-1])
    if window > T:
        raise SimulationError("window exceeds the trajectory horizon")
    k = max(1, int(round(window / traj.dt)))
    e = traj.e
    final_rms = float(np.sqrt(np.mean(e[-k:] ** 2)))
    initial_rms = float(np.sqrt(np.mean(e[:k] ** 2)))
    peak = float(np.max(np.abs(e)))
    settle = final_rms / initial_rms if initial_rms > 0 else 0.0
    return final_rms, peak, settle


def simulate_exosystem(exo: ExosystemModel, w0, T, dt):
    """Integrate dw = s(w) alone; returns (t, w) arrays."""
    p = exo.p
    w0 = np.asarray(w0, dtype=float)
    if w0.shape != (p,):
        raise SimulationError("initial state dimension does not match the exosystem")
    steps = _check_grid(T, dt)
    s_fn = compile_fn(list(exo.s), w_names(p))
    out = np.empty((steps + 1, p))
    state = tuple(w0.tolist())
    half, sixth = dt / 2.0, dt / 6.0
    for k in range(steps + 1):
        out[k] = state
        if max(abs(v) for v in state) > DIVERGENCE_CAP:
            raise SimulationError(f"exosystem diverged at t = {k * dt}")
        if k == steps:
            break
        k1 = s_fn(*state)
        k2 = s_fn(*(state[i] + half * k1[i] for i in range(p)))
        k3 = s_fn(*(state[i] + half * k2[i] for i in range(p)))
        k4 = s_fn(*(state[i] + dt * k3[i] for i in range(p)))
        state = tuple(state[i] + sixth * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                      for i in range(p))
    return np.arange(steps + 1) * dt, out


def detect_period(t, w, tol=1e-3):
    """First return time of w to its initial point, or None.

    Looks for the first sample back inside the tol-ball around w(0) after
    having left it, then refines the return time by intersecting the two
    secant lines of the distance function around its local minimum."""
    w = np.asarray(w, dtype=float)
    d = np.linalg.norm(w - w[0], axis=1)
    left = np.flatnonzero(d > tol)
    if left.size == 0:
        return None
    k0 = left[0]
    back = np.flatnonzero(d[k0:] < tol)
    if back.size == 0:
        return None
    k = k0 + back[0]
    # local minimum of d in the below-tol window
    while k + 1 < len(d) and d[k + 1] < d[k]:
        k += 1
    if 1 < k < len(d) - 2:
        m1 = (d[k - 1] - d[k - 2]) / (t[k - 1] - t[k - 2])
        m2 = (d[k + 2] - d[k + 1]) / (t[k + 2] - t[k + 1])
        if m1 < 0 < m2:
            # V-shaped kink: intersect the descending and ascending secants
            t_star = (d[k + 1] - d[k - 1] + m1 * t[k - 1] - m2 * t[k + 1]) / (m1 - m2)
            if t[k - 1] <= t_star <= t[k + 1]:
                return float(t_star)
    return float(t[k])


def write_trajectory_csv(traj: Trajectory, path):
    """CSV with header t,x1..xn,xi1..xinc,w1..wp,e,u at full precision."""
    n = traj.x.shape[1]
    nc = traj.xi.shape[1]
    p = traj.w.shape[1]
    header = (["t"] + [f"x{i + 1}" for i in range(n)]
              + [f"xi{i + 1}" for i in range(nc)]
              + [f"w{i + 1}" for i in range(p)] + ["e", "u"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(traj.t)):
            row = ([traj.t[k]] + list(traj.x[k]) + list(traj.xi[k])
                   + list(traj.w[k]) + [traj.e[k], traj.u[k]])
            writer.writerow([f"{v:.17g}" for v in row])
