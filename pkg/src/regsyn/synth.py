"""Internal-model input vector construction and linearized regulator solves.

Builds the controller input vector B_c from the Jordan structure of the
internal model, assembles the closed-loop linearization, checks the
detectability / transfer-function conditions and solves the linearized
regulator equations for (Pi, Gamma).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import specan
from .model import (ControllerModel, LinearizedData, ModelError,
                    controller_jacobians, xi_names)
from .specan import JordanData, SpectralError

TF_ZERO_TOL = 1e-9
JACOBIAN_MATCH_TOL = 1e-6


class SynthesisError(Exception):
    pass


@dataclass(frozen=True)
class InternalModel:
    """Internal model dxi = phi(xi) + Bc e, u = lambda(xi).

    phi/lam are the nonlinear maps (as a ControllerModel without Bc when
    expression-defined); Phi and Lambda their linearizations at 0.  Bc may
    be absent until synthesized.
    """

    nu: int
    Phi: np.ndarray      # nu x nu
    Lambda: np.ndarray   # 1 x nu
    ctrl: ControllerModel | None = None
    Bc: np.ndarray | None = None

    def __post_init__(self):
        if self.Phi.shape != (self.nu, self.nu) or self.Lambda.shape != (1, self.nu):
            raise SynthesisError("internal model linearization shape mismatch")
        if self.Bc is not None and self.Bc.shape != (self.nu, 1):
            raise SynthesisError("Bc shape mismatch")
        if self.ctrl is not None:
            Phi2, Lam2 = controller_jacobians(self.ctrl)
            scale = max(1.0, float(np.linalg.norm(self.Phi, np.inf)))
            if (np.linalg.norm(Phi2 - self.Phi, np.inf) > JACOBIAN_MATCH_TOL * scale
                    or np.linalg.norm(Lam2 - self.Lambda, np.inf) > JACOBIAN_MATCH_TOL * scale):
                raise SynthesisError(
                    "declared (Phi, Lambda) disagree with the Jacobians of (phi, lambda)")

    @classmethod
    def from_controller(cls, ctrl: ControllerModel):
        Phi, Lam = controller_jacobians(ctrl)
        Bc = np.asarray(ctrl.Bc, dtype=float).reshape(-1, 1)
        return cls(ctrl.nc, Phi, Lam, ctrl, Bc)

    @classmethod
    def from_matrices(cls, Phi, Lambda, Bc=None):
        Phi = np.asarray(Phi, dtype=float)
        Lambda = np.atleast_2d(np.asarray(Lambda, dtype=float))
        if Bc is not None:
            Bc = np.asarray(Bc, dtype=float).reshape(-1, 1)
        return cls(Phi.shape[0], Phi, Lambda, None, Bc)

    def with_Bc(self, Bc):
        Bc = np.asarray(Bc, dtype=float).reshape(-1, 1)
        return InternalModel(self.nu, self.Phi, self.Lambda, self.ctrl, Bc)


@dataclass(frozen=True)
class ConditionFlags:
    """Checkable hypotheses for the low-order controller construction."""

    plant_stable: bool
    detectable: bool
    tf_nonzero: bool
    spectrum_on_axis: bool
    tf_values: dict = field(default_factory=dict)  # eigenvalue -> G(eigenvalue)
    notes: tuple[str, ...] = ()

    @property
    def all_pass(self):
        return (self.plant_stable and self.detectable and self.tf_nonzero
                and self.spectrum_on_axis)


@dataclass(frozen=True)
class SynthesisReport:
    success: bool
    eps: float | None
    coefficients: dict          # block index j -> list of a_jk
    Bhat: np.ndarray | None     # Jordan-coordinate input vector
    Bc: np.ndarray | None
    A_cl: np.ndarray | None
    abscissa: float | None
    flags: ConditionFlags
    message: str = ""


def closed_loop_matrix(lin: LinearizedData, im: InternalModel) -> np.ndarray:
    """State matrix [[A, B*Lambda], [Bc*C, Phi + Bc*D*Lambda]] of the
    linearized unforced closed loop."""
    if im.Bc is None:
        raise SynthesisError("internal model has no Bc")
    if lin.B.shape[0] != lin.n or im.Lambda.shape[1] != im.nu:
        raise SynthesisError("dimension mismatch")
    top = np.hstack([lin.A, lin.B @ im.Lambda])
    bot = np.hstack([im.Bc @ lin.C, im.Phi + im.Bc @ lin.D @ im.Lambda])
    return np.vstack([top, bot])


def verify_conditions(lin: LinearizedData, im: InternalModel,
                      tf_tol=TF_ZERO_TOL) -> ConditionFlags:
    """Report on: A Hurwitz, (Lambda, Phi) detectable, G(p) != 0 at every
    imaginary-axis eigenvalue p of Phi, and whether spec(Phi) lies on the
    imaginary axis."""
    plant_stable = specan.is_hurwitz(lin.A, 0.0)
    detectable = specan.hautus_detectable(im.Lambda, im.Phi)
    radius = specan.cluster_radius(im.Phi)
    sp = specan.eigen(im.Phi)
    on_axis = all(abs(v.real) <= radius for v in sp.eigenvalues)
    tf_values = {}
    tf_nonzero = True
    notes = []
    for v in sp.eigenvalues:
        if abs(v.real) > radius:
            continue
        z = complex(0.0, v.imag)
        try:
            g = specan.transfer_function(lin, z)
        except SpectralError as exc:
            tf_nonzero = False
            notes.append(f"G({z}) undefined: {exc}")
            continue
        tf_values[z] = g
        if abs(g) <= tf_tol:
            tf_nonzero = False
            notes.append(f"G({z}) = {g} vanishes")
    if not on_axis:
        notes.append("off-axis spectrum; apply center reduction first")
    return ConditionFlags(plant_stable, detectable, tf_nonzero, on_axis,
                          tf_values, tuple(notes))


def choose_block_coefficients(mj: int, Gj: complex):
    """Coefficients a_j1..a_jmj making z^mj + Gj * sum a_jk z^(mj-k) Hurwitz.

    Deterministic canonical choice: for mj = 1, a = conj(G)/|G|^2 so the
    closed polynomial is z + 1; for mj >= 2 the zeros are placed at the
    Butterworth positions of radius 1.  For a real Gj the coefficients are
    real.
    """
    if Gj == 0:
        raise SynthesisError("transfer function vanishes at block frequency")
    if mj == 1:
        return [np.conj(Gj) / abs(Gj) ** 2]
    roots = [np.exp(1j * np.pi * (2 * k + mj - 1) / (2 * mj)) for k in range(1, mj + 1)]
    coeffs = np.poly(roots)  # monic, length mj+1
    coeffs = np.real_if_close(coeffs, tol=1e6)
    a = [complex(c) / Gj for c in coeffs[1:]]
    if isinstance(Gj, (int, float)) or (isinstance(Gj, complex) and Gj.imag == 0):
        a = [complex(x.real, 0.0) for x in a]
    return a


def build_Bc(jd: JordanData, Cc, eps: float, coeffs: dict) -> np.ndarray:
    """Input vector Bc from the Jordan data of the internal model.

    Cc is the 1 x p output row; coeffs maps the index j of each nonnegative
    frequency (in jd.frequencies order) to its a_j1..a_jmj list.  Solves the
    per-block triangular system by back-substitution, mirrors conjugate
    blocks and returns the (real) Bc = T @ Bhat.
    """
    Cc = np.atleast_2d(np.asarray(Cc, dtype=float))
    p = jd.T.shape[0]
    Chat = (Cc @ jd.T).ravel()
    Bhat = np.zeros(p, dtype=complex)
    block_of_freq = {}  # j -> position in jd.block_starts
    for b, lam in enumerate(jd.block_eigs):
        if lam.imag >= 0:
            block_of_freq[len(block_of_freq)] = b
    for j, alpha in enumerate(jd.frequencies):
        b = block_of_freq[j]
        s = jd.block_starts[b]
        m = jd.multiplicities[j]
        a = list(coeffs[j])
        if len(a) != m:
            raise SynthesisError(f"block {j}: expected {m} coefficients, got {len(a)}")
        c = Chat[s:s + m]
        if abs(c[0]) < 1e-12 * max(1.0, float(np.max(np.abs(Chat)))):
            raise SynthesisError(
                f"block {j}: leading Jordan coordinate of Cc vanishes "
                "(detectability violated numerically)")
        b_blk = np.zeros(m, dtype=complex)
        b_blk[m - 1] = -(eps ** m) * a[m - 1] / c[0]
        for k in range(m - 1, 0, -1):  # k = m-1 .. 1 (1-based)
            acc = a[k - 1] * eps ** k
            for ell in range(2, m - k + 2):
                acc += c[ell - 1] * b_blk[(ell + k - 1) - 1]
            b_blk[k - 1] = -acc / c[0]
        Bhat[s:s + m] = b_blk
        if alpha > 0:
            s2 = jd.block_starts[b + 1]
            Bhat[s2:s2 + m] = np.conj(b_blk)
    Bc = jd.T @ Bhat
    imag_resid = float(np.max(np.abs(Bc.imag)))
    if imag_resid > 1e-8 * (1.0 + float(np.max(np.abs(Bc.real)))):
        raise SynthesisError(f"imaginary residue {imag_resid} in Bc too large")
    return np.real(Bc).reshape(-1, 1)


def controller_transfer(im: InternalModel, z: complex) -> complex:
    """Lambda (zI - Phi)^{-1} Bc of the synthesized linear controller."""
    if im.Bc is None:
        raise SynthesisError("internal model has no Bc")
    x = np.linalg.solve(z * np.eye(im.nu) - im.Phi.astype(complex), im.Bc)
    return complex((im.Lambda @ x)[0, 0])


def synthesize(lin: LinearizedData, im: InternalModel, eps0=1.0, factor=0.5,
               max_halvings=40, margin=1e-6) -> SynthesisReport:
    """Scan eps = eps0, eps0*factor, ... until the closed loop is Hurwitz.

    Requires the verification flags (plant stable, detectable, transfer
    function nonzero) and spec(Phi) on the imaginary axis; Cc := Lambda.
    The scan is sequential so the first success is deterministic.
    """
    flags = verify_conditions(lin, im)
    if not flags.all_pass:
        failed = [n for n, ok in (("plant_stable", flags.plant_stable),
                                  ("detectable", flags.detectable),
                                  ("tf_nonzero", flags.tf_nonzero),
                                  ("spectrum_on_axis", flags.spectrum_on_axis)) if not ok]
        return SynthesisReport(False, None, {}, None, None, None, None, flags,
                               f"verification failed: {', '.join(failed)}")
    try:
        jd = specan.jordan_structure(im.Phi)
    except SpectralError as exc:
        return SynthesisReport(False, None, {}, None, None, None, None, flags,
                               f"Jordan structure failed: {exc}")
    coeffs = {}
    for j, alpha in enumerate(jd.frequencies):
        g = flags.tf_values[complex(0.0, alpha)]
        if alpha == 0:
            # G(0) of a real system is real; drop rounding residue so the
            # zero-frequency block gets real coefficients
            g = complex(g.real, 0.0)
        coeffs[j] = choose_block_coefficients(jd.multiplicities[j], g)
    eps = eps0
    for _ in range(max_halvings + 1):
        try:
            Bc = build_Bc(jd, im.Lambda, eps, coeffs)
        except SynthesisError as exc:
            return SynthesisReport(False, None, coeffs, None, None, None, None,
                                   flags, str(exc))
        cand = im.with_Bc(Bc)
        A_cl = closed_loop_matrix(lin, cand)
        absc = specan.spectral_abscissa(A_cl)
        if absc < -margin:
            Bhat = np.linalg.solve(jd.T, Bc.astype(complex)).ravel()
            return SynthesisReport(True, eps, coeffs, Bhat, Bc, A_cl, absc, flags)
        eps *= factor
    return SynthesisReport(False, None, coeffs, None, None, None, None, flags,
                           f"no stabilizing eps found in {max_halvings} halvings")


def solve_linear_regulator(lin: LinearizedData):
    """Solve Pi S = A Pi + B Gamma + P and C Pi + D Gamma + Q = 0 as one
    dense linear system by vectorization.  Returns (Pi, Gamma)."""
    n, p = lin.n, lin.p
    In, Ip = np.eye(n), np.eye(p)
    # unknowns: vec(Pi) (column-major, n*p) then Gamma^T (p)
    top = np.hstack([np.kron(lin.S.T, In) - np.kron(Ip, lin.A), -np.kron(Ip, lin.B)])
    bot = np.hstack([np.kron(Ip, lin.C), lin.D[0, 0] * Ip])
    Msys = np.vstack([top, bot])
    rhs = np.concatenate([lin.P.flatten(order="F"), -lin.Q.ravel()])
    cond = np.linalg.cond(Msys)
    if not np.isfinite(cond) or cond > specan.COND_CAP:
        raise SynthesisError(
            f"linearized regulator system is singular or ill-conditioned (cond ~ {cond:.3e})")
    sol = np.linalg.solve(Msys, rhs)
    Pi = sol[:n * p].reshape((n, p), order="F")
    Gamma = sol[n * p:].reshape(1, p)
    return Pi, Gamma


def internal_model_copy_of_exosystem(lin: LinearizedData, exo_exprs, Gamma):
    """ControllerModel whose phi copies the exosystem map and whose lambda is
    the linear feedforward Gamma * xi (used when gamma is only known through
    its linearization)."""
    from . import expr as ex
    p = lin.p
    names = xi_names(p)
    phi = []
    for e in exo_exprs:
        s = ex.to_string(e)
        for i in range(p, 0, -1):
            s = s.replace(f"w{i}", f"xi{i}")
        phi.append(s)
    lam = " + ".join(f"({float(Gamma[0, i])!r})*{names[i]}" for i in range(p))
    return phi, lam
