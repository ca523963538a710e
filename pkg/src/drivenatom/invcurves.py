"""Invariant curves of the stroboscopic map around a hyperbolic-elliptic fixed point.

A closed curve x(theta) with rotation number nu satisfies P(x(theta)) =
x(theta + nu).  Curves are represented by a truncated Fourier series with
2M+1 coefficient vectors and solved for on the mesh theta_j = 2*pi*j/(2M+1)
by a Newton method on the stacked system

    F_na  invariance at the mesh points           (N*(2M+1) equations)
    F_e   phase condition fixing the theta origin  (1 equation)
    F_d   continuation constraint in delta         (1 equation)

in the N*(2M+1)+1 unknowns (alpha, nu).  The one-more-equations-than-
unknowns linear system of each Newton step is solved by Gaussian
elimination with full pivoting; the leftover row must reduce to "0 = 0",
anything else signals an inconsistent (resonance-blocked) continuation step.

Stability of a curve is the eigenproblem B(theta) Psi(theta) = Lambda
Psi(theta + nu) with B the tangent map of P along the curve, solved densely
in the Fourier representation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import flow
from .flow import DEFAULT_ESCAPE_RADIUS, IntegratorSettings
from .model import ConfigurationError, PhaseState, SystemConfig
from .porbits import FixedPointOrbit, NewtonDivergenceError, classify

TAIL_TOL = 1e-9
RESIDUAL_TOL = 1e-9
RESONANCE_TOL = 1e-6
RESONANCE_MAX_DEN = 12
M_CAP = 256


class ResonanceError(RuntimeError):
    """Rotation number too close to a low-order rational multiple of 2*pi."""


class InconsistentSystemError(RuntimeError):
    """The redundant Newton row failed to reduce to 0 = 0 (resonance gap hit)."""


class DegeneracyError(RuntimeError):
    """Curve stability spectrum does not have the expected two unit eigenvalues."""


# ---------------------------------------------------------------------------
# Curve representation
# ---------------------------------------------------------------------------

def fourier_basis(theta, M: int) -> np.ndarray:
    """Rows [1, cos(k*theta)..., sin(k*theta)...] for k = 1..M; shape (len(theta), 2M+1)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    k = np.arange(1, M + 1)
    kt = theta[:, None] * k[None, :]
    return np.concatenate([np.ones((theta.size, 1)), np.cos(kt), np.sin(kt)], axis=1)


def fourier_basis_deriv(theta, M: int) -> np.ndarray:
    """d/dtheta of :func:`fourier_basis`."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    k = np.arange(1, M + 1)
    kt = theta[:, None] * k[None, :]
    return np.concatenate(
        [np.zeros((theta.size, 1)), -k * np.sin(kt), k * np.cos(kt)], axis=1
    )


@dataclass
class InvariantCurve:
    """Fourier representation of an invariant curve of P.

    Coefficients are stored as a matrix of shape (2M+1, N) whose rows are
    (a_0, a_1..a_M, b_1..b_M); N = 2d is the phase-space dimension.
    """

    nu: float
    M: int
    coeffs: np.ndarray  # (2M+1, N)
    sigma: int = -1
    dist: float = np.nan
    residual: float = np.nan

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape[0] != 2 * self.M + 1:
            raise ConfigurationError(
                f"coefficient matrix has {self.coeffs.shape[0]} rows, expected {2 * self.M + 1}"
            )

    @property
    def N(self) -> int:
        return self.coeffs.shape[1]

    @property
    def a(self) -> np.ndarray:
        """Cosine coefficient vectors a_0..a_M."""
        return self.coeffs[: self.M + 1]

    @property
    def b(self) -> np.ndarray:
        """Sine coefficient vectors b_1..b_M."""
        return self.coeffs[self.M + 1 :]

    @property
    def alpha(self) -> np.ndarray:
        """Flattened unknown vector of length N*(2M+1)."""
        return self.coeffs.ravel()

    def mesh(self, factor: int = 1) -> np.ndarray:
        """Equally spaced parameter mesh with factor*(2M+1) points."""
        n = factor * (2 * self.M + 1)
        return np.arange(n) * (2.0 * np.pi / n)

    def eval(self, theta) -> np.ndarray:
        return fourier_basis(theta, self.M) @ self.coeffs

    def eval_deriv(self, theta) -> np.ndarray:
        return fourier_basis_deriv(theta, self.M) @ self.coeffs

    def tail_norm(self) -> float:
        """|a_M| + |b_M|, the truncation indicator."""
        return float(np.linalg.norm(self.a[-1]) + np.linalg.norm(self.b[-1]))

    def with_M(self, new_M: int) -> "InvariantCurve":
        """Same curve re-expressed with a different Fourier order (pad/truncate)."""
        new = np.zeros((2 * new_M + 1, self.N))
        m = min(self.M, new_M)
        new[0] = self.coeffs[0]
        new[1 : m + 1] = self.coeffs[1 : m + 1]
        new[new_M + 1 : new_M + 1 + m] = self.coeffs[self.M + 1 : self.M + 1 + m]
        return InvariantCurve(nu=self.nu, M=new_M, coeffs=new, sigma=self.sigma,
                              dist=self.dist, residual=self.residual)

    def min_distance(self, z_ref: np.ndarray, n_samples: int = 1024) -> float:
        theta = np.arange(n_samples) * (2.0 * np.pi / n_samples)
        pts = self.eval(theta)
        return float(np.min(np.linalg.norm(pts - np.asarray(z_ref)[None, :], axis=1)))

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma,
            "nu": self.nu,
            "M": self.M,
            "N": self.N,
            "coeffs": self.coeffs.tolist(),
            "dist": self.dist,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InvariantCurve":
        return cls(
            nu=float(data["nu"]), M=int(data["M"]),
            coeffs=np.array(data["coeffs"], dtype=float),
            sigma=int(data.get("sigma", -1)),
            dist=float(data.get("dist", np.nan)),
            residual=float(data.get("residual", np.nan)),
        )


@dataclass
class CurveStability:
    """Stable/unstable eigenvalues and tangent bundles of an invariant curve."""

    lambda_s: float
    lambda_u: float
    unit_eigs: tuple
    bundle_s: np.ndarray  # (2M+1, N) Fourier coefficients of Psi_s
    bundle_u: np.ndarray  # (2M+1, N)

    def to_dict(self) -> dict:
        return {
            "lambda_s": self.lambda_s,
            "lambda_u": self.lambda_u,
            "unit_eigs": list(self.unit_eigs),
            "bundle_s": self.bundle_s.tolist(),
            "bundle_u": self.bundle_u.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CurveStability":
        return cls(
            lambda_s=float(data["lambda_s"]), lambda_u=float(data["lambda_u"]),
            unit_eigs=tuple(data["unit_eigs"]),
            bundle_s=np.array(data["bundle_s"], dtype=float),
            bundle_u=np.array(data["bundle_u"], dtype=float),
        )


def bundle_eval(curve: InvariantCurve, bundle: np.ndarray, theta) -> np.ndarray:
    """Evaluate a tangent-bundle Fourier series at theta."""
    return fourier_basis(theta, curve.M) @ bundle


# ---------------------------------------------------------------------------
# Residual, phase condition
# ---------------------------------------------------------------------------

def check_resonance(nu: float, tol: float = RESONANCE_TOL, max_den: int = RESONANCE_MAX_DEN):
    """Raise ResonanceError if nu is within tol of 2*pi*p/q with q <= max_den."""
    frac = (nu / (2.0 * np.pi)) % 1.0
    approx = Fraction(frac).limit_denominator(max_den)
    if abs(frac - float(approx)) < tol / (2.0 * np.pi):
        raise ResonanceError(
            f"rotation number {nu:.9f} within {tol} of 2*pi*{approx.numerator}/{approx.denominator}"
        )


def curve_images(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    theta: np.ndarray,
    with_tangent: bool = False,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
):
    """P (and optionally DP) at the curve points x(theta).  Returns (PX, B, escaped)."""
    X = curve.eval(theta)
    Z, J, esc = flow.map_points(
        cfg, settings, X, n_periods=1, with_tangent=with_tangent,
        escape_radius=escape_radius, chunk_size=128,
    )
    return Z, J, esc >= 0


def invariance_residual(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    mesh_factor: int = 1,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
):
    """Stacked invariance defects P(x(theta_j)) - x(theta_j + nu) and their max norm.

    Escape during any map evaluation marks the residual invalid (inf norm,
    NaN rows).
    """
    theta = curve.mesh(mesh_factor)
    PX, _, escaped = curve_images(cfg, settings, curve, theta, escape_radius=escape_radius)
    F = PX - curve.eval(theta + curve.nu)
    if escaped.any():
        F[escaped] = np.nan
        return F.ravel(), np.inf
    return F.ravel(), float(np.max(np.abs(F)))


def phase_condition(curve: InvariantCurve, e: np.ndarray, z_star: np.ndarray) -> float:
    """e . (x(0) - z*), the representation-fixing condition driven to zero."""
    x0 = curve.coeffs[: curve.M + 1].sum(axis=0)  # x(0) = sum of cosine coefficients
    return float(np.dot(np.asarray(e, dtype=float), x0 - np.asarray(z_star, dtype=float)))


def default_phase_vector(N: int) -> np.ndarray:
    """Unit vector along p_x: the theta origin is pinned on the p_x coordinate."""
    d = N // 2
    e = np.zeros(N)
    e[d] = 1.0
    return e


# ---------------------------------------------------------------------------
# Full-pivot elimination for the (n+2) x (n+1) Newton system
# ---------------------------------------------------------------------------

def solve_newton_system(A: np.ndarray, rhs: np.ndarray, redundant_tol: float = 1e-6):
    """Solve the non-square Newton system by Gaussian elimination with full pivoting.

    A has one more row than columns; after eliminating all columns the last
    row must read "0 = 0".  Returns (solution, redundant_residual); raises
    InconsistentSystemError when the leftover right-hand side exceeds
    redundant_tol relative to the input scale.
    """
    m, q = A.shape
    if m != q + 1:
        raise ValueError(f"expected shape (n+2, n+1), got {A.shape}")
    U = np.hstack([A.astype(float), np.asarray(rhs, dtype=float)[:, None]])
    perm = np.arange(q)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    for k in range(q):
        sub = np.abs(U[k:, k:q])
        i_rel, j_rel = np.unravel_index(np.argmax(sub), sub.shape)
        i, j = k + i_rel, k + j_rel
        if U[i, j] == 0.0:
            raise InconsistentSystemError("Newton matrix is rank deficient")
        U[[k, i]] = U[[i, k]]
        U[:, [k, j]] = U[:, [j, k]]
        perm[[k, j]] = perm[[j, k]]
        factors = U[k + 1 :, k] / U[k, k]
        U[k + 1 :, k:] -= factors[:, None] * U[k, k:]
    redundant = abs(U[q, q]) / scale
    if redundant > redundant_tol:
        raise InconsistentSystemError(
            f"redundant Newton row reads {U[q, q]:.3e} = 0 (relative {redundant:.3e})"
        )
    x = np.zeros(q)
    for k in range(q - 1, -1, -1):
        x[k] = (U[k, q] - U[k, k + 1 : q] @ x[k + 1 : q]) / U[k, k]
    out = np.zeros(q)
    out[perm] = x
    return out, redundant


# ---------------------------------------------------------------------------
# Newton solver for one curve
# ---------------------------------------------------------------------------

@dataclass
class ContinuationConstraint:
    """F_delta: case 'first' pins |a_1|^2+|b_1|^2 = delta^2, case 'continue'
    pins |alpha - alpha_prev|^2 = delta^2."""

    kind: str  # "first" | "continue"
    delta: float
    alpha_prev: np.ndarray | None = None  # (2M+1, N), required for "continue"


def _constraint_rows(curve: InvariantCurve, constraint: ContinuationConstraint):
    M, N = curve.M, curve.N
    grad = np.zeros((2 * M + 1, N))
    if constraint.kind == "first":
        a1 = curve.coeffs[1]
        b1 = curve.coeffs[M + 1]
        value = float(a1 @ a1 + b1 @ b1 - constraint.delta**2)
        grad[1] = 2.0 * a1
        grad[M + 1] = 2.0 * b1
    elif constraint.kind == "continue":
        if constraint.alpha_prev is None:
            raise ConfigurationError("'continue' constraint requires alpha_prev")
        diff = curve.coeffs - constraint.alpha_prev
        value = float(np.sum(diff * diff) - constraint.delta**2)
        grad = 2.0 * diff
    else:
        raise ConfigurationError(f"unknown constraint kind {constraint.kind!r}")
    return value, grad.ravel()


def solve_curve(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    guess: InvariantCurve,
    z_star: np.ndarray,
    constraint: ContinuationConstraint,
    e: np.ndarray | None = None,
    max_iter: int = 12,
    tol: float = 1e-11,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    adapt_M: bool = True,
    redundant_tol: float = 1e-6,
) -> InvariantCurve:
    """Newton-solve the invariance + phase + continuation system for one curve.

    Doubles the Fourier order and re-solves while the coefficient tail
    exceeds the smallness threshold (up to the cap), then rejects rotation
    numbers within resolution of low-order rationals.
    """
    if e is None:
        e = default_phase_vector(guess.N)
    z_star = np.asarray(z_star, dtype=float)
    curve = InvariantCurve(nu=guess.nu % (2 * np.pi), M=guess.M, coeffs=guess.coeffs.copy())

    while True:
        curve = _newton_iterations(
            cfg, settings, curve, z_star, constraint, e,
            max_iter=max_iter, tol=tol, escape_radius=escape_radius,
            redundant_tol=redundant_tol,
        )
        if not adapt_M or curve.tail_norm() < TAIL_TOL:
            break
        if curve.M >= M_CAP:
            raise NewtonDivergenceError(
                f"tail {curve.tail_norm():.2e} above {TAIL_TOL} at the order cap M={M_CAP}"
            )
        new_M = min(2 * curve.M, M_CAP)
        curve = curve.with_M(new_M)
        if constraint.kind == "continue":
            prev = InvariantCurve(nu=0.0, M=(constraint.alpha_prev.shape[0] - 1) // 2,
                                  coeffs=constraint.alpha_prev)
            constraint = ContinuationConstraint(
                kind="continue", delta=constraint.delta,
                alpha_prev=prev.with_M(new_M).coeffs,
            )
    check_resonance(curve.nu)
    return curve


def _newton_iterations(
    cfg, settings, curve, z_star, constraint, e,
    max_iter, tol, escape_radius, redundant_tol,
) -> InvariantCurve:
    M, N = curve.M, curve.N
    n_mesh = 2 * M + 1
    n = n_mesh * N
    theta = curve.mesh()
    basis = fourier_basis(theta, M)  # (n_mesh, 2M+1), independent of nu
    eye_N = np.eye(N)

    best = None
    B = None
    prev_res = np.inf
    for iteration in range(max_iter):
        # the tangent maps DP_j dominate the cost (5x the plain map), so the
        # Jacobian is frozen between iterations and refreshed only when the
        # residual stops contracting fast enough
        refresh = B is None
        PX, B_new, escaped = curve_images(
            cfg, settings, curve, theta, with_tangent=refresh,
            escape_radius=escape_radius,
        )
        if refresh:
            B = B_last = B_new
        if escaped.any():
            raise NewtonDivergenceError(
                f"{int(escaped.sum())} mesh points escaped during curve solve"
            )
        shifted = theta + curve.nu
        F_na = (PX - curve.eval(shifted)).ravel()
        F_e = phase_condition(curve, e, z_star)
        F_d, grad_d = _constraint_rows(curve, constraint)
        F = np.concatenate([F_na, [F_e], [F_d]])
        res = float(np.max(np.abs(F)))
        if res < tol:
            curve.residual = float(np.max(np.abs(F_na))) if F_na.size else 0.0
            return curve
        if not refresh and res > 0.3 * prev_res:
            B = None  # stale Jacobian; refresh on the next pass
        if best is not None and res > 1e3 * best:
            raise NewtonDivergenceError(f"Newton residual diverging ({res:.3e})")
        best = res if best is None else min(best, res)
        prev_res = res

        basis_nu = fourier_basis(shifted, M)
        # d F_na / d alpha: DP_j acting on the basis minus the shifted basis
        J_alpha = np.einsum("jc,jab->jacb", basis, B_last).reshape(n_mesh, N, n_mesh, N)
        J_alpha -= np.einsum("jc,ab->jacb", basis_nu, eye_N).reshape(n_mesh, N, n_mesh, N)
        J_alpha = J_alpha.reshape(n, n)
        dF_dnu = -curve.eval_deriv(shifted).ravel()

        A = np.zeros((n + 2, n + 1))
        A[:n, :n] = J_alpha
        A[:n, n] = dF_dnu
        A[n, : (M + 1) * N] = np.tile(e, M + 1)  # phase row: d F_e/d a_k = e
        A[n + 1, :n] = grad_d
        step, _ = solve_newton_system(A, -F, redundant_tol=redundant_tol)

        curve = InvariantCurve(
            nu=(curve.nu + step[n]) % (2 * np.pi),
            M=M,
            coeffs=curve.coeffs + step[:n].reshape(n_mesh, N),
            sigma=curve.sigma,
        )
    raise NewtonDivergenceError(f"curve Newton did not converge in {max_iter} iterations (residual {res:.3e})")


# ---------------------------------------------------------------------------
# Continuation of the curve family
# ---------------------------------------------------------------------------

@dataclass
class TerminationInfo:
    """Why and where a continuation run stopped."""

    reason: str  # "step_underflow" | "curve_budget" | "escape"
    final_nu: float
    n_curves: int
    resonance_p: int = 0
    resonance_q: int = 0
    resonance_gap: float = np.nan
    detail: str = ""

    def to_dict(self) -> dict:
        return {
            "reason": self.reason,
            "final_nu": self.final_nu,
            "n_curves": self.n_curves,
            "resonance_p": self.resonance_p,
            "resonance_q": self.resonance_q,
            "resonance_gap": self.resonance_gap,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TerminationInfo":
        return cls(
            reason=data["reason"], final_nu=float(data["final_nu"]),
            n_curves=int(data["n_curves"]),
            resonance_p=int(data.get("resonance_p", 0)),
            resonance_q=int(data.get("resonance_q", 0)),
            resonance_gap=float(data.get("resonance_gap", np.nan)),
            detail=data.get("detail", ""),
        )


@dataclass
class CurveFamily:
    """Ordered family of invariant curves around a fixed point."""

    z_star: np.ndarray
    curves: list
    termination: TerminationInfo | None = None

    def __post_init__(self):
        self.z_star = np.asarray(self.z_star, dtype=float)

    def save(self, path):
        payload = {
            "z_star": self.z_star.tolist(),
            "curves": [c.to_dict() for c in self.curves],
            "termination": self.termination.to_dict() if self.termination else None,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path) -> "CurveFamily":
        with open(path) as fh:
            payload = json.load(fh)
        term = payload.get("termination")
        return cls(
            z_star=np.array(payload["z_star"], dtype=float),
            curves=[InvariantCurve.from_dict(c) for c in payload["curves"]],
            termination=TerminationInfo.from_dict(term) if term else None,
        )


def initial_curve_guess(orbit: FixedPointOrbit, h: float, M: int = 8) -> InvariantCurve:
    """Seed curve from the elliptic eigenvector of the fixed-point monodromy.

    The eigenvector of exp(-i*nu0) with nu0 in (0, pi) is taken so that the
    linearized map advances theta by +nu0.
    """
    ev = orbit.eigenvalues
    elliptic = [
        (lam, orbit.eigenvectors[:, i])
        for i, lam in enumerate(ev)
        if abs(abs(lam) - 1.0) < 1e-6 and abs(np.imag(lam)) > 1e-8
    ]
    if not elliptic:
        raise ConfigurationError("fixed point has no elliptic eigenvalue pair")
    lam, vc = min(elliptic, key=lambda t: np.imag(t[0]))  # imag < 0 branch
    nu0 = float(-np.angle(lam))
    N = orbit.monodromy.shape[0]
    coeffs = np.zeros((2 * M + 1, N))
    coeffs[0] = orbit.z_star.z
    scale = h / np.linalg.norm(vc)
    coeffs[1] = scale * np.real(vc)
    coeffs[M + 1] = scale * np.imag(vc)
    return InvariantCurve(nu=nu0, M=M, coeffs=coeffs)


def continue_family(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    orbit: FixedPointOrbit,
    n_curves: int = 60,
    delta: float = 1e-2,
    delta_min: float = 1e-6,
    delta_max: float = 5e-2,
    M0: int = 8,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    verbose: bool = False,
    checkpoint_path=None,
    resume_from: list | None = None,
) -> CurveFamily:
    """Grow the family of invariant curves outward from a fixed point.

    Pseudo-arclength steps of size delta in coefficient space; the step is
    halved whenever Newton fails or the rotation number falls in a resonance
    gap, and doubled after three straightforward successes.  The family
    terminates when delta underflows delta_min, which in practice happens
    against a low-order resonance.
    """
    z_star = orbit.z_star.z
    if resume_from:
        curves = [InvariantCurve(nu=c.nu, M=c.M, coeffs=c.coeffs.copy(),
                                 sigma=c.sigma, dist=c.dist, residual=c.residual)
                  for c in resume_from]
        guess, constraint = _predict(curves, delta)
    else:
        curves = []
        guess = initial_curve_guess(orbit, h=delta, M=M0)
        constraint = ContinuationConstraint(kind="first", delta=delta)
    easy_streak = 0
    termination = None
    last_error = ""

    while len(curves) < n_curves:
        try:
            curve = solve_curve(cfg, settings, guess, z_star, constraint,
                                escape_radius=escape_radius)
            if constraint.kind == "continue":
                prev_c = constraint.alpha_prev
                M_cmp = max(curve.M, (prev_c.shape[0] - 1) // 2)
                moved = np.linalg.norm(
                    curve.with_M(M_cmp).coeffs
                    - InvariantCurve(nu=0.0, M=(prev_c.shape[0] - 1) // 2,
                                     coeffs=prev_c).with_M(M_cmp).coeffs)
                if not (0.25 * delta <= moved <= 4.0 * delta):
                    raise NewtonDivergenceError(
                        f"continuation step moved {moved:.3e} for delta {delta:.3e}")
        except (NewtonDivergenceError, InconsistentSystemError, ResonanceError) as err:
            last_error = f"{type(err).__name__}: {err}"
            delta *= 0.5
            easy_streak = 0
            if delta < delta_min:
                termination = _termination_from_family(
                    "step_underflow", curves, detail=last_error)
                break
            if curves:
                guess, constraint = _predict(curves, delta)
            else:
                guess = initial_curve_guess(orbit, h=delta, M=M0)
                constraint = ContinuationConstraint(kind="first", delta=delta)
            continue

        curve.dist = curve.min_distance(z_star)
        curves.append(curve)
        if checkpoint_path is not None:
            CurveFamily(z_star=z_star, curves=curves).save(checkpoint_path)
        if verbose:
            print(f"curve {len(curves)}: nu={curve.nu:.7f} dist={curve.dist:.5f} "
                  f"M={curve.M} delta={delta:.2e}", flush=True)
        easy_streak += 1
        if easy_streak >= 3 and delta < delta_max:
            delta = min(2.0 * delta, delta_max)
            easy_streak = 0
        guess, constraint = _predict(curves, delta)

    if termination is None:
        termination = _termination_from_family("curve_budget", curves)
    for sigma, c in enumerate(sorted(curves, key=lambda c: c.dist)):
        c.sigma = sigma
    curves.sort(key=lambda c: c.sigma)
    return CurveFamily(z_star=z_star, curves=curves, termination=termination)


def _predict(curves: list, delta: float):
    """Secant predictor for the next curve plus its continuation constraint.

    The predictor must start off the previous curve: on it, the gradient of
    the continuation constraint vanishes and the Newton system degenerates.
    With a single curve available the family tangent is approximated by
    radial growth of the first harmonic.
    """
    last = curves[-1]
    if len(curves) >= 2:
        prev = curves[-2]
        M = max(last.M, prev.M)
        c_last = last.with_M(M).coeffs
        c_prev = prev.with_M(M).coeffs
        direction = c_last - c_prev
        norm = np.linalg.norm(direction)
        nu_slope = (last.nu - prev.nu) / norm if norm > 0 else 0.0
    else:
        M = last.M
        c_last = last.coeffs.copy()
        direction = np.zeros_like(c_last)
        direction[1] = c_last[1]
        direction[M + 1] = c_last[M + 1]
        norm = np.linalg.norm(direction)
        nu_slope = 0.0
    if norm == 0.0:
        raise NewtonDivergenceError("degenerate continuation direction")
    coeffs = c_last + (delta / norm) * direction
    nu = last.nu + delta * nu_slope
    guess = InvariantCurve(nu=nu, M=M, coeffs=coeffs)
    constraint = ContinuationConstraint(
        kind="continue", delta=delta, alpha_prev=last.with_M(M).coeffs)
    return guess, constraint


def _termination_from_family(reason: str, curves: list, detail: str = "") -> TerminationInfo:
    if not curves:
        return TerminationInfo(reason=reason, final_nu=np.nan, n_curves=0, detail=detail)
    nu = curves[-1].nu
    frac = Fraction((nu / (2 * np.pi)) % 1.0).limit_denominator(RESONANCE_MAX_DEN)
    return TerminationInfo(
        reason=reason, final_nu=nu, n_curves=len(curves),
        resonance_p=frac.numerator, resonance_q=frac.denominator,
        resonance_gap=abs(nu - 2 * np.pi * float(frac)),
        detail=detail,
    )


# ---------------------------------------------------------------------------
# Linear stability of a curve
# ---------------------------------------------------------------------------

def rotation_matrix(M: int, nu: float) -> np.ndarray:
    """Coefficient-space shift operator: coefficients of f(theta + nu)."""
    n = 2 * M + 1
    R = np.zeros((n, n))
    R[0, 0] = 1.0
    for k in range(1, M + 1):
        c, s = np.cos(k * nu), np.sin(k * nu)
        R[k, k] = c
        R[k, M + k] = s
        R[M + k, k] = -s
        R[M + k, M + k] = c
    return R


def curve_stability(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    unit_tol: float = 1e-4,
    pair_tol: float = 1e-6,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
) -> CurveStability:
    """Stable/unstable multipliers and tangent bundles of an invariant curve.

    Solves B(theta) Psi(theta) = Lambda Psi(theta + nu) densely in the
    Fourier representation.  The spectrum must contain exactly two unit
    eigenvalues (the tangent and the conserved-action directions) plus a
    reciprocal hyperbolic pair; anything else raises DegeneracyError.
    """
    M, N = curve.M, curve.N
    theta = curve.mesh()
    _, B, escaped = curve_images(cfg, settings, curve, theta, with_tangent=True,
                                 escape_radius=escape_radius)
    if escaped.any():
        raise NewtonDivergenceError("curve mesh point escaped during stability analysis")

    basis = fourier_basis(theta, M)  # square, (2M+1, 2M+1)
    eye_N = np.eye(N)
    n_mesh = 2 * M + 1
    A = np.einsum("jc,jab->jacb", basis, B).reshape(n_mesh * N, n_mesh * N)
    C_nu = np.kron(basis @ rotation_matrix(M, curve.nu), eye_N)
    G = np.linalg.solve(C_nu, A)
    lam, vecs = np.linalg.eig(G)

    # the tangent/action pair sits at a defective eigenvalue 1, which noise
    # of size eps splits by ~sqrt(eps) along either the real axis or a
    # complex-conjugate arc, so it is identified by complex distance
    units = np.flatnonzero(np.abs(lam - 1.0) < unit_tol)
    if units.size != 2:
        raise DegeneracyError(
            f"expected exactly two unit eigenvalues within {unit_tol}, found {units.size}"
        )
    real = np.abs(np.imag(lam)) < 1e-6 * np.maximum(1.0, np.abs(lam))
    rest = np.setdiff1d(np.flatnonzero(real), units)
    if rest.size == 0:
        raise DegeneracyError("no hyperbolic pair in the curve spectrum")
    lam_rest = np.real(lam[rest])
    i_u = rest[np.argmax(lam_rest)]
    lam_u = float(np.real(lam[i_u]))
    i_s = rest[np.argmin(np.abs(lam_rest - 1.0 / lam_u))]
    lam_s = float(np.real(lam[i_s]))
    if abs(lam_s * lam_u - 1.0) > pair_tol:
        raise DegeneracyError(
            f"hyperbolic pair not reciprocal: {lam_s} * {lam_u} = {lam_s * lam_u}"
        )

    def bundle(i: int) -> np.ndarray:
        v = vecs[:, i]
        v = np.real(v / np.exp(1j * np.angle(v[np.argmax(np.abs(v))])))
        X = v.reshape(n_mesh, N)
        psi0 = X[: M + 1].sum(axis=0)  # Psi(0)
        X = X / np.linalg.norm(psi0)
        psi0 = X[: M + 1].sum(axis=0)
        j = int(np.argmax(np.abs(psi0)))
        if psi0[j] < 0:
            X = -X
        return X

    return CurveStability(
        lambda_s=lam_s, lambda_u=lam_u,
        unit_eigs=(float(np.real(lam[units[0]])), float(np.real(lam[units[1]]))),
        bundle_s=bundle(i_s), bundle_u=bundle(i_u),
    )


# ---------------------------------------------------------------------------
# Dynamical rotation number (independent of the Newton solve)
# ---------------------------------------------------------------------------

def _birkhoff_weights(n: int) -> np.ndarray:
    s = (np.arange(1, n + 1)) / (n + 1)
    w = np.exp(-1.0 / (s * (1.0 - s)))
    return w / w.sum()

def rotation_number(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    n_samples: int = 512,
    n_iter: int = 10000,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
) -> float:
    """Rotation number of the map restricted to the curve.

    The angle advance g(theta) is measured by mapping curve samples under P
    and projecting the images back onto the curve (Newton on the normal
    equation along the curve); the weighted Birkhoff average of g along the
    circle dynamics then gives the rotation number.  Projecting back after
    every step keeps the iteration on the curve, which a raw orbit would
    leave at the rate of the unstable multiplier.
    """
    theta = np.arange(n_samples) * (2.0 * np.pi / n_samples)
    PX, _, escaped = curve_images(cfg, settings, curve, theta,
                                  escape_radius=escape_radius)
    if escaped.any():
        raise NewtonDivergenceError("curve sample escaped during rotation-number sampling")
    # project each image back onto the curve: Newton on f(t) = x'(t).(x(t) - y)
    tproj = theta + curve.nu
    k = np.arange(1, curve.M + 1)
    for _ in range(30):
        x = curve.eval(tproj)
        dx = curve.eval_deriv(tproj)
        kt = tproj[:, None] * k[None, :]
        d2basis = np.concatenate(
            [np.zeros((tproj.size, 1)), -(k**2) * np.cos(kt), -(k**2) * np.sin(kt)], axis=1)
        d2x = d2basis @ curve.coeffs
        f = np.sum(dx * (x - PX), axis=1)
        df = np.sum(d2x * (x - PX), axis=1) + np.sum(dx * dx, axis=1)
        step = f / df
        tproj = tproj - step
        if np.max(np.abs(step)) < 1e-13:
            break
    g = (tproj - theta) % (2 * np.pi)
    # trig interpolation of g on the sample mesh, then cheap circle iteration
    ghat = np.fft.rfft(g) / n_samples
    def g_interp(t):
        kk = np.arange(ghat.size)
        return np.real(ghat[0]) + 2.0 * np.sum(
            np.real(ghat[1:]) * np.cos(kk[1:] * t) - np.imag(ghat[1:]) * np.sin(kk[1:] * t))
    w = _birkhoff_weights(n_iter)
    t = 0.0
    total = 0.0
    for i in range(n_iter):
        gi = g_interp(t % (2 * np.pi))
        total += w[i] * gi
        t += gi
    return float(total)
