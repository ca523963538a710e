"""Driven soft-Coulomb atom: Hamiltonians, vector fields and tangent equations.

The electron moves in an attractive soft-core potential -1/sqrt(r^2 + a^2)
plus a linearly polarized CW laser field E0*cos(omega*t) along x, in atomic
units throughout.  Everything here is a pure function of its inputs; the
array helpers (:func:`rhs`, :func:`rhs_jacobian`) accept batches of states
with shape (..., d) so that callers can integrate many trajectories at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * np.pi

# field amplitude for 3e14 W/cm^2 (sqrt(3e14 / 3.50944758e16) a.u.); the
# commonly quoted rounded value 0.0925 shifts the near-core eigenvalues in
# the 3rd significant figure
DEFAULT_E0 = 0.09245730866947958
DEFAULT_OMEGA = 0.0584
DEFAULT_A = 1.0

#: polar integration refuses rho below this when p_theta != 0 (centrifugal blow-up)
RHO_MIN = 1e-12


class ConfigurationError(ValueError):
    """Inconsistent physical configuration (bad parameter, dimension mismatch)."""


class SingularityError(ValueError):
    """Evaluation at a singular point of the vector field (rho -> 0 with p_theta != 0)."""


@dataclass(frozen=True)
class SystemConfig:
    """Laser/atom parameters.

    Attributes
    ----------
    e0 : float
        Field amplitude (a.u.).
    omega : float
        Laser angular frequency (a.u.).
    a : float
        Soft-core parameter; enters as a**2 inside the square root.
    d : int
        Spatial dimension, 1, 2 or 3.
    coulomb_enabled : bool
        Switch to drop the soft-Coulomb term.  Exists only so the
        closed-form drift solutions can serve as integration oracles;
        it is not a physics feature.
    """

    e0: float = DEFAULT_E0
    omega: float = DEFAULT_OMEGA
    a: float = DEFAULT_A
    d: int = 1
    coulomb_enabled: bool = True

    def __post_init__(self):
        if not (self.e0 > 0.0):
            raise ConfigurationError(f"e0 must be positive, got {self.e0}")
        if not (self.omega > 0.0):
            raise ConfigurationError(f"omega must be positive, got {self.omega}")
        if not (self.a > 0.0):
            raise ConfigurationError(f"a must be positive, got {self.a}")
        if self.d not in (1, 2, 3):
            raise ConfigurationError(f"d must be 1, 2 or 3, got {self.d}")

    @property
    def T(self) -> float:
        """Laser period 2*pi/omega (a.u. time)."""
        return TWO_PI / self.omega

    @property
    def quiver_radius(self) -> float:
        """Free-electron excursion scale E0/omega**2 (a.u.)."""
        return self.e0 / self.omega**2

    def to_dict(self) -> dict:
        return {
            "e0": self.e0,
            "omega": self.omega,
            "a": self.a,
            "d": self.d,
            "coulomb_enabled": self.coulomb_enabled,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        known = {"e0", "omega", "a", "d", "coulomb_enabled"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "SystemConfig":
        """Load from a key-value text file (``key = value`` lines, '#' comments)
        or from a JSON object with the same keys."""
        text = Path(path).read_text()
        stripped = text.lstrip()
        if stripped.startswith("{"):
            return cls.from_dict(json.loads(text))
        data = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lower()
            if key == "d":
                data[key] = int(value)
            elif key == "coulomb_enabled":
                data[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                data[key] = float(value)
        return cls.from_dict(data)


@dataclass(frozen=True)
class PhaseState:
    """A point (q, p) in 2d-dimensional phase space with a time tag.

    Escape is a caller-side notion (|q| beyond some cutoff); states only
    require finite components.
    """

    q: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise ConfigurationError(f"q and p must be 1-d of equal length, got {q.shape} and {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.isfinite(self.t)):
            raise ConfigurationError("non-finite phase-space components")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @property
    def d(self) -> int:
        return self.q.size

    @property
    def z(self) -> np.ndarray:
        """Concatenated (q, p) vector of length 2d."""
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_z(cls, z, t: float = 0.0) -> "PhaseState":
        z = np.asarray(z, dtype=float)
        d = z.size // 2
        return cls(q=z[:d], p=z[d:], t=t)


@dataclass(frozen=True)
class PolarState3D:
    """Cylindrical-coordinate state (x, rho, theta, p_x, p_rho, p_theta) for d=3.

    p_theta = y*p_z - z*p_y is conserved along trajectories.
    """

    x: float
    rho: float
    theta: float
    px: float
    prho: float
    ptheta: float
    t: float = 0.0

    def __post_init__(self):
        if self.rho < 0.0:
            raise ConfigurationError(f"rho must be >= 0, got {self.rho}")

    @property
    def z(self) -> np.ndarray:
        return np.array([self.x, self.rho, self.theta, self.px, self.prho, self.ptheta])


def _check_dim(cfg: SystemConfig, s: PhaseState) -> None:
    if s.d != cfg.d:
        raise ConfigurationError(f"state dimension {s.d} != config dimension {cfg.d}")


# ---------------------------------------------------------------------------
# Batched array core.  q, p have shape (..., d); t is scalar or broadcastable.
# ---------------------------------------------------------------------------

def potential(cfg: SystemConfig, q: np.ndarray) -> np.ndarray:
    """Soft-Coulomb potential -1/sqrt(q^2 + a^2); zero when the term is disabled."""
    if not cfg.coulomb_enabled:
        return np.zeros(q.shape[:-1])
    r2 = np.sum(q * q, axis=-1)
    return -1.0 / np.sqrt(r2 + cfg.a**2)


def rhs(cfg: SystemConfig, t, q: np.ndarray, p: np.ndarray):
    """Hamilton's equations: returns (dq/dt, dp/dt), batched over leading axes."""
    dq = p
    dp = np.zeros_like(q)
    if cfg.coulomb_enabled:
        r2 = np.sum(q * q, axis=-1, keepdims=True)
        dp -= q * (r2 + cfg.a**2) ** -1.5
    dp[..., 0] -= cfg.e0 * np.cos(cfg.omega * t)
    return dq, dp


def rhs_jacobian(cfg: SystemConfig, t, q: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Jacobian A of the vector field in (q, p), shape (..., 2d, 2d).

    The field term is state-independent so A has the block form
    [[0, I], [-Hess V, 0]].
    """
    d = q.shape[-1]
    A = np.zeros(q.shape[:-1] + (2 * d, 2 * d))
    idx = np.arange(d)
    A[..., idx, d + idx] = 1.0
    if cfg.coulomb_enabled:
        r2 = np.sum(q * q, axis=-1)[..., None, None]
        s3 = (r2 + cfg.a**2) ** -1.5
        s5 = (r2 + cfg.a**2) ** -2.5
        qq = q[..., :, None] * q[..., None, :]
        hess = s3 * np.eye(d) - 3.0 * s5 * qq
        A[..., d:, :d] = -hess
    return A


# ---------------------------------------------------------------------------
# PhaseState-level operations
# ---------------------------------------------------------------------------

def hamiltonian(cfg: SystemConfig, s: PhaseState) -> float:
    """Energy p^2/2 - 1/sqrt(q^2 + a^2) + q_x E0 cos(omega t)."""
    _check_dim(cfg, s)
    kinetic = 0.5 * float(np.dot(s.p, s.p))
    return kinetic + float(potential(cfg, s.q)) + s.q[0] * cfg.e0 * np.cos(cfg.omega * s.t)


def vector_field(cfg: SystemConfig, s: PhaseState):
    """(dq/dt, dp/dt) at a single state."""
    _check_dim(cfg, s)
    dq, dp = rhs(cfg, s.t, s.q, s.p)
    return dq, dp


def variational_field(cfg: SystemConfig, s: PhaseState, J: np.ndarray):
    """Time derivative of the state together with dJ/dt = A(s, t) J.

    J may be 2d x 2d (full tangent matrix) or 2d x k (a bundle of tangent
    vectors); it is only required to be finite.
    """
    _check_dim(cfg, s)
    J = np.asarray(J, dtype=float)
    if J.shape[0] != 2 * cfg.d:
        raise ConfigurationError(f"tangent matrix must have {2 * cfg.d} rows, got {J.shape}")
    if not np.all(np.isfinite(J)):
        raise ConfigurationError("non-finite tangent matrix")
    dq, dp = rhs(cfg, s.t, s.q, s.p)
    A = rhs_jacobian(cfg, s.t, s.q, s.p)
    return (dq, dp), A @ J


# ---------------------------------------------------------------------------
# d=3 polar form along the polarization axis
# ---------------------------------------------------------------------------

def polar_hamiltonian(cfg: SystemConfig, s: PolarState3D) -> float:
    """Energy in cylindrical coordinates, including the centrifugal term."""
    if cfg.d != 3:
        raise ConfigurationError("polar form requires d=3")
    if s.rho < RHO_MIN and s.ptheta != 0.0:
        raise SingularityError(f"rho={s.rho} below {RHO_MIN} with p_theta={s.ptheta}")
    centrifugal = 0.5 * s.ptheta**2 / s.rho**2 if s.ptheta != 0.0 else 0.0
    coulomb = -1.0 / np.sqrt(s.x**2 + s.rho**2 + cfg.a**2) if cfg.coulomb_enabled else 0.0
    return (0.5 * (s.px**2 + s.prho**2) + centrifugal + coulomb
            + s.x * cfg.e0 * np.cos(cfg.omega * s.t))


def polar_vector_field(cfg: SystemConfig, s: PolarState3D):
    """Rates (dx, drho, dtheta, dpx, dprho, dptheta); dptheta is identically 0."""
    if cfg.d != 3:
        raise ConfigurationError("polar form requires d=3")
    if s.rho < RHO_MIN and s.ptheta != 0.0:
        raise SingularityError(f"rho={s.rho} below {RHO_MIN} with p_theta={s.ptheta}")
    if cfg.coulomb_enabled:
        s3 = (s.x**2 + s.rho**2 + cfg.a**2) ** -1.5
        fx = -s.x * s3
        frho = -s.rho * s3
    else:
        fx = frho = 0.0
    dx = s.px
    drho = s.prho
    dtheta = s.ptheta / s.rho**2 if s.ptheta != 0.0 else 0.0
    dpx = fx - cfg.e0 * np.cos(cfg.omega * s.t)
    dprho = frho + (s.ptheta**2 / s.rho**3 if s.ptheta != 0.0 else 0.0)
    return dx, drho, dtheta, dpx, dprho, 0.0


def cartesian_to_polar(s: PhaseState) -> PolarState3D:
    """(x, y, z, p) -> (x, rho, theta, p_x, p_rho, p_theta) for d=3."""
    if s.d != 3:
        raise ConfigurationError("cartesian_to_polar requires d=3")
    x, y, zc = s.q
    px, py, pz = s.p
    rho = np.hypot(y, zc)
    theta = np.arctan2(zc, y)
    ptheta = y * pz - zc * py
    if rho < RHO_MIN:
        if ptheta != 0.0:
            raise SingularityError("rho=0 with nonzero p_theta")
        prho = np.hypot(py, pz)
    else:
        prho = (y * py + zc * pz) / rho
    return PolarState3D(x=x, rho=rho, theta=theta, px=px, prho=prho, ptheta=ptheta, t=s.t)


def polar_to_cartesian(s: PolarState3D) -> PhaseState:
    y = s.rho * np.cos(s.theta)
    zc = s.rho * np.sin(s.theta)
    py = s.prho * np.cos(s.theta) - (s.ptheta / s.rho) * np.sin(s.theta) if s.rho > 0 else s.prho * np.cos(s.theta)
    pz = s.prho * np.sin(s.theta) + (s.ptheta / s.rho) * np.cos(s.theta) if s.rho > 0 else s.prho * np.sin(s.theta)
    return PhaseState(q=np.array([s.x, y, zc]), p=np.array([s.px, py, pz]), t=s.t)


def angular_momentum_x(s: PhaseState) -> float:
    """p_theta = y p_z - z p_y, the conserved transverse angular momentum (d=3)."""
    if s.d != 3:
        raise ConfigurationError("angular_momentum_x requires d=3")
    return float(s.q[1] * s.p[2] - s.q[2] * s.p[1])


def embed(s: PhaseState, d: int) -> PhaseState:
    """Embed a lower-dimensional state into dimension d with zero transverse components."""
    if s.d > d:
        raise ConfigurationError(f"cannot embed d={s.d} into d={d}")
    q = np.zeros(d)
    p = np.zeros(d)
    q[: s.d] = s.q
    p[: s.d] = s.p
    return PhaseState(q=q, p=p, t=s.t)
