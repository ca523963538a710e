"""Time integration, the stroboscopic map P and its tangent map DP.

The stroboscopic map advances a state by one laser period T.  Single states
go through :func:`stroboscopic_map`; bulk work (atlas scans, manifold
globalization, invariant-curve meshes) goes through :func:`iterate_batch`,
which stacks many trajectories into one adaptive DOP853 solve per period and
tightens the tolerance by sqrt(batch size) so the per-trajectory accuracy is
unchanged.  The backward map integrates the flow in reversed time rather
than inverting DP.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import model
from .model import ConfigurationError, PhaseState, SystemConfig

DEFAULT_ESCAPE_RADIUS = 1000.0

#: floor for effective tolerances after batch scaling
_MIN_TOL = 2.5e-14


class IntegrationError(RuntimeError):
    """Integration failure (step-size underflow); carries the last good state."""

    def __init__(self, message, last_state=None):
        super().__init__(message)
        self.last_state = last_state


@dataclass(frozen=True)
class IntegratorSettings:
    """Tolerances and method selection for the adaptive integrator."""

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_step: float = np.inf
    method_order: int = 8

    def __post_init__(self):
        for name, tol in (("abs_tol", self.abs_tol), ("rel_tol", self.rel_tol)):
            if not (0.0 < tol <= 1e-3):
                raise ConfigurationError(f"{name} must be in (0, 1e-3], got {tol}")
        if self.max_step <= 0.0:
            raise ConfigurationError(f"max_step must be positive, got {self.max_step}")

    @property
    def method(self) -> str:
        return "DOP853" if self.method_order >= 8 else "RK45"


@dataclass
class MapResult:
    """Image of a state under the stroboscopic map (or a partial escape result)."""

    state: PhaseState
    tangent: np.ndarray | None = None
    escaped: bool = False
    escape_radius: float = DEFAULT_ESCAPE_RADIUS
    periods_completed: int = 0


@dataclass
class Trajectory:
    """Dense trajectory samples from :func:`integrate` with t_eval."""

    t: np.ndarray
    q: np.ndarray  # (n_samples, d)
    p: np.ndarray  # (n_samples, d)


def thread_budget() -> int:
    """Worker budget for parallel facilities (env DRIVENATOM_THREADS, default cpu count)."""
    value = os.environ.get("DRIVENATOM_THREADS", "")
    if value.strip():
        return max(1, int(value))
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Closed-form Coulomb-free solution (oracle)
# ---------------------------------------------------------------------------

def drift_arrays(cfg: SystemConfig, t0, q, p, t_final):
    """Laser-only motion: uniform drift transversally, driven oscillation along x.

    Exact for coulomb_enabled=False; used as the integration oracle and for
    ballistic extrapolation of escaped trajectories.  Batched over leading axes.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    t0 = np.asarray(t0, dtype=float)
    t_final = np.asarray(t_final, dtype=float)
    # times may be scalars or arrays matching the leading (batch) axes of q
    dt = t_final - t0
    w, e0 = cfg.omega, cfg.e0
    qf = q + p * (dt[..., None] if dt.ndim else dt)
    pf = p.copy()
    # field kick along x: dp_x/dt = -E0 cos(w t)
    qf[..., 0] += (e0 / w) * np.sin(w * t0) * dt + (e0 / w**2) * (np.cos(w * t_final) - np.cos(w * t0))
    pf[..., 0] += -(e0 / w) * (np.sin(w * t_final) - np.sin(w * t0))
    return qf, pf


def drift_state(cfg: SystemConfig, s0: PhaseState, t_final: float) -> PhaseState:
    """Closed-form drift solution as a PhaseState (see :func:`drift_arrays`)."""
    qf, pf = drift_arrays(cfg, s0.t, s0.q, s0.p, t_final)
    return PhaseState(q=qf, p=pf, t=t_final)


# ---------------------------------------------------------------------------
# Stacked right-hand sides
# ---------------------------------------------------------------------------

def _pack(Z, J):
    if J is None:
        return Z.ravel().copy()
    return np.concatenate([Z.ravel(), J.ravel()])


def _unpack(y, n, twod, k):
    Z = y[: n * twod].reshape(n, twod)
    J = None
    if k:
        J = y[n * twod:].reshape(n, twod, k)
    return Z, J


def _make_rhs(cfg: SystemConfig, n: int, k: int):
    d = cfg.d
    twod = 2 * d

    def f(t, y):
        Z, J = _unpack(y, n, twod, k)
        q, p = Z[:, :d], Z[:, d:]
        dq, dp = model.rhs(cfg, t, q, p)
        out = np.empty_like(y)
        dz = out[: n * twod].reshape(n, twod)
        dz[:, :d] = dq
        dz[:, d:] = dp
        if k:
            A = model.rhs_jacobian(cfg, t, q, p)
            out[n * twod:] = (A @ J).ravel()
        return out

    return f


def _solve(cfg, settings: IntegratorSettings, y0, t0, t1, n_points, rhs, events=None):
    scale = max(1.0, float(n_points)) ** 0.5
    sol = solve_ivp(
        rhs,
        (t0, t1),
        y0,
        method=settings.method,
        rtol=max(settings.rel_tol / scale, _MIN_TOL),
        atol=max(settings.abs_tol / scale, _MIN_TOL),
        max_step=settings.max_step,
        events=events,
        dense_output=False,
    )
    return sol


# ---------------------------------------------------------------------------
# Single-state integration
# ---------------------------------------------------------------------------

def integrate(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    s0: PhaseState,
    t_final: float,
    with_tangent: bool = False,
    J0: np.ndarray | None = None,
    t_eval=None,
    escape_radius: float | None = None,
):
    """Propagate a single state (and optionally its tangent matrix) to t_final.

    Returns a :class:`MapResult` (state, tangent, escape flag), or a
    :class:`Trajectory` when t_eval is given.  The tangent starts from J0
    (identity by default) and obeys dJ/dt = A(z, t) J.

    Raises
    ------
    IntegrationError
        On step-size underflow; the exception carries the last good state.
    """
    if s0.d != cfg.d:
        raise ConfigurationError(f"state dimension {s0.d} != config dimension {cfg.d}")
    d = cfg.d
    twod = 2 * d
    if t_final == s0.t:
        J = np.eye(twod) if with_tangent else None
        if J0 is not None and with_tangent:
            J = np.array(J0, dtype=float)
        if t_eval is not None:
            return Trajectory(t=np.array([s0.t]), q=s0.q[None, :].copy(), p=s0.p[None, :].copy())
        return MapResult(state=s0, tangent=J, escaped=False)

    k = 0
    J = None
    if with_tangent:
        J = np.eye(twod) if J0 is None else np.array(J0, dtype=float).reshape(twod, -1)
        k = J.shape[1]
    Z0 = s0.z[None, :]
    y0 = _pack(Z0, J[None, :, :] if J is not None else None)
    rhs = _make_rhs(cfg, 1, k)

    events = None
    if escape_radius is not None:
        R2 = escape_radius**2

        def escape_event(t, y):
            return float(np.dot(y[:d], y[:d]) - R2)

        escape_event.terminal = True
        escape_event.direction = 1.0
        events = [escape_event]

    if t_eval is not None:
        sol = solve_ivp(
            rhs, (s0.t, t_final), y0,
            method=settings.method, rtol=settings.rel_tol, atol=settings.abs_tol,
            max_step=settings.max_step, t_eval=t_eval, events=events,
        )
        if sol.status == -1:
            last = PhaseState.from_z(sol.y[:twod, -1], t=sol.t[-1]) if sol.t.size else s0
            raise IntegrationError(sol.message, last_state=last)
        Zs = sol.y[: twod, :].T
        return Trajectory(t=sol.t, q=Zs[:, :d], p=Zs[:, d:])

    sol = _solve(cfg, settings, y0, s0.t, t_final, 1, rhs, events=events)
    if sol.status == -1:
        last = PhaseState.from_z(sol.y[:twod, -1], t=sol.t[-1]) if sol.t.size else s0
        raise IntegrationError(sol.message, last_state=last)
    yf = sol.y[:, -1]
    Zf, Jf = _unpack(yf, 1, twod, k)
    state = PhaseState.from_z(Zf[0], t=sol.t[-1])
    escaped = sol.status == 1
    return MapResult(
        state=state,
        tangent=Jf[0] if Jf is not None else None,
        escaped=escaped,
        escape_radius=escape_radius if escape_radius is not None else DEFAULT_ESCAPE_RADIUS,
    )


def _check_section_time(cfg: SystemConfig, t: float) -> None:
    frac = abs((t / cfg.T) - round(t / cfg.T))
    if frac > 1e-9:
        raise ConfigurationError(f"map input must sit on the t=0 section (mod T), got t={t}")


def stroboscopic_map(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    z: PhaseState,
    n: int = 1,
    direction: str = "forward",
    with_tangent: bool = False,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
) -> MapResult:
    """P^n(z) (or P^-n for direction='backward') with optional tangent DP^n.

    Integrates period by period, composing the tangent multiplicatively, and
    aborts with a partial result flagged escaped when |q| leaves the escape
    radius at a period boundary or during a period.
    """
    if direction not in ("forward", "backward"):
        raise ConfigurationError(f"direction must be 'forward' or 'backward', got {direction!r}")
    if n < 0:
        raise ConfigurationError(f"n must be >= 0, got {n}")
    _check_section_time(cfg, z.t)
    sign = 1.0 if direction == "forward" else -1.0
    state = z
    J_total = np.eye(2 * cfg.d) if with_tangent else None
    for k in range(n):
        res = integrate(
            cfg, settings, state, state.t + sign * cfg.T,
            with_tangent=with_tangent, escape_radius=escape_radius,
        )
        if with_tangent:
            J_total = res.tangent @ J_total
        state = res.state
        if res.escaped or float(np.dot(state.q, state.q)) > escape_radius**2:
            return MapResult(
                state=PhaseState(q=state.q, p=state.p, t=z.t),
                tangent=J_total, escaped=True,
                escape_radius=escape_radius, periods_completed=k + (0 if res.escaped else 1),
            )
    return MapResult(
        state=PhaseState(q=state.q, p=state.p, t=z.t),
        tangent=J_total, escaped=False,
        escape_radius=escape_radius, periods_completed=n,
    )


# ---------------------------------------------------------------------------
# Batched map iteration
# ---------------------------------------------------------------------------

@dataclass
class BatchState:
    """Snapshot of a batch of trajectories at a period boundary.

    Escaped entries are frozen at their state on the first boundary where
    |q| exceeded the escape radius; escape_period records that boundary
    (-1 while still active).
    """

    period: int
    Z: np.ndarray                      # (n, 2d)
    J: np.ndarray | None               # (n, 2d, k) or None
    active: np.ndarray                 # (n,) bool
    escape_period: np.ndarray          # (n,) int
    t: float = 0.0


def iterate_batch(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    Z0: np.ndarray,
    n_periods: int,
    direction: str = "forward",
    J0: np.ndarray | None = None,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    chunk_size: int = 256,
    t0: float = 0.0,
):
    """Generator applying the stroboscopic map to a batch of states.

    Yields a :class:`BatchState` after every period.  Each period integrates
    the still-active subset in chunks of at most chunk_size trajectories,
    one stacked adaptive solve per chunk, with tolerances tightened by the
    square root of the chunk size.  Output is deterministic and independent
    of the chunking.
    """
    if direction not in ("forward", "backward"):
        raise ConfigurationError(f"direction must be 'forward' or 'backward', got {direction!r}")
    sign = 1.0 if direction == "forward" else -1.0
    d = cfg.d
    twod = 2 * d
    Z = np.array(Z0, dtype=float)
    if Z.ndim != 2 or Z.shape[1] != twod:
        raise ConfigurationError(f"Z0 must have shape (n, {twod}), got {Z.shape}")
    n = Z.shape[0]
    J = None
    k = 0
    if J0 is not None:
        J = np.array(J0, dtype=float)
        k = J.shape[2]
    active = np.sum(Z[:, :d] ** 2, axis=1) <= escape_radius**2
    escape_period = np.where(active, -1, 0).astype(int)
    t = float(t0)
    R2 = escape_radius**2

    for period in range(1, n_periods + 1):
        idx = np.flatnonzero(active)
        t_next = t + sign * cfg.T
        for start in range(0, idx.size, chunk_size):
            sel = idx[start : start + chunk_size]
            m = sel.size
            rhs = _make_rhs(cfg, m, k)
            y0 = _pack(Z[sel], J[sel] if J is not None else None)
            sol = _solve(cfg, settings, y0, t, t_next, m, rhs)
            if sol.status != 0:
                raise IntegrationError(f"batch integration failed in period {period}: {sol.message}")
            Zf, Jf = _unpack(sol.y[:, -1], m, twod, k)
            Z[sel] = Zf
            if J is not None:
                J[sel] = Jf
        newly_escaped = active & (np.sum(Z[:, :d] ** 2, axis=1) > R2)
        escape_period[newly_escaped] = period
        active &= ~newly_escaped
        t = t_next
        yield BatchState(period=period, Z=Z, J=J, active=active, escape_period=escape_period, t=t)
        if not active.any() and period < n_periods:
            # nothing left to integrate; emit frozen snapshots for the remaining periods
            for rest in range(period + 1, n_periods + 1):
                t = t + sign * cfg.T
                yield BatchState(period=rest, Z=Z, J=J, active=active, escape_period=escape_period, t=t)
            return


def map_points(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    Z0: np.ndarray,
    n_periods: int = 1,
    direction: str = "forward",
    with_tangent: bool = False,
    J0: np.ndarray | None = None,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    chunk_size: int = 256,
):
    """Final images P^(+-n) of a batch, optionally with tangent matrices.

    J0 may hold a reduced set of tangent columns, shape (n, 2d, k).  Returns
    (Z, J, escape_period); escaped rows hold the state frozen at the escape
    boundary and J rows for escaped entries are not meaningful.
    """
    Z0 = np.asarray(Z0, dtype=float)
    n = Z0.shape[0]
    twod = 2 * cfg.d
    if J0 is None and with_tangent:
        J0 = np.broadcast_to(np.eye(twod), (n, twod, twod)).copy()
    last = None
    for last in iterate_batch(
        cfg, settings, Z0, n_periods, direction=direction, J0=J0,
        escape_radius=escape_radius, chunk_size=chunk_size,
    ):
        pass
    if last is None:  # n_periods == 0
        return Z0.copy(), J0, np.full(n, -1, dtype=int)
    return last.Z, last.J, last.escape_period
