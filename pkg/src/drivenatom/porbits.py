"""Fixed points of the stroboscopic map: location, stability, 1D manifolds.

Period-T orbits of the driven atom are fixed points of P.  They are found
by a Newton iteration on P(z) - z using the propagated tangent map; the
linear step is solved by least squares so that degenerate directions
(the parabolic angular pair in d=3, or the Coulomb-free line of fixed
points) reduce the step to the non-singular subspace instead of crashing.

The 1D stable/unstable manifolds of saddle fixed points of the d=1 map are
grown by adaptive refinement of a fundamental segment seeded along the
monodromy eigenvector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import flow, model
from .flow import DEFAULT_ESCAPE_RADIUS, IntegratorSettings
from .model import ConfigurationError, PhaseState, SystemConfig

RESIDUAL_TOL = 1e-9
PARABOLIC_TOL = 1e-6
DEGENERACY_TOL = 1e-8


class NewtonDivergenceError(RuntimeError):
    """Newton iteration failed to converge; carries the last iterate."""

    def __init__(self, message, last_state=None, residual=None):
        super().__init__(message)
        self.last_state = last_state
        self.residual = residual


@dataclass
class FixedPointOrbit:
    """A converged fixed point z* of P with its monodromy spectrum."""

    z_star: PhaseState
    monodromy: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns match eigenvalues
    label: str = ""
    residual: float = np.nan
    degenerate: bool = False

    @property
    def d(self) -> int:
        return self.z_star.d

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "d": self.d,
            "z_star": self.z_star.z.tolist(),
            "t": self.z_star.t,
            "monodromy_row_major": self.monodromy.ravel().tolist(),
            "eigenvalues": [[ev.real, ev.imag] for ev in self.eigenvalues],
            "residual": self.residual,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FixedPointOrbit":
        d = int(data["d"])
        mono = np.array(data["monodromy_row_major"], dtype=float).reshape(2 * d, 2 * d)
        eigs = np.array([complex(re, im) for re, im in data["eigenvalues"]])
        vals, vecs = np.linalg.eig(mono)
        return cls(
            z_star=PhaseState.from_z(np.array(data["z_star"]), t=data.get("t", 0.0)),
            monodromy=mono,
            eigenvalues=eigs,
            eigenvectors=vecs,
            label=data.get("label", ""),
            residual=float(data.get("residual", np.nan)),
            degenerate=bool(data.get("degenerate", False)),
        )


def find_fixed_point(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    guess: PhaseState,
    label: str = "",
    max_iter: int = 50,
    tol: float = RESIDUAL_TOL,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    max_step_norm: float = 2.0,
) -> FixedPointOrbit:
    """Newton iteration on F(z) = P(z) - z from a caller-supplied guess.

    The linear system (DP - I) dz = -F is solved by least squares; when
    DP - I is singular (whole lines of fixed points with the Coulomb term
    off, parabolic angular directions in d=3) the step stays in the
    non-degenerate subspace and the orbit is reported degenerate.
    """
    z = guess.z.copy()
    t0 = guess.t
    residual = np.inf
    DP = None
    for _ in range(max_iter):
        res = flow.stroboscopic_map(
            cfg, settings, PhaseState.from_z(z, t=t0),
            with_tangent=True, escape_radius=escape_radius,
        )
        if res.escaped:
            raise NewtonDivergenceError(
                "iterate escaped during Newton step", last_state=res.state, residual=residual
            )
        F = res.state.z - z
        DP = res.tangent
        residual = float(np.max(np.abs(F)))
        if residual < tol:
            break
        A = DP - np.eye(2 * cfg.d)
        step, *_ = np.linalg.lstsq(A, -F, rcond=1e-12)
        norm = np.linalg.norm(step)
        if norm > max_step_norm:
            step *= max_step_norm / norm
        z = z + step
    else:
        raise NewtonDivergenceError(
            f"no convergence in {max_iter} iterations (residual {residual:.3e})",
            last_state=PhaseState.from_z(z, t=t0), residual=residual,
        )
    svals = np.linalg.svd(DP - np.eye(2 * cfg.d), compute_uv=False)
    degenerate = bool(svals.min() < DEGENERACY_TOL * max(1.0, svals.max()))
    eigvals, eigvecs = np.linalg.eig(DP)
    return FixedPointOrbit(
        z_star=PhaseState.from_z(z, t=t0),
        monodromy=DP,
        eigenvalues=eigvals,
        eigenvectors=eigvecs,
        label=label,
        residual=residual,
        degenerate=degenerate,
    )


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EigenPair:
    values: tuple
    tag: str  # hyperbolic | elliptic | parabolic


@dataclass(frozen=True)
class Classification:
    pairs: tuple
    orbit_class: tuple  # e.g. ("hyperbolic", "elliptic")


def pair_eigenvalues(eigenvalues) -> list:
    """Group eigenvalues into reciprocal (lambda, 1/lambda) index pairs."""
    eigs = np.asarray(eigenvalues)
    order = np.argsort(-np.abs(eigs))
    remaining = list(order)
    pairs = []
    while remaining:
        i = remaining.pop(0)
        j_best = min(remaining, key=lambda j: abs(eigs[i] * eigs[j] - 1.0))
        remaining.remove(j_best)
        pairs.append((int(i), int(j_best)))
    return pairs


def classify(orbit: FixedPointOrbit, tol_parab: float = PARABOLIC_TOL) -> Classification:
    """Tag each reciprocal eigenvalue pair as hyperbolic, elliptic or parabolic."""
    eigs = orbit.eigenvalues
    pairs = []
    for i, j in pair_eigenvalues(eigs):
        lam = eigs[i]
        if abs(lam - 1.0) < tol_parab and abs(eigs[j] - 1.0) < tol_parab:
            tag = "parabolic"
        elif abs(lam.imag) < 1e-6 * max(1.0, abs(lam)) and abs(abs(lam) - 1.0) > tol_parab:
            tag = "hyperbolic"
        elif abs(abs(lam) - 1.0) < 1e-6:
            tag = "elliptic"
        else:
            tag = "loxodromic"
        pairs.append(EigenPair(values=(complex(eigs[i]), complex(eigs[j])), tag=tag))
    return Classification(pairs=tuple(pairs), orbit_class=tuple(p.tag for p in pairs))


# ---------------------------------------------------------------------------
# Shipped initial guesses
# ---------------------------------------------------------------------------

def load_guesses() -> dict:
    """Curated initial guesses for the known period-T orbits at default parameters."""
    with resources.files("drivenatom.data").joinpath("orbit_guesses.json").open() as fh:
        return json.load(fh)


def find_known_orbit(cfg: SystemConfig, settings: IntegratorSettings, label: str) -> FixedPointOrbit:
    """Locate one of the shipped orbits (e.g. 'O1', 'O2-1:7', 'O-offaxis') by label."""
    guesses = load_guesses()
    if label not in guesses:
        raise KeyError(f"unknown orbit label {label!r}; available: {sorted(guesses)}")
    rec = guesses[label]
    if rec["d"] > cfg.d:
        raise ConfigurationError(f"orbit {label!r} lives in d={rec['d']}, config has d={cfg.d}")
    guess = PhaseState.from_z(np.array(rec["z"], dtype=float))
    if rec["d"] < cfg.d:
        # lower-dimensional orbits persist in higher d: the planar subspace
        # is invariant, so the embedded guess converges directly
        guess = model.embed(guess, cfg.d)
    return find_fixed_point(cfg, settings, guess, label=label)


# ---------------------------------------------------------------------------
# 1D manifold growth
# ---------------------------------------------------------------------------

@dataclass
class ManifoldBranch1D:
    """Ordered polyline along one branch of a 1D stable/unstable manifold."""

    orientation: str  # stable | unstable
    sign: int
    points: np.ndarray      # (n, 2) in (x, p_x)
    arc_params: np.ndarray  # (n,) cumulative arclength
    label: str = ""


def _select_direction(orbit: FixedPointOrbit, orientation: str):
    eigs = orbit.eigenvalues
    real = np.abs(eigs.imag) < 1e-9
    mags = np.abs(eigs)
    if orientation == "unstable":
        cand = np.flatnonzero(real & (mags > 1.0 + 1e-9))
    else:
        cand = np.flatnonzero(real & (mags < 1.0 - 1e-9))
    if cand.size == 0:
        raise ConfigurationError(f"orbit {orbit.label!r} has no {orientation} direction")
    i = cand[np.argmax(np.abs(np.log(mags[cand])))]
    lam = float(eigs[i].real)
    v = orbit.eigenvectors[:, i].real
    v = v / np.linalg.norm(v)
    return lam, v


def grow_manifold_1d(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    orbit: FixedPointOrbit,
    orientation: str = "unstable",
    sign: int = 1,
    arclength_budget: float = 300.0,
    h: float = 1e-6,
    delta_max: float = 0.25,
    alpha_max: float = 0.3,
    n_seed: int = 24,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    max_stages: int = 40,
    max_refine_rounds: int = 12,
    max_points_per_stage: int = 1200,
) -> ManifoldBranch1D:
    """Grow one branch of the 1D manifold of a saddle fixed point (d=1 map).

    A fundamental segment [h, mu*h] along the monodromy eigenvector is
    iterated stage by stage (P for the unstable side, P^-1 for the stable
    side); points are inserted where consecutive images separate beyond
    delta_max or turn by more than alpha_max.  Escape beyond the escape
    radius terminates the branch cleanly.
    """
    if cfg.d != 1:
        raise ConfigurationError("grow_manifold_1d requires d=1")
    if orientation not in ("stable", "unstable"):
        raise ConfigurationError(f"orientation must be 'stable' or 'unstable', got {orientation!r}")
    if sign not in (-1, 1):
        raise ConfigurationError(f"sign must be +1 or -1, got {sign}")
    lam, v = _select_direction(orbit, orientation)
    mu = abs(lam) if orientation == "unstable" else 1.0 / abs(lam)
    direction = "forward" if orientation == "unstable" else "backward"
    if lam < 0:
        # orientation-reversing: one application of the map jumps branches,
        # so the fundamental expansion factor is lambda^2
        mu = mu * mu
        n_map = 2
    else:
        n_map = 1
    z_star = orbit.z_star.z

    def seed(svals):
        return z_star[None, :] + (sign * svals)[:, None] * v[None, :]

    def advance(Z, n_steps):
        out = Z
        for _ in range(n_steps):
            out, _, esc = flow.map_points(
                cfg, settings, out, n_periods=1, direction=direction,
                escape_radius=escape_radius, chunk_size=512,
            )
        return out

    s_vals = np.geomspace(h, mu * h, n_seed, endpoint=False)
    stage_cache = {0: seed(s_vals)}
    points = [z_star + sign * h * v]
    arcs = [0.0]
    total_arc = 0.0
    terminated = False

    for stage in range(max_stages):
        if stage not in stage_cache:
            stage_cache[stage] = advance(stage_cache[stage - 1], n_map)
        Z = stage_cache[stage]
        # adaptive insertion within this stage
        for _ in range(max_refine_rounds):
            gaps = np.linalg.norm(np.diff(Z, axis=0), axis=1)
            seg = np.diff(Z, axis=0)
            norms = np.linalg.norm(seg, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cosang = np.sum(seg[:-1] * seg[1:], axis=1) / (norms[:-1] * norms[1:])
            angles = np.arccos(np.clip(cosang, -1.0, 1.0))
            bad = gaps > delta_max
            bad[:-1] |= angles > alpha_max
            bad[1:] |= angles > alpha_max
            inside = np.linalg.norm(Z[:, :1], axis=1) < escape_radius
            bad &= inside[:-1] & inside[1:]
            # respect a refinement floor so near-tangencies cannot loop forever
            bad &= (np.diff(np.log(s_vals)) > 1e-10)
            if not bad.any():
                break
            # cap the stage size, spending the remaining room on the widest
            # gaps first: passages near the core would otherwise demand an
            # unbounded number of insertions
            room = max_points_per_stage - s_vals.size
            if room <= 0:
                break
            idx = np.flatnonzero(bad)
            if idx.size > room:
                idx = idx[np.argsort(gaps[idx])[::-1][:room]]
            new_s = np.sqrt(s_vals[idx] * s_vals[idx + 1])
            new_Z = advance(seed(new_s), n_map * stage)
            s_vals = np.concatenate([s_vals, new_s])
            order = np.argsort(s_vals)
            s_vals = s_vals[order]
            Z = np.concatenate([Z, new_Z], axis=0)[order]
            # refresh earlier stages lazily: only current stage matters now
            stage_cache = {stage: Z}
        stage_cache = {stage: Z}
        # append stage polyline, truncating at first escape
        escaped_mask = np.abs(Z[:, 0]) > escape_radius
        stop_at = int(np.argmax(escaped_mask)) if escaped_mask.any() else Z.shape[0]
        for row in Z[:stop_at]:
            d_arc = float(np.linalg.norm(row - points[-1]))
            total_arc += d_arc
            points.append(row.copy())
            arcs.append(total_arc)
            if total_arc >= arclength_budget:
                terminated = True
                break
        if terminated or escaped_mask.any():
            break
        # prepare next stage from the refined seed set
        stage_cache = {stage: Z}
        next_Z = advance(Z, n_map)
        stage_cache = {stage + 1: next_Z}

    return ManifoldBranch1D(
        orientation=orientation,
        sign=sign,
        points=np.asarray(points),
        arc_params=np.asarray(arcs),
        label=orbit.label,
    )
