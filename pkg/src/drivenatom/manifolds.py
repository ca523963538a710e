"""Stable and unstable manifolds of invariant curves and their slice cuts.

Near an invariant curve the manifold is approximated linearly by

    z(s, theta) = x(theta) + s * Psi(theta)

with Psi the stable (or unstable) tangent bundle.  The approximation is
certified on a fundamental annulus s in [h, h/mu], where mu is the
contraction factor of the map direction that approaches the curve (Lambda_s
forward for the stable side, 1/Lambda_u backward for the unstable side); h
is halved until the invariance defect on the annulus falls below a set
tolerance.  Globalization then pushes the annulus with the opposite map
direction, and intersections with the slice {y = 0, p_x = 0} are refined by
a Newton iteration in (s, theta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow
from .flow import DEFAULT_ESCAPE_RADIUS, IntegratorSettings
from .invcurves import (
    CurveStability,
    InvariantCurve,
    bundle_eval,
    fourier_basis,
    fourier_basis_deriv,
)
from .model import ConfigurationError, SystemConfig

INVARIANCE_TOL = 1e-7
SLICE_TOL = 1e-10
COARSE_TOL = 1e-2
H_MIN = 1e-10


class DomainError(RuntimeError):
    """No fundamental-domain width satisfies the invariance tolerance."""


@dataclass(frozen=True)
class ManifoldSide:
    """Geometry of one manifold side in the (s, theta) parametrization.

    mu < 1 is the s-contraction of the approach map, shift the matching
    theta advance; the approach map direction is 'forward' for the stable
    side and 'backward' for the unstable one, and globalization runs the
    other way.
    """

    name: str
    mu: float
    shift: float
    approach: str
    globalize: str

    @classmethod
    def make(cls, side: str, stability: CurveStability, nu: float) -> "ManifoldSide":
        if side == "stable":
            return cls("stable", stability.lambda_s, nu, "forward", "backward")
        if side == "unstable":
            return cls("unstable", 1.0 / stability.lambda_u, -nu, "backward", "forward")
        raise ConfigurationError(f"side must be 'stable' or 'unstable', got {side!r}")


def manifold_bundle(stability: CurveStability, side: str) -> np.ndarray:
    return stability.bundle_s if side == "stable" else stability.bundle_u


def linear_patch(
    curve: InvariantCurve,
    bundle: np.ndarray,
    s: np.ndarray,
    theta: np.ndarray,
) -> np.ndarray:
    """Points x(theta) + s * Psi(theta); s and theta broadcast elementwise."""
    s = np.asarray(s, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return curve.eval(theta) + s[..., None] * bundle_eval(curve, bundle, theta)


@dataclass
class FundamentalDomain:
    """Certified annulus [h, h/mu] of the linear manifold approximation."""

    side: ManifoldSide
    h: float
    defect: float

    @property
    def s_max(self) -> float:
        return self.h / self.side.mu


def invariance_defect(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    stability: CurveStability,
    side: ManifoldSide,
    h: float,
    n_s: int = 6,
    n_theta: int = 32,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
) -> float:
    """Max deviation between the mapped linear patch and its contracted image.

    Tests A(z(s, theta)) against z(mu*s, theta + shift) on an (s, theta) grid
    over the annulus, where A is the approach map.  The s grid includes both
    annulus edges, so a passing defect also certifies that consecutive
    images of the annulus tile the manifold without gaps.
    """
    bundle = manifold_bundle(stability, side.name)
    s = np.geomspace(h, h / side.mu, n_s)
    theta = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    S, TH = np.meshgrid(s, theta, indexing="ij")
    Z0 = linear_patch(curve, bundle, S.ravel(), TH.ravel())
    Z1, _, esc = flow.map_points(
        cfg, settings, Z0, n_periods=1, direction=side.approach,
        escape_radius=escape_radius, chunk_size=256,
    )
    if (esc >= 0).any():
        return np.inf
    target = linear_patch(curve, bundle, side.mu * S.ravel(), TH.ravel() + side.shift)
    return float(np.max(np.linalg.norm(Z1 - target, axis=1)))


def find_fundamental_domain(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    stability: CurveStability,
    side: str,
    epsilon: float = INVARIANCE_TOL,
    h0: float = 1e-3,
    n_s: int = 6,
    n_theta: int = 32,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
) -> FundamentalDomain:
    """Halve h from h0 until the linear patch passes the invariance test."""
    geom = ManifoldSide.make(side, stability, curve.nu)
    h = h0
    while h >= H_MIN:
        defect = invariance_defect(
            cfg, settings, curve, stability, geom, h,
            n_s=n_s, n_theta=n_theta, escape_radius=escape_radius,
        )
        if defect < epsilon:
            return FundamentalDomain(side=geom, h=h, defect=defect)
        h *= 0.5
    raise DomainError(
        f"no {side} fundamental domain above h={H_MIN} meets tolerance {epsilon}"
    )


# ---------------------------------------------------------------------------
# Globalization
# ---------------------------------------------------------------------------

def seed_grid(
    curve: InvariantCurve,
    stability: CurveStability,
    domain: FundamentalDomain,
    n_s: int = 8,
    n_theta: int = 64,
):
    """Seed points covering the fundamental annulus; returns (S, TH, Z0)."""
    bundle = manifold_bundle(stability, domain.side.name)
    s = np.geomspace(domain.h, domain.s_max, n_s, endpoint=False)
    theta = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    S, TH = np.meshgrid(s, theta, indexing="ij")
    S, TH = S.ravel(), TH.ravel()
    return S, TH, linear_patch(curve, bundle, S, TH)


def globalize(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    stability: CurveStability,
    domain: FundamentalDomain,
    n_map: int = 100,
    n_s: int = 8,
    n_theta: int = 64,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    chunk_size: int = 512,
):
    """Yield (m, S, TH, Z) clouds of the manifold under m applications of the
    globalizing map; escaped rows are dropped from later clouds."""
    S, TH, Z0 = seed_grid(curve, stability, domain, n_s=n_s, n_theta=n_theta)
    yield 0, S, TH, Z0
    for batch in flow.iterate_batch(
        cfg, settings, Z0, n_map, direction=domain.side.globalize,
        escape_radius=escape_radius, chunk_size=chunk_size,
    ):
        live = batch.active
        yield batch.period, S[live], TH[live], batch.Z[live]
        if not live.any():
            return


# ---------------------------------------------------------------------------
# Slice intersections
# ---------------------------------------------------------------------------

@dataclass
class SliceIntersection:
    """One transverse cut of the manifold with the plane {y = 0, p_x = 0}."""

    side: str
    sigma: int
    m: int
    s: float
    theta: float
    z: np.ndarray  # (4,) state (x, y, p_x, p_y) at the intersection
    residual: np.ndarray  # (2,) leftover (y, p_x)

    def row(self) -> list:
        return [self.sigma, self.m, self.s, self.theta,
                *self.z.tolist(), *self.residual.tolist()]


CSV_HEADER = ["sigma", "m", "s_star", "theta_star",
              "x", "y", "px", "py", "res1", "res2"]

_SLICE_IDX = (1, 2)  # components (y, p_x) of the d=2 state vector


def _patch_and_tangents(curve, bundle, S, TH):
    """Patch points plus the tangent columns (dz/ds, dz/dtheta)."""
    basis = fourier_basis(TH, curve.M)
    dbasis = fourier_basis_deriv(TH, curve.M)
    x = basis @ curve.coeffs
    dx = dbasis @ curve.coeffs
    psi = basis @ bundle
    dpsi = dbasis @ bundle
    Z = x + S[:, None] * psi
    T = np.stack([psi, dx + S[:, None] * dpsi], axis=2)  # (n, 2d, 2)
    return Z, T


def intersect_slice(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    curve: InvariantCurve,
    stability: CurveStability,
    domain: FundamentalDomain,
    n_map: int = 100,
    n_s: int = 8,
    n_theta: int = 64,
    coarse_tol: float = COARSE_TOL,
    tol: float = SLICE_TOL,
    max_newton: int = 15,
    escape_radius: float = DEFAULT_ESCAPE_RADIUS,
    chunk_size: int = 512,
) -> list:
    """All slice intersections of one manifold side, Newton-refined in (s, theta).

    Coarse candidates come from the globalized clouds (both slice coordinates
    below coarse_tol); each candidate is then polished by Newton on the
    residual (y, p_x) of the m-fold map of the linear patch, with the
    (s, theta) tangents carried through the integration.  Candidates whose
    refined s leaves the fundamental annulus, or that fail to reach the
    residual tolerance, are discarded; survivors are deduplicated.
    """
    if cfg.d != 2:
        raise ConfigurationError(f"slice intersections require d=2, got d={cfg.d}")
    bundle = manifold_bundle(stability, domain.side.name)
    candidates = []
    for m, S, TH, R in _coarse_residuals(
        cfg, settings, curve, stability, domain, n_map=n_map,
        n_s=n_s, n_theta=n_theta, escape_radius=escape_radius, chunk_size=chunk_size,
    ):
        # keep only grid-local minima of the coarse residual: adjacent seeds
        # lie in the same Newton basin, and near the curve the entire cloud
        # can sit below coarse_tol (the curve itself skims the slice plane)
        for i, j in zip(*np.nonzero(_local_minima(R) & (R < coarse_tol))):
            candidates.append((m, float(S[i, j]), float(TH[i, j])))

    results = []
    by_m: dict[int, list] = {}
    for m, s, th in candidates:
        by_m.setdefault(m, []).append((s, th))
    for m, group in sorted(by_m.items()):
        results.extend(
            _refine_group(
                cfg, settings, curve, bundle, domain, m, group,
                tol=tol, max_newton=max_newton,
                escape_radius=escape_radius, chunk_size=chunk_size,
            )
        )
    return _dedup(results)


def _coarse_residuals(
    cfg, settings, curve, stability, domain,
    n_map, n_s, n_theta, escape_radius, chunk_size,
):
    """Yield (m, S, TH, R) with the slice residual max(|y|, |p_x|) on the
    full (n_s, n_theta) seed grid; escaped rows carry an infinite residual."""
    S, TH, Z0 = seed_grid(curve, stability, domain, n_s=n_s, n_theta=n_theta)
    S = S.reshape(n_s, n_theta)
    TH = TH.reshape(n_s, n_theta)
    for batch in flow.iterate_batch(
        cfg, settings, Z0, n_map, direction=domain.side.globalize,
        escape_radius=escape_radius, chunk_size=chunk_size,
    ):
        R = np.maximum(np.abs(batch.Z[:, _SLICE_IDX[0]]),
                       np.abs(batch.Z[:, _SLICE_IDX[1]]))
        R[~batch.active] = np.inf
        yield batch.period, S, TH, R.reshape(n_s, n_theta)
        if not batch.active.any():
            return


def _local_minima(R: np.ndarray) -> np.ndarray:
    """Cells not exceeded by any of their 8 neighbors (theta axis wraps)."""
    n_s, _ = R.shape
    padded = np.full((n_s + 2, R.shape[1]), np.inf)
    padded[1:-1] = R
    best = np.full_like(R, np.inf)
    for ds in (-1, 0, 1):
        rows = padded[1 + ds: 1 + ds + n_s]
        for dt in (-1, 0, 1):
            if ds == 0 and dt == 0:
                continue
            best = np.minimum(best, np.roll(rows, dt, axis=1))
    return R <= best


def _refine_group(
    cfg, settings, curve, bundle, domain, m, group,
    tol, max_newton, escape_radius, chunk_size,
):
    S = np.array([g[0] for g in group])
    TH = np.array([g[1] for g in group])
    alive = np.ones(S.size, dtype=bool)
    out = [None] * S.size
    i0, i1 = _SLICE_IDX

    for _ in range(max_newton):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        Z0, T0 = _patch_and_tangents(curve, bundle, S[idx], TH[idx])
        if m == 0:
            Z, J, esc = Z0, T0, np.full(idx.size, -1)
        else:
            Z, J, esc = flow.map_points(
                cfg, settings, Z0, n_periods=m, direction=domain.side.globalize,
                J0=T0, escape_radius=escape_radius, chunk_size=chunk_size,
            )
        res = Z[:, [i0, i1]]
        jac = J[:, [i0, i1], :]  # (n, 2, 2)
        for row, i in enumerate(idx):
            if esc[row] >= 0:
                alive[i] = False
                continue
            r = res[row]
            if np.max(np.abs(r)) < tol:
                out[i] = SliceIntersection(
                    side=domain.side.name, sigma=curve.sigma, m=m,
                    s=float(S[i]), theta=float(TH[i] % (2 * np.pi)),
                    z=Z[row].copy(), residual=r.copy(),
                )
                alive[i] = False
                continue
            try:
                step = np.linalg.solve(jac[row], -r)
            except np.linalg.LinAlgError:
                alive[i] = False
                continue
            S[i] += step[0]
            TH[i] += step[1]
            if not (0.5 * domain.h <= S[i] <= 2.0 * domain.s_max) or not np.isfinite(S[i]):
                alive[i] = False

    kept = []
    for r in out:
        if r is None:
            continue
        if domain.h <= r.s <= domain.s_max:
            kept.append(r)
    return kept


def _dedup(results, tol: float = 1e-6) -> list:
    results = sorted(results, key=lambda r: (r.side, r.m, r.theta, r.s))
    kept = []
    for r in results:
        dup = any(
            k.m == r.m
            and abs(k.s - r.s) < tol
            and abs((k.theta - r.theta + np.pi) % (2 * np.pi) - np.pi) < tol
            for k in kept
        )
        if not dup:
            kept.append(r)
    return kept
