#!/usr/bin/env python3
"""Regenerate the curated orbit guess file by brute-force grid search.

Scans grids of initial conditions for minima of the recurrence |P(z) - z|,
polishes each local minimum with the Newton solver, and prints the distinct
converged fixed points with their eigenvalues.  The shipped
src/drivenatom/data/orbit_guesses.json was assembled from this output by
matching eigenvalue signatures; rerun after any parameter change.

Takes roughly 10 minutes on one core.
"""

import argparse
import json

import numpy as np

from drivenatom import IntegratorSettings, PhaseState, SystemConfig
from drivenatom import flow, porbits


def recurrence_minima(cfg, Z0, shape, threshold):
    """Local minima of |P(z)-z| on a structured grid; sorted by residual."""
    scan_settings = IntegratorSettings(abs_tol=1e-9, rel_tol=1e-9)
    Z1, _, esc = flow.map_points(cfg, scan_settings, Z0, n_periods=1, chunk_size=4096)
    res = np.linalg.norm(Z1 - Z0, axis=1).reshape(shape)
    res[(esc >= 0).reshape(shape)] = np.inf
    minima = []
    for i in range(1, shape[0] - 1):
        for j in range(1, shape[1] - 1):
            window = res[i - 1 : i + 2, j - 1 : j + 2]
            if res[i, j] == window.min() and res[i, j] < threshold:
                minima.append((float(res[i, j]), i, j))
    minima.sort()
    return minima


def polish(cfg, seeds, max_candidates):
    settings = IntegratorSettings()
    found = {}
    for z0 in seeds[:max_candidates]:
        try:
            orbit = porbits.find_fixed_point(
                cfg, settings, PhaseState.from_z(z0), max_iter=30)
        except Exception:
            continue
        key = tuple(np.round(orbit.z_star.z, 4))
        if key in found:
            continue
        found[key] = orbit
        eigs = np.sort_complex(orbit.eigenvalues)
        print(f"  z* = {np.array2string(orbit.z_star.z, precision=9)}")
        print(f"     eigenvalues {np.round(eigs, 6)}")
    return found


def scan_1d():
    print("d=1 scan over (x0, px0)")
    cfg = SystemConfig(d=1)
    xs = np.linspace(-65, 65, 261)
    ps = np.linspace(-1.5, 1.5, 121)
    X, P = np.meshgrid(xs, ps, indexing="ij")
    Z0 = np.column_stack([X.ravel(), P.ravel()])
    minima = recurrence_minima(cfg, Z0, X.shape, threshold=3.0)
    seeds = [np.array([xs[i], ps[j]]) for _, i, j in minima]
    return polish(cfg, seeds, max_candidates=200)


def scan_2d():
    print("d=2 scan over (x0, y0), p = 0 (reversal-symmetric seeds)")
    cfg = SystemConfig(d=2)
    xs = np.linspace(-80, 80, 321)
    ys = np.linspace(0.25, 50, 200)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    Z0 = np.zeros((X.size, 4))
    Z0[:, 0] = X.ravel()
    Z0[:, 1] = Y.ravel()
    minima = recurrence_minima(cfg, Z0, X.shape, threshold=10.0)
    seeds = [np.array([xs[i], ys[j], 0.0, 0.0]) for _, i, j in minima]
    orbits = polish(cfg, seeds, max_candidates=150)
    # keep only genuinely off-axis orbits; planar ones are found by the 1D scan
    return {
        k: o for k, o in orbits.items()
        if abs(o.z_star.q[1]) > 1e-3 or abs(o.z_star.p[1]) > 1e-3
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", help="dump raw results as JSON")
    parser.add_argument("--skip-2d", action="store_true")
    args = parser.parse_args()

    results = {"d1": scan_1d()}
    if not args.skip_2d:
        results["d2"] = scan_2d()
    if args.out:
        payload = {
            group: [o.to_dict() for o in orbits.values()]
            for group, orbits in results.items()
        }
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=1)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
