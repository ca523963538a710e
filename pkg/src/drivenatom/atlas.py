"""Ionization-distance maps over grids of initial conditions.

Every grid cell is an initial condition at t = 0; the scan integrates it for
a fixed horizon (default 100 laser periods) and stores the log10 of the
final distance to the ionic core.  Cells that leave the escape radius are
extrapolated ballistically with the closed-form laser-driven free solution,
since past that radius the Coulomb force is negligible and the remaining
motion is trivial.

The binary grid format is a "DGRD" header (magic, version, length-prefixed
JSON spec) followed by the row-major float64 value array; a companion
.meta.json carries status counts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import flow
from .flow import DEFAULT_ESCAPE_RADIUS, IntegratorSettings
from .model import ConfigurationError, SystemConfig

MAGIC = b"DGRD"
FORMAT_VERSION = 1

#: floor for log10 distance values (avoids -inf on near-exact returns)
LOG_FLOOR = -2.0

STATUS_COMPLETED = 0
STATUS_ESCAPED = 1
STATUS_FAILED = 2

#: phase-space coordinate names per dimension count
_COORDS = {
    1: ("x", "px"),
    2: ("x", "y", "px", "py"),
    3: ("x", "y", "z", "px", "py", "pz"),
}


@dataclass(frozen=True)
class AxisSpec:
    """One scanned coordinate: name, closed range, sample count."""

    name: str
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigurationError(f"axis {self.name}: sample count must be >= 2, got {self.n}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ConfigurationError(f"axis {self.name}: range must be finite")

    def samples(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class GridSpec:
    """Scan protocol: two swept coordinates, the frozen rest, and the horizon."""

    axis1: AxisSpec
    axis2: AxisSpec
    fixed: dict = field(default_factory=dict)
    horizon_periods: float = 100.0
    escape_radius: float = DEFAULT_ESCAPE_RADIUS

    def validate(self, cfg: SystemConfig) -> None:
        coords = _COORDS[cfg.d]
        swept = {self.axis1.name, self.axis2.name}
        if len(swept) != 2:
            raise ConfigurationError("axis1 and axis2 must sweep different coordinates")
        for name in swept | set(self.fixed):
            if name not in coords:
                raise ConfigurationError(f"coordinate {name!r} not valid for d={cfg.d}")
        missing = set(coords) - swept - set(self.fixed)
        if missing:
            raise ConfigurationError(f"unassigned coordinates for d={cfg.d}: {sorted(missing)}")

    def initial_states(self, cfg: SystemConfig) -> np.ndarray:
        """All cell initial conditions, shape (n1*n2, 2d), row-major over (axis1, axis2)."""
        self.validate(cfg)
        coords = _COORDS[cfg.d]
        A, B = np.meshgrid(self.axis1.samples(), self.axis2.samples(), indexing="ij")
        Z = np.zeros((A.size, 2 * cfg.d))
        for j, name in enumerate(coords):
            if name == self.axis1.name:
                Z[:, j] = A.ravel()
            elif name == self.axis2.name:
                Z[:, j] = B.ravel()
            else:
                Z[:, j] = self.fixed.get(name, 0.0)
        return Z

    def to_dict(self) -> dict:
        return {
            "axis1": {"name": self.axis1.name, "lo": self.axis1.lo,
                      "hi": self.axis1.hi, "n": self.axis1.n},
            "axis2": {"name": self.axis2.name, "lo": self.axis2.lo,
                      "hi": self.axis2.hi, "n": self.axis2.n},
            "fixed": self.fixed,
            "horizon_periods": self.horizon_periods,
            "escape_radius": self.escape_radius,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        def ax(d):
            return AxisSpec(name=d["name"], lo=float(d["lo"]), hi=float(d["hi"]), n=int(d["n"]))
        return cls(
            axis1=ax(data["axis1"]), axis2=ax(data["axis2"]),
            fixed={k: float(v) for k, v in data.get("fixed", {}).items()},
            horizon_periods=float(data.get("horizon_periods", 100.0)),
            escape_radius=float(data.get("escape_radius", DEFAULT_ESCAPE_RADIUS)),
        )


@dataclass
class DistanceGrid:
    """Scan result: log10 final distances plus per-cell status codes."""

    spec: GridSpec
    values: np.ndarray  # (n1, n2) float64
    status: np.ndarray  # (n1, n2) uint8
    escape_period: np.ndarray | None = None  # (n1, n2) int, -1 where not escaped
    config: dict = field(default_factory=dict)

    def status_counts(self) -> dict:
        return {
            "completed": int(np.sum(self.status == STATUS_COMPLETED)),
            "escaped_early": int(np.sum(self.status == STATUS_ESCAPED)),
            "failed": int(np.sum(self.status == STATUS_FAILED)),
        }

    def save(self, path) -> None:
        path = Path(path)
        header = {
            "spec": self.spec.to_dict(),
            "shape": list(self.values.shape),
            "config": self.config,
        }
        blob = json.dumps(header).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        meta = {
            "status_counts": self.status_counts(),
            "status": self.status.astype(int).tolist(),
            "escape_period": (self.escape_period.astype(int).tolist()
                              if self.escape_period is not None else None),
        }
        with open(path.with_suffix(path.suffix + ".meta.json"), "w") as fh:
            json.dump(meta, fh)

    @classmethod
    def load(cls, path) -> "DistanceGrid":
        path = Path(path)
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != MAGIC:
                raise ConfigurationError(f"{path}: not a distance-grid file (magic {magic!r})")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != FORMAT_VERSION:
                raise ConfigurationError(f"{path}: unsupported grid format version {version}")
            (blen,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(blen).decode("utf-8"))
            shape = tuple(header["shape"])
            values = np.frombuffer(fh.read(8 * shape[0] * shape[1]), dtype="<f8").reshape(shape)
        spec = GridSpec.from_dict(header["spec"])
        status = np.zeros(shape, dtype=np.uint8)
        escape_period = None
        meta_path = path.with_suffix(path.suffix + ".meta.json")
        if meta_path.exists():
            with open(meta_path) as fh:
                meta = json.load(fh)
            status = np.array(meta["status"], dtype=np.uint8)
            if meta.get("escape_period") is not None:
                escape_period = np.array(meta["escape_period"], dtype=int)
        return cls(spec=spec, values=values.copy(), status=status,
                   escape_period=escape_period, config=header.get("config", {}))

    def export_csv(self, path) -> None:
        a = self.spec.axis1.samples()
        b = self.spec.axis2.samples()
        with open(path, "w") as fh:
            fh.write(f"{self.spec.axis1.name},{self.spec.axis2.name},log10_distance,status\n")
            for i in range(a.size):
                for j in range(b.size):
                    fh.write(f"{a[i]:.17g},{b[j]:.17g},{self.values[i, j]:.17g},"
                             f"{int(self.status[i, j])}\n")


def scan(
    cfg: SystemConfig,
    settings: IntegratorSettings,
    spec: GridSpec,
    chunk_size: int = 1024,
    progress=None,
) -> DistanceGrid:
    """Integrate every grid cell to the horizon and record log10 |q|.

    Escaped cells stop integrating at the first period boundary past the
    escape radius and are extrapolated ballistically to the horizon; the
    Coulomb tail neglected by the extrapolation is below 1/escape_radius^2
    per unit time.  Individual cell failures are recorded, never fatal.
    """
    spec.validate(cfg)
    d = cfg.d
    shape = (spec.axis1.n, spec.axis2.n)
    Z0 = spec.initial_states(cfg)
    n_periods = int(round(spec.horizon_periods))
    if abs(spec.horizon_periods - n_periods) > 1e-12:
        raise ConfigurationError(
            f"horizon must be a whole number of periods, got {spec.horizon_periods}")

    values = np.full(Z0.shape[0], np.nan)
    status = np.full(Z0.shape[0], STATUS_FAILED, dtype=np.uint8)
    escape_period = np.full(Z0.shape[0], -1, dtype=int)
    horizon_t = n_periods * cfg.T

    last = None
    for last in flow.iterate_batch(
        cfg, settings, Z0, n_periods, escape_radius=spec.escape_radius,
        chunk_size=chunk_size,
    ):
        if progress is not None:
            progress(last.period, n_periods)
    Z, esc = last.Z, last.escape_period

    done = esc < 0
    r_done = np.linalg.norm(Z[done, :d], axis=1)
    values[done] = np.maximum(np.log10(np.maximum(r_done, 1e-300)), LOG_FLOOR)
    status[done] = STATUS_COMPLETED

    escd = ~done
    if escd.any():
        t_esc = esc[escd] * cfg.T
        qf, _ = flow.drift_arrays(cfg, t_esc, Z[escd, :d], Z[escd, d:], horizon_t)
        r_esc = np.linalg.norm(qf, axis=1)
        values[escd] = np.maximum(np.log10(np.maximum(r_esc, 1e-300)), LOG_FLOOR)
        status[escd] = STATUS_ESCAPED
        escape_period[escd] = esc[escd]

    return DistanceGrid(
        spec=spec,
        values=values.reshape(shape),
        status=status.reshape(shape),
        escape_period=escape_period.reshape(shape),
        config={"e0": cfg.e0, "omega": cfg.omega, "a": cfg.a, "d": cfg.d,
                "coulomb_enabled": cfg.coulomb_enabled},
    )


# ---------------------------------------------------------------------------
# Overlays and grid analysis
# ---------------------------------------------------------------------------

def overlay_assets(grid: DistanceGrid, assets: list) -> dict:
    """Bundle a grid with same-plane geometry (polylines, points, markers).

    Assets are dicts with keys kind ('polyline' | 'points' | 'marker'),
    plane (pair of coordinate names), data (list of [u, v] pairs) and
    optional style hints.  Pure packaging; refuses plane mismatches.
    """
    plane = [grid.spec.axis1.name, grid.spec.axis2.name]
    for asset in assets:
        a_plane = list(asset.get("plane", plane))
        if a_plane != plane:
            raise ConfigurationError(
                f"asset plane {a_plane} does not match grid plane {plane}")
    return {
        "grid": {
            "spec": grid.spec.to_dict(),
            "values": grid.values.tolist(),
            "status_counts": grid.status_counts(),
        },
        "assets": assets,
    }


def gradient_magnitude(grid: DistanceGrid) -> np.ndarray:
    """Cell-wise magnitude of the log10-distance gradient (index units)."""
    gx, gy = np.gradient(grid.values)
    return np.hypot(gx, gy)


def top_quintile_mask(grid: DistanceGrid) -> np.ndarray:
    """Cells whose local gradient magnitude is in the top fifth of the map."""
    g = gradient_magnitude(grid)
    return g >= np.quantile(g, 0.8)


def locate_cells(grid: DistanceGrid, u: np.ndarray, v: np.ndarray):
    """Nearest cell indices of plane coordinates (u, v); -1 outside the grid."""
    a1, a2 = grid.spec.axis1, grid.spec.axis2
    i = np.rint((np.asarray(u) - a1.lo) / (a1.hi - a1.lo) * (a1.n - 1)).astype(int)
    j = np.rint((np.asarray(v) - a2.lo) / (a2.hi - a2.lo) * (a2.n - 1)).astype(int)
    i = np.where((i >= 0) & (i < a1.n), i, -1)
    j = np.where((j >= 0) & (j < a2.n), j, -1)
    return i, j
