"""Heterogeneous acoustic media and perfectly-matched-layer absorption.

The PML is realised as per-axis multiplicative damping profiles applied twice
per update (split-step form), once on the regular grid and once on the
half-cell staggered grid.  Profile shape is a power law in normalized layer
depth; the quartic default follows common k-space solver practice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Grid
from .solver import SensorArray


@dataclass(frozen=True)
class Medium:
    """Sound speed c0 [m/s], ambient density rho0 [kg/m^3] on the full grid,
    plus the homogeneous reference speed used by the k-space correction."""

    c0: np.ndarray
    rho0: np.ndarray
    c_ref: float

    def __post_init__(self):
        c0 = np.asarray(self.c0, dtype=np.float64)
        rho0 = np.asarray(self.rho0, dtype=np.float64)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "rho0", rho0)
        if c0.shape != rho0.shape:
            raise ValueError("c0 and rho0 must share a shape")
        for name, arr in (("c0", c0), ("rho0", rho0)):
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValueError(f"{name} must be strictly positive and finite")
        if self.c_ref <= 0:
            raise ValueError("c_ref must be positive")
        if self.c_ref < float(c0.max()) * (1.0 - 1e-12):
            warnings.warn(
                "c_ref below max(c0); the time stepping may be unstable",
                stacklevel=2,
            )

    @classmethod
    def homogeneous(cls, grid: Grid, c0: float, rho0: float,
                    c_ref: float | None = None) -> "Medium":
        c = np.full(grid.dims, float(c0))
        r = np.full(grid.dims, float(rho0))
        return cls(c, r, float(c_ref if c_ref is not None else c0))

    @classmethod
    def from_interior(cls, grid: Grid, c0: np.ndarray, rho0: np.ndarray,
                      c_ref: float | None = None) -> "Medium":
        """Build from interior-sized fields, edge-replicating into the PML."""
        pad = [(p, p) for p in grid.pml_size] if grid.pml_enabled else None
        c0 = np.asarray(c0, dtype=np.float64)
        rho0 = np.asarray(rho0, dtype=np.float64)
        if c0.shape != grid.interior_dims:
            raise ValueError(
                f"interior field shape {c0.shape} != {grid.interior_dims}"
            )
        if pad is not None:
            c0 = np.pad(c0, pad, mode="edge")
            rho0 = np.pad(rho0, pad, mode="edge")
        if c_ref is None:
            c_ref = float(c0.max())
        return cls(c0, rho0, float(c_ref))


def build_pml(grid: Grid, axis: int, staggered: bool, alpha_max: float,
              exponent: float, c_ref: float, dt: float) -> np.ndarray:
    """1D absorption profile Lambda along one axis.

    Lambda(s) = exp(-alpha_max * s**exponent * c_ref * dt / (2 dx)) with s the
    normalized depth into the layer (s = 1 at the outermost regular point,
    s = 0 strictly outside).  The staggered variant evaluates depth at
    half-cell offset positions.
    """
    if alpha_max < 0:
        raise ValueError("alpha_max must be nonnegative")
    n = grid.dims[axis]
    size = grid.pml_size[axis] if grid.pml_enabled else 0
    if size == 0:
        return np.ones(n)
    dx = grid.spacing[axis]
    pos = np.arange(n, dtype=np.float64)
    if staggered:
        pos = pos + 0.5
    depth_left = (size - pos) / size
    depth_right = (pos - (n - 1 - size)) / size
    s = np.maximum(0.0, np.maximum(depth_left, depth_right))
    lam = np.exp(-alpha_max * s**exponent * c_ref * dt / (2.0 * dx))
    lam[s == 0.0] = 1.0
    return lam


@dataclass(frozen=True)
class PmlOperators:
    """Per-axis damping profiles on the regular and staggered grids."""

    lam: list = field(default_factory=list)
    lam_staggered: list = field(default_factory=list)
    alpha_max: float = 2.0
    exponent: float = 4.0

    @classmethod
    def build(cls, grid: Grid, c_ref: float, dt: float,
              alpha_max: float = 2.0, exponent: float = 4.0) -> "PmlOperators":
        lam = [build_pml(grid, ax, False, alpha_max, exponent, c_ref, dt)
               for ax in range(grid.ndim)]
        lam_s = [build_pml(grid, ax, True, alpha_max, exponent, c_ref, dt)
                 for ax in range(grid.ndim)]
        return cls(lam, lam_s, alpha_max, exponent)

    def bcast(self, axis: int, ndim: int, staggered: bool = False) -> np.ndarray:
        arr = self.lam_staggered[axis] if staggered else self.lam[axis]
        shape = [1] * ndim
        shape[axis] = arr.shape[0]
        return arr.reshape(shape)


# Scenario II material constants: three tissue-like regions.
SCENARIO_II_MATERIALS = {
    "A": {"c": 1500.0, "rho": 1000.0},  # top region
    "B": {"c": 1400.0, "rho": 1200.0},  # parabolic lower region
    "C": {"c": 1560.0, "rho": 800.0},   # thin vessel inside B
}

# Interface height above the domain floor: h(x) = a + b*(x - 1/2)^2.
_INTERFACE_A = 0.62
_INTERFACE_B = -0.80


def interface_height(x: np.ndarray) -> np.ndarray:
    """Height (from the bottom, domain units) of the A/B interface parabola."""
    return _INTERFACE_A + _INTERFACE_B * (np.asarray(x) - 0.5) ** 2


def _polyline_distance(py: np.ndarray, px: np.ndarray,
                       pts: list[tuple[float, float]]) -> np.ndarray:
    """Distance from each (py, px) point to a polyline given as (h, x) pairs."""
    d = np.full(py.shape, np.inf)
    for (h0, x0), (h1, x1) in zip(pts[:-1], pts[1:]):
        vy, vx = h1 - h0, x1 - x0
        L2 = vy * vy + vx * vx
        t = ((py - h0) * vy + (px - x0) * vx) / L2
        t = np.clip(t, 0.0, 1.0)
        d = np.minimum(d, np.hypot(py - (h0 + t * vy), px - (x0 + t * vx)))
    return d


def _vessel_c_polyline() -> list[tuple[float, float]]:
    # Gentle arc spanning region B, well below the interface.
    xs = np.linspace(0.15, 0.85, 9)
    hs = 0.24 + 0.07 * np.sin(2.0 * np.pi * (xs - 0.15) / 0.9)
    return list(zip(hs, xs))


def build_medium_scenario_II(grid: Grid, n_sensors: int = 200) -> tuple[Medium, SensorArray]:
    """Three-material breast-like 2D medium with sensors on the A/B interface.

    Material A fills the top, B the parabola-bounded lower part, and C is a
    thin vessel-shaped inclusion inside B.  Sensors are spread evenly along
    the interface curve.
    """
    if grid.ndim != 2:
        raise ValueError("scenario II medium is 2D only")
    ny, nx = grid.interior_dims
    # Cell-centered interior coordinates; axis 0 runs top to bottom.
    h = 1.0 - (np.arange(ny) + 0.5) / ny         # height above the floor
    x = (np.arange(nx) + 0.5) / nx
    H, X = np.meshgrid(h, x, indexing="ij")
    h_if = interface_height(X)

    c = np.full((ny, nx), SCENARIO_II_MATERIALS["A"]["c"])
    rho = np.full((ny, nx), SCENARIO_II_MATERIALS["A"]["rho"])
    in_b = H <= h_if
    c[in_b] = SCENARIO_II_MATERIALS["B"]["c"]
    rho[in_b] = SCENARIO_II_MATERIALS["B"]["rho"]

    thickness = max(1.5, 3.0 * nx / 512.0) / nx
    in_c = (_polyline_distance(H, X, _vessel_c_polyline()) < thickness) & in_b
    c[in_c] = SCENARIO_II_MATERIALS["C"]["c"]
    rho[in_c] = SCENARIO_II_MATERIALS["C"]["rho"]

    medium = Medium.from_interior(grid, c, rho)

    if not 1 <= n_sensors <= nx:
        raise ValueError(f"n_sensors must be in [1, {nx}]")
    cols = np.floor((np.arange(n_sensors) + 0.5) * nx / n_sensors).astype(int)
    sensor_h = interface_height((cols + 0.5) / nx)
    rows = np.clip(np.round(ny * (1.0 - sensor_h) - 0.5).astype(int), 0, ny - 1)
    sensors = SensorArray.from_interior_indices(grid, np.stack([rows, cols], axis=1))
    return medium, sensors
