"""Phantoms and end-to-end experiment definitions at configurable scale.

scenario_I   homogeneous 3D cube, planar sensor array in the top voxel
             layer, centered ball phantom
scenario_II  heterogeneous 2D medium (three materials), sensors along the
             A/B interface, vessel-tree phantom inside region B

Both scale down from the reference resolutions; material values are kept
exact while sensor counts and PML thickness scale proportionally.  The
measurement time defaults to 1.5 crossings of the domain at the slowest
sound speed, long enough that residual wave power is negligible.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fieldio
from .grid import Grid
from .medium import Medium, _polyline_distance, build_medium_scenario_II
from .operators import PatOperatorConfig, PatOperators
from .solver import SensorArray, TimeAxis, TimeSeriesData

DEFAULT_CFL = 0.3
DEFAULT_CROSSINGS = 1.5


@dataclass
class Scenario:
    grid: Grid
    medium: Medium
    sensors: SensorArray
    time: TimeAxis
    p0: np.ndarray
    noise_rel: float = 0.0
    label: str = "custom"

    def __post_init__(self):
        self.p0 = np.asarray(self.p0, dtype=np.float64)
        if self.p0.shape != self.grid.interior_dims:
            raise ValueError(
                f"p0 shape {self.p0.shape} != interior {self.grid.interior_dims}"
            )
        if not np.all(np.isfinite(self.p0)) or np.any(self.p0 < 0):
            raise ValueError("p0 must be finite and nonnegative")
        if self.noise_rel < 0:
            raise ValueError("noise_rel must be nonnegative")

    def make_operators(self, precision: str = "f64",
                       smoothing: bool = True) -> PatOperators:
        cfg = PatOperatorConfig(self.grid, self.medium, self.sensors,
                                self.time, precision=precision,
                                smoothing=smoothing)
        return PatOperators(cfg)


def default_time_axis(grid: Grid, medium: Medium, cfl: float = DEFAULT_CFL,
                      crossings: float = DEFAULT_CROSSINGS) -> TimeAxis:
    extent = max(n * h for n, h in zip(grid.interior_dims, grid.spacing))
    t_end = crossings * extent / float(medium.c0.min())
    return TimeAxis.from_cfl(grid, medium.c_ref, t_end, cfl=cfl)


def _cell_centers(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def scenario_I(n: int, pml: int = 8, cfl: float = DEFAULT_CFL,
               crossings: float = DEFAULT_CROSSINGS) -> Scenario:
    """Homogeneous 3D cube with the pressure measured in the top voxel layer.

    c = 1500 m/s and rho = 1000 kg/m^3 everywhere; the phantom is a centered
    ball of radius 0.15 domain units and unit amplitude.
    """
    if n < 16:
        raise ValueError("scenario I needs n >= 16")
    dims = tuple(n + 2 * pml for _ in range(3))
    grid = Grid(dims, (1.0 / n,) * 3, (pml,) * 3, pml_enabled=pml > 0)
    medium = Medium.homogeneous(grid, 1500.0, 1000.0)
    jj, kk = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    plane = np.stack([np.zeros(n * n, dtype=int), jj.ravel(), kk.ravel()], axis=1)
    sensors = SensorArray.from_interior_indices(grid, plane)
    x = _cell_centers(n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    r2 = (X - 0.5) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2
    p0 = (r2 <= 0.15**2).astype(np.float64)
    time = default_time_axis(grid, medium, cfl=cfl, crossings=crossings)
    return Scenario(grid, medium, sensors, time, p0, label="I")


# Vessel-tree phantom skeleton, as (height-above-floor, x) polylines with
# relative half-thickness at the reference 512-pixel resolution.
_TREE_SEGMENTS = [
    ([(0.08, 0.50), (0.20, 0.50)], 4.0),
    ([(0.20, 0.50), (0.33, 0.36)], 3.0),
    ([(0.20, 0.50), (0.30, 0.62)], 3.0),
    ([(0.33, 0.36), (0.40, 0.28)], 2.0),
    ([(0.33, 0.36), (0.38, 0.44)], 2.0),
    ([(0.30, 0.62), (0.38, 0.70)], 2.0),
    ([(0.30, 0.62), (0.36, 0.56)], 2.0),
]


def vessel_tree_phantom(ny: int, nx: int) -> np.ndarray:
    """Piecewise-constant branching tree, unit amplitude, inside region B."""
    h = 1.0 - _cell_centers(ny)
    x = _cell_centers(nx)
    H, X = np.meshgrid(h, x, indexing="ij")
    p0 = np.zeros((ny, nx))
    for pts, width in _TREE_SEGMENTS:
        t = max(1.2, width * nx / 512.0) / nx
        p0[_polyline_distance(H, X, pts) < t] = 1.0
    return p0


def scenario_II(n: int, pml: int | None = None, n_sensors: int | None = None,
                cfl: float = DEFAULT_CFL,
                crossings: float = DEFAULT_CROSSINGS) -> Scenario:
    """Heterogeneous 2D scenario: three materials, sensors on the interface.

    At the reference n = 512 this uses 24 PML pixels and 200 sensors; both
    scale proportionally for smaller n (PML floored at 8 points).
    """
    if n < 64:
        raise ValueError("scenario II needs n >= 64")
    if pml is None:
        pml = max(8, round(24 * n / 512))
    if n_sensors is None:
        n_sensors = max(1, round(200 * n / 512))
    dims = (n + 2 * pml, n + 2 * pml)
    grid = Grid(dims, (1.0 / n, 1.0 / n), (pml, pml), pml_enabled=pml > 0)
    medium, sensors = build_medium_scenario_II(grid, n_sensors=n_sensors)
    p0 = vessel_tree_phantom(n, n)
    time = default_time_axis(grid, medium, cfl=cfl, crossings=crossings)
    return Scenario(grid, medium, sensors, time, p0, label="II")


def homogeneous_2d(n: int, pml: int = 8, cfl: float = DEFAULT_CFL,
                   crossings: float = DEFAULT_CROSSINGS) -> Scenario:
    """2D analogue of scenario I: homogeneous medium, sensors spanning the
    top interior row, centered disc phantom.  Used by verification studies."""
    if n < 16:
        raise ValueError("homogeneous 2D scenario needs n >= 16")
    dims = (n + 2 * pml, n + 2 * pml)
    grid = Grid(dims, (1.0 / n, 1.0 / n), (pml, pml), pml_enabled=pml > 0)
    medium = Medium.homogeneous(grid, 1500.0, 1000.0)
    idx = np.stack([np.zeros(n, dtype=int), np.arange(n)], axis=1)
    sensors = SensorArray.from_interior_indices(grid, idx)
    x = _cell_centers(n)
    X, Y = np.meshgrid(x, x, indexing="ij")
    p0 = (((X - 0.5) ** 2 + (Y - 0.5) ** 2) <= 0.15**2).astype(np.float64)
    time = default_time_axis(grid, medium, cfl=cfl, crossings=crossings)
    return Scenario(grid, medium, sensors, time, p0, label="custom")


def simulate_data(scenario: Scenario, noise_rel: float | None = None,
                  seed: int = 0, ops: PatOperators | None = None,
                  precision: str = "f64") -> TimeSeriesData:
    """f = A p0 + noise, with i.i.d. Gaussian noise of standard deviation
    noise_rel * max|A p0|, drawn from a seeded generator."""
    if ops is None:
        ops = scenario.make_operators(precision=precision)
    if noise_rel is None:
        noise_rel = scenario.noise_rel
    f = ops.forward(scenario.p0)
    if noise_rel > 0:
        rng = np.random.default_rng(seed)
        sigma = noise_rel * float(np.abs(f.samples).max())
        noise = rng.normal(0.0, sigma, size=f.samples.shape)
        f = TimeSeriesData(
            (f.samples + noise).astype(f.samples.dtype), f.time
        )
    return f


def save_scenario(scenario: Scenario, directory) -> Path:
    """Export medium/phantom fields plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spacing = scenario.grid.spacing
    fieldio.write_field(directory / "c0.patf", scenario.medium.c0,
                        spacing=spacing, units="m/s")
    fieldio.write_field(directory / "rho0.patf", scenario.medium.rho0,
                        spacing=spacing, units="kg/m^3")
    fieldio.write_field(directory / "p0.patf", scenario.p0,
                        spacing=spacing, units="Pa")
    manifest = {
        "label": scenario.label,
        "dims": list(scenario.grid.dims),
        "spacing": list(spacing),
        "pml_size": list(scenario.grid.pml_size),
        "pml_enabled": scenario.grid.pml_enabled,
        "c_ref": scenario.medium.c_ref,
        "sensor_indices": scenario.sensors.indices.tolist(),
        "n_steps": scenario.time.n_steps,
        "dt": scenario.time.dt,
        "noise_rel": scenario.noise_rel,
    }
    fieldio.write_json(directory / "scenario.json", manifest)
    return directory


def load_scenario(directory) -> Scenario:
    directory = Path(directory)
    manifest = fieldio.read_json(directory / "scenario.json")
    grid = Grid(tuple(manifest["dims"]), tuple(manifest["spacing"]),
                tuple(manifest["pml_size"]), manifest["pml_enabled"])
    c0, _ = fieldio.read_field(directory / "c0.patf")
    rho0, _ = fieldio.read_field(directory / "rho0.patf")
    p0, _ = fieldio.read_field(directory / "p0.patf")
    medium = Medium(c0, rho0, manifest["c_ref"])
    sensors = SensorArray(grid, np.asarray(manifest["sensor_indices"]))
    time = TimeAxis(manifest["n_steps"], manifest["dt"])
    return Scenario(grid, medium, sensors, time, p0,
                    noise_rel=manifest.get("noise_rel", 0.0),
                    label=manifest.get("label", "custom"))
