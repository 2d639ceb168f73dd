"""Staggered leapfrog k-space time stepping for the first-order acoustic system.

One step advances velocity, the per-axis split densities and pressure:

    u_ax   <- Ls*(Ls*u_ax - dt/rho0 * D+_ax p)
    rho_ax <- L*(L*rho_ax - dt*rho0 * D-_ax u_ax) + dt*s
    p      <- c0^2 * sum_ax rho_ax

where D+/D- are the staggered spectral derivatives and L/Ls the PML damping
profiles.  The density is split per axis purely so the PML can absorb
anisotropically; only the sum is physical.

A Dirichlet variant overwrites the split densities at sensor points so the
resulting pressure matches prescribed values exactly (used for time reversal).

Iteration protocol: all fields start at zero, steps run n = -1 .. N_t-1, and
when recording, sample n (= W p^n) is captured after the step that produced
p^n, so t_0 = 0 and t_{N_t} = T.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import Grid, KSpaceOperators, spectral_derivative, spectral_derivative_all


class NumericalInstabilityError(RuntimeError):
    """Raised when NaN/Inf shows up in the pressure field."""

    def __init__(self, step_index: int):
        super().__init__(f"non-finite pressure detected at step {step_index}")
        self.step_index = step_index


@dataclass(frozen=True)
class TimeAxis:
    """Discrete time axis: N_t steps of size dt, samples at t_n = n*dt."""

    n_steps: int
    dt: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def t_end(self) -> float:
        return self.n_steps * self.dt

    @property
    def n_samples(self) -> int:
        return self.n_steps + 1

    @classmethod
    def from_cfl(cls, grid: Grid, c_ref: float, t_end: float,
                 cfl: float = 0.3) -> "TimeAxis":
        dt = cfl * min(grid.spacing) / c_ref
        n_steps = max(1, int(np.ceil(t_end / dt)))
        return cls(n_steps, dt)


class SensorArray:
    """Point sensors: selection W (grid -> sensor values) and its adjoint W*."""

    def __init__(self, grid: Grid, indices: np.ndarray):
        indices = np.atleast_2d(np.asarray(indices, dtype=np.intp))
        if indices.shape[1] != grid.ndim:
            raise ValueError(f"indices must be (n, {grid.ndim})")
        lo = [p if grid.pml_enabled else 0 for p in grid.pml_size]
        hi = [n - p if grid.pml_enabled else n
              for n, p in zip(grid.dims, grid.pml_size)]
        for ax in range(grid.ndim):
            col = indices[:, ax]
            if np.any(col < lo[ax]) or np.any(col >= hi[ax]):
                raise ValueError("sensor indices must lie in the non-PML interior")
        flat = np.ravel_multi_index(indices.T, grid.dims)
        if np.unique(flat).size != flat.size:
            raise ValueError("sensor indices must be unique")
        self.grid = grid
        self.indices = indices
        self.ix = tuple(indices[:, ax] for ax in range(grid.ndim))

    @classmethod
    def from_interior_indices(cls, grid: Grid, interior_indices: np.ndarray) -> "SensorArray":
        interior_indices = np.atleast_2d(np.asarray(interior_indices, dtype=np.intp))
        offset = np.array([p if grid.pml_enabled else 0 for p in grid.pml_size])
        return cls(grid, interior_indices + offset)

    @property
    def n_sensors(self) -> int:
        return self.indices.shape[0]

    def select(self, field: np.ndarray) -> np.ndarray:
        """W: sample the field at the sensor points."""
        return field[self.ix].copy()

    def scatter(self, values: np.ndarray, dtype=None) -> np.ndarray:
        """W*: place values at sensor points, zero elsewhere."""
        values = np.asarray(values)
        if values.shape != (self.n_sensors,):
            raise ValueError(f"expected {self.n_sensors} sensor values")
        out = np.zeros(self.grid.dims, dtype=dtype or values.dtype)
        out[self.ix] = values
        return out


@dataclass
class TimeSeriesData:
    """Recorded pressure at the sensors, shape (N_t + 1, N_sensors)."""

    samples: np.ndarray
    time: TimeAxis

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples))
        if self.samples.shape[0] != self.time.n_samples:
            raise ValueError(
                f"expected {self.time.n_samples} time samples, "
                f"got {self.samples.shape[0]}"
            )

    @property
    def n_sensors(self) -> int:
        return self.samples.shape[1]


@dataclass
class SourceSchedule:
    """Per-step source terms s^{n+1/2}, indexed by slot j = n + 1.

    mass mode: ``values(j)`` returns a full-grid field, or per-sensor values
    when ``support`` is set, or None for a quiet slot.  The field is added as
    dt*s to each of the d split densities.

    dirichlet mode: ``values(j)`` returns the pressure imposed at the sensor
    points by the step producing p^j.
    """

    mode: str
    n_slots: int
    values: Callable[[int], np.ndarray | None]
    support: "SensorArray | None" = None

    def __post_init__(self):
        if self.mode not in ("mass", "dirichlet"):
            raise ValueError(f"unknown source mode {self.mode!r}")

    @classmethod
    def quiet(cls, n_slots: int) -> "SourceSchedule":
        return cls("mass", n_slots, lambda j: None)

    @classmethod
    def mass_two_slot(cls, field: np.ndarray, n_slots: int) -> "SourceSchedule":
        """Initial-value injection: the same field at slots 0 and 1."""
        return cls("mass", n_slots, lambda j: field if j in (0, 1) else None)

    @classmethod
    def mass_at_sensors(cls, sensor_values: np.ndarray,
                        sensors: SensorArray) -> "SourceSchedule":
        seq = np.asarray(sensor_values)
        return cls("mass", seq.shape[0], lambda j: seq[j], support=sensors)

    @classmethod
    def dirichlet_sequence(cls, sensor_values: np.ndarray) -> "SourceSchedule":
        seq = np.asarray(sensor_values)
        return cls("dirichlet", seq.shape[0], lambda j: seq[j])


@dataclass
class AcousticState:
    """Velocities u_ax^{n-1/2}, split densities rho_ax^n and pressure p^n."""

    u: list
    rho: list
    p: np.ndarray
    step_index: int = -1

    @classmethod
    def zeros(cls, grid: Grid, dtype=np.float64) -> "AcousticState":
        z = lambda: np.zeros(grid.dims, dtype=dtype)
        d = grid.ndim
        return cls([z() for _ in range(d)], [z() for _ in range(d)], z(), -1)


@dataclass
class RunResult:
    recorded: TimeSeriesData | None
    final_pressure: np.ndarray | None


_NAN_CHECK_INTERVAL = 50


class WaveSolver:
    """Bundles grid/medium/PML/k-space data for repeated time stepping."""

    def __init__(self, grid: Grid, medium, pml, ks: KSpaceOperators,
                 time: TimeAxis):
        self.grid = grid
        self.medium = medium
        self.pml = pml
        self.ks = ks
        self.time = time
        self.dtype = ks.dtype
        d = grid.ndim
        self._rho0 = medium.rho0.astype(self.dtype)
        self._inv_rho0 = (1.0 / medium.rho0).astype(self.dtype)
        self._c0sq = (medium.c0**2).astype(self.dtype)
        self._lam = [pml.bcast(ax, d).astype(self.dtype) for ax in range(d)]
        self._lam_s = [pml.bcast(ax, d, staggered=True).astype(self.dtype)
                       for ax in range(d)]

    def new_state(self) -> AcousticState:
        return AcousticState.zeros(self.grid, dtype=self.dtype)

    def step(self, state: AcousticState, mass_source: np.ndarray | None = None,
             mass_sensors: SensorArray | None = None,
             dirichlet_values: np.ndarray | None = None,
             sensors: SensorArray | None = None) -> AcousticState:
        """Advance one leapfrog step in place and return the state.

        ``mass_source`` is either a full-grid field, or per-sensor values when
        ``mass_sensors`` is given.  ``dirichlet_values`` switches the density
        update to the sensor-constrained form (requires ``sensors``).
        """
        dt = self.time.dt
        d = self.grid.ndim
        grad_p = spectral_derivative_all(state.p, "+", self.ks)
        for ax in range(d):
            u = state.u[ax]
            u *= self._lam_s[ax]
            u -= (dt * self._inv_rho0) * grad_p[ax]
            u *= self._lam_s[ax]
        for ax in range(d):
            div = spectral_derivative(state.u[ax], ax, "-", self.ks)
            rho = state.rho[ax]
            rho *= self._lam[ax]
            rho -= (dt * self._rho0) * div
            rho *= self._lam[ax]
        if mass_source is not None:
            if mass_sensors is not None:
                vals = (dt * np.asarray(mass_source)).astype(self.dtype)
                for ax in range(d):
                    state.rho[ax][mass_sensors.ix] += vals
            else:
                src = dt * np.asarray(mass_source, dtype=self.dtype)
                for ax in range(d):
                    state.rho[ax] += src
        if dirichlet_values is not None:
            if sensors is None:
                raise ValueError("dirichlet update requires a sensor array")
            vals = np.asarray(dirichlet_values, dtype=self.dtype)
            c0sq_at = self._c0sq[sensors.ix]
            for ax in range(d):
                state.rho[ax][sensors.ix] = vals / (d * c0sq_at)
        p = self._c0sq * state.rho[0]
        for ax in range(1, d):
            p += self._c0sq * state.rho[ax]
        state.p = p
        state.step_index += 1
        return state

    def run(self, schedule: SourceSchedule, sensors: SensorArray | None = None,
            record: bool = True, return_final: bool = False) -> RunResult:
        """Run the full iteration n = -1 .. N_t-1 from a zero state."""
        nt = self.time.n_steps
        if schedule.n_slots != nt + 1:
            raise ValueError(
                f"schedule has {schedule.n_slots} slots, expected {nt + 1}"
            )
        if (record or schedule.mode == "dirichlet") and sensors is None:
            raise ValueError("sensor array required")
        state = self.new_state()
        g = None
        if record:
            g = np.zeros((nt + 1, sensors.n_sensors), dtype=self.dtype)
        dirichlet = schedule.mode == "dirichlet"
        for n in range(-1, nt):
            slot = n + 1
            v = schedule.values(slot)
            if dirichlet:
                self.step(state, dirichlet_values=v, sensors=sensors)
            else:
                self.step(state, mass_source=v, mass_sensors=schedule.support)
            if record:
                g[slot] = sensors.select(state.p)
            if slot % _NAN_CHECK_INTERVAL == 0 and not np.isfinite(state.p).all():
                raise NumericalInstabilityError(n)
        if not np.isfinite(state.p).all():
            raise NumericalInstabilityError(nt - 1)
        recorded = TimeSeriesData(g, self.time) if record else None
        final = state.p if return_final else None
        return RunResult(recorded, final)


def acoustic_energy(state: AcousticState, medium, region: tuple | None = None) -> float:
    """Total acoustic energy (compressional + kinetic) over a region."""
    sl = region if region is not None else tuple(slice(None) for _ in state.p.shape)
    p = state.p[sl].astype(np.float64)
    c2 = medium.c0[sl] ** 2
    r0 = medium.rho0[sl]
    e = float(np.sum(p**2 / (2.0 * r0 * c2)))
    for u in state.u:
        e += float(np.sum(0.5 * r0 * u[sl].astype(np.float64) ** 2))
    return e
