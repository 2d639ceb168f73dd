"""Forward, adjoint and time-reversal PAT operators as matrix-free linear maps.

forward        A  : initial pressure (interior image) -> sensor time series
adjoint        A* : time series -> image, via a source-driven wave solve run
                    with the time-reversed data entering as a mass source
time_reversal  A< : time series -> image, via a Dirichlet-constrained solve

The forward map injects the smoothed image through a two-slot mass source so
the initial condition p(0) = p0, dp/dt(0) = 0 is realised by the staggered
scheme.  The adjoint mirrors every factor of that construction; its source
weights pair adjacent reversed samples, which makes the discrete operator the
exact transpose of the forward map when the PML is disabled (the PML damping
breaks time symmetry and leaves a small residual adjointness error).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .grid import Grid, KSpaceOperators, fft_workers
from .medium import Medium, PmlOperators
from .solver import (
    SensorArray,
    SourceSchedule,
    TimeAxis,
    TimeSeriesData,
    WaveSolver,
)

_DTYPES = {"f32": np.float32, "f64": np.float64,
           "float32": np.float32, "float64": np.float64}


def precision_dtype(precision) -> np.dtype:
    if isinstance(precision, str):
        try:
            return np.dtype(_DTYPES[precision])
        except KeyError:
            raise ValueError(f"unknown precision {precision!r}") from None
    return np.dtype(precision)


@lru_cache(maxsize=32)
def _axis_window(n: int) -> np.ndarray:
    # Blackman taper over the resolved band, indexed in wrapped DFT order.
    # w(0) is pinned to 1 so constant fields keep their mean exactly.
    m = np.arange(n)
    m = np.where(m <= n // 2, m, m - n)
    f = m / max(n // 2, 1)
    w = 0.42 + 0.5 * np.cos(np.pi * f) + 0.08 * np.cos(2.0 * np.pi * f)
    w[0] = 1.0
    return w


def smooth_field(p: np.ndarray) -> np.ndarray:
    """Self-adjoint spectral smoothing Q: separable Blackman taper in k-space."""
    p = np.asarray(p)
    spec = sfft.fftn(p, workers=fft_workers())
    for ax, n in enumerate(p.shape):
        shape = [1] * p.ndim
        shape[ax] = n
        spec *= _axis_window(n).reshape(shape)
    out = sfft.ifftn(spec, workers=fft_workers()).real
    return out.astype(p.dtype, copy=False)


@dataclass(frozen=True)
class PatOperatorConfig:
    """Immutable bundle shared by the three operators."""

    grid: Grid
    medium: Medium
    sensors: SensorArray
    time: TimeAxis
    precision: str = "f64"
    smoothing: bool = True
    pml_alpha_max: float = 2.0
    pml_exponent: float = 4.0
    cfl_max: float = 0.3

    def __post_init__(self):
        precision_dtype(self.precision)
        cfl_dt = self.cfl_max * min(self.grid.spacing) / self.medium.c_ref
        if self.time.dt > cfl_dt * (1.0 + 1e-9):
            raise ValueError(
                f"dt = {self.time.dt:g} violates the CFL bound {cfl_dt:g} "
                f"(cfl_max = {self.cfl_max})"
            )


class PatOperators:
    """Matrix-free A, A* and A< sharing one solver configuration."""

    def __init__(self, config: PatOperatorConfig):
        self.config = config
        self.grid = config.grid
        self.medium = config.medium
        self.sensors = config.sensors
        self.time = config.time
        self.dtype = precision_dtype(config.precision)
        ks = KSpaceOperators(self.grid, self.medium.c_ref, self.time.dt,
                             dtype=self.dtype)
        pml = PmlOperators.build(self.grid, self.medium.c_ref, self.time.dt,
                                 alpha_max=config.pml_alpha_max,
                                 exponent=config.pml_exponent)
        self.solver = WaveSolver(self.grid, self.medium, pml, ks, self.time)
        self._c0sq = self.medium.c0**2

    @property
    def image_shape(self) -> tuple[int, ...]:
        return self.grid.interior_dims

    @property
    def data_shape(self) -> tuple[int, int]:
        return (self.time.n_samples, self.sensors.n_sensors)

    @property
    def n_image(self) -> int:
        return int(np.prod(self.image_shape))

    @property
    def n_data(self) -> int:
        return int(np.prod(self.data_shape))

    def _smooth(self, x: np.ndarray) -> np.ndarray:
        return smooth_field(x) if self.config.smoothing else x

    def _as_samples(self, f) -> np.ndarray:
        if isinstance(f, TimeSeriesData):
            f = f.samples
        f = np.asarray(f)
        if f.size != self.n_data:
            raise ValueError(
                f"data has {f.size} entries, expected {self.n_data}"
            )
        return f.reshape(self.data_shape).astype(self.dtype, copy=False)

    def _as_image(self, p0) -> np.ndarray:
        p0 = np.asarray(p0)
        if p0.size != self.n_image:
            raise ValueError(
                f"image has {p0.size} entries, expected {self.n_image}"
            )
        p0 = p0.reshape(self.image_shape)
        if not np.all(np.isfinite(p0)):
            raise ValueError("image contains non-finite entries")
        return p0.astype(self.dtype, copy=False)

    def forward(self, p0) -> TimeSeriesData:
        """A: wave propagation from the smoothed initial pressure, sampled at
        the sensors for n = 0 .. N_t."""
        p0 = self._as_image(p0)
        d = self.grid.ndim
        full = self.grid.embed(p0)
        src = self._smooth(full) / (2.0 * self._c0sq * d * self.time.dt)
        schedule = SourceSchedule.mass_two_slot(src.astype(self.dtype),
                                                self.time.n_samples)
        res = self.solver.run(schedule, self.sensors, record=True)
        return res.recorded

    def adjoint(self, f) -> np.ndarray:
        """A*: the recorded data drives the wave solve as a mass source.

        Each slot j injects the pair g[N_t-j] + g[N_t-j+1] of time-reversed
        samples (indices outside 0..N_t contribute nothing), scaled by
        rho0/(2 d dt) at the sensor points; the final field is rescaled by
        1/(c0^2 rho0), smoothed and restricted to the image region.
        """
        g = self._as_samples(f)
        rev = g[::-1]                     # rev[j] = g[N_t - j]
        v = rev.copy()
        v[1:] += rev[:-1]                 # add g[N_t - j + 1]
        d = self.grid.ndim
        rho0_at = self.medium.rho0[self.sensors.ix]
        v *= (rho0_at / (2.0 * d * self.time.dt)).astype(self.dtype)
        schedule = SourceSchedule.mass_at_sensors(v, self.sensors)
        res = self.solver.run(schedule, self.sensors, record=False,
                              return_final=True)
        img = res.final_pressure / (self._c0sq * self.medium.rho0)
        img = self._smooth(img.astype(self.dtype, copy=False))
        return self.grid.restrict(img)

    def time_reversal(self, f) -> np.ndarray:
        """A<: re-impose the reversed data as a Dirichlet condition at the
        sensors; the final field (smoothed, restricted) is the estimate."""
        g = self._as_samples(f)
        schedule = SourceSchedule.dirichlet_sequence(g[::-1])
        res = self.solver.run(schedule, self.sensors, record=False,
                              return_final=True)
        img = self._smooth(res.final_pressure)
        return self.grid.restrict(img)

    def normal(self, p0) -> np.ndarray:
        """A* A, the map whose dominant eigenvalue sets the step-size rule."""
        return self.adjoint(self.forward(p0))

    # Measurement operator M and its adjoint.  Point sampling in space and
    # time makes both identity maps between the recorded-sample layout and
    # the flat data vector; kept explicit so richer detector models can
    # replace them without touching the wave code.

    def measure(self, g) -> np.ndarray:
        if isinstance(g, TimeSeriesData):
            g = g.samples
        g = np.asarray(g)
        if g.size != self.n_data:
            raise ValueError(f"expected {self.n_data} samples")
        return g.reshape(-1).copy()

    def measure_adjoint(self, f) -> TimeSeriesData:
        f = np.asarray(f)
        if f.size != self.n_data:
            raise ValueError(f"expected {self.n_data} data entries")
        return TimeSeriesData(f.reshape(self.data_shape).copy(), self.time)
