"""Uniform Cartesian grid bookkeeping and k-space spectral derivatives.

The solver interpolates fields with a truncated Fourier series, so spatial
derivatives are diagonal in the wavenumber domain.  Three ingredients live
here:

* discrete wavenumber vectors in DFT (wrapped) ordering,
* the sinc-shaped temporal correction factor applied as a wavenumber
  multiplier, which makes the leapfrog time step exact for homogeneous media,
* half-cell phase shifts realising the staggered grids spectrally.

Transform convention: unnormalized forward, 1/N inverse (the numpy/scipy
default).  All public derivative routines map real fields to real fields;
complex arithmetic stays inside.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


def fft_workers() -> int:
    """Worker count for multi-threaded transforms, capped by PAT_THREADS."""
    try:
        return max(1, int(os.environ.get("PAT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class Grid:
    """Regular collocation grid, PML layers included in ``dims``.

    dims        per-axis point counts of the full computational grid
    spacing     per-axis grid spacing in meters
    pml_size    per-axis absorbing-layer thickness in points (each end)
    pml_enabled whether the absorbing layers are active
    """

    dims: tuple[int, ...]
    spacing: tuple[float, ...]
    pml_size: tuple[int, ...] = (0, 0)
    pml_enabled: bool = True

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        if len(dims) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got {len(dims)} axes")
        if len(spacing) != len(dims):
            raise ValueError("spacing must have one entry per axis")
        pml = self.pml_size
        if isinstance(pml, int):
            pml = (pml,) * len(dims)
        pml = tuple(int(p) for p in pml)
        if len(pml) != len(dims):
            raise ValueError("pml_size must have one entry per axis")
        object.__setattr__(self, "pml_size", pml)
        for n in dims:
            if n < 8:
                raise ValueError(f"grid dims must be >= 8, got {n}")
        for h in spacing:
            if h <= 0:
                raise ValueError("grid spacing must be positive")
        for n, p in zip(dims, pml):
            if p < 0:
                raise ValueError("pml_size must be nonnegative")
            if 2 * p >= n:
                raise ValueError(f"2*pml_size must be < dims per axis ({2 * p} >= {n})")

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    @property
    def interior_dims(self) -> tuple[int, ...]:
        """Shape of the non-PML interior (the image region)."""
        if not self.pml_enabled:
            return self.dims
        return tuple(n - 2 * p for n, p in zip(self.dims, self.pml_size))

    @property
    def interior_slices(self) -> tuple[slice, ...]:
        if not self.pml_enabled:
            return tuple(slice(None) for _ in self.dims)
        return tuple(slice(p, n - p) for n, p in zip(self.dims, self.pml_size))

    def embed(self, interior_field: np.ndarray) -> np.ndarray:
        """Zero-pad an interior-sized field onto the full grid."""
        interior_field = np.asarray(interior_field)
        if interior_field.shape != self.interior_dims:
            raise ValueError(
                f"field shape {interior_field.shape} != interior {self.interior_dims}"
            )
        full = np.zeros(self.dims, dtype=interior_field.dtype)
        full[self.interior_slices] = interior_field
        return full

    def restrict(self, full_field: np.ndarray) -> np.ndarray:
        """Extract the non-PML interior of a full-grid field."""
        full_field = np.asarray(full_field)
        if full_field.shape != self.dims:
            raise ValueError(f"field shape {full_field.shape} != grid {self.dims}")
        return full_field[self.interior_slices].copy()


def make_wavenumbers(n: int, dx: float) -> np.ndarray:
    """Discrete wavenumbers 2*pi*m/(n*dx) in wrapped DFT order, rad/m.

    The wrapped indices run m = 0, 1, ..., n//2, -(n//2)+1, ..., -1; for even
    n the Nyquist sits at index n//2 with positive sign.
    """
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    if dx <= 0:
        raise ValueError(f"spacing must be positive, got {dx}")
    m = np.arange(n)
    m = np.where(m <= n // 2, m, m - n)
    return 2.0 * np.pi * m / (n * dx)


def kspace_correction(grid: Grid, c_ref: float, dt: float,
                      dtype=np.float64) -> np.ndarray:
    """Temporal-dispersion correction sinc(c_ref*dt*|k|/2) on the full k-grid."""
    if c_ref <= 0:
        raise ValueError("c_ref must be positive")
    if dt <= 0:
        raise ValueError("dt must be positive")
    k2 = np.zeros(grid.dims, dtype=np.float64)
    for ax in range(grid.ndim):
        k = make_wavenumbers(grid.dims[ax], grid.spacing[ax])
        shape = [1] * grid.ndim
        shape[ax] = grid.dims[ax]
        k2 = k2 + (k.reshape(shape)) ** 2
    # np.sinc is sin(pi x)/(pi x); the argument here is c_ref*dt*|k|/2.
    kappa = np.sinc(c_ref * dt * np.sqrt(k2) / (2.0 * np.pi))
    return kappa.astype(dtype)


class KSpaceOperators:
    """Precomputed wavenumber arrays for spectral derivatives on one grid.

    Holds per-axis wavenumber vectors, the full-grid correction ``kappa`` and
    the half-cell shift phases exp(+-i k dx/2).  ``dtype`` fixes the real
    precision of all field math (binary32 or binary64).
    """

    def __init__(self, grid: Grid, c_ref: float, dt: float, dtype=np.float64):
        dtype = np.dtype(dtype)
        if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError("dtype must be float32 or float64")
        self.grid = grid
        self.dtype = dtype
        self.cdtype = np.complex64 if dtype == np.float32 else np.complex128
        self.c_ref = float(c_ref)
        self.dt = float(dt)
        self.k_axis = [make_wavenumbers(n, h) for n, h in zip(grid.dims, grid.spacing)]
        self.kappa = kspace_correction(grid, c_ref, dt, dtype=dtype)
        self.shift_plus = [
            np.exp(+0.5j * k * h).astype(self.cdtype)
            for k, h in zip(self.k_axis, grid.spacing)
        ]
        self.shift_minus = [
            np.exp(-0.5j * k * h).astype(self.cdtype)
            for k, h in zip(self.k_axis, grid.spacing)
        ]
        # 1D factors i*k (times optional shift); kappa is applied separately.
        # The unshifted factor is purely imaginary at the self-conjugate
        # Nyquist bin of an even axis; its real-to-real action there is zero,
        # so the bin is zeroed explicitly (the shifted factors are real at
        # Nyquist and survive).
        self._ik = {}
        for ax, k in enumerate(self.k_axis):
            ik = (1j * k).astype(self.cdtype)
            ik_plain = ik.copy()
            n = grid.dims[ax]
            if n % 2 == 0:
                ik_plain[n // 2] = 0.0
            self._ik[(ax, 0)] = ik_plain
            self._ik[(ax, +1)] = ik * self.shift_plus[ax]
            self._ik[(ax, -1)] = ik * self.shift_minus[ax]
        self._kmax = max(float(np.abs(k).max()) for k in self.k_axis)

    def _bcast(self, arr_1d: np.ndarray, axis: int) -> np.ndarray:
        shape = [1] * self.grid.ndim
        shape[axis] = arr_1d.shape[0]
        return arr_1d.reshape(shape)

    def ik_factor(self, axis: int, shift: int) -> np.ndarray:
        """Broadcastable 1D multiplier i*k_axis times the shift phase."""
        return self._bcast(self._ik[(axis, shift)], axis)

    def shift_factor(self, axis: int, sign: int) -> np.ndarray:
        arr = self.shift_plus[axis] if sign > 0 else self.shift_minus[axis]
        return self._bcast(arr, axis)


_SHIFT_CODE = {"+": +1, "-": -1, "none": 0, None: 0, +1: +1, -1: -1, 0: 0}


def _check_imag(out: np.ndarray, field: np.ndarray, gain: float) -> None:
    # Guards against phase-convention bugs: a wrong sign in the shift phases
    # leaves an O(output) imaginary part.  Bound is relative to the input's
    # sup norm times the spectral gain so legitimate roundoff stays below it.
    if not __debug__:
        return
    m = float(np.abs(field).max(initial=0.0))
    if m == 0.0:
        return
    tol = 1e-6 if field.dtype == np.float64 else 1e-3
    assert float(np.abs(out.imag).max()) <= tol * m * max(gain, 1.0), (
        "imaginary residue after inverse transform exceeds tolerance; "
        "phase convention suspect"
    )


def spectral_derivative(field: np.ndarray, axis: int, shift, ks: KSpaceOperators) -> np.ndarray:
    """k-space derivative along one axis: Re F^-1 { i k kappa e^(+-ik dx/2) F f }."""
    field = np.asarray(field)
    if field.shape != ks.grid.dims:
        raise ValueError(f"field shape {field.shape} != grid {ks.grid.dims}")
    if not 0 <= axis < ks.grid.ndim:
        raise ValueError(f"axis {axis} invalid for {ks.grid.ndim}D grid")
    s = _SHIFT_CODE[shift]
    spec = sfft.fftn(field.astype(ks.dtype, copy=False), workers=fft_workers())
    spec *= ks.kappa
    spec *= ks.ik_factor(axis, s)
    out = sfft.ifftn(spec, workers=fft_workers())
    _check_imag(out, field, ks._kmax)
    return np.ascontiguousarray(out.real)


def spectral_derivative_all(field: np.ndarray, shift, ks: KSpaceOperators) -> list[np.ndarray]:
    """Derivatives along every axis, sharing one forward transform."""
    field = np.asarray(field)
    if field.shape != ks.grid.dims:
        raise ValueError(f"field shape {field.shape} != grid {ks.grid.dims}")
    s = _SHIFT_CODE[shift]
    base = sfft.fftn(field.astype(ks.dtype, copy=False), workers=fft_workers())
    base *= ks.kappa
    outs = []
    for ax in range(ks.grid.ndim):
        spec = base * ks.ik_factor(ax, s)
        out = sfft.ifftn(spec, workers=fft_workers())
        _check_imag(out, field, ks._kmax)
        outs.append(np.ascontiguousarray(out.real))
    return outs


def apply_shift(field: np.ndarray, axis: int, sign: int, ks: KSpaceOperators) -> np.ndarray:
    """Pure half-cell translation along one axis (no derivative factor)."""
    field = np.asarray(field)
    if field.shape != ks.grid.dims:
        raise ValueError(f"field shape {field.shape} != grid {ks.grid.dims}")
    spec = sfft.fftn(field.astype(ks.dtype, copy=False), workers=fft_workers())
    spec *= ks.shift_factor(axis, sign)
    out = sfft.ifftn(spec, workers=fft_workers())
    return np.ascontiguousarray(out.real)
