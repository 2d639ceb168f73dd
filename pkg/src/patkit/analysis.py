"""Verification instrumentation: adjointness statistics, PSNR, dense oracles.

The adjointness error chi = |<Ax, y> - <x, By>| measures how far a candidate
B is from the true transpose of A.  Raw chi grows with problem size, so a
scale-free normalized form chi / (||Ax|| ||y|| + ||x|| ||By||) is reported
alongside it; cross-resolution comparisons only make sense on the latter.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

_LOG_FLOOR = 1e-300  # keeps log10 finite when chi underflows to zero


def adjoint_error(ax_dot_y: float, x_dot_by: float) -> float:
    """Raw adjointness error |<Ax, y> - <x, By>|."""
    if not (math.isfinite(ax_dot_y) and math.isfinite(x_dot_by)):
        raise ValueError("inner products must be finite")
    return abs(ax_dot_y - x_dot_by)


def normalized_adjoint_error(ax_dot_y: float, x_dot_by: float, norm_ax: float,
                             norm_y: float, norm_x: float, norm_by: float) -> float:
    """Scale-free companion: chi / (||Ax|| ||y|| + ||x|| ||By||)."""
    chi = adjoint_error(ax_dot_y, x_dot_by)
    denom = norm_ax * norm_y + norm_x * norm_by
    if denom == 0.0:
        return 0.0 if chi == 0.0 else math.inf
    return chi / denom


@dataclass
class AdjointTestReport:
    """Adjointness study results plus every setting needed to reproduce them."""

    chi_raw: list
    chi_normalized: list
    max_log10_raw: float
    median_log10_raw: float
    max_log10_normalized: float
    median_log10_normalized: float
    trials: int
    seed: int
    precision: str
    grid_dims: list
    spacing: list
    pml_size: list
    pml_enabled: bool
    n_sensors: int
    n_steps: int
    dt: float
    distribution: str = "standard_normal"

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(asdict(self), indent=indent)

    @classmethod
    def from_json(cls, text: str) -> "AdjointTestReport":
        return cls(**json.loads(text))


def run_adjoint_study(ops, trials: int = 100, seed: int = 0) -> AdjointTestReport:
    """Evaluate chi[A, A*](x, y) for seeded standard-normal pairs.

    Inner products and norms are accumulated in float64 regardless of the
    operator precision, so the statistics measure the operators rather than
    the dot products.  If a solver error aborts the study, the exception is
    re-raised with the completed trials attached as ``partial_report``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    chi_raw = []
    chi_norm = []
    for trial in range(trials):
        x = rng.standard_normal(ops.image_shape)
        y = rng.standard_normal(ops.data_shape)
        try:
            ax = np.asarray(ops.forward(x).samples, dtype=np.float64)
            by = np.asarray(ops.adjoint(y), dtype=np.float64)
        except Exception as exc:
            exc.partial_report = (
                _make_report(ops, chi_raw, chi_norm, trial, seed)
                if chi_raw else None
            )
            raise
        ax_dot_y = float(np.dot(ax.ravel(), y.ravel()))
        x_dot_by = float(np.dot(x.ravel(), by.ravel()))
        chi_raw.append(adjoint_error(ax_dot_y, x_dot_by))
        chi_norm.append(normalized_adjoint_error(
            ax_dot_y, x_dot_by,
            float(np.linalg.norm(ax.ravel())), float(np.linalg.norm(y.ravel())),
            float(np.linalg.norm(x.ravel())), float(np.linalg.norm(by.ravel())),
        ))
    return _make_report(ops, chi_raw, chi_norm, trials, seed)


def _make_report(ops, chi_raw, chi_norm, trials, seed) -> AdjointTestReport:
    log_raw = np.log10(np.maximum(chi_raw, _LOG_FLOOR))
    log_norm = np.log10(np.maximum(chi_norm, _LOG_FLOOR))
    grid = ops.grid
    return AdjointTestReport(
        chi_raw=[float(c) for c in chi_raw],
        chi_normalized=[float(c) for c in chi_norm],
        max_log10_raw=float(log_raw.max()),
        median_log10_raw=float(np.median(log_raw)),
        max_log10_normalized=float(log_norm.max()),
        median_log10_normalized=float(np.median(log_norm)),
        trials=trials,
        seed=seed,
        precision=str(ops.config.precision),
        grid_dims=list(grid.dims),
        spacing=list(grid.spacing),
        pml_size=list(grid.pml_size),
        pml_enabled=grid.pml_enabled,
        n_sensors=ops.sensors.n_sensors,
        n_steps=ops.time.n_steps,
        dt=ops.time.dt,
    )


def psnr(p: np.ndarray, q: np.ndarray) -> float:
    """Peak signal-to-noise ratio after max-normalization and 1% thresholding.

    Each argument is normalized by its own sup norm and entries below 0.01
    are zeroed; identical normalized images give +inf.  Because each image is
    normalized by its own maximum, psnr(p, q) is scale invariant but not
    symmetric in general; this matches the evaluation convention used for
    the reconstruction studies.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    p_max = float(np.abs(p).max())
    if p_max == 0.0:
        raise ValueError("reference image is identically zero")
    q_max = float(np.abs(q).max())

    def thres(x):
        return np.where(x >= 0.01, x, 0.0)

    p_t = thres(p / p_max)
    q_t = thres(q / q_max) if q_max > 0 else np.zeros_like(q)
    err = float(np.sum((p_t - q_t) ** 2))
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(p.size / err)


_DENSE_GUARD = 10**7


def assemble_dense(apply_fn, n_in: int, n_out: int) -> np.ndarray:
    """Materialise a linear map column by column (apply to unit vectors)."""
    if n_in * n_out > _DENSE_GUARD:
        raise ValueError(
            f"dense assembly of {n_out}x{n_in} exceeds the {_DENSE_GUARD} "
            "entry guard"
        )
    mat = np.zeros((n_out, n_in))
    e = np.zeros(n_in)
    for j in range(n_in):
        e[j] = 1.0
        col = np.asarray(apply_fn(e), dtype=np.float64).ravel()
        if col.size != n_out:
            raise ValueError(f"map returned {col.size} entries, expected {n_out}")
        mat[:, j] = col
        e[j] = 0.0
    return mat


def dense_forward(ops) -> np.ndarray:
    return assemble_dense(
        lambda x: ops.forward(x.reshape(ops.image_shape)).samples,
        ops.n_image, ops.n_data,
    )


def dense_adjoint(ops) -> np.ndarray:
    return assemble_dense(
        lambda y: ops.adjoint(y.reshape(ops.data_shape)),
        ops.n_data, ops.n_image,
    )


def dense_time_reversal(ops) -> np.ndarray:
    return assemble_dense(
        lambda y: ops.time_reversal(y.reshape(ops.data_shape)),
        ops.n_data, ops.n_image,
    )
