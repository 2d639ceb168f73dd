import numpy as np
import pytest

from patkit import Grid, Medium, SensorArray, TimeAxis
from patkit.operators import PatOperatorConfig, PatOperators


class DenseOps:
    """Operator triple backed by explicit matrices, for oracle tests."""

    def __init__(self, A, image_shape, data_shape, A_tr=None):
        self.A = np.asarray(A, dtype=np.float64)
        self.A_tr = self.A.T if A_tr is None else np.asarray(A_tr)
        self.image_shape = tuple(image_shape)
        self.data_shape = tuple(data_shape)
        self.n_image = int(np.prod(image_shape))
        self.n_data = int(np.prod(data_shape))

    def forward(self, p):
        return (self.A @ np.asarray(p).ravel()).reshape(self.data_shape)

    def adjoint(self, f):
        return (self.A.T @ np.asarray(f).ravel()).reshape(self.image_shape)

    def time_reversal(self, f):
        return (self.A_tr @ np.asarray(f).ravel()).reshape(self.image_shape)

    def normal(self, p):
        return self.adjoint(self.forward(p))


def make_ops_2d(n=16, pml=8, nt=40, precision="f64", pml_enabled=True,
                c0=1500.0, rho0=1000.0, smoothing=True):
    """Small homogeneous 2D operator setup with top-row sensors."""
    p = pml if pml_enabled else 0
    dims = (n + 2 * p, n + 2 * p)
    grid = Grid(dims, (1.0 / n, 1.0 / n), (p, p), pml_enabled=pml_enabled)
    med = Medium.homogeneous(grid, c0, rho0)
    idx = np.stack([np.zeros(n, dtype=int), np.arange(n)], axis=1)
    sensors = SensorArray.from_interior_indices(grid, idx)
    dt = 0.3 * (1.0 / n) / c0
    time = TimeAxis(nt, dt)
    cfg = PatOperatorConfig(grid, med, sensors, time, precision=precision,
                            smoothing=smoothing)
    return PatOperators(cfg)


@pytest.fixture(scope="session")
def tiny_ops():
    """16^2 double-precision operators shared by the dense-oracle tests."""
    return make_ops_2d(n=16, pml=8, nt=40)
