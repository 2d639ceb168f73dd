import numpy as np
import pytest

from conftest import make_ops_2d

from patkit import Grid, Medium, SensorArray, TimeAxis
from patkit.operators import (
    PatOperatorConfig,
    PatOperators,
    precision_dtype,
    smooth_field,
)
from patkit.solver import TimeSeriesData


class TestSmooth:
    def test_zero_field(self):
        assert np.all(smooth_field(np.zeros((16, 16))) == 0)

    def test_self_adjoint(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((20, 24))
        y = rng.standard_normal((20, 24))
        lhs = np.sum(smooth_field(x) * y)
        rhs = np.sum(x * smooth_field(y))
        scale = np.linalg.norm(x) * np.linalg.norm(y)
        assert abs(lhs - rhs) <= 1e-10 * scale

    def test_checkerboard_killed_at_band_edge(self):
        n = 16
        i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        checker = (-1.0) ** (i + j)
        out = smooth_field(checker)
        assert np.abs(out).max() <= 1e-10

    def test_constant_mean_preserved(self):
        c = np.full((12, 18), 4.25)
        out = smooth_field(c)
        assert out.mean() == pytest.approx(4.25, rel=1e-14)
        np.testing.assert_allclose(out, 4.25, rtol=1e-12)

    def test_attenuates_not_amplifies(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((32, 32))
        assert np.linalg.norm(smooth_field(x)) <= np.linalg.norm(x)


class TestConfig:
    def test_precision_parsing(self):
        assert precision_dtype("f32") == np.float32
        assert precision_dtype("f64") == np.float64
        with pytest.raises(ValueError):
            precision_dtype("f16")

    def test_cfl_violation_rejected(self):
        n = 16
        grid = Grid((n, n), (1.0 / n, 1.0 / n), (0, 0), pml_enabled=False)
        med = Medium.homogeneous(grid, 1500.0, 1000.0)
        idx = np.stack([np.zeros(n, dtype=int), np.arange(n)], axis=1)
        sensors = SensorArray.from_interior_indices(grid, idx)
        bad_dt = 0.5 * (1.0 / n) / 1500.0
        with pytest.raises(ValueError):
            PatOperatorConfig(grid, med, sensors, TimeAxis(10, bad_dt))


class TestForward:
    def test_zero_image_zero_data(self, tiny_ops):
        f = tiny_ops.forward(np.zeros(tiny_ops.image_shape))
        assert np.all(f.samples == 0)
        assert f.samples.shape == tiny_ops.data_shape

    def test_linearity(self, tiny_ops):
        rng = np.random.default_rng(2)
        p = rng.standard_normal(tiny_ops.image_shape)
        f1 = tiny_ops.forward(p).samples
        f2 = tiny_ops.forward(2.0 * p).samples
        assert np.linalg.norm(f2 - 2.0 * f1) <= 1e-10 * np.linalg.norm(f2)

    def test_deterministic(self, tiny_ops):
        rng = np.random.default_rng(3)
        p = rng.standard_normal(tiny_ops.image_shape)
        np.testing.assert_array_equal(tiny_ops.forward(p).samples,
                                      tiny_ops.forward(p).samples)

    def test_rejects_nonfinite(self, tiny_ops):
        p = np.zeros(tiny_ops.image_shape)
        p[0, 0] = np.nan
        with pytest.raises(ValueError):
            tiny_ops.forward(p)

    def test_rejects_wrong_size(self, tiny_ops):
        with pytest.raises(ValueError):
            tiny_ops.forward(np.zeros((3, 3)))


class TestAdjoint:
    def test_zero_data_zero_image(self, tiny_ops):
        img = tiny_ops.adjoint(np.zeros(tiny_ops.data_shape))
        assert np.all(img == 0)
        assert img.shape == tiny_ops.image_shape

    def test_length_mismatch(self, tiny_ops):
        with pytest.raises(ValueError):
            tiny_ops.adjoint(np.zeros(7))

    def test_exact_transpose_without_pml(self):
        # With the PML disabled the source-driven adjoint is the transpose of
        # the forward map down to roundoff; this pins the source-schedule
        # indexing, the single most bug-prone offset in the implementation.
        ops = make_ops_2d(n=12, pml=0, nt=24, pml_enabled=False)
        rng = np.random.default_rng(4)
        chis = []
        for _ in range(10):
            x = rng.standard_normal(ops.image_shape)
            y = rng.standard_normal(ops.data_shape)
            ax = ops.forward(x).samples
            by = ops.adjoint(y)
            num = abs(np.sum(ax * y) - np.sum(x * by))
            den = (np.linalg.norm(ax) * np.linalg.norm(y)
                   + np.linalg.norm(x) * np.linalg.norm(by))
            chis.append(num / den)
        assert max(chis) < 1e-13

    def test_exact_transpose_heterogeneous_without_pml(self):
        # The c0^2 / rho0 rescalings keep the transpose exact for
        # heterogeneous media too.
        n, nt = 12, 24
        grid = Grid((n, n), (1.0 / n, 1.0 / n), (0, 0), pml_enabled=False)
        rng = np.random.default_rng(5)
        c0 = 1500.0 + 100.0 * rng.random((n, n))
        rho0 = 1000.0 + 200.0 * rng.random((n, n))
        med = Medium(c0, rho0, float(c0.max()))
        idx = np.stack([np.zeros(n, dtype=int), np.arange(n)], axis=1)
        sensors = SensorArray.from_interior_indices(grid, idx)
        dt = 0.3 * (1.0 / n) / med.c_ref
        ops = PatOperators(PatOperatorConfig(grid, med, sensors,
                                             TimeAxis(nt, dt)))
        x = rng.standard_normal(ops.image_shape)
        y = rng.standard_normal(ops.data_shape)
        ax = ops.forward(x).samples
        by = ops.adjoint(y)
        num = abs(np.sum(ax * y) - np.sum(x * by))
        den = (np.linalg.norm(ax) * np.linalg.norm(y)
               + np.linalg.norm(x) * np.linalg.norm(by))
        assert num / den < 1e-13

    def test_dense_transpose_with_pml(self, tiny_ops):
        from patkit.analysis import dense_adjoint, dense_forward
        A = dense_forward(tiny_ops)
        B = dense_adjoint(tiny_ops)
        rel = np.linalg.norm(B - A.T) / np.linalg.norm(A.T)
        assert rel <= 1e-3


class TestTimeReversal:
    def test_zero_data_zero_image(self, tiny_ops):
        img = tiny_ops.time_reversal(np.zeros(tiny_ops.data_shape))
        assert np.all(img == 0)

    def test_linearity(self, tiny_ops):
        rng = np.random.default_rng(6)
        y1 = rng.standard_normal(tiny_ops.data_shape)
        y2 = rng.standard_normal(tiny_ops.data_shape)
        a, b = 0.7, -2.2
        lhs = tiny_ops.time_reversal(a * y1 + b * y2)
        rhs = a * tiny_ops.time_reversal(y1) + b * tiny_ops.time_reversal(y2)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_tr_close_to_bp_for_enclosed_ball(self):
        # Full measurement coverage: the projected, max-normalized TR and BP
        # images of a centered disc agree within 10% relative l2.
        from patkit import scenarios
        from patkit.recon import recon_bp, recon_tr
        n, pml = 48, 8
        grid = Grid((n + 2 * pml,) * 2, (1.0 / n,) * 2, (pml,) * 2)
        med = Medium.homogeneous(grid, 1500.0, 1000.0)
        edges = []
        for j in range(n):
            edges += [(0, j), (n - 1, j)]
        for i in range(1, n - 1):
            edges += [(i, 0), (i, n - 1)]
        sensors = SensorArray.from_interior_indices(grid, np.array(edges))
        time = scenarios.default_time_axis(grid, med, crossings=2.0)
        ops = PatOperators(PatOperatorConfig(grid, med, sensors, time))
        x = (np.arange(n) + 0.5) / n
        X, Y = np.meshgrid(x, x, indexing="ij")
        p0 = (((X - 0.5) ** 2 + (Y - 0.5) ** 2) <= 0.15**2).astype(float)
        f = ops.forward(p0)
        tr = recon_tr(ops, f, project=True)
        bp = recon_bp(ops, f, project=True)
        tr /= np.abs(tr).max()
        bp /= np.abs(bp).max()
        assert np.linalg.norm(tr - bp) / np.linalg.norm(bp) < 0.10


class TestMeasurement:
    def test_roundtrip_identity(self, tiny_ops):
        rng = np.random.default_rng(7)
        f = rng.standard_normal(tiny_ops.n_data)
        g = tiny_ops.measure_adjoint(f)
        np.testing.assert_array_equal(tiny_ops.measure(g), f)

    def test_self_adjoint_exactly(self, tiny_ops):
        rng = np.random.default_rng(8)
        g = rng.standard_normal(tiny_ops.data_shape)
        f = rng.standard_normal(tiny_ops.n_data)
        lhs = np.dot(tiny_ops.measure(g), f)
        rhs = np.dot(g.ravel(), tiny_ops.measure_adjoint(f).samples.ravel())
        assert lhs == rhs

    def test_sample_count(self, tiny_ops):
        nt1, ns = tiny_ops.data_shape
        assert nt1 == tiny_ops.time.n_steps + 1
        assert tiny_ops.n_data == nt1 * ns

    def test_accepts_time_series(self, tiny_ops):
        ts = TimeSeriesData(np.ones(tiny_ops.data_shape), tiny_ops.time)
        assert tiny_ops.measure(ts).shape == (tiny_ops.n_data,)


class Test3D:
    def test_adjointness_3d(self):
        # Exercises the three-way density split and 3D staggered derivatives.
        from patkit import scenarios
        from patkit.analysis import run_adjoint_study
        n, pml = 16, 8
        grid = Grid((n + 2 * pml,) * 3, (1.0 / n,) * 3, (pml,) * 3)
        med = Medium.homogeneous(grid, 1500.0, 1000.0)
        jj, kk = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        plane = np.stack([np.zeros(n * n, dtype=int), jj.ravel(), kk.ravel()],
                         axis=1)
        sensors = SensorArray.from_interior_indices(grid, plane)
        time = scenarios.default_time_axis(grid, med)
        ops = PatOperators(PatOperatorConfig(grid, med, sensors, time,
                                             precision="f32"))
        rep = run_adjoint_study(ops, trials=5, seed=3)
        assert rep.max_log10_normalized <= -3.0

    def test_scenario_i_time_reversal_recovers_ball(self):
        from patkit import scenarios
        from patkit.analysis import psnr
        from patkit.recon import recon_tr
        scn = scenarios.scenario_I(16, pml=8)
        ops = scn.make_operators(precision="f32")
        f = scenarios.simulate_data(scn, noise_rel=0.0, ops=ops)
        img = recon_tr(ops, f, project=True)
        assert psnr(scn.p0, img) > 15.0
        peak = np.unravel_index(np.argmax(img), img.shape)
        assert all(abs(p - 8) <= 2 for p in peak)  # ball centered at (8,8,8)


class TestPrecisionVariants:
    def test_f32_outputs_f32(self):
        ops = make_ops_2d(n=12, pml=4, nt=16, precision="f32")
        p = np.ones(ops.image_shape)
        f = ops.forward(p)
        assert f.samples.dtype == np.float32
        img = ops.adjoint(f)
        assert img.dtype == np.float32

    def test_f32_close_to_f64(self):
        ops32 = make_ops_2d(n=12, pml=4, nt=16, precision="f32")
        ops64 = make_ops_2d(n=12, pml=4, nt=16, precision="f64")
        rng = np.random.default_rng(9)
        p = rng.standard_normal(ops64.image_shape)
        f32 = ops32.forward(p.astype(np.float32)).samples
        f64 = ops64.forward(p).samples
        assert np.linalg.norm(f32 - f64) <= 1e-4 * np.linalg.norm(f64)
