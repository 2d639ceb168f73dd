import json
import math

import numpy as np
import pytest

from conftest import make_ops_2d

from patkit.analysis import (
    AdjointTestReport,
    adjoint_error,
    assemble_dense,
    dense_forward,
    normalized_adjoint_error,
    psnr,
    run_adjoint_study,
)


class TestAdjointError:
    def test_exact_transpose_is_machine_zero(self):
        rng = np.random.default_rng(0)
        M = rng.standard_normal((15, 10))
        for _ in range(10):
            x = rng.standard_normal(10)
            y = rng.standard_normal(15)
            chi = adjoint_error(float((M @ x) @ y), float(x @ (M.T @ y)))
            assert chi <= 1e-12 * np.linalg.norm(M @ x) * np.linalg.norm(y)

    def test_bilinear_scaling(self):
        a, b = 1.234, 0.567
        alpha = -3.5
        assert adjoint_error(alpha * a, alpha * b) == pytest.approx(
            abs(alpha) * adjoint_error(a, b), rel=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            adjoint_error(np.nan, 0.0)

    def test_normalized_zero_denominator(self):
        assert normalized_adjoint_error(0.0, 0.0, 0.0, 0.0, 0.0, 0.0) == 0.0
        assert normalized_adjoint_error(1.0, 0.0, 0.0, 0.0, 0.0, 0.0) == math.inf


class TestRunAdjointStudy:
    def test_single_trial_deterministic(self):
        ops = make_ops_2d(n=12, pml=4, nt=16)
        r1 = run_adjoint_study(ops, trials=1, seed=99)
        r2 = run_adjoint_study(ops, trials=1, seed=99)
        assert r1.chi_raw == r2.chi_raw
        assert r1.chi_normalized == r2.chi_normalized

    def test_report_fields_and_json(self):
        ops = make_ops_2d(n=12, pml=4, nt=16, precision="f32")
        rep = run_adjoint_study(ops, trials=3, seed=5)
        assert rep.trials == 3
        assert rep.seed == 5
        assert rep.precision == "f32"
        assert rep.max_log10_raw >= rep.median_log10_raw
        assert rep.max_log10_normalized >= rep.median_log10_normalized
        parsed = json.loads(rep.to_json())
        assert parsed["grid_dims"] == [20, 20]
        assert parsed["distribution"] == "standard_normal"
        round_trip = AdjointTestReport.from_json(rep.to_json())
        assert round_trip == rep

    def test_growing_pml_does_not_hurt_median(self):
        rep8 = run_adjoint_study(make_ops_2d(n=16, pml=8, nt=24,
                                             precision="f32"),
                                 trials=10, seed=1)
        rep16 = run_adjoint_study(make_ops_2d(n=16, pml=16, nt=24,
                                              precision="f32"),
                                  trials=10, seed=1)
        assert (rep16.median_log10_normalized
                <= rep8.median_log10_normalized + 0.1)

    def test_rejects_zero_trials(self):
        ops = make_ops_2d(n=12, pml=4, nt=16)
        with pytest.raises(ValueError):
            run_adjoint_study(ops, trials=0)

    def test_solver_error_carries_partial_report(self, monkeypatch):
        from patkit.solver import NumericalInstabilityError
        ops = make_ops_2d(n=12, pml=4, nt=16)
        true_forward = type(ops).forward
        calls = {"n": 0}

        def flaky(self, p0):
            calls["n"] += 1
            if calls["n"] > 2:  # fail in the third trial
                raise NumericalInstabilityError(7)
            return true_forward(self, p0)

        monkeypatch.setattr(type(ops), "forward", flaky)
        with pytest.raises(NumericalInstabilityError) as excinfo:
            run_adjoint_study(ops, trials=5, seed=0)
        partial = excinfo.value.partial_report
        assert partial is not None
        assert partial.trials == 2
        assert len(partial.chi_raw) == 2


class TestPsnr:
    def test_identical_images_inf(self):
        p = np.array([[1.0, 0.2], [0.0, 0.5]])
        assert psnr(p, p.copy()) == math.inf

    def test_positive_scaling_invariance(self):
        rng = np.random.default_rng(1)
        p = np.abs(rng.standard_normal((12, 12)))
        q = np.abs(rng.standard_normal((12, 12)))
        assert psnr(p, q) == pytest.approx(psnr(3.7 * p, 0.2 * q), rel=1e-12)

    def test_hand_computed_case(self):
        p = np.array([[1.0, 0.0], [0.0, 0.0]])
        q = np.array([[1.0, 0.5], [0.0, 0.0]])
        assert psnr(p, q) == pytest.approx(10 * math.log10(4 / 0.25), rel=1e-12)

    def test_threshold_zeroes_small_entries(self):
        p = np.array([[1.0, 0.009], [0.0, 0.0]])
        q = np.array([[1.0, 0.0], [0.0, 0.0]])
        assert psnr(p, q) == math.inf  # 0.009 < 1% of max is zeroed

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.ones((4, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.ones((3, 3)), np.ones((4, 4)))

    def test_zero_comparison_image_allowed(self):
        p = np.array([[1.0, 0.5], [0.25, 0.0]])
        value = psnr(p, np.zeros_like(p))
        assert math.isfinite(value)


class TestAssembleDense:
    def test_identity_map(self):
        I = assemble_dense(lambda x: x, 6, 6)
        np.testing.assert_array_equal(I, np.eye(6))

    def test_reproduces_linear_map(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((9, 7))
        A = assemble_dense(lambda x: M @ x, 7, 9)
        x = rng.standard_normal(7)
        assert np.linalg.norm(A @ x - M @ x) <= 1e-10 * np.linalg.norm(M @ x)

    def test_size_guard(self):
        with pytest.raises(ValueError):
            assemble_dense(lambda x: x, 10**4, 10**4)

    def test_dense_forward_applied_matches_operator(self, tiny_ops):
        A = dense_forward(tiny_ops)
        rng = np.random.default_rng(3)
        x = rng.standard_normal(tiny_ops.n_image)
        direct = tiny_ops.forward(x.reshape(tiny_ops.image_shape)).samples
        assert (np.linalg.norm(A @ x - direct.ravel())
                <= 1e-10 * np.linalg.norm(direct))
