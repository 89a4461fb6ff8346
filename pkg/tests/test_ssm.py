import numpy as np
import pytest

from dyninv.operators import Covariance, DenseOp, IdentityOp
from dyninv.ssm import (
    FrameSequence,
    SequenceModel,
    apply_psi,
    apply_psi_adjoint,
    eval_F,
    eval_phi,
    shifted_patch_sequence,
    simulate,
)

from conftest import random_model, random_spd


def _identity_model(n, T, r_sq=0.0, q_sq=0.0, m1=None, p1_sq=1.0):
    return SequenceModel(
        H=[IdentityOp(n)] * T,
        R=[Covariance.scaled_identity(n, r_sq)] * T,
        A=[IdentityOp(n)] * (T - 1),
        Q=[Covariance.scaled_identity(n, q_sq)] * (T - 1),
        m1=np.zeros(n) if m1 is None else m1,
        P1=Covariance.scaled_identity(n, p1_sq),
    )


class TestFrameSequence:
    def test_shape_consistency(self):
        seq = FrameSequence(np.zeros((3, 6)), (2, 3))
        assert seq.T == 3 and seq.dim == 6
        with pytest.raises(ValueError):
            FrameSequence(np.zeros((3, 6)), (2, 2))

    def test_frame_image(self):
        seq = FrameSequence(np.arange(6.0)[None, :], (2, 3))
        np.testing.assert_array_equal(seq.frame_image(0), [[0, 1, 2], [3, 4, 5]])

    def test_arithmetic(self):
        a = FrameSequence(np.ones((2, 3)))
        b = FrameSequence(2 * np.ones((2, 3)))
        np.testing.assert_array_equal((a + b).frames, 3 * np.ones((2, 3)))
        np.testing.assert_array_equal((2.0 * a).frames, b.frames)


class TestSimulate:
    def test_noiseless_identity_dynamics(self):
        n, T = 4, 5
        m1 = np.array([0.2, 0.4, 0.6, 0.8])
        model = _identity_model(n, T, m1=m1, p1_sq=1.0)
        truth, meas = simulate(model, seed=0, initial_state=m1)
        for t in range(T):
            np.testing.assert_array_equal(truth.frames[t], m1)
            np.testing.assert_array_equal(meas.frames[t], m1)

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(0)
        model = random_model(rng, 4, 3, 3)
        t1, m1 = simulate(model, seed=123)
        t2, m2 = simulate(model, seed=123)
        np.testing.assert_array_equal(t1.frames, t2.frames)
        np.testing.assert_array_equal(m1.frames, m2.frames)
        t3, _ = simulate(model, seed=124)
        assert not np.array_equal(t1.frames, t3.frames)

    def test_measurement_noise_sample_mean(self):
        # scalar model, huge T: residuals y_t - x_t are the measurement
        # noise draws; their mean must shrink like sigma / sqrt(T)
        draws = 100_000
        sigma = 0.5
        model = SequenceModel(
            H=[IdentityOp(1)] * draws,
            R=[Covariance.scaled_identity(1, sigma ** 2)] * draws,
            A=[IdentityOp(1)] * (draws - 1),
            Q=[Covariance.scaled_identity(1, 0.0)] * (draws - 1),
            m1=np.zeros(1),
            P1=Covariance.scaled_identity(1, 0.0),
        )
        truth, meas = simulate(model, seed=7, initial_state=np.zeros(1))
        residuals = meas.frames - truth.frames
        assert abs(residuals.mean()) <= 4 * sigma / np.sqrt(draws)


class TestShiftedPatches:
    def test_zero_shift_repeats_frame(self):
        img = np.linspace(0, 1, 36).reshape(6, 6)
        seq = shifted_patch_sequence(img, (3, 3), 4, (0, 0))
        for t in range(1, 4):
            np.testing.assert_array_equal(seq.frames[t], seq.frames[0])

    def test_single_frame_is_crop(self):
        img = np.linspace(0, 1, 16).reshape(4, 4)
        seq = shifted_patch_sequence(img, (2, 2), 1, (1, 1))
        np.testing.assert_array_equal(seq.frame_image(0), img[:2, :2])

    def test_ramp_crops_match_direct_indexing(self):
        img = (np.arange(16.0) / 15.0).reshape(4, 4)
        seq = shifted_patch_sequence(img, (2, 2), 3, (1, 0))
        for t in range(3):
            np.testing.assert_array_equal(seq.frame_image(t), img[t:t + 2, 0:2])

    def test_out_of_bounds_raises(self):
        img = np.zeros((4, 4))
        with pytest.raises(ValueError):
            shifted_patch_sequence(img, (2, 2), 4, (1, 0))

    def test_integer_image_rescaled(self):
        img = np.full((3, 3), 255, dtype=np.uint8)
        seq = shifted_patch_sequence(img, (2, 2), 1, (0, 0))
        np.testing.assert_array_equal(seq.frames, np.ones((1, 4)))


class TestPsi:
    def test_identity_dynamics_constant_sequence(self):
        model = _identity_model(3, 4, q_sq=1.0)
        x = FrameSequence(np.tile(np.array([1.0, 2.0, 3.0]), (4, 1)))
        out = apply_psi(model, x)
        np.testing.assert_array_equal(out.frames[0], [1, 2, 3])
        np.testing.assert_array_equal(out.frames[1:], np.zeros((3, 3)))

    def test_single_frame_is_identity(self):
        model = _identity_model(3, 1)
        x = FrameSequence(np.array([[1.0, 2.0, 3.0]]))
        np.testing.assert_array_equal(apply_psi(model, x).frames, x.frames)
        np.testing.assert_array_equal(apply_psi_adjoint(model, x).frames, x.frames)

    def test_adjoint_last_frame_only(self):
        model = _identity_model(2, 3, q_sq=1.0)
        u = np.array([5.0, -1.0])
        v = FrameSequence(np.stack([np.zeros(2), np.zeros(2), u]))
        out = apply_psi_adjoint(model, v)
        np.testing.assert_array_equal(out.frames[0], np.zeros(2))
        np.testing.assert_array_equal(out.frames[1], -u)
        np.testing.assert_array_equal(out.frames[2], u)

    def test_matches_block_matrix(self):
        rng = np.random.default_rng(1)
        n, T = 3, 4
        model = random_model(rng, n, 2, T)
        x = FrameSequence(rng.standard_normal((T, n)))
        # independent block-bidiagonal materialization
        psi = np.zeros((n * T, n * T))
        for t in range(T):
            psi[t * n:(t + 1) * n, t * n:(t + 1) * n] = np.eye(n)
            if t > 0:
                psi[t * n:(t + 1) * n, (t - 1) * n:t * n] = -model.A[t - 1].to_dense()
        np.testing.assert_allclose(
            apply_psi(model, x).frames.ravel(), psi @ x.frames.ravel(), atol=1e-12
        )
        v = FrameSequence(rng.standard_normal((T, n)))
        np.testing.assert_allclose(
            apply_psi_adjoint(model, v).frames.ravel(), psi.T @ v.frames.ravel(), atol=1e-12
        )

    def test_inner_product_adjointness(self):
        rng = np.random.default_rng(2)
        model = random_model(rng, 5, 3, 4)
        for _ in range(20):
            x = FrameSequence(rng.standard_normal((4, 5)))
            v = FrameSequence(rng.standard_normal((4, 5)))
            lhs = float(np.sum(apply_psi(model, x).frames * v.frames))
            rhs = float(np.sum(x.frames * apply_psi_adjoint(model, v).frames))
            assert abs(lhs - rhs) / max(abs(lhs), 1e-30) < 1e-10


class TestObjectives:
    def test_F_zero_at_noiseless_truth(self):
        n, T = 3, 4
        m1 = np.array([0.5, 0.25, 0.75])
        gen = _identity_model(n, T, m1=m1)
        truth, meas = simulate(gen, seed=0, initial_state=m1)
        est = _identity_model(n, T, r_sq=1.0, q_sq=1.0, m1=m1)
        assert eval_F(est, meas, truth) == pytest.approx(0.0, abs=1e-30)

    def test_F_single_frame_reduces_to_measurement_term(self):
        rng = np.random.default_rng(3)
        n, m = 4, 3
        model = random_model(rng, n, m, 1)
        x = FrameSequence(rng.standard_normal((1, n)))
        y = FrameSequence(rng.standard_normal((1, m)))
        resid = y.frames[0] - model.H[0].to_dense() @ x.frames[0]
        expected = 0.5 * float(resid @ model.R[0].solve(resid))
        assert eval_F(model, y, x) == pytest.approx(expected, rel=1e-12)

    def test_F_matches_stacked_dense_oracle(self):
        rng = np.random.default_rng(4)
        n, m, T = 4, 3, 3
        model = random_model(rng, n, m, T)
        x = FrameSequence(rng.standard_normal((T, n)))
        y = FrameSequence(rng.standard_normal((T, m)))
        expected = 0.0
        for t in range(T):
            r = y.frames[t] - model.H[t].to_dense() @ x.frames[t]
            expected += 0.5 * r @ np.linalg.inv(model.R[t].to_dense()) @ r
        for t in range(1, T):
            d = x.frames[t] - model.A[t - 1].to_dense() @ x.frames[t - 1]
            expected += 0.5 * d @ np.linalg.inv(model.Q[t - 1].to_dense()) @ d
        assert eval_F(model, y, x) == pytest.approx(expected, rel=1e-10)

    def test_phi_rho_zero_limit(self):
        rng = np.random.default_rng(5)
        model = random_model(rng, 3, 2, 2)
        x = FrameSequence(rng.standard_normal((2, 3)))
        y = FrameSequence(rng.standard_normal((2, 2)))
        z = FrameSequence(rng.standard_normal((2, 3)))
        W = IdentityOp(3)
        prior = 0.5 * float(
            (x.frames[0] - model.m1) @ model.P1.solve(x.frames[0] - model.m1)
        )
        tiny = eval_phi(model, y, x, z, 1e-300, W)
        assert tiny == pytest.approx(eval_F(model, y, x) + prior, rel=1e-12)

    def test_phi_zero_at_consistent_point(self):
        n, T = 3, 3
        m1 = np.array([0.3, 0.6, 0.9])
        gen = _identity_model(n, T, m1=m1)
        truth, meas = simulate(gen, seed=0, initial_state=m1)
        est = _identity_model(n, T, r_sq=1.0, q_sq=1.0, m1=m1)
        z = FrameSequence(truth.frames.copy())
        assert eval_phi(est, meas, truth, z, 2.0, IdentityOp(n)) == pytest.approx(0.0, abs=1e-30)

    def test_phi_matches_term_by_term_oracle(self):
        rng = np.random.default_rng(6)
        n, m, T, rho = 4, 2, 3, 1.7
        model = random_model(rng, n, m, T)
        W = DenseOp(rng.standard_normal((5, n)))
        x = FrameSequence(rng.standard_normal((T, n)))
        y = FrameSequence(rng.standard_normal((T, m)))
        z = FrameSequence(rng.standard_normal((T, 5)))
        expected = eval_F(model, y, x)
        d0 = x.frames[0] - model.m1
        expected += 0.5 * d0 @ np.linalg.inv(model.P1.to_dense()) @ d0
        for t in range(T):
            r = W.to_dense() @ x.frames[t] - z.frames[t]
            expected += 0.5 * rho * r @ r
        assert eval_phi(model, y, x, z, rho, W) == pytest.approx(expected, rel=1e-12)

    def test_phi_nonnegative(self):
        rng = np.random.default_rng(7)
        model = random_model(rng, 3, 3, 3)
        W = IdentityOp(3)
        for _ in range(20):
            x = FrameSequence(rng.standard_normal((3, 3)))
            y = FrameSequence(rng.standard_normal((3, 3)))
            z = FrameSequence(rng.standard_normal((3, 3)))
            assert eval_phi(model, y, x, z, 0.5, W) >= 0.0
