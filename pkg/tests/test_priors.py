import shutil
import sys

import numpy as np
import pytest

from dyninv.priors import (
    Denoiser,
    DenoiserError,
    ProxOp,
    denoise,
    external_denoise,
    make_denoiser,
    prox,
    tv_chambolle,
)
from dyninv.pgm import read_pgm, write_pgm


def _tv_value(img):
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy[:-1, :] = img[1:, :] - img[:-1, :]
    return float(np.sum(np.hypot(gx, gy)))


class TestProx:
    def test_soft_threshold_hand_values(self):
        out = prox(ProxOp("l1", weight=0.5), np.array([2.0, -0.3, 0.0]), scale=1.0)
        np.testing.assert_allclose(out, [1.5, 0.0, 0.0])

    def test_zero_kind_is_identity(self):
        v = np.array([1.0, -2.0, 3.5])
        np.testing.assert_array_equal(prox(ProxOp("zero"), v, 0.7), v)

    def test_sq_l2_shrinkage(self):
        out = prox(ProxOp("sq_l2", weight=1.0), np.array([4.0]), scale=1.0)
        np.testing.assert_allclose(out, [2.0])

    def test_sq_l2_general_scale(self):
        v = np.array([3.0, -6.0])
        gamma, rho = 2.0, 4.0
        out = prox(ProxOp("sq_l2", weight=gamma), v, scale=1.0 / rho)
        np.testing.assert_allclose(out, v / (1.0 + gamma / rho))

    def test_firmly_nonexpansive(self):
        rng = np.random.default_rng(0)
        for kind, weight in [("zero", 1.0), ("l1", 0.7), ("sq_l2", 2.0)]:
            op = ProxOp(kind, weight)
            for _ in range(25):
                u = rng.standard_normal(8)
                v = rng.standard_normal(8)
                pu, pv = prox(op, u, 0.9), prox(op, v, 0.9)
                # firm nonexpansiveness implies the plain contraction
                assert np.sum((pu - pv) ** 2) <= (pu - pv) @ (u - v) + 1e-12
                assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) + 1e-12

    def test_soft_threshold_subgradient_optimality(self):
        rng = np.random.default_rng(1)
        gamma = 0.6
        v = rng.standard_normal(50)
        p = prox(ProxOp("l1", weight=gamma), v, scale=1.0)
        for vi, pi in zip(v, p):
            if pi > 0:
                assert vi - pi == pytest.approx(gamma)
            elif pi < 0:
                assert vi - pi == pytest.approx(-gamma)
            else:
                assert abs(vi) <= gamma + 1e-15

    def test_invalid_kind_rejected(self):
        with pytest.raises(ValueError):
            ProxOp("l2_ball")
        with pytest.raises(ValueError):
            ProxOp("l1", weight=-1.0)


class TestTvChambolle:
    def test_constant_frame_unchanged(self):
        frame = np.full(30, 0.4)
        out = tv_chambolle(frame, (5, 6), weight=0.2, iters=40)
        np.testing.assert_allclose(out, frame, atol=1e-12)

    def test_tiny_weight_returns_input(self):
        rng = np.random.default_rng(2)
        frame = rng.uniform(0, 1, 24)
        out = tv_chambolle(frame, (4, 6), weight=1e-12, iters=20)
        np.testing.assert_allclose(out, frame, atol=1e-10)

    def test_rof_objective_decreases(self):
        rng = np.random.default_rng(3)
        ramp = np.tile(np.linspace(0, 1, 8), (8, 1))
        noisy = ramp + 0.1 * rng.standard_normal((8, 8))
        weight = 0.1
        out = tv_chambolle(noisy.ravel(), (8, 8), weight=weight, iters=50).reshape(8, 8)

        def rof(u):
            return 0.5 * np.sum((u - noisy) ** 2) + weight * _tv_value(u)

        assert rof(out) < rof(noisy)

    def test_variance_reduced_on_noise(self):
        rng = np.random.default_rng(4)
        noisy = 0.5 + 0.2 * rng.standard_normal(64)
        out = tv_chambolle(noisy, (8, 8), weight=0.2, iters=50)
        assert out.var() < noisy.var()


class TestDenoise:
    def test_identity(self):
        rng = np.random.default_rng(5)
        frame = rng.uniform(0, 1, 12)
        out = denoise(Denoiser("identity"), frame, (3, 4), sigma=0.1)
        np.testing.assert_array_equal(out, frame)

    def test_median_removes_single_impulse(self):
        frame = np.full((5, 5), 0.3)
        frame[2, 2] = 1.0
        out = denoise(Denoiser("median3"), frame.ravel(), (5, 5), sigma=0.0)
        np.testing.assert_allclose(out, np.full(25, 0.3))

    def test_gaussian_smooth_preserves_constant(self):
        frame = np.full(36, 0.6)
        out = denoise(Denoiser("gaussian_smooth", smooth_sigma=1.2), frame, (6, 6), sigma=0.0)
        np.testing.assert_allclose(out, frame, atol=1e-12)

    def test_tv_reduces_total_variation_on_step_edge(self):
        rng = np.random.default_rng(6)
        img = np.zeros((8, 8))
        img[:, 4:] = 1.0
        noisy = np.clip(img + 0.15 * rng.standard_normal((8, 8)), 0, 1)
        out = denoise(Denoiser("tv_chambolle", tv_weight=0.1, tv_iters=50),
                      noisy.ravel(), (8, 8), sigma=0.0)
        assert _tv_value(out.reshape(8, 8)) <= _tv_value(noisy)

    def test_clamp_behaviour(self):
        frame = np.array([-0.5, 0.5, 1.5, 0.0])
        out = denoise(Denoiser("identity"), frame, (2, 2), sigma=0.0)
        np.testing.assert_array_equal(out, [0.0, 0.5, 1.0, 0.0])
        out_raw = denoise(Denoiser("identity", clamp=False), frame, (2, 2), sigma=0.0)
        np.testing.assert_array_equal(out_raw, frame)

    def test_empirical_lipschitz_identity_median(self):
        rng = np.random.default_rng(7)
        for kind in ("identity", "median3"):
            d = Denoiser(kind, clamp=False)
            for _ in range(20):
                u = rng.uniform(0, 1, 36)
                v = rng.uniform(0, 1, 36)
                du = denoise(d, u, (6, 6), 0.0)
                dv = denoise(d, v, (6, 6), 0.0)
                assert np.linalg.norm(du - dv) <= np.linalg.norm(u - v) + 1e-9

    def test_gaussian_smooth_operator_norm_at_most_one(self):
        d = Denoiser("gaussian_smooth", smooth_sigma=1.0, clamp=False)
        n = 30
        dense = np.empty((n, n))
        e = np.zeros(n)
        for i in range(n):
            e[i] = 1.0
            dense[:, i] = denoise(d, e, (5, 6), 0.0)
            e[i] = 0.0
        assert np.linalg.norm(dense, 2) <= 1.0 + 1e-9

    def test_tv_empirical_nonexpansive(self):
        rng = np.random.default_rng(8)
        d = Denoiser("tv_chambolle", tv_weight=0.1, tv_iters=50, clamp=False)
        for _ in range(10):
            u = rng.uniform(0, 1, 36)
            v = rng.uniform(0, 1, 36)
            du = denoise(d, u, (6, 6), 0.0)
            dv = denoise(d, v, (6, 6), 0.0)
            assert np.linalg.norm(du - dv) <= np.linalg.norm(u - v) + 1e-6

    def test_make_denoiser_registry(self):
        assert make_denoiser("median3").kind == "median3"
        d = make_denoiser({"kind": "tv_chambolle", "tv_weight": 0.2})
        assert d.tv_weight == 0.2
        with pytest.raises(ValueError):
            make_denoiser({"kind": "drunet"})
        with pytest.raises(ValueError):
            Denoiser("external")  # needs a command


class TestExternalDenoiser:
    def test_copy_command_is_identity_up_to_quantization(self, tmp_path):
        cp = shutil.which("cp")
        assert cp is not None
        rng = np.random.default_rng(9)
        frame = rng.uniform(0, 1, 20)
        out = external_denoise(f"{cp} frame_in.pgm frame_out.pgm", frame, (4, 5),
                               sigma=0.1, workdir=str(tmp_path))
        assert np.abs(out - frame).max() <= 1.0 / 65535

    def test_missing_command_reports_command_string(self, tmp_path):
        with pytest.raises(DenoiserError, match="no_such_denoiser_binary"):
            external_denoise("no_such_denoiser_binary", np.zeros(4), (2, 2),
                             sigma=0.1, workdir=str(tmp_path))

    def test_failing_command_reports_exit_code(self, tmp_path):
        cmd = f"{sys.executable} -c 'import sys; sys.exit(7)'"
        with pytest.raises(DenoiserError, match="exited 7"):
            external_denoise(cmd, np.zeros(4), (2, 2), sigma=0.1, workdir=str(tmp_path))

    def test_no_output_file_detected(self, tmp_path):
        cmd = f"{sys.executable} -c 'pass'"
        with pytest.raises(DenoiserError, match="frame_out.pgm"):
            external_denoise(cmd, np.zeros(4), (2, 2), sigma=0.1, workdir=str(tmp_path))

    def test_wrong_dims_detected(self, tmp_path):
        script = tmp_path / "bad_dims.py"
        script.write_text(
            "import numpy as np\n"
            "import sys\n"
            "sys.path.insert(0, {!r})\n"
            "from dyninv.pgm import write_pgm\n"
            "write_pgm('frame_out.pgm', np.zeros((3, 3)))\n".format(
                str(__import__("pathlib").Path(__file__).resolve().parents[1] / "src")
            )
        )
        cmd = f"{sys.executable} {script}"
        with pytest.raises(DenoiserError, match="shape"):
            external_denoise(cmd, np.zeros(4), (2, 2), sigma=0.1, workdir=str(tmp_path))

    def test_sidecar_metadata_written(self, tmp_path):
        import json

        cp = shutil.which("cp")
        external_denoise(f"{cp} frame_in.pgm frame_out.pgm", np.zeros(6), (2, 3),
                         sigma=0.25, workdir=str(tmp_path))
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta == {"sigma": 0.25, "width": 3, "height": 2}


class TestPgmRoundTrip:
    def test_16bit_quantization_bound(self, tmp_path):
        rng = np.random.default_rng(10)
        img = rng.uniform(0, 1, (7, 9))
        path = tmp_path / "f.pgm"
        write_pgm(path, img, bits=16)
        back = read_pgm(path)
        assert back.shape == (7, 9)
        assert np.abs(back - img).max() <= 1.0 / 65535

    def test_8bit_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        img = rng.uniform(0, 1, (4, 4))
        path = tmp_path / "f8.pgm"
        write_pgm(path, img, bits=8)
        back = read_pgm(path)
        assert np.abs(back - img).max() <= 1.0 / 255

    def test_16bit_is_big_endian(self, tmp_path):
        path = tmp_path / "endian.pgm"
        write_pgm(path, np.array([[1.0]]), bits=16)
        raw = path.read_bytes()
        assert raw.endswith(b"\xff\xff")
        write_pgm(path, np.array([[128.0 / 65535.0]]), bits=16)
        raw = path.read_bytes()
        assert raw.endswith(b"\x00\x80")
