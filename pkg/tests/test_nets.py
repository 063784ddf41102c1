"""Tests for the shared network code: forward/backward passes against finite
differences, softmax utilities, Adam, and the checkpoint container."""

import numpy as np
import pytest

from aionav import nets


def f64_params(params):
    return {k: v.astype(np.float64) for k, v in params.items()}


def rel_err(a, b):
    denom = max(abs(a) + abs(b), 1e-8)
    return abs(a - b) / denom


def check_gradients(params, loss_and_grads, rng, per_tensor=4, h=1e-5,
                    tol=1e-3):
    """Compare analytic gradients with central differences on a random
    subset of elements of every tensor."""
    _, grads = loss_and_grads(params)
    for name in sorted(params):
        flat = params[name].ravel()
        idxs = rng.choice(flat.size, size=min(per_tensor, flat.size),
                          replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            up, _ = loss_and_grads(params)
            flat[i] = orig - h
            down, _ = loss_and_grads(params)
            flat[i] = orig
            fd = (up - down) / (2 * h)
            an = grads[name].ravel()[i]
            if abs(fd) < 1e-10 and abs(an) < 1e-10:
                continue
            assert rel_err(fd, an) < tol, (
                f"{name}[{i}]: analytic {an} vs finite-diff {fd}")


class TestShapes:
    """Static layer geometry."""

    def test_conv_output_length(self):
        assert nets.CONV_OUT_LEN == 43
        assert nets.CONV_FILTERS * nets.CONV_OUT_LEN == 688

    def test_reactive_param_shapes(self):
        params = nets.init_reactive_params(np.random.default_rng(0))
        shapes = nets.param_shapes(params)
        assert shapes["reactive.scan.conv.w"] == (16, 5)
        assert shapes["reactive.scan.fc.w"] == (688, 64)
        assert shapes["reactive.pi.w1"] == (66, 128)
        assert shapes["reactive.pi.w3"] == (64, 9)
        assert shapes["reactive.v.w3"] == (64, 1)

    def test_switch_param_shapes(self):
        params = nets.init_switch_params(np.random.default_rng(0), 2)
        shapes = nets.param_shapes(params)
        assert shapes["switch.dyn.conv.w"] == (16, 5)
        assert shapes["switch.static.fc.w"] == (688, 64)
        assert shapes["switch.pi.w1"] == (132, 128)
        assert shapes["switch.pi.w3"] == (64, 2)
        assert shapes["switch.v.w3"] == (64, 1)

    def test_forward_switch_shapes(self):
        params = nets.init_switch_params(np.random.default_rng(1), 2)
        rng = np.random.default_rng(2)
        logits, values = nets.forward_switch(
            params, rng.random((3, 90)), rng.random((3, 90)),
            rng.random((3, 4)))
        assert logits.shape == (3, 2)
        assert values.shape == (3,)

    def test_forward_reactive_shapes(self):
        params = nets.init_reactive_params(np.random.default_rng(1))
        rng = np.random.default_rng(2)
        logits, values = nets.forward_reactive(
            params, rng.random((2, 90)), rng.random((2, 2)))
        assert logits.shape == (2, 9)
        assert values.shape == (2,)

    def test_init_is_reproducible(self):
        a = nets.init_switch_params(np.random.default_rng(5), 2)
        b = nets.init_switch_params(np.random.default_rng(5), 2)
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestGradients:
    """Analytic backward passes against finite differences in float64."""

    def test_switch_gradients(self):
        rng = np.random.default_rng(10)
        params = f64_params(nets.init_switch_params(rng, 2))
        dyn = rng.random((2, 90))
        static = rng.random((2, 90))
        feats = rng.random((2, 4))
        d_logits = rng.standard_normal((2, 2))
        d_values = rng.standard_normal(2)

        def loss_and_grads(p):
            (logits, values), cache = nets.forward_switch(
                p, dyn, static, feats, need_cache=True)
            loss = float((d_logits * logits).sum() + (d_values * values).sum())
            grads = nets.backward_switch(p, cache, d_logits, d_values)
            return loss, grads

        check_gradients(params, loss_and_grads, rng)

    def test_reactive_gradients(self):
        rng = np.random.default_rng(11)
        params = f64_params(nets.init_reactive_params(rng))
        scan = rng.random((2, 90))
        feats = rng.random((2, 2))
        d_logits = rng.standard_normal((2, 9))
        d_values = rng.standard_normal(2)

        def loss_and_grads(p):
            (logits, values), cache = nets.forward_reactive(
                p, scan, feats, need_cache=True)
            loss = float((d_logits * logits).sum() + (d_values * values).sum())
            grads = nets.backward_reactive(p, cache, d_logits, d_values)
            return loss, grads

        check_gradients(params, loss_and_grads, rng)

    def test_backward_covers_every_parameter(self):
        rng = np.random.default_rng(12)
        params = nets.init_switch_params(rng, 2)
        (logits, values), cache = nets.forward_switch(
            params, rng.random((1, 90)), rng.random((1, 90)),
            rng.random((1, 4)), need_cache=True)
        grads = nets.backward_switch(params, cache, np.ones_like(logits),
                                     np.ones_like(values))
        assert set(grads) == set(params)
        for k in grads:
            assert grads[k].shape == params[k].shape


class TestSoftmax:
    """Numerically stable (log-)softmax."""

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        p = nets.softmax(rng.standard_normal((5, 9)))
        assert (p >= 0).all()
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, rtol=1e-12)

    def test_shift_invariance(self):
        x = np.array([[1.0, 2.0, 3.0]])
        np.testing.assert_allclose(nets.softmax(x), nets.softmax(x + 100.0),
                                   rtol=1e-12)

    def test_large_logits_do_not_overflow(self):
        p = nets.softmax(np.array([[1000.0, 999.0, -1000.0]]))
        assert np.isfinite(p).all()
        assert p[0, 0] > p[0, 1] > p[0, 2]

    def test_log_softmax_matches_log_of_softmax(self):
        x = np.random.default_rng(1).standard_normal((4, 7))
        np.testing.assert_allclose(nets.log_softmax(x),
                                   np.log(nets.softmax(x)), atol=1e-12)


class TestAdam:
    """First-order optimizer behavior."""

    def test_zero_learning_rate_is_identity(self):
        params = nets.init_reactive_params(np.random.default_rng(3))
        grads = {k: np.ones_like(v) for k, v in params.items()}
        out = nets.Adam(lr=0.0).step(params, grads)
        assert all(np.array_equal(out[k], params[k]) for k in params)

    def test_first_step_moves_against_gradient_sign(self):
        params = {"w": np.array([1.0, -1.0], dtype=np.float32)}
        grads = {"w": np.array([0.5, -2.0])}
        opt = nets.Adam(lr=0.01)
        out = opt.step(params, grads)
        assert out["w"][0] < params["w"][0]
        assert out["w"][1] > params["w"][1]
        assert out["w"][0] == pytest.approx(1.0 - 0.01, abs=1e-5)
        assert out["w"][1] == pytest.approx(-1.0 + 0.01, abs=1e-5)

    def test_zero_gradient_leaves_params(self):
        params = {"w": np.array([2.0], dtype=np.float32)}
        out = nets.Adam(lr=0.1).step(params, {"w": np.zeros(1)})
        assert out["w"][0] == pytest.approx(2.0)

    def test_step_counter_advances(self):
        opt = nets.Adam()
        params = {"w": np.zeros(1, dtype=np.float32)}
        opt.step(params, {"w": np.ones(1)})
        opt.step(params, {"w": np.ones(1)})
        assert opt.t == 2


class TestCheckpoint:
    """Binary container round-trips and corruption handling."""

    def params(self):
        return nets.init_reactive_params(np.random.default_rng(8))

    def test_round_trip_is_exact(self, tmp_path):
        params = self.params()
        path = tmp_path / "p.bin"
        nets.save_checkpoint(path, params)
        loaded = nets.load_checkpoint(path)
        assert list(loaded) == list(params)
        for k in params:
            assert loaded[k].dtype == np.float32
            assert np.array_equal(loaded[k], params[k])

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(nets.CheckpointError):
            nets.load_checkpoint(tmp_path / "absent.bin")

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "p.bin"
        path.write_bytes(b"NOTMAGIC" + b"\x00" * 32)
        with pytest.raises(nets.CheckpointError, match="magic"):
            nets.load_checkpoint(path)

    def test_missing_manifest_terminator_rejected(self, tmp_path):
        path = tmp_path / "p.bin"
        path.write_bytes(nets.CKPT_MAGIC + b'{"w":[1]}')
        with pytest.raises(nets.CheckpointError, match="terminator"):
            nets.load_checkpoint(path)

    def test_garbage_manifest_rejected(self, tmp_path):
        path = tmp_path / "p.bin"
        path.write_bytes(nets.CKPT_MAGIC + b"not json\n" + b"\x00" * 4)
        with pytest.raises(nets.CheckpointError, match="manifest"):
            nets.load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path):
        params = self.params()
        path = tmp_path / "p.bin"
        nets.save_checkpoint(path, params)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(nets.CheckpointError, match="truncated"):
            nets.load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        params = self.params()
        path = tmp_path / "p.bin"
        nets.save_checkpoint(path, params)
        path.write_bytes(path.read_bytes() + b"\x00\x00")
        with pytest.raises(nets.CheckpointError, match="trailing"):
            nets.load_checkpoint(path)

    def test_expected_shapes_enforced(self, tmp_path):
        params = self.params()
        path = tmp_path / "p.bin"
        nets.save_checkpoint(path, params)
        want = nets.param_shapes(params)
        nets.load_checkpoint(path, expected_shapes=want)
        missing = dict(want)
        missing["reactive.extra"] = (1,)
        with pytest.raises(nets.CheckpointError, match="missing"):
            nets.load_checkpoint(path, expected_shapes=missing)
        wrong = dict(want)
        wrong["reactive.pi.w1"] = (1, 1)
        with pytest.raises(nets.CheckpointError, match="shape"):
            nets.load_checkpoint(path, expected_shapes=wrong)

    def test_scalar_tensor_round_trip(self, tmp_path):
        path = tmp_path / "s.bin"
        nets.save_checkpoint(path, {"x": np.float32(2.5).reshape(())})
        loaded = nets.load_checkpoint(path)
        assert loaded["x"].shape == ()
        assert loaded["x"] == np.float32(2.5)
