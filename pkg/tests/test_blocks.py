"""Tests for DFSB, UFSB, residual units, recalibration and the patch discriminator."""
import numpy as np
import pytest

from core.errors import ShapeError
from core.gradcheck import check_directional
from core.params import ParamStore
from core.tensor import Tensor, mul, sum_reduce
from network.blocks import (BlockConfig, dfsb_config, dfsb_forward, dfsb_param_count, dfsb_shapes,
                            discriminator_forward, discriminator_param_count,
                            discriminator_shapes, recalibration_forward,
                            recalibration_param_count, recalibration_shapes, resblocks_forward,
                            resblocks_param_count, resblocks_shapes, ufsb_config, ufsb_forward,
                            ufsb_param_count, ufsb_shapes)
from network.relight import count_parameters


def _params(shapes, seed=0, std=0.3, dtype=np.float64):
    return ParamStore.from_shapes(shapes, seed=seed, std=std, dtype=dtype)


def _projected_loss(forward, shape, rng):
    """sum(forward() * R) for a fixed random R of the output shape."""
    weights = Tensor(rng.standard_normal(shape))
    return lambda: sum_reduce(mul(forward(), weights))


def _check(tensors, loss_fn):
    report = check_directional(loss_fn, tensors, samples=20, seed=3)
    assert report.passed(), str(report)


class TestParameterCounts:
    """Enumerated shapes agree with the closed forms."""

    @pytest.mark.parametrize("c", [4, 8, 16, 32])
    @pytest.mark.parametrize("calibration", [True, False])
    def test_dfsb(self, c, calibration):
        shapes = dfsb_shapes("b", dfsb_config(c, calibration=calibration))
        assert count_parameters(shapes) == dfsb_param_count(c, calibration)

    @pytest.mark.parametrize("c", [4, 8, 16, 64])
    @pytest.mark.parametrize("calibration", [True, False])
    def test_ufsb(self, c, calibration):
        shapes = ufsb_shapes("b", ufsb_config(c, calibration=calibration))
        assert count_parameters(shapes) == ufsb_param_count(c, calibration)

    def test_dfsb_closed_form(self):
        assert dfsb_param_count(32) == 69 * 32 * 32 + 6 * 32

    def test_calibration_costs(self):
        """The 1x1 calibration conv adds c^2 + c to either block."""
        assert dfsb_param_count(8) - dfsb_param_count(8, False) == 8 * 8 + 8
        assert ufsb_param_count(8) - ufsb_param_count(8, False) == 8 * 8 + 8

    def test_resblocks(self):
        assert count_parameters(resblocks_shapes("r", 16)) == resblocks_param_count(16)
        assert resblocks_param_count(16) == 162 * 16 * 16 + 18 * 16

    def test_recalibration(self):
        assert count_parameters(recalibration_shapes("s", 80, 4)) == recalibration_param_count(80, 4)
        assert recalibration_param_count(80, 4) == 2 * 80 * 20 + 20 + 80

    def test_discriminator_frozen_count(self):
        assert discriminator_param_count(64) == 2_761_153
        assert count_parameters(discriminator_shapes("d", 64)) == 2_761_153


class TestDFSB:
    """Down-sampling self-calibrated block."""

    def test_output_shape(self, rng):
        cfg = dfsb_config(4)
        params = _params(dfsb_shapes("b", cfg))
        out = dfsb_forward(Tensor(rng.standard_normal((2, 4, 16, 16))), params, "b", cfg)
        assert out.shape == (2, 8, 8, 8)

    def test_odd_spatial_rejected(self, rng):
        cfg = dfsb_config(4)
        params = _params(dfsb_shapes("b", cfg))
        with pytest.raises(ShapeError, match="even"):
            dfsb_forward(Tensor(rng.standard_normal((1, 4, 7, 8))), params, "b", cfg)

    def test_channel_mismatch_rejected(self, rng):
        cfg = dfsb_config(4)
        params = _params(dfsb_shapes("b", cfg))
        with pytest.raises(ShapeError, match="input channels"):
            dfsb_forward(Tensor(rng.standard_normal((1, 3, 8, 8))), params, "b", cfg)

    def test_zero_calibration_weights_give_half(self, rng):
        cfg = dfsb_config(4)
        params = _params(dfsb_shapes("b", cfg))
        params["b.cal.weight"].data[...] = 0.0
        trace = {}
        dfsb_forward(Tensor(rng.standard_normal((1, 4, 8, 8))), params, "b", cfg, trace)
        np.testing.assert_array_equal(trace["b.weight"].data, 0.5)

    def test_open_gate_matches_uncalibrated_block(self, rng):
        """Calibration saturated at +20 reproduces the block without calibration."""
        cfg = dfsb_config(4, normalization="none")
        params = _params(dfsb_shapes("b", cfg))
        params["b.cal.weight"].data[...] = 0.0
        params["b.cal.bias"].data[...] = 20.0
        x = Tensor(rng.standard_normal((1, 4, 8, 8)))
        gated = dfsb_forward(x, params, "b", cfg)
        plain = dfsb_forward(x, params, "b", dfsb_config(4, normalization="none", calibration=False))
        np.testing.assert_allclose(gated.data, plain.data, atol=1e-6)

    def test_closed_gate_leaves_low_resolution_path(self, rng):
        """Calibration saturated at -20 suppresses F_hr: output = F_lr + refine bias."""
        cfg = dfsb_config(4, normalization="none")
        params = _params(dfsb_shapes("b", cfg))
        params["b.cal.weight"].data[...] = 0.0
        params["b.cal.bias"].data[...] = -20.0
        trace = {}
        out = dfsb_forward(Tensor(rng.standard_normal((1, 4, 8, 8))), params, "b", cfg, trace)
        expected = trace["b.f_lr"].data + params["b.refine.bias"].data
        np.testing.assert_allclose(out.data, expected, atol=1e-6)

    @pytest.mark.parametrize("normalization", ["none", "instance"])
    def test_gradients(self, rng, normalization):
        cfg = dfsb_config(4, normalization=normalization, activation_kind="tanh")
        params = _params(dfsb_shapes("b", cfg))
        x = Tensor(rng.standard_normal((1, 4, 8, 8)))
        loss_fn = _projected_loss(lambda: dfsb_forward(x, params, "b", cfg), (1, 8, 4, 4), rng)
        tensors = {"x": x}
        for name, tensor in params.items():
            # Biases feeding instance norm have an identically zero gradient
            if normalization == "instance" and name.endswith(".bias") and ".cal." not in name:
                continue
            tensors[name] = tensor
        _check(tensors, loss_fn)


class TestUFSB:
    """Up-sampling self-calibrated block."""

    def test_output_shape(self, rng):
        cfg = ufsb_config(8)
        params = _params(ufsb_shapes("u", cfg))
        out = ufsb_forward(Tensor(rng.standard_normal((2, 8, 4, 4))), params, "u", cfg)
        assert out.shape == (2, 4, 8, 8)

    def test_odd_channels_rejected(self):
        with pytest.raises(ShapeError, match="even"):
            ufsb_shapes("u", BlockConfig(5, 2))

    def test_zero_calibration_weights_give_half(self, rng):
        cfg = ufsb_config(8)
        params = _params(ufsb_shapes("u", cfg))
        params["u.cal.weight"].data[...] = 0.0
        trace = {}
        ufsb_forward(Tensor(rng.standard_normal((1, 8, 4, 4))), params, "u", cfg, trace)
        np.testing.assert_array_equal(trace["u.weight"].data, 0.5)
        assert trace["u.f_hr"].shape == (1, 4, 8, 8)
        assert trace["u.f_lr"].shape == (1, 8, 4, 4)

    def test_gradients(self, rng):
        cfg = ufsb_config(4, normalization="none", activation_kind="tanh")
        params = _params(ufsb_shapes("u", cfg))
        x = Tensor(rng.standard_normal((1, 4, 4, 4)))
        loss_fn = _projected_loss(lambda: ufsb_forward(x, params, "u", cfg), (1, 2, 8, 8), rng)
        _check({"x": x, **dict(params.items())}, loss_fn)


class TestRoundTrip:
    """A DFSB followed by the matching UFSB returns to the input shape."""

    def test_down_then_up_keeps_shape(self, rng):
        for trial in range(20):
            c = 4 * int(rng.integers(1, 5))
            n = int(rng.integers(1, 3))
            h, w = 2 * int(rng.integers(1, 9)), 2 * int(rng.integers(1, 9))
            normalization = str(rng.choice(["instance", "none"]))
            kind = str(rng.choice(["relu", "leaky_relu", "tanh"]))
            calibration = bool(rng.integers(0, 2))
            down = dfsb_config(c, normalization, kind, calibration)
            up = ufsb_config(2 * c, normalization, kind, calibration)
            params = _params(dfsb_shapes("d", down) + ufsb_shapes("u", up), seed=trial,
                             dtype=np.float32)
            x = Tensor(rng.standard_normal((n, c, h, w)).astype(np.float32))
            mid = dfsb_forward(x, params, "d", down)
            assert mid.shape == (n, 2 * c, h // 2, w // 2)
            out = ufsb_forward(mid, params, "u", up)
            assert out.shape == x.shape
            assert np.isfinite(out.data).all()

class TestResidualAndRecalibration:
    """Bottleneck units and the squeeze-excitation gate."""

    def test_resblocks_preserve_shape(self, rng):
        cfg = BlockConfig(8, 8)
        params = _params(resblocks_shapes("r", 8, units=2))
        out = resblocks_forward(Tensor(rng.standard_normal((1, 8, 4, 4))), params, "r", cfg, units=2)
        assert out.shape == (1, 8, 4, 4)

    def test_resblocks_gradients(self, rng):
        cfg = BlockConfig(4, 4, normalization="none", activation="tanh")
        params = _params(resblocks_shapes("r", 4, units=2))
        x = Tensor(rng.standard_normal((1, 4, 4, 4)))
        loss_fn = _projected_loss(lambda: resblocks_forward(x, params, "r", cfg, units=2),
                              (1, 4, 4, 4), rng)
        _check({"x": x, **dict(params.items())}, loss_fn)

    def test_gate_in_unit_interval(self, rng):
        params = _params(recalibration_shapes("s", 8, 4))
        trace = {}
        out = recalibration_forward(Tensor(rng.standard_normal((2, 8, 5, 5))), params, "s", 4,
                                    trace=trace)
        assert out.shape == (2, 8, 5, 5)
        assert trace["s.gate"].shape == (2, 8, 1, 1)
        assert np.all((trace["s.gate"].data > 0) & (trace["s.gate"].data < 1))

    def test_reduction_must_divide(self):
        with pytest.raises(ShapeError, match="divisible"):
            recalibration_shapes("s", 10, 4)

    def test_recalibration_gradients(self, rng):
        params = _params(recalibration_shapes("s", 8, 4))
        x = Tensor(rng.standard_normal((1, 8, 3, 3)))
        loss_fn = _projected_loss(lambda: recalibration_forward(x, params, "s", 4, "tanh"),
                              (1, 8, 3, 3), rng)
        _check({"x": x, **dict(params.items())}, loss_fn)


class TestDiscriminator:
    """Patch critic geometry and preconditions."""

    @pytest.mark.parametrize("size,patches", [(16, 1), (32, 2), (64, 4)])
    def test_score_map_size(self, rng, size, patches):
        params = _params(discriminator_shapes("d", 4), dtype=np.float32, std=0.02)
        scores = discriminator_forward(Tensor(rng.standard_normal((2, 3, size, size))), params, "d")
        assert scores.shape == (2, 1, patches, patches)

    def test_too_small_rejected(self, rng):
        params = _params(discriminator_shapes("d", 4))
        with pytest.raises(ShapeError, match="minimum"):
            discriminator_forward(Tensor(rng.standard_normal((1, 3, 8, 8))), params, "d")

    def test_needs_three_channels(self, rng):
        params = _params(discriminator_shapes("d", 4))
        with pytest.raises(ShapeError):
            discriminator_forward(Tensor(rng.standard_normal((1, 4, 16, 16))), params, "d")

    def test_gradients(self, rng):
        params = _params(discriminator_shapes("d", 2))
        x = Tensor(rng.standard_normal((1, 3, 16, 16)))
        loss_fn = _projected_loss(lambda: discriminator_forward(x, params, "d", "none"),
                              (1, 1, 1, 1), rng)
        _check({"x": x, **dict(params.items())}, loss_fn)
