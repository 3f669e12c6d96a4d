"""Tests for the numpy convolution kernels against nested-loop references."""
import numpy as np
import pytest

from core import kernels
from tests.test_utils import conv2d_reference, deconv2d_reference


KERNELS = (1, 3, 4, 7, 8, 25)
STRIDES = (1, 2, 4, 8)


def _conv_config(rng):
    """Kernel, stride, padding and an input size the padded kernel fits in."""
    k = int(rng.choice(KERNELS))
    stride = int(rng.choice(STRIDES))
    padding = int(rng.integers(0, k))
    low = max(1, k - 2 * padding)
    size = int(rng.integers(low, low + 12))
    return k, stride, padding, size


def _deconv_config(rng):
    """Padding stays below k/2 so every output has at least one pixel."""
    k = int(rng.choice(KERNELS))
    stride = int(rng.choice(STRIDES))
    padding = int(rng.integers(0, (k + 1) // 2))
    size = int(rng.integers(1, 11))
    return k, stride, padding, size


class TestConvForward:
    """conv2d_forward matches a direct nested-loop evaluation."""

    def test_random_configurations(self, rng):
        """200 random (kernel, stride, padding, size) configurations agree to 1e-10."""
        seen = set()
        for _ in range(200):
            k, stride, padding, size = _conv_config(rng)
            seen.add((k, stride))
            x = rng.standard_normal((2, 3, size, size + 1))
            w = rng.standard_normal((4, 3, k, k))
            b = rng.standard_normal((1, 4, 1, 1))
            got = kernels.conv2d_forward(x, w, b, stride, padding)
            np.testing.assert_allclose(got, conv2d_reference(x, w, b, stride, padding),
                                       rtol=1e-10, atol=1e-10)
        assert {k for k, _ in seen} == set(KERNELS)
        assert {s for _, s in seen} == set(STRIDES)

    def test_identity_kernel(self, rng):
        """A centered delta kernel with same padding returns the input."""
        x = rng.standard_normal((1, 1, 5, 5))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        np.testing.assert_array_equal(kernels.conv2d_forward(x, w, None, 1, 1), x)

    def test_output_size(self):
        assert kernels.conv_output_size(64, 3, 2, 1) == 32
        assert kernels.conv_output_size(64, 7, 1, 3) == 64
        assert kernels.conv_output_size(4, 4, 2, 1) == 2


class TestDeconvForward:
    """deconv2d_forward matches a scatter-add reference."""

    def test_random_configurations(self, rng):
        seen = set()
        for _ in range(200):
            k, stride, padding, size = _deconv_config(rng)
            seen.add((k, stride))
            x = rng.standard_normal((2, 3, size, size))
            w = rng.standard_normal((3, 2, k, k))
            b = rng.standard_normal((1, 2, 1, 1))
            got = kernels.deconv2d_forward(x, w, b, stride, padding)
            np.testing.assert_allclose(got, deconv2d_reference(x, w, b, stride, padding),
                                       rtol=1e-10, atol=1e-10)
        assert {k for k, _ in seen} == set(KERNELS)
        assert {s for _, s in seen} == set(STRIDES)

    @pytest.mark.parametrize("size", [1, 4, 8])
    def test_doubles_resolution(self, size):
        """Kernel 4, stride 2, padding 1 maps h to 2h."""
        assert kernels.deconv_output_size(size, 4, 2, 1) == 2 * size

    def test_multiscale_branch_sizes(self):
        """The fusion branches bring res/8, res/4 and res/2 maps back to res."""
        assert kernels.deconv_output_size(8, 8, 8, 0) == 64
        assert kernels.deconv_output_size(16, 4, 4, 0) == 64
        assert kernels.deconv_output_size(32, 4, 2, 1) == 64


class TestAdjoints:
    """Gradient kernels are the exact adjoints of the forward kernels."""

    def test_conv_input_adjoint(self, rng):
        """<conv(x), y> == <x, conv_grad_input(y)>."""
        for _ in range(50):
            k, stride, padding, size = _conv_config(rng)
            x = rng.standard_normal((2, 3, size, size))
            w = rng.standard_normal((4, 3, k, k))
            out = kernels.conv2d_forward(x, w, None, stride, padding)
            y = rng.standard_normal(out.shape)
            lhs = np.sum(out * y)
            rhs = np.sum(x * kernels.conv2d_grad_input(y, w, x.shape, stride, padding))
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_conv_weight_adjoint(self, rng):
        """<conv_w(x), y> == <w, conv_grad_weight(y, x)>."""
        for _ in range(50):
            k, stride, padding, size = _conv_config(rng)
            x = rng.standard_normal((2, 3, size, size))
            w = rng.standard_normal((4, 3, k, k))
            out = kernels.conv2d_forward(x, w, None, stride, padding)
            y = rng.standard_normal(out.shape)
            lhs = np.sum(out * y)
            rhs = np.sum(w * kernels.conv2d_grad_weight(y, x, k, stride, padding))
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_deconv_adjoint(self, rng):
        """<deconv(x), y> == <x, deconv_grad_input(y)>."""
        for _ in range(50):
            k, stride, padding, size = _deconv_config(rng)
            x = rng.standard_normal((1, 3, size, size))
            w = rng.standard_normal((3, 2, k, k))
            out = kernels.deconv2d_forward(x, w, None, stride, padding)
            y = rng.standard_normal(out.shape)
            lhs = np.sum(out * y)
            rhs = np.sum(x * kernels.deconv2d_grad_input(y, w, stride, padding))
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)

    def test_deterministic(self, rng):
        """Repeated evaluation is bit-identical."""
        x = rng.standard_normal((2, 8, 16, 16)).astype(np.float32)
        w = rng.standard_normal((16, 8, 3, 3)).astype(np.float32)
        first = kernels.conv2d_forward(x, w, None, 2, 1)
        second = kernels.conv2d_forward(x, w, None, 2, 1)
        assert first.tobytes() == second.tobytes()
