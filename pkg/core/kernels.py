"""Dense 2-D convolution kernels on NCHW numpy arrays.

All kernels work one kernel row at a time: the strided windows of a row are
gathered with ``sliding_window_view`` and contracted with ``tensordot``, so the
gathered buffer holds k (not k*k) shifted copies of the input. Summation order
is fixed, which keeps results bit-identical for a fixed BLAS thread count.

A transposed convolution is the input-gradient of a convolution, so the three
convolution kernels below also implement every deconvolution path.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def deconv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + kernel


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _row_windows(xp: np.ndarray, row: int, kernel: int, stride: int,
                 out_h: int, out_w: int) -> np.ndarray:
    """Windows under kernel row ``row``, shaped (n, c, out_h, out_w, kernel)."""
    rows = xp[:, :, row:row + stride * (out_h - 1) + 1:stride, :]
    windows = sliding_window_view(rows, kernel, axis=3)
    return windows[:, :, :, :stride * (out_w - 1) + 1:stride, :]


def conv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
                   stride: int, padding: int) -> np.ndarray:
    """Zero-padded cross-correlation; weight is (c_out, c_in, k, k)."""
    n, _, h, w = x.shape
    c_out, _, k, _ = weight.shape
    out_h = conv_output_size(h, k, stride, padding)
    out_w = conv_output_size(w, k, stride, padding)
    xp = _pad(x, padding)

    out = np.zeros((n, out_h, out_w, c_out), dtype=x.dtype)
    for i in range(k):
        windows = _row_windows(xp, i, k, stride, out_h, out_w)
        out += np.tensordot(windows, weight[:, :, i, :], axes=([1, 4], [1, 2]))
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.reshape(1, c_out, 1, 1)
    return out


def conv2d_grad_input(grad_out: np.ndarray, weight: np.ndarray,
                      input_shape: tuple[int, int, int, int],
                      stride: int, padding: int) -> np.ndarray:
    """Adjoint of conv2d_forward with respect to its input."""
    n, c_in, h, w = input_shape
    k = weight.shape[2]
    out_h, out_w = grad_out.shape[2], grad_out.shape[3]
    span_h = stride * (out_h - 1) + 1
    span_w = stride * (out_w - 1) + 1

    grad_xp = np.zeros((n, c_in, h + 2 * padding, w + 2 * padding), dtype=grad_out.dtype)
    for i in range(k):
        # cols[n, c, oh, ow, j] = sum_o grad_out[n, o, oh, ow] * weight[o, c, i, j]
        cols = np.tensordot(grad_out, weight[:, :, i, :], axes=([1], [0]))
        cols = cols.transpose(0, 3, 1, 2, 4)
        for j in range(k):
            grad_xp[:, :, i:i + span_h:stride, j:j + span_w:stride] += cols[..., j]
    return np.ascontiguousarray(grad_xp[:, :, padding:padding + h, padding:padding + w])


def conv2d_grad_weight(grad_out: np.ndarray, x: np.ndarray, kernel: int,
                       stride: int, padding: int) -> np.ndarray:
    """Gradient of conv2d_forward with respect to a (c_out, c_in, k, k) weight."""
    c_out = grad_out.shape[1]
    c_in = x.shape[1]
    out_h, out_w = grad_out.shape[2], grad_out.shape[3]
    xp = _pad(x, padding)

    grad_w = np.zeros((c_out, c_in, kernel, kernel), dtype=grad_out.dtype)
    for i in range(kernel):
        windows = _row_windows(xp, i, kernel, stride, out_h, out_w)
        grad_w[:, :, i, :] = np.tensordot(grad_out, windows, axes=([0, 2, 3], [0, 2, 3]))
    return grad_w


def deconv2d_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
                     stride: int, padding: int) -> np.ndarray:
    """Transposed convolution; weight is (c_in, c_out, k, k)."""
    n, _, h, w = x.shape
    _, c_out, k, _ = weight.shape
    out_shape = (n, c_out,
                 deconv_output_size(h, k, stride, padding),
                 deconv_output_size(w, k, stride, padding))
    out = conv2d_grad_input(x, weight, out_shape, stride, padding)
    if bias is not None:
        out += bias.reshape(1, c_out, 1, 1)
    return out


def deconv2d_grad_input(grad_out: np.ndarray, weight: np.ndarray,
                        stride: int, padding: int) -> np.ndarray:
    return conv2d_forward(grad_out, weight, None, stride, padding)


def deconv2d_grad_weight(grad_out: np.ndarray, x: np.ndarray,
                         stride: int, padding: int, kernel: int) -> np.ndarray:
    # Roles swap: the deconv input plays the conv output gradient
    return conv2d_grad_weight(x, grad_out, kernel, stride, padding)
