#!/usr/bin/env python3
"""Quick numerical self-check of the engine: gradients, kernel adjoints, metric oracles."""

import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from utils.environment import pin_threads

pin_threads()

import numpy as np  # noqa: E402

from analysis.metrics import mps, psnr  # noqa: E402
from core import kernels  # noqa: E402
from core.gradcheck import check_directional, check_op  # noqa: E402
from core.params import ParamStore  # noqa: E402
from core.tensor import Tensor, conv2d, deconv2d, instance_norm, sum_reduce, mul  # noqa: E402
from network.blocks import dfsb_config, dfsb_forward, dfsb_shapes  # noqa: E402


def _tensor(rng, shape):
    return Tensor(rng.standard_normal(shape))


def check_gradients(rng) -> list[tuple[str, bool, str]]:
    results = []
    x, w, b = _tensor(rng, (2, 3, 6, 6)), _tensor(rng, (4, 3, 3, 3)), _tensor(rng, (1, 4, 1, 1))
    report = check_op(lambda x, w, b: conv2d(x, w, b, stride=2, padding=1), [x, w, b])
    results.append(("conv2d gradient", report.passed(), str(report)))

    x, w = _tensor(rng, (1, 4, 3, 3)), _tensor(rng, (4, 2, 4, 4))
    report = check_op(lambda x, w: deconv2d(x, w, stride=2, padding=1), [x, w])
    results.append(("deconv2d gradient", report.passed(), str(report)))

    report = check_op(instance_norm, [_tensor(rng, (2, 3, 4, 4))])
    results.append(("instance_norm gradient", report.passed(), str(report)))

    cfg = dfsb_config(4, normalization="none", activation_kind="tanh")
    params = ParamStore.from_shapes(dfsb_shapes("dfsb", cfg), seed=3, std=0.3, dtype=np.float64)
    x = _tensor(rng, (1, 4, 8, 8))
    weights = Tensor(rng.standard_normal((1, 8, 4, 4)))
    tensors = {"x": x, **dict(params.items())}
    report = check_directional(lambda: sum_reduce(mul(dfsb_forward(x, params, "dfsb", cfg), weights)),
                               tensors)
    results.append(("DFSB directional gradient", report.passed(), str(report)))
    return results


def check_adjoints(rng) -> list[tuple[str, bool, str]]:
    """<conv(x), y> == <x, conv^T(y)> for random configurations."""
    worst = 0.0
    for _ in range(25):
        k = int(rng.integers(1, 6))
        stride = int(rng.integers(1, 4))
        padding = int(rng.integers(0, k))
        size = int(rng.integers(k, 10))
        x = rng.standard_normal((2, 3, size, size))
        w = rng.standard_normal((4, 3, k, k))
        out = kernels.conv2d_forward(x, w, None, stride, padding)
        y = rng.standard_normal(out.shape)
        lhs = float(np.sum(out * y))
        rhs = float(np.sum(x * kernels.conv2d_grad_input(y, w, x.shape, stride, padding)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-12))
    return [("conv2d adjoint", worst < 1e-10, f"max rel err {worst:.3e}")]


def check_oracles() -> list[tuple[str, bool, str]]:
    a = np.zeros((16, 16, 3))
    b = np.full((16, 16, 3), 0.1)
    results = [("psnr(0, 0.1) == 20 dB", abs(psnr(a, b) - 20.0) < 1e-9, f"{psnr(a, b):.6f}")]
    value = mps(0.6487, 0.3794)
    results.append(("mps(0.6487, 0.3794) == 0.6347", abs(value - 0.6347) <= 5e-5 + 1e-12,
                    f"{value:.6f}"))
    return results


def quick_validation() -> bool:
    print("🔍 Running quick validation...")
    rng = np.random.default_rng(0)
    results = check_gradients(rng) + check_adjoints(rng) + check_oracles()
    for name, ok, detail in results:
        print(f"{'✅' if ok else '❌'} {name}: {detail}")

    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print(f"\n❌ {len(failed)} check(s) failed: {', '.join(failed)}")
        return False
    print(f"\n🎉 All {len(results)} checks passed")
    return True


if __name__ == "__main__":
    sys.exit(0 if quick_validation() else 1)
