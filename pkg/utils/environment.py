"""Runtime environment setup: numeric thread pinning."""

import os

THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def requested_threads(default: int = 1) -> int:
    """Thread count requested through RELIGHT_THREADS (falls back to default)."""
    raw = os.environ.get("RELIGHT_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        return default
    return value if value > 0 else default


def pin_threads(count: int | None = None) -> int:
    """Pin BLAS/OpenMP pools to a fixed size.

    Only effective before numpy is first imported. Kernel results are
    bit-deterministic for a fixed thread count, so every entry point pins
    before importing the engine.
    """
    count = count or requested_threads()
    for var in THREAD_ENV_VARS:
        os.environ[var] = str(count)
    return count