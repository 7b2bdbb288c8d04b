"""Dense float64 arrays, seeded generators and the finite-difference oracle.

numpy's ``ndarray`` is the array type throughout the package; this module only
adds validation helpers and the gradient oracle every analytic gradient is
checked against.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import NonFiniteValue

DTYPE = np.float64


def as_dense(values, *, name: str = "array") -> np.ndarray:
    """Return ``values`` as a contiguous float64 array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(values, dtype=DTYPE)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{name} contains non-finite values")
    return arr


def make_rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    """PCG64 generator; accepts an existing generator unchanged.

    PCG64 streams are specified by numpy and identical across platforms for a
    given seed, which is what the determinism tests rely on.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.PCG64(np.uint64(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child generators derived from one seed."""
    children = np.random.SeedSequence(int(seed)).spawn(n)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def finite_diff_grad(
    f: Callable[[np.ndarray], float], point, step: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function.

    Each coordinate is perturbed by ``+-step`` in turn; ``f`` receives a fresh
    copy so it may not alias the caller's array.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.array(point, dtype=DTYPE)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x.copy()))
        flat[i] = orig - step
        fm = float(f(x.copy()))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteValue(f"f is not finite near coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-8) -> float:
    """Norm-wise relative error ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic, dtype=DTYPE).ravel()
    n = np.asarray(numeric, dtype=DTYPE).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / denom)
