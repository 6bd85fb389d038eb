"""Activations, reproducible random streams, and fixed-order linear algebra.

Everything downstream (models, trainers, the particle integrator) routes its
elementwise nonlinearities and randomness through this module so that runs
are bit-reproducible from a seed.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .backend import njit_or_identity


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"
    RELU = "relu"
    IDENTITY = "identity"


# integer codes shared with the jitted kernels
ACT_CODES = {
    Activation.SIGMOID: 0,
    Activation.TANH: 1,
    Activation.RELU: 2,
    Activation.IDENTITY: 3,
}


def _apply_arr(kind: Activation, x: np.ndarray) -> np.ndarray:
    if kind == Activation.SIGMOID:
        # branch on sign to avoid exp overflow for large |x|
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    if kind == Activation.TANH:
        return np.tanh(x)
    if kind == Activation.RELU:
        return np.maximum(x, 0.0)
    if kind == Activation.IDENTITY:
        return x.copy()
    raise ValueError(f"unknown activation kind: {kind!r}")


def _grad_arr(kind: Activation, x: np.ndarray) -> np.ndarray:
    if kind == Activation.SIGMOID:
        s = _apply_arr(kind, x)
        return s * (1.0 - s)
    if kind == Activation.TANH:
        t = np.tanh(x)
        return 1.0 - t * t
    if kind == Activation.RELU:
        return (x > 0).astype(np.float64)
    if kind == Activation.IDENTITY:
        return np.ones_like(x)
    raise ValueError(f"unknown activation kind: {kind!r}")


def activation_apply(kind: Activation, x):
    """Apply the activation elementwise; accepts scalars or arrays."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return float(_apply_arr(kind, arr[None])[0])
    return _apply_arr(kind, arr)


def activation_grad(kind: Activation, x):
    """Derivative of the activation at x (ReLU uses 0 at the kink)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        return float(_grad_arr(kind, arr[None])[0])
    return _grad_arr(kind, arr)


def _matvec_loops(m, v, out):
    # summation strictly left-to-right; keep in sync with the test oracle
    for i in range(m.shape[0]):
        acc = 0.0
        for j in range(m.shape[1]):
            acc += m[i, j] * v[j]
        out[i] = acc
    return out


_matvec_jit = njit_or_identity(_matvec_loops)


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product with a fixed left-to-right summation order.

    Bit-reproducible across runs and backends; use for small reference
    computations, not for batch-sized hot paths.
    """
    m = np.ascontiguousarray(m, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(
            f"incompatible shapes for matvec: {m.shape} x {v.shape}"
        )
    out = np.empty(m.shape[0], dtype=np.float64)
    from .backend import use_numba

    if use_numba():
        return _matvec_jit(m, v, out)
    return _matvec_loops(m, v, out)


class RngStream:
    """Seeded random stream with deterministic, platform-stable draws.

    Wraps numpy's PCG64 generator. Not shareable between concurrent
    consumers; derive independent child streams with :meth:`child`.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self.seed))
        )

    def child(self, key: int) -> "RngStream":
        """Derive an independent stream; same (seed, key) gives the same stream."""
        ss = np.random.SeedSequence([self.seed, int(key)])
        return RngStream(int(ss.generate_state(1, dtype=np.uint64)[0]))

    def normal(self, mean=0.0, std=1.0, size=None):
        return mean + std * self._gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def integers(self, low, high, size=None):
        return self._gen.integers(low, high, size=size)

    def choice_sign(self, size=None):
        """Uniform draws from {-1.0, +1.0}."""
        return self._gen.integers(0, 2, size=size) * 2.0 - 1.0

    def permutation(self, m: int) -> np.ndarray:
        return self._gen.permutation(m)


def gaussian_draw(rng: RngStream, mean: float, std: float) -> float:
    """One draw from N(mean, std^2); std = 0 returns the mean exactly."""
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    return float(rng.normal(mean, std))
