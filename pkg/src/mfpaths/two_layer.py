"""Width-averaged two-layer networks: training, dropout, connecting paths.

The model is y(x) = (1/n) * sum_i a_i * act(<w_i, x>), with vector-valued
a_i when there are several outputs. SGD multiplies the gradient by n so the
parameters move O(1) as the width grows, and the step size follows
s_k = alpha * xi(k * alpha).

`dropout` keeps a subset of neurons and replaces the 1/n averaging by
1/|kept|; `build_path` produces the 7-segment piecewise-linear path that
connects two parameter vectors while the loss stays below the endpoint
losses plus the measured half-dropout gaps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .core_math import (ACT_CODES, Activation, RngStream, activation_apply,
                        matvec)
from .datasets import LabeledDataset
from .pathconn import PiecewisePath


class LossKind(str, Enum):
    SQUARE = "square"
    XENT = "xent"


LOSS_CODES = {LossKind.SQUARE: _kernels.LOSS_SQUARE,
              LossKind.XENT: _kernels.LOSS_XENT}


class NonFiniteGradientError(RuntimeError):
    """Raised when an SGD update produces a non-finite gradient."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None
                         else f"{message} (at step {step})")
        self.step = step


@dataclass
class TwoLayerParams:
    """Parameters: a (n, out_dim) output weights, w (n, d) input rows."""

    a: np.ndarray
    w: np.ndarray
    activation: Activation = Activation.SIGMOID

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.a.ndim == 1:
            self.a = self.a[:, None]
        if self.a.ndim != 2 or self.w.ndim != 2 or len(self.a) != len(self.w):
            raise ValueError(
                f"inconsistent parameter shapes a={self.a.shape} w={self.w.shape}"
            )
        self.activation = Activation(self.activation)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.a.shape[1]

    def copy(self) -> "TwoLayerParams":
        return TwoLayerParams(self.a.copy(), self.w.copy(), self.activation)

    def validate(self) -> None:
        if not (np.isfinite(self.a).all() and np.isfinite(self.w).all()):
            raise ValueError("parameters contain non-finite entries")

    @classmethod
    def lerp(cls, p: "TwoLayerParams", q: "TwoLayerParams",
             t: float) -> "TwoLayerParams":
        """Coordinatewise linear interpolation; t=0 and t=1 are bit-exact."""
        if t == 0.0:
            return p.copy()
        if t == 1.0:
            return q.copy()
        return cls((1.0 - t) * p.a + t * q.a,
                   (1.0 - t) * p.w + t * q.w, p.activation)

    # pathconn profiles call these through a small duck-typed protocol
    def loss(self, ds: LabeledDataset, kind: LossKind) -> float:
        return empirical_loss(self, ds, kind)

    def error(self, ds: LabeledDataset) -> float:
        return classification_error(self, ds)


def init_two_layer(n: int, d: int, rng: RngStream, out_dim: int = 1,
                   activation: Activation = Activation.SIGMOID,
                   a_init: str = "uniform", a_bound: float = 1.0,
                   w_std: Optional[float] = None) -> TwoLayerParams:
    """I.i.d. init: a ~ Unif[-a_bound, a_bound] (or +-a_bound when
    a_init='bimodal'), w rows ~ N(0, I/d)."""
    if w_std is None:
        w_std = 1.0 / np.sqrt(d)
    if a_init == "uniform":
        a = rng.uniform(-a_bound, a_bound, (n, out_dim))
    elif a_init == "bimodal":
        a = rng.choice_sign((n, out_dim)) * a_bound
    else:
        raise ValueError(f"unknown a_init {a_init!r}")
    w = rng.normal(0.0, w_std, (n, d))
    return TwoLayerParams(a, w, activation)


def forward_batch(p: TwoLayerParams, x_batch: np.ndarray) -> np.ndarray:
    x_batch = np.ascontiguousarray(x_batch, dtype=np.float64)
    if x_batch.shape[1] != p.d:
        raise ValueError(f"input dim {x_batch.shape[1]} != model dim {p.d}")
    return _kernels.tl_forward(p.a, p.w, x_batch, ACT_CODES[p.activation])


def forward(p: TwoLayerParams, x: np.ndarray) -> np.ndarray:
    """Network output for a single input; returns a length-out_dim vector.

    Reference implementation with a fixed neuron-by-neuron summation order
    (bit-reproducible); batch evaluation goes through the backend kernels.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a single input vector")
    z = activation_apply(p.activation, matvec(p.w, x))
    out = np.zeros(p.out_dim)
    for i in range(p.n):
        out += p.a[i] * z[i]
    return out / p.n


def empirical_loss(p: TwoLayerParams, ds: LabeledDataset,
                   kind: LossKind = LossKind.SQUARE) -> float:
    if len(ds) == 0:
        raise ValueError("empty dataset")
    if ds.d != p.d:
        raise ValueError(f"dataset dim {ds.d} != model dim {p.d}")
    kind = LossKind(kind)
    if kind == LossKind.XENT and p.out_dim < 2:
        raise ValueError("cross-entropy needs out_dim >= 2")
    return float(_kernels.tl_loss(p.a, p.w, ds.x, ds.y,
                                  ACT_CODES[p.activation], LOSS_CODES[kind]))


def classification_error(p: TwoLayerParams, ds: LabeledDataset) -> float:
    """0-1 error: sign for scalar outputs, argmax otherwise."""
    yhat = forward_batch(p, ds.x)
    if p.out_dim == 1:
        pred = yhat[:, 0] >= 0.0
        true = ds.y[:, 0] > 0.0
    else:
        pred = np.argmax(yhat, axis=1)
        true = np.argmax(ds.y, axis=1)
    return float(np.mean(pred != true))


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------

@dataclass
class SgdSchedule:
    """Step sizes s_k = alpha * xi(k * alpha) for k = 0 .. steps-1."""

    alpha: float
    steps: int
    batch: int = 100
    xi: Optional[Callable[[float], float]] = None  # None means xi == 1

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")

    def step_size(self, k: int) -> float:
        s = self.alpha if self.xi is None else self.alpha * self.xi(k * self.alpha)
        if s <= 0:
            raise ValueError(f"schedule gave nonpositive step {s} at step {k}")
        return s

    @property
    def horizon(self) -> float:
        return self.steps * self.alpha


def schedule_for_width(alpha0: float, k0: float, n: int,
                       batch: int = 100,
                       xi: Optional[Callable[[float], float]] = None
                       ) -> SgdSchedule:
    """alpha = alpha0/n with k0*n steps, so the horizon k0*alpha0 is
    width-independent."""
    if alpha0 <= 0 or k0 <= 0:
        raise ValueError(f"alpha0 and k0 must be > 0, got {alpha0}, {k0}")
    return SgdSchedule(alpha=alpha0 / n, steps=int(round(k0 * n)),
                       batch=batch, xi=xi)


def _step(p: TwoLayerParams, x_batch, y_batch, s_k: float,
          kind: LossKind, step: Optional[int] = None
          ) -> tuple[TwoLayerParams, float]:
    loss, ga, gw = _kernels.tl_loss_grad(
        p.a, p.w, x_batch, y_batch, ACT_CODES[p.activation], LOSS_CODES[kind]
    )
    if not (np.isfinite(ga).all() and np.isfinite(gw).all()
            and np.isfinite(loss)):
        raise NonFiniteGradientError("non-finite gradient", step)
    scale = s_k * p.n  # width-scaled mean-field update
    return (
        TwoLayerParams(p.a - scale * ga, p.w - scale * gw, p.activation),
        float(loss),
    )


def sgd_step(p: TwoLayerParams, x_batch: np.ndarray, y_batch: np.ndarray,
             s_k: float, kind: LossKind = LossKind.SQUARE,
             step: Optional[int] = None) -> TwoLayerParams:
    """One width-scaled SGD step on the mean loss of the given batch."""
    if s_k <= 0:
        raise ValueError(f"step size must be > 0, got {s_k}")
    x_batch = np.ascontiguousarray(x_batch, dtype=np.float64)
    y_batch = np.ascontiguousarray(y_batch, dtype=np.float64)
    kind = LossKind(kind)
    return _step(p, x_batch, y_batch, s_k, kind, step)[0]


@dataclass
class TrainResult:
    params: TwoLayerParams
    trace: list  # (step, minibatch loss before the update at that step)
    snapshots: dict = field(default_factory=dict)  # step -> params copy


def train(init: TwoLayerParams, stream, sched: SgdSchedule,
          kind: LossKind = LossKind.SQUARE,
          log_every: Optional[int] = None,
          snapshot_steps: Sequence[int] = ()) -> TrainResult:
    """One-pass SGD: every sample from the stream is used exactly once.

    Deterministic given the initial parameters and the stream. Snapshots are
    taken after the requested number of completed steps (0 = the init).
    """
    kind = LossKind(kind)
    if log_every is None:
        log_every = max(1, sched.steps // 100)
    wanted = set(int(s) for s in snapshot_steps)
    p = init.copy()
    trace: list[tuple[int, float]] = []
    snapshots: dict[int, TwoLayerParams] = {}
    for k in range(sched.steps):
        if k in wanted:
            snapshots[k] = p.copy()
        x_batch, y_batch = stream.next_batch(sched.batch)
        p, loss = _step(p, x_batch, y_batch, sched.step_size(k), kind, step=k)
        if k % log_every == 0:
            trace.append((k, loss))
    if sched.steps in wanted:
        snapshots[sched.steps] = p.copy()
    return TrainResult(p, trace, snapshots)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def check_pattern(kept: Sequence[int], n: int) -> np.ndarray:
    kept = np.asarray(kept, dtype=np.int64)
    if kept.size == 0:
        raise ValueError("dropout pattern must keep at least one neuron")
    if kept.ndim != 1 or np.any(np.diff(kept) <= 0):
        raise ValueError("dropout pattern must be strictly increasing")
    if kept[0] < 0 or kept[-1] >= n:
        raise ValueError(f"dropout indices out of range for n={n}")
    return kept


def first_half_pattern(n: int) -> np.ndarray:
    """The default pattern: keep the first floor(n/2) neurons."""
    if n < 2:
        raise ValueError(f"need n >= 2 to drop half, got n={n}")
    return np.arange(n // 2, dtype=np.int64)


def dropout(p: TwoLayerParams, kept: Sequence[int]) -> TwoLayerParams:
    """Sub-network of the kept neurons; averaging becomes 1/|kept|."""
    kept = check_pattern(kept, p.n)
    return TwoLayerParams(p.a[kept].copy(), p.w[kept].copy(), p.activation)


def dropout_gap(p: TwoLayerParams, kept: Sequence[int], ds: LabeledDataset,
                kind: LossKind = LossKind.SQUARE) -> float:
    """|loss(full) - loss(dropout)| on the given dataset."""
    full = empirical_loss(p, ds, kind)
    dropped = empirical_loss(dropout(p, kept), ds, kind)
    return abs(full - dropped)


# ---------------------------------------------------------------------------
# connecting path
# ---------------------------------------------------------------------------

def build_path(theta: TwoLayerParams,
               theta_prime: TwoLayerParams) -> PiecewisePath:
    """7-segment piecewise-linear path from theta to theta_prime.

    Both endpoints must share the architecture. The construction moves all
    output mass onto the first floor(n/2) neurons (rescaled by n/floor(n/2)),
    rewires input rows only while their output weights are zero, exchanges
    the two identical stacked half-networks, and undoes the same moves on
    the target side. Along the way the loss never exceeds
    max(loss(theta), loss(theta_prime)) plus the larger of the two
    half-dropout gaps; segments whose labels start with "dead:" or "mirror:"
    leave the loss constant, and "convex:" segments are bounded by their
    endpoint losses (the loss is convex in the output weights).

    For odd n the middle neuron carries zero output weight on all interior
    vertices; its input row follows theta on the first three and
    theta_prime afterwards.
    """
    if (theta.n, theta.d, theta.out_dim) != (
            theta_prime.n, theta_prime.d, theta_prime.out_dim):
        raise ValueError(
            f"endpoint shapes differ: ({theta.n},{theta.d},{theta.out_dim}) "
            f"vs ({theta_prime.n},{theta_prime.d},{theta_prime.out_dim})"
        )
    if theta.activation != theta_prime.activation:
        raise ValueError("endpoints use different activations")
    n = theta.n
    if n < 2:
        raise ValueError(f"path construction needs n >= 2, got {n}")
    h = n // 2
    scale = n / h  # 2 for even n
    top = slice(0, h)
    bot = slice(n - h, n)
    odd = n % 2 == 1
    a_p, w_p = theta.a, theta.w
    a_q, w_q = theta_prime.a, theta_prime.w
    act = theta.activation

    a1 = np.zeros_like(a_p)
    a1[top] = scale * a_p[top]
    w2 = w_p.copy()
    w2[bot] = w_q[top]
    a3 = np.zeros_like(a_p)
    a3[bot] = scale * a_q[top]
    w4 = w2.copy()
    w4[top] = w_q[top]
    if odd:
        w4[h] = w_q[h]
    a5 = np.zeros_like(a_p)
    a5[top] = scale * a_q[top]
    w6 = w4.copy()
    w6[bot] = w_q[bot]

    vertices = [
        theta.copy(),
        TwoLayerParams(a1, w_p.copy(), act),
        TwoLayerParams(a1.copy(), w2, act),
        TwoLayerParams(a3, w2.copy(), act),
        TwoLayerParams(a3.copy(), w4, act),
        TwoLayerParams(a5, w4.copy(), act),
        TwoLayerParams(a5.copy(), w6, act),
        theta_prime.copy(),
    ]
    labels = [
        "start",
        "convex: rescale kept output weights, zero the dropped half",
        "dead: load partner's kept input rows under zeroed outputs",
        "convex: transfer output mass onto the partner's kept half",
        "dead: load partner's kept input rows into the zeroed top",
        "mirror: swap the two identical stacked subnetworks",
        "dead: restore partner's dropped input rows",
        "convex: restore partner's output weights",
    ]
    return PiecewisePath(vertices, labels)
