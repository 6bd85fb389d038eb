"""Deep width-averaged networks with frozen/scaled layer training and the
block-structured connecting-path construction.

The model stacks L hidden layers of width n between an input layer and a
linear readout:

    z1 = act1(W1 x),   z[l+1] = act[l+1]((1/n) W[l+1] z[l]),
    y(x) = (1/n) W[L+1] z[L].

Middle-layer gradients are amplified by n^2 and first/last by n (or kept
frozen in the theory mask), so every trained layer moves O(1) as n grows.

Dropout keeps index subsets per hidden layer and replaces each 1/n by
1/|kept|. `build_path` connects two parameter vectors by elementary moves,
one weight block per segment: blocks feeding dead neurons are rewritten
freely, doubled kept blocks are mirrored into dead quadrants, and the only
segments on which the loss can rise are readout-layer moves, which are
convex and bounded via the measured dropout gaps.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._kernels import _np_act, _np_act_grad_from_value, _np_loss_terms
from .core_math import ACT_CODES, Activation, RngStream
from .datasets import LabeledDataset
from .pathconn import PiecewisePath
from .two_layer import (LOSS_CODES, LossKind, NonFiniteGradientError,
                        SgdSchedule)


@dataclass
class MultilayerParams:
    """Weight matrices W1 (n, d_in), W2..WL (n, n), W[L+1] (d_out, n), with
    one activation per hidden layer."""

    weights: list
    activations: list

    def __post_init__(self):
        self.weights = [np.ascontiguousarray(w, dtype=np.float64)
                        for w in self.weights]
        self.activations = [Activation(a) for a in self.activations]
        if len(self.weights) < 2:
            raise ValueError("need at least two weight matrices")
        if len(self.activations) != len(self.weights) - 1:
            raise ValueError(
                f"{len(self.activations)} activations for "
                f"{len(self.weights)} weight matrices"
            )
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(
                    f"weight shapes do not chain at layer {i + 1}: "
                    f"{self.weights[i - 1].shape} -> {self.weights[i].shape}"
                )

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.weights) - 1

    @property
    def n(self) -> int:
        return self.weights[0].shape[0]

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[0]

    def is_uniform(self) -> bool:
        n = self.n
        return all(w.shape[0] == n for w in self.weights[:-1]) and all(
            w.shape[1] == n for w in self.weights[1:]
        )

    def copy(self) -> "MultilayerParams":
        return MultilayerParams([w.copy() for w in self.weights],
                                list(self.activations))

    def validate(self) -> None:
        for i, w in enumerate(self.weights):
            if not np.isfinite(w).all():
                raise ValueError(f"non-finite entries in weight matrix {i + 1}")

    @classmethod
    def lerp(cls, p: "MultilayerParams", q: "MultilayerParams",
             t: float) -> "MultilayerParams":
        if t == 0.0:
            return p.copy()
        if t == 1.0:
            return q.copy()
        return cls([(1.0 - t) * wp + t * wq
                    for wp, wq in zip(p.weights, q.weights)],
                   list(p.activations))

    def loss(self, ds: LabeledDataset, kind: LossKind) -> float:
        return empirical_loss(self, ds, kind)

    def error(self, ds: LabeledDataset) -> float:
        return classification_error(self, ds)


def init_multilayer(depth: int, n: int, d_in: int, d_out: int,
                    rng: RngStream,
                    activation: Activation = Activation.SIGMOID,
                    w1_std: Optional[float] = None,
                    bound: float = 1.0) -> MultilayerParams:
    """First layer N(0, I/d_in); every other matrix i.i.d. Unif[-bound, bound]."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    if w1_std is None:
        w1_std = 1.0 / np.sqrt(d_in)
    weights = [rng.normal(0.0, w1_std, (n, d_in))]
    for _ in range(depth - 1):
        weights.append(rng.uniform(-bound, bound, (n, n)))
    weights.append(rng.uniform(-bound, bound, (d_out, n)))
    return MultilayerParams(weights, [activation] * depth)


def _forward_layers(p: MultilayerParams, x_batch: np.ndarray):
    """Returns (yhat, zs) with zs[l] the activations of hidden layer l+1."""
    zs = []
    z = _np_act(ACT_CODES[p.activations[0]], x_batch @ p.weights[0].T)
    zs.append(z)
    for i in range(1, p.depth):
        w = p.weights[i]
        z = _np_act(ACT_CODES[p.activations[i]], (z @ w.T) / w.shape[1])
        zs.append(z)
    w_last = p.weights[-1]
    yhat = (z @ w_last.T) / w_last.shape[1]
    return yhat, zs


def forward_batch(p: MultilayerParams, x_batch: np.ndarray) -> np.ndarray:
    x_batch = np.ascontiguousarray(x_batch, dtype=np.float64)
    if x_batch.shape[1] != p.d_in:
        raise ValueError(f"input dim {x_batch.shape[1]} != model dim {p.d_in}")
    return _forward_layers(p, x_batch)[0]


def forward(p: MultilayerParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward expects a single input vector")
    return forward_batch(p, x[None, :])[0]


def empirical_loss(p: MultilayerParams, ds: LabeledDataset,
                   kind: LossKind = LossKind.SQUARE) -> float:
    if len(ds) == 0:
        raise ValueError("empty dataset")
    kind = LossKind(kind)
    if kind == LossKind.XENT and p.d_out < 2:
        raise ValueError("cross-entropy needs d_out >= 2")
    yhat = forward_batch(p, ds.x)
    loss, _ = _np_loss_terms(LOSS_CODES[kind], yhat, ds.y)
    return float(loss)


def classification_error(p: MultilayerParams, ds: LabeledDataset) -> float:
    yhat = forward_batch(p, ds.x)
    if p.d_out == 1:
        pred = yhat[:, 0] >= 0.0
        true = ds.y[:, 0] > 0.0
    else:
        pred = np.argmax(yhat, axis=1)
        true = np.argmax(ds.y, axis=1)
    return float(np.mean(pred != true))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

MASK_SCALES = ("frozen", "n", "n2")


@dataclass(frozen=True)
class LayerTrainMask:
    """Per-weight-matrix treatment: 'frozen', gradient x n, or x n^2."""

    scales: tuple

    def __post_init__(self):
        for s in self.scales:
            if s not in MASK_SCALES:
                raise ValueError(f"unknown layer scale {s!r}")

    @classmethod
    def theory(cls, depth: int) -> "LayerTrainMask":
        """First and last layer frozen; middle layers trained at n^2."""
        return cls(("frozen",) + ("n2",) * (depth - 1) + ("frozen",))

    @classmethod
    def experiment(cls, depth: int) -> "LayerTrainMask":
        """All layers trained: first/last at n, middle at n^2."""
        return cls(("n",) + ("n2",) * (depth - 1) + ("n",))

    def factor(self, layer: int, n: int) -> float:
        s = self.scales[layer]
        if s == "frozen":
            return 0.0
        return float(n) if s == "n" else float(n) ** 2


def _loss_and_grads(p: MultilayerParams, x_batch, y_batch, kind: LossKind):
    yhat, zs = _forward_layers(p, x_batch)
    loss, dy = _np_loss_terms(LOSS_CODES[kind], yhat, y_batch)
    grads = [None] * len(p.weights)
    w_last = p.weights[-1]
    m = w_last.shape[1]
    grads[-1] = (dy.T @ zs[-1]) / m
    dz = (dy @ w_last) / m
    for i in range(p.depth - 1, 0, -1):
        dh = dz * _np_act_grad_from_value(ACT_CODES[p.activations[i]], zs[i])
        w = p.weights[i]
        m = w.shape[1]
        grads[i] = (dh.T @ zs[i - 1]) / m
        dz = (dh @ w) / m
    dh = dz * _np_act_grad_from_value(ACT_CODES[p.activations[0]], zs[0])
    grads[0] = dh.T @ x_batch
    return loss, grads


def _step(p: MultilayerParams, x_batch, y_batch, s_k: float,
          mask: LayerTrainMask, kind: LossKind,
          step: Optional[int] = None) -> tuple[MultilayerParams, float]:
    loss, grads = _loss_and_grads(p, x_batch, y_batch, kind)
    if not np.isfinite(loss):
        raise NonFiniteGradientError("non-finite loss", step)
    n = p.n
    new_weights = []
    for layer, (w, g) in enumerate(zip(p.weights, grads)):
        f = mask.factor(layer, n)
        if f == 0.0:
            new_weights.append(w)  # frozen layers stay bit-identical
            continue
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(
                f"non-finite gradient in weight matrix {layer + 1}", step)
        new_weights.append(w - s_k * f * g)
    return MultilayerParams(new_weights, list(p.activations)), float(loss)


def sgd_step(p: MultilayerParams, x_batch: np.ndarray, y_batch: np.ndarray,
             s_k: float, mask: LayerTrainMask,
             kind: LossKind = LossKind.SQUARE,
             step: Optional[int] = None) -> MultilayerParams:
    if s_k <= 0:
        raise ValueError(f"step size must be > 0, got {s_k}")
    if not p.is_uniform():
        raise ValueError("training requires uniform hidden width")
    if len(mask.scales) != p.depth + 1:
        raise ValueError(
            f"mask has {len(mask.scales)} entries for {p.depth + 1} layers")
    x_batch = np.ascontiguousarray(x_batch, dtype=np.float64)
    y_batch = np.ascontiguousarray(y_batch, dtype=np.float64)
    return _step(p, x_batch, y_batch, s_k, mask, LossKind(kind), step)[0]


@dataclass
class TrainResult:
    params: MultilayerParams
    trace: list
    snapshots: dict = field(default_factory=dict)


def train(init: MultilayerParams, stream, sched: SgdSchedule,
          mask: LayerTrainMask, kind: LossKind = LossKind.SQUARE,
          log_every: Optional[int] = None,
          snapshot_steps: Sequence[int] = ()) -> TrainResult:
    """One-pass SGD over the stream; deterministic given init and stream."""
    kind = LossKind(kind)
    if not init.is_uniform():
        raise ValueError("training requires uniform hidden width")
    if len(mask.scales) != init.depth + 1:
        raise ValueError(
            f"mask has {len(mask.scales)} entries for {init.depth + 1} layers")
    if log_every is None:
        log_every = max(1, sched.steps // 100)
    wanted = set(int(s) for s in snapshot_steps)
    p = init.copy()
    trace: list[tuple[int, float]] = []
    snapshots: dict[int, MultilayerParams] = {}
    for k in range(sched.steps):
        if k in wanted:
            snapshots[k] = p.copy()
        x_batch, y_batch = stream.next_batch(sched.batch)
        p, loss = _step(p, x_batch, y_batch, sched.step_size(k), mask, kind,
                        step=k)
        if k % log_every == 0:
            trace.append((k, loss))
    if sched.steps in wanted:
        snapshots[sched.steps] = p.copy()
    return TrainResult(p, trace, snapshots)


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def _check_layer_pattern(kept, width: int, layer: int) -> np.ndarray:
    kept = np.asarray(kept, dtype=np.int64)
    if kept.size == 0:
        raise ValueError(f"dropout pattern empty at hidden layer {layer}")
    if kept.ndim != 1 or np.any(np.diff(kept) <= 0):
        raise ValueError(
            f"dropout pattern at hidden layer {layer} must be strictly increasing")
    if kept[0] < 0 or kept[-1] >= width:
        raise ValueError(
            f"dropout indices out of range at hidden layer {layer}")
    return kept


def dropout(p: MultilayerParams, pattern: Sequence) -> MultilayerParams:
    """Keep the indexed neurons in each hidden layer; every averaging
    prefactor becomes 1 over the kept count of the layer being averaged."""
    if len(pattern) != p.depth:
        raise ValueError(
            f"pattern has {len(pattern)} subsets for {p.depth} hidden layers")
    kept = [
        _check_layer_pattern(pattern[l], p.weights[l].shape[0], l + 1)
        for l in range(p.depth)
    ]
    new = [p.weights[0][kept[0]].copy()]
    for i in range(1, p.depth):
        new.append(p.weights[i][np.ix_(kept[i], kept[i - 1])].copy())
    new.append(p.weights[-1][:, kept[-1]].copy())
    return MultilayerParams(new, list(p.activations))


def full_pattern(p: MultilayerParams) -> list:
    return [np.arange(p.weights[l].shape[0], dtype=np.int64)
            for l in range(p.depth)]


def half_pattern(p: MultilayerParams) -> list:
    """First floor(width/2) indices in every hidden layer."""
    return [np.arange(p.weights[l].shape[0] // 2, dtype=np.int64)
            for l in range(p.depth)]


def dropout_gap(p: MultilayerParams, pattern: Sequence, ds: LabeledDataset,
                kind: LossKind = LossKind.SQUARE) -> float:
    full = empirical_loss(p, ds, kind)
    dropped = empirical_loss(dropout(p, pattern), ds, kind)
    return abs(full - dropped)


def max_half_dropout_gap(p: MultilayerParams, ds: LabeledDataset,
                         kind: LossKind = LossKind.SQUARE) -> float:
    """Worst gap over the patterns that keep the first half of layers
    k..L and all of layers below k, for every k.

    This is the dropout-stability budget that bounds the loss excess along
    the path from `build_path`.
    """
    worst = 0.0
    for k in range(1, p.depth + 1):
        pattern = []
        for l in range(1, p.depth + 1):
            width = p.weights[l - 1].shape[0]
            keep = width // 2 if l >= k else width
            pattern.append(np.arange(keep, dtype=np.int64))
        worst = max(worst, dropout_gap(p, pattern, ds, kind))
    return worst


# ---------------------------------------------------------------------------
# connecting path
# ---------------------------------------------------------------------------

def _vertex(weights, acts) -> MultilayerParams:
    return MultilayerParams([w.copy() for w in weights], list(acts))


def _descend(p: MultilayerParams):
    """Moves from p to its kept-half configuration: every hidden layer's
    doubled top-left block survives, everything else is zero.

    Returns (vertices, labels, final weight list). vertices[0] is p itself.
    """
    depth, n, h = p.depth, p.n, p.n // 2
    cur = [w.copy() for w in p.weights]
    vertices = [p.copy()]
    labels = ["start"]

    def emit(label):
        vertices.append(_vertex(cur, p.activations))
        labels.append(label)

    last = cur[depth]
    folded = np.zeros_like(last)
    folded[:, :h] = 2.0 * last[:, :h]
    cur[depth] = folded
    emit("convex: fold the readout onto its kept columns")

    for k in range(depth, 1, -1):
        w_k = k - 1  # index of the matrix feeding hidden layer k
        m = cur[w_k].copy()
        m[h:, :h] = 2.0 * m[:h, :h]
        m[h:, h:] = 0.0
        cur[w_k] = m
        emit(f"dead: seed doubled kept block into dead bottom rows of W{k}")
        for i in range(k, depth):
            m = cur[i].copy()
            m[h:, h:] = m[:h, :h]
            cur[i] = m
            emit(f"dead: mirror doubled block into bottom-right of W{i + 1}")
        last = cur[depth]
        swapped = np.zeros_like(last)
        swapped[:, h:] = last[:, :h]
        cur[depth] = swapped
        emit("convex: move readout mass onto the mirrored half")
        for i in range(depth - 1, k - 1, -1):
            m = cur[i].copy()
            m[:h, :h] = 0.0
            cur[i] = m
            emit(f"dead: clear top-left of W{i + 1}")
        m = cur[w_k].copy()
        m[:h, :] = m[h:, :]
        cur[w_k] = m
        emit(f"dead: overwrite dead top rows of W{k} with the doubled block")
        for i in range(k, depth):
            m = cur[i].copy()
            m[:h, :h] = m[h:, h:]
            cur[i] = m
            emit(f"dead: restore doubled block into top-left of W{i + 1}")
        last = cur[depth]
        swapped = np.zeros_like(last)
        swapped[:, :h] = last[:, h:]
        cur[depth] = swapped
        emit("mirror: swap the identical stacked half-networks")
        for i in range(depth - 1, k - 1, -1):
            m = cur[i].copy()
            m[h:, h:] = 0.0
            cur[i] = m
            emit(f"dead: clear bottom-right of W{i + 1}")
        m = cur[w_k].copy()
        m[h:, :] = 0.0
        cur[w_k] = m
        emit(f"dead: clear the dead bottom rows of W{k}")

    return vertices, labels, cur


def _undo_label(label: str) -> str:
    kind, rest = label.split(": ", 1)
    return f"{kind}: undo {rest}"


def build_path(theta: MultilayerParams,
               theta_bar: MultilayerParams) -> PiecewisePath:
    """Piecewise-linear path between two deep networks, one block move per
    segment.

    Requires an even hidden width and at least two hidden layers. Both sides
    are first contracted onto their kept halves (`_descend`), the bridge
    rewrites the dead half with the partner's kept blocks and hands the
    readout mass across, and the partner side is the reverse contraction.
    The loss along the path stays below max(loss(theta), loss(theta_bar))
    plus the larger `max_half_dropout_gap` of the two endpoints.
    """
    if len(theta.weights) != len(theta_bar.weights) or any(
            wp.shape != wq.shape
            for wp, wq in zip(theta.weights, theta_bar.weights)):
        raise ValueError("endpoint architectures differ")
    if theta.activations != theta_bar.activations:
        raise ValueError("endpoints use different activations")
    if not (theta.is_uniform() and theta_bar.is_uniform()):
        raise ValueError("path construction requires uniform hidden width")
    if theta.n % 2 != 0:
        raise ValueError(
            f"path construction requires an even width, got {theta.n}")
    if theta.depth < 2:
        raise ValueError(
            f"path construction needs at least 2 hidden layers, got {theta.depth}")

    depth, h = theta.depth, theta.n // 2
    vertices, labels, cur = _descend(theta)
    bar = theta_bar.weights

    def emit(label):
        vertices.append(_vertex(cur, theta.activations))
        labels.append(label)

    m = cur[0].copy()
    m[h:, :] = bar[0][:h, :]
    cur[0] = m
    emit("dead: load partner's kept first-layer rows into the dead bottom")
    for i in range(1, depth):
        m = cur[i].copy()
        m[h:, h:] = 2.0 * bar[i][:h, :h]
        cur[i] = m
        emit(f"dead: seed partner's doubled kept block into bottom-right of W{i + 1}")
    last = cur[depth]
    handed = np.zeros_like(last)
    handed[:, h:] = 2.0 * bar[depth][:, :h]
    cur[depth] = handed
    emit("convex: hand the readout mass to the partner's half")
    for i in range(depth - 1, 0, -1):
        m = cur[i].copy()
        m[:h, :h] = 0.0
        cur[i] = m
        emit(f"dead: clear top-left of W{i + 1}")
    m = cur[0].copy()
    m[:h, :] = bar[0][:h, :]
    cur[0] = m
    emit("dead: overwrite the dead first-layer top with partner's kept rows")
    for i in range(1, depth):
        m = cur[i].copy()
        m[:h, :h] = m[h:, h:]
        cur[i] = m
        emit(f"dead: restore partner's doubled block into top-left of W{i + 1}")
    last = cur[depth]
    swapped = np.zeros_like(last)
    swapped[:, :h] = last[:, h:]
    cur[depth] = swapped
    emit("mirror: swap the identical stacked half-networks")
    for i in range(depth - 1, 0, -1):
        m = cur[i].copy()
        m[h:, h:] = 0.0
        cur[i] = m
        emit(f"dead: clear bottom-right of W{i + 1}")
    m = cur[0].copy()
    m[h:, :] = bar[0][h:, :]
    cur[0] = m
    emit("dead: restore partner's dropped first-layer rows")

    down_b, labs_b, end_b = _descend(theta_bar)
    junction = vertices[-1]
    if not all(np.array_equal(a, b)
               for a, b in zip(junction.weights, end_b)):
        raise AssertionError("bridge did not land on the partner's kept-half "
                             "configuration")  # construction invariant
    for j in range(len(down_b) - 2, -1, -1):
        vertices.append(down_b[j])
        labels.append(_undo_label(labs_b[j + 1]))
    return PiecewisePath(vertices, labels)
