"""JSON checkpoints with bit-exact float round trips.

Floats are serialized at full precision (repr of the IEEE double, 17
significant digits where needed), so save followed by load reproduces the
arrays bitwise. The format_version field is checked on load; version,
malformed-document, and shape problems raise distinct errors.
"""
from __future__ import annotations

import json

import numpy as np

from .core_math import Activation
from .multilayer import LayerTrainMask, MultilayerParams
from .oracle import ParticleEnsemble
from .two_layer import TwoLayerParams

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


def _doc_for(obj, seed: int, step: int) -> dict:
    if isinstance(obj, TwoLayerParams):
        a = obj.a[:, 0] if obj.out_dim == 1 else obj.a
        return {
            "format_version": FORMAT_VERSION,
            "model": "two-layer",
            "n": obj.n,
            "d": obj.d,
            "out_dim": obj.out_dim,
            "activation": obj.activation.value,
            "a": a.tolist(),
            "w": obj.w.tolist(),
            "seed": int(seed),
            "step": int(step),
        }
    if isinstance(obj, MultilayerParams):
        return {
            "format_version": FORMAT_VERSION,
            "model": "multilayer",
            "L": obj.depth,
            "n": obj.n,
            "dims": [obj.d_in, obj.d_out],
            "activations": [a.value for a in obj.activations],
            "weights": [w.tolist() for w in obj.weights],
            "mask": None,
            "seed": int(seed),
            "step": int(step),
        }
    if isinstance(obj, ParticleEnsemble):
        a = obj.a[:, 0] if obj.out_dim == 1 else obj.a
        return {
            "format_version": FORMAT_VERSION,
            "model": "ideal-ensemble",
            "n": obj.m,
            "d": obj.d,
            "out_dim": obj.out_dim,
            "activation": obj.activation.value,
            "a": a.tolist(),
            "w": obj.w.tolist(),
            "t": obj.t,
            "seed": int(seed),
            "step": int(step),
        }
    raise TypeError(f"cannot checkpoint object of type {type(obj).__name__}")


def save_checkpoint(obj, path, seed: int = 0, step: int = 0,
                    mask: LayerTrainMask | None = None) -> None:
    doc = _doc_for(obj, seed, step)
    if mask is not None:
        if doc["model"] != "multilayer":
            raise ValueError("mask metadata only applies to multilayer models")
        doc["mask"] = list(mask.scales)
    with open(path, "w") as f:
        json.dump(doc, f, allow_nan=False)
        f.write("\n")


def _field(doc: dict, key: str):
    if key not in doc:
        raise CheckpointFormatError(f"checkpoint missing field {key!r}")
    return doc[key]


def _as_matrix(values, rows: int, cols: int, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (rows, cols):
        raise CheckpointShapeError(
            f"{what} has shape {arr.shape}, expected ({rows}, {cols})")
    return arr


def load_checkpoint(path):
    """Load a checkpoint; returns the params/ensemble object."""
    with open(path, "r") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointFormatError(f"malformed checkpoint JSON: {e}") from e
    if not isinstance(doc, dict):
        raise CheckpointFormatError("checkpoint document is not an object")
    version = _field(doc, "format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"unsupported checkpoint format_version {version!r}, "
            f"expected {FORMAT_VERSION}")
    model = _field(doc, "model")

    if model in ("two-layer", "ideal-ensemble"):
        n, d, out_dim = _field(doc, "n"), _field(doc, "d"), _field(doc, "out_dim")
        a = np.asarray(_field(doc, "a"), dtype=np.float64)
        if out_dim == 1 and a.ndim == 1:
            a = a[:, None]
        if a.shape != (n, out_dim):
            raise CheckpointShapeError(
                f"a has shape {a.shape}, expected ({n}, {out_dim})")
        w = _as_matrix(_field(doc, "w"), n, d, "w")
        act = Activation(_field(doc, "activation"))
        if model == "two-layer":
            return TwoLayerParams(a, w, act)
        return ParticleEnsemble(a, w, act, float(_field(doc, "t")))

    if model == "multilayer":
        depth, n = _field(doc, "L"), _field(doc, "n")
        d_in, d_out = _field(doc, "dims")
        acts = [Activation(v) for v in _field(doc, "activations")]
        if len(acts) != depth:
            raise CheckpointShapeError(
                f"{len(acts)} activations for L={depth}")
        raw = _field(doc, "weights")
        if len(raw) != depth + 1:
            raise CheckpointShapeError(
                f"{len(raw)} weight matrices for L={depth}")
        weights = [_as_matrix(raw[0], n, d_in, "W1")]
        for i in range(1, depth):
            weights.append(_as_matrix(raw[i], n, n, f"W{i + 1}"))
        weights.append(_as_matrix(raw[depth], d_out, n, f"W{depth + 1}"))
        return MultilayerParams(weights, acts)

    raise CheckpointFormatError(f"unknown checkpoint model {model!r}")
