"""Forward-Euler integrator for the width-independent particle dynamics of
the two-layer model, plus the limit loss of an empirical particle measure.

Each particle carries (a_i, w_i). The drift replaces the law of the
particles by the ensemble average and the data expectation by a Monte-Carlo
batch:

    theta_i += dt * 2 * xi(t) * mean_batch[ (y - yhat_M(x)) * grad sigma*(x, theta_i) ]

with sigma*(x, theta) = a * act(<w, x>) and yhat_M the ensemble-average
predictor. With matching step sizes and a shared initial ensemble this is
the deterministic idealization that width-n SGD approaches as n grows.

This module deliberately does not share the training kernels; it is an
independent computation used to cross-check the SGD implementation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core_math import Activation, activation_apply, activation_grad
from .datasets import LabeledDataset


@dataclass
class ParticleEnsemble:
    """M particle snapshots: a (M, out_dim), w (M, d), at time t >= 0."""

    a: np.ndarray
    w: np.ndarray
    activation: Activation = Activation.SIGMOID
    t: float = 0.0

    def __post_init__(self):
        self.a = np.ascontiguousarray(self.a, dtype=np.float64)
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        if self.a.ndim == 1:
            self.a = self.a[:, None]
        if self.a.ndim != 2 or self.w.ndim != 2 or len(self.a) != len(self.w):
            raise ValueError(
                f"inconsistent ensemble shapes a={self.a.shape} w={self.w.shape}"
            )
        if self.t < 0:
            raise ValueError(f"time must be >= 0, got {self.t}")
        self.activation = Activation(self.activation)

    @property
    def m(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.a.shape[1]

    def copy(self) -> "ParticleEnsemble":
        return ParticleEnsemble(self.a.copy(), self.w.copy(),
                                self.activation, self.t)

    @classmethod
    def from_two_layer(cls, params, t: float = 0.0) -> "ParticleEnsemble":
        return cls(params.a.copy(), params.w.copy(), params.activation, t)

    def to_two_layer(self):
        from .two_layer import TwoLayerParams

        return TwoLayerParams(self.a.copy(), self.w.copy(), self.activation)


@dataclass(frozen=True)
class OracleConfig:
    dt: float
    horizon: float
    mc_batch: int = 100
    xi: Optional[Callable[[float], float]] = None  # None means xi == 1
    fresh_batch: bool = True  # fresh Monte-Carlo batch every Euler step

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if self.mc_batch < 1:
            raise ValueError(f"mc_batch must be >= 1, got {self.mc_batch}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


def _mean_predictor(ens: ParticleEnsemble, x: np.ndarray) -> np.ndarray:
    z = activation_apply(ens.activation, x @ ens.w.T)
    return (z @ ens.a) / ens.m


def integrate_ideal(ens: ParticleEnsemble, stream,
                    cfg: OracleConfig) -> ParticleEnsemble:
    """Run the Euler scheme for round(horizon/dt) steps; deterministic given
    the initial ensemble and the sample stream."""
    out = ens.copy()
    a, w = out.a, out.w
    act = out.activation
    fixed = None if cfg.fresh_batch else stream.next_batch(cfg.mc_batch)
    for k in range(cfg.steps):
        t = out.t + k * cfg.dt
        rate = 2.0 * cfg.dt * (1.0 if cfg.xi is None else cfg.xi(t))
        if rate <= 0:
            raise ValueError(f"schedule gave nonpositive rate at step {k}")
        x, y = fixed if fixed is not None else stream.next_batch(cfg.mc_batch)
        h = x @ w.T                                   # (B, M) pre-activations
        z = activation_apply(act, h)
        resid = y - (z @ a) / out.m                   # (B, out_dim)
        scale = rate / x.shape[0]
        da = scale * (z.T @ resid)
        dw = scale * (((resid @ a.T) * activation_grad(act, h)).T @ x)
        if not (np.isfinite(da).all() and np.isfinite(dw).all()):
            raise FloatingPointError(f"non-finite particle drift at step {k}")
        a += da
        w += dw
    out.t = ens.t + cfg.steps * cfg.dt
    return out


def limit_loss(ens: ParticleEnsemble, ds: LabeledDataset) -> float:
    """Square loss of the ensemble-average predictor over the dataset."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    resid = ds.y - _mean_predictor(ens, ds.x)
    return float(np.mean(np.sum(resid * resid, axis=1)))
