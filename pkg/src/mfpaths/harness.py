"""Experiment orchestration: training cells, dropout sweeps, connectivity
runs, the SGD-vs-particle comparison, and CSV emission.

Every run is reproducible bitwise from (config, seeds); wall-clock columns
are the only nondeterministic outputs. Per (width, seed) cell the data
stream, the particle-integrator stream, and the parameter init use
independent child seeds, while the evaluation set is shared across all
cells of a config so measurements are comparable.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import multilayer, oracle, pathconn, two_layer
from .config import RunConfig
from .core_math import Activation, RngStream
from .datasets import (BiasAugmentedStream, GaussianStream, GaussianTaskSpec,
                       LabeledDataset, append_bias_feature,
                       apply_normalization, dataset_from_stream, load_idx,
                       normalize_zero_mean_unit_var)
from .two_layer import LossKind, schedule_for_width

# child-stream keys within one (width, seed) cell
KEY_INIT = 1
KEY_TRAIN_DATA = 2
KEY_ORACLE_DATA = 3


class IdxTrainStream:
    """Finite dataset served as an endless stream of shuffled passes."""

    def __init__(self, ds: LabeledDataset, seed: int):
        self.ds = ds
        self._rng = RngStream(seed)
        self._order = np.arange(len(ds))
        self._pos = len(ds)  # trigger reshuffle on first use

    def next_batch(self, m: int):
        xs, ys = [], []
        remaining = m
        while remaining > 0:
            if self._pos >= len(self._order):
                self._order = self._rng.permutation(len(self.ds))
                self._pos = 0
            take = min(remaining, len(self._order) - self._pos)
            idx = self._order[self._pos:self._pos + take]
            xs.append(self.ds.x[idx])
            ys.append(self.ds.y[idx])
            self._pos += take
            remaining -= take
        return np.concatenate(xs), np.concatenate(ys)


@dataclass
class TaskData:
    """Resolved data access for one config: stream factory + eval set."""

    eval_ds: LabeledDataset
    model_dim: int
    out_dim: int
    make_train_stream: object  # callable seed -> stream

    def train_stream(self, seed: int):
        return self.make_train_stream(seed)


def prepare_task(cfg: RunConfig) -> TaskData:
    if cfg.task == "gaussian":
        def make(seed: int):
            spec = GaussianTaskSpec(cfg.gaussian_d, cfg.gaussian_delta, seed)
            stream = GaussianStream(spec)
            return BiasAugmentedStream(stream) if cfg.bias else stream

        eval_spec = GaussianTaskSpec(cfg.gaussian_d, cfg.gaussian_delta,
                                     cfg.eval_seed)
        eval_stream = GaussianStream(eval_spec)
        if cfg.bias:
            eval_stream = BiasAugmentedStream(eval_stream)
        eval_ds = dataset_from_stream(eval_stream, cfg.eval_size, classes=2)
        dim = cfg.gaussian_d + (1 if cfg.bias else 0)
        return TaskData(eval_ds, dim, 1, make)

    train = load_idx(cfg.idx_train_images, cfg.idx_train_labels)
    test = load_idx(cfg.idx_test_images, cfg.idx_test_labels)
    if cfg.idx_normalize:
        train, mean, std = normalize_zero_mean_unit_var(train)
        test = apply_normalization(test, mean, std)  # reuse train statistics
    if cfg.bias:
        train = append_bias_feature(train)
        test = append_bias_feature(test)
    if cfg.eval_size < len(test):
        test = LabeledDataset(test.x[:cfg.eval_size], test.y[:cfg.eval_size],
                              test.classes)

    def make(seed: int):
        return IdxTrainStream(train, seed)

    return TaskData(test, train.d, train.classes, make)


def _init_params(cfg: RunConfig, task: TaskData, n: int, seed: int,
                 a_init=None):
    rng = RngStream(seed).child(KEY_INIT)
    act = Activation(cfg.activation)
    if cfg.model == "two-layer":
        return two_layer.init_two_layer(
            n, task.model_dim, rng, out_dim=task.out_dim, activation=act,
            a_init=a_init or cfg.a_init)
    return multilayer.init_multilayer(
        cfg.depth, n, task.model_dim, task.out_dim, rng, activation=act)


def _mask_for(cfg: RunConfig):
    if cfg.mask == "theory":
        return multilayer.LayerTrainMask.theory(cfg.depth)
    return multilayer.LayerTrainMask.experiment(cfg.depth)


def train_cell(cfg: RunConfig, task: TaskData, n: int, seed: int,
               snapshot_steps=(), a_init=None):
    """Train one (width, seed) cell; returns the model-specific TrainResult."""
    stream = task.train_stream(
        RngStream(seed).child(KEY_TRAIN_DATA).seed)
    sched = schedule_for_width(cfg.alpha0, cfg.k0, n, cfg.batch)
    init = _init_params(cfg, task, n, seed, a_init=a_init)
    kind = LossKind(cfg.loss)
    if cfg.model == "two-layer":
        return two_layer.train(init, stream, sched, kind,
                               snapshot_steps=snapshot_steps)
    return multilayer.train(init, stream, sched, _mask_for(cfg), kind,
                            snapshot_steps=snapshot_steps)


def _dropout_net(cfg: RunConfig, params, fraction: float):
    if fraction >= 1.0:
        return params.copy()
    if cfg.model == "two-layer":
        keep = max(1, int(fraction * params.n))
        return two_layer.dropout(params, np.arange(keep))
    pattern = [np.arange(max(1, int(fraction * w.shape[0])))
               for w in params.weights[:-1]]
    return multilayer.dropout(params, pattern)


def _loss_of(cfg, params, ds):
    return params.loss(ds, LossKind(cfg.loss))


# ---------------------------------------------------------------------------
# dropout sweep
# ---------------------------------------------------------------------------

SWEEP_COLUMNS = (
    "n", "seed", "train_loss", "eval_loss", "eval_error", "dropout_loss",
    "dropout_error", "eps_d", "eps_d_at_start", "eps_d_at_mid",
    "eps_d_at_end", "mid_fraction", "wall_time",
)


@dataclass
class SweepRow:
    n: int
    seed: int
    train_loss: float
    eval_loss: float
    eval_error: float
    dropout_loss: float
    dropout_error: float
    eps_d: float
    eps_d_at_start: float
    eps_d_at_mid: float
    eps_d_at_end: float
    mid_fraction: float
    wall_time: float


@dataclass
class SweepResult:
    rows: list

    def mean_eps_d_by_width(self) -> dict:
        acc: dict = {}
        for row in self.rows:
            acc.setdefault(row.n, []).append(row.eps_d)
        return {n: float(np.mean(v)) for n, v in sorted(acc.items())}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in result.rows:
            f.write(",".join(_fmt(getattr(row, c)) for c in SWEEP_COLUMNS)
                    + "\n")


def read_sweep_csv(path) -> SweepResult:
    rows = []
    with open(path, "r", newline="") as f:
        header = f.readline().strip().split(",")
        if tuple(header) != SWEEP_COLUMNS:
            raise ValueError(f"unexpected sweep CSV header: {header}")
        for line in f:
            vals = line.strip().split(",")
            rows.append(SweepRow(int(vals[0]), int(vals[1]),
                                 *[float(v) for v in vals[2:]]))
    return SweepResult(rows)


def run_dropout_sweep(cfg: RunConfig, out_path=None) -> SweepResult:
    """Train every (width, seed) cell and measure the dropout gap on the
    shared evaluation set, at the start, an intermediate point, and the end
    of training."""
    cfg = cfg.validate()
    task = prepare_task(cfg)
    rows = []
    for n in cfg.widths:
        steps = int(round(cfg.k0 * n))
        mid = int(round(cfg.mid_fraction * steps))
        for seed in cfg.seeds:
            start = time.perf_counter()
            result = train_cell(cfg, task, n, seed,
                                snapshot_steps=(0, mid, steps))
            params = result.params
            eval_loss = _loss_of(cfg, params, task.eval_ds)
            eval_error = params.error(task.eval_ds)
            dropped = _dropout_net(cfg, params, cfg.dropout_fraction)
            drop_loss = _loss_of(cfg, dropped, task.eval_ds)
            drop_error = dropped.error(task.eval_ds)

            gaps = {}
            for label, step in (("start", 0), ("mid", mid), ("end", steps)):
                snap = result.snapshots[step]
                snap_drop = _dropout_net(cfg, snap, cfg.dropout_fraction)
                gaps[label] = abs(_loss_of(cfg, snap, task.eval_ds)
                                  - _loss_of(cfg, snap_drop, task.eval_ds))

            tail = max(1, len(result.trace) // 10)
            train_loss = float(np.mean([v for _, v in result.trace[-tail:]]))
            rows.append(SweepRow(
                n=n, seed=seed, train_loss=train_loss, eval_loss=eval_loss,
                eval_error=eval_error, dropout_loss=drop_loss,
                dropout_error=drop_error, eps_d=abs(eval_loss - drop_loss),
                eps_d_at_start=gaps["start"], eps_d_at_mid=gaps["mid"],
                eps_d_at_end=gaps["end"], mid_fraction=cfg.mid_fraction,
                wall_time=time.perf_counter() - start,
            ))
    result = SweepResult(rows)
    if out_path is not None:
        write_sweep_csv(result, out_path)
    return result


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, dtype=float)), np.log(
        np.asarray(ys, dtype=float))
    lx = lx - lx.mean()
    return float(np.sum(lx * (ly - ly.mean())) / np.sum(lx * lx))


# ---------------------------------------------------------------------------
# connectivity
# ---------------------------------------------------------------------------

@dataclass
class ConnectivityResult:
    loss_profile: pathconn.PathProfile
    error_profile: pathconn.PathProfile
    endpoint_losses: tuple
    half_gaps: tuple          # measured loss gap after dropping half, per end
    loss_bound: float         # max endpoint loss + max half gap
    endpoint_errors: tuple
    error_changes: tuple      # |error(dropout) - error(full)| per end
    error_bound: float
    params_a: object
    params_b: object


def _half_gap(cfg: RunConfig, params, ds) -> float:
    kind = LossKind(cfg.loss)
    if cfg.model == "two-layer":
        return two_layer.dropout_gap(
            params, two_layer.first_half_pattern(params.n), ds, kind)
    return multilayer.max_half_dropout_gap(params, ds, kind)


def run_connectivity(cfg: RunConfig, seed_a: int, seed_b: int,
                     out_dir=None) -> ConnectivityResult:
    """Train two solutions from different seeds/initial laws, connect them
    with the constructive path, and profile loss and error along it."""
    cfg = cfg.validate()
    task = prepare_task(cfg)
    n = cfg.widths[0]
    res_a = train_cell(cfg, task, n, seed_a, a_init=cfg.connect_init_a)
    res_b = train_cell(cfg, task, n, seed_b, a_init=cfg.connect_init_b)
    pa, pb = res_a.params, res_b.params
    if cfg.model == "two-layer":
        path = two_layer.build_path(pa, pb)
    else:
        path = multilayer.build_path(pa, pb)
    kind = LossKind(cfg.loss)
    loss_profile = pathconn.profile_loss(path, task.eval_ds, kind,
                                         cfg.points_per_segment)
    error_profile = pathconn.profile_error(path, task.eval_ds,
                                           cfg.error_points_per_segment)
    gaps = (_half_gap(cfg, pa, task.eval_ds), _half_gap(cfg, pb, task.eval_ds))
    endpoint_losses = loss_profile.endpoint_values
    err_changes = []
    for p in (pa, pb):
        dropped = _dropout_net(cfg, p, 0.5)
        err_changes.append(abs(dropped.error(task.eval_ds)
                               - p.error(task.eval_ds)))
    result = ConnectivityResult(
        loss_profile=loss_profile,
        error_profile=error_profile,
        endpoint_losses=endpoint_losses,
        half_gaps=gaps,
        loss_bound=max(endpoint_losses) + max(gaps),
        endpoint_errors=error_profile.endpoint_values,
        error_changes=tuple(err_changes),
        error_bound=max(error_profile.endpoint_values) + max(err_changes),
        params_a=pa,
        params_b=pb,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        pathconn.write_profile_csv(loss_profile, out / "connect_loss.csv")
        pathconn.write_profile_csv(error_profile, out / "connect_error.csv")
        with open(out / "connect_bound.csv", "w", newline="") as f:
            f.write("loss_a,loss_b,half_gap_a,half_gap_b,loss_bound,"
                    "max_path_loss,eps_c,error_a,error_b,error_change_a,"
                    "error_change_b,error_bound,max_path_error\n")
            f.write(",".join(_fmt(v) for v in (
                endpoint_losses[0], endpoint_losses[1], gaps[0], gaps[1],
                result.loss_bound, max(loss_profile.values),
                loss_profile.eps_c, result.endpoint_errors[0],
                result.endpoint_errors[1], err_changes[0], err_changes[1],
                result.error_bound, max(error_profile.values))) + "\n")
    return result


# ---------------------------------------------------------------------------
# full-vs-dropout training comparison
# ---------------------------------------------------------------------------

COMPARE_COLUMNS = (
    "n", "step", "fraction_of_training", "full_loss_mean", "full_loss_std",
    "full_error_mean", "full_error_std", "dropout_loss_mean",
    "dropout_loss_std", "dropout_error_mean", "dropout_error_std",
)


def run_dropout_compare(cfg: RunConfig, out_path=None) -> list:
    """Track full-network and dropout-network metrics over training,
    averaged over seeds (population standard deviation)."""
    cfg = cfg.validate()
    task = prepare_task(cfg)
    rows = []
    for n in cfg.widths:
        steps = int(round(cfg.k0 * n))
        marks = sorted({int(round(f * steps)) for f in
                        np.linspace(0.0, 1.0, cfg.compare_points)})
        per_seed: dict = {m: [] for m in marks}
        for seed in cfg.seeds:
            result = train_cell(cfg, task, n, seed, snapshot_steps=marks)
            for m in marks:
                snap = result.snapshots[m]
                dropped = _dropout_net(cfg, snap, cfg.dropout_fraction)
                per_seed[m].append((
                    _loss_of(cfg, snap, task.eval_ds),
                    snap.error(task.eval_ds),
                    _loss_of(cfg, dropped, task.eval_ds),
                    dropped.error(task.eval_ds),
                ))
        for m in marks:
            data = np.asarray(per_seed[m])  # (seeds, 4)
            mean, std = data.mean(axis=0), data.std(axis=0)
            rows.append((n, m, m / steps if steps else 0.0,
                         mean[0], std[0], mean[1], std[1],
                         mean[2], std[2], mean[3], std[3]))
    if out_path is not None:
        with open(out_path, "w", newline="") as f:
            f.write(",".join(COMPARE_COLUMNS) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
    return rows


# ---------------------------------------------------------------------------
# SGD vs particle integrator
# ---------------------------------------------------------------------------

ORACLE_COLUMNS = ("n", "seed", "sgd_loss", "particle_loss", "gap")


def run_oracle_convergence(cfg: RunConfig, out_path=None) -> list:
    """For each width, compare the trained network's square loss with the
    limit loss of the particle ensemble started from the same init."""
    cfg = cfg.validate()
    if cfg.model != "two-layer":
        raise ValueError("the particle comparison supports two-layer only")
    if cfg.loss != "square":
        raise ValueError("the particle comparison is defined for square loss")
    task = prepare_task(cfg)
    rows = []
    for n in cfg.widths:
        for seed in cfg.seeds:
            result = train_cell(cfg, task, n, seed)
            sgd_loss = _loss_of(cfg, result.params, task.eval_ds)
            init = _init_params(cfg, task, n, seed)
            ens = oracle.ParticleEnsemble.from_two_layer(init)
            ocfg = oracle.OracleConfig(dt=cfg.alpha0 / n,
                                       horizon=cfg.k0 * cfg.alpha0,
                                       mc_batch=cfg.batch)
            stream = task.train_stream(
                RngStream(seed).child(KEY_ORACLE_DATA).seed)
            ens = oracle.integrate_ideal(ens, stream, ocfg)
            particle_loss = oracle.limit_loss(ens, task.eval_ds)
            rows.append((n, seed, sgd_loss, particle_loss,
                         abs(sgd_loss - particle_loss)))
    if out_path is not None:
        with open(out_path, "w", newline="") as f:
            f.write(",".join(ORACLE_COLUMNS) + "\n")
            for row in rows:
                f.write(",".join(_fmt(v) for v in row) + "\n")
    return rows
