"""Run configuration: a declarative TOML document mapped 1:1 onto RunConfig.

Top-level keys match the RunConfig field names; the [gaussian] and [idx]
tables hold task-specific knobs. Every CLI flag overrides its config key.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

TASKS = ("gaussian", "idx")
MODELS = ("two-layer", "multilayer")
LOSSES = ("square", "xent")
MASKS = ("theory", "experiment")
ACTIVATIONS = ("sigmoid", "tanh", "relu", "identity")
A_INITS = ("uniform", "bimodal")


@dataclass(frozen=True)
class RunConfig:
    task: str = "gaussian"
    model: str = "two-layer"
    widths: tuple = (800,)
    depth: int = 2                     # hidden layers (multilayer only)
    alpha0: float = 3.0                # step size is alpha0 / width
    k0: float = 2.0                    # step budget is k0 * width
    batch: int = 100
    loss: str = "square"
    activation: str = "sigmoid"
    mask: str = "experiment"
    seeds: tuple = (0, 1, 2, 3, 4)
    eval_size: int = 10_000
    eval_seed: int = 9_999
    dropout_fraction: float = 0.5
    mid_fraction: float = 0.7          # intermediate dropout-gap checkpoint
    points_per_segment: int = 101
    error_points_per_segment: int = 51
    compare_points: int = 21
    bias: bool = True                  # append the constant feature 1
    a_init: str = "uniform"
    connect_init_a: str = "bimodal"
    connect_init_b: str = "uniform"
    out_dir: str = "runs"
    # [gaussian]
    gaussian_d: int = 32
    gaussian_delta: float = 0.5
    # [idx]
    idx_train_images: str = ""
    idx_train_labels: str = ""
    idx_test_images: str = ""
    idx_test_labels: str = ""
    idx_normalize: bool = True

    def validate(self) -> "RunConfig":
        def bad(field, why):
            return ValueError(f"config field {field!r}: {why}")

        if self.task not in TASKS:
            raise bad("task", f"must be one of {TASKS}, got {self.task!r}")
        if self.model not in MODELS:
            raise bad("model", f"must be one of {MODELS}, got {self.model!r}")
        if not self.widths:
            raise bad("widths", "must be a nonempty list")
        if any(int(n) < 2 for n in self.widths):
            raise bad("widths", f"every width must be >= 2, got {self.widths}")
        if self.depth < 1:
            raise bad("depth", f"must be >= 1, got {self.depth}")
        if self.alpha0 <= 0:
            raise bad("alpha0", f"must be > 0, got {self.alpha0}")
        if self.k0 <= 0:
            raise bad("k0", f"must be > 0, got {self.k0}")
        if self.batch < 1:
            raise bad("batch", f"must be >= 1, got {self.batch}")
        if self.loss not in LOSSES:
            raise bad("loss", f"must be one of {LOSSES}, got {self.loss!r}")
        if self.activation not in ACTIVATIONS:
            raise bad("activation",
                      f"must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.mask not in MASKS:
            raise bad("mask", f"must be one of {MASKS}, got {self.mask!r}")
        if not self.seeds:
            raise bad("seeds", "must be a nonempty list")
        if self.eval_size < 1:
            raise bad("eval_size", f"must be >= 1, got {self.eval_size}")
        if not 0.0 < self.dropout_fraction <= 1.0:
            raise bad("dropout_fraction",
                      f"must lie in (0, 1], got {self.dropout_fraction}")
        if not 0.0 <= self.mid_fraction <= 1.0:
            raise bad("mid_fraction",
                      f"must lie in [0, 1], got {self.mid_fraction}")
        if self.points_per_segment < 2:
            raise bad("points_per_segment",
                      f"must be >= 2, got {self.points_per_segment}")
        if self.error_points_per_segment < 2:
            raise bad("error_points_per_segment",
                      f"must be >= 2, got {self.error_points_per_segment}")
        if self.compare_points < 2:
            raise bad("compare_points",
                      f"must be >= 2, got {self.compare_points}")
        for key in ("a_init", "connect_init_a", "connect_init_b"):
            if getattr(self, key) not in A_INITS:
                raise bad(key, f"must be one of {A_INITS}")
        if self.task == "gaussian":
            if self.gaussian_d < 1:
                raise bad("gaussian.d", f"must be >= 1, got {self.gaussian_d}")
            if self.gaussian_delta <= -1.0:
                raise bad("gaussian.delta",
                          f"must be > -1, got {self.gaussian_delta}")
        if self.task == "idx":
            for key in ("idx_train_images", "idx_train_labels",
                        "idx_test_images", "idx_test_labels"):
                if not getattr(self, key):
                    name = "idx." + key.removeprefix("idx_")
                    raise bad(name, "required for the idx task")
            if self.loss == "xent" and self.model == "two-layer":
                pass  # ten logits come from out_dim, checked at build time
        if self.loss == "xent" and self.task == "gaussian":
            raise bad("loss", "cross-entropy needs the multiclass idx task")
        return self

    @property
    def out_dim(self) -> int:
        return 1 if self.task == "gaussian" else 10


def _merge_table(data: dict, table: str, prefix: str, out: dict) -> None:
    for key, value in data.get(table, {}).items():
        out[f"{prefix}{key}"] = value


def config_from_dict(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    flat: dict = {}
    for key, value in data.items():
        if key in ("gaussian", "idx"):
            continue
        if key not in known:
            raise ValueError(f"config field {key!r}: unknown key")
        flat[key] = value
    _merge_table(data, "gaussian", "gaussian_", flat)
    _merge_table(data, "idx", "idx_", flat)
    unknown = set(flat) - known
    if unknown:
        raise ValueError(f"config field {sorted(unknown)[0]!r}: unknown key")
    for key in ("widths", "seeds"):
        if key in flat:
            flat[key] = tuple(int(v) for v in flat[key])
    return RunConfig(**flat).validate()


def load_config(path) -> RunConfig:
    with open(path, "rb") as f:
        return config_from_dict(tomllib.load(f))


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Replace fields from non-None CLI values; 'n' and 'seed' collapse the
    corresponding lists to a single entry."""
    updates = {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "n":
            updates["widths"] = (int(value),)
        elif key == "seed":
            updates["seeds"] = (int(value),)
        elif key == "out":
            updates["out_dir"] = value
        else:
            updates[key] = value
    return replace(cfg, **updates).validate() if updates else cfg.validate()
