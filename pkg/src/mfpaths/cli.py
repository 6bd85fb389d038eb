"""Command-line entry point.

Subcommands: train, dropout-eval, connect, sweep, oracle, compare. Each
takes --config <toml> plus overrides; outputs are CSVs and JSON checkpoints
under --out. Exits 0 on success; on failure prints one machine-readable
JSON line to stderr and exits 1.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, pathconn
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, apply_overrides, load_config
from .two_layer import LossKind


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--n", type=int, help="override: single width")
    p.add_argument("--seed", type=int, help="override: single seed")
    p.add_argument("--alpha0", type=float, help="override: step-size scale")
    p.add_argument("--k0", type=float, help="override: step-budget scale")
    p.add_argument("--loss", choices=["square", "xent"], help="override: loss")
    p.add_argument("--mask", choices=["theory", "experiment"],
                   help="override: multilayer layer-training mask")
    p.add_argument("--out", help="override: output directory")


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(
        cfg, n=args.n, seed=args.seed, alpha0=args.alpha0, k0=args.k0,
        loss=args.loss, mask=args.mask, out=args.out)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_train(args) -> int:
    cfg = _resolve_config(args)
    task = harness.prepare_task(cfg)
    out = _out_dir(cfg)
    n, seed = cfg.widths[0], cfg.seeds[0]
    result = harness.train_cell(cfg, task, n, seed)
    steps = int(round(cfg.k0 * n))
    ckpt = out / f"{cfg.model}_n{n}_seed{seed}.json"
    save_checkpoint(result.params, ckpt, seed=seed, step=steps)
    trace_path = out / f"train_trace_n{n}_seed{seed}.csv"
    with open(trace_path, "w", newline="") as f:
        f.write("step,loss\n")
        for step, loss in result.trace:
            f.write(f"{step},{loss:.17g}\n")
    eval_loss = result.params.loss(task.eval_ds, LossKind(cfg.loss))
    eval_error = result.params.error(task.eval_ds)
    print(f"wrote {ckpt}")
    print(f"wrote {trace_path}")
    print(f"eval_loss={eval_loss:.17g} eval_error={eval_error:.17g}")
    return 0


def _cmd_dropout_eval(args) -> int:
    cfg = _resolve_config(args)
    task = harness.prepare_task(cfg)
    out = _out_dir(cfg)
    n, seed = cfg.widths[0], cfg.seeds[0]
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
    else:
        params = harness.train_cell(cfg, task, n, seed).params
    kind = LossKind(cfg.loss)
    dropped = harness._dropout_net(cfg, params, cfg.dropout_fraction)
    full_loss = params.loss(task.eval_ds, kind)
    drop_loss = dropped.loss(task.eval_ds, kind)
    path = out / "dropout_eval.csv"
    with open(path, "w", newline="") as f:
        f.write("n,seed,fraction,eval_loss,eval_error,"
                "dropout_loss,dropout_error,eps_d\n")
        f.write(",".join(harness._fmt(v) for v in (
            n, seed, cfg.dropout_fraction, full_loss,
            params.error(task.eval_ds), drop_loss,
            dropped.error(task.eval_ds), abs(full_loss - drop_loss))) + "\n")
    print(f"wrote {path}")
    return 0


def _cmd_connect(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    seed_a = args.seed_a if args.seed_a is not None else cfg.seeds[0]
    seed_b = (args.seed_b if args.seed_b is not None
              else (cfg.seeds[1] if len(cfg.seeds) > 1 else cfg.seeds[0] + 1))
    result = harness.run_connectivity(cfg, seed_a, seed_b, out_dir=out)
    save_checkpoint(result.params_a, out / "connect_theta_a.json", seed=seed_a)
    save_checkpoint(result.params_b, out / "connect_theta_b.json", seed=seed_b)
    for name in ("connect_loss.csv", "connect_error.csv",
                 "connect_bound.csv", "connect_theta_a.json",
                 "connect_theta_b.json"):
        print(f"wrote {out / name}")
    print(f"eps_c={result.loss_profile.eps_c:.17g} "
          f"loss_bound={result.loss_bound:.17g}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    path = out / "sweep.csv"
    result = harness.run_dropout_sweep(cfg, out_path=path)
    means = result.mean_eps_d_by_width()
    print(f"wrote {path}")
    if len(means) >= 2:
        slope = harness.loglog_slope(list(means), list(means.values()))
        print(f"loglog_slope={slope:.17g}")
    return 0


def _cmd_oracle(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    path = out / "oracle.csv"
    harness.run_oracle_convergence(cfg, out_path=path)
    print(f"wrote {path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _resolve_config(args)
    out = _out_dir(cfg)
    path = out / "compare.csv"
    harness.run_dropout_compare(cfg, out_path=path)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfpaths",
        description="Mean-field-scaled SGD training with dropout-stability "
                    "and landscape-connectivity measurements.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one (width, seed) cell")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("dropout-eval",
                       help="measure the dropout gap of a trained network")
    _add_common(p)
    p.add_argument("--checkpoint", help="evaluate this checkpoint instead "
                                        "of training")
    p.set_defaults(func=_cmd_dropout_eval)

    p = sub.add_parser("connect",
                       help="train two solutions and profile the connecting path")
    _add_common(p)
    p.add_argument("--seed-a", type=int, help="seed of the first solution")
    p.add_argument("--seed-b", type=int, help="seed of the second solution")
    p.set_defaults(func=_cmd_connect)

    p = sub.add_parser("sweep", help="dropout-gap sweep over widths and seeds")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle",
                       help="compare SGD against the particle integrator")
    _add_common(p)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("compare",
                       help="full-vs-dropout metrics over training")
    _add_common(p)
    p.set_defaults(func=_cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(json.dumps({"error": {"type": type(e).__name__,
                                    "message": str(e)}}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
