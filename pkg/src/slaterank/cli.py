"""Command-line entry points.

One flat config (see configs.py) drives every subcommand; `--set key=value`
overrides individual keys on top of `--config`. Exit codes: 0 success,
1 usage/config problems, 2 data problems (missing or malformed logs,
checkpoint mismatches), 3 numeric failures.

Pointwise report metrics (AUC, LogLoss, NDCG) always target the first
configured interaction type; Recall@k targets exposure prediction.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from .ar import init_ar_params
from .bench import run_bench
from .configs import RunConfig, apply_overrides, check_pipeline, load_config
from .data import read_logs, write_jsonl, write_logs
from .decoding import sample_slates
from .errors import (
    ConfigError,
    CheckpointError,
    DataError,
    DegenerateLabelsError,
    NumericsError,
    SlaterankError,
)
from .evaluator import init_evaluator_params, score_slate, select_best, train_evaluator
from .generator import forward, init_generator_params
from .metrics import EvalReport, auc, logloss, ndcg_list, recall_at_k
from .numerics import load_checkpoint, save_checkpoint
from .simulator import POLICIES, World, gen_log
from .training import steps_to_csv, train_ar, train_generator


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; remap onto ConfigError
    so every usage problem leaves the process with code 1."""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="slaterank", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config key (repeatable)")

    p = sub.add_parser("simulate", help="log synthetic requests to JSONL")
    common(p)
    p.add_argument("--policy", choices=POLICIES, default="random")
    p.add_argument("--out", help="output log path (default: paths.train_log)")
    p.add_argument("--num-requests", type=int, dest="num_requests")
    p.add_argument("--start-id", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train-generator", help="fit the one-shot generator")
    common(p)
    p.set_defaults(func=cmd_train_generator)

    p = sub.add_parser("train-evaluator", help="fit the listwise evaluator")
    common(p)
    p.set_defaults(func=cmd_train_evaluator)

    p = sub.add_parser("train-ar", help="fit the sequential pointer baseline")
    common(p)
    p.set_defaults(func=cmd_train_ar)

    p = sub.add_parser("generate", help="rerank logged requests end to end")
    common(p)
    p.add_argument("--out", help="slates JSONL path (default: out_dir/slates.jsonl)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score a test log into an EvalReport")
    common(p)
    p.add_argument("--out", help="report CSV path (default: out_dir/eval.csv)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="NAR vs AR latency comparison")
    common(p)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--out", help="report CSV path (default: out_dir/bench.csv)")
    p.set_defaults(func=cmd_bench)

    return parser


def _load_run(args) -> RunConfig:
    run = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(run, args.set)


def _out_path(run: RunConfig, override, default_name: str) -> str:
    if override:
        return override
    os.makedirs(run.paths.out_dir, exist_ok=True)
    return os.path.join(run.paths.out_dir, default_name)


def _quiet_world_call(fn, *args, **kwargs):
    """Run a simulator call, folding repeated clamp warnings into one note."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        result = fn(*args, **kwargs)
    clamps = sum(issubclass(w.category, RuntimeWarning) for w in caught)
    if clamps:
        print(f"note: {clamps} oracle probabilities clamped into [0, 1]",
              file=sys.stderr)
    return result


def _generator_meta(cfg) -> dict:
    return {"kind": "generator", "n_max": cfg.n_max, "m": cfg.m, "d": cfg.d,
            "h": cfg.h, "L": cfg.L, "d_x": cfg.d_x, "d_t": cfg.d_t}


def _evaluator_meta(cfg) -> dict:
    return {"kind": "evaluator", "d": cfg.d, "h": cfg.h, "d_x": cfg.d_x,
            "m": cfg.m, "types": list(cfg.types)}


def _load_matching(path, want: dict):
    params, meta = load_checkpoint(path)
    for key, value in want.items():
        if meta.get(key) != value:
            raise CheckpointError(
                f"{path}: checkpoint has {key}={meta.get(key)!r}, "
                f"config expects {value!r}")
    return params


def _check_log_shapes(logs, cfg) -> None:
    req = logs[0].request
    if req.features.shape[1] != cfg.d_x:
        raise ConfigError(f"log features have width {req.features.shape[1]}, "
                          f"config d_x={cfg.d_x}")
    if len(logs[0].exposed) != cfg.m:
        raise ConfigError(f"log slates have {len(logs[0].exposed)} positions, "
                          f"config m={cfg.m}")


def cmd_simulate(run: RunConfig, args) -> int:
    world = World(run.world)
    count = args.num_requests if args.num_requests else run.num_requests
    rng = np.random.default_rng(run.seed)
    logs = _quiet_world_call(gen_log, world, args.policy, count, rng,
                             start_id=args.start_id)
    out = args.out or run.paths.train_log
    write_logs(out, logs)
    print(f"wrote {len(logs)} {args.policy} requests to {out}")
    return 0


def cmd_train_generator(run: RunConfig, args) -> int:
    logs = read_logs(run.paths.train_log)
    if not logs:
        raise DataError(f"{run.paths.train_log} is empty")
    _check_log_shapes(logs, run.generator)
    uncovered = [t for t in logs[0].feedback.types if t not in run.utility.types]
    if uncovered:
        raise ConfigError(f"utility spec has no weights for logged "
                          f"interaction types {uncovered}")
    params = init_generator_params(run.generator)
    steps = []
    train_generator(logs, params, run.generator, run.utility,
                    lr=run.train.lr, epochs=run.train.epochs,
                    batch_size=run.train.batch_size, omega=run.train.omega,
                    rho=run.train.rho, objective=run.train.objective,
                    seed=run.train.seed, step_log=steps)
    save_checkpoint(run.paths.generator_checkpoint, params,
                    meta=_generator_meta(run.generator))
    curve = _out_path(run, None, "generator_loss.csv")
    with open(curve, "w", encoding="utf-8") as fh:
        fh.write(steps_to_csv(steps))
    print(f"trained generator on {len(logs)} requests "
          f"({run.train.objective}, final loss {steps[-1].total:.4f}); "
          f"checkpoint {run.paths.generator_checkpoint}, curve {curve}")
    return 0


def cmd_train_evaluator(run: RunConfig, args) -> int:
    logs = read_logs(run.paths.train_log)
    if not logs:
        raise DataError(f"{run.paths.train_log} is empty")
    _check_log_shapes(logs, run.evaluator)
    if tuple(logs[0].feedback.types) != tuple(run.evaluator.types):
        raise ConfigError(f"log feedback types {logs[0].feedback.types} do not "
                          f"match evaluator types {run.evaluator.types}")
    params = init_evaluator_params(run.evaluator)
    losses: list[float] = []
    train_evaluator(logs, params, run.evaluator, lr=run.train.lr,
                    epochs=run.train.epochs, batch_size=run.train.batch_size,
                    seed=run.train.seed, loss_log=losses)
    save_checkpoint(run.paths.evaluator_checkpoint, params,
                    meta=_evaluator_meta(run.evaluator))
    curve = _out_path(run, None, "evaluator_loss.csv")
    with open(curve, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        fh.writelines(f"{i},{loss!r}\n" for i, loss in enumerate(losses))
    print(f"trained evaluator on {len(logs)} requests "
          f"(final BCE {losses[-1]:.4f}); "
          f"checkpoint {run.paths.evaluator_checkpoint}, curve {curve}")
    return 0


def cmd_train_ar(run: RunConfig, args) -> int:
    logs = read_logs(run.paths.train_log)
    if not logs:
        raise DataError(f"{run.paths.train_log} is empty")
    _check_log_shapes(logs, run.generator)
    params = init_ar_params(run.generator)
    losses: list[float] = []
    train_ar(logs, params, run.generator, lr=run.train.lr,
             epochs=run.train.epochs, batch_size=run.train.batch_size,
             seed=run.train.seed, loss_log=losses)
    meta = dict(_generator_meta(run.generator), kind="ar")
    save_checkpoint(run.paths.ar_checkpoint, params, meta=meta)
    curve = _out_path(run, None, "ar_loss.csv")
    with open(curve, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        fh.writelines(f"{i},{loss!r}\n" for i, loss in enumerate(losses))
    print(f"trained AR baseline on {len(logs)} requests "
          f"(final CE {losses[-1]:.4f}); "
          f"checkpoint {run.paths.ar_checkpoint}, curve {curve}")
    return 0


def cmd_generate(run: RunConfig, args) -> int:
    gen_params = _load_matching(run.paths.generator_checkpoint,
                                _generator_meta(run.generator))
    ev_params = _load_matching(run.paths.evaluator_checkpoint,
                               _evaluator_meta(run.evaluator))
    logs = read_logs(run.paths.test_log)
    if not logs:
        raise DataError(f"{run.paths.test_log} is empty")
    _check_log_shapes(logs, run.generator)
    rng = np.random.default_rng(run.seed)
    rows = []
    for log in logs:
        req = log.request
        probs = forward(req, gen_params, run.generator)
        slates = sample_slates(probs, run.decode, rng)
        best = select_best(req, slates, ev_params, run.evaluator)
        utility = score_slate(req, best, ev_params, run.evaluator).utility
        rows.append({"request_id": req.request_id,
                     "slate": [int(i) for i in best.indices],
                     "utility": utility})
    out = _out_path(run, args.out, "slates.jsonl")
    write_jsonl(out, rows)
    mean_u = float(np.mean([r["utility"] for r in rows]))
    print(f"reranked {len(rows)} requests to {out} "
          f"(mean predicted utility {mean_u:.4f})")
    return 0


def cmd_evaluate(run: RunConfig, args) -> int:
    gen_params = _load_matching(run.paths.generator_checkpoint,
                                _generator_meta(run.generator))
    ev_params = _load_matching(run.paths.evaluator_checkpoint,
                               _evaluator_meta(run.evaluator))
    logs = read_logs(run.paths.test_log)
    if not logs:
        raise DataError(f"{run.paths.test_log} is empty")
    _check_log_shapes(logs, run.generator)
    _check_log_shapes(logs, run.evaluator)

    target = run.evaluator.types[0]
    m = run.generator.m
    ks = sorted({1, max(1, m // 2), m})
    recall_sums = {k: 0.0 for k in ks}
    scores, labels = [], []
    num_skipped = 0
    ndcg_values = []
    for log in logs:
        req = log.request
        probs = forward(req, gen_params, run.generator)
        for k in ks:
            recall_sums[k] += recall_at_k(probs, log.exposed, k)
        out = score_slate(req, log.exposed, ev_params, run.evaluator)
        row = out.scores[run.evaluator.types.index(target)]
        y = log.feedback.row(target)
        scores.extend(row)
        labels.extend(y)
        value = ndcg_list(row, y)
        if value is None:
            num_skipped += 1
        else:
            ndcg_values.append(value)
    if not ndcg_values:
        raise DegenerateLabelsError("every test list was skipped for NDCG")
    report = EvalReport(auc=auc(scores, labels),
                        logloss=logloss(scores, labels),
                        ndcg=float(np.mean(ndcg_values)),
                        recall={k: recall_sums[k] / len(logs) for k in ks},
                        num_requests=len(logs), num_lists=len(logs),
                        num_skipped=num_skipped)
    out_file = _out_path(run, args.out, "eval.csv")
    with open(out_file, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    print(report.pretty(), end="")
    print(f"report written to {out_file}")
    return 0


def cmd_bench(run: RunConfig, args) -> int:
    report = run_bench(run, steps=args.steps, warmup=args.warmup,
                       batch_size=args.batch)
    out_file = _out_path(run, args.out, "bench.csv")
    with open(out_file, "w", encoding="utf-8") as fh:
        fh.write(report.to_csv())
    print(f"inference s/request: nar {report.nar_infer_mean:.5f} "
          f"ar {report.ar_infer_mean:.5f} "
          f"(ratio at m={report.ratio_m}: {report.infer_ratio:.2f})")
    print(f"forward passes/request: nar {report.nar_forwards_per_request} "
          f"ar {report.ar_forwards_per_request}")
    print(f"inference slope vs m: nar {report.nar_slope:.6f} "
          f"ar {report.ar_slope:.6f}")
    print(f"report written to {out_file}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        run = _load_run(args)
        # Only bench mixes the world with both models in one process;
        # the other commands check their logs against their own config.
        if args.command == "bench":
            check_pipeline(run)
        return args.func(run, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, DegenerateLabelsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SlaterankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
