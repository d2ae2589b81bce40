#!/usr/bin/env python3
"""Drive the full desk pipeline through the CLI in a scratch directory.

Simulates a logged-exposure dataset, trains the slate generator and the
listwise evaluator, reranks a held-out log, scores it, and finishes with
the NAR-vs-AR latency bench. Everything lands under --out.
"""

import argparse
import sys
from pathlib import Path

from slaterank.cli import main


def run(args):
    print(f"$ slaterank {' '.join(args)}", flush=True)
    code = main(args)
    if code != 0:
        sys.exit(code)


def cli():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out", default="runs/pipeline", help="artifact directory")
    p.add_argument("--requests", type=int, default=5000,
                   help="training log size (the acceptance-scale run uses 50k)")
    p.add_argument("--test-requests", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=1)
    return p.parse_args()


def main_script():
    a = cli()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "run.cfg"
    cfg_path.write_text("\n".join([
        f"seed={a.seed}",
        f"num_requests={a.requests}",
        "generator.d=16",
        "generator.h=2",
        "generator.L=1",
        "generator.d_t=8",
        f"train.epochs={a.epochs}",
        f"paths.out_dir={out}",
        f"paths.train_log={out / 'train.jsonl'}",
        f"paths.test_log={out / 'test.jsonl'}",
        f"paths.generator_checkpoint={out / 'generator.npz'}",
        f"paths.evaluator_checkpoint={out / 'evaluator.npz'}",
        f"paths.ar_checkpoint={out / 'ar.npz'}",
    ]) + "\n")

    base = ["--config", str(cfg_path)]
    run(["simulate", *base, "--policy", "affinity_greedy"])
    run(["simulate", *base, "--policy", "affinity_greedy",
         "--out", str(out / "test.jsonl"),
         "--num-requests", str(a.test_requests),
         "--start-id", str(10 * a.requests)])
    run(["train-generator", *base])
    run(["train-evaluator", *base])
    run(["generate", *base, "--out", str(out / "slates.jsonl")])
    run(["evaluate", *base, "--out", str(out / "eval.csv")])
    run(["train-ar", *base])
    run(["bench", *base, "--steps", "50", "--warmup", "5",
         "--out", str(out / "bench.csv")])
    print(f"\nartifacts in {out}/: train.jsonl test.jsonl generator.npz "
          f"evaluator.npz ar.npz slates.jsonl eval.csv bench.csv")


if __name__ == "__main__":
    main_script()
