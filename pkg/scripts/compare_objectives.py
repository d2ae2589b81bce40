#!/usr/bin/env python3
"""Cross-entropy imitation vs unlikelihood training, head to head.

Trains two generators on the same random-exposure log, where slate
utilities are mixed, then reports what each one does on held-out requests:
mean oracle expected utility of its decoded slates, and how much
likelihood it still assigns to the worst logged slates. Unlikelihood
training should win on the first number and sit lower on the second.
"""

import argparse
import warnings

import numpy as np

from slaterank.decoding import DecodeConfig, contrastive_decode
from slaterank.generator import GeneratorConfig, forward, init_generator_params
from slaterank.objectives import UtilitySpec, sequence_log_likelihood, utility
from slaterank.simulator import World, WorldConfig, gen_log, gen_request, oracle_expected_utility
from slaterank.training import train_generator

CLICKS = UtilitySpec(("click", "like"), (1.0, 0.0), 1.0)  # R = click count


def cli():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--requests", type=int, default=4000)
    p.add_argument("--held-out", type=int, default=500)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--seed", type=int, default=11)
    return p.parse_args()


def main():
    a = cli()
    world = World(WorldConfig())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        logs = gen_log(world, "random", a.requests, np.random.default_rng(a.seed))
    r = np.array([utility(e.feedback, CLICKS) for e in logs])
    print(f"log: {len(logs)} random-policy requests, "
          f"{np.mean(r < CLICKS.tau):.0%} below tau={CLICKS.tau}")

    cfg = GeneratorConfig(d=16, h=2, L=1, d_t=8)
    models = {}
    for objective in ("ce", "ul"):
        params = init_generator_params(cfg)
        train_generator(logs, params, cfg, CLICKS, lr=1e-3, epochs=a.epochs,
                        batch_size=256, objective=objective, seed=0)
        models[objective] = params

    held = [gen_request(world, rng, 10_000_000 + i)
            for i, rng in enumerate(np.random.default_rng(999).spawn(a.held_out))]
    decode = DecodeConfig()
    bottom = [logs[i] for i in np.argsort(r, kind="stable")[: len(logs) // 10]]
    for name, params in models.items():
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            eu = np.mean([
                oracle_expected_utility(
                    world, req, contrastive_decode(forward(req, params, cfg), decode),
                    CLICKS)
                for req in held])
        ll = np.mean([
            sequence_log_likelihood(forward(e.request, params, cfg), e.exposed)
            for e in bottom])
        print(f"{name}: held-out oracle E[utility] {eu:.4f}, "
              f"bottom-decile logged log-likelihood {ll:.3f}")


if __name__ == "__main__":
    main()
