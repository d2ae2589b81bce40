"""Latency harness: one-shot matching generator vs sequential pointer decode.

Both models share the candidate encoder and run on the same requests, so
the measured gap isolates autoregression. Inference steps are single
requests (forward + decode); training steps are one minibatch Adam update
through the real training loops. The first `warmup` steps of every series
are discarded by contract. Wall-clock numbers vary across machines; the
stable claims are the forward-pass counts and the scaling shape, which is
why the report also records exact counts and linear-fit slopes over m.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .ar import ar_decode, init_ar_params
from .configs import RunConfig
from .decoding import DecodeConfig, decode
from .errors import ConfigError
from .generator import FORWARD_PASSES, forward, init_generator_params
from .objectives import UtilitySpec
from .simulator import World, gen_log, gen_request
from .training import train_ar, train_generator


@dataclass(frozen=True)
class BenchReport:
    batch_size: int
    m: int
    nar_infer_mean: float
    nar_infer_std: float
    ar_infer_mean: float
    ar_infer_std: float
    nar_train_mean: float
    nar_train_std: float
    ar_train_mean: float
    ar_train_std: float
    nar_forwards_per_request: int
    ar_forwards_per_request: int
    sweep_m: tuple[int, ...]
    sweep_nar: tuple[float, ...]
    sweep_ar: tuple[float, ...]
    nar_slope: float
    ar_slope: float
    ratio_m: int
    infer_ratio: float

    def csv_header(self) -> str:
        sweep_cols = []
        for mv in self.sweep_m:
            sweep_cols += [f"nar_infer_m{mv}", f"ar_infer_m{mv}"]
        return ",".join([
            "batch_size", "m",
            "nar_infer_mean", "nar_infer_std", "ar_infer_mean", "ar_infer_std",
            "nar_train_mean", "nar_train_std", "ar_train_mean", "ar_train_std",
            "nar_forwards_per_request", "ar_forwards_per_request",
            *sweep_cols, "nar_slope", "ar_slope", "ratio_m", "infer_ratio"])

    def csv_row(self) -> str:
        cells = [str(self.batch_size), str(self.m),
                 repr(self.nar_infer_mean), repr(self.nar_infer_std),
                 repr(self.ar_infer_mean), repr(self.ar_infer_std),
                 repr(self.nar_train_mean), repr(self.nar_train_std),
                 repr(self.ar_train_mean), repr(self.ar_train_std),
                 str(self.nar_forwards_per_request),
                 str(self.ar_forwards_per_request)]
        for nar_t, ar_t in zip(self.sweep_nar, self.sweep_ar):
            cells += [repr(nar_t), repr(ar_t)]
        cells += [repr(self.nar_slope), repr(self.ar_slope),
                  str(self.ratio_m), repr(self.infer_ratio)]
        return ",".join(cells)

    def to_csv(self) -> str:
        return self.csv_header() + "\n" + self.csv_row() + "\n"


def _timed(fn, tasks, warmup: int) -> tuple[float, float]:
    times = []
    for i, task in enumerate(tasks):
        start = time.perf_counter()
        fn(task)
        elapsed = time.perf_counter() - start
        if i >= warmup:
            times.append(elapsed)
    arr = np.asarray(times)
    return float(arr.mean()), float(arr.std())


def _time_inference(kind: str, requests, params, cfg,
                    decode_cfg: DecodeConfig, warmup: int) -> tuple[float, float, int]:
    """Mean/std seconds per request plus the exact forward-pass count."""
    if kind == "nar":
        def step(req):
            decode(forward(req, params, cfg), decode_cfg)
    else:
        def step(req):
            ar_decode(req, params, cfg)
    FORWARD_PASSES.reset()
    mean, std = _timed(step, requests, warmup)
    total = FORWARD_PASSES.count
    if total % len(requests):
        raise ConfigError(f"forward count {total} not divisible by "
                          f"{len(requests)} requests")
    return mean, std, total // len(requests)


def run_bench(run: RunConfig, *, steps: int = 100, warmup: int = 10,
              batch_size: int = 8, sweep_m: tuple[int, ...] = (1, 2, 4, 6, 8),
              ratio_m: int = 5) -> BenchReport:
    if steps < 1 or warmup < 0 or batch_size < 1:
        raise ConfigError("steps, warmup and batch_size must be positive")
    world = World(run.world)
    rng = np.random.default_rng(run.seed)
    requests = [gen_request(world, rng, request_id=i)
                for i in range(steps + warmup)]
    decode_cfg = run.decode

    def infer_at(mv: int) -> tuple[tuple[float, float, int], tuple[float, float, int]]:
        cfg = replace(run.generator, m=mv)
        nar = _time_inference("nar", requests, init_generator_params(cfg),
                              cfg, decode_cfg, warmup)
        ar = _time_inference("ar", requests, init_ar_params(cfg), cfg,
                             decode_cfg, warmup)
        return nar, ar

    # Main timing at the configured slate size.
    (nar_mean, nar_std, nar_fwd), (ar_mean, ar_std, ar_fwd) = infer_at(run.generator.m)

    # Slate-size sweep for the scaling shape.
    sweep_nar, sweep_ar = [], []
    for mv in sweep_m:
        (n_mean, _, _), (a_mean, _, _) = infer_at(mv)
        sweep_nar.append(n_mean)
        sweep_ar.append(a_mean)
    nar_slope = float(np.polyfit(sweep_m, sweep_nar, 1)[0])
    ar_slope = float(np.polyfit(sweep_m, sweep_ar, 1)[0])

    (r_nar_mean, _, _), (r_ar_mean, _, _) = infer_at(ratio_m)

    # Training steps: one real minibatch update per timed step.
    spec: UtilitySpec = run.utility
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        logs = gen_log(world, "random", batch_size, rng)
    gen_params = init_generator_params(run.generator)
    ar_params = init_ar_params(run.generator)

    def nar_train_step(_):
        train_generator(logs, gen_params, run.generator, spec,
                        lr=run.train.lr, epochs=1, batch_size=batch_size,
                        omega=run.train.omega, rho=run.train.rho,
                        objective=run.train.objective, seed=0)

    def ar_train_step(_):
        train_ar(logs, ar_params, run.generator, lr=run.train.lr, epochs=1,
                 batch_size=batch_size, seed=0)

    ticks = range(steps + warmup)
    nar_train_mean, nar_train_std = _timed(nar_train_step, ticks, warmup)
    ar_train_mean, ar_train_std = _timed(ar_train_step, ticks, warmup)

    return BenchReport(
        batch_size=batch_size, m=run.generator.m,
        nar_infer_mean=nar_mean, nar_infer_std=nar_std,
        ar_infer_mean=ar_mean, ar_infer_std=ar_std,
        nar_train_mean=nar_train_mean, nar_train_std=nar_train_std,
        ar_train_mean=ar_train_mean, ar_train_std=ar_train_std,
        nar_forwards_per_request=nar_fwd, ar_forwards_per_request=ar_fwd,
        sweep_m=tuple(sweep_m), sweep_nar=tuple(sweep_nar),
        sweep_ar=tuple(sweep_ar), nar_slope=nar_slope, ar_slope=ar_slope,
        ratio_m=ratio_m,
        infer_ratio=r_ar_mean / r_nar_mean)
