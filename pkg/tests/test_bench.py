"""Bench harness tests. Wall-clock values are machine-dependent, so the
strict assertions here are structural (counts, shapes, warmup handling);
the acceptance suite checks the timing ratios at full step counts."""

import time

import pytest

from slaterank.bench import BenchReport, _timed, run_bench
from slaterank.configs import RunConfig
from slaterank.errors import ConfigError


def test_report_structure_and_forward_counts():
    rep = run_bench(RunConfig(), steps=12, warmup=2, batch_size=2,
                    sweep_m=(1, 2), ratio_m=3)
    assert rep.nar_forwards_per_request == 1
    assert rep.ar_forwards_per_request == rep.m == 6
    for value in (rep.nar_infer_mean, rep.ar_infer_mean,
                  rep.nar_train_mean, rep.ar_train_mean, rep.infer_ratio):
        assert value > 0.0
    assert rep.sweep_m == (1, 2)
    assert len(rep.sweep_nar) == len(rep.sweep_ar) == 2

    header = rep.csv_header().split(",")
    row = rep.csv_row().split(",")
    assert len(header) == len(row)
    assert "nar_infer_m1" in header and "ar_infer_m2" in header
    assert rep.to_csv().count("\n") == 2
    assert isinstance(rep, BenchReport)


def test_timed_discards_warmup():
    def slow_then_fast(task):
        if task < 10:
            time.sleep(0.005)

    mean, std = _timed(slow_then_fast, range(12), warmup=10)
    assert mean < 0.003
    assert std >= 0.0


def test_bench_validation():
    with pytest.raises(ConfigError):
        run_bench(RunConfig(), steps=0)
    with pytest.raises(ConfigError):
        run_bench(RunConfig(), batch_size=0)
