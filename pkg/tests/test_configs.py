"""Config text format: round trips, overrides, and pipeline agreement."""

import pytest

from slaterank.configs import (
    RunConfig,
    TrainConfig,
    apply_overrides,
    check_pipeline,
    load_config,
    parse_config,
    save_config,
    serialize_config,
)
from slaterank.errors import ConfigError


def test_defaults_are_mutually_consistent():
    run = RunConfig()
    check_pipeline(run)
    assert run.train.lr == 1e-3
    assert run.train.batch_size == 256
    assert run.decode.alpha == 0.1
    assert run.train.omega == 0.01
    assert run.train.rho == 0.5
    assert run.utility.tau == 1.0


def test_round_trip_is_identity():
    run = RunConfig()
    text = serialize_config(run)
    again = parse_config(text)
    assert again == run
    assert serialize_config(again) == text

    # A non-default config survives the same loop.
    run = apply_overrides(run, [
        "seed=7",
        "num_requests=123",
        "generator.d=16",
        "generator.h=2",
        "world.posbias=1.0,0.5",
        "world.n_candidates=9",
        "utility.types=click,like,share",
        "utility.weights=1.0,0.25,0.0",
        "paths.train_log=/tmp/x.jsonl",
        "train.objective=ce",
    ])
    text = serialize_config(run)
    again = parse_config(text)
    assert again == run
    assert serialize_config(again) == text


def test_parse_ignores_comments_and_blank_lines():
    run = parse_config("# a comment\n\nseed=3\n  train.lr=0.01  \n")
    assert run.seed == 3
    assert run.train.lr == 0.01


def test_overrides_layer_on_top():
    base = parse_config("generator.d=16\ngenerator.h=2\n")
    out = apply_overrides(base, ["train.epochs=5"])
    assert out.generator.d == 16
    assert out.train.epochs == 5
    assert out.world == base.world


def test_tuples_and_floats_serialize_exactly():
    run = apply_overrides(RunConfig(), ["world.posbias=0.9,0.30000000000000004"])
    line = [l for l in serialize_config(run).splitlines()
            if l.startswith("world.posbias=")][0]
    assert line == "world.posbias=0.9,0.30000000000000004"
    assert parse_config(serialize_config(run)).world.posbias == (0.9, 0.1 + 0.2)


def test_unknown_keys_and_bad_values_raise():
    with pytest.raises(ConfigError):
        parse_config("nonsense.key=1\n")
    with pytest.raises(ConfigError):
        parse_config("generator.banana=1\n")
    with pytest.raises(ConfigError):
        parse_config("generator.d=abc\n")
    with pytest.raises(ConfigError):
        parse_config("just a line without equals\n")
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), ["no-equals-here"])


def test_section_validation_still_applies():
    with pytest.raises(ConfigError):
        parse_config("generator.d=30\ngenerator.h=4\n")
    with pytest.raises(ConfigError):
        parse_config("train.objective=mse\n")
    with pytest.raises(ConfigError):
        parse_config("num_requests=0\n")
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1.0)


def test_file_round_trip(tmp_path):
    run = apply_overrides(RunConfig(), ["seed=11", "decode.method=beam"])
    path = tmp_path / "run.cfg"
    save_config(run, path)
    assert load_config(path) == run
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_check_pipeline_reports_mismatches():
    run = apply_overrides(RunConfig(), ["generator.d_x=4"])
    with pytest.raises(ConfigError, match="d_x"):
        check_pipeline(run)

    run = apply_overrides(RunConfig(), ["world.posbias=1.0,0.5"])
    with pytest.raises(ConfigError, match="m="):
        check_pipeline(run)

    run = apply_overrides(RunConfig(), ["utility.types=click",
                                        "utility.weights=1.0"])
    with pytest.raises(ConfigError, match="missing weights"):
        check_pipeline(run)

    run = apply_overrides(RunConfig(), ["generator.n_max=10"])
    with pytest.raises(ConfigError, match="n_max"):
        check_pipeline(run)
