"""Generator / AR training loop tests: overfit capacity, the CE identity,
determinism, and failure modes."""

import warnings

import numpy as np
import pytest

from slaterank.ar import init_ar_params
from slaterank.data import ExposureLog, FeedbackMatrix, RequestBatch
from slaterank.errors import DataError, InvalidSlateError, NumericsError
from slaterank.generator import GeneratorConfig, init_generator_params
from slaterank.objectives import UtilitySpec
from slaterank.training import (
    CE_ONLY_TAU,
    TrainStep,
    steps_to_csv,
    train_ar,
    train_generator,
)

SMALL = GeneratorConfig(n_max=6, m=3, d=8, h=2, L=2, d_x=4, d_t=5, seed=0)
CLICK = UtilitySpec(types=("click",), weights=(1.0,), tau=1.0)


def make_log(request_id, rng, feedback_value, n=5, slate=(2, 0, 4)):
    feats = rng.normal(size=(n, SMALL.d_x))
    fb = FeedbackMatrix(values=np.full((1, len(slate)), float(feedback_value)),
                        types=("click",))
    req = RequestBatch(request_id=request_id, user_id=0,
                       item_ids=np.arange(n), features=feats,
                       exposed=tuple(slate), feedback=fb)
    return ExposureLog(req)


def mixed_logs(count, seed=0):
    rng = np.random.default_rng(seed)
    return [make_log(i, rng, feedback_value=i % 2) for i in range(count)]


def test_single_request_overfit_ce():
    log = make_log(0, np.random.default_rng(1), feedback_value=1)
    params = init_generator_params(SMALL)
    steps = []
    train_generator([log], params, SMALL, CLICK, lr=5e-3, epochs=500,
                    batch_size=1, objective="ce", step_log=steps)
    assert len(steps) == 500
    assert steps[-1].ce_or_ul < 0.1
    assert steps[-1].total < steps[0].total


def test_ce_objective_is_identity_on_positive_logs():
    logs = [make_log(i, np.random.default_rng(i), feedback_value=1)
            for i in range(8)]
    always_positive = UtilitySpec(types=("click",), weights=(1.0,), tau=-5.0)

    params_a = init_generator_params(SMALL)
    steps_a = []
    train_generator(logs, params_a, SMALL, always_positive, lr=1e-3, epochs=3,
                    batch_size=4, omega=0.0, objective="ul", seed=7,
                    step_log=steps_a)

    params_b = init_generator_params(SMALL)
    steps_b = []
    train_generator(logs, params_b, SMALL, CLICK, lr=1e-3, epochs=3,
                    batch_size=4, omega=0.0, objective="ce", seed=7,
                    step_log=steps_b)

    assert [s.total for s in steps_a] == [s.total for s in steps_b]
    assert all(s.positive_fraction == 1.0 for s in steps_b)
    for name, tensor in params_a.items():
        assert np.array_equal(tensor.data, params_b[name].data), name
    assert CE_ONLY_TAU < -1e29


def test_mixed_logs_hit_both_branches():
    logs = mixed_logs(12)
    params = init_generator_params(SMALL)
    steps = []
    train_generator(logs, params, SMALL, CLICK, epochs=1, batch_size=12,
                    step_log=steps)
    assert len(steps) == 1
    assert 0.0 < steps[0].positive_fraction < 1.0
    assert np.isfinite(steps[0].total)

    csv = steps_to_csv(steps)
    header, row, trailer = csv.split("\n")
    assert header == TrainStep.csv_header()
    assert row.startswith("0,")
    assert trailer == ""
    assert float(row.split(",")[5]) == steps[0].positive_fraction


def test_rejects_bad_logs():
    params = init_generator_params(SMALL)
    with pytest.raises(DataError):
        train_generator([], params, SMALL, CLICK)
    # Exposure-less requests cannot even become log entries.
    with pytest.raises(InvalidSlateError):
        ExposureLog(RequestBatch(request_id=3, user_id=0,
                                 item_ids=np.arange(5),
                                 features=np.zeros((5, 4))))
    with pytest.raises(DataError):
        train_generator(mixed_logs(2), params, SMALL, CLICK, objective="mle")


def test_nan_loss_aborts_with_location():
    logs = mixed_logs(4)
    params = init_generator_params(SMALL)
    params["embed.x.w"].data[0, 0] = np.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(NumericsError, match="request"):
            train_generator(logs, params, SMALL, CLICK, epochs=1, batch_size=4)


def test_training_is_seed_deterministic():
    logs = mixed_logs(10)

    def run(seed):
        params = init_generator_params(SMALL)
        train_generator(logs, params, SMALL, CLICK, epochs=2, batch_size=4,
                        seed=seed)
        return params

    a, b, c = run(3), run(3), run(4)
    for name, tensor in a.items():
        assert np.array_equal(tensor.data, b[name].data), name
    assert any(not np.array_equal(tensor.data, c[name].data)
               for name, tensor in a.items())


def test_train_ar_fits_logged_slates():
    rng = np.random.default_rng(5)
    logs = [make_log(i, rng, feedback_value=1, slate=(1, 3, 0))
            for i in range(10)]
    params = init_ar_params(SMALL)
    losses = []
    train_ar(logs, params, SMALL, lr=5e-3, epochs=15, batch_size=10,
             loss_log=losses)
    assert len(losses) == 15
    assert np.mean(losses[-3:]) < 0.5 * np.mean(losses[:3])

    with pytest.raises(DataError):
        train_ar([], params, SMALL)
