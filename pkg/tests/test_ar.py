import numpy as np
import pytest

from helpers import gradcheck, inflate_weights
from slaterank.ar import ar_decode, ar_forward, ar_sequence_loss, init_ar_params
from slaterank.data import RequestBatch
from slaterank.errors import InfeasibleSlateError, InvalidSlateError, ShapeError
from slaterank.generator import FORWARD_PASSES, GeneratorConfig, init_generator_params
from slaterank.numerics import AdamState, Tape, adam_step

SMALL = GeneratorConfig(n_max=6, m=3, d=8, h=2, L=2, d_x=4, d_t=5, seed=0)


def make_request(rng, n, exposed=None, d_x=SMALL.d_x):
    return RequestBatch(
        request_id=0,
        user_id=0,
        item_ids=np.arange(n),
        features=rng.normal(size=(n, d_x)),
        exposed=exposed,
    )


def test_shares_candidate_encoder_with_generator():
    gen = init_generator_params(SMALL)
    ar = init_ar_params(SMALL)
    # same builder, same seed: the encoder halves are identical arrays
    assert np.array_equal(gen["embed.x.w"].data, ar["embed.x.w"].data)
    assert np.array_equal(gen["cand.1.attn.wq"].data, ar["cand.1.attn.wq"].data)
    assert "dec.bos" in ar and "dec.bos" not in gen
    assert "pos.table" in gen and "pos.table" not in ar


def test_forward_rows_are_stochastic_and_exclude_prefix():
    rng = np.random.default_rng(0)
    params = init_ar_params(SMALL)
    req = make_request(rng, 5)
    probs = ar_forward(req, params, SMALL, prefix=(3, 0))
    assert probs.data.shape == (3, 5)
    assert np.abs(probs.data.sum(axis=1) - 1.0).max() < 1e-9
    assert probs.data[1, 3] == 0.0
    assert probs.data[2, 3] == 0.0 and probs.data[2, 0] == 0.0
    assert probs.data[0, 3] > 0.0  # row 0 conditions on nothing


def test_forward_validates_prefix():
    rng = np.random.default_rng(1)
    params = init_ar_params(SMALL)
    req = make_request(rng, 4)
    with pytest.raises(InvalidSlateError):
        ar_forward(req, params, SMALL, prefix=(1, 1))
    with pytest.raises(InvalidSlateError):
        ar_forward(req, params, SMALL, prefix=(9,))
    with pytest.raises(ShapeError):
        ar_forward(req, params, SMALL, prefix=(0, 1, 2))  # m=3 rows max


def test_causal_consistency_between_training_and_decode_rows():
    # teacher-forced row t must equal the incremental forward's last row for
    # the same prefix: later inputs may not leak backwards
    rng = np.random.default_rng(2)
    params = init_ar_params(SMALL)
    req = make_request(rng, 6)
    y = (4, 1, 5)
    full = ar_forward(req, params, SMALL, prefix=y[:-1]).data
    for t in range(3):
        step = ar_forward(req, params, SMALL, prefix=y[:t]).data
        assert np.allclose(step[-1], full[t], atol=1e-12)


def test_sequence_loss_gradient_matches_finite_differences():
    cfg = GeneratorConfig(n_max=5, m=3, d=8, h=2, L=1, d_x=4, d_t=5, seed=3)
    params = init_ar_params(cfg)
    inflate_weights(params, 15.0)
    rng = np.random.default_rng(4)
    req = make_request(rng, 5, exposed=(2, 0, 4))

    def make_loss(tape):
        return ar_sequence_loss(req, params, cfg, tape)

    wrt = [params["dec.bos"], params["embed.x.w"], params["dec.0.cross.wk"]]
    assert gradcheck(make_loss, wrt) < 1e-4


def test_sequence_loss_validates_slate():
    rng = np.random.default_rng(5)
    params = init_ar_params(SMALL)
    with pytest.raises(InvalidSlateError):
        ar_sequence_loss(make_request(rng, 5), params, SMALL, Tape())
    with pytest.raises(ShapeError):
        ar_sequence_loss(make_request(rng, 5, exposed=(0, 1)), params, SMALL, Tape())
    with pytest.raises(InvalidSlateError):
        ar_sequence_loss(make_request(rng, 5, exposed=(0, 0, 1)), params, SMALL,
                         Tape())


def test_decode_uses_exactly_m_forward_passes():
    rng = np.random.default_rng(6)
    params = init_ar_params(SMALL)
    req = make_request(rng, 6)
    FORWARD_PASSES.reset()
    slate = ar_decode(req, params, SMALL)
    assert FORWARD_PASSES.count == SMALL.m
    assert slate.method == "ar" and slate.m == SMALL.m


def test_decode_never_repeats_and_is_deterministic():
    rng = np.random.default_rng(7)
    params = init_ar_params(SMALL)
    for _ in range(30):
        req = make_request(rng, int(rng.integers(3, 7)))
        slate = ar_decode(req, params, SMALL)
        assert len(set(slate.indices)) == SMALL.m
        assert all(0 <= i < req.n for i in slate.indices)
        assert ar_decode(req, params, SMALL) == slate


def test_decode_infeasible_when_m_exceeds_n():
    rng = np.random.default_rng(8)
    params = init_ar_params(SMALL)
    with pytest.raises(InfeasibleSlateError):
        ar_decode(make_request(rng, 2), params, SMALL)


def test_single_request_overfit_recovers_logged_slate():
    cfg = GeneratorConfig(n_max=5, m=2, d=8, h=2, L=1, d_x=4, d_t=5, seed=9)
    params = init_ar_params(cfg)
    rng = np.random.default_rng(10)
    req = make_request(rng, 5, exposed=(3, 1))
    state = AdamState(lr=5e-3)
    loss = None
    for _ in range(200):
        tape = Tape()
        loss = ar_sequence_loss(req, params, cfg, tape)
        tape.backward(loss)
        adam_step(params, state)
    assert loss.item() < 0.1
    assert ar_decode(req, params, cfg).indices == (3, 1)
