"""Listwise slate evaluator.

Scores a proposed slate as a whole: the chosen items' features, in slate
order, run through one self-attention + feed-forward block, then per-item
sigmoid heads predict each interaction type. Order enters through learned
position embeddings added to the item features. The overall utility is the
weighted sum of predicted scores, and `select_best` picks the highest-utility
slate from a candidate pool.

Training is plain off-policy regression: binary cross-entropy of each head
against the logged feedback on exposed slates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ExposureLog, RequestBatch
from .errors import (
    ConfigError,
    DataError,
    EmptyCandidatesError,
    InvalidSlateError,
    ShapeError,
)
from .generator import _build_attention, _build_ffn, _build_layer_norm, _ffn, _ln, multi_head_attention
from .numerics import AdamState, Params, Tape, Tensor, adam_step


@dataclass(frozen=True)
class EvaluatorConfig:
    """Interaction heads, their selection weights, and block dimensions.

    Zero weights are allowed (a head can be trained but ignored during
    selection); the objectives-side UtilitySpec is stricter.
    """

    types: tuple[str, ...] = ("click", "like")
    weights: tuple[float, ...] = (1.0, 0.5)
    d: int = 32
    h: int = 4
    d_x: int = 10
    m: int = 6
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.types) != len(self.weights) or not self.types:
            raise ConfigError("one selection weight per interaction type required")
        if min(self.d, self.h, self.d_x, self.m) <= 0:
            raise ConfigError("evaluator dims must be positive")
        if self.d % self.h:
            raise ConfigError(f"d={self.d} not divisible by h={self.h}")

    @property
    def head_dim(self) -> int:
        return self.d // self.h

    @property
    def d_ff(self) -> int:
        return 2 * self.d


@dataclass
class SlateScore:
    """Predicted per-item per-type scores plus their weighted sum."""

    scores: np.ndarray
    utility: float
    types: tuple[str, ...]
    logits: dict[str, Tensor]


def init_evaluator_params(cfg: EvaluatorConfig) -> Params:
    rng = np.random.default_rng(cfg.seed)
    params = Params()
    params.new_gaussian("ev.embed.w", (cfg.d_x, cfg.d), rng)
    params.new_zeros("ev.embed.b", (cfg.d,))
    params.new_gaussian("ev.pos", (cfg.m, cfg.d), rng)
    _build_layer_norm(params, "ev.ln1", cfg.d)
    _build_attention(params, "ev.attn", cfg.d, rng)
    _build_layer_norm(params, "ev.ln2", cfg.d)
    _build_ffn(params, "ev.ffn", cfg.d, cfg.d_ff, rng)
    _build_layer_norm(params, "ev.final_ln", cfg.d)
    for t in cfg.types:
        params.new_gaussian(f"ev.head.{t}.w", (cfg.d, 1), rng)
        params.new_zeros(f"ev.head.{t}.b", (1,))
    return params


def _slate_indices(slate, req: RequestBatch, cfg: EvaluatorConfig) -> np.ndarray:
    idx = np.asarray(getattr(slate, "indices", slate), dtype=np.int64)
    if idx.ndim != 1 or idx.shape[0] != cfg.m:
        raise ShapeError(f"expected a slate of {cfg.m} items, got shape {idx.shape}")
    if len(set(idx.tolist())) != cfg.m:
        raise InvalidSlateError("slate repeats an item")
    if idx.min() < 0 or idx.max() >= req.n:
        raise InvalidSlateError(f"slate index out of range for n={req.n}")
    return idx


def score_slate(req: RequestBatch, slate, params: Params, cfg: EvaluatorConfig,
                tape: Tape | None = None) -> SlateScore:
    """Listwise scores for one slate; `slate` is a SlateSequence or indices."""
    if tape is None:
        tape = Tape(recording=False)
    idx = _slate_indices(slate, req, cfg)
    feats = req.features[idx]
    if feats.shape[1] != cfg.d_x:
        raise ShapeError(f"features {feats.shape} do not match d_x={cfg.d_x}")
    x = tape.linear(Tensor(feats), params["ev.embed.w"], params["ev.embed.b"])
    x = tape.add(x, params["ev.pos"])
    normed = _ln(tape, params, "ev.ln1", x)
    x = tape.add(x, multi_head_attention(tape, params, "ev.attn", normed, normed, cfg))
    x = tape.add(x, _ffn(tape, params, "ev.ffn", _ln(tape, params, "ev.ln2", x)))
    states = _ln(tape, params, "ev.final_ln", x)
    logits: dict[str, Tensor] = {}
    rows = []
    utility = 0.0
    for t, w in zip(cfg.types, cfg.weights):
        z = tape.linear(states, params[f"ev.head.{t}.w"], params[f"ev.head.{t}.b"])
        logits[t] = z
        p = tape.sigmoid(z)
        row = p.data[:, 0]
        rows.append(row)
        utility += w * float(row.sum())
    return SlateScore(scores=np.stack(rows), utility=utility, types=cfg.types,
                      logits=logits)


def bce_loss(tape: Tape, score: SlateScore, feedback) -> Tensor:
    """Summed binary cross-entropy of every head against logged feedback,
    computed from logits (softplus(z) - y*z) so saturation cannot overflow."""
    total = None
    for t in score.types:
        z = score.logits[t]
        y = np.asarray(feedback.row(t), dtype=np.float64).reshape(z.data.shape)
        term = tape.sub(tape.sum(tape.softplus(z)), tape.sum(tape.mask(z, y)))
        total = term if total is None else tape.add(total, term)
    return total


def train_evaluator(logs: list[ExposureLog], params: Params, cfg: EvaluatorConfig,
                    lr: float = 1e-3, epochs: int = 1, batch_size: int = 256,
                    seed: int = 0, loss_log: list | None = None) -> Params:
    """Minibatch Adam on BCE over logged exposures; returns the params."""
    if not logs:
        raise DataError("cannot train the evaluator on an empty log")
    state = AdamState(lr=lr)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        order = rng.permutation(len(logs))
        for start in range(0, len(order), batch_size):
            batch = order[start:start + batch_size]
            running = 0.0
            for li in batch:
                log = logs[li]
                tape = Tape()
                score = score_slate(log.request, log.exposed, params, cfg, tape)
                loss = bce_loss(tape, score, log.feedback)
                tape.backward(loss)
                running += loss.item()
            params.scale_grads(1.0 / len(batch))
            adam_step(params, state)
            if loss_log is not None:
                loss_log.append(running / len(batch))
    return params


def select_best(req: RequestBatch, slates, params: Params,
                cfg: EvaluatorConfig):
    """Slate with the highest predicted utility; first wins exact ties."""
    slates = list(slates)
    if not slates:
        raise EmptyCandidatesError("no slates to choose from")
    best = slates[0]
    best_u = score_slate(req, best, params, cfg).utility
    for slate in slates[1:]:
        u = score_slate(req, slate, params, cfg).utility
        if u > best_u:
            best, best_u = slate, u
    return best
