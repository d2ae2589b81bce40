"""Slate construction from a probability matrix.

The generator emits every position's distribution in one forward pass, so
decoding is pure selection: no model evaluation happens here. All decoders
fill positions left to right without replacement and break ties toward the
lowest candidate index, which keeps them reproducible and easy to test
against brute force.

`contrastive_decode` is the production method: model confidence traded off
against the maximum cosine similarity to anything already placed, so a
near-duplicate of a chosen item has to clear a penalty before it can win a
later slot. The others (greedy, top-k sampling, beam search) are ablation
baselines, and `sample_slates` pools them into a candidate set for slate-level
reranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InfeasibleSlateError
from .generator import ProbMatrix

_METHODS = ("contrastive", "greedy", "topk", "beam")


@dataclass(frozen=True)
class SlateSequence:
    """An ordered slate: indices, their chosen-column probabilities, and the
    decode method that produced it."""

    indices: tuple[int, ...]
    probabilities: tuple[float, ...]
    method: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(
            self, "probabilities", tuple(float(p) for p in self.probabilities)
        )
        if len(self.indices) != len(self.probabilities):
            raise InfeasibleSlateError("one probability per chosen index required")
        if len(set(self.indices)) != len(self.indices):
            raise InfeasibleSlateError(f"slate repeats an item: {self.indices}")
        if any(i < 0 for i in self.indices):
            raise InfeasibleSlateError("negative candidate index")

    @property
    def m(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class DecodeConfig:
    method: str = "contrastive"
    alpha: float = 0.1
    k: int = 4
    width: int = 4
    num_samples: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ConfigError(f"unknown decode method {self.method!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.k < 1 or self.width < 1 or self.num_samples < 1:
            raise ConfigError("k, width and num_samples must all be >= 1")


def _active(probs: ProbMatrix) -> tuple[np.ndarray, int]:
    """Column probabilities restricted to real (non-padded) candidates."""
    n = probs.n if probs.valid is None else int(probs.valid.sum())
    if probs.m > n:
        raise InfeasibleSlateError(f"cannot fill {probs.m} positions from {n} candidates")
    return probs.values.data[:n], n


def _unit_rows(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=np.zeros_like(x), where=norms > 0.0)


def _slate(indices: list[int], values: np.ndarray, method: str) -> SlateSequence:
    cols = np.arange(len(indices))
    return SlateSequence(
        indices=tuple(indices),
        probabilities=tuple(values[indices, cols]),
        method=method,
    )


def contrastive_decode(probs: ProbMatrix, cfg: DecodeConfig) -> SlateSequence:
    """Fill each position with the unselected candidate maximizing
    (1 - alpha) * p[x, t] - alpha * max_{chosen j} cos(x, x_j).

    The similarity term is 0 at the first position (empty max). The matrix
    is static: confidences are read once, never recomputed after a pick.
    """
    values, n = _active(probs)
    unit = _unit_rows(probs.candidate_reps.data[:n])
    selected = np.zeros(n, dtype=bool)
    # the max over the chosen set may be negative, so it cannot start at 0
    max_sim: np.ndarray | None = None
    chosen: list[int] = []
    for t in range(probs.m):
        score = (1.0 - cfg.alpha) * values[:, t]
        if max_sim is not None:
            score = score - cfg.alpha * max_sim
        # argmax returns the first maximizer, which is the tie-break rule
        pick = int(np.argmax(np.where(selected, -np.inf, score)))
        chosen.append(pick)
        selected[pick] = True
        sims = unit @ unit[pick]
        max_sim = sims if max_sim is None else np.maximum(max_sim, sims)
    return _slate(chosen, values, "contrastive")


def greedy_decode(probs: ProbMatrix) -> SlateSequence:
    """Per-position argmax over unselected candidates, left to right."""
    values, n = _active(probs)
    selected = np.zeros(n, dtype=bool)
    chosen: list[int] = []
    for t in range(probs.m):
        pick = int(np.argmax(np.where(selected, -np.inf, values[:, t])))
        chosen.append(pick)
        selected[pick] = True
    return _slate(chosen, values, "greedy")


def topk_sample(
    probs: ProbMatrix, cfg: DecodeConfig, rng: np.random.Generator
) -> SlateSequence:
    """Sample each position from the renormalized top-k unselected candidates.

    Ranking happens among the candidates still available, so positions late
    in the slate automatically fall back to lower-ranked candidates. A
    rank group whose probabilities sum to zero is sampled uniformly.
    """
    values, n = _active(probs)
    if cfg.k > n:
        raise ConfigError(f"k={cfg.k} exceeds {n} candidates")
    selected = np.zeros(n, dtype=bool)
    chosen: list[int] = []
    for t in range(probs.m):
        avail = np.flatnonzero(~selected)
        ranked = avail[np.argsort(-values[avail, t], kind="stable")]
        group = ranked[: cfg.k]
        weights = values[group, t]
        total = weights.sum()
        weights = weights / total if total > 0.0 else np.full(len(group), 1.0 / len(group))
        pick = int(rng.choice(group, p=weights))
        chosen.append(pick)
        selected[pick] = True
    return _slate(chosen, values, "topk")


def beam_decode(probs: ProbMatrix, cfg: DecodeConfig) -> SlateSequence:
    """Width-limited search over without-replacement slates maximizing
    sum_j log p[y_j, j]; ties prefer the lexicographically smallest slate."""
    values, n = _active(probs)
    with np.errstate(divide="ignore"):
        logp = np.log(values)
    beams: list[tuple[float, tuple[int, ...]]] = [(0.0, ())]
    for t in range(probs.m):
        expanded = [
            (score + logp[i, t], prefix + (i,))
            for score, prefix in beams
            for i in range(n)
            if i not in prefix
        ]
        expanded.sort(key=lambda entry: (-entry[0], entry[1]))
        beams = expanded[: cfg.width]
    return _slate(list(beams[0][1]), values, "beam")


def slate_score(probs: ProbMatrix, indices) -> float:
    """Joint log-probability sum_j log p[indices_j, j] of a slate."""
    values, _ = _active(probs)
    with np.errstate(divide="ignore"):
        return float(np.log(values[np.asarray(indices), np.arange(len(indices))]).sum())


def sample_slates(
    probs: ProbMatrix, cfg: DecodeConfig, rng: np.random.Generator | None = None
) -> list[SlateSequence]:
    """The contrastive slate plus deduplicated top-k samples, up to
    cfg.num_samples of them; deterministic given cfg.seed."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    slates = [contrastive_decode(probs, cfg)]
    seen = {slates[0].indices}
    attempts = 0
    while len(slates) < cfg.num_samples and attempts < 20 * cfg.num_samples:
        attempts += 1
        candidate = topk_sample(probs, cfg, rng)
        if candidate.indices not in seen:
            seen.add(candidate.indices)
            slates.append(candidate)
    return slates


def decode(
    probs: ProbMatrix, cfg: DecodeConfig, rng: np.random.Generator | None = None
) -> SlateSequence:
    """Dispatch on cfg.method."""
    if cfg.method == "contrastive":
        return contrastive_decode(probs, cfg)
    if cfg.method == "greedy":
        return greedy_decode(probs)
    if cfg.method == "beam":
        return beam_decode(probs, cfg)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return topk_sample(probs, cfg, rng)
