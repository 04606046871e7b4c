"""Deterministic bag-of-token scorer and Stage-1 reward shaping.

The oracle reads a verbalized context as a bag of tokens and scores each
candidate by weighted matches: title tokens count toward the item they name,
genre and preference tokens toward candidates of that genre, tag tokens
toward candidates sharing the tag.  Title matches deliberately favour
already-watched candidates, which is what makes plain template contexts bad
at discovery and gives the learned verbalizers something to fix.

Stage-1 reward blends oracle accuracy with a trapezoid length reward over
the compression ratio; a rank-linear variant replaces accuracy for the
ranking ablation.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

from .domain import Catalog, EpisodeInstance, ItemMeta, Token, VerbalizedContext


@dataclass
class OracleWeights:
    w_title: float = 1.0
    w_genre: float = 1.0
    w_tag: float = 0.5
    w_pref: float = 3.0


@dataclass
class LengthShape:
    """Trapezoid knots for the length reward: 0 below lo_zero, ramps to 1 at
    lo_one, stays 1 through hi_one, ramps back to 0 at hi_zero."""

    lo_zero: float = 0.05
    lo_one: float = 0.3
    hi_one: float = 0.7
    hi_zero: float = 1.2

    def validate(self) -> None:
        if not self.lo_zero < self.lo_one < self.hi_one < self.hi_zero:
            raise ValueError(
                "length shape knots must be strictly increasing: "
                f"{self.lo_zero}, {self.lo_one}, {self.hi_one}, {self.hi_zero}"
            )


@dataclass
class RewardBreakdown:
    r_acc: float  # accuracy (or rank-linear) term, before blending
    r_len: float
    r_total: float
    compression_ratio: float


@dataclass
class RewardConfig:
    """Everything Stage-1 reward computation needs, in one place."""

    alpha: float = 0.9
    weights: OracleWeights = None  # type: ignore[assignment]
    shape: LengthShape = None  # type: ignore[assignment]
    kind: str = "accuracy"

    def __post_init__(self):
        if self.weights is None:
            self.weights = OracleWeights()
        if self.shape is None:
            self.shape = LengthShape()

    def validate(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.kind not in ("accuracy", "ranking"):
            raise ValueError(f"reward kind must be 'accuracy' or 'ranking', got {self.kind!r}")
        self.shape.validate()


def token_weight(token: Token, candidate: ItemMeta, weights: OracleWeights) -> float:
    """Contribution of one context token to one candidate's score."""
    kind = token.kind
    if kind == "TITLE":
        return weights.w_title if token.payload == candidate.item_id else 0.0
    if kind == "GENRE":
        return weights.w_genre if token.payload == candidate.genre else 0.0
    if kind == "PREF":
        return weights.w_pref if token.payload == candidate.genre else 0.0
    if kind == "TAG":
        return weights.w_tag if token.payload in candidate.tags else 0.0
    return 0.0


def oracle_scores(
    context: VerbalizedContext, candidates, catalog: Catalog, weights: OracleWeights
) -> list[float]:
    """Per-candidate sum of token_weight over all context tokens."""
    title_counts: Counter = Counter()
    genre_counts: Counter = Counter()
    pref_counts: Counter = Counter()
    tag_counts: Counter = Counter()
    for token in context.tokens:
        if token.kind == "TITLE":
            title_counts[token.payload] += 1
        elif token.kind == "GENRE":
            genre_counts[token.payload] += 1
        elif token.kind == "PREF":
            pref_counts[token.payload] += 1
        elif token.kind == "TAG":
            tag_counts[token.payload] += 1
    scores = []
    for cand in candidates:
        meta = catalog.meta(cand)
        s = weights.w_title * title_counts.get(meta.item_id, 0)
        s += weights.w_genre * genre_counts.get(meta.genre, 0)
        s += weights.w_pref * pref_counts.get(meta.genre, 0)
        s += weights.w_tag * sum(tag_counts.get(tag, 0) for tag in meta.tags)
        scores.append(s)
    return scores


def oracle_predict(
    context: VerbalizedContext, candidates, catalog: Catalog, weights: OracleWeights
) -> int:
    """Index of the best-scoring candidate; ties go to the lowest index."""
    scores = oracle_scores(context, candidates, catalog, weights)
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def length_reward(ratio: float, shape: LengthShape | None = None) -> float:
    shape = shape or LengthShape()
    if ratio < 0:
        raise ValueError(f"compression ratio must be >= 0, got {ratio}")
    if ratio <= shape.lo_zero or ratio >= shape.hi_zero:
        return 0.0
    if ratio < shape.lo_one:
        return (ratio - shape.lo_zero) / (shape.lo_one - shape.lo_zero)
    if ratio <= shape.hi_one:
        return 1.0
    return (shape.hi_zero - ratio) / (shape.hi_zero - shape.hi_one)


def ranking_reward(scores, target_index: int) -> float:
    """1 at rank 1, linearly down to 0 at rank N.  The target's rank counts
    strictly-greater scores plus equal scores at lower candidate indices."""
    n = len(scores)
    if not 0 <= target_index < n:
        raise ValueError(f"target_index {target_index} out of range for {n} scores")
    s_t = scores[target_index]
    rank = 1
    for i, s in enumerate(scores):
        if s > s_t or (s == s_t and i < target_index):
            rank += 1
    if n == 1:
        return 1.0
    return 1.0 - (rank - 1) / (n - 1)


def stage1_reward(
    context: VerbalizedContext,
    episode: EpisodeInstance,
    catalog: Catalog,
    alpha: float,
    weights: OracleWeights,
    shape: LengthShape,
    kind: str = "accuracy",
) -> RewardBreakdown:
    """r_total = alpha * r_acc + (1 - alpha) * r_len, computed exactly.

    ``kind`` selects the accuracy term: "accuracy" is 1/0 on the oracle's
    argmax hitting the target, "ranking" is the rank-linear variant.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    scores = oracle_scores(context, episode.candidates, catalog, weights)
    if kind == "accuracy":
        best = 0
        for i in range(1, len(scores)):
            if scores[i] > scores[best]:
                best = i
        r_acc = 1.0 if best == episode.target_index else 0.0
    elif kind == "ranking":
        r_acc = ranking_reward(scores, episode.target_index)
    else:
        raise ValueError(f"unknown stage-1 reward kind {kind!r}")
    ratio = context.compression_ratio
    r_len = length_reward(ratio, shape)
    return RewardBreakdown(
        r_acc=r_acc,
        r_len=r_len,
        r_total=alpha * r_acc + (1.0 - alpha) * r_len,
        compression_ratio=ratio,
    )
