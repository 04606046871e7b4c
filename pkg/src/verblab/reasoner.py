"""Trainable candidate scorer and the Stage-2 trainer.

Where the oracle's weights are fixed, this reasoner learns a 6-weight linear
softmax over per-candidate match features.  Crucially it sees a watched flag
the oracle ignores, so Stage-2 training can learn to discount the title-match
bias toward rewatches and recover discovery targets.  Predictions are
single-decision trajectories; rewards are +1/-1 on exact target hit, and the
update kernels are shared with Stage 1.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any

import numpy as np

from .domain import Catalog, EpisodeInstance, UserHistory, VerbalizedContext
from .fsutil import atomic_write_text
from .grpo import (
    AdamState,
    GrpoConfig,
    PolicySnapshot,
    RolloutGroup,
    RolloutMember,
    Snapshots,
    TrainLogRow,
    group_advantages,
    grpo_update,
    write_train_log,
)
from .oracle import RewardBreakdown
from .rng import Rng, derive_rng
from .verbalizer import frozen_verbalize

log = logging.getLogger(__name__)

N_CANDIDATE_FEATURES = 6
PARAMS_FORMAT_VERSION = 1


@dataclass
class ReasonerParams:
    weights: np.ndarray  # (N_CANDIDATE_FEATURES,)

    @staticmethod
    def zeros() -> "ReasonerParams":
        return ReasonerParams(np.zeros(N_CANDIDATE_FEATURES))

    def to_vector(self) -> np.ndarray:
        return self.weights.copy()

    @staticmethod
    def from_vector(vec: np.ndarray) -> "ReasonerParams":
        return ReasonerParams(vec.copy())


def candidate_features(context: VerbalizedContext, candidate_meta, watched: bool) -> np.ndarray:
    """[bias, genre, tag, title, pref match sums, watched flag].

    Match sums count context tokens with unit weight and are normalized by
    (1 + context length), so feature scale does not grow with verbosity.
    """
    genre = tags = title = pref = 0
    for token in context.tokens:
        if token.kind == "GENRE":
            genre += token.payload == candidate_meta.genre
        elif token.kind == "TAG":
            tags += token.payload in candidate_meta.tags
        elif token.kind == "TITLE":
            title += token.payload == candidate_meta.item_id
        elif token.kind == "PREF":
            pref += token.payload == candidate_meta.genre
    norm = 1.0 + len(context.tokens)
    return np.array([1.0, genre / norm, tags / norm, title / norm, pref / norm, 1.0 if watched else 0.0])


def episode_candidate_features(
    context: VerbalizedContext, episode: EpisodeInstance, catalog: Catalog
) -> np.ndarray:
    """(n_candidates, 6) feature matrix for one episode."""
    watched = {r.item_id for r in episode.history.records}
    return np.stack(
        [candidate_features(context, catalog.meta(c), c in watched) for c in episode.candidates]
    )


def reasoner_probs(params: ReasonerParams, features: np.ndarray) -> np.ndarray:
    """Softmax over candidate scores features @ weights."""
    z = features @ params.weights
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def stage2_reward(prediction: int, target_index: int) -> float:
    """+1 on the exact target, -1 otherwise."""
    return 1.0 if prediction == target_index else -1.0


class ReasonerPolicy:
    """Same adapter surface as the verbalizer policies; the context is the
    per-episode candidate feature matrix and a trajectory is one decision."""

    kind = "reasoner"
    n_params = N_CANDIDATE_FEATURES

    def make_ctx(self, features: np.ndarray) -> np.ndarray:
        return features

    @staticmethod
    def _log_softmax(params: np.ndarray, feats: np.ndarray) -> np.ndarray:
        z = feats @ params
        z = z - z.max()
        return z - np.log(np.exp(z).sum())

    def sample(self, params: np.ndarray, ctx: np.ndarray, rng: Rng):
        from .verbalizer import Trace

        logp = self._log_softmax(params, ctx)
        probs = np.exp(logp)
        cum = np.cumsum(probs)
        cum /= cum[-1]
        j = int((rng.random() >= cum).sum())
        return Trace([j], logp[j : j + 1].copy())

    def logprobs(self, params: np.ndarray, ctx: np.ndarray, choices) -> np.ndarray:
        if len(choices) != 1:
            raise ValueError(f"reasoner trajectories have exactly one decision, got {len(choices)}")
        logp = self._log_softmax(params, ctx)
        return logp[choices[0] : choices[0] + 1].copy()

    def grad_accum(self, params: np.ndarray, ctx: np.ndarray, choices, coeffs: np.ndarray) -> np.ndarray:
        probs = np.exp(self._log_softmax(params, ctx))
        return coeffs[0] * (ctx[choices[0]] - probs @ ctx)

    def greedy(self, params: np.ndarray, ctx: np.ndarray) -> list[int]:
        return [int(np.argmax(ctx @ params))]

    @staticmethod
    def params_from_vector(vec: np.ndarray) -> ReasonerParams:
        return ReasonerParams.from_vector(vec)


def train_stage2(
    train_episodes: list[EpisodeInstance],
    catalog: Catalog,
    verbalizer_kind: str,
    verbalizer_params,
    cfg: GrpoConfig,
    master_seed: int,
    init_scale: float = 0.0,
    log_path=None,
):
    """Train the reasoner on contexts from a frozen verbalizer.

    The verbalizer decodes greedily once per episode (contexts are cached);
    only the reasoner's weights move.  Returns (ReasonerParams, log rows).
    """
    cfg.validate()
    if not train_episodes:
        raise ValueError("no training episodes")
    policy = ReasonerPolicy()
    params = np.zeros(policy.n_params)
    if init_scale:
        init_rng = derive_rng(master_seed, f"stage2_{verbalizer_kind}_init", 0)
        params += init_scale * np.array([init_rng.normal() for _ in range(policy.n_params)])
    reference = params.copy()
    adam = AdamState.new(policy.n_params)
    cache: dict[int, tuple[np.ndarray, EpisodeInstance, float]] = {}
    rows: list[TrainLogRow] = []
    n_ep = len(train_episodes)

    for it in range(cfg.iterations):
        if it > 0 and it % cfg.ref_refresh_every == 0:
            reference = params.copy()
        old = params.copy()
        snapshots = Snapshots(PolicySnapshot("old", old), PolicySnapshot("reference", reference))
        groups = []
        acc_sum = ratio_sum = 0.0
        for j in range(cfg.batch_episodes):
            slot = it * cfg.batch_episodes + j
            idx = slot % n_ep
            if idx not in cache:
                episode = train_episodes[idx]
                context = frozen_verbalize(verbalizer_kind, verbalizer_params, episode.history, catalog)
                feats = episode_candidate_features(context, episode, catalog)
                cache[idx] = (feats, episode, context.compression_ratio)
            feats, episode, ratio = cache[idx]
            members = []
            for i in range(cfg.g):
                rng = derive_rng(master_seed, f"stage2_{verbalizer_kind}_rollout", slot * cfg.g + i)
                trace = policy.sample(old, feats, rng)
                r = stage2_reward(trace.choices[0], episode.target_index)
                breakdown = RewardBreakdown(r_acc=(r + 1.0) / 2.0, r_len=0.0, r_total=r, compression_ratio=ratio)
                members.append(RolloutMember(trace.choices, trace.logprobs, breakdown))
                acc_sum += breakdown.r_acc
                ratio_sum += ratio
            for member, adv in zip(members, group_advantages([m.reward.r_total for m in members], cfg.eps_adv)):
                member.advantage = float(adv)
            groups.append(RolloutGroup(feats, members))

        params, adam, objective, max_dev = grpo_update(
            policy, params, adam, groups, snapshots, cfg,
            where=f"stage2[{verbalizer_kind}] iteration {it}",
        )
        n_roll = cfg.batch_episodes * cfg.g
        rows.append(TrainLogRow(it, acc_sum / n_roll, 0.0, ratio_sum / n_roll, objective, max_dev))
        if it % 50 == 0 or it == cfg.iterations - 1:
            log.info(
                "stage2[%s] iter %d: hit_rate=%.3f J=%.4f",
                verbalizer_kind, it, rows[-1].mean_r_acc, objective,
            )

    if log_path is not None:
        write_train_log(rows, log_path)
    return ReasonerParams.from_vector(params), rows


# ---------------------------------------------------------------------------
# parameter files


def save_reasoner_params(path, params: ReasonerParams) -> None:
    payload = {
        "format_version": PARAMS_FORMAT_VERSION,
        "kind": "reasoner",
        "arrays": {"weights": params.weights.tolist()},
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_reasoner_params(path) -> ReasonerParams:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != PARAMS_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported params format_version {payload.get('format_version')!r}")
    if payload.get("kind") != "reasoner":
        raise ValueError(f"{path}: expected reasoner params, got kind {payload.get('kind')!r}")
    weights = np.asarray(payload["arrays"]["weights"], dtype=np.float64)
    if weights.shape != (N_CANDIDATE_FEATURES,):
        raise ValueError(f"{path}: reasoner weights must have shape ({N_CANDIDATE_FEATURES},)")
    return ReasonerParams(weights)
