"""Evaluation variants, per-seed training orchestration, and report emission.

A variant names one cell of the ablation matrix: which verbalizer produces
the context and which reasoner picks the candidate.  ``run_ablation`` walks
variants x seeds, training missing artifacts on demand, and ``emit_report``
writes the CSV/markdown summary with relative improvement over the template
baseline on discovery recall.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, replace

import numpy as np

from .config import ALL_VARIANTS, GlobalConfig
from .domain import Catalog, EpisodeInstance, read_catalog, read_episodes
from .fsutil import atomic_write_text
from .grpo import train_stage1
from .oracle import oracle_predict
from .reasoner import (
    episode_candidate_features,
    load_reasoner_params,
    save_reasoner_params,
    train_stage2,
)
from .synthworld import gen_dataset
from .verbalizer import (
    frozen_verbalize,
    heuristic_verbalize,
    load_policy_params,
    save_policy_params,
)

log = logging.getLogger(__name__)

VARIANT_NAMES = ALL_VARIANTS


class EvaluationError(RuntimeError):
    pass


@dataclass
class Metrics:
    """recall1_discovery is None when the episode set has no discovery
    episodes -- undefined stays undefined rather than collapsing to 0 and
    corrupting relative-improvement math downstream."""

    recall1_overall: float
    recall1_discovery: float | None
    n_eval: int
    n_discovery: int
    mean_compression: float

    def to_dict(self) -> dict:
        return {
            "recall1_overall": self.recall1_overall,
            "recall1_discovery": self.recall1_discovery,
            "n_eval": self.n_eval,
            "n_discovery": self.n_discovery,
            "mean_compression": self.mean_compression,
        }


@dataclass(frozen=True)
class VariantSpec:
    name: str
    verbalizer_kind: str  # template | zero_shot | action | rewrite
    verbalizer_file: str | None  # params file under the seed directory
    reasoner: str  # "oracle" | "trained"
    reasoner_file: str | None


VARIANT_SPECS: dict[str, VariantSpec] = {
    "template": VariantSpec("template", "template", None, "oracle", None),
    "zero_shot": VariantSpec("zero_shot", "zero_shot", None, "oracle", None),
    "action": VariantSpec("action", "action", "verbalizer_action.json", "oracle", None),
    "rewrite": VariantSpec("rewrite", "rewrite", "verbalizer_rewrite.json", "oracle", None),
    "rewrite_trained_reasoner": VariantSpec(
        "rewrite_trained_reasoner", "rewrite", "verbalizer_rewrite.json", "trained", "reasoner_rewrite.json"
    ),
    "raw_trained_reasoner": VariantSpec(
        "raw_trained_reasoner", "template", None, "trained", "reasoner_raw.json"
    ),
    "rewrite_ranking_reward": VariantSpec(
        "rewrite_ranking_reward", "rewrite", "verbalizer_rewrite_ranking.json", "oracle", None
    ),
}
assert tuple(VARIANT_SPECS) == ALL_VARIANTS


def _require_file(seed_dir: str | None, filename: str, variant: str) -> str:
    if seed_dir is None:
        raise EvaluationError(f"variant {variant!r} needs trained parameters; no artifact directory given")
    path = os.path.join(seed_dir, filename)
    if not os.path.exists(path):
        raise EvaluationError(
            f"variant {variant!r} needs {path}, which does not exist; "
            "train it first (verblab pipeline, train-verbalizer or train-reasoner)"
        )
    return path


def evaluate(
    variant: str,
    episodes: list[EpisodeInstance],
    catalog: Catalog,
    cfg: GlobalConfig,
    seed_dir: str | None = None,
) -> Metrics:
    """Greedy-decode each episode's context and score Recall@1."""
    spec = VARIANT_SPECS.get(variant)
    if spec is None:
        raise EvaluationError(f"unknown variant {variant!r}; known: {list(VARIANT_SPECS)}")
    if not episodes:
        raise EvaluationError("no evaluation episodes")

    vparams = None
    if spec.verbalizer_file is not None:
        path = _require_file(seed_dir, spec.verbalizer_file, variant)
        kind, vparams = load_policy_params(path)
        if kind != spec.verbalizer_kind:
            raise EvaluationError(
                f"{path} holds {kind!r} parameters but variant {variant!r} needs {spec.verbalizer_kind!r}"
            )
    rparams = None
    if spec.reasoner == "trained":
        rparams = load_reasoner_params(_require_file(seed_dir, spec.reasoner_file, variant))

    rules = cfg.verbalizer.heuristic_rules()
    hits = disc_hits = n_disc = 0
    ratio_sum = 0.0
    for ep in episodes:
        if spec.verbalizer_kind == "zero_shot":
            ctx = heuristic_verbalize(ep.history, catalog, rules)
        else:
            ctx = frozen_verbalize(spec.verbalizer_kind, vparams, ep.history, catalog)
        if spec.reasoner == "oracle":
            pred = oracle_predict(ctx, ep.candidates, catalog, cfg.oracle)
        else:
            feats = episode_candidate_features(ctx, ep, catalog)
            pred = int(np.argmax(feats @ rparams.weights))
        hit = pred == ep.target_index
        hits += hit
        if ep.is_discovery:
            n_disc += 1
            disc_hits += hit
        ratio_sum += ctx.compression_ratio
    n = len(episodes)
    return Metrics(
        recall1_overall=hits / n,
        recall1_discovery=(disc_hits / n_disc) if n_disc else None,
        n_eval=n,
        n_discovery=n_disc,
        mean_compression=ratio_sum / n,
    )


# ---------------------------------------------------------------------------
# per-seed artifact pipeline

DATA_FILES = ("catalog.json", "train.jsonl", "eval.jsonl")


def _needed_artifacts(variants) -> list[str]:
    """Training artifacts (in dependency order) the given variants require."""
    order = [
        "verbalizer_action.json",
        "verbalizer_rewrite.json",
        "verbalizer_rewrite_ranking.json",
        "reasoner_rewrite.json",
        "reasoner_raw.json",
    ]
    needed = set()
    for v in variants:
        spec = VARIANT_SPECS[v]
        if spec.verbalizer_file:
            needed.add(spec.verbalizer_file)
        if spec.reasoner_file:
            needed.add(spec.reasoner_file)
    # the rewrite-context reasoner trains on the rewrite verbalizer's output
    if "reasoner_rewrite.json" in needed:
        needed.add("verbalizer_rewrite.json")
    return [a for a in order if a in needed]


def run_seed_pipeline(
    cfg: GlobalConfig,
    seed: int,
    seed_dir: str,
    variants=None,
    force: bool = False,
) -> dict[str, str]:
    """Generate data and train every artifact the variants need, under
    ``seed_dir``; existing artifacts are reused unless ``force``.

    The seed overrides the world's master seed, so each seed directory is a
    fully independent world + training run.  Returns {filename: path}.
    """
    variants = tuple(variants) if variants is not None else cfg.ablate.variants
    unknown = [v for v in variants if v not in VARIANT_SPECS]
    if unknown:
        raise EvaluationError(f"unknown variants {unknown}; known: {list(VARIANT_SPECS)}")
    os.makedirs(seed_dir, exist_ok=True)
    world = replace(cfg.world, master_seed=seed)

    paths = {name: os.path.join(seed_dir, name) for name in DATA_FILES}
    if force or not all(os.path.exists(p) for p in paths.values()):
        log.info("seed %d: generating dataset under %s", seed, seed_dir)
        gen_dataset(world, seed_dir)
    catalog = read_catalog(paths["catalog.json"])
    train_eps = read_episodes(paths["train.jsonl"])

    for name in _needed_artifacts(variants):
        path = os.path.join(seed_dir, name)
        if not force and os.path.exists(path):
            paths[name] = path
            continue
        log.info("seed %d: training %s", seed, name)
        if name == "verbalizer_action.json":
            params, _ = train_stage1(
                train_eps, "action", catalog, cfg.grpo_stage1, cfg.reward, seed,
                init_scale=cfg.verbalizer.init_scale,
                log_path=os.path.join(seed_dir, "log_stage1_action.csv"),
            )
            save_policy_params(path, "action", params)
        elif name == "verbalizer_rewrite.json":
            params, _ = train_stage1(
                train_eps, "rewrite", catalog, cfg.grpo_stage1, cfg.reward, seed,
                init_scale=cfg.verbalizer.init_scale,
                log_path=os.path.join(seed_dir, "log_stage1_rewrite.csv"),
            )
            save_policy_params(path, "rewrite", params)
        elif name == "verbalizer_rewrite_ranking.json":
            ranking_reward_cfg = replace(cfg.reward, kind="ranking")
            params, _ = train_stage1(
                train_eps, "rewrite", catalog, cfg.grpo_stage1, ranking_reward_cfg, seed,
                init_scale=cfg.verbalizer.init_scale,
                log_path=os.path.join(seed_dir, "log_stage1_rewrite_ranking.csv"),
            )
            save_policy_params(path, "rewrite", params)
        elif name == "reasoner_rewrite.json":
            _, vparams = load_policy_params(paths["verbalizer_rewrite.json"])
            params, _ = train_stage2(
                train_eps, catalog, "rewrite", vparams, cfg.grpo_stage2, seed,
                init_scale=cfg.reasoner_init_scale,
                log_path=os.path.join(seed_dir, "log_stage2_rewrite.csv"),
            )
            save_reasoner_params(path, params)
        elif name == "reasoner_raw.json":
            params, _ = train_stage2(
                train_eps, catalog, "template", None, cfg.grpo_stage2, seed,
                init_scale=cfg.reasoner_init_scale,
                log_path=os.path.join(seed_dir, "log_stage2_raw.csv"),
            )
            save_reasoner_params(path, params)
        paths[name] = path
    return paths


# ---------------------------------------------------------------------------
# ablation table and report files


@dataclass
class ReportRow:
    variant: str
    seed: str  # str(seed number), or "mean" for the aggregate row
    recall1_overall: float
    recall1_discovery: float | None
    rel_improvement_pct: float | None  # None = undefined, inf = template at 0
    mean_compression: float


def _rel_improvement(value: float | None, base: float | None, is_template: bool) -> float | None:
    if is_template:
        return 0.0
    if value is None or base is None:
        return None
    if base == 0.0:
        return 0.0 if value == 0.0 else float("inf")
    return 100.0 * (value - base) / base


def run_ablation(cfg: GlobalConfig, out_dir: str, force: bool = False) -> list[ReportRow]:
    """Evaluate every configured variant on every configured seed.

    Missing artifacts are trained on demand (``force`` retrains everything).
    Rows come back in variant-major order followed by one "mean" row per
    variant; relative improvement is against the template baseline's
    discovery recall (same seed, or mean vs mean).
    """
    variants = cfg.ablate.variants
    per_seed: dict[int, dict[str, Metrics]] = {}
    for seed in cfg.ablate.seeds:
        seed_dir = os.path.join(out_dir, f"seed_{seed}")
        run_seed_pipeline(cfg, seed, seed_dir, variants=variants, force=force)
        catalog = read_catalog(os.path.join(seed_dir, "catalog.json"))
        eval_eps = read_episodes(os.path.join(seed_dir, "eval.jsonl"))
        per_seed[seed] = {
            v: evaluate(v, eval_eps, catalog, cfg, seed_dir) for v in variants
        }
        log.info("seed %d: evaluated %d variants", seed, len(variants))

    rows: list[ReportRow] = []
    for v in variants:
        for seed in cfg.ablate.seeds:
            m = per_seed[seed][v]
            base = per_seed[seed]["template"].recall1_discovery
            rows.append(
                ReportRow(
                    variant=v,
                    seed=str(seed),
                    recall1_overall=m.recall1_overall,
                    recall1_discovery=m.recall1_discovery,
                    rel_improvement_pct=_rel_improvement(m.recall1_discovery, base, v == "template"),
                    mean_compression=m.mean_compression,
                )
            )

    def seed_mean(values) -> float | None:
        vals = [x for x in values if x is not None]
        return sum(vals) / len(vals) if len(vals) == len(list(values)) and vals else None

    mean_disc = {
        v: seed_mean([per_seed[s][v].recall1_discovery for s in cfg.ablate.seeds]) for v in variants
    }
    for v in variants:
        ms = [per_seed[s][v] for s in cfg.ablate.seeds]
        rows.append(
            ReportRow(
                variant=v,
                seed="mean",
                recall1_overall=sum(m.recall1_overall for m in ms) / len(ms),
                recall1_discovery=mean_disc[v],
                rel_improvement_pct=_rel_improvement(mean_disc[v], mean_disc["template"], v == "template"),
                mean_compression=sum(m.mean_compression for m in ms) / len(ms),
            )
        )
    return rows


REPORT_COLUMNS = ("variant", "seed", "recall1_overall", "recall1_discovery",
                  "rel_improvement_pct", "mean_compression")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "inf" if value == float("inf") else repr(value)
    return str(value)


def emit_report(rows: list[ReportRow], out_dir: str) -> dict[str, str]:
    """Write report.csv and report.md under ``out_dir``; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(REPORT_COLUMNS)
    for r in rows:
        writer.writerow([
            r.variant, r.seed, _csv_cell(r.recall1_overall), _csv_cell(r.recall1_discovery),
            _csv_cell(r.rel_improvement_pct), _csv_cell(r.mean_compression),
        ])
    csv_path = os.path.join(out_dir, "report.csv")
    atomic_write_text(csv_path, buf.getvalue())

    def fmt(x, pct=False) -> str:
        if x is None:
            return "undefined"
        if x == float("inf"):
            return "inf"
        return f"{x:+.1f}" if pct else f"{x:.4f}"

    md = io.StringIO()
    md.write("# Ablation report\n\n")
    md.write("## Seed means\n\n")
    md.write("| variant | recall@1 overall | recall@1 discovery | rel. improvement (%) | mean compression |\n")
    md.write("|---|---|---|---|---|\n")
    for r in rows:
        if r.seed == "mean":
            md.write(
                f"| {r.variant} | {fmt(r.recall1_overall)} | {fmt(r.recall1_discovery)} "
                f"| {fmt(r.rel_improvement_pct, pct=True)} | {fmt(r.mean_compression)} |\n"
            )
    md.write("\n## Per-seed rows\n\n")
    md.write("| variant | seed | recall@1 overall | recall@1 discovery | rel. improvement (%) | mean compression |\n")
    md.write("|---|---|---|---|---|---|\n")
    for r in rows:
        if r.seed != "mean":
            md.write(
                f"| {r.variant} | {r.seed} | {fmt(r.recall1_overall)} | {fmt(r.recall1_discovery)} "
                f"| {fmt(r.rel_improvement_pct, pct=True)} | {fmt(r.mean_compression)} |\n"
            )
    md_path = os.path.join(out_dir, "report.md")
    atomic_write_text(md_path, md.getvalue())
    return {"report.csv": csv_path, "report.md": md_path}


def read_report(path) -> list[ReportRow]:
    """Parse report.csv back into rows (inverse of emit_report for tests)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise EvaluationError(f"{path}: unexpected report header {reader.fieldnames}")
        for rec in reader:
            rows.append(
                ReportRow(
                    variant=rec["variant"],
                    seed=rec["seed"],
                    recall1_overall=float(rec["recall1_overall"]),
                    recall1_discovery=float(rec["recall1_discovery"]) if rec["recall1_discovery"] else None,
                    rel_improvement_pct=(
                        float(rec["rel_improvement_pct"]) if rec["rel_improvement_pct"] else None
                    ),
                    mean_compression=float(rec["mean_compression"]),
                )
            )
    return rows
