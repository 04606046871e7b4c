"""Run configuration: one JSON document, strictly validated.

Every tunable lives in a named section; unknown keys anywhere are an error
(silent typos in experiment configs are how results stop meaning anything).
``default_config()`` is the single source of defaults; a config file only
needs the keys it wants to override.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .domain import ENGAGEMENTS
from .grpo import GrpoConfig
from .oracle import OracleWeights, RewardConfig
from .synthworld import WorldConfig
from .verbalizer import HeuristicRules

ALL_VARIANTS = (
    "template",
    "zero_shot",
    "action",
    "rewrite",
    "rewrite_trained_reasoner",
    "raw_trained_reasoner",
    "rewrite_ranking_reward",
)


class ConfigError(ValueError):
    pass


@dataclass
class VerbalizerConfig:
    min_duration: float = 10.0
    keep_engagements: tuple[str, ...] = ("thumb_up", "add_to_list")
    init_scale: float = 0.0

    def heuristic_rules(self) -> HeuristicRules:
        return HeuristicRules(self.min_duration, self.keep_engagements)

    def validate(self) -> None:
        if self.min_duration < 0:
            raise ConfigError(f"verbalizer.min_duration must be >= 0, got {self.min_duration}")
        unknown = [e for e in self.keep_engagements if e not in ENGAGEMENTS]
        if unknown:
            raise ConfigError(f"verbalizer.keep_engagements has unknown engagements {unknown}")
        if self.init_scale < 0:
            raise ConfigError(f"verbalizer.init_scale must be >= 0, got {self.init_scale}")


@dataclass
class AblateConfig:
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    variants: tuple[str, ...] = ALL_VARIANTS

    def validate(self) -> None:
        if not self.seeds:
            raise ConfigError("ablate.seeds must not be empty")
        unknown = [v for v in self.variants if v not in ALL_VARIANTS]
        if unknown:
            raise ConfigError(f"ablate.variants has unknown variants {unknown}; known: {list(ALL_VARIANTS)}")
        if "template" not in self.variants:
            raise ConfigError("ablate.variants must include 'template' (the improvement baseline)")


@dataclass
class GlobalConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    verbalizer: VerbalizerConfig = field(default_factory=VerbalizerConfig)
    oracle: OracleWeights = field(default_factory=OracleWeights)
    reward: RewardConfig = field(default_factory=RewardConfig)
    grpo_stage1: GrpoConfig = field(default_factory=GrpoConfig)
    grpo_stage2: GrpoConfig = field(default_factory=GrpoConfig)
    reasoner_init_scale: float = 0.0
    ablate: AblateConfig = field(default_factory=AblateConfig)
    out_dir: str = "out"
    determinism: bool = True

    def __post_init__(self) -> None:
        # The reward blend and the retrieval oracle must score tokens with the
        # same weights, or the two reward paths silently diverge.
        self.reward.weights = self.oracle

    def validate(self) -> None:
        try:
            self.world.validate()
            self.grpo_stage1.validate()
            self.grpo_stage2.validate()
            self.reward.validate()
        except ValueError as e:
            raise ConfigError(str(e)) from None
        self.verbalizer.validate()
        self.ablate.validate()
        if self.reasoner_init_scale < 0:
            raise ConfigError(f"reasoner.init_scale must be >= 0, got {self.reasoner_init_scale}")


def default_config() -> GlobalConfig:
    return GlobalConfig()


# ---------------------------------------------------------------------------
# strict parsing

_BOOL, _INT, _FLOAT, _STR = "bool", "int", "float", "str"
_INT_LIST, _STR_LIST = "int_list", "str_list"


def _coerce(value, kind: str, where: str):
    if kind == _BOOL:
        if isinstance(value, bool):
            return value
    elif kind == _INT:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind == _FLOAT:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind == _STR:
        if isinstance(value, str):
            return value
    elif kind == _INT_LIST:
        if isinstance(value, list) and all(isinstance(x, int) and not isinstance(x, bool) for x in value):
            return tuple(value)
    elif kind == _STR_LIST:
        if isinstance(value, list) and all(isinstance(x, str) for x in value):
            return tuple(value)
    raise ConfigError(f"{where}: expected {kind.replace('_', ' of ')}, got {value!r}")


def _parse_section(obj: dict, section: str, target, fields: dict[str, str], renames: dict[str, str] | None = None):
    data = obj.get(section)
    if data is None:
        return target
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected an object")
    renames = renames or {}
    unknown = [k for k in data if k not in fields]
    if unknown:
        raise ConfigError(f"{section}: unknown keys {unknown}; known: {sorted(fields)}")
    for key, kind in fields.items():
        if key in data:
            setattr(target, renames.get(key, key), _coerce(data[key], kind, f"{section}.{key}"))
    return target


_WORLD_FIELDS = {
    "n_items": _INT, "n_genres": _INT, "n_tags": _INT,
    "n_train_episodes": _INT, "n_eval_episodes": _INT,
    "t_min": _INT, "t_max": _INT,
    "p_noise": _FLOAT, "p_repeat": _FLOAT, "repeat_cap": _INT,
    "p_rewatch_target": _FLOAT, "dirichlet_alpha": _FLOAT, "master_seed": _INT,
}
_GRPO_FIELDS = {
    "g": _INT, "eps_adv": _FLOAT, "eps_clip": _FLOAT, "beta_kl": _FLOAT,
    "inner_epochs": _INT, "lr": _FLOAT, "iterations": _INT,
    "batch_episodes": _INT, "ref_refresh_every": _INT,
}
_TOP_KEYS = (
    "world", "verbalizer", "oracle", "reward", "grpo_stage1", "grpo_stage2",
    "reasoner", "ablate", "paths", "determinism",
)


def config_from_dict(obj: dict) -> GlobalConfig:
    if not isinstance(obj, dict):
        raise ConfigError(f"config root must be an object, got {type(obj).__name__}")
    unknown = [k for k in obj if k not in _TOP_KEYS]
    if unknown:
        raise ConfigError(f"config: unknown top-level keys {unknown}; known: {list(_TOP_KEYS)}")
    cfg = default_config()
    _parse_section(obj, "world", cfg.world, _WORLD_FIELDS)
    _parse_section(
        obj, "verbalizer", cfg.verbalizer,
        {"min_duration": _FLOAT, "keep_engagements": _STR_LIST, "init_scale": _FLOAT},
    )
    _parse_section(
        obj, "oracle", cfg.oracle,
        {"w_title": _FLOAT, "w_genre": _FLOAT, "w_tag": _FLOAT, "w_pref": _FLOAT},
    )
    reward_data = obj.get("reward")
    if reward_data is not None:
        if not isinstance(reward_data, dict):
            raise ConfigError("reward: expected an object")
        fields = {"alpha": _FLOAT, "kind": _STR, "lo_zero": _FLOAT, "lo_one": _FLOAT, "hi_one": _FLOAT, "hi_zero": _FLOAT}
        unknown = [k for k in reward_data if k not in fields]
        if unknown:
            raise ConfigError(f"reward: unknown keys {unknown}; known: {sorted(fields)}")
        if "alpha" in reward_data:
            cfg.reward.alpha = _coerce(reward_data["alpha"], _FLOAT, "reward.alpha")
        if "kind" in reward_data:
            cfg.reward.kind = _coerce(reward_data["kind"], _STR, "reward.kind")
        shape = cfg.reward.shape
        for knot in ("lo_zero", "lo_one", "hi_one", "hi_zero"):
            if knot in reward_data:
                setattr(shape, knot, _coerce(reward_data[knot], _FLOAT, f"reward.{knot}"))
    _parse_section(obj, "grpo_stage1", cfg.grpo_stage1, _GRPO_FIELDS)
    _parse_section(obj, "grpo_stage2", cfg.grpo_stage2, _GRPO_FIELDS)
    reasoner_data = obj.get("reasoner")
    if reasoner_data is not None:
        if not isinstance(reasoner_data, dict):
            raise ConfigError("reasoner: expected an object")
        unknown = [k for k in reasoner_data if k != "init_scale"]
        if unknown:
            raise ConfigError(f"reasoner: unknown keys {unknown}; known: ['init_scale']")
        if "init_scale" in reasoner_data:
            cfg.reasoner_init_scale = _coerce(reasoner_data["init_scale"], _FLOAT, "reasoner.init_scale")
    _parse_section(obj, "ablate", cfg.ablate, {"seeds": _INT_LIST, "variants": _STR_LIST})
    paths_data = obj.get("paths")
    if paths_data is not None:
        if not isinstance(paths_data, dict):
            raise ConfigError("paths: expected an object")
        unknown = [k for k in paths_data if k != "out_dir"]
        if unknown:
            raise ConfigError(f"paths: unknown keys {unknown}; known: ['out_dir']")
        if "out_dir" in paths_data:
            cfg.out_dir = _coerce(paths_data["out_dir"], _STR, "paths.out_dir")
    if "determinism" in obj:
        cfg.determinism = _coerce(obj["determinism"], _BOOL, "determinism")
    # RewardConfig carries the oracle weights so reward computation is self-contained.
    cfg.reward.weights = cfg.oracle
    cfg.validate()
    return cfg


def load_config(path) -> GlobalConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} col {e.colno}: {e.msg}") from None
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from None
    return config_from_dict(obj)
