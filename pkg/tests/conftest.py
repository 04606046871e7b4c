import pytest

from verblab.rng import derive_rng
from verblab.synthworld import WorldConfig, gen_catalog, gen_split


@pytest.fixture(scope="session")
def small_world():
    """One small but non-trivial world shared by read-only tests."""
    cfg = WorldConfig(
        n_items=40,
        n_train_episodes=30,
        n_eval_episodes=10,
        t_min=5,
        t_max=12,
        master_seed=1234,
    )
    catalog = gen_catalog(cfg, derive_rng(cfg.master_seed, "catalog", 0))
    train = gen_split(catalog, cfg, "train", cfg.n_train_episodes, 0)
    evale = gen_split(catalog, cfg, "eval", cfg.n_eval_episodes, cfg.n_train_episodes)
    return cfg, catalog, train, evale
