import numpy as np
import pytest

from driftrank import data as data_mod
from driftrank.data import Cascade, Corpus
from driftrank.graphs import SocialGraph
from driftrank.training import Model, TrainConfig

TINY_EDGES = ((0, 1), (1, 2), (2, 0), (1, 3), (3, 4))


def make_tiny_corpus(n_users=5, d=4, n_steps=3, seed=7, edges=TINY_EDGES):
    """Hand-sized corpus: one cascade per step, random unit content."""
    rng = np.random.default_rng(seed)
    graph = SocialGraph(n_users=n_users, edges=edges)
    memberships = [
        [0, 1, 2, 3],
        [1, 2, 4, 0],
        [2, 3, 4, 1],
    ][:n_steps]
    cascades = []
    for step, users in enumerate(memberships):
        vec = rng.standard_normal(d)
        vec /= np.linalg.norm(vec)
        ts0 = step * 10.0
        cascades.append(
            Cascade(
                id=f"t{step}",
                text="",
                users=[(u, ts0 + i) for i, u in enumerate(users)],
                content_vec=vec,
            )
        )
    data_mod.bucket_by_timestep(cascades, n_steps)
    return data_mod.filter_corpus(
        graph, cascades, n_steps, min_user_records=1, min_cascade_len=2, split_seed=0
    )


def make_tiny_model(corpus, d=4, seed=0, **cfg_kwargs):
    cfg = TrainConfig(d=d, seed=seed, neg_pool_size=2, **cfg_kwargs)
    return Model.init(cfg, corpus.n_users, corpus.n_steps), cfg


def oracle_setup(corpus: Corpus, model: Model, cfg: TrainConfig, eps, negatives):
    """Convert library structures into the scalar oracle's plain-list form."""
    params = {p.name.split(".", 1)[1]: p.value.tolist() for p in model.params()}
    cascades = [
        {"step": c.time_step, "users": c.user_ids, "content": c.content_vec.tolist()}
        for c in corpus.cascades
    ]
    return {
        "n_users": corpus.n_users,
        "d": cfg.d,
        "n_steps": corpus.n_steps,
        "edges": list(corpus.graph.edges),
        "conv_layers": cfg.conv_layers,
        "cascades": cascades,
        "train": list(corpus.train_idx),
        "eps": [e.tolist() for e in eps],
        "negatives": [list(n) for n in negatives],
        "seed_pct": cfg.train_seed_pct,
        "lambda_m": cfg.lambda_m,
        "beta": cfg.effective_beta,
        "lambda1": cfg.lambda1,
        "lambda2": cfg.lambda2,
        "params": params,
    }


@pytest.fixture
def tiny_corpus():
    return make_tiny_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
