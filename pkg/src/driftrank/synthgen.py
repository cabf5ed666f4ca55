"""Synthetic social graphs and cascade corpora with planted drifting interests.

Users live in communities on a directed stochastic-block graph.  A true
interest vector per user per step drifts by the same retain / social /
noise recurrence the encoder is built to capture, so the dynamic-versus-
static comparison has a real effect to find.  Cascade membership follows
interest-topic affinity, content text is synthesized from the topic's
dominant coordinates so the hashing embedder approximately recovers topic
geometry, and a coverage pass tops up rare users so emitted corpora pass
the data module's default filters without further removal.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp

from . import data as data_mod
from . import graphs as graphs_mod
from .data import Cascade
from .graphs import SocialGraph

_STEP_SPAN = 1000.0
_OFFSET_SPAN = 900.0  # keeps every first timestamp strictly inside its bucket


@dataclass
class GenConfig:
    n_users: int = 500
    n_communities: int = 4
    d_latent: int = 16
    n_steps: int = 6
    drift_retain: float = 0.8
    drift_social: float = 0.15
    drift_noise: float = 0.05
    cascades_per_step: int = 40
    cascade_len: int = 15
    edge_density: float = 8.0
    intra_fraction: float = 0.8
    min_user_records: int = 10
    seed: int = 0

    def validate(self):
        if self.drift_retain < 0 or self.drift_social < 0 or self.drift_noise < 0:
            raise ValueError("drift weights must be >= 0")
        if self.drift_retain + self.drift_social > 1.0 + 1e-12:
            raise ValueError(
                f"drift_retain + drift_social must be <= 1, got "
                f"{self.drift_retain} + {self.drift_social}"
            )
        if self.cascade_len < 10:
            raise ValueError(f"cascade_len must be >= 10, got {self.cascade_len}")
        if self.edge_density < 1.0:
            raise ValueError(f"edge density {self.edge_density} yields expected degree < 1")
        if not (0.0 <= self.intra_fraction <= 1.0):
            raise ValueError("intra_fraction must be in [0, 1]")
        if self.n_steps < 2:
            raise ValueError("need at least 2 time steps")
        if self.n_users < self.n_communities:
            raise ValueError("need at least one user per community")


def community_of(cfg: GenConfig) -> np.ndarray:
    """Contiguous community assignment for every user."""
    size = -(-cfg.n_users // cfg.n_communities)
    return np.minimum(np.arange(cfg.n_users) // size, cfg.n_communities - 1)


def block_probabilities(cfg: GenConfig, communities: np.ndarray):
    """Per-pair edge probabilities (p_in, p_out) derived from edge density."""
    n = cfg.n_users
    sizes = np.bincount(communities, minlength=cfg.n_communities)
    m = sizes.mean()
    p_in = min(1.0, cfg.intra_fraction * cfg.edge_density / max(m - 1.0, 1.0))
    p_out = 0.0
    if cfg.intra_fraction < 1.0 and n - m > 0:
        p_out = min(1.0, (1.0 - cfg.intra_fraction) * cfg.edge_density / (n - m))
    return p_in, p_out


def gen_graph(cfg: GenConfig) -> SocialGraph:
    """Community-structured directed graph; edge (src, dst) = src influences dst."""
    cfg.validate()
    communities = community_of(cfg)
    p_in, p_out = block_probabilities(cfg, communities)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 101]))
    n = cfg.n_users
    edges = []
    chunk = 512
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        u = rng.uniform(size=(stop - start, n))
        same = communities[start:stop, None] == communities[None, :]
        p = np.where(same, p_in, p_out)
        hit = u < p
        hit[np.arange(start, stop) - start, np.arange(start, stop)] = False
        srcs, dsts = np.nonzero(hit)
        for s, d in zip(srcs, dsts):
            edges.append((int(start + s), int(d)))
    return SocialGraph(n_users=n, edges=tuple(edges))


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    return m / norms


def _social_mean_matrix(graph: SocialGraph) -> sp.csr_matrix:
    """Row-stochastic averaging over each user's influencers plus self."""
    n = graph.n_users
    rows = [dst for (_, dst) in graph.edges] + list(range(n))
    cols = [src for (src, _) in graph.edges] + list(range(n))
    a_hat = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(1.0 / deg) @ a_hat)


def gen_interests(cfg: GenConfig, graph: SocialGraph) -> np.ndarray:
    """True interests per step, shape (n_steps, n_users, d_latent), unit rows.

    Z[0] = community centroid plus noise; afterwards each row retains its
    previous value, mixes in the mean of self-plus-influencers, and takes a
    fresh noise kick, then renormalizes.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 211]))
    communities = community_of(cfg)
    centroids = _normalize_rows(rng.standard_normal((cfg.n_communities, cfg.d_latent)))
    z0 = centroids[communities] + 0.3 * rng.standard_normal((cfg.n_users, cfg.d_latent))
    z = np.empty((cfg.n_steps, cfg.n_users, cfg.d_latent))
    z[0] = _normalize_rows(z0)
    mixer = _social_mean_matrix(graph)
    for t in range(1, cfg.n_steps):
        social = np.asarray(mixer @ z[t - 1])
        noise = rng.standard_normal((cfg.n_users, cfg.d_latent))
        z[t] = _normalize_rows(
            cfg.drift_retain * z[t - 1] + cfg.drift_social * social + cfg.drift_noise * noise
        )
    return z


def topic_text(topic: np.ndarray, n_tokens: int = 6) -> str:
    """Hash-stable token bag from the topic's dominant coordinates."""
    order = np.argsort(-np.abs(topic))[:n_tokens]
    max_abs = max(abs(topic[order[0]]), 1e-12)
    words = []
    for i in order:
        reps = 1 + int(round(5.0 * abs(topic[i]) / max_abs))
        token = f"t{i}p" if topic[i] >= 0 else f"t{i}n"
        words.extend([token] * reps)
    return " ".join(words)


def _recruit(affinity: np.ndarray, target: int, rng) -> list[int]:
    """Descending-affinity walk with logistic acceptance, until target size."""
    order = np.argsort(-affinity)
    thresh = affinity[order[min(3 * target, len(order) - 1)]]
    spread = affinity.std() + 1e-9
    accept_p = 1.0 / (1.0 + np.exp(-6.0 * (affinity - thresh) / spread))
    members = []
    for u in order:
        if len(members) >= target:
            break
        if rng.uniform() < accept_p[u]:
            members.append(int(u))
    return members


@dataclass
class GroundTruth:
    interests: np.ndarray  # (n_steps, n_users, d_latent)
    topics: dict  # cascade id -> topic vector
    communities: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "interests": self.interests.tolist(),
                "topics": {cid: v.tolist() for cid, v in self.topics.items()},
                "communities": self.communities.tolist(),
            }
        )


def gen_cascades(cfg: GenConfig, graph: SocialGraph, interests: np.ndarray):
    """Cascade corpus with affinity-driven membership.

    After the logistic recruiting pass, users below the record floor are
    added to the cascades they match best, so emitted files survive the
    default corpus filters unchanged.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 307]))
    drafts = []  # (step, slot, topic, member set)
    for t in range(cfg.n_steps):
        for j in range(cfg.cascades_per_step):
            members: list[int] = []
            topic = None
            for _ in range(5):
                anchor = int(rng.integers(cfg.n_users))
                cand = interests[t, anchor] + 0.15 * rng.standard_normal(cfg.d_latent)
                topic = cand / max(np.linalg.norm(cand), 1e-12)
                affinity = interests[t] @ topic
                members = _recruit(affinity, cfg.cascade_len, rng)
                if len(members) >= min(10, cfg.cascade_len):
                    break
            if len(members) < min(10, cfg.cascade_len):
                warnings.warn(f"dropping cascade at step {t}: could not reach minimum length")
                continue
            drafts.append([t, j, topic, set(members)])

    # coverage floor: every user appears in at least min_user_records cascades
    counts = np.zeros(cfg.n_users, dtype=np.int64)
    for _, _, _, members in drafts:
        for u in members:
            counts[u] += 1
    for u in range(cfg.n_users):
        deficit = cfg.min_user_records - counts[u]
        if deficit <= 0:
            continue
        scored = [
            (float(interests[d[0], u] @ d[2]), idx)
            for idx, d in enumerate(drafts)
            if u not in d[3]
        ]
        scored.sort(key=lambda p: (-p[0], p[1]))
        for _, idx in scored[:deficit]:
            drafts[idx][3].add(u)
            counts[u] += 1

    cascades = []
    topics = {}
    per_step = {}
    for t, j, topic, members in drafts:
        slot = per_step.get(t, 0)
        per_step[t] = slot + 1
        denom = max(cfg.cascades_per_step - 1, 1)
        first_ts = t * _STEP_SPAN + _OFFSET_SPAN * j / denom
        member_list = sorted(members, key=lambda u: (-float(interests[t, u] @ topic), u))
        users = []
        for k, u in enumerate(member_list):
            ts = first_ts if k == 0 else first_ts + k + rng.uniform(0.0, 0.3)
            users.append((int(u), float(ts)))
        cid = f"c{t:02d}_{j:03d}"
        topics[cid] = topic
        cascades.append(Cascade(id=cid, text=topic_text(topic), users=users))
    truth = GroundTruth(interests=interests, topics=topics, communities=community_of(cfg))
    return cascades, truth


def generate(cfg: GenConfig, out_dir):
    """Write edges.tsv, cascades.jsonl, ground_truth.json, gen_config.json."""
    import os

    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    graph = gen_graph(cfg)
    interests = gen_interests(cfg, graph)
    cascades, truth = gen_cascades(cfg, graph, interests)
    paths = {
        "edges": os.path.join(out_dir, "edges.tsv"),
        "cascades": os.path.join(out_dir, "cascades.jsonl"),
        "ground_truth": os.path.join(out_dir, "ground_truth.json"),
        "gen_config": os.path.join(out_dir, "gen_config.json"),
    }
    graphs_mod.save_edges(graph, paths["edges"])
    data_mod.save_cascades(cascades, paths["cascades"])
    with open(paths["ground_truth"], "w", encoding="utf-8") as fh:
        fh.write(truth.to_json())
    with open(paths["gen_config"], "w", encoding="utf-8") as fh:
        fh.write(json.dumps(asdict(cfg), indent=2, sort_keys=True))
    return paths


def generate_corpus(
    cfg: GenConfig,
    d: int = 128,
    min_user_records: int = 10,
    min_cascade_len: int = 10,
    split_seed: int = 0,
):
    """In-memory pipeline: generate, embed, bucket, filter, split."""
    graph = gen_graph(cfg)
    interests = gen_interests(cfg, graph)
    cascades, truth = gen_cascades(cfg, graph, interests)
    data_mod.attach_embeddings(cascades, d)
    data_mod.bucket_by_timestep(cascades, cfg.n_steps)
    corpus = data_mod.filter_corpus(
        graph,
        cascades,
        cfg.n_steps,
        min_user_records=min_user_records,
        min_cascade_len=min_cascade_len,
        split_seed=split_seed,
    )
    return corpus, truth
