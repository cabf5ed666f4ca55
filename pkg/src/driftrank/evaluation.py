"""Retrieval evaluation: MAP@K and Recall@K over ranked predictions.

Each test cascade is split into an observed seed prefix and a hidden
remainder; a ranker orders every non-observed user and the metrics score
how early the hidden users appear.  Cascades whose hidden set is empty
(after unseen-user removal) are skipped and counted in the report.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from . import decoder as dec_mod
from . import encoder as enc_mod
from .data import Corpus
from .numerics import Trace
from .training import Model, derived_rng


@dataclass
class RankedPrediction:
    cascade_id: str
    ranked: np.ndarray  # candidate ids, best first
    hidden: set

    def __post_init__(self):
        if len(set(self.ranked.tolist())) != self.ranked.size:
            raise ValueError(f"prediction for {self.cascade_id} contains duplicate users")


def recall_at_k(pred: RankedPrediction, k: int) -> float:
    if not pred.hidden:
        raise ValueError(f"cascade {pred.cascade_id} has an empty hidden set")
    top = set(pred.ranked[:k].tolist())
    return len(top & pred.hidden) / len(pred.hidden)


def average_precision_at_k(pred: RankedPrediction, k: int) -> float:
    if not pred.hidden:
        raise ValueError(f"cascade {pred.cascade_id} has an empty hidden set")
    hits = 0
    precision_sum = 0.0
    for r, user in enumerate(pred.ranked[:k].tolist(), start=1):
        if user in pred.hidden:
            hits += 1
            precision_sum += hits / r
    return precision_sum / min(len(pred.hidden), k)


def map_at_k(preds, k: int) -> float:
    if not preds:
        raise ValueError("no predictions to average")
    return float(np.mean([average_precision_at_k(p, k) for p in preds]))


@dataclass
class MetricReport:
    seed_pct: float
    map_at: dict
    recall_at: dict
    n_cascades: int
    n_skipped: int
    per_cascade: list = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "seed_pct": self.seed_pct,
            "map": {str(k): v for k, v in sorted(self.map_at.items())},
            "recall": {str(k): v for k, v in sorted(self.recall_at.items())},
            "n_cascades": self.n_cascades,
            "n_skipped": self.n_skipped,
        }
        return json.dumps(doc, sort_keys=True, indent=2)


class ModelRanker:
    """Scores candidates with a trained model at the prediction step.

    New-step latents are inferred once with eps = 0 (posterior mean), so
    the induced ranking is deterministic.
    """

    def __init__(self, model: Model, corpus: Corpus):
        self.model = model
        self.corpus = corpus
        trace = Trace()
        operator = model.operator_for(corpus)
        latents, _ = enc_mod.rollout(
            trace,
            corpus,
            operator,
            model.enc,
            corpus.n_steps,
            model.d,
            eps_for_step=None,
            conv_layers=model.conv_layers,
            static=model.ablation == "static-encoder",
        )
        self._latents = latents
        self._trace = trace
        self._projections: dict[int, tuple] = {}

    def latent_for_step(self, t: int):
        return self._latents[t]

    def _projected(self, step: int):
        if step not in self._projections:
            self._projections[step] = dec_mod.project(
                self._trace, self._latents[step].z, self.model.dec
            )
        return self._projections[step]

    def rank_prefix(self, observed_ids, content_vec, step: int | None = None):
        """Rank candidates for a cascade prefix; returns (ids, scores)."""
        if step is None:
            step = self.corpus.n_steps - 1
        v_s_full, v_r_full = self._projected(step)
        return dec_mod.rank_candidates_projected(
            self._trace,
            v_s_full,
            v_r_full,
            content_vec,
            observed_ids,
            self.model.dec,
            self.corpus.n_users,
            use_self_attention=self.model.ablation != "remove-first-attention",
            use_content_attention=self.model.ablation != "remove-second-attention",
        )

    def rank(self, cascade, observed_ids) -> np.ndarray:
        ranked, _ = self.rank_prefix(observed_ids, cascade.content_vec, cascade.time_step)
        return ranked


class RandomRanker:
    """Seeded shuffle of the candidate set."""

    def __init__(self, corpus: Corpus, seed: int = 0):
        self.corpus = corpus
        self.seed = seed
        self._counter = 0

    def rank(self, cascade, observed_ids) -> np.ndarray:
        observed = set(observed_ids)
        candidates = np.array([u for u in range(self.corpus.n_users) if u not in observed])
        if candidates.size == 0:
            raise ValueError("empty candidate set")
        rng = derived_rng(self.seed, 53, self._counter)
        self._counter += 1
        return rng.permutation(candidates)


class PopularityRanker:
    """Candidates by descending training forwarding count, id tiebreak."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.counts = corpus.training_forward_counts()

    def rank(self, cascade, observed_ids) -> np.ndarray:
        observed = set(observed_ids)
        candidates = np.array([u for u in range(self.corpus.n_users) if u not in observed])
        if candidates.size == 0:
            raise ValueError("empty candidate set")
        order = np.lexsort((candidates, -self.counts[candidates]))
        return candidates[order]


class OracleRanker:
    """Scores ground-truth membership; the upper bound for sanity checks."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus

    def rank(self, cascade, observed_ids) -> np.ndarray:
        observed = set(observed_ids)
        hidden = [u for u in cascade.user_ids if u not in observed]
        rest = [u for u in range(self.corpus.n_users) if u not in observed and u not in set(hidden)]
        return np.array(hidden + rest)


def baseline_ranker(kind: str, corpus: Corpus, seed: int = 0):
    if kind == "random":
        return RandomRanker(corpus, seed)
    if kind == "popularity":
        return PopularityRanker(corpus)
    if kind == "oracle":
        return OracleRanker(corpus)
    raise ValueError(f"unknown baseline {kind!r}")


def evaluate(
    ranker,
    corpus: Corpus,
    seed_pct: float = 0.5,
    ks=(10, 50, 100),
    split: str = "test",
) -> MetricReport:
    """Rank every cascade in the split at the given seed percentage and
    aggregate macro-averaged MAP@K and Recall@K."""
    preds: list[RankedPrediction] = []
    skipped = 0
    for c in corpus.split(split):
        if len(c) == 0:
            skipped += 1
            continue
        observed, hidden = data_mod.seed_split(c, seed_pct)
        if not hidden:
            skipped += 1
            continue
        ranked = ranker.rank(c, observed)
        if set(observed) & set(ranked.tolist()):
            raise ValueError(f"cascade {c.id}: ranking leaked observed seed users")
        preds.append(RankedPrediction(cascade_id=c.id, ranked=ranked, hidden=set(hidden)))
    if not preds:
        return MetricReport(seed_pct=seed_pct, map_at={k: 0.0 for k in ks},
                            recall_at={k: 0.0 for k in ks}, n_cascades=0, n_skipped=skipped)
    map_at = {k: map_at_k(preds, k) for k in ks}
    recall_at = {k: float(np.mean([recall_at_k(p, k) for p in preds])) for k in ks}
    per_cascade = [
        {
            "cascade_id": p.cascade_id,
            "n_hidden": len(p.hidden),
            "recall": {str(k): recall_at_k(p, k) for k in ks},
        }
        for p in preds
    ]
    return MetricReport(
        seed_pct=seed_pct,
        map_at=map_at,
        recall_at=recall_at,
        n_cascades=len(preds),
        n_skipped=skipped,
        per_cascade=per_cascade,
    )
