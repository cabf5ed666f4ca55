import json

import numpy as np
import pytest

from driftrank import evaluation as ev
from driftrank.data import Cascade
from driftrank.evaluation import (
    MetricReport,
    RankedPrediction,
    average_precision_at_k,
    baseline_ranker,
    evaluate,
    map_at_k,
    recall_at_k,
)

from conftest import make_tiny_corpus, make_tiny_model


def pred(ranked, hidden, cid="c"):
    return RankedPrediction(cascade_id=cid, ranked=np.asarray(ranked), hidden=set(hidden))


class TestRecall:
    def test_all_hidden_in_top(self):
        assert recall_at_k(pred([5, 3, 8, 1], {5, 3}), 2) == 1.0

    def test_hand_case(self):
        # hidden at ranks 1 and 3 out of four hidden users, K = 3
        p = pred([9, 2, 7, 4, 6], {9, 7, 4, 6})
        assert recall_at_k(p, 3) == 0.5

    def test_miss(self):
        assert recall_at_k(pred([1, 2, 3], {7}), 3) == 0.0

    def test_empty_hidden_rejected(self):
        with pytest.raises(ValueError, match="empty hidden"):
            recall_at_k(pred([1, 2], set()), 2)

    def test_nondecreasing_in_k(self, rng):
        ranked = rng.permutation(50)
        hidden = set(rng.choice(50, size=8, replace=False).tolist())
        p = pred(ranked, hidden)
        values = [recall_at_k(p, k) for k in (1, 5, 10, 25, 50)]
        assert values == sorted(values)
        assert all(0.0 <= v <= 1.0 for v in values)


class TestMap:
    def test_single_hit_at_rank_one(self):
        assert map_at_k([pred([4, 1, 2], {4})], 3) == 1.0

    def test_hand_case(self):
        # hits at ranks 1 and 3, two hidden users, K = 3
        p = pred([9, 2, 7], {9, 7})
        assert abs(map_at_k([p], 3) - (1.0 + 2.0 / 3.0) / 2.0) < 1e-12

    def test_hit_just_outside_k(self):
        assert map_at_k([pred([1, 2, 3, 9], {9})], 3) == 0.0

    def test_denominator_truncates_at_k(self):
        # 5 hidden users, K = 2, both top slots hit -> AP = 1
        p = pred([1, 2, 3, 4, 5, 6, 7], {1, 2, 5, 6, 7})
        assert average_precision_at_k(p, 2) == 1.0

    def test_mean_over_cascades(self):
        ps = [pred([1, 2], {1}, "a"), pred([3, 4], {4}, "b")]
        assert abs(map_at_k(ps, 2) - (1.0 + 0.5) / 2.0) < 1e-12


class TestRankers:
    def test_oracle_is_perfect(self):
        corpus = make_tiny_corpus()
        report = evaluate(baseline_ranker("oracle", corpus), corpus, 0.5, ks=(10,), split="test")
        if report.n_cascades:
            assert report.map_at[10] == 1.0
            assert report.recall_at[10] == 1.0

    def test_random_is_reproducible(self):
        corpus = make_tiny_corpus()
        a = evaluate(baseline_ranker("random", corpus, seed=3), corpus, 0.5, ks=(3,), split="test")
        b = evaluate(baseline_ranker("random", corpus, seed=3), corpus, 0.5, ks=(3,), split="test")
        assert a.recall_at == b.recall_at

    def test_random_matches_expected_rate(self):
        rng = np.random.default_rng(0)
        n, k, trials = 120, 20, 200
        corpus = make_tiny_corpus(n_users=5)
        # synthetic prediction stream: hidden sets of 6 against n candidates
        hits = []
        for t in range(trials):
            ranked = rng.permutation(n)
            hidden = set(rng.choice(n, size=6, replace=False).tolist())
            hits.append(recall_at_k(pred(ranked, hidden), k))
        expected = k / n
        se = np.sqrt(expected * (1 - expected) / (trials * 6))
        assert abs(np.mean(hits) - expected) < 3 * se

    def test_popularity_orders_by_training_counts(self):
        corpus = make_tiny_corpus()
        ranker = baseline_ranker("popularity", corpus)
        counts = corpus.training_forward_counts()
        c = corpus.split("test")[0] if corpus.test_idx else corpus.cascades[0]
        ranked = ranker.rank(c, [])
        ranked_counts = counts[ranked]
        assert all(ranked_counts[i] >= ranked_counts[i + 1] for i in range(len(ranked) - 1))

    def test_popularity_uniform_activity_gives_id_order(self):
        corpus = make_tiny_corpus()
        counts = corpus.training_forward_counts()
        counts[:] = 3
        ranker = baseline_ranker("popularity", corpus)
        ranker.counts = counts
        ranked = ranker.rank(corpus.cascades[0], [])
        assert ranked.tolist() == sorted(ranked.tolist())

    def test_unknown_baseline_rejected(self):
        with pytest.raises(ValueError):
            baseline_ranker("nope", make_tiny_corpus())


class TestEvaluate:
    def test_model_ranker_runs_end_to_end(self):
        corpus = make_tiny_corpus()
        model, _ = make_tiny_model(corpus)
        ranker = ev.ModelRanker(model, corpus)
        report = evaluate(ranker, corpus, 0.5, ks=(2, 4), split="test")
        assert set(report.recall_at) == {2, 4}
        for v in list(report.map_at.values()) + list(report.recall_at.values()):
            assert 0.0 <= v <= 1.0

    def test_observed_seeds_never_in_ranking(self):
        corpus = make_tiny_corpus()
        model, _ = make_tiny_model(corpus)
        ranker = ev.ModelRanker(model, corpus)
        for c in corpus.split("test"):
            observed = c.user_ids[:2]
            ranked = ranker.rank(c, observed)
            assert not (set(ranked.tolist()) & set(observed))

    def test_skipped_cascades_counted(self):
        corpus = make_tiny_corpus()
        # empty one test cascade's ground truth entirely
        if not corpus.test_idx:
            pytest.skip("fixture has no test cascades")
        corpus.cascades[corpus.test_idx[0]].users = []
        report = evaluate(baseline_ranker("random", corpus), corpus, 0.0, ks=(3,), split="test")
        assert report.n_skipped >= 1

    def test_report_json_schema(self):
        report = MetricReport(
            seed_pct=0.3, map_at={10: 0.5, 50: 0.6}, recall_at={10: 0.1, 50: 0.2},
            n_cascades=7, n_skipped=1,
        )
        doc = json.loads(report.to_json())
        assert set(doc) == {"seed_pct", "map", "recall", "n_cascades", "n_skipped"}
        assert doc["map"] == {"10": 0.5, "50": 0.6}
        assert doc["recall"]["50"] == 0.2
        assert doc["n_cascades"] == 7 and doc["n_skipped"] == 1

    def test_seed_pct_sweep_includes_initial(self):
        corpus = make_tiny_corpus()
        model, _ = make_tiny_model(corpus)
        ranker = ev.ModelRanker(model, corpus)
        for pct in (0.0, 0.1, 0.5):
            report = evaluate(ranker, corpus, pct, ks=(3,), split="test")
            assert report.seed_pct == pct

    def test_duplicate_ranking_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            RankedPrediction(cascade_id="x", ranked=np.array([1, 1, 2]), hidden={2})
