import json
import os

import numpy as np
import pytest

from driftrank import cli
from driftrank.data import load_corpus
from driftrank.evaluation import ModelRanker
from driftrank.training import Model, TrainConfig


def run(argv):
    return cli.main(argv)


GEN_ARGS = [
    "gen-synth",
    "--n-users", "60",
    "--n-communities", "2",
    "--d-latent", "6",
    "--n-steps", "3",
    "--cascades-per-step", "8",
    "--cascade-len", "10",
    "--edge-density", "5",
    "--min-user-records", "4",
    "--seed", "11",
]

LOAD_ARGS = ["--n-steps", "3", "--min-user-records", "4", "--min-cascade-len", "10"]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth") / "corpus"
    assert run(GEN_ARGS + ["--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, corpus_dir):
    out = tmp_path_factory.mktemp("train") / "run"
    code = run(
        ["train", "--edges", str(corpus_dir / "edges.tsv"),
         "--cascades", str(corpus_dir / "cascades.jsonl"),
         *LOAD_ARGS,
         "--d", "32", "--epochs", "12", "--lr", "2e-5",
         "--neg-pool-size", "30", "--seed", "1",
         "--out", str(out)]
    )
    assert code == 0
    return out


class TestGenSynth:
    def test_outputs_exist_and_load(self, corpus_dir):
        for name in ("edges.tsv", "cascades.jsonl", "ground_truth.json", "gen_config.json", "config.json"):
            assert (corpus_dir / name).exists()
        corpus = load_corpus(
            corpus_dir / "edges.tsv", corpus_dir / "cascades.jsonl",
            n_steps=3, d=16, min_user_records=4, min_cascade_len=10,
        )
        assert corpus.n_users == 60

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(GEN_ARGS + ["--out", str(a)]) == 0
        assert run(GEN_ARGS + ["--out", str(b)]) == 0
        for name in ("edges.tsv", "cascades.jsonl", "ground_truth.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_invalid_drift_rejected_before_writing(self, tmp_path, capsys):
        out = tmp_path / "bad"
        code = run(["gen-synth", "--drift-retain", "0.9", "--drift-social", "0.5", "--out", str(out)])
        assert code == 1
        assert not (out / "edges.tsv").exists()
        assert "drift" in capsys.readouterr().err

    def test_unknown_config_key_rejected(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("bogus_key = 3\n", encoding="utf-8")
        assert run(["gen-synth", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1

    def test_config_file_then_flag_precedence(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("n_users = 33\nseed = 5  # trailing comment\n", encoding="utf-8")
        out = tmp_path / "out"
        code = run(["gen-synth", "--config", str(cfg), "--cascades-per-step", "6",
                    "--cascade-len", "10", "--min-user-records", "3",
                    "--n-steps", "2", "--edge-density", "4", "--out", str(out)])
        assert code == 0
        resolved = json.loads((out / "config.json").read_text())
        assert resolved["n_users"] == 33  # from file
        assert resolved["cascades_per_step"] == 6  # flag override


class TestTrain:
    def test_outputs(self, trained_dir):
        assert (trained_dir / "checkpoint.jsonl").exists()
        assert (trained_dir / "loss_trace.json").exists()
        report = json.loads((trained_dir / "train_report.json").read_text())
        assert report["epochs_run"] == 12

    def test_zero_epochs_equals_initialization(self, corpus_dir, tmp_path):
        out = tmp_path / "zero"
        code = run(
            ["train", "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--d", "16", "--epochs", "0", "--seed", "9",
             "--out", str(out)]
        )
        assert code == 0
        loaded = Model.load(out / "checkpoint.jsonl")
        fresh = Model.init(TrainConfig(d=16, seed=9), loaded.n_users, loaded.n_steps)
        for a, b in zip(loaded.params(), fresh.params()):
            np.testing.assert_array_equal(a.value, b.value)

    def test_loss_trace_decreases_initially(self, corpus_dir, tmp_path):
        out = tmp_path / "descent"
        code = run(
            ["train", "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS,
             "--d", "32", "--epochs", "10", "--lr", "2e-5",
             "--neg-pool-size", "100", "--ablation", "deterministic-ae",
             "--seed", "2", "--out", str(out)]
        )
        assert code == 0
        losses = json.loads((out / "loss_trace.json").read_text())
        assert all(losses[i + 1] < losses[i] for i in range(len(losses) - 1))

    def test_ablation_recorded_in_checkpoint(self, corpus_dir, tmp_path):
        out = tmp_path / "abl"
        code = run(
            ["train", "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--d", "16", "--epochs", "1", "--lr", "1e-5",
             "--ablation", "static-encoder", "--out", str(out)]
        )
        assert code == 0
        header = json.loads(open(out / "checkpoint.jsonl", encoding="utf-8").readline())
        assert header["meta"]["ablation"] == "static-encoder"

    def test_determinism_across_runs(self, corpus_dir, tmp_path):
        outs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            code = run(
                ["train", "--edges", str(corpus_dir / "edges.tsv"),
                 "--cascades", str(corpus_dir / "cascades.jsonl"),
                 *LOAD_ARGS, "--d", "16", "--epochs", "5", "--lr", "2e-5",
                 "--seed", "3", "--out", str(out)]
            )
            assert code == 0
            outs.append(out)
        for name in ("checkpoint.jsonl", "loss_trace.json"):
            assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()

    def test_missing_corpus_is_io_failure(self, tmp_path):
        code = run(["train", "--edges", str(tmp_path / "nope.tsv"),
                    "--cascades", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")])
        assert code == 2


class TestEval:
    def test_model_reports(self, corpus_dir, trained_dir, tmp_path):
        out = tmp_path / "eval"
        code = run(
            ["eval", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--seed-pcts", "0,0.5", "--ks", "10,50",
             "--out", str(out)]
        )
        assert code == 0
        for pct in ("0", "0.5"):
            doc = json.loads((out / f"report_seed{pct}.json").read_text())
            assert set(doc) == {"seed_pct", "map", "recall", "n_cascades", "n_skipped"}
            assert set(doc["map"]) == {"10", "50"}

    def test_oracle_baseline_is_perfect(self, corpus_dir, trained_dir, tmp_path):
        out = tmp_path / "oracle"
        code = run(
            ["eval", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--baseline", "oracle", "--ks", "100",
             "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "report_seed0.5.json").read_text())
        assert doc["map"]["100"] == 1.0
        assert doc["recall"]["100"] == 1.0

    def test_random_baseline_report_schema_and_magnitude(self, corpus_dir, trained_dir, tmp_path):
        out = tmp_path / "rand"
        code = run(
            ["eval", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--baseline", "random", "--ks", "10", "--out", str(out)]
        )
        assert code == 0
        doc = json.loads((out / "report_seed0.5.json").read_text())
        assert 0.0 <= doc["recall"]["10"] <= 1.0

    def test_dimension_mismatch_rejected(self, corpus_dir, trained_dir, tmp_path):
        # corpus regenerated with a different user count
        other = tmp_path / "other"
        assert run(GEN_ARGS[:2] + ["40"] + GEN_ARGS[3:] + ["--out", str(other)]) == 0
        code = run(
            ["eval", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(other / "edges.tsv"),
             "--cascades", str(other / "cascades.jsonl"),
             *LOAD_ARGS, "--out", str(tmp_path / "e")]
        )
        assert code == 1


class TestPredict:
    def _prefix_file(self, tmp_path, users, text="t0p t1n"):
        path = tmp_path / "prefix.json"
        path.write_text(json.dumps({"users": users, "text": text}), encoding="utf-8")
        return path

    def test_deterministic_output(self, corpus_dir, trained_dir, tmp_path, capsys):
        prefix = self._prefix_file(tmp_path, [0, 1, 2])
        argv = ["predict", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
                "--edges", str(corpus_dir / "edges.tsv"),
                "--cascades", str(corpus_dir / "cascades.jsonl"),
                *LOAD_ARGS, "--prefix", str(prefix), "--top", "5"]
        assert run(argv) == 0
        first = capsys.readouterr().out
        assert run(argv) == 0
        assert capsys.readouterr().out == first
        assert len(first.strip().split("\n")) == 5

    def test_matches_library_ranking(self, corpus_dir, trained_dir, tmp_path, capsys):
        prefix = self._prefix_file(tmp_path, [4, 7])
        assert run(
            ["predict", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--prefix", str(prefix), "--top", "8"]
        ) == 0
        out_ids = [int(line.split("\t")[0]) for line in capsys.readouterr().out.strip().split("\n")]
        model = Model.load(trained_dir / "checkpoint.jsonl")
        corpus = load_corpus(
            corpus_dir / "edges.tsv", corpus_dir / "cascades.jsonl",
            n_steps=3, d=model.d, min_user_records=4, min_cascade_len=10,
        )
        from driftrank import embed
        ranker = ModelRanker(model, corpus)
        ranked, _ = ranker.rank_prefix([4, 7], embed.embed_text("t0p t1n", model.d))
        assert out_ids == ranked[:8].tolist()

    def test_unknown_user_listed(self, corpus_dir, trained_dir, tmp_path, capsys):
        prefix = self._prefix_file(tmp_path, [0, 999])
        code = run(
            ["predict", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--prefix", str(prefix)]
        )
        assert code == 1
        assert "999" in capsys.readouterr().err

    def test_all_users_observed_rejected(self, corpus_dir, trained_dir, tmp_path):
        prefix = self._prefix_file(tmp_path, list(range(60)))
        code = run(
            ["predict", "--checkpoint", str(trained_dir / "checkpoint.jsonl"),
             "--edges", str(corpus_dir / "edges.tsv"),
             "--cascades", str(corpus_dir / "cascades.jsonl"),
             *LOAD_ARGS, "--prefix", str(prefix)]
        )
        assert code == 1
