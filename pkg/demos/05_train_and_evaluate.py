"""End-to-end: generate, train, rank, score against baselines.

Takes a couple of minutes on a laptop.

Run:  python demos/05_train_and_evaluate.py
"""

import time

from driftrank.evaluation import ModelRanker, baseline_ranker, evaluate
from driftrank.synthgen import GenConfig, generate_corpus
from driftrank.training import TrainConfig, train

cfg = GenConfig(
    n_users=300,
    n_communities=4,
    n_steps=5,
    cascades_per_step=30,
    cascade_len=12,
    edge_density=6.0,
    min_user_records=8,
    seed=7,
)
corpus, _ = generate_corpus(cfg, d=64, min_user_records=cfg.min_user_records)
print(f"corpus: {corpus.n_users} users, {len(corpus.train_idx)} train / "
      f"{len(corpus.val_idx)} val / {len(corpus.test_idx)} test cascades")

train_cfg = TrainConfig(
    d=64,
    epochs=80,
    lr=1e-3,
    optimizer="adam",
    neg_pool_size=128,
    seed=0,
)
t0 = time.time()
result = train(corpus, train_cfg)
print(f"trained {len(result.loss_trace)} epochs in {time.time()-t0:.0f}s; "
      f"loss {result.loss_trace[0]:.0f} -> {result.loss_trace[-1]:.0f}")

ranker = ModelRanker(result.model, corpus)
ks = (10, 50, 100)
print()
print(f"{'ranker':<12} " + " ".join(f"R@{k:<6}" for k in ks))
for name, r in [
    ("model", ranker),
    ("popularity", baseline_ranker("popularity", corpus)),
    ("random", baseline_ranker("random", corpus, seed=1)),
]:
    report = evaluate(r, corpus, seed_pct=0.5, ks=ks, split="test")
    print(f"{name:<12} " + " ".join(f"{report.recall_at[k]:<8.4f}" for k in ks))

print()
print("sweep over the observed fraction of each test cascade:")
for pct in (0.0, 0.1, 0.3, 0.5):
    report = evaluate(ranker, corpus, seed_pct=pct, ks=(100,), split="test")
    print(f"  seed_pct={pct:>3}: Recall@100 = {report.recall_at[100]:.4f}")
