"""Variational ranking objective and the training loop.

Per epoch: roll the encoder over all training steps, accumulate the
rank-weighted pairwise hinge loss over every training cascade plus the
KL and L2 terms, then take one plain SGD step.  The rank of a positive
(1 + the number of strictly higher-scoring pool negatives) and its
harmonic penalty are treated as constants during backward, as is standard
for this family of losses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import data as data_mod
from . import decoder as dec_mod
from . import encoder as enc_mod
from . import numerics as nm
from .data import Corpus
from .decoder import DecoderParams
from .encoder import EncoderParams
from .graphs import NormalizedOperator, build_operator
from .numerics import Parameter, Tensor, Trace

ABLATIONS = (
    "none",
    "static-encoder",
    "remove-conv",
    "remove-first-attention",
    "remove-second-attention",
    "tied",
    "deterministic-ae",
)

CHECKPOINT_FORMAT = "driftrank-checkpoint"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainConfig:
    d: int = 128
    conv_layers: int = 1
    beta: float = 10.0
    lambda1: float = 0.5
    lambda2: float = 0.5
    lambda_m: float = 0.3
    lr: float = 0.05
    epochs: int = 200
    neg_pool_size: int = 256
    seed: int = 0
    train_seed_pct: float = 0.5
    ablation: str = "none"
    optimizer: str = "sgd"  # "adam" is a config extension, not the default

    def __post_init__(self):
        for name in ("beta", "lambda1", "lambda2", "lambda_m", "lr"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.ablation not in ABLATIONS:
            raise ValueError(f"unknown ablation {self.ablation!r}; choose from {ABLATIONS}")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    @property
    def effective_beta(self) -> float:
        return 0.0 if self.ablation == "deterministic-ae" else self.beta

    @property
    def stochastic(self) -> bool:
        return self.ablation != "deterministic-ae"

    @property
    def use_self_attention(self) -> bool:
        return self.ablation != "remove-first-attention"

    @property
    def use_content_attention(self) -> bool:
        return self.ablation != "remove-second-attention"


def derived_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([abs(int(k)) for k in keys]))


_harmonic_cache = [0.0]


def harmonic(k: int) -> float:
    """L(k) = sum_{i=1..k} 1/i."""
    while len(_harmonic_cache) <= k:
        _harmonic_cache.append(_harmonic_cache[-1] + 1.0 / len(_harmonic_cache))
    return _harmonic_cache[k]


@dataclass
class PairLossRecord:
    positive: int
    negative: int
    pair_loss: float
    rank_of_positive: int


def rank_of_positive(pos_score: float, neg_scores) -> int:
    """1 + the number of pool negatives scoring strictly above the positive."""
    return 1 + int(np.sum(np.asarray(neg_scores) > pos_score))


def warp_loss(
    trace: Trace,
    scores_pos: Tensor,
    scores_neg: Tensor,
    lambda_m: float,
    pos_ids=None,
    neg_ids=None,
    return_records: bool = False,
):
    """Rank-weighted pairwise hinge loss over one cascade.

    For each positive: rank over the negative pool, harmonic penalty
    L(rank), and sum of hinges max(0, lambda_m - p+ + p-) against every
    negative, combined as L(rank) * sum / rank.  Rank and penalty are
    constants w.r.t. the parameters.
    """
    n_pos = scores_pos.shape[1]
    n_neg = scores_neg.shape[1]
    if scores_pos.shape[0] != 1 or n_pos < 1:
        raise ValueError("warp_loss needs at least one positive score")
    if scores_neg.shape[0] != 1 or n_neg < 1:
        raise ValueError("warp_loss needs at least one negative score")
    pos_values = scores_pos.values[0]
    neg_values = scores_neg.values[0]
    ranks = 1 + (neg_values[None, :] > pos_values[:, None]).sum(axis=1)
    coeffs = np.array([harmonic(int(r)) / int(r) for r in ranks])
    # P x M hinge matrix max(0, lambda_m - p+ + p-), row-weighted by H(r)/r
    diff = nm.outer_add(nm.scale(nm.transpose(scores_pos), -1.0), scores_neg)
    hinge = nm.relu(nm.add_const(diff, lambda_m))
    weights = trace.constant(np.broadcast_to(coeffs[:, None], (n_pos, n_neg)))
    total = nm.sum_all(nm.hadamard(hinge, weights))
    if return_records:
        records = []
        for a in range(n_pos):
            pid = pos_ids[a] if pos_ids is not None else a
            for b in range(n_neg):
                nid = neg_ids[b] if neg_ids is not None else b
                records.append(
                    PairLossRecord(
                        positive=int(pid),
                        negative=int(nid),
                        pair_loss=float(hinge.values[a, b]),
                        rank_of_positive=int(ranks[a]),
                    )
                )
        return total, records
    return total


def sample_negatives(cascade_user_ids, n_users: int, pool_size: int, rng) -> np.ndarray:
    """Uniform sample without replacement from users outside the cascade."""
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    members = np.zeros(n_users, dtype=bool)
    members[list(cascade_user_ids)] = True
    eligible = np.flatnonzero(~members)
    if eligible.size == 0:
        raise ValueError("no eligible negative users outside the cascade")
    if pool_size >= eligible.size:
        return eligible
    return np.sort(rng.choice(eligible, size=pool_size, replace=False))


def l2_penalty(trace: Trace, params) -> Tensor:
    total = None
    for p in params:
        leaf = trace.leaf(p)
        term = nm.sum_all(nm.hadamard(leaf, leaf))
        total = term if total is None else nm.add(total, term)
    return total


@dataclass
class Model:
    enc: EncoderParams
    dec: DecoderParams
    d: int
    conv_layers: int
    ablation: str
    n_users: int
    n_steps: int

    def params(self) -> list[Parameter]:
        return self.enc.all() + self.dec.all()

    @classmethod
    def init(cls, cfg: TrainConfig, n_users: int, n_steps: int) -> "Model":
        rng = derived_rng(cfg.seed, 11)
        return cls(
            enc=EncoderParams.init(cfg.d, rng),
            dec=DecoderParams.init(cfg.d, rng, tied=cfg.ablation == "tied"),
            d=cfg.d,
            conv_layers=cfg.conv_layers,
            ablation=cfg.ablation,
            n_users=n_users,
            n_steps=n_steps,
        )

    def save(self, path):
        meta = {
            "d": self.d,
            "conv_layers": self.conv_layers,
            "ablation": self.ablation,
            "n_users": self.n_users,
            "n_steps": self.n_steps,
            "tied": self.dec.tied,
        }
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "meta": meta}) + "\n")
            for p in self.params():
                rec = {"name": p.name, "shape": list(p.value.shape), "values": p.value.reshape(-1).tolist()}
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path) -> "Model":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
            if header.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
            meta = header["meta"]
            values: dict[str, np.ndarray] = {}
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                values[rec["name"]] = np.asarray(rec["values"], dtype=np.float64).reshape(rec["shape"])
        d = int(meta["d"])
        rng = np.random.default_rng(0)
        enc = EncoderParams.init(d, rng)
        dec = DecoderParams.init(d, rng, tied=bool(meta["tied"]))
        model = cls(
            enc=enc,
            dec=dec,
            d=d,
            conv_layers=int(meta["conv_layers"]),
            ablation=str(meta["ablation"]),
            n_users=int(meta["n_users"]),
            n_steps=int(meta["n_steps"]),
        )
        for p in model.params():
            if p.name not in values:
                raise ValueError(f"{path}: checkpoint is missing parameter {p.name}")
            if values[p.name].shape != p.value.shape:
                raise ValueError(
                    f"{path}: parameter {p.name} has shape {values[p.name].shape}, expected {p.value.shape}"
                )
            p.value[...] = values[p.name]
        return model

    def operator_for(self, corpus: Corpus) -> NormalizedOperator | None:
        if self.ablation == "remove-conv":
            return None
        return build_operator(corpus.graph)


def training_latents(
    trace: Trace,
    corpus: Corpus,
    model: Model,
    cfg: TrainConfig,
    operator,
    epoch: int,
    eps_for_step=None,
):
    """Rollout over the training window (steps 0..T-2) with per-epoch noise."""
    steps = corpus.n_steps - 1

    def default_eps(t):
        if not cfg.stochastic:
            return None
        rng = derived_rng(cfg.seed, 23, epoch, t)
        return rng.standard_normal((corpus.n_users, cfg.d))

    return enc_mod.rollout(
        trace,
        corpus,
        operator,
        model.enc,
        steps,
        cfg.d,
        eps_for_step=eps_for_step if eps_for_step is not None else default_eps,
        conv_layers=cfg.conv_layers,
        static=cfg.ablation == "static-encoder",
    )


def total_objective(
    trace: Trace,
    corpus: Corpus,
    model: Model,
    cfg: TrainConfig,
    epoch: int,
    operator=None,
    eps_for_step=None,
    negatives_for=None,
):
    """Full training objective: ranking loss over every training cascade
    plus beta * KL plus L2 penalties. Returns (loss tensor, float parts).

    eps_for_step / negatives_for override the per-epoch randomness with
    fixed inputs (used by gradient checks and independent re-computations).
    """
    if operator is None:
        operator = model.operator_for(corpus)
    latents, kl_total = training_latents(trace, corpus, model, cfg, operator, epoch, eps_for_step)

    proj_cache: dict[int, tuple] = {}

    def projections(t: int):
        # sender/receiver projections are shared by every cascade at step t
        if t not in proj_cache:
            proj_cache[t] = dec_mod.project(trace, latents[t].z, model.dec)
        return proj_cache[t]

    rank_total = None
    for j, c in enumerate(corpus.split("train")):
        observed, hidden = data_mod.seed_split(c, cfg.train_seed_pct)
        if not hidden:
            continue
        if negatives_for is not None:
            negatives = np.asarray(negatives_for(j), dtype=np.intp)
        else:
            rng = derived_rng(cfg.seed, 37, epoch, j)
            negatives = sample_negatives(c.user_ids, corpus.n_users, cfg.neg_pool_size, rng)
        v_s_full, v_r_full = projections(c.time_step)
        o = dec_mod.cascade_vector_projected(
            trace, v_s_full, v_r_full, c.content_vec, observed, model.dec,
            use_self_attention=cfg.use_self_attention,
            use_content_attention=cfg.use_content_attention,
        )
        scores_pos = dec_mod.scores_projected(v_r_full, o, hidden)
        scores_neg = dec_mod.scores_projected(v_r_full, o, negatives)
        loss_j = warp_loss(trace, scores_pos, scores_neg, cfg.lambda_m)
        rank_total = loss_j if rank_total is None else nm.add(rank_total, loss_j)

    if rank_total is None:
        rank_total = trace.constant(np.zeros((1, 1)))
    total = rank_total
    if cfg.effective_beta > 0.0:
        total = nm.add(total, nm.scale(kl_total, cfg.effective_beta))
    if cfg.lambda1 > 0.0:
        total = nm.add(total, nm.scale(l2_penalty(trace, model.enc.all()), cfg.lambda1))
    if cfg.lambda2 > 0.0:
        total = nm.add(total, nm.scale(l2_penalty(trace, model.dec.all()), cfg.lambda2))
    parts = {
        "ranking": rank_total.item(),
        "kl": kl_total.item(),
        "total": total.item(),
    }
    return total, parts


class _SgdStep:
    def __init__(self, params, lr):
        self.params = params
        self.lr = lr

    def __call__(self):
        for p in self.params:
            p.value -= self.lr * p.grad


class _AdamStep:
    """Standard bias-corrected Adam; first moments start at zero."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.t = 0

    def __call__(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad * p.grad
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    model: Model
    loss_trace: list
    stopped_early: bool = False
    parts_trace: list = field(default_factory=list)


def train(corpus: Corpus, cfg: TrainConfig, log=None) -> TrainResult:
    """Full-batch SGD to the epoch budget or until relative improvement
    stays below 1e-5 for 5 consecutive epochs."""
    model = Model.init(cfg, corpus.n_users, corpus.n_steps)
    operator = model.operator_for(corpus)
    step = (_AdamStep if cfg.optimizer == "adam" else _SgdStep)(model.params(), cfg.lr)
    losses: list[float] = []
    parts_trace = []
    stall = 0
    stopped_early = False
    for epoch in range(cfg.epochs):
        trace = Trace()
        try:
            total, parts = total_objective(trace, corpus, model, cfg, epoch, operator)
        except ValueError:
            if epoch > 0:
                # the first epoch validated shapes and inputs, so a later
                # failure means the iterates blew past float range
                raise DivergenceError(f"non-finite values in objective at epoch {epoch}") from None
            raise
        loss_val = total.item()
        if not np.isfinite(loss_val):
            raise DivergenceError(f"non-finite loss {loss_val!r} at epoch {epoch}")
        nm.reset_gradients(model.params())
        nm.backward(total, trace)
        step()
        for p in model.params():
            if not np.all(np.isfinite(p.value)):
                raise DivergenceError(f"non-finite parameter {p.name} after epoch {epoch}")
        losses.append(loss_val)
        parts_trace.append(parts)
        if log is not None:
            log(epoch, parts)
        if len(losses) >= 2:
            prev, cur = losses[-2], losses[-1]
            # plateau means improvement near zero; a large negative value is
            # divergence in progress, which the finiteness check handles
            rel = (prev - cur) / max(abs(prev), 1e-12)
            stall = stall + 1 if abs(rel) < 1e-5 else 0
            if stall >= 5:
                stopped_early = True
                break
    return TrainResult(model=model, loss_trace=losses, stopped_early=stopped_early, parts_trace=parts_trace)


def config_with(cfg: TrainConfig, **overrides) -> TrainConfig:
    return replace(cfg, **overrides)
