"""Dynamic interest encoder.

Rolls per-user hidden states forward one time step at a time with a
graph-convolutional GRU: gate pre-activations aggregate each user's
influencers (plus self) through the normalized operator, the input is the
recent-stimuli matrix, and the updated state parameterizes a diagonal
Gaussian over latent interests sampled with the usual eps * sigma + mu
trick.  h(0) is all zeros so the first step depends only on stimuli.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from . import numerics as nm
from .graphs import NormalizedOperator
from .numerics import Parameter, Tensor, Trace


@dataclass
class EncoderParams:
    w_hu: Parameter
    w_hr: Parameter
    w_hm: Parameter
    w_xu: Parameter
    w_xr: Parameter
    w_xm: Parameter
    w_mu: Parameter
    b_mu: Parameter
    w_logvar: Parameter
    b_logvar: Parameter

    @classmethod
    def init(cls, d: int, rng: np.random.Generator) -> "EncoderParams":
        bound = 1.0 / np.sqrt(d)

        def mat(name):
            return Parameter(name, rng.uniform(-bound, bound, size=(d, d)))

        return cls(
            w_hu=mat("enc.w_hu"),
            w_hr=mat("enc.w_hr"),
            w_hm=mat("enc.w_hm"),
            w_xu=mat("enc.w_xu"),
            w_xr=mat("enc.w_xr"),
            w_xm=mat("enc.w_xm"),
            w_mu=mat("enc.w_mu"),
            b_mu=Parameter("enc.b_mu", np.zeros((1, d))),
            w_logvar=mat("enc.w_logvar"),
            b_logvar=Parameter("enc.b_logvar", np.zeros((1, d))),
        )

    def all(self) -> list[Parameter]:
        return [
            self.w_hu, self.w_hr, self.w_hm,
            self.w_xu, self.w_xr, self.w_xm,
            self.w_mu, self.b_mu, self.w_logvar, self.b_logvar,
        ]


@dataclass
class LatentInterests:
    mu: Tensor
    sigma: Tensor
    z: Tensor


def _convolved(h: Tensor, operator: NormalizedOperator | None, k: int) -> Tensor:
    out = h
    if operator is not None:
        for _ in range(k):
            out = operator.apply(out)
    return out


def gru_step(
    trace: Trace,
    h_prev: Tensor,
    x_prev: Tensor,
    operator: NormalizedOperator | None,
    p: EncoderParams,
    conv_layers: int = 1,
) -> Tensor:
    """One recurrent update of the user states.

    operator=None drops the social aggregation (the remove-conv ablation);
    conv_layers > 1 applies the operator repeatedly for multi-hop influence.
    """
    if h_prev.shape != x_prev.shape:
        raise ValueError(f"state {h_prev.shape} and stimuli {x_prev.shape} disagree")
    if conv_layers < 1:
        raise ValueError("conv_layers must be >= 1")
    lh = _convolved(h_prev, operator, conv_layers)
    g_u = nm.sigmoid(nm.add(nm.matmul(lh, trace.leaf(p.w_hu)), nm.matmul(x_prev, trace.leaf(p.w_xu))))
    g_r = nm.sigmoid(nm.add(nm.matmul(lh, trace.leaf(p.w_hr)), nm.matmul(x_prev, trace.leaf(p.w_xr))))
    gated = nm.hadamard(g_r, h_prev)
    lg = _convolved(gated, operator, conv_layers)
    h_cand = nm.tanh(nm.add(nm.matmul(lg, trace.leaf(p.w_hm)), nm.matmul(x_prev, trace.leaf(p.w_xm))))
    keep = nm.add_const(nm.scale(g_u, -1.0), 1.0)  # 1 - G_u
    return nm.add(nm.hadamard(g_u, h_cand), nm.hadamard(keep, h_prev))


def sample(trace: Trace, h: Tensor, p: EncoderParams, eps: np.ndarray) -> LatentInterests:
    """Latent interests from the current state: mu + eps * sigma with
    sigma = exp(0.5 * logvar) so it stays positive."""
    mu = nm.add_rowvec(nm.matmul(h, trace.leaf(p.w_mu)), trace.leaf(p.b_mu))
    logvar = nm.add_rowvec(nm.matmul(h, trace.leaf(p.w_logvar)), trace.leaf(p.b_logvar))
    sigma = nm.exp(nm.scale(logvar, 0.5))
    if np.any(eps):
        z = nm.add(mu, nm.hadamard(trace.constant(eps), sigma))
    else:
        z = mu
    return LatentInterests(mu=mu, sigma=sigma, z=z)


def kl_to_prior(mu: Tensor, sigma: Tensor) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over users and dimensions:
    0.5 * sum(mu^2 + sigma^2 - 2 ln sigma - 1)."""
    parts = nm.add(nm.hadamard(mu, mu), nm.hadamard(sigma, sigma))
    parts = nm.add(parts, nm.scale(nm.log(sigma), -2.0))
    parts = nm.add_const(parts, -1.0)
    return nm.scale(nm.sum_all(parts), 0.5)


def rollout(
    trace: Trace,
    corpus: data_mod.Corpus,
    operator: NormalizedOperator | None,
    p: EncoderParams,
    steps: int,
    d: int,
    eps_for_step=None,
    conv_layers: int = 1,
    static: bool = False,
):
    """Latent interests for steps 0..steps-1 plus the accumulated KL.

    eps_for_step(t) supplies the noise matrix (None or zeros means the
    posterior mean, used at prediction time).  static=True replaces the
    recurrence with a single graph convolution of the whole-window stimuli,
    sampled once and reused at every step.
    """
    zeros = np.zeros((corpus.n_users, d))

    def eps_at(t):
        if eps_for_step is None:
            return zeros
        e = eps_for_step(t)
        return zeros if e is None else e

    if static:
        x_all = trace.constant(data_mod.aggregate_stimuli(corpus, d))
        h = nm.tanh(nm.matmul(_convolved(x_all, operator, 1), trace.leaf(p.w_hm)))
        latent = sample(trace, h, p, eps_at(0))
        kl = kl_to_prior(latent.mu, latent.sigma)
        return [latent] * steps, kl

    h = trace.constant(zeros)
    latents = []
    kl_total = None
    for t in range(steps):
        if t > 0:
            x = trace.constant(data_mod.recent_stimuli(corpus, t, d))
            h = gru_step(trace, h, x, operator, p, conv_layers)
        latent = sample(trace, h, p, eps_at(t))
        latents.append(latent)
        kl = kl_to_prior(latent.mu, latent.sigma)
        kl_total = kl if kl_total is None else nm.add(kl_total, kl)
    return latents, kl_total
