"""Dual-attention ranking decoder.

Latent interests are projected into asymmetric sender/receiver states.
A causal self-attention with positional encodings denoises the forwarding
user sequence; a second attention anchored on the projected content vector
merges content and sequence into one cascade vector, whose inner product
with a candidate's receiver state gives the propagation likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import numerics as nm
from .numerics import Parameter, Tensor, Trace


@dataclass
class DecoderParams:
    w_sender: Parameter
    w_receiver: Parameter
    w_content: Parameter
    b_content: Parameter
    tied: bool = False

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, tied: bool = False) -> "DecoderParams":
        bound = 1.0 / np.sqrt(d)
        w_sender = Parameter("dec.w_sender", rng.uniform(-bound, bound, size=(d, d)))
        w_receiver = w_sender if tied else Parameter(
            "dec.w_receiver", rng.uniform(-bound, bound, size=(d, d))
        )
        return cls(
            w_sender=w_sender,
            w_receiver=w_receiver,
            w_content=Parameter("dec.w_content", rng.uniform(-bound, bound, size=(d, d))),
            b_content=Parameter("dec.b_content", np.zeros((1, d))),
            tied=tied,
        )

    def all(self) -> list[Parameter]:
        params = [self.w_sender]
        if not self.tied:
            params.append(self.w_receiver)
        params.extend([self.w_content, self.b_content])
        return params


def project(trace: Trace, z: Tensor, p: DecoderParams):
    """Sender and receiver states for every user: z W_S, z W_R."""
    v_s = nm.matmul(z, trace.leaf(p.w_sender))
    v_r = nm.matmul(z, trace.leaf(p.w_receiver))
    return v_s, v_r


def project_content(trace: Trace, content_vec: np.ndarray, p: DecoderParams) -> Tensor:
    c = trace.constant(content_vec.reshape(1, -1))
    return nm.add_rowvec(nm.matmul(c, trace.leaf(p.w_content)), trace.leaf(p.b_content))


def positional_encoding(k: int, dim: int) -> np.ndarray:
    """Sinusoidal position vector: pair (2i, 2i+1) holds
    (sin, cos) of k / 10000^(2i/dim)."""
    if dim % 2 != 0:
        raise ValueError(f"positional encoding needs an even dimension, got {dim}")
    if k < 0:
        raise ValueError(f"position must be >= 0, got {k}")
    pe = np.zeros(dim)
    i = np.arange(dim // 2)
    angle = k / np.power(10000.0, 2.0 * i / dim)
    pe[0::2] = np.sin(angle)
    pe[1::2] = np.cos(angle)
    return pe


@lru_cache(maxsize=256)
def _pe_matrix_cached(n_positions: int, dim: int) -> np.ndarray:
    return np.stack([positional_encoding(k, dim) for k in range(1, n_positions + 1)])


def pe_matrix(n_positions: int, dim: int) -> np.ndarray:
    """Rows are positions 1..n_positions (position 0 belongs to the
    content token, which gets no encoding)."""
    return _pe_matrix_cached(n_positions, dim)


def self_attention(
    trace: Trace,
    v_s_seq: Tensor,
    v_r_seq: Tensor,
    include_pe: bool = True,
):
    """Causal denoising over a forwarding sequence.

    Row k of the output is the softmax-weighted sum of sender states at
    positions <= k; logits are inner products of PE-shifted sender and
    receiver states. Returns (denoised K x d tensor, weight matrix values).
    """
    k = v_s_seq.shape[0]
    if k < 1:
        raise ValueError("self_attention needs a non-empty sequence")
    if v_s_seq.shape != v_r_seq.shape:
        raise ValueError(f"sender {v_s_seq.shape} and receiver {v_r_seq.shape} shapes disagree")
    if include_pe:
        pe = trace.constant(pe_matrix(k, v_s_seq.shape[1]))
        s_pe = nm.add(v_s_seq, pe)
        r_pe = nm.add(v_r_seq, pe)
    else:
        s_pe, r_pe = v_s_seq, v_r_seq
    logits = nm.matmul(r_pe, nm.transpose(s_pe))  # [k, i] = <r_k, s_i>
    weights = nm.causal_row_softmax(logits)
    denoised = nm.matmul(weights, v_s_seq)
    return denoised, weights.values.copy()


@dataclass
class CascadeRepresentation:
    o: Tensor
    alpha_content: float
    alpha_users: np.ndarray


def hetero_attention(trace: Trace, v_c: Tensor, v_seq: Tensor | None) -> CascadeRepresentation:
    """Merge the content vector and the denoised user sequence with one
    softmax over K+1 logits <v_c, v_c>, <v_1, v_c>, ..., <v_K, v_c>."""
    if v_seq is not None and v_seq.shape[0] > 0:
        stacked = nm.concat_rows([v_c, v_seq])
    else:
        stacked = v_c
    logits = nm.transpose(nm.matmul(stacked, nm.transpose(v_c)))  # 1 x (K+1)
    alpha = nm.row_softmax(logits)
    o = nm.matmul(alpha, stacked)
    weights = alpha.values[0]
    return CascadeRepresentation(o=o, alpha_content=float(weights[0]), alpha_users=weights[1:].copy())


def likelihood(trace: Trace, o: Tensor, v_r: Tensor) -> Tensor:
    """Propagation likelihood sigmoid(<o, v_r>) for one candidate."""
    if o.shape != v_r.shape or o.shape[0] != 1:
        raise ValueError(f"likelihood expects matching 1 x d rows, got {o.shape} and {v_r.shape}")
    return nm.sigmoid(nm.matmul(o, nm.transpose(v_r)))


def likelihood_row(o: Tensor, v_r_rows: Tensor) -> Tensor:
    """Likelihoods for many candidates at once: sigmoid(o V_R^T), 1 x C."""
    return nm.sigmoid(nm.matmul(o, nm.transpose(v_r_rows)))


def cascade_vector_projected(
    trace: Trace,
    v_s_full: Tensor,
    v_r_full: Tensor,
    content_vec: np.ndarray,
    prefix_ids,
    p: DecoderParams,
    use_self_attention: bool = True,
    use_content_attention: bool = True,
) -> Tensor:
    """Cascade vector from already-projected sender/receiver matrices.

    The ablation switches mirror the two attention stages: without the
    first, sender states pass through undenoised; without the second, the
    cascade vector is the plain mean of the user rows (zero if the prefix
    is empty) and the content is ignored.
    """
    prefix_ids = list(prefix_ids)
    v_seq = None
    if prefix_ids:
        idx = np.asarray(prefix_ids, dtype=np.intp)
        v_s_seq = nm.gather_rows(v_s_full, idx, assume_unique=True)
        if use_self_attention:
            v_r_seq = nm.gather_rows(v_r_full, idx, assume_unique=True)
            v_seq, _ = self_attention(trace, v_s_seq, v_r_seq)
        else:
            v_seq = v_s_seq
    if not use_content_attention:
        if v_seq is None:
            return trace.constant(np.zeros((1, p.w_sender.shape[1])))
        ones = trace.constant(np.full((1, len(prefix_ids)), 1.0 / len(prefix_ids)))
        return nm.matmul(ones, v_seq)
    v_c = project_content(trace, content_vec, p)
    return hetero_attention(trace, v_c, v_seq).o


def scores_projected(v_r_full: Tensor, o: Tensor, user_ids) -> Tensor:
    """Likelihood row for an explicit user list, from projected receivers."""
    rows = nm.gather_rows(v_r_full, np.asarray(list(user_ids), dtype=np.intp), assume_unique=True)
    return likelihood_row(o, rows)


def cascade_vector(
    trace: Trace,
    z: Tensor,
    content_vec: np.ndarray,
    prefix_ids,
    p: DecoderParams,
    use_self_attention: bool = True,
    use_content_attention: bool = True,
) -> Tensor:
    """Compose the decoder pipeline for one cascade from raw latents."""
    v_s_full, v_r_full = project(trace, z, p)
    return cascade_vector_projected(
        trace, v_s_full, v_r_full, content_vec, prefix_ids, p,
        use_self_attention=use_self_attention,
        use_content_attention=use_content_attention,
    )


def score_users(
    trace: Trace,
    z: Tensor,
    o: Tensor,
    user_ids,
    p: DecoderParams,
) -> Tensor:
    """Likelihood row for an explicit list of users (1 x len(user_ids))."""
    z_rows = nm.gather_rows(z, np.asarray(list(user_ids), dtype=np.intp))
    v_r = nm.matmul(z_rows, trace.leaf(p.w_receiver))
    return likelihood_row(o, v_r)


def rank_candidates_projected(
    trace: Trace,
    v_s_full: Tensor,
    v_r_full: Tensor,
    content_vec: np.ndarray,
    observed_ids,
    p: DecoderParams,
    n_users: int,
    use_self_attention: bool = True,
    use_content_attention: bool = True,
):
    observed = list(observed_ids)
    observed_set = set(observed)
    candidates = np.array([u for u in range(n_users) if u not in observed_set], dtype=np.intp)
    if candidates.size == 0:
        raise ValueError("empty candidate set: every user is already observed")
    o = cascade_vector_projected(
        trace, v_s_full, v_r_full, content_vec, observed, p,
        use_self_attention=use_self_attention,
        use_content_attention=use_content_attention,
    )
    scores = scores_projected(v_r_full, o, candidates).values[0]
    order = np.lexsort((candidates, -scores))
    return candidates[order], scores[order]


def rank_candidates(
    trace: Trace,
    z: Tensor,
    content_vec: np.ndarray,
    observed_ids,
    p: DecoderParams,
    n_users: int,
    use_self_attention: bool = True,
    use_content_attention: bool = True,
):
    """Score every user outside the observed prefix and sort them.

    Returns (candidate ids, scores) ordered by descending score with ties
    broken by ascending user id.
    """
    v_s_full, v_r_full = project(trace, z, p)
    return rank_candidates_projected(
        trace, v_s_full, v_r_full, content_vec, observed_ids, p, n_users,
        use_self_attention=use_self_attention,
        use_content_attention=use_content_attention,
    )
