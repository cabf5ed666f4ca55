"""Diffusion prediction with drifting latent user interests.

A small numpy library built around three pieces: a minimal reverse-mode
differentiation core (`numerics`), a graph-convolutional recurrent
variational encoder that tracks per-user interest drift (`encoder`), and
a dual-attention decoder that ranks potential forwarders of a cascade
(`decoder`).  Training uses a rank-weighted pairwise hinge objective
(`training`), evaluation is retrieval-style MAP@K / Recall@K
(`evaluation`), and `synthgen` plants a recoverable drift signal in
synthetic corpora so the whole pipeline can be exercised end to end.
"""

from . import (
    cli,
    data,
    decoder,
    embed,
    encoder,
    evaluation,
    graphs,
    numerics,
    synthgen,
    training,
)

__version__ = "0.1.0"

__all__ = [
    "cli",
    "data",
    "decoder",
    "embed",
    "encoder",
    "evaluation",
    "graphs",
    "numerics",
    "synthgen",
    "training",
]
