"""Content-to-vector mapping: deterministic signed feature hashing.

The hashing contract is normative so test vectors transfer across
implementations: tokens are lowercased runs of alphanumerics, each token is
FNV-1a-64 hashed, the coordinate is hash mod d, and the sign comes from the
hash's high bit (bit set -> -1). Accumulated vectors are L2-normalized;
an empty token set maps to the zero vector, which downstream code reads as
"no content".
"""

from __future__ import annotations

import json
import re

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

_TOKEN_RE = re.compile(r"[0-9a-z]+")


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def embed_text(text: str, d: int) -> np.ndarray:
    """Hash a text into a unit d-vector (zero vector if no tokens)."""
    if d < 2:
        raise ValueError(f"embedding dimension must be >= 2, got {d}")
    vec = np.zeros(d)
    for token in tokenize(text):
        h = fnv1a_64(token.encode("utf-8"))
        sign = -1.0 if (h >> 63) & 1 else 1.0
        vec[h % d] += sign
    norm = np.linalg.norm(vec)
    if norm > 0.0:
        vec /= norm
    return vec


def normalize_or_zero(vec: np.ndarray) -> np.ndarray:
    """Renormalize to unit length; an (exactly or nearly) zero vector stays zero."""
    vec = np.asarray(vec, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return np.zeros_like(vec)
    return vec / norm


def load_precomputed(path, d: int) -> dict[str, np.ndarray]:
    """Load externally computed vectors: one JSON object {"id", "vec"} per line."""
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            rec = json.loads(line)
            vec = np.asarray(rec["vec"], dtype=np.float64)
            if vec.shape != (d,):
                raise ValueError(
                    f"{path}:{lineno}: vector for {rec['id']!r} has dimension "
                    f"{vec.shape}, expected ({d},)"
                )
            out[str(rec["id"])] = normalize_or_zero(vec)
    return out
