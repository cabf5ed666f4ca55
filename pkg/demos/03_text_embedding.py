"""Deterministic signed feature hashing for cascade content.

Run:  python demos/03_text_embedding.py
"""

import numpy as np

from driftrank import embed

d = 128

print("=== determinism and bag-of-words behavior ===")
a = embed.embed_text("breaking news about the election tonight", d)
b = embed.embed_text("tonight the election news breaking about", d)
print("same tokens, different order, identical vectors:", bool(np.array_equal(a, b)))
print("norm:", np.linalg.norm(a))
print("empty text maps to the zero vector:", embed.embed_text("", d).sum() == 0.0)

print()
print("=== related texts land nearby ===")
base = embed.embed_text("venezuela election fraud protest caracas", d)
related = embed.embed_text("venezuela election results protest", d)
unrelated = embed.embed_text("kitten pictures rainbow sparkles unicorn", d)
print(f"cos(base, related)   = {float(base @ related):+.3f}")
print(f"cos(base, unrelated) = {float(base @ unrelated):+.3f}")

print()
print("=== hashed coordinates concentrate near orthogonal ===")
rng = np.random.default_rng(1)
cosines = []
for i in range(200):
    t1 = " ".join(f"a{i}x{j}" for j in rng.integers(0, 999, 10))
    t2 = " ".join(f"b{i}y{j}" for j in rng.integers(0, 999, 10))
    cosines.append(abs(float(embed.embed_text(t1, d) @ embed.embed_text(t2, d))))
print(f"median |cos| over 200 disjoint-token pairs: {np.median(cosines):.3f}")
print(f"95th percentile: {np.percentile(cosines, 95):.3f}")
