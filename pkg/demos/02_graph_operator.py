"""The normalized propagation operator on a small follower graph.

Run:  python demos/02_graph_operator.py
"""

import numpy as np

from driftrank import numerics as nm
from driftrank.graphs import SocialGraph, build_operator

# edge (src, dst) means "src influences dst", i.e. dst follows src
graph = SocialGraph(
    n_users=5,
    edges=((0, 1), (1, 2), (2, 3), (0, 3), (3, 0)),
)
op = build_operator(graph)

print("dense view of D^{-1/2} (A + I) D^{-1/2}:")
print(np.round(op.dense(), 3))
print()
print("row i mixes user i's own state with their influencers'.")
print("user 4 follows nobody, so their row is a pure self-loop:", op.dense()[4])

print()
print("=== one smoothing step ===")
trace = nm.Trace()
states = np.eye(5)[:, :3]  # three one-hot feature columns
mixed = op.apply(trace.constant(states))
print("before:\n", states)
print("after one application:\n", np.round(mixed.values, 3))

print()
print("=== influence is local ===")
rng = np.random.default_rng(0)
h = rng.standard_normal((5, 3))
base = op.apply_values(op.apply_values(h))
bumped = h.copy()
bumped[4] += 10.0  # user 4 influences nobody
moved = op.apply_values(op.apply_values(bumped))
print("perturbing user 4 leaves everyone else fixed after two hops:",
      bool(np.array_equal(base[:4], moved[:4])))
