"""Social network storage and the normalized propagation operator.

The directed edge (src, dst) means "src influences dst" (dst follows src).
The operator aggregates, for each user, the states of their influencers
plus themselves: with A[i, j] = 1 iff j influences i, we form
A_hat = A + I, D_hat = diag(row sums), and keep
D_hat^{-1/2} A_hat D_hat^{-1/2} as an immutable CSR matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import numerics as nm


@dataclass(frozen=True)
class SocialGraph:
    n_users: int
    edges: tuple  # of (src, dst) pairs, deduplicated, no self-edges

    def __post_init__(self):
        for src, dst in self.edges:
            if not (0 <= src < self.n_users and 0 <= dst < self.n_users):
                raise ValueError(f"edge ({src}, {dst}) outside user range [0, {self.n_users})")
            if src == dst:
                raise ValueError(f"self-edge ({src}, {dst}) not allowed in input")
        if len(set(self.edges)) != len(self.edges):
            raise ValueError("duplicate edges in graph")


def load_edges(path) -> SocialGraph:
    """Parse a UTF-8 edge file: one "src<TAB>dst" per line.

    An optional first line "#users=N" fixes the user count; otherwise it is
    1 + max id seen. Duplicate edges collapse to one.
    """
    declared = None
    edges: list[tuple[int, int]] = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if lineno == 1 and line.startswith("#users="):
                declared = int(line[len("#users="):])
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'src<TAB>dst', got {line!r}")
            try:
                src, dst = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-integer ids in {line!r}") from None
            if src == dst:
                raise ValueError(f"{path}:{lineno}: self-edge {src}->{dst}")
            if declared is not None and (src >= declared or dst >= declared):
                raise ValueError(f"{path}:{lineno}: id >= declared #users={declared}")
            if src < 0 or dst < 0:
                raise ValueError(f"{path}:{lineno}: negative id")
            if (src, dst) not in seen:
                seen.add((src, dst))
                edges.append((src, dst))
    if declared is None:
        if not edges:
            raise ValueError(f"{path}: empty edge file without a #users header")
        declared = 1 + max(max(s, d) for s, d in edges)
    return SocialGraph(n_users=declared, edges=tuple(edges))


def save_edges(graph: SocialGraph, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#users={graph.n_users}\n")
        for src, dst in graph.edges:
            fh.write(f"{src}\t{dst}\n")


class NormalizedOperator:
    """Immutable D^{-1/2} (A + I) D^{-1/2} in CSR form."""

    def __init__(self, matrix: sp.csr_matrix):
        self.matrix = matrix
        self.matrix_t = sp.csr_matrix(matrix.T)
        self.n_users = matrix.shape[0]

    def apply(self, m: nm.Tensor) -> nm.Tensor:
        """Sparse-dense product; gradient flows through m only."""
        return nm.spmm(m, self.matrix, self.matrix_t)

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        return np.asarray(self.matrix @ values)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def build_operator(graph: SocialGraph) -> NormalizedOperator:
    n = graph.n_users
    if n < 1:
        raise ValueError("graph has no users")
    rows = [dst for (_, dst) in graph.edges] + list(range(n))
    cols = [src for (src, _) in graph.edges] + list(range(n))
    data = np.ones(len(rows))
    a_hat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    deg = np.asarray(a_hat.sum(axis=1)).ravel()
    d_inv_sqrt = 1.0 / np.sqrt(deg)  # every row has the self-loop, deg >= 1
    scaler = sp.diags(d_inv_sqrt, format="csr")
    return NormalizedOperator(sp.csr_matrix(scaler @ a_hat @ scaler))


def dense_operator_reference(graph: SocialGraph) -> np.ndarray:
    """Brute-force dense build used to cross-check the sparse path."""
    n = graph.n_users
    a_hat = np.eye(n)
    for src, dst in graph.edges:
        a_hat[dst, src] = 1.0
    deg = a_hat.sum(axis=1)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(deg))
    return d_inv_sqrt @ a_hat @ d_inv_sqrt
