"""Minimal dense reverse-mode differentiation core.

Everything the model computes flows through the primitives in this module.
Values are 64-bit row-major matrices (vectors are 1 x d, scalars 1 x 1).
Each primitive records itself on a :class:`Trace`; :func:`backward` replays
the trace in reverse and accumulates gradients into :class:`Parameter`
buffers.  Gradient buffers accumulate across backward calls until an
explicit reset, so per-pair loss contributions can be summed before one
optimizer step.

:func:`grad_check` verifies analytic gradients against central finite
differences and is the gradient oracle for the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

# Exponent clamp shared by exp() and the attention logits: exp(30) ~ 1e13
# stays comfortably inside float64 range.
EXP_CLAMP = 30.0


def _as_matrix(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ValueError(f"tensors are 2-D matrices, got ndim={arr.ndim}")
    return np.ascontiguousarray(arr)


class Parameter:
    """Named trainable matrix with an additive gradient buffer."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value):
        self.name = name
        self.value = _as_matrix(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def reset_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def reset_gradients(params: Sequence[Parameter]):
    for p in params:
        p.reset_grad()


class Tensor:
    """Immutable matrix node in a traced computation.

    Leaf tensors are constants or parameter views; op outputs carry
    (parent, vjp) pairs used by :func:`backward`.
    """

    __slots__ = ("values", "trace", "_parents", "_param")

    def __init__(self, values: np.ndarray, trace: "Trace", parents=(), param=None):
        self.values = values
        self.trace = trace
        self._parents = parents
        self._param = param

    @property
    def shape(self):
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.values.shape})"


class Trace:
    """Recorded sequence of primitive applications.

    Primitives append their outputs in execution order, so the list is a
    topological order of the computation and reversed iteration visits each
    primitive exactly once in reverse topological order.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._leaf_cache: dict[int, Tensor] = {}

    def __len__(self):
        return len(self._nodes)

    def constant(self, values) -> Tensor:
        return Tensor(_as_matrix(values), self)

    def leaf(self, param: Parameter) -> Tensor:
        """Leaf view of a parameter; backward adds into ``param.grad``."""
        cached = self._leaf_cache.get(id(param))
        if cached is None:
            cached = Tensor(param.value, self, (), param)
            self._leaf_cache[id(param)] = cached
        return cached

    def _record(self, values: np.ndarray, parents) -> Tensor:
        out = Tensor(values, self, parents)
        self._nodes.append(out)
        return out


def _shared_trace(*tensors: Tensor) -> Trace:
    trace = tensors[0].trace
    for t in tensors[1:]:
        if t.trace is not trace:
            raise ValueError("inputs were recorded on different traces")
    return trace


def _check_same_shape(a: Tensor, b: Tensor, op: str):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise primitives


def sigmoid(t: Tensor) -> Tensor:
    # the tanh identity is overflow-free for any input
    out = 0.5 * (1.0 + np.tanh(0.5 * t.values))
    return t.trace._record(out, ((t, lambda g, y=out: g * y * (1.0 - y)),))


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.values)
    return t.trace._record(out, ((t, lambda g, y=out: g * (1.0 - y * y)),))


def exp(t: Tensor) -> Tensor:
    """exp with inputs clamped to |x| <= EXP_CLAMP to avoid overflow."""
    x = t.values
    out = np.exp(np.clip(x, -EXP_CLAMP, EXP_CLAMP))
    inside = (np.abs(x) <= EXP_CLAMP).astype(np.float64)
    return t.trace._record(out, ((t, lambda g, y=out, m=inside: g * y * m),))


def log(t: Tensor) -> Tensor:
    if np.any(t.values <= 0.0):
        raise ValueError("log requires strictly positive inputs")
    out = np.log(t.values)
    return t.trace._record(out, ((t, lambda g, x=t.values: g / x),))


def relu(t: Tensor) -> Tensor:
    out = np.maximum(t.values, 0.0)
    mask = (t.values > 0.0).astype(np.float64)
    return t.trace._record(out, ((t, lambda g, m=mask: g * m),))


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    trace = _shared_trace(a, b)
    out = a.values + b.values
    return trace._record(out, ((a, lambda g: g), (b, lambda g: g)))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "hadamard")
    trace = _shared_trace(a, b)
    out = a.values * b.values
    return trace._record(
        out,
        ((a, lambda g, bv=b.values: g * bv), (b, lambda g, av=a.values: g * av)),
    )


def scale(t: Tensor, c: float) -> Tensor:
    c = float(c)
    return t.trace._record(t.values * c, ((t, lambda g: g * c),))


def add_const(t: Tensor, c: float) -> Tensor:
    return t.trace._record(t.values + float(c), ((t, lambda g: g),))


_ELEMENTWISE_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "exp": exp}
_ELEMENTWISE_BINARY = {"hadamard": hadamard, "add": add}


def elementwise(kind: str, *inputs: Tensor, factor: float | None = None) -> Tensor:
    """Dispatch by kind: sigmoid | tanh | exp | hadamard | add | scale."""
    if kind in _ELEMENTWISE_UNARY:
        (t,) = inputs
        return _ELEMENTWISE_UNARY[kind](t)
    if kind in _ELEMENTWISE_BINARY:
        a, b = inputs
        return _ELEMENTWISE_BINARY[kind](a, b)
    if kind == "scale":
        (t,) = inputs
        if factor is None:
            raise ValueError("scale needs a factor")
        return scale(t, factor)
    raise ValueError(f"unknown elementwise kind {kind!r}")


# ---------------------------------------------------------------------------
# matrix / shape primitives


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dimensions disagree {a.shape} vs {b.shape}")
    trace = _shared_trace(a, b)
    out = a.values @ b.values
    return trace._record(
        out,
        (
            (a, lambda g, bv=b.values: g @ bv.T),
            (b, lambda g, av=a.values: av.T @ g),
        ),
    )


def transpose(t: Tensor) -> Tensor:
    # views are fine: BLAS consumes transposed operands natively
    return t.trace._record(t.values.T, ((t, lambda g: g.T),))


def sum_all(t: Tensor) -> Tensor:
    out = np.array([[t.values.sum()]])
    shape = t.shape
    return t.trace._record(out, ((t, lambda g: np.full(shape, g[0, 0])),))


def add_rowvec(m: Tensor, b: Tensor) -> Tensor:
    """m (n x d) plus a 1 x d row broadcast down the rows."""
    if b.shape != (1, m.shape[1]):
        raise ValueError(f"add_rowvec: bias {b.shape} does not match columns of {m.shape}")
    trace = _shared_trace(m, b)
    out = m.values + b.values
    return trace._record(
        out,
        ((m, lambda g: g), (b, lambda g: g.sum(axis=0, keepdims=True))),
    )


def outer_add(col: Tensor, row: Tensor) -> Tensor:
    """out[a, b] = col[a, 0] + row[0, b] for a P x 1 column and 1 x M row."""
    if col.shape[1] != 1 or row.shape[0] != 1:
        raise ValueError(f"outer_add expects P x 1 and 1 x M, got {col.shape} and {row.shape}")
    trace = _shared_trace(col, row)
    out = col.values + row.values
    return trace._record(
        out,
        (
            (col, lambda g: g.sum(axis=1, keepdims=True)),
            (row, lambda g: g.sum(axis=0, keepdims=True)),
        ),
    )


def broadcast_add_scalar(t: Tensor, s: Tensor) -> Tensor:
    """t plus a 1 x 1 scalar tensor broadcast over every element."""
    if s.shape != (1, 1):
        raise ValueError(f"broadcast_add_scalar: scalar operand has shape {s.shape}")
    trace = _shared_trace(t, s)
    out = t.values + s.values[0, 0]
    return trace._record(
        out,
        ((t, lambda g: g), (s, lambda g: np.array([[g.sum()]]))),
    )


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise ValueError("concat_rows: empty input")
    trace = _shared_trace(*tensors)
    cols = tensors[0].shape[1]
    for t in tensors:
        if t.shape[1] != cols:
            raise ValueError(f"concat_rows: column mismatch {t.shape} vs (*, {cols})")
    out = np.concatenate([t.values for t in tensors], axis=0)
    parents = []
    lo = 0
    for t in tensors:
        hi = lo + t.shape[0]
        parents.append((t, lambda g, lo=lo, hi=hi: g[lo:hi]))
        lo = hi
    return trace._record(out, tuple(parents))


def gather_rows(t: Tensor, idx, assume_unique: bool = False) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != 1:
        raise ValueError("gather_rows: indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= t.shape[0]):
        raise ValueError("gather_rows: index out of range")
    out = t.values[idx]
    unique = assume_unique or len(np.unique(idx)) == idx.size

    def vjp(g, idx=idx, shape=t.shape, unique=unique):
        buf = np.zeros(shape)
        if unique:
            buf[idx] = g  # plain scatter, much faster than ufunc.at
        else:
            np.add.at(buf, idx, g)
        return buf

    return t.trace._record(out, ((t, vjp),))


def spmm(t: Tensor, mat, mat_t) -> Tensor:
    """Left-multiply by a constant sparse matrix: mat @ t.

    ``mat_t`` is the precomputed transpose used for the backward pass.
    Gradient flows through ``t`` only.
    """
    if mat.shape[1] != t.shape[0]:
        raise ValueError(f"spmm: operator {mat.shape} does not match input {t.shape}")
    out = np.asarray(mat @ t.values)
    return t.trace._record(out, ((t, lambda g: np.asarray(mat_t @ g)),))


# ---------------------------------------------------------------------------
# softmax


def _stable_softmax_row(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max()
    e = np.exp(np.clip(shifted, -EXP_CLAMP, EXP_CLAMP))
    return e / e.sum()


def row_softmax(t: Tensor) -> Tensor:
    """Softmax over a single 1 x n row, stabilized by max subtraction."""
    if t.shape[0] != 1 or t.shape[1] < 1:
        raise ValueError(f"row_softmax expects a non-empty 1 x n row, got {t.shape}")
    if not np.all(np.isfinite(t.values)):
        raise ValueError("row_softmax: logits must be finite")
    p = _stable_softmax_row(t.values[0]).reshape(1, -1)

    def vjp(g, p=p):
        return p * (g - (g * p).sum())

    return t.trace._record(p, ((t, vjp),))


def causal_row_softmax(t: Tensor) -> Tensor:
    """Row-wise softmax over causal prefixes of a K x K logit matrix.

    Row k is a distribution over columns 0..k; columns above the diagonal
    get exactly zero weight and zero gradient.
    """
    k = t.shape[0]
    if t.shape != (k, k) or k < 1:
        raise ValueError(f"causal_row_softmax expects square non-empty input, got {t.shape}")
    x = t.values
    mask = np.tril(np.ones((k, k), dtype=bool))
    shifted = x - np.max(np.where(mask, x, -np.inf), axis=1, keepdims=True)
    e = np.where(mask, np.exp(np.clip(shifted, -EXP_CLAMP, EXP_CLAMP)), 0.0)
    out = e / e.sum(axis=1, keepdims=True)

    def vjp(g, p=out):
        inner = (g * p).sum(axis=1, keepdims=True)
        return p * (g - inner)

    return t.trace._record(out, ((t, vjp),))


# ---------------------------------------------------------------------------
# reverse pass


def backward(loss: Tensor, trace: Trace):
    """Accumulate d(loss)/d(param) into every reachable Parameter.

    Repeated calls add into the same buffers; call reset_grad between
    optimizer steps.
    """
    if loss.trace is not trace:
        raise ValueError("loss was not recorded on the given trace")
    if loss.shape != (1, 1):
        raise ValueError(f"loss must be a 1 x 1 scalar, got shape {loss.shape}")
    seed = np.ones((1, 1))
    if loss._param is not None:
        loss._param.grad += seed
        return
    if not loss._parents:
        return  # plain constant: nothing depends on parameters
    adjoint = {id(loss): seed}
    for node in reversed(trace._nodes):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        for parent, vjp in node._parents:
            pg = vjp(g)
            if parent._param is not None:
                parent._param.grad += pg
            elif parent._parents:
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + pg
                else:
                    adjoint[key] = pg
            # bare constants absorb no gradient


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    n_coordinates: int

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"grad_check {status}: max_rel_error={self.max_rel_error:.3e} over {self.n_coordinates} coords"


def grad_check(
    fn: Callable[[Trace], Tensor],
    params: Sequence[Parameter],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare backward() gradients of fn against central differences.

    fn must build a scalar loss on the supplied trace and be deterministic
    given the parameter values (two forward evaluations are compared
    bitwise to detect hidden randomness).  Relative error per coordinate,
    with an absolute-error fallback when both gradients are below 1e-8.
    """

    def forward() -> float:
        return fn(Trace()).item()

    first, second = forward(), forward()
    if first != second:
        raise ValueError(
            f"grad_check: fn is not deterministic ({first!r} != {second!r})"
        )

    reset_gradients(params)
    trace = Trace()
    loss = fn(trace)
    backward(loss, trace)
    analytic = [p.grad.copy() for p in params]

    max_err = 0.0
    n_coords = 0
    for p, an in zip(params, analytic):
        flat_value = p.value.reshape(-1)
        flat_an = an.reshape(-1)
        for i in range(flat_value.size):
            orig = flat_value[i]
            flat_value[i] = orig + h
            f_plus = forward()
            flat_value[i] = orig - h
            f_minus = forward()
            flat_value[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(flat_an[i]), abs(numeric))
            if denom < 1e-8:
                err = abs(flat_an[i] - numeric)
            else:
                err = abs(flat_an[i] - numeric) / denom
            max_err = max(max_err, err)
            n_coords += 1
    return GradCheckReport(max_rel_error=max_err, passed=max_err <= tol, n_coordinates=n_coords)
