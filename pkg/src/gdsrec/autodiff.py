"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A ``Tensor`` wraps a numpy array. While a ``Tape`` is active, every operation
appends a backward closure; ``Tape.backward`` replays the closures in exact
reverse execution order. Gradients accumulate additively, so a tensor that
feeds several downstream ops receives the sum of their contributions.

The op set is deliberately small: embedding gather, affine maps, ReLU /
logistic, concatenation, softmax, weighted sums and the handful of scalar
reductions needed to express a squared- or absolute-error training loss.
"""

from __future__ import annotations

import numpy as np

_TAPE_STACK: list["Tape"] = []


def _active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """Dense float64 array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def accumulate(self, g):
        self._ensure_grad()
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


class Tape:
    """Ordered record of executed ops; backward replays it in reverse."""

    def __init__(self):
        self._records = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def record(self, backward_fn):
        self._records.append(backward_fn)

    def __len__(self):
        return len(self._records)

    def backward(self, root: Tensor):
        """Seed the root gradient with ones and run all closures in reverse."""
        if root.size != 1:
            raise ValueError(f"backward root must be a scalar, got shape {root.shape}")
        root.accumulate(np.ones_like(root.data))
        for fn in reversed(self._records):
            fn()


def _make(data, *inputs) -> tuple[Tensor, bool]:
    """Build an op output; report whether a backward record is needed."""
    needs = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    return out, needs and _active_tape() is not None


# ---------------------------------------------------------------------------
# structural ops


def gather(table: Tensor, indices) -> Tensor:
    """Row lookup into an embedding table; backward scatter-adds per row."""
    idx = np.asarray(indices)
    out, rec = _make(table.data[idx], table)
    if rec:
        def backward():
            if out.grad is not None:
                np.add.at(table._ensure_grad(), idx, out.grad)
        _active_tape().record(backward)
    return out


def concat(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or b.data.ndim != 1:
        raise ValueError(f"concat expects 1-d tensors, got {a.shape} and {b.shape}")
    na = a.data.shape[0]
    out, rec = _make(np.concatenate([a.data, b.data]), a, b)
    if rec:
        def backward():
            if out.grad is not None:
                if a.requires_grad:
                    a.accumulate(out.grad[:na])
                if b.requires_grad:
                    b.accumulate(out.grad[na:])
        _active_tape().record(backward)
    return out


def hstack(a: Tensor, b: Tensor) -> Tensor:
    """Column-wise concatenation of two matrices with equal row counts."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"hstack expects matrices with equal rows, got {a.shape} and {b.shape}")
    na = a.data.shape[1]
    out, rec = _make(np.concatenate([a.data, b.data], axis=1), a, b)
    if rec:
        def backward():
            if out.grad is not None:
                if a.requires_grad:
                    a.accumulate(out.grad[:, :na])
                if b.requires_grad:
                    b.accumulate(out.grad[:, na:])
        _active_tape().record(backward)
    return out


def tile_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a vector as n identical rows."""
    if v.data.ndim != 1:
        raise ValueError(f"tile_rows expects a vector, got shape {v.shape}")
    out, rec = _make(np.tile(v.data, (n, 1)), v)
    if rec:
        def backward():
            if out.grad is not None:
                v.accumulate(out.grad.sum(axis=0))
        _active_tape().record(backward)
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out, rec = _make(x.data.reshape(shape), x)
    if rec:
        def backward():
            if out.grad is not None:
                x.accumulate(out.grad.reshape(x.data.shape))
        _active_tape().record(backward)
    return out


def stack(tensors) -> Tensor:
    """Pack single-element tensors into a vector."""
    ts = list(tensors)
    if not ts:
        raise ValueError("stack of zero tensors")
    if any(t.size != 1 for t in ts):
        raise ValueError("stack expects single-element tensors")
    out, rec = _make(np.array([t.item() for t in ts]), *ts)
    if rec:
        def backward():
            if out.grad is not None:
                for i, t in enumerate(ts):
                    if t.requires_grad:
                        t.accumulate(np.full(t.data.shape, out.grad[i]))
        _active_tape().record(backward)
    return out


# ---------------------------------------------------------------------------
# linear algebra


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = W x + b for a vector x, or row-wise x W^T + b for a matrix x."""
    m, n = w.data.shape
    if b.data.shape != (m,):
        raise ValueError(f"bias shape {b.shape} does not match weight rows {m}")
    if x.data.ndim == 1:
        if x.data.shape[0] != n:
            raise ValueError(f"affine shape mismatch: x {x.shape} vs W {w.shape}")
        out, rec = _make(w.data @ x.data + b.data, x, w, b)
        if rec:
            def backward():
                g = out.grad
                if g is None:
                    return
                if w.requires_grad:
                    w.accumulate(np.outer(g, x.data))
                if x.requires_grad:
                    x.accumulate(w.data.T @ g)
                if b.requires_grad:
                    b.accumulate(g)
            _active_tape().record(backward)
        return out
    if x.data.ndim == 2:
        if x.data.shape[1] != n:
            raise ValueError(f"affine shape mismatch: x {x.shape} vs W {w.shape}")
        out, rec = _make(x.data @ w.data.T + b.data, x, w, b)
        if rec:
            def backward():
                g = out.grad
                if g is None:
                    return
                if w.requires_grad:
                    w.accumulate(g.T @ x.data)
                if x.requires_grad:
                    x.accumulate(g @ w.data)
                if b.requires_grad:
                    b.accumulate(g.sum(axis=0))
            _active_tape().record(backward)
        return out
    raise ValueError(f"affine expects a vector or matrix, got shape {x.shape}")


def weighted_sum(weights: Tensor, vectors: Tensor) -> Tensor:
    """Sum of matrix rows scaled by per-row weights."""
    if vectors.data.ndim != 2 or weights.data.shape != (vectors.data.shape[0],):
        raise ValueError(f"weighted_sum shape mismatch: {weights.shape} vs {vectors.shape}")
    out, rec = _make(weights.data @ vectors.data, weights, vectors)
    if rec:
        def backward():
            g = out.grad
            if g is None:
                return
            if weights.requires_grad:
                weights.accumulate(vectors.data @ g)
            if vectors.requires_grad:
                vectors.accumulate(np.outer(weights.data, g))
        _active_tape().record(backward)
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 1 or a.data.shape != b.data.shape:
        raise ValueError(f"dot shape mismatch: {a.shape} vs {b.shape}")
    out, rec = _make(a.data @ b.data, a, b)
    if rec:
        def backward():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                a.accumulate(g * b.data)
            if b.requires_grad:
                b.accumulate(g * a.data)
        _active_tape().record(backward)
    return out


# ---------------------------------------------------------------------------
# nonlinearities


def relu(x: Tensor) -> Tensor:
    # gradient at exactly 0 is defined as 0
    out, rec = _make(np.maximum(x.data, 0.0), x)
    if rec:
        mask = x.data > 0.0
        def backward():
            if out.grad is not None:
                x.accumulate(out.grad * mask)
        _active_tape().record(backward)
    return out


def sigmoid(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-x.data))
    out, rec = _make(s, x)
    if rec:
        def backward():
            if out.grad is not None:
                x.accumulate(out.grad * s * (1.0 - s))
        _active_tape().record(backward)
    return out


def softmax(x: Tensor) -> Tensor:
    """Normalize a score vector to positive weights summing to 1.

    Computed with max-subtraction so arbitrarily large scores do not
    overflow. Backward applies g -> s * (g - <g, s>).
    """
    if x.data.ndim != 1 or x.data.shape[0] == 0:
        raise ValueError(f"softmax expects a non-empty vector, got shape {x.shape}")
    shifted = x.data - x.data.max()
    e = np.exp(shifted)
    s = e / e.sum()
    out, rec = _make(s, x)
    if rec:
        def backward():
            g = out.grad
            if g is None:
                return
            x.accumulate(s * (g - g @ s))
        _active_tape().record(backward)
    return out


def broadcast_max(x: Tensor) -> Tensor:
    """Replace every entry of a vector with the vector's maximum.

    Ties resolve to the first maximal entry; only that entry receives
    gradient.
    """
    if x.data.ndim != 1 or x.data.shape[0] == 0:
        raise ValueError(f"broadcast_max expects a non-empty vector, got shape {x.shape}")
    k = int(np.argmax(x.data))
    out, rec = _make(np.full_like(x.data, x.data[k]), x)
    if rec:
        def backward():
            if out.grad is not None:
                g = x._ensure_grad()
                g[k] += out.grad.sum()
        _active_tape().record(backward)
    return out


def absval(x: Tensor) -> Tensor:
    out, rec = _make(np.abs(x.data), x)
    if rec:
        sign = np.sign(x.data)
        def backward():
            if out.grad is not None:
                x.accumulate(out.grad * sign)
        _active_tape().record(backward)
    return out


# ---------------------------------------------------------------------------
# elementwise arithmetic and reductions


def _same_shape(a: Tensor, b: Tensor, opname: str):
    if a.data.shape != b.data.shape:
        raise ValueError(f"{opname} shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out, rec = _make(a.data + b.data, a, b)
    if rec:
        def backward():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(g)
        _active_tape().record(backward)
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out, rec = _make(a.data - b.data, a, b)
    if rec:
        def backward():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                a.accumulate(g)
            if b.requires_grad:
                b.accumulate(-g)
        _active_tape().record(backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    out, rec = _make(a.data * b.data, a, b)
    if rec:
        def backward():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                a.accumulate(g * b.data)
            if b.requires_grad:
                b.accumulate(g * a.data)
        _active_tape().record(backward)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    out, rec = _make(x.data * c, x)
    if rec:
        def backward():
            if out.grad is not None:
                x.accumulate(out.grad * c)
        _active_tape().record(backward)
    return out


def add_const(x: Tensor, c) -> Tensor:
    out, rec = _make(x.data + np.asarray(c, dtype=np.float64), x)
    if rec:
        def backward():
            if out.grad is not None:
                x.accumulate(out.grad)
        _active_tape().record(backward)
    return out


def sub_const(x: Tensor, c) -> Tensor:
    return add_const(x, -np.asarray(c, dtype=np.float64))


def tsum(x: Tensor) -> Tensor:
    out, rec = _make(x.data.sum(), x)
    if rec:
        def backward():
            if out.grad is not None:
                x.accumulate(np.full(x.data.shape, float(out.grad)))
        _active_tape().record(backward)
    return out


def tmean(x: Tensor) -> Tensor:
    n = x.data.size
    out, rec = _make(x.data.mean(), x)
    if rec:
        def backward():
            if out.grad is not None:
                x.accumulate(np.full(x.data.shape, float(out.grad) / n))
        _active_tape().record(backward)
    return out


# ---------------------------------------------------------------------------
# verification harness


def grad_check(fn, params, eps: float = 1e-5, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of ``fn`` against central differences.

    ``fn`` takes no arguments and rebuilds a scalar Tensor from the tensors in
    ``params`` on every call; it must be deterministic. Each coordinate is
    probed with (f(t+eps) - f(t-eps)) / 2 eps. Returns the worst relative
    error, where the denominator is floored at 1 so near-zero gradients are
    compared absolutely.
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        out = fn()
        if out.size != 1:
            raise ValueError("grad_check target must be scalar")
        if not np.isfinite(out.data).all():
            raise FloatingPointError("non-finite value in forward pass")
        tape.backward(out)
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn().item()
            flat[i] = orig - eps
            f_minus = fn().item()
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError("non-finite value while probing")
            fd = (f_plus - f_minus) / (2.0 * eps)
            err = abs(gflat[i] - fd) / max(1.0, abs(gflat[i]), abs(fd))
            worst = max(worst, err)
    return worst
