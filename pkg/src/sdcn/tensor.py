"""Dense kernels and a small reverse-mode tape.

Matrices are plain 2-D ``float64`` numpy arrays.  The tape only knows the
primitives the clustering model is built from; each one records a closure
with its hand-derived vector-Jacobian product.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, NumericError, ParameterError

LOG_FLOOR = 1e-12


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def dense_matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def sparse_dense_matmul(s, d) -> np.ndarray:
    """Product of an N x N CSR matrix with a dense N x m matrix."""
    d = as_matrix(d)
    if not sp.issparse(s):
        raise TypeError("left operand must be a scipy sparse matrix")
    if s.shape[0] != s.shape[1] or s.shape[1] != d.shape[0]:
        raise DimensionError(f"cannot multiply sparse {s.shape} by {d.shape}")
    return np.asarray(s @ d)


def relu(m) -> np.ndarray:
    return np.maximum(as_matrix(m), 0.0)


def row_softmax(m) -> np.ndarray:
    m = as_matrix(m)
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def squared_distances(h: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances between rows of h and rows of mu."""
    diff = h[:, None, :] - mu[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def student_t_assign(h, mu, v: float = 1.0) -> np.ndarray:
    h = as_matrix(h)
    mu = as_matrix(mu)
    if h.shape[1] != mu.shape[1]:
        raise DimensionError(f"embedding width {h.shape[1]} != center width {mu.shape[1]}")
    if v <= 0:
        raise ParameterError("degrees of freedom must be positive")
    # normalise in log space so far-away rows do not underflow to 0/0
    logk = -(v + 1.0) / 2.0 * np.log1p(squared_distances(h, mu) / v)
    return row_softmax(logk)


class Node:
    """A value on the tape plus its accumulated gradient."""

    __slots__ = ("value", "grad", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, name=None):
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return np.shape(self.value)

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            # ops hand over freshly allocated arrays, except add_bias which
            # forwards its own upstream gradient; that one is never read again
            self.grad = np.asarray(g, dtype=np.float64)
        else:
            self.grad += g

    def __repr__(self):
        return f"Node({self.name or ''}, shape={self.shape})"


class Tape:
    """Records primitive ops during one forward pass.

    ``backward`` replays the recorded closures in exact reverse order.
    A tape is meant to be used for one step and then discarded.
    """

    def __init__(self):
        self._ops = []

    def __len__(self):
        return len(self._ops)

    def param(self, value, name=None) -> Node:
        return Node(value, requires_grad=True, name=name)

    def const(self, value, name=None) -> Node:
        return Node(value, requires_grad=False, name=name)

    def _out(self, value, *parents, backward=None, name=None) -> Node:
        out = Node(value, requires_grad=any(p.requires_grad for p in parents), name=name)
        if out.requires_grad and backward is not None:
            self._ops.append((out, backward))
        return out

    def matmul(self, a: Node, b: Node) -> Node:
        val = dense_matmul(a.value, b.value)

        def backward(g):
            if a.requires_grad:
                a._accumulate(g @ b.value.T)
            if b.requires_grad:
                b._accumulate(a.value.T @ g)

        return self._out(val, a, b, backward=backward)

    def spmm(self, s, a: Node) -> Node:
        """Left-multiply by a constant sparse matrix."""
        val = sparse_dense_matmul(s, a.value)

        def backward(g):
            a._accumulate(np.asarray(s.T @ g))

        return self._out(val, a, backward=backward)

    def add_bias(self, a: Node, b: Node) -> Node:
        if b.value.shape != (a.value.shape[1],):
            raise DimensionError(f"bias {b.value.shape} does not fit {a.value.shape}")
        val = a.value + b.value

        def backward(g):
            a._accumulate(g)
            b._accumulate(g.sum(axis=0))

        return self._out(val, a, b, backward=backward)

    def relu(self, a: Node) -> Node:
        mask = a.value > 0

        def backward(g):
            a._accumulate(g * mask)

        # np.maximum keeps NaN so a diverged input is not silently zeroed
        return self._out(np.maximum(a.value, 0.0), a, backward=backward)

    def mix(self, a: Node, b: Node, eps: float) -> Node:
        """(1 - eps) * a + eps * b."""
        if a.value.shape != b.value.shape:
            raise DimensionError(f"cannot mix {a.value.shape} with {b.value.shape}")
        val = (1.0 - eps) * a.value + eps * b.value

        def backward(g):
            a._accumulate((1.0 - eps) * g)
            b._accumulate(eps * g)

        return self._out(val, a, b, backward=backward)

    def softmax(self, a: Node) -> Node:
        y = row_softmax(a.value)

        def backward(g):
            a._accumulate(y * (g - np.sum(g * y, axis=1, keepdims=True)))

        return self._out(y, a, backward=backward)

    def half_mse(self, x: np.ndarray, xhat: Node) -> Node:
        """(1/2N) ||x - xhat||_F^2 with x constant."""
        if x.shape != xhat.value.shape:
            raise DimensionError(f"target {x.shape} vs reconstruction {xhat.value.shape}")
        n = x.shape[0]
        r = xhat.value - x
        val = np.array(0.5 * np.sum(r * r) / n)

        def backward(g):
            xhat._accumulate(float(g) * r / n)

        return self._out(val, xhat, backward=backward)

    def student_t(self, h: Node, mu: Node, v: float = 1.0) -> Node:
        hv, mv = h.value, mu.value
        d2 = squared_distances(hv, mv)
        q = row_softmax(-(v + 1.0) / 2.0 * np.log1p(d2 / v))

        def backward(g):
            # q is a softmax of log-kernels, so chain through the logits first
            dlog = q * (g - np.sum(g * q, axis=1, keepdims=True))
            dd2 = dlog * (-(v + 1.0) / 2.0) / (v + d2)
            if h.requires_grad:
                h._accumulate(2.0 * (hv * dd2.sum(axis=1, keepdims=True) - dd2 @ mv))
            if mu.requires_grad:
                mu._accumulate(2.0 * (mv * dd2.sum(axis=0)[:, None] - dd2.T @ hv))

        return self._out(q, h, mu, backward=backward)

    def kl(self, p: np.ndarray, q: Node) -> Node:
        """sum_ij p log(p / q) with p held constant and q floored at 1e-12."""
        if p.shape != q.value.shape:
            raise DimensionError(f"p {p.shape} vs q {q.value.shape}")
        qc = np.maximum(q.value, LOG_FLOOR)
        pos = p > 0
        val = np.array(np.sum(p[pos] * (np.log(p[pos]) - np.log(qc[pos]))))
        live = q.value > LOG_FLOOR

        def backward(g):
            q._accumulate(float(g) * np.where(live, -p / qc, 0.0))

        return self._out(val, q, backward=backward)

    def weighted_sum(self, terms, weights) -> Node:
        """Linear combination of scalar nodes."""
        val = np.array(sum(w * float(t.value) for t, w in zip(terms, weights)))

        def backward(g):
            for t, w in zip(terms, weights):
                t._accumulate(np.array(w * float(g)))

        return self._out(val, *terms, backward=backward)

    def backward(self, loss: Node) -> None:
        if np.size(loss.value) != 1:
            raise DimensionError("backward needs a scalar loss")
        loss.grad = np.array(1.0)
        for out, fn in reversed(self._ops):
            if out.grad is not None:
                fn(out.grad)


def grad_check(loss_fn, params, h: float = 1e-5) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn(params)`` must return ``(loss, grads)`` where ``grads`` lines up
    with ``params``.  Every entry of every parameter is perturbed in place and
    restored.  Returns the max over entries of
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-6 <= h <= 1e-4:
        raise ParameterError(f"step {h} outside [1e-6, 1e-4]")
    loss, grads = loss_fn(params)
    if not np.isfinite(loss):
        raise NumericError("loss is not finite")
    worst = 0.0
    for p, g in zip(params, grads):
        if np.shape(g) != np.shape(p):
            raise DimensionError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)}")
        flat = p.reshape(-1)
        gflat = np.asarray(g).reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            up = loss_fn(params)[0]
            flat[k] = orig - h
            down = loss_fn(params)[0]
            flat[k] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError("loss is not finite under perturbation")
            numeric = (up - down) / (2.0 * h)
            worst = max(worst, abs(gflat[k] - numeric) / max(1.0, abs(numeric)))
    return worst
