"""Dense float64 tensors with a reverse-mode gradient tape.

Every operation in this module returns a new :class:`Tensor`. When a
:class:`GradTape` is active on the current thread and at least one input
requires a gradient, the operation is recorded so that
:meth:`GradTape.backward` can replay it in reverse.

Arrays may carry leading batch axes. ``matmul`` follows numpy's stacking
rules and ``add`` accepts operands whose shapes broadcast, which is all the
encoder needs for per-row biases and per-head weight stacks.
"""

from __future__ import annotations

import math
import threading
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GradTape",
    "NumericError",
    "ShapeError",
    "Tensor",
    "add",
    "concat_heads",
    "grad_check",
    "last_row",
    "layer_norm",
    "matmul",
    "mean_squared_error",
    "relu",
    "reshape",
    "scale",
    "softmax_rows",
    "split_heads_transpose",
    "transpose",
]

_state = threading.local()


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Raised when a computation produces a non-finite value."""


class Tensor:
    """A float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g


class GradTape:
    """Records taped operations on the current thread.

    Use as a context manager::

        with GradTape() as tape:
            loss = f(params)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "GradTape":
        stack = getattr(_state, "stack", None)
        if stack is None:
            stack = _state.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _state.stack.pop()

    def backward(self, output: Tensor) -> None:
        """Propagate d(output)/d(leaf) into ``.grad`` of every leaf."""
        if output.data.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")
        output.grad = np.ones_like(output.data)
        # creation order is a topological order; reversing it visits each node
        # after all of its consumers
        for node in reversed(self.nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def _active_tape() -> GradTape | None:
    stack = getattr(_state, "stack", None)
    return stack[-1] if stack else None


def _record(value: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(value)
    tape = _active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, stacking over leading axes.

    The gradient rules are dA = G·Bᵀ and dB = Aᵀ·G, reduced over any axes
    that were broadcast.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    try:
        value = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}") from exc

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _record(value, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        value = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}") from exc

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return _record(value, (a, b), backward)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        a._accumulate(g * c)

    return _record(a.data * c, (a,), backward)


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _record(np.where(mask, a.data, 0.0), (a,), backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = _as_tensor(a)

    def backward(g):
        a._accumulate(np.swapaxes(g, -1, -2))

    return _record(np.swapaxes(a.data, -1, -2), (a,), backward)


def softmax_rows(a) -> Tensor:
    """Softmax along the last axis with a per-row max shift."""
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        a._accumulate(s * (g - (g * s).sum(axis=-1, keepdims=True)))

    return _record(s, (a,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise each row of ``x`` to zero mean and unit population variance.

    ``gain`` and ``bias`` have the length of the last axis.
    """
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    d = x.shape[-1]
    if gain.shape[-1] != d or bias.shape[-1] != d:
        raise ShapeError(f"layer_norm width mismatch: x {x.shape}, gain {gain.shape}, bias {bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    value = xhat * gain.data + bias.data

    def backward(g):
        gain._accumulate(_unbroadcast(g * xhat, gain.shape))
        bias._accumulate(_unbroadcast(g, bias.shape))
        if x.requires_grad:
            gx = g * gain.data
            x._accumulate(
                inv * (gx - gx.mean(axis=-1, keepdims=True)
                       - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            )

    return _record(value, (x, gain, bias), backward)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    try:
        value = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {a.shape} to {tuple(shape)}") from exc

    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _record(value, (a,), backward)


def split_heads_transpose(a, n_heads: int) -> Tensor:
    """Inverse of :func:`concat_heads`: (..., L, H*dk) -> (..., H, L, dk)."""
    a = _as_tensor(a)
    *lead, length, width = a.shape
    if width % n_heads:
        raise ShapeError(f"width {width} not divisible by {n_heads} heads")
    dk = width // n_heads
    value = np.swapaxes(a.data.reshape(*lead, length, n_heads, dk), -2, -3)

    def backward(g):
        a._accumulate(np.swapaxes(g, -2, -3).reshape(a.shape))

    return _record(value, (a,), backward)


def concat_heads(a) -> Tensor:
    """Concatenate head outputs: (..., H, L, dk) -> (..., L, H*dk)."""
    a = _as_tensor(a)
    *lead, n_heads, length, dk = a.shape
    value = np.swapaxes(a.data, -2, -3).reshape(*lead, length, n_heads * dk)

    def backward(g):
        a._accumulate(np.swapaxes(g.reshape(*lead, length, n_heads, dk), -2, -3))

    return _record(value, (a,), backward)


def last_row(a) -> Tensor:
    """Select the final row along the second-to-last axis: (..., L, d) -> (..., d)."""
    a = _as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[..., -1, :] = g
        a._accumulate(full)

    return _record(a.data[..., -1, :].copy(), (a,), backward)


def mean_squared_error(pred, target) -> Tensor:
    """(1/n) Σ (target − pred)² as a scalar tensor."""
    pred = _as_tensor(pred)
    t = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"mse shape mismatch: {pred.shape} vs {t.shape}")
    if pred.data.size == 0:
        raise ShapeError("mse of an empty batch")
    resid = pred.data - t
    n = resid.size

    def backward(g):
        pred._accumulate(g * 2.0 * resid / n)

    return _record(np.array(np.mean(resid * resid)), (pred,), backward)


# ---------------------------------------------------------------------------
# finite-difference checker
# ---------------------------------------------------------------------------


def grad_check(
    f: Callable[[list[Tensor]], Tensor],
    params: Sequence[np.ndarray],
    h: float = 1e-5,
    tol: float | None = None,
) -> float:
    """Compare taped gradients of ``f`` with central differences.

    ``f`` receives a list of tensors (one per entry in ``params``) and must
    return a scalar tensor. The error for coordinate i is
    ``|g_fd − g_ad| / max(1, |g_fd|, |g_ad|)``; the maximum over all
    coordinates is returned. With ``tol`` set, exceeding it raises
    ``AssertionError``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    arrays = [np.array(p, dtype=np.float64, copy=True) for p in params]

    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with GradTape() as tape:
        out = f(leaves)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("f returned a non-finite value at the base point")
    tape.backward(out)
    analytic = [np.zeros_like(a) if t.grad is None else t.grad for a, t in zip(arrays, leaves)]

    def evaluate() -> float:
        value = float(f([Tensor(a) for a in arrays]).data)
        if not math.isfinite(value):
            raise NumericError("f returned a non-finite value during differencing")
        return value

    worst = 0.0
    for arr, g_ad in zip(arrays, analytic):
        flat = arr.reshape(-1)
        g_flat = g_ad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = evaluate()
            flat[i] = orig - h
            fm = evaluate()
            flat[i] = orig
            g_fd = (fp - fm) / (2.0 * h)
            err = abs(g_fd - g_flat[i]) / max(1.0, abs(g_fd), abs(g_flat[i]))
            worst = max(worst, err)
    if tol is not None and worst > tol:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3e} > {tol:.1e}")
    return worst
