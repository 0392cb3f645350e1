"""Reverse-mode differentiation tape and elementwise grid math.

The tape is explicit and per-forward-pass: operators compute their result in
plain numpy and, when any input is a tracked :class:`Var`, register a node
holding the input variable ids and a vector-Jacobian closure.  ``backward``
replays the nodes in reverse creation order exactly once, so gradients are
deterministic and bit-identical across repeated calls on the same tape.

Every function here accepts tracked variables, raw ``numpy`` arrays, the
field containers from :mod:`adrflow.fields`, or python scalars, and returns
a tracked variable iff at least one input was tracked.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ShapeMismatchError

Array = np.ndarray


class Var:
    """Handle for a value tracked on a tape."""

    __slots__ = ("tape", "id", "value")

    def __init__(self, tape: "Tape", vid: int, value: Array):
        self.tape = tape
        self.id = vid
        self.value = value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.id}, shape={self.value.shape})"


class _Node:
    __slots__ = ("op", "input_ids", "out_id", "vjp")

    def __init__(self, op, input_ids, out_id, vjp):
        self.op = op
        self.input_ids = input_ids
        self.out_id = out_id
        self.vjp = vjp


class Tape:
    """Ordered record of operator applications for one forward pass.

    A tape is confined to a single thread; independent samples may run on
    independent tapes concurrently and have their gradients summed.
    """

    def __init__(self):
        self._nodes: list[_Node] = []
        self._shapes: dict[int, tuple[int, ...]] = {}
        self._next_id = 0

    def __len__(self):
        return len(self._nodes)

    def _new_id(self, value: Array) -> int:
        vid = self._next_id
        self._next_id += 1
        self._shapes[vid] = value.shape
        return vid

    def leaf(self, value) -> Var:
        """Register an input or parameter as a tracked leaf variable."""
        value = np.asarray(value, dtype=np.float64) if not isinstance(value, np.ndarray) else value
        return Var(self, self._new_id(value), value)

    def record(self, op: str, inputs: Sequence, value: Array,
               vjp: Callable[[Array], tuple]) -> Var:
        """Register one operator application.

        ``vjp(grad_out)`` must return one gradient (or None) per entry of
        ``inputs``, aligned positionally; gradients for untracked inputs are
        ignored.
        """
        input_ids = tuple(x.id if isinstance(x, Var) else None for x in inputs)
        out = Var(self, self._new_id(value), value)
        self._nodes.append(_Node(op, input_ids, out.id, vjp))
        return out


def value_of(x) -> Array:
    """Unwrap Var / GridField / DisplacementField / scalar to a numpy array."""
    if isinstance(x, Var):
        return x.value
    data = getattr(x, "data", None)
    if isinstance(data, np.ndarray):
        return data
    return np.asarray(x, dtype=np.float64)


def active_tape(*xs) -> Tape | None:
    """The single tape shared by the tracked inputs, or None if none tracked."""
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif tape is not x.tape:
                raise ValueError("inputs tracked on different tapes")
    return tape


def backward(tape: Tape, loss: Var) -> dict[int, Array]:
    """Accumulate d(loss)/d(var) for every variable reachable from ``loss``.

    Returns a map from variable id to gradient array (leaf variables
    included).  Deterministic: nodes are visited in reverse creation order
    exactly once.
    """
    if not isinstance(loss, Var) or loss.tape is not tape:
        raise ValueError("loss variable is not on this tape")
    if loss.value.size != 1:
        raise ValueError(f"loss must be scalar-valued, got shape {loss.value.shape}")

    grads: dict[int, Array] = {loss.id: np.ones_like(loss.value)}
    for node in reversed(tape._nodes):
        g_out = grads.get(node.out_id)
        if g_out is None:
            continue
        g_inputs = node.vjp(g_out)
        for vid, g in zip(node.input_ids, g_inputs):
            if vid is None or g is None:
                continue
            expect = tape._shapes[vid]
            if g.shape != expect:
                raise ShapeMismatchError(f"gradient of {node.op}", g.shape, expect)
            acc = grads.get(vid)
            grads[vid] = g if acc is None else acc + g
    return grads


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum-reduce g over the axes that were broadcast relative to shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(op: str, a: Array, b: Array):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# elementwise primitives


def add(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("add", av, bv)
    out = av + bv
    tape = active_tape(a, b)
    if tape is None:
        return out
    return tape.record("add", (a, b), out,
                       lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("sub", av, bv)
    out = av - bv
    tape = active_tape(a, b)
    if tape is None:
        return out
    return tape.record("sub", (a, b), out,
                       lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    _check_broadcast("mul", av, bv)
    out = av * bv
    tape = active_tape(a, b)
    if tape is None:
        return out
    return tape.record("mul", (a, b), out,
                       lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a, k: float):
    """Multiply by a fixed (non-trainable) python scalar."""
    av = value_of(a)
    k = float(k)
    out = av * k
    tape = active_tape(a)
    if tape is None:
        return out
    return tape.record("scale", (a,), out, lambda g: (g * k,))


def _sigmoid(x: Array) -> Array:
    # numerically stable in both tails
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _silu_grad_value(x: Array, s: Array) -> Array:
    # d/dx [x*sigmoid(x)] = s + x*s*(1-s)
    return s + x * s * (1.0 - s)


def silu(x):
    """x * sigmoid(x)."""
    xv = value_of(x)
    s = _sigmoid(xv)
    out = xv * s
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("silu", (x,), out, lambda g: (g * _silu_grad_value(xv, s),))


def silu_grad(x):
    """Derivative of silu, exposed as an elementwise op in its own right."""
    xv = value_of(x)
    s = _sigmoid(xv)
    out = _silu_grad_value(xv, s)
    tape = active_tape(x)
    if tape is None:
        return out
    # second derivative: s*(1-s)*(2 + x*(1-2s))
    return tape.record("silu_grad", (x,), out,
                       lambda g: (g * s * (1.0 - s) * (2.0 + xv * (1.0 - 2.0 * s)),))


def softplus(x):
    """log(1 + exp(x)), computed stably; derivative is sigmoid."""
    xv = value_of(x)
    out = np.logaddexp(0.0, xv)
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("softplus", (x,), out, lambda g: (g * _sigmoid(xv),))


def total(x):
    """Sum of all entries, as a 0-d array (the reduction behind every loss)."""
    xv = value_of(x)
    out = np.asarray(xv.sum())
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("total", (x,), out, lambda g: (np.broadcast_to(g, xv.shape).copy(),))


def reshape(x, shape):
    xv = value_of(x)
    out = xv.reshape(shape)
    tape = active_tape(x)
    if tape is None:
        return out
    return tape.record("reshape", (x,), out, lambda g: (g.reshape(xv.shape),))


def channel_scale(x, k):
    """Scale a (B, C, H, W) field per channel by a length-C vector."""
    xv, kv = value_of(x), value_of(k)
    if kv.ndim != 1 or xv.ndim != 4 or kv.shape[0] != xv.shape[1]:
        raise ShapeMismatchError("channel_scale", xv.shape, kv.shape)
    out = xv * kv[None, :, None, None]
    tape = active_tape(x, k)
    if tape is None:
        return out
    return tape.record("channel_scale", (x, k), out,
                       lambda g: (g * kv[None, :, None, None], (g * xv).sum(axis=(0, 2, 3))))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "scale": scale,
                "silu": silu, "silu_grad": silu_grad}


def elementwise(op: str, a, b=None):
    """Dispatch table over the pointwise grid ops.

    Binary ops take ``b`` as a field or scalar; ``silu``/``silu_grad``
    ignore ``b``.
    """
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    if op in ("silu", "silu_grad"):
        return fn(a)
    if b is None:
        raise ValueError(f"elementwise op {op!r} needs two operands")
    return fn(a, b)


def finite_difference_grad(f, x: Array, step: float = 1e-6) -> Array:
    """Central finite-difference gradient of a scalar function of an array.

    The independent oracle for every tape gradient rule: evaluates
    ``(f(x+s) - f(x-s)) / 2s`` entry by entry and never touches the tape.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = float(f(x))
        flat[i] = orig - step
        down = float(f(x))
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * step)
    return grad
