"""Reverse-mode automatic differentiation over tensor primitives.

A :class:`Tape` records every primitive applied to :class:`Node` values in
execution order.  Each recorded node keeps a closed-form vector-Jacobian
product; :meth:`Tape.backward` walks the tape once in reverse order and sums
the contributions of every path into each parent.

Conventions:

- Spatial tensors are ``(n1, n2, channels)``; mode 3 doubles as the channel axis.
- ``conv2d`` kernels are ``(k, k, c_in, c_out)`` and use zero padding.
- A loss is a ``(1, 1, 1)`` node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel
from scipy.special import expit

from dtr_recovery.algebra.spectral import pack, unpack
from dtr_recovery.algebra.tproduct import facewise_product
from dtr_recovery.errors import ContractError, ShapeError, check_same_dims

Vjp = Callable[[np.ndarray], Sequence[np.ndarray | None]]

DEFAULT_SLOPE = 0.01


@dataclass(eq=False)
class Node:
    """One value on the tape.

    Attributes:
        id: Position on the tape.
        op: Primitive tag (``"leaf"`` for inputs and parameters).
        parents: Ids of the nodes this one was computed from.
        value: Forward value.
        requires_grad: Whether a gradient flows to this node.
        grad: Gradient after :meth:`Tape.backward`, same shape as ``value``.
        name: Optional label (parameter name for leaves).
    """

    id: int
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    requires_grad: bool = False
    grad: np.ndarray | None = None
    name: str | None = None
    tape: Tape | None = field(default=None, repr=False)
    vjp: Vjp | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape


class Tape:
    """Append-only record of a forward computation."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    # ------------------------------------------------------------------
    # Recording
    # ------------------------------------------------------------------

    def leaf(self, value: np.ndarray, requires_grad: bool = True, name: str | None = None) -> Node:
        """Register an input or parameter.

        The value is referenced, not copied, so in-place optimizer updates
        between tapes are seen by the next forward pass.
        """
        node = Node(
            id=len(self.nodes),
            op="leaf",
            parents=(),
            value=np.asarray(value, dtype=np.float64),
            requires_grad=requires_grad,
            name=name,
            tape=self,
        )
        self.nodes.append(node)
        return node

    def constant(self, value: np.ndarray, name: str | None = None) -> Node:
        """Register a value that never receives a gradient."""
        return self.leaf(value, requires_grad=False, name=name)

    def _record(self, op: str, parents: Sequence[Node], value: np.ndarray, vjp: Vjp) -> Node:
        for parent in parents:
            if parent.tape is not self:
                raise ContractError(f"{op}: operand {parent.id} belongs to another tape.")
        requires_grad = any(p.requires_grad for p in parents)
        node = Node(
            id=len(self.nodes),
            op=op,
            parents=tuple(p.id for p in parents),
            value=value,
            requires_grad=requires_grad,
            tape=self,
            vjp=vjp if requires_grad else None,
        )
        self.nodes.append(node)
        return node

    # ------------------------------------------------------------------
    # Elementwise
    # ------------------------------------------------------------------

    def add(self, x: Node, y: Node) -> Node:
        check_same_dims(("x", x.shape), ("y", y.shape))
        return self._record("add", (x, y), x.value + y.value, lambda g: (g, g))

    def sub(self, x: Node, y: Node) -> Node:
        check_same_dims(("x", x.shape), ("y", y.shape))
        return self._record("sub", (x, y), x.value - y.value, lambda g: (g, -g))

    def scalar_mul(self, x: Node, c: float) -> Node:
        return self._record("scalar_mul", (x,), c * x.value, lambda g: (c * g,))

    def hadamard(self, x: Node, y: Node) -> Node:
        check_same_dims(("x", x.shape), ("y", y.shape))
        xv, yv = x.value, y.value
        return self._record("hadamard", (x, y), xv * yv, lambda g: (g * yv, g * xv))

    def leaky_relu(self, x: Node, slope: float = DEFAULT_SLOPE) -> Node:
        xv = x.value
        positive = xv > 0
        out = np.where(positive, xv, slope * xv)
        return self._record(
            "leaky_relu", (x,), out, lambda g: (np.where(positive, g, slope * g),)
        )

    def sigmoid(self, x: Node) -> Node:
        s = expit(x.value)
        return self._record("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))

    def identity(self, x: Node) -> Node:
        return x

    # ------------------------------------------------------------------
    # Spatial
    # ------------------------------------------------------------------

    def conv2d(
        self,
        x: Node,
        kernel: Node,
        bias: Node | None = None,
        stride: int = 1,
        padding: int = 0,
    ) -> Node:
        """2-D convolution (cross-correlation) with zero padding.

        Parameters:
            x: Input ``(h, w, c_in)``.
            kernel: ``(k, k, c_in, c_out)``.
            bias: Optional ``(c_out,)``.
            stride: Step between output positions.
            padding: Zero rows/columns added on every side.
        """
        if x.value.ndim != 3 or kernel.value.ndim != 4:
            raise ShapeError(f"conv2d expects (h, w, c) and (k, k, c_in, c_out), got "
                             f"{x.shape} and {kernel.shape}.")
        k, k2, c_in, c_out = kernel.shape
        h, w, c = x.shape
        if k != k2 or c != c_in:
            raise ShapeError(f"conv2d kernel {kernel.shape} incompatible with input {x.shape}.")
        if stride < 1 or padding < 0:
            raise ShapeError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}.")
        if bias is not None and bias.shape != (c_out,):
            raise ShapeError(f"conv2d bias must be ({c_out},), got {bias.shape}.")
        h_out = (h + 2 * padding - k) // stride + 1
        w_out = (w + 2 * padding - k) // stride + 1
        if h_out < 1 or w_out < 1:
            raise ShapeError(f"conv2d kernel {k} too large for input {x.shape}.")

        xp = np.pad(x.value, ((padding, padding), (padding, padding), (0, 0)))
        windows = sliding_window_view(xp, (k, k), axis=(0, 1))[::stride, ::stride][:h_out, :w_out]
        kv = kernel.value
        out = np.tensordot(windows, kv, axes=([2, 3, 4], [2, 0, 1]))
        if bias is not None:
            out = out + bias.value

        def vjp(g: np.ndarray) -> list[np.ndarray | None]:
            grads: list[np.ndarray | None] = [None, None]
            if x.requires_grad:
                dwin = np.tensordot(g, kv, axes=([2], [3]))
                dxp = np.zeros_like(xp)
                for i in range(k):
                    for j in range(k):
                        rows = slice(i, i + stride * h_out, stride)
                        cols = slice(j, j + stride * w_out, stride)
                        dxp[rows, cols, :] += dwin[:, :, i, j, :]
                grads[0] = dxp[padding : padding + h, padding : padding + w, :]
            if kernel.requires_grad:
                grads[1] = np.tensordot(windows, g, axes=([0, 1], [0, 1])).transpose(1, 2, 0, 3)
            if bias is not None:
                grads.append(g.sum(axis=(0, 1)))
            return grads

        parents = (x, kernel) if bias is None else (x, kernel, bias)
        return self._record("conv2d", parents, out, vjp)

    def upsample_nearest(self, x: Node, factor: int = 2) -> Node:
        """Nearest-neighbour spatial upsampling by an integer factor."""
        h, w, c = x.shape
        out = np.repeat(np.repeat(x.value, factor, axis=0), factor, axis=1)
        return self._record(
            "upsample_nearest",
            (x,),
            out,
            lambda g: (g.reshape(h, factor, w, factor, c).sum(axis=(1, 3)),),
        )

    def channel_concat(self, xs: Sequence[Node]) -> Node:
        """Concatenate along mode 3."""
        spatial = {n.shape[:2] for n in xs}
        if len(spatial) != 1:
            raise ShapeError(f"channel_concat needs equal spatial dims, got {sorted(spatial)}.")
        splits = np.cumsum([n.shape[2] for n in xs])[:-1]
        out = np.concatenate([n.value for n in xs], axis=2)
        return self._record(
            "channel_concat", tuple(xs), out, lambda g: np.split(g, splits, axis=2)
        )

    def crop(self, x: Node, top: int, left: int, height: int, width: int) -> Node:
        """Spatial window ``x[top:top+height, left:left+width, :]``."""
        h, w, _ = x.shape
        if top < 0 or left < 0 or top + height > h or left + width > w:
            raise ShapeError(f"crop window exceeds input {x.shape}.")
        out = x.value[top : top + height, left : left + width, :].copy()

        def vjp(g: np.ndarray) -> tuple[np.ndarray]:
            dx = np.zeros_like(x.value)
            dx[top : top + height, left : left + width, :] = g
            return (dx,)

        return self._record("crop", (x,), out, vjp)

    def zero_pad(self, x: Node, top: int, bottom: int, left: int, right: int) -> Node:
        """Spatial zero padding; the adjoint of :meth:`crop`."""
        if min(top, bottom, left, right) < 0:
            raise ShapeError("zero_pad amounts must be nonnegative.")
        h, w, _ = x.shape
        out = np.pad(x.value, ((top, bottom), (left, right), (0, 0)))
        return self._record(
            "zero_pad", (x,), out, lambda g: (g[top : top + h, left : left + w, :],)
        )

    # ------------------------------------------------------------------
    # Mode-3 and face-wise
    # ------------------------------------------------------------------

    def mode3_linear(self, t: Node, w: Node, bias: Node | None = None) -> Node:
        """``t x_3 w`` plus a per-output-channel bias; ``w`` is ``(c_out, c_in)``."""
        if t.value.ndim != 3 or w.value.ndim != 2 or w.shape[1] != t.shape[2]:
            raise ShapeError(f"mode3_linear: weight {w.shape} incompatible with input {t.shape}.")
        if bias is not None and bias.shape != (w.shape[0],):
            raise ShapeError(f"mode3_linear bias must be ({w.shape[0]},), got {bias.shape}.")
        tv, wv = t.value, w.value
        out = np.tensordot(tv, wv, axes=([2], [1]))
        if bias is not None:
            out = out + bias.value

        def vjp(g: np.ndarray) -> list[np.ndarray | None]:
            grads: list[np.ndarray | None] = [
                np.tensordot(g, wv, axes=([2], [0])) if t.requires_grad else None,
                np.tensordot(g, tv, axes=([0, 1], [0, 1])) if w.requires_grad else None,
            ]
            if bias is not None:
                grads.append(g.sum(axis=(0, 1)))
            return grads

        parents = (t, w) if bias is None else (t, w, bias)
        return self._record("mode3_linear", parents, out, vjp)

    def facewise_matmul(self, x: Node, y: Node) -> Node:
        """Face-wise product ``x Δ y`` on the tape."""
        xv, yv = x.value, y.value
        out = facewise_product(xv, yv)
        return self._record(
            "facewise_matmul",
            (x, y),
            out,
            lambda g: (
                facewise_product(g, yv.transpose(1, 0, 2)),
                facewise_product(xv.transpose(1, 0, 2), g),
            ),
        )

    def packed_facewise_matmul(self, x: Node, y: Node) -> Node:
        """Face-wise product of complex Fourier-side slices stored in packed form.

        Both operands and the result use the packed half-spectrum layout of
        :mod:`dtr_recovery.algebra.spectral`; frequency slice ``k`` of the
        result is the complex product of the operands' slices ``k``.
        """
        n3 = x.shape[2]
        if y.value.ndim != 3 or y.shape[2] != n3 or x.shape[1] != y.shape[0]:
            raise ShapeError(f"packed face-wise product undefined for {x.shape} and {y.shape}.")
        xh, yh = unpack(x.value), unpack(y.value)
        out = pack(facewise_product(xh, yh), n3)

        def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            gh = unpack(g)
            dx = facewise_product(gh, np.conj(yh).transpose(1, 0, 2))
            dy = facewise_product(np.conj(xh).transpose(1, 0, 2), gh)
            return pack(dx, n3), pack(dy, n3)

        return self._record("packed_facewise_matmul", (x, y), out, vjp)

    # ------------------------------------------------------------------
    # Reductions
    # ------------------------------------------------------------------

    def reduce_sum_squares(self, x: Node) -> Node:
        xv = x.value
        out = np.full((1, 1, 1), np.sum(xv * xv))
        return self._record(
            "reduce_sum_squares", (x,), out, lambda g: (2.0 * g.item() * xv,)
        )

    def masked_sq_error(self, x: Node, o: np.ndarray, m: np.ndarray) -> Node:
        """``||m * (x - o)||_F**2`` (sum convention); gradient ``2 m (x - o)``."""
        check_same_dims(("x", x.shape), ("o", o.shape), ("m", m.shape))
        residual = m * (x.value - o)
        out = np.full((1, 1, 1), np.sum(residual * residual))
        return self._record(
            "masked_sq_error", (x,), out, lambda g: (2.0 * g.item() * m * residual,)
        )

    # ------------------------------------------------------------------
    # Backward
    # ------------------------------------------------------------------

    def backward(self, loss: Node) -> dict[int, np.ndarray]:
        """Propagate gradients from a scalar ``loss`` to every node that needs one.

        Leaves that the loss does not depend on get a zero gradient.

        Returns:
            Mapping of node id to gradient for every ``requires_grad`` leaf.

        Raises:
            ContractError: if ``loss`` is not a ``(1, 1, 1)`` node of this tape.
        """
        if loss.tape is not self:
            raise ContractError("backward: loss belongs to another tape.")
        if loss.value.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}.")
        grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.id + 1]):
            g = grads.get(node.id)
            if g is None or node.vjp is None:
                continue
            for pid, pg in zip(node.parents, node.vjp(g)):
                if pg is None or not self.nodes[pid].requires_grad:
                    continue
                prev = grads.get(pid)
                grads[pid] = pg if prev is None else prev + pg
        leaf_grads: dict[int, np.ndarray] = {}
        for node in self.nodes:
            if not node.requires_grad:
                continue
            node.grad = grads.get(node.id, np.zeros_like(node.value))
            if node.op == "leaf":
                leaf_grads[node.id] = node.grad
        return leaf_grads


def masked_sq_error(x: Node, o: np.ndarray, m: np.ndarray) -> Node:
    """Masked squared reconstruction error recorded on ``x``'s tape."""
    if x.tape is None:
        raise ContractError("masked_sq_error: node is not attached to a tape.")
    return x.tape.masked_sq_error(x, o, m)


# ----------------------------------------------------------------------
# Gradient checking
# ----------------------------------------------------------------------

GraphBuilder = Callable[[Tape, Mapping[str, Node]], Node]


class GradCheckReport(BaseModel):
    """Outcome of :func:`grad_check`.

    Attributes:
        max_errors: Worst relative error per leaf name.
        tol: Tolerance the errors were compared against.
        passed: True when every error is within ``tol``.
    """

    max_errors: dict[str, float]
    tol: float
    passed: bool


def _evaluate(builder: GraphBuilder, values: Mapping[str, np.ndarray]) -> float:
    tape = Tape()
    nodes = {name: tape.constant(v, name=name) for name, v in values.items()}
    return float(builder(tape, nodes).value.item())


def grad_check(
    builder: GraphBuilder,
    leaves: Mapping[str, np.ndarray],
    h: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare analytic gradients with central differences, entry by entry.

    The error of an entry is ``|analytic - numeric| / max(1, |analytic|)``.

    Parameters:
        builder: Builds the scalar loss from leaf nodes; must be deterministic.
        leaves: Initial leaf values by name.
        h: Central-difference step.
        tol: Largest acceptable error.

    Raises:
        ContractError: if ``h`` is not positive.
    """
    if h <= 0:
        raise ContractError(f"grad_check step must be positive, got {h}.")
    values = {name: np.array(v, dtype=np.float64, copy=True) for name, v in leaves.items()}
    tape = Tape()
    nodes = {name: tape.leaf(v, name=name) for name, v in values.items()}
    tape.backward(builder(tape, nodes))

    max_errors: dict[str, float] = {}
    for name, arr in values.items():
        analytic = nodes[name].grad
        assert analytic is not None
        flat = arr.reshape(-1)
        flat_grad = analytic.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = _evaluate(builder, values)
            flat[i] = orig - h
            f_minus = _evaluate(builder, values)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(flat_grad[i])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
        max_errors[name] = worst
    passed = all(err <= tol for err in max_errors.values())
    return GradCheckReport(max_errors=max_errors, tol=tol, passed=passed)
