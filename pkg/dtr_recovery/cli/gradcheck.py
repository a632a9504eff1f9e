"""Central-difference checks for every autodiff primitive.

Each case builds a small random graph around one primitive and reduces it
to a scalar through ``masked_sq_error`` against a random target, so the
upstream gradient reaching the primitive is dense.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from dtr_recovery.autodiff import GradCheckReport, Node, Tape, grad_check

Forward = Callable[[Tape, Mapping[str, Node]], Node]


def _case(
    forward: Forward,
    leaves: dict[str, np.ndarray],
    rng: np.random.Generator,
) -> tuple[Callable[[Tape, Mapping[str, Node]], Node], dict[str, np.ndarray]]:
    shape_tape = Tape()
    out_shape = forward(shape_tape, {k: shape_tape.constant(v) for k, v in leaves.items()}).shape
    target = rng.standard_normal(out_shape)
    weights = rng.uniform(0.5, 1.5, size=out_shape)

    def builder(tape: Tape, nodes: Mapping[str, Node]) -> Node:
        return tape.masked_sq_error(forward(tape, nodes), target, weights)

    return builder, leaves


def _away_from_zero(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    # keeps leaky_relu inputs off its kink
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < 0.05, 0.1, x)


def primitive_cases(seed: int = 0) -> dict[str, tuple[Callable[..., Node], dict[str, np.ndarray]]]:
    """Gradient-check cases by primitive name, on shapes up to 8x8x4."""
    rng = np.random.default_rng(seed)
    n = rng.standard_normal
    cases: dict[str, tuple[Forward, dict[str, np.ndarray]]] = {
        "add": (lambda t, p: t.add(p["x"], p["y"]), {"x": n((3, 4, 2)), "y": n((3, 4, 2))}),
        "sub": (lambda t, p: t.sub(p["x"], p["y"]), {"x": n((3, 4, 2)), "y": n((3, 4, 2))}),
        "scalar_mul": (lambda t, p: t.scalar_mul(p["x"], -1.7), {"x": n((4, 3, 2))}),
        "hadamard": (
            lambda t, p: t.hadamard(p["x"], p["y"]),
            {"x": n((4, 4, 3)), "y": n((4, 4, 3))},
        ),
        "leaky_relu": (
            lambda t, p: t.leaky_relu(p["x"], 0.1),
            {"x": _away_from_zero(rng, (5, 4, 3))},
        ),
        "sigmoid": (lambda t, p: t.sigmoid(p["x"]), {"x": n((5, 4, 3))}),
        "conv2d": (
            lambda t, p: t.conv2d(p["x"], p["k"], p["b"], stride=1, padding=1),
            {"x": n((6, 5, 2)), "k": n((3, 3, 2, 3)), "b": n((3,))},
        ),
        "conv2d_strided": (
            lambda t, p: t.conv2d(p["x"], p["k"], p["b"], stride=2, padding=1),
            {"x": n((8, 8, 2)), "k": n((3, 3, 2, 4)), "b": n((4,))},
        ),
        "upsample_nearest": (lambda t, p: t.upsample_nearest(p["x"], 2), {"x": n((3, 4, 2))}),
        "channel_concat": (
            lambda t, p: t.channel_concat([p["x"], p["y"]]),
            {"x": n((4, 3, 2)), "y": n((4, 3, 3))},
        ),
        "crop": (lambda t, p: t.crop(p["x"], 1, 2, 4, 3), {"x": n((6, 7, 2))}),
        "zero_pad": (lambda t, p: t.zero_pad(p["x"], 1, 0, 2, 1), {"x": n((4, 3, 2))}),
        "mode3_linear": (
            lambda t, p: t.mode3_linear(p["x"], p["w"], p["b"]),
            {"x": n((4, 5, 3)), "w": n((4, 3)), "b": n((4,))},
        ),
        "facewise_matmul": (
            lambda t, p: t.facewise_matmul(p["x"], p["y"]),
            {"x": n((4, 3, 4)), "y": n((3, 5, 4))},
        ),
        "packed_facewise_matmul": (
            lambda t, p: t.packed_facewise_matmul(p["x"], p["y"]),
            {"x": n((4, 3, 4)), "y": n((3, 2, 4))},
        ),
        "packed_facewise_matmul_odd": (
            lambda t, p: t.packed_facewise_matmul(p["x"], p["y"]),
            {"x": n((3, 3, 5)), "y": n((3, 4, 5))},
        ),
        "reduce_sum_squares": (lambda t, p: t.reduce_sum_squares(p["x"]), {"x": n((3, 3, 2))}),
    }
    return {name: _case(fwd, leaves, rng) for name, (fwd, leaves) in cases.items()}


def run_suite(seed: int = 0, h: float = 1e-5, tol: float = 1e-4) -> dict[str, GradCheckReport]:
    """Run :func:`grad_check` on every case of :func:`primitive_cases`."""
    return {
        name: grad_check(builder, leaves, h=h, tol=tol)
        for name, (builder, leaves) in primitive_cases(seed).items()
    }
