"""Adam optimizer for the generator (θ) and transform (ξ) parameters.

The update is the standard bias-corrected rule::

    m <- b1*m + (1-b1)*g
    v <- b2*v + (1-b2)*g*g
    p <- p - lr * (m / (1-b1**t)) / (sqrt(v / (1-b2**t)) + eps)

No weight decay and no gradient clipping are applied.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, MutableMapping

import numpy as np
import structlog

from dtr_recovery.errors import NumericalError, ShapeError

logger = structlog.get_logger(__name__)


@dataclass
class AdamState:
    """Moment estimates and hyperparameters of one optimizer instance.

    Attributes:
        lr: Learning rate.
        beta1: Decay rate of the first moment.
        beta2: Decay rate of the second moment.
        eps: Denominator offset.
        t: Number of steps taken.
        m: First moments by parameter name.
        v: Second moments by parameter name.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    state: AdamState,
    params: MutableMapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
) -> None:
    """Apply one Adam update in place to ``params`` and ``state``.

    Every gradient is validated before anything is modified, so a rejected
    step leaves parameters and moments untouched.

    Raises:
        ShapeError: if a gradient is missing or its dims differ from the parameter's.
        NumericalError: if any gradient entry is not finite.
    """
    for name, p in params.items():
        g = grads.get(name)
        if g is None or g.shape != p.shape:
            got = None if g is None else g.shape
            raise ShapeError(f"Gradient for {name!r} has dims {got}, parameter has {p.shape}.")
        if not np.all(np.isfinite(g)):
            logger.error("adam_nonfinite_gradient", parameter=name, step=state.t + 1)
            raise NumericalError(f"Non-finite gradient for parameter {name!r}.")

    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    step_size = state.lr / bc1

    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= step_size * m / (np.sqrt(v / bc2) + state.eps)
