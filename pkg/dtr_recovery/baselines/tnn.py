"""Tensor nuclear norm (TNN) completion by ADMM.

Solves ``min TNN(X)  s.t.  X + E = O, E supported off the mask`` with the
augmented Lagrangian, alternating

- ``X <- prox_TNN(O - E + Y / rho, 1 / rho)`` (SVT of every Fourier slice),
- ``E <- O - X + Y / rho`` restricted to unobserved entries,
- ``Y <- Y + rho (O - X - E)`` and ``rho <- min(mu * rho, max_rho)``.

``TNN(X)`` is the sum of the nuclear norms of the Fourier-domain frontal
slices divided by n3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import structlog
from pydantic import BaseModel, Field

from dtr_recovery.algebra.tproduct import dft_mode3, idft_mode3, slice_svd
from dtr_recovery.data_io import check_mask
from dtr_recovery.errors import ContractError, check_same_dims
from dtr_recovery.instrumentation import TNN_ITERATIONS

logger = structlog.get_logger(__name__)


class AdmmParams(BaseModel):
    """ADMM schedule.

    Attributes:
        rho: Initial penalty.
        mu: Penalty growth factor per iteration.
        max_rho: Penalty ceiling.
        max_iterations: Iteration budget.
        tol: Stop once the largest change of X, E and the residual drops below this.
    """

    rho: float = Field(1e-2, gt=0)
    mu: float = Field(1.05, ge=1)
    max_rho: float = Field(1e10, gt=0)
    max_iterations: int = Field(500, ge=1)
    tol: float = Field(1e-6, gt=0)


@dataclass
class TnnResult:
    """Completed tensor plus the ADMM trace.

    ``best_iteration`` is the iterate ``tensor`` was taken from: the last one on
    convergence, otherwise the one with the smallest change.
    """

    tensor: np.ndarray
    iterations: int
    converged: bool
    objective: list[float] = field(default_factory=list)
    best_iteration: int = 0


def svt_slices(c: np.ndarray, tau: float) -> np.ndarray:
    """Soft-threshold the singular values of every frontal slice by ``tau``.

    Raises:
        ContractError: if ``tau`` is negative.
        NumericalError: if a slice SVD fails.
    """
    if tau < 0:
        raise ContractError(f"SVT threshold must be nonnegative, got {tau}.")
    dec = slice_svd(c)
    return dec.reconstruct(np.maximum(dec.s - tau, 0.0))


def _svt_hermitian(c: np.ndarray, tau: float) -> np.ndarray:
    # Slices k and n3 - k of a real tensor's DFT are conjugate.
    n3 = c.shape[2]
    half = n3 // 2 + 1
    out = np.empty_like(c)
    out[:, :, :half] = svt_slices(c[:, :, :half], tau)
    for k in range(half, n3):
        out[:, :, k] = np.conj(out[:, :, n3 - k])
    return out


def prox_tnn(x: np.ndarray, tau: float) -> tuple[np.ndarray, float]:
    """Proximal operator of ``tau * TNN`` at ``x``, and the TNN of the result."""
    bar = _svt_hermitian(dft_mode3(x), tau)
    out = np.real(idft_mode3(bar))
    return out, _nuclear_sum(bar) / x.shape[2]


def _nuclear_sum(c: np.ndarray) -> float:
    return float(np.sum(slice_svd(c).s))


def tnn_norm(t: np.ndarray) -> float:
    """Tensor nuclear norm: Fourier-slice nuclear norms summed and divided by n3."""
    return _nuclear_sum(dft_mode3(t)) / t.shape[2]


def tnn_admm_complete(
    o: np.ndarray,
    m: np.ndarray,
    params: AdmmParams | None = None,
) -> TnnResult:
    """Complete ``o`` from its entries where ``m == 1`` by TNN minimization.

    Observed entries of the result equal those of ``o`` exactly.  When the
    budget runs out before ``tol`` is met the iterate with the smallest change
    (the stopping quantity) is returned with ``converged=False`` and a
    ``tnn_not_converged`` warning is logged.

    Raises:
        ShapeError: if ``o`` and ``m`` differ in dims.
        ConfigError: if ``m`` is not binary.
        NumericalError: if a slice SVD fails.
    """
    params = params or AdmmParams()
    check_same_dims(("o", o.shape), ("m", m.shape))
    check_mask(m)
    observed = m == 1.0
    data = np.where(observed, o, 0.0)
    x = data.copy()
    e = np.zeros_like(data)
    y = np.zeros_like(data)
    rho = params.rho
    objective: list[float] = []
    converged = False
    iteration = 0
    best, best_change, best_iteration = x, np.inf, 0

    for iteration in range(1, params.max_iterations + 1):
        x_prev, e_prev = x, e
        x, tnn = prox_tnn(data - e + y / rho, 1.0 / rho)
        objective.append(tnn)
        e = data - x + y / rho
        e[observed] = 0.0
        dy = data - x - e
        change = max(
            float(np.max(np.abs(x - x_prev))),
            float(np.max(np.abs(e - e_prev))),
            float(np.max(np.abs(dy))),
        )
        TNN_ITERATIONS.inc()
        if change < best_change:
            best, best_change, best_iteration = x, change, iteration
        if iteration % 50 == 0:
            logger.debug("tnn_iteration", iteration=iteration, change=change, rho=rho, tnn=tnn)
        if change < params.tol:
            converged = True
            break
        y = y + rho * dy
        rho = min(params.mu * rho, params.max_rho)

    if not converged:
        logger.warning(
            "tnn_not_converged",
            iterations=iteration,
            tol=params.tol,
            best_iteration=best_iteration,
            best_change=best_change,
        )
    x = best.copy()
    x[observed] = o[observed]
    return TnnResult(
        tensor=x,
        iterations=iteration,
        converged=converged,
        objective=objective,
        best_iteration=best_iteration,
    )
