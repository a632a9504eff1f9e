"""Unsupervised recovery driver.

Fits ``X = f_ξ(g_θ(Z))`` to the observed entries by minimizing
``||M ⊙ (X - O)||_F**2`` with Adam over a fixed iteration budget.  Z is
sampled once and kept fixed.  Four variants share the driver:

- ``dtr`` -- U-Net generator and tube-wise FCN transform (the FCN may be
  switched off to get the identity transform);
- ``hlrtf_like`` -- two face-wise factors with an FCN transform;
- ``tubal_factorization`` -- two Fourier-side factors with the inverse DFT
  as transform, i.e. a low-tubal-rank factorization;
- ``deep_facewise`` -- three or more face-wise factors with activations
  and the identity transform (deep factorization of every slice).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
import structlog
from pydantic import BaseModel, Field, ValidationError, model_validator

from dtr_recovery.autodiff import Node, Tape, masked_sq_error
from dtr_recovery.data_io import check_mask, fold4, unfold4, write_loss_csv
from dtr_recovery.errors import ConfigError, NumericalError, ShapeError, check_same_dims
from dtr_recovery.instrumentation import LAST_LOSS, RECOVERY_RUNS, RECOVERY_STEPS
from dtr_recovery.metrics import MetricsReport, evaluate
from dtr_recovery.nets import (
    Activation,
    FaceWiseFactorConfig,
    FaceWiseGenerator,
    FcnConfig,
    FcnTransform,
    IdentityTransform,
    InverseDftTransform,
    PaddedGenerator,
    ParameterStore,
    TapeMap,
    UNetConfig,
    UNetGenerator,
    dtr_forward,
    init_noise,
)
from dtr_recovery.optim import AdamState, adam_step

logger = structlog.get_logger(__name__)

Variant = Literal["dtr", "hlrtf_like", "tubal_factorization", "deep_facewise"]
VARIANTS: tuple[Variant, ...] = ("dtr", "hlrtf_like", "tubal_factorization", "deep_facewise")


class RecoveryConfig(BaseModel):
    """Variant selection and hyperparameters for one recovery run.

    Attributes:
        variant: Representation to fit.
        iterations: Number of Adam steps.
        lr: Adam learning rate.
        seed: Seed for Z and parameter initialization.
        latent_channels: n̂3; defaults to n3.
        unet: U-Net settings (``dtr`` only).
        fcn: FCN transform settings (``dtr`` with transform, ``hlrtf_like``).
        use_transform: ``dtr`` only; False replaces f_ξ by the identity.
        rank: Factor rank r (``hlrtf_like``, ``tubal_factorization``).
        facewise_ranks: Interior ranks ``r_1 .. r_{L-1}`` (``deep_facewise``).
        activation: σ between face-wise products.
        log_every: Steps between recorded losses.
    """

    variant: Variant = "dtr"
    iterations: int = Field(2000, ge=1)
    lr: float = Field(1e-3, gt=0)
    seed: int = 0
    latent_channels: int | None = Field(None, ge=1)
    unet: UNetConfig | None = None
    fcn: FcnConfig | None = None
    use_transform: bool = True
    rank: int | None = Field(None, ge=1)
    facewise_ranks: list[int] | None = None
    activation: Activation = "leaky_relu"
    log_every: int = Field(100, ge=1)

    @model_validator(mode="after")
    def _check_blocks(self) -> RecoveryConfig:
        v = self.variant
        if (self.unet is not None) != (v == "dtr"):
            raise ValueError("the unet block is required for dtr and only for dtr")
        wants_fcn = v == "hlrtf_like" or (v == "dtr" and self.use_transform)
        if (self.fcn is not None) != wants_fcn:
            raise ValueError(f"the fcn block is {'required' if wants_fcn else 'not allowed'} "
                             f"for variant {v}")
        wants_rank = v in ("hlrtf_like", "tubal_factorization")
        if (self.rank is not None) != wants_rank:
            raise ValueError(f"rank is {'required' if wants_rank else 'not allowed'} for {v}")
        if (self.facewise_ranks is not None) != (v == "deep_facewise"):
            raise ValueError("facewise_ranks is required for deep_facewise and only for it")
        if self.facewise_ranks is not None:
            if len(self.facewise_ranks) < 2 or min(self.facewise_ranks) < 1:
                raise ValueError("deep_facewise needs at least two positive interior ranks")
        if v in ("tubal_factorization", "deep_facewise") or (v == "dtr" and not self.use_transform):
            if self.latent_channels is not None:
                raise ValueError(f"latent_channels is fixed to n3 for this {v} setting")
        return self

    @classmethod
    def for_variant(cls, variant: Variant, **overrides: object) -> RecoveryConfig:
        """Config with the default block for ``variant``, updated by ``overrides``.

        Defaults: U-Net depth 2 / base 32 and K=2 FCN for ``dtr``; rank 3 for
        the two-factor variants; interior ranks ``[8, 8]`` for ``deep_facewise``.

        Raises:
            ConfigError: if the resulting config is invalid.
        """
        defaults: dict[str, object] = {"variant": variant}
        match variant:
            case "dtr":
                defaults["unet"] = UNetConfig()
                if overrides.get("use_transform", True):
                    defaults["fcn"] = FcnConfig()
            case "hlrtf_like":
                defaults["fcn"] = FcnConfig()
                defaults["rank"] = 3
            case "tubal_factorization":
                defaults["rank"] = 3
            case "deep_facewise":
                defaults["facewise_ranks"] = [8, 8]
        defaults.update(overrides)
        try:
            return cls(**defaults)
        except ValidationError as exc:
            raise ConfigError(f"Invalid recovery config: {exc}") from exc


@dataclass
class Assembly:
    """Fixed input Z, generator g, transform f and their parameters."""

    z: np.ndarray
    g: TapeMap
    f: TapeMap
    store: ParameterStore


def assemble_variant(cfg: RecoveryConfig, dims: tuple[int, int, int]) -> Assembly:
    """Build the (Z, g, f) triple of ``cfg.variant`` for data of dims ``dims``.

    Raises:
        ConfigError: if the variant's blocks are inconsistent with ``dims``.
    """
    n1, n2, n3 = dims
    noise_seed, param_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    store = ParameterStore(param_seed)
    latent = cfg.latent_channels or n3
    try:
        match cfg.variant:
            case "dtr":
                assert cfg.unet is not None
                unet = cfg.unet.model_copy(update={"channels": latent})
                g: TapeMap = PaddedGenerator(UNetGenerator(unet, store), (n1, n2))
                f: TapeMap = IdentityTransform()
                if cfg.use_transform:
                    assert cfg.fcn is not None
                    fcn = cfg.fcn.model_copy(update={"in_width": latent, "out_width": n3})
                    f = FcnTransform(fcn, store)
                z = init_noise((n1, n2, latent), noise_seed)
            case "hlrtf_like":
                assert cfg.fcn is not None and cfg.rank is not None
                gen = FaceWiseGenerator(
                    FaceWiseFactorConfig(
                        ranks=[n2, cfg.rank, n1], slices=latent, activation=cfg.activation
                    ),
                    store,
                )
                fcn = cfg.fcn.model_copy(update={"in_width": latent, "out_width": n3})
                g, f, z = gen, FcnTransform(fcn, store), gen.identity_input()
            case "tubal_factorization":
                assert cfg.rank is not None
                gen = FaceWiseGenerator(
                    FaceWiseFactorConfig(ranks=[n2, cfg.rank, n1], slices=n3, spectral=True),
                    store,
                )
                g, f, z = gen, InverseDftTransform(), gen.identity_input()
            case "deep_facewise":
                assert cfg.facewise_ranks is not None
                gen = FaceWiseGenerator(
                    FaceWiseFactorConfig(
                        ranks=[n2, *cfg.facewise_ranks, n1],
                        slices=n3,
                        activation=cfg.activation,
                    ),
                    store,
                )
                g, f, z = gen, IdentityTransform(), gen.identity_input()
    except ValidationError as exc:
        raise ConfigError(f"Invalid {cfg.variant} configuration for dims {dims}: {exc}") from exc
    return Assembly(z=z, g=g, f=f, store=store)


def forward(asm: Assembly, tape: Tape | None = None) -> tuple[Tape, dict[str, Node], Node]:
    """Record ``f(g(Z))`` on ``tape`` (a fresh one by default).

    Returns:
        ``(tape, params, x)`` with the parameter leaves and the output node.
    """
    tape = tape or Tape()
    params = asm.store.leaves(tape)
    x = dtr_forward(tape, tape.constant(asm.z, name="Z"), asm.g, asm.f, params)
    return tape, params, x


@dataclass
class RecoveryResult:
    """Outcome of :func:`recover`.

    Attributes:
        tensor: Recovered X, same dims as the observation.
        loss_history: ``(iteration, loss)`` pairs; iteration counts completed steps.
        seconds: Wall time of the optimization.
        parameter_count: Trainable scalars in θ and ξ.
        metrics: PSNR/SSIM against the ground truth, when one was supplied.
    """

    tensor: np.ndarray
    loss_history: list[tuple[int, float]] = field(default_factory=list)
    seconds: float = 0.0
    parameter_count: int = 0
    metrics: MetricsReport | None = None

    def to_csv(self, path: str | Path) -> None:
        """Write the loss trajectory as ``iteration,loss``."""
        write_loss_csv(self.loss_history, path)


def _check_loss(value: float, iteration: int, variant: str) -> None:
    if not np.isfinite(value):
        RECOVERY_RUNS.labels(variant=variant, outcome="nonfinite").inc()
        logger.error("recovery_nonfinite_loss", variant=variant, iteration=iteration)
        raise NumericalError(f"Loss became non-finite at iteration {iteration}.")


def recover(
    o: np.ndarray,
    m: np.ndarray,
    cfg: RecoveryConfig,
    truth: np.ndarray | None = None,
) -> RecoveryResult:
    """Fit the configured representation to the observed entries of ``o``.

    Parameters:
        o: Observation ``(n1, n2, n3)``, normalized to ``[0, 1]``.
        m: Binary mask of observed entries.
        cfg: Variant and hyperparameters.
        truth: Optional ground truth used to score the result.

    Raises:
        ShapeError: if ``o`` and ``m`` differ in dims or are not order 3.
        ConfigError: if the mask is not binary.
        NumericalError: if the loss becomes non-finite.
    """
    check_same_dims(("o", o.shape), ("m", m.shape))
    check_mask(m)
    if o.ndim != 3:
        raise ShapeError(f"recover expects order-3 data, got order {o.ndim}; use recover_any.")
    if o.size and (o.min() < 0.0 or o.max() > 1.0):
        logger.warning("observation_not_normalized", min=float(o.min()), max=float(o.max()))

    variant = cfg.variant
    log = logger.bind(variant=variant, seed=cfg.seed, dims=o.shape)
    asm = assemble_variant(cfg, o.shape)
    params = asm.store.values()
    state = AdamState(lr=cfg.lr)
    history: list[tuple[int, float]] = []
    log.info("recovery_started", iterations=cfg.iterations, parameters=asm.store.count())

    start = time.perf_counter()
    for iteration in range(cfg.iterations):
        tape, leaves, x = forward(asm)
        loss = masked_sq_error(x, o, m)
        value = float(loss.value.item())
        _check_loss(value, iteration, variant)
        if iteration % cfg.log_every == 0:
            history.append((iteration, value))
            log.info("recovery_progress", iteration=iteration, loss=value)
        tape.backward(loss)
        grads = {name: leaves[name].grad for name in params}
        adam_step(state, params, grads)  # type: ignore[arg-type]
        RECOVERY_STEPS.labels(variant=variant).inc()

    _, _, x = forward(asm)
    final = float(np.sum((m * (x.value - o)) ** 2))
    _check_loss(final, cfg.iterations, variant)
    history.append((cfg.iterations, final))
    seconds = time.perf_counter() - start
    LAST_LOSS.labels(variant=variant).set(final)
    RECOVERY_RUNS.labels(variant=variant, outcome="ok").inc()

    report = evaluate(x.value, truth) if truth is not None else None
    log.info(
        "recovery_finished",
        loss=final,
        seconds=round(seconds, 3),
        psnr=None if report is None else report.psnr_mean,
    )
    return RecoveryResult(
        tensor=x.value,
        loss_history=history,
        seconds=seconds,
        parameter_count=asm.store.count(),
        metrics=report,
    )


def recover_any(
    o: np.ndarray,
    m: np.ndarray,
    cfg: RecoveryConfig,
    truth: np.ndarray | None = None,
) -> RecoveryResult:
    """:func:`recover` for order-3 or order-4 data (modes 3 and 4 merged, then split)."""
    if o.ndim == 3:
        return recover(o, m, cfg, truth)
    check_same_dims(("o", o.shape), ("m", m.shape))
    if o.ndim != 4:
        raise ShapeError(f"Only order-3 and order-4 data can be recovered, got order {o.ndim}.")
    n3, n4 = o.shape[2], o.shape[3]
    folded_truth = fold4(truth) if truth is not None else None
    result = recover(fold4(o), fold4(m), cfg, folded_truth)
    result.tensor = unfold4(result.tensor, n3, n4)
    return result
