"""Tests for variant assembly and the recovery driver."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from dtr_recovery.algebra import t_product
from dtr_recovery.algebra.spectral import unpack_spectrum
from dtr_recovery.autodiff import masked_sq_error
from dtr_recovery.data_io import gen_random_mask, synth_low_tubal_rank, synth_smooth
from dtr_recovery.errors import ConfigError, NumericalError, ShapeError
from dtr_recovery.metrics import relative_error
from dtr_recovery.nets import FcnConfig, UNetConfig
from dtr_recovery.recovery import (
    VARIANTS,
    RecoveryConfig,
    assemble_variant,
    forward,
    recover,
    recover_any,
)

SMALL = (8, 8, 3)


def _small_config(variant: str, **overrides: object) -> RecoveryConfig:
    if variant == "dtr":
        overrides.setdefault("unet", UNetConfig(depth=1, base_channels=4))
    if variant == "hlrtf_like":
        overrides.setdefault("fcn", FcnConfig(layers=2))
    if variant == "deep_facewise":
        overrides.setdefault("facewise_ranks", [3, 3])
    return RecoveryConfig.for_variant(variant, **overrides)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("variant", VARIANTS)
def test_for_variant_defaults_are_valid(variant: str) -> None:
    """Every variant has a complete default configuration."""
    cfg = RecoveryConfig.for_variant(variant)  # type: ignore[arg-type]
    assert cfg.variant == variant
    assert cfg.iterations == 2000
    assert cfg.lr == 1e-3


def test_config_rejects_foreign_blocks() -> None:
    """Only the block matching the variant may be present."""
    with pytest.raises(ConfigError):
        RecoveryConfig.for_variant("dtr", rank=3)
    with pytest.raises(ConfigError):
        RecoveryConfig.for_variant("tubal_factorization", fcn=FcnConfig())
    with pytest.raises(ConfigError):
        RecoveryConfig.for_variant("deep_facewise", facewise_ranks=[4])
    with pytest.raises(ConfigError):
        RecoveryConfig.for_variant("dtr", iterations=0)
    with pytest.raises(ConfigError):
        RecoveryConfig.for_variant("dtr", use_transform=False, latent_channels=5)


def test_dtr_without_transform_has_no_xi() -> None:
    """The ablation drops the FCN; the U-Net then outputs n3 channels directly."""
    cfg = _small_config("dtr", use_transform=False)
    asm = assemble_variant(cfg, SMALL)
    assert asm.store.count("xi") == 0
    assert forward(asm)[2].shape == SMALL


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def test_tubal_factorization_is_a_t_product() -> None:
    """The assembled factorization equals the t-product of its spatial factors."""
    cfg = RecoveryConfig.for_variant("tubal_factorization", rank=3, seed=4)
    asm = assemble_variant(cfg, (8, 8, 4))
    assert asm.store.names() == ["g.W1", "g.W2"]
    b_packed, a_packed = asm.store["g.W1"], asm.store["g.W2"]
    assert a_packed.shape == (8, 3, 4)
    assert b_packed.shape == (3, 8, 4)
    x = forward(asm)[2].value
    expected = t_product(unpack_spectrum(a_packed), unpack_spectrum(b_packed))
    assert np.abs(x - expected).max() <= 1e-8


def test_dtr_forward_shape_and_parameters() -> None:
    """The DTR forward has the data dims; parameters split into θ and ξ."""
    asm = assemble_variant(_small_config("dtr", latent_channels=5), (7, 9, 3))
    assert forward(asm)[2].shape == (7, 9, 3)
    assert asm.z.shape == (7, 9, 5)
    assert asm.store.count("theta") > 0
    assert asm.store.count("xi") == (5 * 5 + 5) + (5 * 3 + 3)


def test_deep_facewise_factors() -> None:
    """Three factors with shapes r_m x r_{m-1} x n3."""
    asm = assemble_variant(_small_config("deep_facewise", facewise_ranks=[4, 2]), (6, 5, 3))
    assert [asm.store[n].shape for n in asm.store.names()] == [(4, 5, 3), (2, 4, 3), (6, 2, 3)]


def test_hlrtf_like_uses_facewise_generator_and_fcn() -> None:
    """Two face-wise factors on n̂3 slices feed an FCN to n3 channels."""
    asm = assemble_variant(_small_config("hlrtf_like", rank=2, latent_channels=4), (5, 6, 3))
    assert asm.store.names("theta") == ["g.W1", "g.W2"]
    assert asm.store["g.W1"].shape == (2, 6, 4)
    assert forward(asm)[2].shape == (5, 6, 3)


def test_gradient_vanishes_at_unobserved_entries(rng: np.random.Generator) -> None:
    """The loss gradient with respect to X is zero wherever the mask is zero."""
    o = synth_smooth(SMALL, 0)
    m = gen_random_mask(SMALL, 0.4, 1)
    tape, _, x = forward(assemble_variant(_small_config("dtr"), SMALL))
    tape.backward(masked_sq_error(x, o, m))
    assert np.all(x.grad[m == 0] == 0.0)
    assert np.any(x.grad[m == 1] != 0.0)


# ---------------------------------------------------------------------------
# recover
# ---------------------------------------------------------------------------


def test_recover_is_deterministic() -> None:
    """The same config and seed give bitwise-identical results."""
    o = synth_smooth(SMALL, 0)
    m = gen_random_mask(SMALL, 0.5, 1)
    cfg = _small_config("dtr", iterations=5, seed=3)
    first, second = recover(o, m, cfg), recover(o, m, cfg)
    assert np.array_equal(first.tensor, second.tensor)
    assert first.loss_history == second.loss_history


def test_recover_with_empty_mask_keeps_initial_forward() -> None:
    """Nothing observed: the loss is 0 throughout and X is the untrained forward."""
    o = synth_smooth(SMALL, 0)
    m = np.zeros(SMALL)
    cfg = _small_config("dtr", iterations=4, log_every=1, seed=2)
    result = recover(o, m, cfg)
    assert all(loss == 0.0 for _, loss in result.loss_history)
    assert np.array_equal(result.tensor, forward(assemble_variant(cfg, SMALL))[2].value)


@pytest.mark.parametrize("variant", VARIANTS)
def test_recover_does_not_increase_loss(variant: str) -> None:
    """Final observed-entry loss is at most the initial one for every variant."""
    o = synth_smooth(SMALL, 5)
    m = gen_random_mask(SMALL, 0.5, 6)
    result = recover(o, m, _small_config(variant, iterations=25, lr=1e-3))
    losses = [loss for _, loss in result.loss_history]
    assert np.all(np.isfinite(losses))
    assert losses[-1] <= losses[0]
    assert result.tensor.shape == SMALL
    assert result.parameter_count > 0


def test_loss_history_follows_log_every(tmp_path: Path) -> None:
    """Losses are kept every log_every steps plus the final one, and export to CSV."""
    o = synth_smooth(SMALL, 0)
    m = gen_random_mask(SMALL, 0.5, 1)
    result = recover(o, m, _small_config("tubal_factorization", iterations=10, log_every=3))
    assert [i for i, _ in result.loss_history] == [0, 3, 6, 9, 10]
    path = tmp_path / "loss.csv"
    result.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,loss"
    assert len(lines) == 6


def test_recover_scores_against_truth() -> None:
    """A supplied ground truth yields a metrics report."""
    truth = synth_smooth((12, 12, 2), 0)
    result = recover(truth, np.ones(truth.shape), _small_config("deep_facewise", iterations=3),
                     truth=truth)
    assert result.metrics is not None
    assert len(result.metrics.psnr_bands) == 2


def test_recover_validates_inputs() -> None:
    """Mismatched dims, non-binary masks and non-finite losses are errors."""
    o = synth_smooth(SMALL, 0)
    cfg = _small_config("tubal_factorization", iterations=2)
    with pytest.raises(ShapeError):
        recover(o, np.ones((8, 8, 2)), cfg)
    with pytest.raises(ConfigError):
        recover(o, np.full(SMALL, 0.5), cfg)
    bad = o.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(NumericalError):
        recover(bad, np.ones(SMALL), cfg)


def test_recover_any_handles_order_four() -> None:
    """Order-4 data are folded for recovery and unfolded afterwards."""
    o = synth_smooth((8, 8, 4), 0).reshape((8, 8, 2, 2), order="F")
    m = np.ones(o.shape)
    result = recover_any(o, m, _small_config("deep_facewise", iterations=2))
    assert result.tensor.shape == (8, 8, 2, 2)


# ---------------------------------------------------------------------------
# Calibrated long runs
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_tubal_factorization_exact_recovery() -> None:
    """Matched rank and full observation recover a tubal-rank-2 tensor."""
    truth = synth_low_tubal_rank((24, 24, 6), 2, 0)
    cfg = RecoveryConfig.for_variant(
        "tubal_factorization", rank=2, iterations=3000, lr=5e-3, seed=0
    )
    result = recover(truth, np.ones(truth.shape), cfg)
    assert relative_error(result.tensor, truth) <= 1e-2


@pytest.mark.slow
def test_dtr_fits_fully_observed_smooth_volume() -> None:
    """The DTR reaches 35 dB on a fully observed smooth volume."""
    truth = synth_smooth((32, 32, 8), 0)
    cfg = RecoveryConfig.for_variant("dtr", iterations=2000, seed=0)
    result = recover(truth, np.ones(truth.shape), cfg, truth=truth)
    assert result.metrics is not None
    assert result.metrics.psnr_mean >= 35.0
