"""Untrained networks of the deep tensor representation.

- :class:`UNetGenerator` -- the deep latent generative module g_θ, mapping a
  fixed noise tensor ``(n1, n2, n̂3)`` to the latent tensor of the same dims.
- :class:`FcnTransform` -- the deep transform module f_ξ, a fully connected
  network applied to every mode-3 tube, mapping ``n̂3`` to ``n3`` channels.
- :class:`FaceWiseGenerator` -- shallow generators built from face-wise
  products of factor tensors ``W_m``; with an identity input this is a
  (deep) matrix factorization of every frontal slice.
- :class:`IdentityTransform` / :class:`InverseDftTransform` -- fixed f_ξ
  choices for the shallow variants.

Every network is a callable ``(tape, x, params) -> Node`` whose trainable
tensors live in a shared :class:`ParameterStore`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping, Protocol

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from dtr_recovery.algebra.spectral import inverse_matrix, packed_identity
from dtr_recovery.autodiff import DEFAULT_SLOPE, Node, Tape
from dtr_recovery.errors import ConfigError, ShapeError

Partition = Literal["theta", "xi"]
Activation = Literal["leaky_relu", "sigmoid", "identity"]


def activate(tape: Tape, x: Node, kind: Activation, slope: float = DEFAULT_SLOPE) -> Node:
    """Apply the configured activation σ."""
    match kind:
        case "leaky_relu":
            return tape.leaky_relu(x, slope)
        case "sigmoid":
            return tape.sigmoid(x)
        case "identity":
            return x
    raise ConfigError(f"Unknown activation {kind!r}.")


# ----------------------------------------------------------------------
# Parameters
# ----------------------------------------------------------------------


@dataclass
class Parameter:
    """A named trainable tensor and the network partition it belongs to."""

    name: str
    value: np.ndarray
    partition: Partition


class ParameterStore:
    """Named trainable tensors for θ (generator) and ξ (transform).

    Initialization draws from one seeded generator in registration order, so
    building the same networks with the same seed reproduces every value.

    Parameters:
        seed: Seed of the initialization generator.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0) -> None:
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._params: dict[str, Parameter] = {}

    def add_uniform(
        self, name: str, shape: tuple[int, ...], partition: Partition, fan_in: int
    ) -> str:
        """Register a tensor initialized He-uniform: ``U(-b, b)``, ``b = sqrt(6 / fan_in)``."""
        bound = float(np.sqrt(6.0 / max(fan_in, 1)))
        return self.add(name, self._rng.uniform(-bound, bound, size=shape), partition)

    def add_zeros(self, name: str, shape: tuple[int, ...], partition: Partition) -> str:
        return self.add(name, np.zeros(shape), partition)

    def add(self, name: str, value: np.ndarray, partition: Partition) -> str:
        """Register an explicit value.

        Raises:
            ConfigError: if the name is already taken.
        """
        if name in self._params:
            raise ConfigError(f"Parameter {name!r} registered twice.")
        self._params[name] = Parameter(name, np.array(value, dtype=np.float64), partition)
        return name

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name].value

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def names(self, partition: Partition | None = None) -> list[str]:
        return [
            p.name for p in self._params.values() if partition is None or p.partition == partition
        ]

    def values(self, partition: Partition | None = None) -> dict[str, np.ndarray]:
        """Parameter arrays by name (live references, updated in place by Adam)."""
        return {name: self._params[name].value for name in self.names(partition)}

    def count(self, partition: Partition | None = None) -> int:
        """Number of trainable scalars."""
        return int(sum(self._params[name].value.size for name in self.names(partition)))

    def leaves(self, tape: Tape) -> dict[str, Node]:
        """Register every parameter on ``tape`` as a gradient-carrying leaf."""
        return {name: tape.leaf(p.value, name=name) for name, p in self._params.items()}


class TapeMap(Protocol):
    """A differentiable map recorded on a tape."""

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node: ...


def init_noise(dims: tuple[int, int, int], seed: int | np.random.SeedSequence) -> np.ndarray:
    """Fixed network input Z: i.i.d. uniform entries on ``[0, 0.1]``."""
    if min(dims) < 1:
        raise ShapeError(f"Noise dims must be positive, got {dims}.")
    return np.random.default_rng(seed).uniform(0.0, 0.1, size=dims)


# ----------------------------------------------------------------------
# Deep latent generative module
# ----------------------------------------------------------------------


class UNetConfig(BaseModel):
    """U-Net generator settings.

    Attributes:
        depth: Number of encoder/decoder scales L.
        base_channels: Channels at the first scale; doubled per scale.
        kernel: Odd convolution kernel size.
        channels: Input and output channel count n̂3 (filled in from the data when None).
        activation: Activation after every hidden convolution.
        slope: Leaky-ReLU slope.
    """

    depth: int = Field(2, ge=1)
    base_channels: int = Field(32, ge=1)
    kernel: int = Field(3, ge=1)
    channels: int | None = Field(None, ge=1)
    activation: Activation = "leaky_relu"
    slope: float = DEFAULT_SLOPE

    @field_validator("kernel")
    @classmethod
    def _odd_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("kernel size must be odd")
        return v


class UNetGenerator:
    """Encoder/decoder with channel-concatenated skip connections.

    Per scale the encoder applies a stride-2 convolution and the activation;
    the decoder upsamples ×2, concatenates the matching encoder features,
    then convolves and activates.  A final 1×1 convolution maps to n̂3
    channels.  Spatial dims must be divisible by ``2**depth``.
    """

    def __init__(self, cfg: UNetConfig, store: ParameterStore, prefix: str = "g") -> None:
        if cfg.channels is None:
            raise ConfigError("UNetConfig.channels must be resolved before building.")
        self.cfg = cfg
        k, base, depth = cfg.kernel, cfg.base_channels, cfg.depth
        self.enc_channels = [cfg.channels] + [base * 2**level for level in range(depth)]
        self.encoders: list[tuple[str, str]] = []
        for level in range(1, depth + 1):
            c_in, c_out = self.enc_channels[level - 1], self.enc_channels[level]
            self.encoders.append(self._conv(store, f"{prefix}.enc{level}", k, c_in, c_out))
        self.decoders: list[tuple[str, str]] = []
        current = self.enc_channels[depth]
        for level in range(depth, 0, -1):
            skip = self.enc_channels[level - 1]
            c_out = self.enc_channels[level - 1] if level > 1 else base
            self.decoders.append(
                self._conv(store, f"{prefix}.dec{level}", k, current + skip, c_out)
            )
            current = c_out
        self.head = self._conv(store, f"{prefix}.out", 1, current, cfg.channels)

    @staticmethod
    def _conv(
        store: ParameterStore, name: str, k: int, c_in: int, c_out: int
    ) -> tuple[str, str]:
        weight = store.add_uniform(f"{name}.weight", (k, k, c_in, c_out), "theta", k * k * c_in)
        bias = store.add_zeros(f"{name}.bias", (c_out,), "theta")
        return weight, bias

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node:
        cfg = self.cfg
        h, w, c = x.shape
        step = 2**cfg.depth
        if h % step or w % step or c != cfg.channels:
            raise ShapeError(
                f"U-Net of depth {cfg.depth} with {cfg.channels} channels cannot take "
                f"input {x.shape}; spatial dims must be divisible by {step}."
            )
        pad = cfg.kernel // 2
        skips = [x]
        current = x
        for weight, bias in self.encoders:
            current = tape.conv2d(current, params[weight], params[bias], stride=2, padding=pad)
            current = activate(tape, current, cfg.activation, cfg.slope)
            skips.append(current)
        for index, (weight, bias) in enumerate(self.decoders):
            skip = skips[cfg.depth - 1 - index]
            current = tape.channel_concat([tape.upsample_nearest(current, 2), skip])
            current = tape.conv2d(current, params[weight], params[bias], stride=1, padding=pad)
            current = activate(tape, current, cfg.activation, cfg.slope)
        weight, bias = self.head
        return tape.conv2d(current, params[weight], params[bias])


def build_generator_unet(cfg: UNetConfig, store: ParameterStore) -> UNetGenerator:
    """Build g_θ as a U-Net and register its parameters under θ."""
    return UNetGenerator(cfg, store)


class PaddedGenerator:
    """Zero-pads the input symmetrically to a multiple of ``2**depth`` and crops after."""

    def __init__(self, inner: UNetGenerator, spatial: tuple[int, int]) -> None:
        self.inner = inner
        step = 2**inner.cfg.depth
        self.spatial = spatial
        self.pads = tuple(
            (extra // 2, extra - extra // 2)
            for extra in ((-n) % step for n in spatial)
        )

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node:
        (top, bottom), (left, right) = self.pads
        if not (top or bottom or left or right):
            return self.inner(tape, x, params)
        padded = tape.zero_pad(x, top, bottom, left, right)
        out = self.inner(tape, padded, params)
        return tape.crop(out, top, left, *self.spatial)


# ----------------------------------------------------------------------
# Deep transform module
# ----------------------------------------------------------------------


class FcnConfig(BaseModel):
    """Tube-wise fully connected transform settings.

    Attributes:
        layers: Number of linear layers K; K=1 is a single linear map.
        in_width: Latent channel count n̂3 (filled in from the data when None).
        out_width: Data channel count n3 (filled in from the data when None).
        widths: K-1 hidden widths; defaults to ``max(in_width, out_width)`` each.
        activation: Activation between layers.
        slope: Leaky-ReLU slope.
    """

    layers: int = Field(2, ge=1)
    in_width: int | None = Field(None, ge=1)
    out_width: int | None = Field(None, ge=1)
    widths: list[int] | None = None
    activation: Activation = "leaky_relu"
    slope: float = DEFAULT_SLOPE

    @model_validator(mode="after")
    def _check_widths(self) -> FcnConfig:
        if self.widths is not None:
            if len(self.widths) != self.layers - 1:
                raise ValueError(
                    f"expected {self.layers - 1} hidden widths, got {len(self.widths)}"
                )
            if any(w < 1 for w in self.widths):
                raise ValueError("hidden widths must be positive")
        return self

    def chain(self) -> list[int]:
        """Layer widths from input to output."""
        if self.in_width is None or self.out_width is None:
            raise ConfigError("FcnConfig widths are unresolved.")
        hidden = self.widths
        if hidden is None:
            hidden = [max(self.in_width, self.out_width)] * (self.layers - 1)
        return [self.in_width, *hidden, self.out_width]


class FcnTransform:
    """f_ξ: linear mode-3 layers with the activation in between."""

    def __init__(self, cfg: FcnConfig, store: ParameterStore, prefix: str = "f") -> None:
        if cfg.in_width is None or cfg.out_width is None:
            raise ConfigError("FcnConfig widths must be resolved before building.")
        self.cfg = cfg
        chain = cfg.chain()
        self.layers: list[tuple[str, str]] = []
        for index, (c_in, c_out) in enumerate(zip(chain[:-1], chain[1:]), start=1):
            weight = store.add_uniform(f"{prefix}.fc{index}.weight", (c_out, c_in), "xi", c_in)
            bias = store.add_zeros(f"{prefix}.fc{index}.bias", (c_out,), "xi")
            self.layers.append((weight, bias))

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node:
        current = x
        for index, (weight, bias) in enumerate(self.layers):
            if index:
                current = activate(tape, current, self.cfg.activation, self.cfg.slope)
            current = tape.mode3_linear(current, params[weight], params[bias])
        return current


def build_transform_fcn(cfg: FcnConfig, store: ParameterStore) -> FcnTransform:
    """Build f_ξ as a tube-wise FCN and register its parameters under ξ."""
    return FcnTransform(cfg, store)


class IdentityTransform:
    """f_ξ = identity."""

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node:
        return x


class InverseDftTransform:
    """f_ξ = inverse DFT along mode 3 of a packed half-spectrum latent tensor."""

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node:
        return tape.mode3_linear(x, tape.constant(inverse_matrix(x.shape[2])))


# ----------------------------------------------------------------------
# Face-wise generators
# ----------------------------------------------------------------------


class FaceWiseFactorConfig(BaseModel):
    """Face-wise factor chain ``W_L Δ σ(W_{L-1} Δ ... σ(W_2 Δ W_1 Δ Z))``.

    Attributes:
        ranks: ``[r_0 = n2, r_1, ..., r_L = n1]``.
        slices: Number of frontal slices of every factor.
        activation: σ between the interior products.
        slope: Leaky-ReLU slope.
        spectral: Treat factors as packed Fourier-side slices and multiply
            them as complex matrices.
    """

    ranks: list[int] = Field(..., min_length=2)
    slices: int = Field(..., ge=1)
    activation: Activation = "leaky_relu"
    slope: float = DEFAULT_SLOPE
    spectral: bool = False

    @model_validator(mode="after")
    def _check_chain(self) -> FaceWiseFactorConfig:
        if any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be positive")
        if self.spectral and len(self.ranks) != 3:
            raise ValueError("spectral factorization uses exactly two factors")
        return self

    @property
    def depth(self) -> int:
        return len(self.ranks) - 1


class FaceWiseGenerator:
    """Face-wise factor generator; its input is the slice-identity tensor."""

    def __init__(
        self, cfg: FaceWiseFactorConfig, store: ParameterStore, prefix: str = "g"
    ) -> None:
        self.cfg = cfg
        self.factors: list[str] = []
        for m in range(1, cfg.depth + 1):
            r_out, r_in = cfg.ranks[m], cfg.ranks[m - 1]
            self.factors.append(
                store.add_uniform(f"{prefix}.W{m}", (r_out, r_in, cfg.slices), "theta", r_in)
            )

    def identity_input(self) -> np.ndarray:
        """Z with every (Fourier-side, when spectral) frontal slice equal to ``I_{n2}``."""
        n2, n3 = self.cfg.ranks[0], self.cfg.slices
        if self.cfg.spectral:
            return packed_identity(n2, n3)
        return np.repeat(np.eye(n2)[:, :, np.newaxis], n3, axis=2)

    def __call__(self, tape: Tape, x: Node, params: Mapping[str, Node]) -> Node:
        cfg = self.cfg
        n2 = cfg.ranks[0]
        if x.shape != (n2, n2, cfg.slices):
            raise ShapeError(f"Face-wise generator expects Z of dims {(n2, n2, cfg.slices)}, "
                             f"got {x.shape}.")
        product = tape.packed_facewise_matmul if cfg.spectral else tape.facewise_matmul
        current = product(params[self.factors[0]], x)
        for m, name in enumerate(self.factors[1:], start=2):
            current = product(params[name], current)
            if m < cfg.depth:
                current = activate(tape, current, cfg.activation, cfg.slope)
        return current


def build_facewise_generator(
    cfg: FaceWiseFactorConfig, store: ParameterStore
) -> FaceWiseGenerator:
    """Build a face-wise factor generator and register ``W_1 .. W_L`` under θ."""
    return FaceWiseGenerator(cfg, store)


# ----------------------------------------------------------------------
# Composition
# ----------------------------------------------------------------------


def dtr_forward(
    tape: Tape,
    z: Node,
    g: TapeMap,
    f: TapeMap,
    params: Mapping[str, Node],
) -> Node:
    """X = f_ξ(g_θ(Z)) recorded on one tape.

    Raises:
        ShapeError: if the output of ``g`` does not fit ``f``.
    """
    latent = g(tape, z, params)
    return f(tape, latent, params)
