"""Generator and discriminator networks.

The generator maps a log-Mel image to per-frame keypoint coordinates: a
stride-2 audio encoder first brings 512 audio frames down to the 64 pose
frames, then an encoder/decoder stack with channel-wise skip concatenation
refines features at matching temporal resolutions before a 1x1 head emits
K*3 values per frame. The discriminator scores frame-difference (motion)
sequences with a strided conv stack, global average pooling, and a linear
sigmoid head.

All blocks are plain conv + leaky ReLU. Per-sample normalization layers
are deliberately absent from the conditioning path: they subtract each
clip's time-constant log-Mel offset, i.e. its absolute loudness, which the
gesture amplitude must be able to depend on. Instead the raw log-Mel input
is rescaled by the fixed affine map (x - MEL_OFFSET) / MEL_SPREAD, which
keeps silence near -1 and loud speech near +1 without discarding level,
and the head's raw output is scaled by the fixed OUTPUT_GAIN. Everything
is float64 on the autodiff tape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidInputError, ShapeError

CONV_WIDTH = 3
STRIDED_CONV_WIDTH = 4
LEAKY_SLOPE = 0.2

# fixed affine rescaling of the log-Mel input; log(1e-10) maps to -1
MEL_OFFSET = -11.5
MEL_SPREAD = 11.5

# fixed gain on the head's raw output: freshly initialized networks then
# start near the mean pose instead of meter-scale frame-to-frame jitter,
# which would otherwise take hundreds of L1 epochs to unlearn
OUTPUT_GAIN = 0.05


def _as_int_tuple(values) -> tuple[int, ...]:
    return tuple(int(v) for v in values)


@dataclass(frozen=True)
class GeneratorConfig:
    mel_bins: int = 64
    audio_frames: int = 512
    pose_frames: int = 64
    out_dims: int = 144  # joint count * 3
    audio_channels: tuple[int, ...] = (64, 128, 256)
    enc_channels: tuple[int, ...] = (256, 256, 256, 256)
    dec_channels: tuple[int, ...] = (256, 256, 256, 256)
    depth: int = 4

    def __post_init__(self):
        object.__setattr__(self, "audio_channels", _as_int_tuple(self.audio_channels))
        object.__setattr__(self, "enc_channels", _as_int_tuple(self.enc_channels))
        object.__setattr__(self, "dec_channels", _as_int_tuple(self.dec_channels))
        if self.depth < 1:
            raise InvalidInputError(f"depth must be >= 1, got {self.depth}")
        if len(self.enc_channels) != self.depth or len(self.dec_channels) != self.depth:
            raise InvalidInputError(
                "enc_channels and dec_channels must each have `depth` entries"
            )
        ratio, n_audio = divmod_pow2(self.audio_frames, self.pose_frames)
        if ratio is None or len(self.audio_channels) != n_audio:
            raise InvalidInputError(
                f"audio_frames {self.audio_frames} must be pose_frames {self.pose_frames} "
                f"times 2^len(audio_channels)"
            )
        if self.pose_frames % (1 << self.depth) != 0:
            raise InvalidInputError(
                f"pose_frames {self.pose_frames} must be divisible by 2^depth"
            )
        if self.pose_frames // (1 << self.depth) < 2:
            raise InvalidInputError(
                f"bottleneck would span {self.pose_frames // (1 << self.depth)} "
                f"frame(s); need >= 2 (reduce depth)"
            )
        for name in ("mel_bins", "pose_frames", "out_dims"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mel_bins": self.mel_bins,
            "audio_frames": self.audio_frames,
            "pose_frames": self.pose_frames,
            "out_dims": self.out_dims,
            "audio_channels": list(self.audio_channels),
            "enc_channels": list(self.enc_channels),
            "dec_channels": list(self.dec_channels),
            "depth": self.depth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        return cls(**data)


def divmod_pow2(numerator: int, denominator: int):
    """(ratio, exponent) when numerator == denominator * 2^k, else (None, -1)."""
    if denominator < 1 or numerator % denominator:
        return None, -1
    ratio = numerator // denominator
    exponent = ratio.bit_length() - 1
    if 1 << exponent != ratio:
        return None, -1
    return ratio, exponent


@dataclass(frozen=True)
class DiscriminatorConfig:
    in_dims: int = 144
    channels: tuple[int, ...] = (64, 128, 256)
    strides: tuple[int, ...] = (2, 2, 2)

    def __post_init__(self):
        object.__setattr__(self, "channels", _as_int_tuple(self.channels))
        object.__setattr__(self, "strides", _as_int_tuple(self.strides))
        if len(self.channels) != len(self.strides):
            raise InvalidInputError("channels and strides must have equal lengths")
        if any(s < 1 for s in self.strides):
            raise InvalidInputError("strides must all be >= 1")
        if self.in_dims < 1:
            raise InvalidInputError("in_dims must be >= 1")

    def to_dict(self) -> dict:
        return {
            "in_dims": self.in_dims,
            "channels": list(self.channels),
            "strides": list(self.strides),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscriminatorConfig":
        return cls(**data)


@dataclass
class LayerSpec:
    name: str
    c_in: int
    c_out: int
    width: int
    stride: int
    padding: int
    norm: bool
    activation: bool


def generator_layer_specs(cfg: GeneratorConfig) -> list[LayerSpec]:
    specs = []
    c_in = cfg.mel_bins
    for i, c_out in enumerate(cfg.audio_channels):
        specs.append(LayerSpec(f"gen.audio{i}", c_in, c_out, STRIDED_CONV_WIDTH, 2, 1, False, True))
        c_in = c_out
    audio_out = c_in
    for i, c_out in enumerate(cfg.enc_channels):
        specs.append(LayerSpec(f"gen.down{i}", c_in, c_out, STRIDED_CONV_WIDTH, 2, 1, False, True))
        c_in = c_out
    carry = cfg.enc_channels[-1]
    for j in range(cfg.depth):
        level = cfg.depth - 2 - j
        skip = cfg.enc_channels[level] if level >= 0 else audio_out
        c_out = cfg.dec_channels[j]
        specs.append(LayerSpec(f"gen.up{j}", carry + skip, c_out, CONV_WIDTH, 1, 1, False, True))
        carry = c_out
    specs.append(LayerSpec("gen.head", carry, cfg.out_dims, 1, 1, 0, False, False))
    return specs


def discriminator_layer_specs(cfg: DiscriminatorConfig) -> list[LayerSpec]:
    specs = []
    c_in = cfg.in_dims
    for i, (c_out, stride) in enumerate(zip(cfg.channels, cfg.strides)):
        specs.append(
            LayerSpec(f"disc.conv{i}", c_in, c_out, STRIDED_CONV_WIDTH, stride, 1, False, True)
        )
        c_in = c_out
    return specs


@dataclass
class ModelParams:
    """Named parameter store for both networks, plus the init seed."""

    tensors: dict[str, Tensor]
    gen_config: GeneratorConfig
    disc_config: DiscriminatorConfig
    init_seed: int
    names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        self.names = tuple(self.tensors)
        for name, tensor in self.tensors.items():
            if not np.all(np.isfinite(tensor.values)):
                raise InvalidInputError(f"parameter {name!r} contains non-finite values")

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def subset(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.tensors.items() if n.startswith(prefix)]

    def zero_grads(self) -> None:
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def n_values(self) -> int:
        return sum(t.size for t in self.tensors.values())


def init_params(
    gen_config: GeneratorConfig, disc_config: DiscriminatorConfig, seed: int
) -> ModelParams:
    """He-uniform fan-in kernels, zero biases, unit norm gains; seeded."""
    motion_frames = gen_config.pose_frames - 1
    _discriminator_time_chain(disc_config, motion_frames)  # validate early
    rng = np.random.default_rng(seed)
    tensors: dict[str, Tensor] = {}

    def add_conv(spec: LayerSpec):
        fan_in = spec.c_in * spec.width
        bound = np.sqrt(6.0 / fan_in)
        kernel = rng.uniform(-bound, bound, size=(spec.c_out, spec.c_in, spec.width))
        tensors[f"{spec.name}.kernel"] = Tensor(kernel, requires_grad=True)
        tensors[f"{spec.name}.bias"] = Tensor(np.zeros(spec.c_out), requires_grad=True)
        if spec.norm:
            tensors[f"{spec.name}.gain"] = Tensor(np.ones(spec.c_out), requires_grad=True)
            tensors[f"{spec.name}.shift"] = Tensor(np.zeros(spec.c_out), requires_grad=True)

    for spec in generator_layer_specs(gen_config):
        add_conv(spec)
    for spec in discriminator_layer_specs(disc_config):
        add_conv(spec)
    head_in = disc_config.channels[-1]
    bound = np.sqrt(6.0 / head_in)
    tensors["disc.head.weight"] = Tensor(
        rng.uniform(-bound, bound, size=(1, head_in)), requires_grad=True
    )
    tensors["disc.head.bias"] = Tensor(np.zeros(1), requires_grad=True)
    return ModelParams(tensors, gen_config, disc_config, int(seed))


def _apply_block(params: ModelParams, spec: LayerSpec, x: Tensor) -> Tensor:
    out = ad.conv1d(
        x,
        params[f"{spec.name}.kernel"],
        params[f"{spec.name}.bias"],
        stride=spec.stride,
        padding=spec.padding,
    )
    if spec.norm:
        out = ad.instance_norm(out, params[f"{spec.name}.gain"], params[f"{spec.name}.shift"])
    if spec.activation:
        out = ad.leaky_relu(out, LEAKY_SLOPE)
    return out


def generator_apply(params: ModelParams, mel: Tensor) -> Tensor:
    """Batched tape forward: (B, mel_bins, audio_frames) -> (B, pose_frames, out_dims)."""
    cfg = params.gen_config
    squeeze = mel.values.ndim == 2
    x = ad.reshape(mel, (1,) + mel.shape) if squeeze else mel
    if x.shape[1:] != (cfg.mel_bins, cfg.audio_frames):
        raise ShapeError(
            f"generator expects (B, {cfg.mel_bins}, {cfg.audio_frames}), got {mel.shape}"
        )
    specs = generator_layer_specs(cfg)
    index = {s.name: s for s in specs}
    x = ad.mul(ad.sub(x, Tensor(MEL_OFFSET)), Tensor(1.0 / MEL_SPREAD))
    for i in range(len(cfg.audio_channels)):
        x = _apply_block(params, index[f"gen.audio{i}"], x)
    skips = []
    for i in range(cfg.depth):
        skips.append(x)
        x = _apply_block(params, index[f"gen.down{i}"], x)
    for j in range(cfg.depth):
        x = ad.nearest_upsample(x, 2)
        x = ad.concat([x, skips[cfg.depth - 1 - j]], axis=1)
        x = _apply_block(params, index[f"gen.up{j}"], x)
    x = _apply_block(params, index["gen.head"], x)
    x = ad.mul(x, Tensor(OUTPUT_GAIN))
    out = ad.transpose(x, (0, 2, 1))
    return ad.reshape(out, out.shape[1:]) if squeeze else out


def generator_forward(params: ModelParams, mel: np.ndarray) -> np.ndarray:
    """Tape-free single-sample forward: (mel_bins, frames) -> (pose_frames, out_dims)."""
    mel = np.asarray(mel, dtype=np.float64)
    if mel.ndim != 2:
        raise ShapeError(f"mel must be 2-D, got shape {mel.shape}")
    return generator_apply(_frozen_view(params), Tensor(mel)).values


def _discriminator_time_chain(cfg: DiscriminatorConfig, t_in: int) -> list[int]:
    chain = [t_in]
    t = t_in
    for stride in cfg.strides:
        t = (t + 2 - STRIDED_CONV_WIDTH) // stride + 1
        if t < 1:
            raise ShapeError(
                f"discriminator time axis collapses below 1 "
                f"(chain so far {chain}, stride {stride})"
            )
        chain.append(t)
    return chain


def discriminator_apply(params: ModelParams, motion: Tensor) -> Tensor:
    """Batched tape forward: (B, frames-1, in_dims) -> (B,) scores in (0, 1)."""
    cfg = params.disc_config
    expected_t = params.gen_config.pose_frames - 1
    squeeze = motion.values.ndim == 2
    x = ad.reshape(motion, (1,) + motion.shape) if squeeze else motion
    if x.shape[1] != expected_t or x.shape[2] != cfg.in_dims:
        raise ShapeError(
            f"discriminator expects (B, {expected_t}, {cfg.in_dims}), got {motion.shape}"
        )
    x = ad.transpose(x, (0, 2, 1))
    for spec in discriminator_layer_specs(cfg):
        x = _apply_block(params, spec, x)
    pooled = ad.mean(x, axis=2)
    logits = ad.linear(pooled, params["disc.head.weight"], params["disc.head.bias"])
    scores = ad.reshape(ad.sigmoid(logits), (x.shape[0],))
    return ad.reshape(scores, ()) if squeeze else scores


def discriminator_forward(params: ModelParams, motion: np.ndarray) -> float:
    """Tape-free single-sample score in (0, 1)."""
    motion = np.asarray(motion, dtype=np.float64)
    if motion.ndim != 2:
        raise ShapeError(f"motion must be 2-D, got shape {motion.shape}")
    return float(discriminator_apply(_frozen_view(params), Tensor(motion)).values)


def _frozen_view(params: ModelParams) -> ModelParams:
    """A detached copy so inference builds no tape."""
    view = object.__new__(ModelParams)
    view.tensors = {n: t.detach() for n, t in params.tensors.items()}
    view.gen_config = params.gen_config
    view.disc_config = params.disc_config
    view.init_seed = params.init_seed
    view.names = params.names
    return view
