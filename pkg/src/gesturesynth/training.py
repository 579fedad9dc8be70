"""Losses and the adversarial optimization loop.

The generator objective is an elementwise L1 reconstruction term plus a
weighted bone-length consistency term: the mean absolute change of the
*predicted* skeleton's bone lengths between consecutive frames. The
adversarial game scores motion (frame differences) rather than poses: the
discriminator is trained to push real motion toward 1 and generated motion
toward 0, and the generator earns the non-saturating ``-log D(fake)``
reward (the saturating form is available behind a flag).

Phases alternate: the discriminator updates on detached generator output,
then the generator updates through the frozen discriminator. All
reductions are means, so loss scales are independent of batch size.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import save_checkpoint
from .errors import InvalidInputError, ShapeError, TrainingDivergedError
from .networks import (
    DiscriminatorConfig,
    GeneratorConfig,
    ModelParams,
    discriminator_apply,
    generator_apply,
    init_params,
)
from .skeleton import PoseSequence, SkeletonTopology

SCORE_CLAMP = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    lambda_bone: float = 0.1
    lr_g: float = 3e-4
    lr_d: float = 3e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    d_steps_per_g_step: int = 1
    adversarial_weight: float = 0.1
    saturating: bool = False

    def __post_init__(self):
        # lambda_bone = 0 is permitted so the bone term can be ablated;
        # the stated operating range is the open interval (0, 1).
        if not 0.0 <= self.lambda_bone < 1.0:
            raise InvalidInputError(
                f"lambda_bone must lie in [0, 1), got {self.lambda_bone}"
            )
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise InvalidInputError("learning rates must be > 0")
        if self.batch_size < 1:
            raise InvalidInputError("batch_size must be >= 1")
        if self.epochs < 0:
            raise InvalidInputError("epochs must be >= 0")
        if self.d_steps_per_g_step < 0:
            raise InvalidInputError("d_steps_per_g_step must be >= 0")
        if self.adversarial_weight < 0:
            raise InvalidInputError("adversarial_weight must be >= 0")

    def to_dict(self) -> dict:
        return {
            "lambda_bone": self.lambda_bone,
            "lr_g": self.lr_g,
            "lr_d": self.lr_d,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "d_steps_per_g_step": self.d_steps_per_g_step,
            "adversarial_weight": self.adversarial_weight,
            "saturating": self.saturating,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


@dataclass
class StepRecord:
    step: int
    phase: str  # "d" or "g"
    l1: float | None = None
    bone: float | None = None
    adv_g: float | None = None
    d_loss: float | None = None


@dataclass
class TrainState:
    params: ModelParams
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    g_steps: int = 0
    d_steps: int = 0
    epoch: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    history: list[StepRecord] = field(default_factory=list)

    @property
    def total_steps(self) -> int:
        return self.g_steps + self.d_steps


def init_train_state(
    gen_config: GeneratorConfig, disc_config: DiscriminatorConfig, config: TrainConfig
) -> TrainState:
    params = init_params(gen_config, disc_config, config.seed)
    return TrainState(
        params=params,
        adam_m={n: np.zeros_like(t.values) for n, t in params.tensors.items()},
        adam_v={n: np.zeros_like(t.values) for n, t in params.tensors.items()},
        rng=np.random.default_rng(config.seed),
    )


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------


def _bone_pair_indices(topo: SkeletonTopology) -> tuple[np.ndarray, np.ndarray]:
    bones = np.asarray(topo.bones)
    return bones[:, 0], bones[:, 1]


def bone_length_tensor(pose: Tensor, topo: SkeletonTopology) -> Tensor:
    """Bone lengths on the tape. ``pose`` is (..., K, 3); returns (..., |bones|)."""
    parents, children = _bone_pair_indices(topo)
    axis = pose.values.ndim - 2
    delta = ad.sub(ad.take(pose, children, axis=axis), ad.take(pose, parents, axis=axis))
    return ad.sqrt(ad.total(ad.mul(delta, delta), axis=axis + 1))


def generator_loss_tensor(
    pred: Tensor, target: Tensor, topo: SkeletonTopology, lambda_bone: float
) -> tuple[Tensor, Tensor, Tensor]:
    """Tape version over (..., T, K, 3) arrays; all reductions are means."""
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} and target {target.shape} differ")
    n_frames = pred.shape[-3]
    if n_frames < 2:
        raise InvalidInputError("generator loss needs at least 2 frames")
    l1_term = ad.mean(ad.absolute(ad.sub(pred, target)))
    lengths = bone_length_tensor(pred, topo)  # (..., T, |bones|)
    time_axis = lengths.values.ndim - 2
    later = ad.narrow(lengths, time_axis, 1, n_frames - 1)
    earlier = ad.narrow(lengths, time_axis, 0, n_frames - 1)
    bone_term = ad.mean(ad.absolute(ad.sub(later, earlier)))
    total = ad.add(l1_term, ad.mul(Tensor(float(lambda_bone)), bone_term))
    return total, l1_term, bone_term


def generator_loss(
    pred: PoseSequence, target: PoseSequence, topo: SkeletonTopology, lambda_bone: float
) -> tuple[float, float, float]:
    """(total, l1_term, bone_term) for one sequence pair.

    l1_term is the mean absolute keypoint difference; bone_term is the mean
    absolute frame-to-frame change of the *predicted* bone lengths.
    """
    if pred.frames.shape != target.frames.shape:
        raise ShapeError(
            f"pred {pred.frames.shape} and target {target.frames.shape} differ"
        )
    total, l1_term, bone_term = generator_loss_tensor(
        Tensor(pred.frames), Tensor(target.frames), topo, lambda_bone
    )
    return float(total.values), float(l1_term.values), float(bone_term.values)


def _neg_log(scores: Tensor) -> Tensor:
    # lower clamp keeps log finite near 0; the top of the range needs none
    return ad.mul(Tensor(-1.0), ad.mean(ad.log(ad.clip(scores, SCORE_CLAMP, 1.0))))


def gan_loss_d_tensor(d_real: Tensor, d_fake: Tensor) -> Tensor:
    one = Tensor(np.ones_like(d_fake.values))
    return ad.add(_neg_log(d_real), _neg_log(ad.sub(one, d_fake)))


def gan_loss_d(d_real: float, d_fake: float) -> float:
    """-[log d_real + log(1 - d_fake)], with scores clamped away from {0, 1}."""
    return float(gan_loss_d_tensor(Tensor(float(d_real)), Tensor(float(d_fake))).values)


def gan_loss_g_tensor(d_fake: Tensor, saturating: bool = False) -> Tensor:
    if saturating:
        one = Tensor(np.ones_like(d_fake.values))
        return ad.mean(ad.log(ad.clip(ad.sub(one, d_fake), SCORE_CLAMP, 1.0)))
    return _neg_log(d_fake)


def gan_loss_g(d_fake: float, saturating: bool = False) -> float:
    """Non-saturating generator reward -log d_fake (or +log(1-d_fake))."""
    return float(gan_loss_g_tensor(Tensor(float(d_fake)), saturating).values)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    step_count: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One bias-corrected Adam update; returns (param, m, v)."""
    if step_count < 1:
        raise InvalidInputError(f"step_count must be >= 1, got {step_count}")
    m = beta1 * m + (1.0 - beta1) * grad
    v = beta2 * v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**step_count)
    v_hat = v / (1.0 - beta2**step_count)
    return param - lr * m_hat / (np.sqrt(v_hat) + eps), m, v


def _apply_updates(state: TrainState, prefix: str, lr: float, config: TrainConfig, step: int):
    for name, tensor in state.params.subset(prefix):
        if tensor.grad is None:
            continue
        tensor.values, state.adam_m[name], state.adam_v[name] = adam_step(
            tensor.values,
            tensor.grad,
            state.adam_m[name],
            state.adam_v[name],
            lr,
            config.adam_beta1,
            config.adam_beta2,
            config.adam_eps,
            step,
        )


# ---------------------------------------------------------------------------
# Train step and epoch loop
# ---------------------------------------------------------------------------


def _motion_values(frames: np.ndarray) -> np.ndarray:
    """(B, T, D) poses -> (B, T-1, D) frame differences."""
    return frames[:, 1:, :] - frames[:, :-1, :]


def _motion_tensor(frames: Tensor) -> Tensor:
    n_frames = frames.shape[1]
    return ad.sub(
        ad.narrow(frames, 1, 1, n_frames - 1), ad.narrow(frames, 1, 0, n_frames - 1)
    )


def _check_finite(value: float, state: TrainState, label: str) -> float:
    if not np.isfinite(value):
        raise TrainingDivergedError(state.total_steps, f"{label} is {value}")
    return value


def discriminator_phase(
    state: TrainState, mels: np.ndarray, real_motion: np.ndarray, config: TrainConfig
) -> float:
    """One discriminator update on detached generator output."""
    fake_flat = generator_apply(state.params, Tensor(mels)).detach()
    fake_motion = _motion_values(fake_flat.values)
    state.params.zero_grads()
    d_real = discriminator_apply(state.params, Tensor(real_motion))
    d_fake = discriminator_apply(state.params, Tensor(fake_motion))
    d_loss = gan_loss_d_tensor(d_real, d_fake)
    value = _check_finite(float(d_loss.values), state, "d_loss")
    d_loss.backward()
    state.d_steps += 1
    _apply_updates(state, "disc.", config.lr_d, config, state.d_steps)
    state.params.zero_grads()
    state.history.append(StepRecord(state.total_steps, "d", d_loss=value))
    return value


def generator_phase(
    state: TrainState,
    mels: np.ndarray,
    poses: np.ndarray,
    topo: SkeletonTopology,
    config: TrainConfig,
) -> float:
    """One generator update; discriminator weights receive no update."""
    state.params.zero_grads()
    pred_flat = generator_apply(state.params, Tensor(mels))
    pred = ad.reshape(pred_flat, poses.shape)
    total, l1_term, bone_term = generator_loss_tensor(
        pred, Tensor(poses), topo, config.lambda_bone
    )
    adv_value = None
    if config.adversarial_weight > 0:
        d_fake = discriminator_apply(state.params, _motion_tensor(pred_flat))
        adv = gan_loss_g_tensor(d_fake, config.saturating)
        adv_value = float(adv.values)
        total = ad.add(total, ad.mul(Tensor(config.adversarial_weight), adv))
    value = _check_finite(float(total.values), state, "g_loss")
    total.backward()
    state.g_steps += 1
    _apply_updates(state, "gen.", config.lr_g, config, state.g_steps)
    state.params.zero_grads()
    state.history.append(
        StepRecord(
            state.total_steps,
            "g",
            l1=float(l1_term.values),
            bone=float(bone_term.values),
            adv_g=adv_value,
        )
    )
    return value


def train_step_arrays(
    state: TrainState,
    mels: np.ndarray,
    poses: np.ndarray,
    topo: SkeletonTopology,
    config: TrainConfig,
) -> TrainState:
    """One alternation on arrays: mels (B, F, T_a), poses (B, T, K, 3)."""
    if mels.ndim != 3 or poses.ndim != 4 or mels.shape[0] != poses.shape[0]:
        raise ShapeError(
            f"expected batched mels/poses, got {mels.shape} / {poses.shape}"
        )
    if mels.shape[0] < 1:
        raise InvalidInputError("empty batch")
    n_batch, n_frames = poses.shape[0], poses.shape[1]
    target_flat = poses.reshape(n_batch, n_frames, poses.shape[2] * poses.shape[3])
    real_motion = _motion_values(target_flat)
    for _ in range(config.d_steps_per_g_step):
        discriminator_phase(state, mels, real_motion, config)
    generator_phase(state, mels, poses, topo, config)
    return state


def train_step(state: TrainState, batch, topo: SkeletonTopology, config: TrainConfig) -> TrainState:
    """One alternation on a batch of GestureSample."""
    from .data import samples_to_arrays

    if not batch:
        raise InvalidInputError("empty batch")
    mels, poses = samples_to_arrays(batch)
    return train_step_arrays(state, mels, poses, topo, config)


def write_history(history: Sequence[StepRecord], path) -> None:
    """Loss history CSV with columns step,phase,l1,bone,adv_g,d_loss."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "phase", "l1", "bone", "adv_g", "d_loss"])
        for record in history:
            writer.writerow(
                [
                    record.step,
                    record.phase,
                    "" if record.l1 is None else repr(record.l1),
                    "" if record.bone is None else repr(record.bone),
                    "" if record.adv_g is None else repr(record.adv_g),
                    "" if record.d_loss is None else repr(record.d_loss),
                ]
            )


def train_arrays(
    mels: np.ndarray,
    poses: np.ndarray,
    topo: SkeletonTopology,
    gen_config: GeneratorConfig,
    disc_config: DiscriminatorConfig,
    config: TrainConfig,
    checkpoint_dir=None,
    history_path=None,
    callbacks: Sequence[Callable[[TrainState], None]] = (),
) -> TrainState:
    """Epoch loop over shuffled batches; fully seeded.

    A checkpoint is written after every epoch when ``checkpoint_dir`` is
    given (files ``epoch_NNN.ckpt`` plus a trailing ``final.ckpt``), and the
    loss history CSV at the end when ``history_path`` is given.
    """
    if mels.shape[0] < 1:
        raise InvalidInputError("no training samples")
    state = init_train_state(gen_config, disc_config, config)
    n = mels.shape[0]
    for epoch in range(config.epochs):
        order = state.rng.permutation(n)
        for start in range(0, n, config.batch_size):
            index = order[start : start + config.batch_size]
            train_step_arrays(state, mels[index], poses[index], topo, config)
        state.epoch = epoch + 1
        if checkpoint_dir is not None:
            save_checkpoint(state.params, Path(checkpoint_dir) / f"epoch_{state.epoch:03d}.ckpt")
        for callback in callbacks:
            callback(state)
    if checkpoint_dir is not None:
        save_checkpoint(state.params, Path(checkpoint_dir) / "final.ckpt")
    if history_path is not None:
        write_history(state.history, history_path)
    return state


def train(
    samples,
    topo: SkeletonTopology,
    gen_config: GeneratorConfig,
    disc_config: DiscriminatorConfig,
    config: TrainConfig,
    checkpoint_dir=None,
    history_path=None,
    callbacks: Sequence[Callable[[TrainState], None]] = (),
) -> TrainState:
    """:func:`train_arrays` over a list of GestureSample."""
    from .data import samples_to_arrays

    if not samples:
        raise InvalidInputError("no training samples")
    mels, poses = samples_to_arrays(samples)
    return train_arrays(
        mels,
        poses,
        topo,
        gen_config,
        disc_config,
        config,
        checkpoint_dir=checkpoint_dir,
        history_path=history_path,
        callbacks=callbacks,
    )


# ---------------------------------------------------------------------------
# Composite-objective gradient check (toy sizes)
# ---------------------------------------------------------------------------


def toy_setup(seed: int = 0):
    """Tiny two-joint, four-frame problem for finite-difference checks."""
    from .skeleton import SkeletonTopology as Topo

    topo = Topo(
        name="toy2",
        joints=(("root", None), ("tip", 0)),
        rest_directions=np.array([[0.0, 1.0, 0.0]]),
        rest_lengths=np.array([1.0]),
        root_index=0,
    )
    gen_config = GeneratorConfig(
        mel_bins=6,
        audio_frames=8,
        pose_frames=4,
        out_dims=6,
        audio_channels=(5,),
        enc_channels=(6,),
        dec_channels=(6,),
        depth=1,
    )
    disc_config = DiscriminatorConfig(in_dims=6, channels=(5,), strides=(2,))
    rng = np.random.default_rng(seed)
    mels = rng.normal(size=(2, 6, 8))
    targets = rng.normal(scale=0.5, size=(2, 4, 2, 3))
    return topo, gen_config, disc_config, mels, targets


def full_objective_case(seed: int = 0):
    """Gradcheck case: the complete generator objective through D(M(G(s)))."""
    topo, gen_config, disc_config, mels, targets = toy_setup(seed)
    params = init_params(gen_config, disc_config, seed)
    leaves = [params.tensors[name] for name in params.names]

    def func():
        pred_flat = generator_apply(params, Tensor(mels))
        pred = ad.reshape(pred_flat, targets.shape)
        total, _, _ = generator_loss_tensor(pred, Tensor(targets), topo, 0.3)
        d_fake = discriminator_apply(params, _motion_tensor(pred_flat))
        return ad.add(total, gan_loss_g_tensor(d_fake))

    def builder(_rng):
        return leaves, func

    return builder
