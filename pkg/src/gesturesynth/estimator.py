"""Scikit-learn style estimator wrapping the adversarial trainer.

``GestureGan`` fits on arrays: ``X`` holds log-Mel images with shape
(n, mel_bins, audio_frames) and ``y`` the target keypoints with shape
(n, pose_frames, K, 3) or flattened (n, pose_frames, 3K). ``predict``
returns (n, pose_frames, K, 3) and ``score`` the mean PCK at alpha = 0.2,
so the model drops into sklearn tooling (clone, get_params, pipelines).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InvalidInputError, ShapeError
from .evaluation import DEFAULT_ALPHA, evaluate_pairs
from .networks import DiscriminatorConfig, GeneratorConfig, generator_forward
from .skeleton import PoseSequence, SkeletonTopology, default_topology
from .training import TrainConfig, train_arrays
from .validation import as_float_array


class GestureGan(BaseEstimator):
    """Adversarially trained speech-to-gesture generator."""

    def __init__(
        self,
        topology: SkeletonTopology | None = None,
        lambda_bone: float = 0.1,
        lr_g: float = 3e-4,
        lr_d: float = 3e-4,
        adam_beta1: float = 0.5,
        adam_beta2: float = 0.999,
        adam_eps: float = 1e-8,
        batch_size: int = 16,
        epochs: int = 30,
        seed: int = 0,
        d_steps_per_g_step: int = 1,
        adversarial_weight: float = 0.1,
        saturating: bool = False,
        audio_channels: tuple = (64, 128, 256),
        enc_channels: tuple = (256, 256, 256, 256),
        dec_channels: tuple = (256, 256, 256, 256),
        depth: int = 4,
        disc_channels: tuple = (64, 128, 256),
        disc_strides: tuple = (2, 2, 2),
        pose_fps: float = 16.0,
    ):
        self.topology = topology
        self.lambda_bone = lambda_bone
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.d_steps_per_g_step = d_steps_per_g_step
        self.adversarial_weight = adversarial_weight
        self.saturating = saturating
        self.audio_channels = audio_channels
        self.enc_channels = enc_channels
        self.dec_channels = dec_channels
        self.depth = depth
        self.disc_channels = disc_channels
        self.disc_strides = disc_strides
        self.pose_fps = pose_fps

    # -- config assembly ----------------------------------------------------

    def _topology(self) -> SkeletonTopology:
        return self.topology if self.topology is not None else default_topology()

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            lambda_bone=self.lambda_bone,
            lr_g=self.lr_g,
            lr_d=self.lr_d,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            d_steps_per_g_step=self.d_steps_per_g_step,
            adversarial_weight=self.adversarial_weight,
            saturating=self.saturating,
        )

    def _net_configs(self, mel_bins, audio_frames, pose_frames, out_dims):
        gen = GeneratorConfig(
            mel_bins=mel_bins,
            audio_frames=audio_frames,
            pose_frames=pose_frames,
            out_dims=out_dims,
            audio_channels=tuple(self.audio_channels),
            enc_channels=tuple(self.enc_channels),
            dec_channels=tuple(self.dec_channels),
            depth=self.depth,
        )
        disc = DiscriminatorConfig(
            in_dims=out_dims,
            channels=tuple(self.disc_channels),
            strides=tuple(self.disc_strides),
        )
        return gen, disc

    # -- sklearn API ----------------------------------------------------------

    def _validate_xy(self, X, y):
        X = as_float_array(X, "X", ndim=3)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim == 3:
            if y.shape[2] % 3:
                raise ShapeError(f"flattened y last dim {y.shape[2]} not divisible by 3")
            y = y.reshape(y.shape[0], y.shape[1], y.shape[2] // 3, 3)
        if y.ndim != 4 or y.shape[3] != 3:
            raise ShapeError(f"y: expected (n, T, K, 3), got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise InvalidInputError("y contains non-finite values")
        if X.shape[0] != y.shape[0]:
            raise ShapeError(f"X has {X.shape[0]} samples, y has {y.shape[0]}")
        topo = self._topology()
        if y.shape[2] != topo.n_joints:
            raise ShapeError(
                f"y has {y.shape[2]} joints, topology {topo.name!r} has {topo.n_joints}"
            )
        return X, y

    def fit(self, X, y, checkpoint_dir=None, history_path=None, callbacks=()):
        """Train generator and discriminator on aligned (mel, pose) arrays."""
        X, y = self._validate_xy(X, y)
        topo = self._topology()
        gen, disc = self._net_configs(
            X.shape[1], X.shape[2], y.shape[1], topo.n_joints * 3
        )
        self.state_ = train_arrays(
            X,
            y,
            topo,
            gen,
            disc,
            self._train_config(),
            checkpoint_dir=checkpoint_dir,
            history_path=history_path,
            callbacks=callbacks,
        )
        self.params_ = self.state_.params
        self.history_ = self.state_.history
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise InvalidInputError("estimator is not fitted; call fit() or load()")

    def predict(self, X) -> np.ndarray:
        """Generate keypoints, shape (n, pose_frames, K, 3)."""
        self._check_fitted()
        X = as_float_array(X, "X", ndim=3)
        cfg = self.params_.gen_config
        outputs = np.empty((X.shape[0], cfg.pose_frames, cfg.out_dims // 3, 3))
        for i in range(X.shape[0]):
            flat = generator_forward(self.params_, X[i])
            outputs[i] = flat.reshape(cfg.pose_frames, cfg.out_dims // 3, 3)
        return outputs

    def predict_sequences(self, X) -> list[PoseSequence]:
        return [PoseSequence(frames, fps=self.pose_fps) for frames in self.predict(X)]

    def score(self, X, y, alpha: float = DEFAULT_ALPHA) -> float:
        """Mean PCK of generated keypoints against targets."""
        X, y = self._validate_xy(X, y)
        predictions = self.predict(X)
        pairs = [
            (PoseSequence(p, fps=self.pose_fps), PoseSequence(t, fps=self.pose_fps))
            for p, t in zip(predictions, y)
        ]
        return evaluate_pairs(pairs, alpha=alpha).pck

    # -- persistence ----------------------------------------------------------

    def save(self, path) -> None:
        self._check_fitted()
        save_checkpoint(self.params_, path)

    def load(self, path) -> "GestureGan":
        """Attach parameters from a checkpoint file to this estimator."""
        self.params_ = load_checkpoint(path)
        return self
