"""Quantitative evaluation: keypoint accuracy and motion statistics.

PCK counts a predicted keypoint as correct when its Euclidean error is
below ``alpha`` times a per-frame reference scale, here the largest
axis-aligned extent of the ground-truth keypoint bounding box (the closest
3-D analogue of the image-based bounding-box normalization). Motion scale
is the mean per-frame keypoint displacement; the ratio of generated to
reference motion scale quantifies mean-pose collapse (1 means
motion-matched, much less than 1 means collapsed).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, InsufficientFramesError, ShapeError, UndefinedMetricError
from .skeleton import PoseSequence, motion

DEFAULT_ALPHA = 0.2


@dataclass(frozen=True)
class EvalReport:
    pck: float
    alpha: float
    per_joint_pck: tuple[float, ...]
    motion_scale: float
    n_sequences: int
    degenerate_frames: int = 0

    def to_dict(self) -> dict:
        return {
            "pck": self.pck,
            "alpha": self.alpha,
            "per_joint_pck": list(self.per_joint_pck),
            "motion_scale": self.motion_scale,
            "n_sequences": self.n_sequences,
            "degenerate_frames": self.degenerate_frames,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _frame_scales(gt: np.ndarray) -> np.ndarray:
    """Per-frame reference scale: max bounding-box extent over x, y, z."""
    return (gt.max(axis=1) - gt.min(axis=1)).max(axis=1)


def _pck_counts(
    pred: np.ndarray, gt: np.ndarray, alpha: float
) -> tuple[np.ndarray, np.ndarray, int]:
    """(correct-per-joint, counted-frames-per-joint, skipped frames)."""
    scales = _frame_scales(gt)
    valid = scales > 0.0
    skipped = int(np.count_nonzero(~valid))
    if not valid.any():
        return np.zeros(pred.shape[1]), np.zeros(pred.shape[1]), skipped
    errors = np.linalg.norm(pred[valid] - gt[valid], axis=2)
    correct = errors < alpha * scales[valid, None]
    n_frames = int(np.count_nonzero(valid))
    return correct.sum(axis=0), np.full(pred.shape[1], n_frames), skipped


def pck(pred: PoseSequence, gt: PoseSequence, alpha: float = DEFAULT_ALPHA) -> float:
    """Fraction of keypoints within alpha times the ground-truth bbox extent.

    Frames whose ground-truth keypoints are all coincident have no scale
    and are skipped; if every frame is degenerate the metric is undefined.
    """
    if pred.frames.shape != gt.frames.shape:
        raise ShapeError(
            f"pred {pred.frames.shape} and gt {gt.frames.shape} differ"
        )
    if alpha <= 0:
        raise InvalidInputError(f"alpha must be > 0, got {alpha}")
    correct, counted, skipped = _pck_counts(pred.frames, gt.frames, alpha)
    if counted.sum() == 0:
        raise UndefinedMetricError("all frames degenerate (zero reference scale)")
    if skipped:
        warnings.warn(f"pck: skipped {skipped} degenerate frame(s)", stacklevel=2)
    return float(correct.sum() / counted.sum())


def motion_scale(seq: PoseSequence) -> float:
    """Mean Euclidean per-frame displacement over all joints (meters)."""
    if seq.n_frames < 2:
        raise InsufficientFramesError(
            f"motion_scale needs at least 2 frames, got {seq.n_frames}"
        )
    return float(np.linalg.norm(motion(seq), axis=2).mean())


def collapse_ratio(model_outputs, dataset_gestures) -> float:
    """Mean model motion scale over mean dataset motion scale."""
    if not model_outputs or not dataset_gestures:
        raise InvalidInputError("collapse_ratio needs non-empty sequence sets")
    model_motion = float(np.mean([motion_scale(s) for s in model_outputs]))
    data_motion = float(np.mean([motion_scale(s) for s in dataset_gestures]))
    if data_motion == 0.0:
        raise UndefinedMetricError("dataset gestures have zero motion")
    return model_motion / data_motion


def evaluate_pairs(
    pairs: list[tuple[PoseSequence, PoseSequence]], alpha: float = DEFAULT_ALPHA
) -> EvalReport:
    """Aggregate report over (predicted, ground-truth) sequence pairs."""
    if not pairs:
        raise InvalidInputError("no sequences to evaluate")
    n_joints = pairs[0][1].n_joints
    correct = np.zeros(n_joints)
    counted = np.zeros(n_joints)
    skipped = 0
    motions = []
    for pred, gt in pairs:
        if pred.frames.shape != gt.frames.shape:
            raise ShapeError(
                f"pred {pred.frames.shape} and gt {gt.frames.shape} differ"
            )
        c, n, s = _pck_counts(pred.frames, gt.frames, alpha)
        correct += c
        counted += n
        skipped += s
        motions.append(motion_scale(pred))
    if counted.sum() == 0:
        raise UndefinedMetricError("all frames degenerate (zero reference scale)")
    if skipped:
        warnings.warn(f"evaluate: skipped {skipped} degenerate frame(s)", stacklevel=2)
    per_joint = tuple((correct / np.maximum(counted, 1)).tolist())
    return EvalReport(
        pck=float(correct.sum() / counted.sum()),
        alpha=alpha,
        per_joint_pck=per_joint,
        motion_scale=float(np.mean(motions)),
        n_sequences=len(pairs),
        degenerate_frames=skipped,
    )


def predict_sample(params, mel_values: np.ndarray, fps: float) -> PoseSequence:
    """Run the generator on one conditioning image and shape the output."""
    from .networks import generator_forward

    flat = generator_forward(params, mel_values)
    n_frames, out_dims = flat.shape
    if out_dims % 3:
        raise ShapeError(f"generator output dims {out_dims} not divisible by 3")
    return PoseSequence(flat.reshape(n_frames, out_dims // 3, 3), fps=fps)


def evaluate(
    params,
    samples,
    alpha: float = DEFAULT_ALPHA,
    use_ground_truth: bool = False,
) -> EvalReport:
    """Generate poses for every sample and score them against ground truth.

    ``use_ground_truth`` scores the targets against themselves instead,
    a wiring check that must yield PCK 1.0.
    """
    from .errors import CompatibilityError

    if not samples:
        raise InvalidInputError("no samples to evaluate")
    expected = samples[0].gesture.n_joints * 3
    if params.gen_config.out_dims != expected:
        raise CompatibilityError(
            f"checkpoint emits {params.gen_config.out_dims} dims but data has "
            f"{expected} (joints x 3)"
        )
    pairs = []
    for sample in samples:
        if use_ground_truth:
            pred = sample.gesture
        else:
            pred = predict_sample(params, sample.speech.values, sample.gesture.fps)
        pairs.append((pred, sample.gesture))
    return evaluate_pairs(pairs, alpha=alpha)


def write_per_sequence_csv(
    pairs: list[tuple[PoseSequence, PoseSequence]], alpha: float, path
) -> None:
    """Optional per-sequence rows for plotting."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sequence", "pck", "motion_scale"])
        for i, (pred, gt) in enumerate(pairs):
            writer.writerow([i, pck(pred, gt, alpha), motion_scale(pred)])


def save_report(report: EvalReport, path) -> None:
    Path(path).write_text(report.to_json() + "\n")
