"""Keypoints to joint rotations: retargeting, roll recovery, limits, smoothing.

Rotation convention: each non-root joint stores one local unit quaternion
that orients its *own* bone (the bone arriving from its parent), expressed
relative to the parent's accumulated frame. Forward kinematics therefore
places joint ``j`` at ``parent + (F_parent * q_j) . (rest_dir_j * len_j)``
with ``F_j = F_parent * q_j``. This makes every bone independently
aimable, so retargeting reproduces all observed bone directions exactly
even at branch joints (a single shared rotation could not).

Retargeting uses only bone directions; source bone lengths are discarded.
The shortest-arc swing fixes pitch and yaw per bone, and the roll (twist
about the bone axis) is recovered afterwards by a closed-form 1-DOF
optimization per joint, root to leaf, aligning the predicted directions of
the children's bones with their observed directions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rotations as rot
from .errors import InvalidInputError, ShapeError
from .skeleton import PoseSequence, SkeletonTopology
from .validation import freeze

UNIT_TOL = 1e-9
_DEGENERATE = 1e-9


@dataclass(frozen=True)
class JointRotationSequence:
    """Per-frame local unit quaternions, shape (T, J, 4), scalar first."""

    rotations: np.ndarray
    topo: SkeletonTopology
    fps: float

    def __post_init__(self):
        q = np.asarray(self.rotations, dtype=np.float64)
        if q.ndim != 3 or q.shape[2] != 4:
            raise ShapeError(f"rotations: expected (T, J, 4), got {q.shape}")
        if q.shape[1] != self.topo.n_joints:
            raise ShapeError(
                f"rotations have {q.shape[1]} joints, topology has {self.topo.n_joints}"
            )
        if not np.all(np.isfinite(q)):
            raise InvalidInputError("rotations contain non-finite values")
        norms = np.linalg.norm(q, axis=2)
        if np.max(np.abs(norms - 1.0)) > UNIT_TOL:
            raise InvalidInputError("rotations must be unit quaternions")
        object.__setattr__(self, "rotations", freeze(q))
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.rotations.shape[0]

    def replace_rotations(self, q: np.ndarray) -> "JointRotationSequence":
        return JointRotationSequence(q, self.topo, self.fps)


def _bone_rest_direction(topo: SkeletonTopology, joint: int) -> np.ndarray:
    """Rest direction of the bone arriving at ``joint``."""
    return topo.rest_directions[topo.incoming_bone(joint)]


def _cumulative_frames(seq: JointRotationSequence) -> np.ndarray:
    """Accumulated world frames F_j per joint, shape (T, J, 4)."""
    topo = seq.topo
    frames = np.zeros_like(seq.rotations)
    for j in topo.topological_order():
        parent = topo.parents[j]
        if parent is None:
            frames[:, j] = seq.rotations[:, j]
        else:
            frames[:, j] = rot.multiply(frames[:, parent], seq.rotations[:, j])
    return frames


def forward_kinematics(seq: JointRotationSequence, topo: SkeletonTopology) -> PoseSequence:
    """Joint positions from local rotations and rest offsets, root at origin."""
    if topo.n_joints != seq.topo.n_joints:
        raise ShapeError("rotation sequence and topology joint counts differ")
    frames = _cumulative_frames(seq)
    positions = np.zeros((seq.n_frames, topo.n_joints, 3))
    for j in topo.topological_order():
        parent = topo.parents[j]
        if parent is None:
            continue
        bone = topo.incoming_bone(j)
        offset = topo.rest_directions[bone] * topo.rest_lengths[bone]
        positions[:, j] = positions[:, parent] + rot.rotate(frames[:, j], offset)
    return PoseSequence(positions, fps=seq.fps)


def retarget(seq: PoseSequence, topo: SkeletonTopology) -> JointRotationSequence:
    """Shortest-arc swing per bone; source bone lengths are discarded.

    Zero-length observed bones have no direction: those frames reuse the
    previous frame's rotation (identity on the first frame) and a warning
    reports the count.
    """
    if seq.n_joints != topo.n_joints:
        raise ShapeError(
            f"sequence has {seq.n_joints} joints, topology {topo.n_joints}"
        )
    n_frames = seq.n_frames
    quats = np.zeros((n_frames, topo.n_joints, 4))
    quats[:, :, 0] = 1.0
    world = np.zeros((n_frames, topo.n_joints, 4))
    degenerate_count = 0
    for j in topo.topological_order():
        parent = topo.parents[j]
        if parent is None:
            world[:, j] = quats[:, j]
            continue
        observed = seq.frames[:, j] - seq.frames[:, parent]
        lengths = np.linalg.norm(observed, axis=1)
        good = lengths > _DEGENERATE
        rest_dir = _bone_rest_direction(topo, j)
        local = np.tile(rot.IDENTITY, (n_frames, 1))
        if good.any():
            directions = observed[good] / lengths[good, None]
            parent_frame = world[good, parent]
            target_local = rot.rotate(rot.conjugate(parent_frame), directions)
            local[good] = rot.shortest_arc(np.broadcast_to(rest_dir, target_local.shape), target_local)
        if not good.all():
            degenerate_count += int(np.count_nonzero(~good))
            for t in np.flatnonzero(~good):
                local[t] = local[t - 1] if t > 0 else rot.IDENTITY
        quats[:, j] = rot.hemisphere_align(local)
        world[:, j] = rot.multiply(world[:, parent], quats[:, j])
    if degenerate_count:
        warnings.warn(
            f"retarget: {degenerate_count} zero-length bone frame(s), reused previous rotations",
            stacklevel=2,
        )
    return JointRotationSequence(rot.normalize(quats), topo, seq.fps)


def solve_roll(seq: JointRotationSequence, topo: SkeletonTopology) -> JointRotationSequence:
    """Recover twist about each bone axis from the children's bone directions.

    Per joint with children, root to leaf: rebuild the swing against the
    (already re-twisted) parent frame, then choose the twist angle that
    maximizes alignment of the children's predicted rest-frame directions
    with their observed directions -- a closed-form atan2 per joint.
    Joints whose children are collinear with the bone axis, and leaves,
    receive zero twist.
    """
    old_world = _cumulative_frames(seq)
    n_frames = seq.n_frames
    observed: dict[int, np.ndarray] = {}
    for j in topo.topological_order():
        if topo.parents[j] is not None:
            observed[j] = rot.rotate(old_world[:, j], _bone_rest_direction(topo, j))

    new_q = np.array(seq.rotations, copy=True)
    new_world = np.zeros_like(old_world)
    for j in topo.topological_order():
        parent = topo.parents[j]
        if parent is None:
            new_world[:, j] = new_q[:, j]
            continue
        rest_dir = _bone_rest_direction(topo, j)
        target_local = rot.rotate(rot.conjugate(new_world[:, parent]), observed[j])
        swing = rot.shortest_arc(np.broadcast_to(rest_dir, target_local.shape), target_local)
        children = topo.children(j)
        if children:
            pre_world = rot.multiply(new_world[:, parent], swing)
            axis = observed[j]  # world bone direction, unit
            a_coef = np.zeros(n_frames)
            b_coef = np.zeros(n_frames)
            for child in children:
                predicted = rot.rotate(pre_world, _bone_rest_direction(topo, child))
                target = observed[child]
                axial_p = np.sum(axis * predicted, axis=1)
                axial_t = np.sum(axis * target, axis=1)
                a_coef += np.sum(predicted * target, axis=1) - axial_p * axial_t
                b_coef += np.sum(np.cross(axis, predicted) * target, axis=1)
            magnitude = np.hypot(a_coef, b_coef)
            twist_angle = np.where(magnitude > _DEGENERATE, np.arctan2(b_coef, a_coef), 0.0)
            twist = rot.from_axis_angle(np.broadcast_to(rest_dir, (n_frames, 3)), twist_angle)
            local = rot.multiply(swing, twist)
        else:
            local = swing
        new_q[:, j] = rot.hemisphere_align(local)
        new_world[:, j] = rot.multiply(new_world[:, parent], new_q[:, j])
    return seq.replace_rotations(rot.normalize(new_q))


# ---------------------------------------------------------------------------
# Anatomical finger limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FingerLimits:
    """Per finger-joint angle bounds and decomposition axes (parent frame)."""

    flexion_bounds: dict[int, tuple[float, float]]
    abduction_bounds: dict[int, tuple[float, float]] = field(default_factory=dict)
    flexion_axes: dict[int, np.ndarray] = field(default_factory=dict)
    abduction_axes: dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for j, (lo, hi) in self.flexion_bounds.items():
            if lo > hi:
                raise InvalidInputError(f"joint {j}: flexion min {lo} > max {hi}")
        for j, (lo, hi) in self.abduction_bounds.items():
            if lo > hi:
                raise InvalidInputError(f"joint {j}: abduction min {lo} > max {hi}")


DEFAULT_FLEXION = (0.0, np.pi / 2)
DEFAULT_ABDUCTION = (-0.35, 0.35)


def default_finger_limits(topo: SkeletonTopology) -> FingerLimits:
    """Flexion [0, pi/2] per phalanx; abduction bounds on base segments.

    Finger joints are the descendants of joints whose name ends in
    ``_wrist``. The flexion axis is perpendicular to the bone and the palm
    normal (estimated from the spread of the finger-base rest directions);
    the abduction axis is the palm normal itself.
    """
    flexion_bounds: dict[int, tuple[float, float]] = {}
    abduction_bounds: dict[int, tuple[float, float]] = {}
    flexion_axes: dict[int, np.ndarray] = {}
    abduction_axes: dict[int, np.ndarray] = {}
    wrists = [j for j, (name, _) in enumerate(topo.joints) if name.endswith("_wrist")]
    for wrist in wrists:
        bases = topo.children(wrist)
        if len(bases) >= 2:
            first = _bone_rest_direction(topo, bases[0])
            last = _bone_rest_direction(topo, bases[-1])
            normal = np.cross(first, last)
        else:
            normal = np.zeros(3)
        if np.linalg.norm(normal) < 1e-6:
            normal = np.array([0.0, 0.0, 1.0])
        normal = normal / np.linalg.norm(normal)
        for j in topo.descendants(wrist):
            bone = _bone_rest_direction(topo, j)
            axis = np.cross(normal, bone)
            if np.linalg.norm(axis) < 1e-6:
                axis = rot._perpendicular(bone)
            axis = axis / np.linalg.norm(axis)
            flexion_bounds[j] = DEFAULT_FLEXION
            flexion_axes[j] = axis
            abduction_axes[j] = normal
            if topo.parents[j] == wrist:
                abduction_bounds[j] = DEFAULT_ABDUCTION
    return FingerLimits(flexion_bounds, abduction_bounds, flexion_axes, abduction_axes)


def _decompose(q: np.ndarray, flexion_axis, abduction_axis, bone_axis):
    """Angles (abduction, flexion, twist) with q = R_a(b) R_f(a) R_bone(t).

    Flexion is read in the principal branch [-pi/2, pi/2]; rotations flexed
    beyond that are represented with wrapped abduction/twist instead.
    """
    basis = np.stack([flexion_axis, bone_axis, abduction_axis], axis=1)  # columns x,y,z
    m = basis.T @ rot.to_matrix(q) @ basis
    flexion = np.arcsin(np.clip(m[2, 1], -1.0, 1.0))
    twist = np.arctan2(-m[2, 0], m[2, 2])
    abduction = np.arctan2(-m[0, 1], m[1, 1])
    return abduction, flexion, twist


def _recompose(abduction, flexion, twist, flexion_axis, abduction_axis, bone_axis):
    qa = rot.from_axis_angle(abduction_axis, abduction)
    qf = rot.from_axis_angle(flexion_axis, flexion)
    qt = rot.from_axis_angle(bone_axis, twist)
    return rot.multiply(rot.multiply(qa, qf), qt)


_CLAMP_TOL = 1e-12


def apply_finger_limits(
    seq: JointRotationSequence, limits: FingerLimits
) -> JointRotationSequence:
    """Clamp finger flexion/abduction angles; untouched joints keep their bits."""
    topo = seq.topo
    q = np.array(seq.rotations, copy=True)
    for j, (lo, hi) in limits.flexion_bounds.items():
        flexion_axis = limits.flexion_axes[j]
        abduction_axis = limits.abduction_axes[j]
        bone_axis = np.cross(abduction_axis, flexion_axis)
        bone_axis /= np.linalg.norm(bone_axis)
        ab_lo, ab_hi = limits.abduction_bounds.get(j, (-np.inf, np.inf))
        for t in range(seq.n_frames):
            abduction, flexion, twist = _decompose(
                q[t, j], flexion_axis, abduction_axis, bone_axis
            )
            new_flexion = min(max(flexion, lo), hi)
            new_abduction = min(max(abduction, ab_lo), ab_hi)
            if (
                abs(new_flexion - flexion) <= _CLAMP_TOL
                and abs(new_abduction - abduction) <= _CLAMP_TOL
            ):
                continue
            replacement = _recompose(
                new_abduction, new_flexion, twist, flexion_axis, abduction_axis, bone_axis
            )
            q[t, j] = replacement / np.linalg.norm(replacement)
    return seq.replace_rotations(q)


def smooth(seq: JointRotationSequence, window: int = 5) -> JointRotationSequence:
    """Sliding-window quaternion average per joint; edges use truncated windows.

    Window members are hemisphere-aligned to the center frame before the
    component-wise mean, and the mean is renormalized.
    """
    if window < 1 or window % 2 == 0:
        raise InvalidInputError(f"window must be odd and >= 1, got {window}")
    if window == 1:
        return seq
    half = window // 2
    q = seq.rotations
    out = np.zeros_like(q)
    for t in range(seq.n_frames):
        lo = max(0, t - half)
        hi = min(seq.n_frames, t + half + 1)
        chunk = np.array(q[lo:hi], copy=True)
        center = q[t]
        signs = np.where(np.sum(chunk * center, axis=2) < 0, -1.0, 1.0)
        chunk *= signs[:, :, None]
        out[t] = chunk.mean(axis=0)
    return seq.replace_rotations(rot.normalize(out))


def animation_pipeline(
    seq: PoseSequence,
    topo: SkeletonTopology,
    limits: FingerLimits | None = None,
    smoothing_window: int = 5,
) -> JointRotationSequence:
    """retarget -> solve_roll -> finger limits -> smooth."""
    if limits is None:
        limits = default_finger_limits(topo)
    rotations = retarget(seq, topo)
    rotations = solve_roll(rotations, topo)
    rotations = apply_finger_limits(rotations, limits)
    return smooth(rotations, smoothing_window)
