import numpy as np
import pytest

from gesturesynth import rotations as rot
from gesturesynth.animation import (
    FingerLimits,
    JointRotationSequence,
    animation_pipeline,
    apply_finger_limits,
    default_finger_limits,
    forward_kinematics,
    retarget,
    smooth,
    solve_roll,
)
from gesturesynth.errors import InvalidInputError
from gesturesynth.skeleton import PoseSequence, SkeletonTopology, default_topology

TOPO = default_topology()


def make_topo(dirs_lengths, name="t"):
    """Chain/branch helper: list of (name, parent, direction, length)."""
    joints = [("root", None)]
    directions, lengths = [], []
    for jname, parent, direction, length in dirs_lengths:
        parent_idx = [n for n, _ in joints].index(parent)
        joints.append((jname, parent_idx))
        d = np.asarray(direction, dtype=float)
        directions.append(d / np.linalg.norm(d))
        lengths.append(length)
    return SkeletonTopology(
        name=name,
        joints=tuple(joints),
        rest_directions=np.asarray(directions),
        rest_lengths=np.asarray(lengths),
        root_index=0,
    )


def identity_rotations(topo, n_frames=1, fps=16.0):
    q = np.tile(rot.IDENTITY, (n_frames, topo.n_joints, 1))
    return JointRotationSequence(q, topo, fps)


def bone_directions(frames, topo):
    """Unit parent-relative bone directions per frame, (T, |bones|, 3)."""
    bones = np.asarray(topo.bones)
    deltas = frames[:, bones[:, 1]] - frames[:, bones[:, 0]]
    return deltas / np.linalg.norm(deltas, axis=2, keepdims=True)


def random_valid_sequence(topo, n_frames, rng):
    """Random rotations pushed through FK: realizable and nondegenerate."""
    q = rot.normalize(rng.normal(size=(n_frames, topo.n_joints, 4)))
    return forward_kinematics(JointRotationSequence(q, topo, 16.0), topo)


class TestForwardKinematics:
    def test_identity_gives_rest_pose(self):
        seq = identity_rotations(TOPO, 3)
        out = forward_kinematics(seq, TOPO)
        rest = TOPO.rest_pose().positions
        for t in range(3):
            np.testing.assert_allclose(out.frames[t], rest, atol=1e-12)

    def test_hand_computed_three_joint_chain(self):
        topo = make_topo([("a", "root", (0, 1, 0), 1.0), ("b", "a", (0, 1, 0), 1.0)])
        q = np.tile(rot.IDENTITY, (1, 3, 1))
        q[0, 1] = rot.from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
        out = forward_kinematics(JointRotationSequence(q, topo, 16.0), topo)
        np.testing.assert_allclose(out.frames[0, 1], [-1.0, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(out.frames[0, 2], [-2.0, 0.0, 0.0], atol=1e-12)


class TestRetarget:
    def test_rest_pose_gives_identity(self):
        rest = TOPO.rest_pose().positions
        seq = PoseSequence(np.tile(rest, (2, 1, 1)), fps=16)
        result = retarget(seq, TOPO)
        np.testing.assert_allclose(
            result.rotations, np.tile(rot.IDENTITY, (2, TOPO.n_joints, 1)), atol=1e-12
        )

    def test_90_degree_swing(self):
        topo = make_topo([("a", "root", (0, 1, 0), 1.0)])
        frames = np.zeros((1, 2, 3))
        frames[0, 1] = [2.0, 0.0, 0.0]  # observed +x, arbitrary length
        result = retarget(PoseSequence(frames, fps=16), topo)
        angle = 2 * np.arccos(np.clip(result.rotations[0, 1, 0], -1, 1))
        assert angle == pytest.approx(np.pi / 2, abs=1e-9)
        fk = forward_kinematics(result, topo)
        np.testing.assert_allclose(fk.frames[0, 1], [1.0, 0.0, 0.0], atol=1e-9)

    def test_direction_round_trip_on_random_sequences(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            seq = random_valid_sequence(TOPO, 4, rng)
            fk = forward_kinematics(retarget(seq, TOPO), TOPO)
            got = bone_directions(fk.frames, TOPO)
            expected = bone_directions(seq.frames, TOPO)
            assert np.max(np.abs(got - expected)) <= 1e-6

    def test_zero_length_bone_reuses_previous(self):
        topo = make_topo([("a", "root", (0, 1, 0), 1.0)])
        frames = np.zeros((3, 2, 3))
        frames[0, 1] = [1.0, 0.0, 0.0]
        frames[1, 1] = [0.0, 0.0, 0.0]  # degenerate
        frames[2, 1] = [0.0, 1.0, 0.0]
        with pytest.warns(UserWarning, match="zero-length"):
            result = retarget(PoseSequence(frames, fps=16), topo)
        np.testing.assert_allclose(result.rotations[1, 1], result.rotations[0, 1])

    def test_unit_norms_preserved(self):
        rng = np.random.default_rng(1)
        seq = random_valid_sequence(TOPO, 6, rng)
        result = retarget(seq, TOPO)
        norms = np.linalg.norm(result.rotations, axis=2)
        assert np.max(np.abs(norms - 1.0)) <= 1e-9


class TestSolveRoll:
    def arm_topo(self):
        return make_topo(
            [
                ("a", "root", (0, 1, 0), 1.0),
                ("b", "a", (1, 0, 0), 0.5),
                ("c", "b", (1, 0, 0), 0.5),
            ]
        )

    def test_recovers_known_twist(self):
        topo = self.arm_topo()
        true_twist = np.pi / 6  # 30 degrees about the a-bone axis (+y)
        q = np.tile(rot.IDENTITY, (1, 4, 1))
        q[0, 1] = rot.from_axis_angle(np.array([0.0, 1.0, 0.0]), true_twist)
        gt_pose = forward_kinematics(JointRotationSequence(q, topo, 16.0), topo)
        recovered = solve_roll(retarget(gt_pose, TOPO := topo), topo)
        q_a = recovered.rotations[0, 1]
        twist = 2 * np.arctan2(q_a[2], q_a[0])  # rotation about +y
        assert abs(twist - true_twist) <= 1e-6
        fk = forward_kinematics(recovered, topo)
        assert np.max(np.abs(fk.frames - gt_pose.frames)) <= 1e-9

    def test_zero_twist_case_unchanged(self):
        rest = TOPO.rest_pose().positions
        seq = PoseSequence(np.tile(rest, (2, 1, 1)), fps=16)
        swung = retarget(seq, TOPO)
        rolled = solve_roll(swung, TOPO)
        np.testing.assert_allclose(rolled.rotations, swung.rotations, atol=1e-15)

    def test_collinear_child_gets_zero_twist(self):
        topo = make_topo(
            [("a", "root", (0, 1, 0), 1.0), ("b", "a", (0, 1, 0), 1.0)]
        )
        q = np.tile(rot.IDENTITY, (1, 3, 1))
        q[0, 1] = rot.from_axis_angle(np.array([0.0, 1.0, 0.0]), 0.4)  # unobservable
        pose = forward_kinematics(JointRotationSequence(q, topo, 16.0), topo)
        recovered = solve_roll(retarget(pose, topo), topo)
        q_a = recovered.rotations[0, 1]
        twist = 2 * np.arctan2(q_a[2], q_a[0])
        assert abs(twist) <= 1e-9

    def test_directions_preserved_on_random_sequences(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            seq = random_valid_sequence(TOPO, 3, rng)
            rolled = solve_roll(retarget(seq, TOPO), TOPO)
            fk = forward_kinematics(rolled, TOPO)
            got = bone_directions(fk.frames, TOPO)
            expected = bone_directions(seq.frames, TOPO)
            assert np.max(np.abs(got - expected)) <= 1e-6


class TestFingerLimits:
    def finger_joint(self):
        return TOPO.joint_index("r_index_2")

    def test_within_limits_is_bitwise_identity(self):
        limits = default_finger_limits(TOPO)
        j = self.finger_joint()
        q = np.tile(rot.IDENTITY, (2, TOPO.n_joints, 1))
        q[:, j] = rot.from_axis_angle(limits.flexion_axes[j], 0.3)
        seq = JointRotationSequence(q, TOPO, 16.0)
        out = apply_finger_limits(seq, limits)
        assert np.array_equal(out.rotations, seq.rotations)

    def test_hyperextension_clamped_to_zero(self):
        limits = default_finger_limits(TOPO)
        j = self.finger_joint()
        q = np.tile(rot.IDENTITY, (1, TOPO.n_joints, 1))
        q[0, j] = rot.from_axis_angle(limits.flexion_axes[j], -0.5)
        out = apply_finger_limits(JointRotationSequence(q, TOPO, 16.0), limits)
        np.testing.assert_allclose(out.rotations[0, j], rot.IDENTITY, atol=1e-12)

    def test_overflexion_clamped_to_max(self):
        defaults = default_finger_limits(TOPO)
        j = self.finger_joint()
        limits = FingerLimits(
            flexion_bounds={j: (0.0, 0.5)},
            flexion_axes={j: defaults.flexion_axes[j]},
            abduction_axes={j: defaults.abduction_axes[j]},
        )
        q = np.tile(rot.IDENTITY, (1, TOPO.n_joints, 1))
        q[0, j] = rot.from_axis_angle(defaults.flexion_axes[j], 1.2)
        out = apply_finger_limits(JointRotationSequence(q, TOPO, 16.0), limits)
        expected = rot.from_axis_angle(defaults.flexion_axes[j], 0.5)
        sign = np.sign(np.sum(out.rotations[0, j] * expected)) or 1.0
        np.testing.assert_allclose(out.rotations[0, j], sign * expected, atol=1e-9)

    def test_idempotent(self):
        limits = default_finger_limits(TOPO)
        rng = np.random.default_rng(3)
        q = rot.normalize(rng.normal(size=(2, TOPO.n_joints, 4)))
        once = apply_finger_limits(JointRotationSequence(q, TOPO, 16.0), limits)
        twice = apply_finger_limits(once, limits)
        np.testing.assert_array_equal(once.rotations, twice.rotations)

    def test_non_finger_joints_untouched(self):
        limits = default_finger_limits(TOPO)
        rng = np.random.default_rng(4)
        q = rot.normalize(rng.normal(size=(2, TOPO.n_joints, 4)))
        out = apply_finger_limits(JointRotationSequence(q, TOPO, 16.0), limits)
        elbow = TOPO.joint_index("r_elbow")
        np.testing.assert_array_equal(out.rotations[:, elbow], q[:, elbow])

    def test_rejects_inverted_bounds(self):
        with pytest.raises(InvalidInputError):
            FingerLimits(flexion_bounds={3: (1.0, 0.5)})


class TestSmooth:
    def test_window_one_is_identity(self):
        rng = np.random.default_rng(5)
        q = rot.normalize(rng.normal(size=(4, TOPO.n_joints, 4)))
        seq = JointRotationSequence(q, TOPO, 16.0)
        assert smooth(seq, 1) is seq

    def test_constant_sequence_unchanged(self):
        q0 = rot.normalize(np.random.default_rng(6).normal(size=4))
        q = np.tile(q0, (6, TOPO.n_joints, 1))
        out = smooth(JointRotationSequence(q, TOPO, 16.0), 5)
        np.testing.assert_allclose(out.rotations, q, atol=1e-15)

    def test_jitter_reduced_at_least_3x(self):
        topo = make_topo([("a", "root", (0, 1, 0), 1.0)])
        base = rot.from_axis_angle(np.array([0.0, 0.0, 1.0]), 0.7)
        delta = np.radians(1.0)
        q = np.zeros((20, 2, 4))
        q[:, 0] = rot.IDENTITY
        for t in range(20):
            jitter = rot.from_axis_angle(np.array([1.0, 0.0, 0.0]), delta * (-1) ** t)
            q[t, 1] = rot.multiply(base, jitter)
        out = smooth(JointRotationSequence(q, topo, 16.0), 5)

        def deviation(quat):
            rel = rot.multiply(rot.conjugate(base), quat)
            return 2 * np.arccos(np.clip(abs(rel[0]), -1, 1))

        before = max(deviation(q[t, 1]) for t in range(20))
        # full windows: alternating signs cancel to 1/5 of the jitter;
        # truncated edge windows (3 members) reach exactly 1/3
        interior = max(deviation(out.rotations[t, 1]) for t in range(2, 18))
        assert interior <= before / 3.0
        edges = max(deviation(out.rotations[t, 1]) for t in (0, 19))
        assert edges <= before / 2.99

    def test_smooth_matches_direct_average_oracle(self):
        rng = np.random.default_rng(11)
        topo = make_topo([("a", "root", (0, 1, 0), 1.0)])
        q = rot.normalize(rng.normal(size=(9, 2, 4)))
        out = smooth(JointRotationSequence(q, topo, 16.0), 3)
        for t in range(9):
            members = [q[s, 1] for s in range(max(0, t - 1), min(9, t + 2))]
            aligned = [m if float(m @ q[t, 1]) >= 0 else -m for m in members]
            expected = np.mean(aligned, axis=0)
            expected /= np.linalg.norm(expected)
            np.testing.assert_allclose(out.rotations[t, 1], expected, atol=1e-12)

    def test_even_window_rejected(self):
        seq = identity_rotations(TOPO, 4)
        with pytest.raises(InvalidInputError):
            smooth(seq, 4)

    def test_per_joint_independence(self):
        rng = np.random.default_rng(7)
        topo2 = make_topo([("a", "root", (0, 1, 0), 1.0), ("b", "root", (1, 0, 0), 1.0)])
        q = rot.normalize(rng.normal(size=(8, 3, 4)))
        together = smooth(JointRotationSequence(q, topo2, 16.0), 3)
        topo1 = make_topo([("a", "root", (0, 1, 0), 1.0)])
        for j in range(3):
            single = np.stack([q[:, 0], q[:, j]], axis=1) if j else q[:, :2]
            alone = smooth(JointRotationSequence(single, topo1, 16.0), 3)
            np.testing.assert_allclose(
                together.rotations[:, j], alone.rotations[:, 1 if j else 0], atol=1e-15
            )


class TestPipeline:
    def test_full_pipeline_preserves_unit_norms(self):
        rng = np.random.default_rng(8)
        seq = random_valid_sequence(TOPO, 8, rng)
        out = animation_pipeline(seq, TOPO)
        norms = np.linalg.norm(out.rotations, axis=2)
        assert np.max(np.abs(norms - 1.0)) <= 1e-9
