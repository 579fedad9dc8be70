import numpy as np
import pytest

from gesturesynth import rotations as rot
from gesturesynth.animation import (
    JointRotationSequence,
    forward_kinematics,
    retarget,
    solve_roll,
)
from gesturesynth.bvh import export_bvh, parse_bvh
from gesturesynth.errors import InvalidInputError
from gesturesynth.skeleton import default_topology

TOPO = default_topology()


def identity_sequence(n_frames=2):
    q = np.tile(rot.IDENTITY, (n_frames, TOPO.n_joints, 1))
    return JointRotationSequence(q, TOPO, 16.0)


def random_sequence(seed, n_frames=4):
    rng = np.random.default_rng(seed)
    q = rot.normalize(rng.normal(size=(n_frames, TOPO.n_joints, 4)))
    return JointRotationSequence(q, TOPO, 16.0)


class TestExport:
    def test_identity_animation_has_zero_channels(self, tmp_path):
        path = tmp_path / "rest.bvh"
        export_bvh(identity_sequence(), TOPO, path)
        motion = path.read_text().split("MOTION")[1].strip().splitlines()
        for row in motion[2:]:
            assert all(float(v) == 0.0 for v in row.split())

    def test_structure(self, tmp_path):
        path = tmp_path / "rest.bvh"
        export_bvh(identity_sequence(3), TOPO, path)
        text = path.read_text()
        assert text.startswith("HIERARCHY\nROOT root")
        assert "CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation" in text
        assert text.count("CHANNELS 3 Zrotation Yrotation Xrotation") == TOPO.n_joints - 1
        assert "Frames: 3" in text
        assert "End Site" in text

    def test_offsets_in_centimeters(self, tmp_path):
        path = tmp_path / "rest.bvh"
        export_bvh(identity_sequence(), TOPO, path)
        parsed = parse_bvh(path)
        neck = parsed.joint_names.index("neck")
        np.testing.assert_allclose(parsed.offsets_cm[neck], [0.0, 55.0, 0.0], atol=1e-6)


class TestRoundTrip:
    def test_counts_and_frame_time_exact(self, tmp_path):
        seq = random_sequence(0, n_frames=5)
        path = tmp_path / "anim.bvh"
        export_bvh(seq, TOPO, path)
        parsed = parse_bvh(path)
        assert parsed.n_joints == TOPO.n_joints
        assert parsed.n_frames == 5
        assert parsed.frame_time == 1.0 / 16.0

    def test_fk_agrees_within_tolerance(self, tmp_path):
        seq = random_sequence(1)
        path = tmp_path / "anim.bvh"
        export_bvh(seq, TOPO, path)
        parsed = parse_bvh(path)
        back = JointRotationSequence(
            rot.normalize(parsed.rotations_for(TOPO)), TOPO, 1.0 / parsed.frame_time
        )
        original_fk = forward_kinematics(seq, TOPO)
        parsed_fk = forward_kinematics(back, TOPO)
        assert np.max(np.abs(original_fk.frames - parsed_fk.frames)) <= 1e-3

    def test_retargeted_pipeline_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        q = rot.normalize(rng.normal(size=(3, TOPO.n_joints, 4)))
        pose = forward_kinematics(JointRotationSequence(q, TOPO, 16.0), TOPO)
        rotations = solve_roll(retarget(pose, TOPO), TOPO)
        path = tmp_path / "anim.bvh"
        export_bvh(rotations, TOPO, path)
        parsed = parse_bvh(path)
        back = JointRotationSequence(
            rot.normalize(parsed.rotations_for(TOPO)), TOPO, 1.0 / parsed.frame_time
        )
        a = forward_kinematics(rotations, TOPO).frames
        b = forward_kinematics(back, TOPO).frames
        assert np.max(np.abs(a - b)) <= 1e-3


class TestParseErrors:
    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bvh"
        path.write_text("NOT A BVH FILE\n")
        with pytest.raises(InvalidInputError):
            parse_bvh(path)

    def test_rejects_unsupported_channel_order(self, tmp_path):
        path = tmp_path / "zxy.bvh"
        path.write_text(
            "HIERARCHY\nROOT a\n{\n\tOFFSET 0 0 0\n"
            "\tCHANNELS 3 Zrotation Xrotation Yrotation\n"
            "\tEnd Site\n\t{\n\t\tOFFSET 0 0 1\n\t}\n}\n"
            "MOTION\nFrames: 1\nFrame Time: 0.0625\n0 0 0\n"
        )
        with pytest.raises(InvalidInputError, match="channel order"):
            parse_bvh(path)
