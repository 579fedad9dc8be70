import math

import numpy as np
import pytest

from gesturesynth.errors import (
    InsufficientFramesError,
    InvalidInputError,
    ShapeError,
    UndefinedMetricError,
)
from gesturesynth.evaluation import (
    EvalReport,
    collapse_ratio,
    evaluate,
    evaluate_pairs,
    motion_scale,
    pck,
)
from gesturesynth.skeleton import PoseSequence


def pck_loop_oracle(pred, gt, alpha):
    """Per-keypoint loop with explicit frame scales; skips degenerate frames."""
    correct = 0
    counted = 0
    for t in range(gt.shape[0]):
        spans = []
        for axis in range(3):
            values = [gt[t, k, axis] for k in range(gt.shape[1])]
            spans.append(max(values) - min(values))
        scale = max(spans)
        if scale == 0.0:
            continue
        for k in range(gt.shape[1]):
            err = math.sqrt(sum((pred[t, k, a] - gt[t, k, a]) ** 2 for a in range(3)))
            counted += 1
            if err < alpha * scale:
                correct += 1
    return correct / counted


def motion_scale_loop_oracle(frames):
    total = 0.0
    count = 0
    for t in range(frames.shape[0] - 1):
        for k in range(frames.shape[1]):
            step = frames[t + 1, k] - frames[t, k]
            total += math.sqrt(float(step @ step))
            count += 1
    return total / count


class TestPck:
    def test_perfect_prediction(self):
        rng = np.random.default_rng(0)
        frames = rng.normal(size=(4, 5, 3))
        seq = PoseSequence(frames, fps=16)
        assert pck(seq, seq, 0.2) == 1.0

    def test_two_joint_half_correct(self):
        gt = np.zeros((1, 2, 3))
        gt[0, 1, 0] = 1.0  # spans 1 m, so threshold is alpha * 1
        pred = gt.copy()
        pred[0, 0, 1] = 0.1  # error 0.1 < 0.2 -> correct
        pred[0, 1, 1] = 0.3  # error 0.3 > 0.2 -> incorrect
        result = pck(PoseSequence(pred, fps=16), PoseSequence(gt, fps=16), 0.2)
        assert result == 0.5

    def test_matches_loop_oracle_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n_frames = int(rng.integers(1, 6))
            n_joints = int(rng.integers(2, 7))
            gt = rng.normal(size=(n_frames, n_joints, 3))
            pred = gt + rng.normal(scale=0.3, size=gt.shape)
            alpha = float(rng.uniform(0.05, 0.5))
            expected = pck_loop_oracle(pred, gt, alpha)
            got = pck(PoseSequence(pred, fps=16), PoseSequence(gt, fps=16), alpha)
            assert got == expected

    def test_translation_invariance(self):
        rng = np.random.default_rng(2)
        gt = rng.normal(size=(3, 4, 3))
        pred = gt + rng.normal(scale=0.2, size=gt.shape)
        shift = np.array([5.0, -3.0, 1.0])
        base = pck(PoseSequence(pred, fps=16), PoseSequence(gt, fps=16), 0.2)
        moved = pck(
            PoseSequence(pred + shift, fps=16), PoseSequence(gt + shift, fps=16), 0.2
        )
        assert base == moved

    def test_monotone_in_single_error(self):
        gt = np.zeros((1, 3, 3))
        gt[0, 1, 0] = 1.0
        gt[0, 2, 0] = 2.0
        previous = None
        for displacement in (0.0, 0.2, 0.5, 1.0):
            pred = gt.copy()
            pred[0, 1, 1] = displacement
            value = pck(PoseSequence(pred, fps=16), PoseSequence(gt, fps=16), 0.2)
            if previous is not None:
                assert value <= previous
            previous = value

    def test_degenerate_frames_skipped(self):
        gt = np.zeros((2, 3, 3))
        gt[1, 1, 0] = 1.0  # frame 0 degenerate, frame 1 fine
        pred = gt.copy()
        with pytest.warns(UserWarning, match="degenerate"):
            value = pck(PoseSequence(pred, fps=16), PoseSequence(gt, fps=16), 0.2)
        assert value == 1.0

    def test_all_degenerate_is_undefined(self):
        gt = PoseSequence(np.zeros((2, 3, 3)), fps=16)
        with pytest.raises(UndefinedMetricError):
            pck(gt, gt, 0.2)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            pck(
                PoseSequence(np.zeros((2, 3, 3)), fps=16),
                PoseSequence(np.zeros((2, 4, 3)), fps=16),
                0.2,
            )


class TestMotionScale:
    def test_static_sequence(self):
        assert motion_scale(PoseSequence(np.ones((5, 2, 3)), fps=16)) == 0.0

    def test_single_moving_joint(self):
        frames = np.zeros((3, 2, 3))
        frames[1, 0, 0] = 0.02
        frames[2, 0, 0] = 0.04
        assert motion_scale(PoseSequence(frames, fps=16)) == pytest.approx(0.01)

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        frames = rng.normal(size=(6, 4, 3))
        got = motion_scale(PoseSequence(frames, fps=16))
        assert abs(got - motion_scale_loop_oracle(frames)) <= 1e-12

    def test_needs_two_frames(self):
        with pytest.raises(InsufficientFramesError):
            motion_scale(PoseSequence(np.zeros((1, 2, 3)), fps=16))


class TestCollapseRatio:
    def test_identity_is_one(self):
        rng = np.random.default_rng(4)
        seqs = [PoseSequence(rng.normal(size=(5, 3, 3)), fps=16) for _ in range(3)]
        assert collapse_ratio(seqs, seqs) == pytest.approx(1.0)

    def test_frozen_model_is_zero(self):
        rng = np.random.default_rng(5)
        data = [PoseSequence(rng.normal(size=(5, 3, 3)), fps=16) for _ in range(3)]
        frozen = [PoseSequence(np.ones((5, 3, 3)), fps=16) for _ in range(3)]
        assert collapse_ratio(frozen, data) == 0.0

    def test_scale_covariance(self):
        rng = np.random.default_rng(6)
        outputs = [PoseSequence(rng.normal(size=(5, 3, 3)), fps=16) for _ in range(3)]
        data = [PoseSequence(rng.normal(size=(5, 3, 3)), fps=16) for _ in range(3)]
        base = collapse_ratio(outputs, data)
        scaled = collapse_ratio(
            [PoseSequence(3.0 * s.frames, fps=16) for s in outputs],
            [PoseSequence(3.0 * s.frames, fps=16) for s in data],
        )
        assert scaled == pytest.approx(base, rel=1e-12)

    def test_zero_dataset_motion_undefined(self):
        static = [PoseSequence(np.ones((4, 2, 3)), fps=16)]
        with pytest.raises(UndefinedMetricError):
            collapse_ratio(static, static)


class TestEvaluate:
    def make_samples(self, n=3):
        from gesturesynth.data import synth_unimodal
        from gesturesynth.skeleton import default_topology

        topo = default_topology()
        return topo, synth_unimodal(n, seed=1, topo=topo)

    def make_params(self, topo):
        from gesturesynth.networks import DiscriminatorConfig, GeneratorConfig, init_params

        gen = GeneratorConfig(
            mel_bins=64,
            audio_frames=512,
            pose_frames=64,
            out_dims=topo.n_joints * 3,
            audio_channels=(8, 8, 8),
            enc_channels=(8,),
            dec_channels=(8,),
            depth=1,
        )
        return init_params(gen, DiscriminatorConfig(in_dims=topo.n_joints * 3, channels=(8,), strides=(2,)), 0)

    def test_ground_truth_harness_gives_one(self):
        topo, samples = self.make_samples()
        params = self.make_params(topo)
        report = evaluate(params, samples, alpha=0.2, use_ground_truth=True)
        assert report.pck == 1.0
        assert all(p == 1.0 for p in report.per_joint_pck)

    def test_report_ranges(self):
        topo, samples = self.make_samples()
        params = self.make_params(topo)
        report = evaluate(params, samples, alpha=0.2)
        assert 0.0 <= report.pck <= 1.0
        assert all(0.0 <= p <= 1.0 for p in report.per_joint_pck)
        assert report.motion_scale >= 0.0
        assert report.n_sequences == 3

    def test_incompatible_checkpoint_rejected(self):
        from gesturesynth.errors import CompatibilityError

        topo, samples = self.make_samples(1)
        params = self.make_params(topo)
        bad = [s for s in samples]
        # shrink the data joint count by rebuilding a sample with fewer joints
        from gesturesynth.data import GestureSample

        small = GestureSample(
            speech=bad[0].speech,
            gesture=PoseSequence(bad[0].gesture.frames[:, :10, :], fps=16),
            speaker_id="s",
        )
        with pytest.raises(CompatibilityError):
            evaluate(params, [small], alpha=0.2)

    def test_empty_rejected(self):
        topo, samples = self.make_samples(1)
        with pytest.raises(InvalidInputError):
            evaluate(self.make_params(topo), [], alpha=0.2)

    def test_report_round_trips_to_json(self):
        report = EvalReport(0.5, 0.2, (0.5, 0.5), 0.01, 2)
        import json

        parsed = json.loads(report.to_json())
        assert parsed["pck"] == 0.5
        assert parsed["n_sequences"] == 2
