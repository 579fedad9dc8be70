"""Dataset assembly: file formats, audio/pose alignment, synthetic tasks.

Pose text format: a header line ``K=<joints> FPS=<rate> TOPO=<name>``
followed by one line per frame holding 3K space-separated floats
(x y z per joint, joint order from the topology). Floats are written with
``repr`` so files round-trip bit-exactly.

The synthetic tasks stand in for speaker footage at desk scale: audio is
sign noise under a smooth random envelope, and the arm elevation angle
tracks the windowed RMS, so the audio-to-gesture mapping is deterministic
and re-derivable. The multimodal variant flips a seeded coin per clip to
route the motion to either arm, creating the ambiguity an L1-only
regressor collapses on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .audio import (
    SAMPLE_RATE,
    SEGMENT_SAMPLES,
    SEGMENT_SECONDS,
    AudioClip,
    MelSpectrogram,
    network_mel,
)
from .errors import InvalidInputError, PoseFileParseError, ShapeError
from .skeleton import PoseSequence, SkeletonTopology, root_normalize

POSE_FPS = 16
POSE_FRAMES = 64  # per 4-second sample

RMS_WINDOW_SECONDS = 0.25
MAX_ARM_ANGLE = np.pi / 3.0
ENVELOPE_POINT_SPACING = 0.5  # seconds between envelope control points


@dataclass(frozen=True)
class GestureSample:
    """A 4-second speech/gesture pair, gesture root-normalized at 16 fps."""

    speech: MelSpectrogram
    gesture: PoseSequence
    speaker_id: str
    source_offset: float = 0.0

    def __post_init__(self):
        if abs(self.gesture.duration - SEGMENT_SECONDS) > 1.0 / self.gesture.fps:
            raise InvalidInputError(
                f"gesture covers {self.gesture.duration} s, expected {SEGMENT_SECONDS} s"
            )


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: str
    pose_path: str
    start_s: float
    end_s: float
    speaker_id: str
    split: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    seed: int = 0

    def subset(self, split: str) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split == split)


def save_manifest(manifest: DatasetManifest, path) -> None:
    """JSON array of entry objects."""
    rows = []
    for e in manifest.entries:
        row = {
            "audio_path": e.audio_path,
            "pose_path": e.pose_path,
            "start_s": e.start_s,
            "end_s": e.end_s,
            "speaker_id": e.speaker_id,
        }
        if e.split is not None:
            row["split"] = e.split
        rows.append(row)
    with open(path, "w") as f:
        json.dump(rows, f, indent=2)
        f.write("\n")


def load_manifest(path) -> DatasetManifest:
    with open(path) as f:
        data = json.load(f)
    seed = 0
    if isinstance(data, dict):
        seed = int(data.get("seed", 0))
        data = data["entries"]
    entries = []
    for row in data:
        try:
            entries.append(
                ManifestEntry(
                    audio_path=row["audio_path"],
                    pose_path=row["pose_path"],
                    start_s=float(row["start_s"]),
                    end_s=float(row["end_s"]),
                    speaker_id=row["speaker_id"],
                    split=row.get("split"),
                )
            )
        except KeyError as exc:
            raise InvalidInputError(f"manifest {path}: entry missing key {exc}") from exc
    return DatasetManifest(tuple(entries), seed=seed)


# ---------------------------------------------------------------------------
# Pose text format
# ---------------------------------------------------------------------------


def write_pose_file(seq: PoseSequence, topo_name: str, path) -> None:
    lines = [f"K={seq.n_joints} FPS={seq.fps:g} TOPO={topo_name}"]
    for frame in seq.frames:
        lines.append(" ".join(repr(float(v)) for v in frame.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_pose_file(path) -> tuple[PoseSequence, str]:
    """Parse a pose text file; returns the sequence and the topology name."""
    path = Path(path)
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise PoseFileParseError(path, 1, "empty file")
    header = lines[0].split()
    fields = {}
    for token in header:
        key, _, value = token.partition("=")
        fields[key] = value
    try:
        n_joints = int(fields["K"])
        fps = float(fields["FPS"])
        topo_name = fields["TOPO"]
    except (KeyError, ValueError):
        raise PoseFileParseError(path, 1, f"malformed header {lines[0]!r}") from None
    if n_joints < 1 or fps <= 0:
        raise PoseFileParseError(path, 1, f"bad K/FPS values in header {lines[0]!r}")
    frames = []
    for line_number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 3 * n_joints:
            raise PoseFileParseError(
                path, line_number, f"expected {3 * n_joints} values, found {len(tokens)}"
            )
        try:
            row = np.array([float(t) for t in tokens])
        except ValueError as exc:
            raise PoseFileParseError(path, line_number, str(exc)) from None
        if not np.all(np.isfinite(row)):
            raise PoseFileParseError(path, line_number, "non-finite value")
        frames.append(row.reshape(n_joints, 3))
    if not frames:
        raise PoseFileParseError(path, 2, "no frames")
    return PoseSequence(np.stack(frames), fps=fps), topo_name


# ---------------------------------------------------------------------------
# Alignment
# ---------------------------------------------------------------------------

_SNAP_TOL = 1e-9


def resample_frames(frames: np.ndarray, src_fps: float, times: np.ndarray) -> np.ndarray:
    """Linear keypoint interpolation at absolute times (seconds).

    Sample positions that land on the source grid (within 1e-9 frames) are
    copied exactly, so integer-grid resampling is drift-free.
    """
    positions = times * src_fps
    max_pos = frames.shape[0] - 1
    if positions.min() < -_SNAP_TOL or positions.max() > max_pos + _SNAP_TOL:
        raise InvalidInputError(
            f"resample positions [{positions.min():.6f}, {positions.max():.6f}] "
            f"fall outside source range [0, {max_pos}]"
        )
    positions = np.clip(positions, 0.0, max_pos)
    lower = np.floor(positions).astype(int)
    frac = positions - lower
    snap = np.abs(frac - np.round(frac)) < _SNAP_TOL
    lower = np.where(snap, np.round(positions).astype(int), lower)
    frac = np.where(snap, 0.0, frac)
    upper = np.minimum(lower + 1, max_pos)
    # lower + frac * (upper - lower) is exact both on the grid and for
    # constant segments, unlike the two-sided weighted form
    base = frames[lower]
    return base + frac[:, None, None] * (frames[upper] - base)


def align(
    audio: AudioClip,
    poses: PoseSequence,
    start_s: float,
    end_s: float,
    topo: SkeletonTopology,
    speaker_id: str = "",
) -> GestureSample:
    """Cut one 4-second window out of both streams and pair them up."""
    if abs((end_s - start_s) - SEGMENT_SECONDS) > 1e-9:
        raise InvalidInputError(
            f"alignment window must be {SEGMENT_SECONDS} s, got {end_s - start_s}"
        )
    first_sample = int(round(start_s * SAMPLE_RATE))
    if start_s < 0 or first_sample + SEGMENT_SAMPLES > audio.samples.size:
        raise InvalidInputError(
            f"audio window [{start_s}, {end_s}) s outside clip of {audio.duration} s"
        )
    clip = AudioClip(audio.samples[first_sample : first_sample + SEGMENT_SAMPLES])
    times = start_s + np.arange(POSE_FRAMES) / POSE_FPS
    frames = resample_frames(poses.frames, poses.fps, times)
    gesture = root_normalize(PoseSequence(frames, fps=POSE_FPS), topo)
    return GestureSample(
        speech=network_mel(clip),
        gesture=gesture,
        speaker_id=speaker_id,
        source_offset=start_s,
    )


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (N, F, T_a) mels and (N, T, K, 3) poses."""
    if not samples:
        raise InvalidInputError("no samples")
    mels = np.stack([s.speech.values for s in samples])
    poses = np.stack([s.gesture.frames for s in samples])
    return mels, poses


# ---------------------------------------------------------------------------
# Synthetic audio/gesture oracle tasks
# ---------------------------------------------------------------------------


def _synth_clip(rng: np.random.Generator) -> AudioClip:
    """Sign noise under a piecewise-linear random envelope in [0, 1]."""
    n_points = int(SEGMENT_SECONDS / ENVELOPE_POINT_SPACING) + 1
    control = rng.uniform(0.0, 1.0, size=n_points)
    point_times = np.arange(n_points) * ENVELOPE_POINT_SPACING
    sample_times = np.arange(SEGMENT_SAMPLES) / SAMPLE_RATE
    envelope = np.interp(sample_times, point_times, control)
    signs = rng.integers(0, 2, size=SEGMENT_SAMPLES) * 2.0 - 1.0
    return AudioClip(envelope * signs)


def arm_angles_from_audio(clip: AudioClip) -> np.ndarray:
    """Per-frame elevation angles derived from windowed RMS.

    RMS over non-overlapping 0.25 s windows, normalized by full scale
    (RMS 1.0), scaled to [0, pi/3], then linearly interpolated from window
    centers to the 64 pose-frame times.
    """
    window = int(RMS_WINDOW_SECONDS * SAMPLE_RATE)
    n_windows = clip.samples.size // window
    chunks = clip.samples[: n_windows * window].reshape(n_windows, window)
    rms = np.sqrt(np.mean(chunks**2, axis=1))
    theta = MAX_ARM_ANGLE * np.clip(rms, 0.0, 1.0)
    centers = (np.arange(n_windows) + 0.5) * RMS_WINDOW_SECONDS
    frame_times = np.arange(POSE_FRAMES) / POSE_FPS
    return np.interp(frame_times, centers, theta)


def gesture_from_angles(
    angles: np.ndarray, side: str, topo: SkeletonTopology
) -> PoseSequence:
    """Rigidly elevate one arm of the rest pose by the per-frame angle.

    The arm subtree pivots about the shoulder in the frontal plane
    (rotation about +z), raising outward; all other joints stay at rest.
    """
    rest = topo.rest_pose().positions
    shoulder = topo.joint_index(f"{side}_shoulder")
    moved = topo.descendants(shoulder)
    pivot = rest[shoulder]
    sign = 1.0 if side == "r" else -1.0
    frames = np.tile(rest, (len(angles), 1, 1))
    for t, theta in enumerate(angles):
        if theta == 0.0:
            continue
        alpha = sign * theta
        c, s = np.cos(alpha), np.sin(alpha)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        frames[t, moved] = pivot + (rest[moved] - pivot) @ rot.T
    return PoseSequence(frames, fps=POSE_FPS)


def gesture_from_audio(clip: AudioClip, side: str, topo: SkeletonTopology) -> PoseSequence:
    return gesture_from_angles(arm_angles_from_audio(clip), side, topo)


def _sample_from_clip(
    clip: AudioClip, side: str, topo: SkeletonTopology, speaker_id: str
) -> GestureSample:
    gesture = root_normalize(gesture_from_audio(clip, side, topo), topo)
    return GestureSample(
        speech=network_mel(clip), gesture=gesture, speaker_id=speaker_id
    )


def synth_unimodal_pairs(
    n_clips: int, seed: int, topo: SkeletonTopology
) -> list[tuple[AudioClip, GestureSample]]:
    """(clip, sample) pairs; always the right arm. Bit-reproducible by seed."""
    if n_clips < 1:
        raise InvalidInputError(f"n_clips must be >= 1, got {n_clips}")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_clips):
        clip = _synth_clip(rng)
        pairs.append((clip, _sample_from_clip(clip, "r", topo, "unimodal")))
    return pairs


def synth_unimodal(n_clips: int, seed: int, topo: SkeletonTopology) -> list[GestureSample]:
    return [sample for _, sample in synth_unimodal_pairs(n_clips, seed, topo)]


def synth_multimodal_pairs(
    n_clips: int, seed: int, topo: SkeletonTopology
) -> list[tuple[AudioClip, GestureSample]]:
    """Same magnitude rule, but a per-clip coin routes motion to one arm."""
    if n_clips < 2:
        raise InvalidInputError(f"n_clips must be >= 2, got {n_clips}")
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_clips):
        clip = _synth_clip(rng)
        side = "l" if rng.integers(0, 2) else "r"
        pairs.append((clip, _sample_from_clip(clip, side, topo, "multimodal")))
    return pairs


def synth_multimodal(n_clips: int, seed: int, topo: SkeletonTopology) -> list[GestureSample]:
    return [sample for _, sample in synth_multimodal_pairs(n_clips, seed, topo)]


# ---------------------------------------------------------------------------
# Split
# ---------------------------------------------------------------------------


def split(manifest: DatasetManifest, val_fraction: float, seed: int) -> DatasetManifest:
    """Per-speaker stratified train/val assignment, shuffled by seed."""
    if not manifest.entries:
        raise InvalidInputError("cannot split an empty manifest")
    if not 0.0 < val_fraction < 1.0:
        raise InvalidInputError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    by_speaker: dict[str, list[int]] = {}
    for i, entry in enumerate(manifest.entries):
        by_speaker.setdefault(entry.speaker_id, []).append(i)
    assignment = {}
    for speaker in sorted(by_speaker):
        indices = np.array(by_speaker[speaker])
        order = rng.permutation(indices.size)
        n_val = int(round(indices.size * val_fraction))
        val_set = set(indices[order[:n_val]].tolist())
        for i in by_speaker[speaker]:
            assignment[i] = "val" if i in val_set else "train"
    entries = tuple(
        replace(entry, split=assignment[i]) for i, entry in enumerate(manifest.entries)
    )
    return DatasetManifest(entries, seed=seed)


# ---------------------------------------------------------------------------
# Loading samples from manifest files
# ---------------------------------------------------------------------------


def load_split_samples(
    manifest: DatasetManifest,
    which: str,
    topo: SkeletonTopology,
    root: Path | str | None = None,
) -> list[GestureSample]:
    """Materialize every entry of a split as an aligned GestureSample."""
    from .audio import load_wav

    root = Path(root) if root is not None else Path(".")
    samples = []
    for entry in manifest.subset(which):
        audio = load_wav(root / entry.audio_path)
        poses, topo_name = load_pose_file(root / entry.pose_path)
        if poses.n_joints != topo.n_joints:
            raise ShapeError(
                f"{entry.pose_path}: {poses.n_joints} joints, topology "
                f"{topo.name!r} has {topo.n_joints}"
            )
        samples.append(
            align(audio, poses, entry.start_s, entry.end_s, topo, entry.speaker_id)
        )
    return samples
