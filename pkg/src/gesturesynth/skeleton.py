"""Skeleton data model and the two kernels every loss is built from.

A :class:`SkeletonTopology` fixes the joint tree, the per-bone rest
directions/lengths, and the root. Poses are root-relative keypoint arrays
in meters (y-up, right-handed). On top of that sit the two pure kernels
used throughout training and evaluation:

* :func:`bone_lengths` -- per-bone Euclidean lengths of a posed skeleton,
* :func:`motion` -- frame-to-frame keypoint displacements.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InsufficientFramesError, InvalidInputError, ShapeError
from .validation import as_float_array, freeze

_UNIT_TOL = 1e-9

FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
SEGMENTS_PER_FINGER = 4


@dataclass(frozen=True)
class SkeletonTopology:
    """Joint tree plus rest geometry.

    ``joints`` is an ordered list of ``(name, parent_index)`` with exactly one
    root (``parent_index is None``). Bones are the (parent, child) pairs in
    child-index order, so bone ``i`` belongs to the ``i``-th non-root joint.
    """

    name: str
    joints: tuple[tuple[str, int | None], ...]
    rest_directions: np.ndarray  # (|bones|, 3) unit vectors
    rest_lengths: np.ndarray  # (|bones|,) meters
    root_index: int
    bones: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        names = [n for n, _ in self.joints]
        if len(set(names)) != len(names):
            raise InvalidInputError("topology: duplicate joint names")
        roots = [i for i, (_, p) in enumerate(self.joints) if p is None]
        if len(roots) != 1:
            raise InvalidInputError(f"topology: expected exactly one root, found {len(roots)}")
        if roots[0] != self.root_index:
            raise InvalidInputError(
                f"topology: root_index {self.root_index} does not match parentless joint {roots[0]}"
            )
        bones = []
        for child, (name, parent) in enumerate(self.joints):
            if parent is None:
                continue
            if not 0 <= parent < len(self.joints):
                raise InvalidInputError(f"topology: joint {name!r} has bad parent index {parent}")
            bones.append((parent, child))
        object.__setattr__(self, "bones", tuple(bones))
        self._check_tree()

        directions = as_float_array(self.rest_directions, "rest_directions", ndim=2)
        lengths = as_float_array(self.rest_lengths, "rest_lengths", ndim=1)
        if directions.shape != (len(bones), 3) or lengths.shape != (len(bones),):
            raise ShapeError(
                f"topology: expected {len(bones)} rest directions/lengths, "
                f"got {directions.shape} / {lengths.shape}"
            )
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise InvalidInputError("topology: rest_directions must be unit vectors")
        if np.any(lengths <= 0):
            raise InvalidInputError("topology: rest_lengths must be positive")
        object.__setattr__(self, "rest_directions", freeze(directions))
        object.__setattr__(self, "rest_lengths", freeze(lengths))

    def _check_tree(self):
        seen = set()
        for j in range(len(self.joints)):
            path = []
            node = j
            while node is not None and node not in seen:
                if node in path:
                    raise InvalidInputError("topology: parent relation contains a cycle")
                path.append(node)
                node = self.joints[node][1]
            if node is None and path and path[-1] != self.root_index:
                raise InvalidInputError("topology: joint chain does not terminate at root")
            seen.update(path)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.joints)

    @property
    def parents(self) -> tuple[int | None, ...]:
        return tuple(p for _, p in self.joints)

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def joint_index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.joints):
            if n == name:
                return i
        raise InvalidInputError(f"topology {self.name!r}: no joint named {name!r}")

    def bone_index(self, child_name: str) -> int:
        """Index of the bone ending at the named joint."""
        return self.incoming_bone(self.joint_index(child_name))

    def incoming_bone(self, joint: int) -> int:
        """Index of the bone whose child is ``joint``."""
        for i, (_, c) in enumerate(self.bones):
            if c == joint:
                return i
        raise InvalidInputError(
            f"topology {self.name!r}: joint {joint} is the root, no incoming bone"
        )

    def children(self, joint: int) -> list[int]:
        return [c for c, (_, p) in enumerate(self.joints) if p == joint]

    def descendants(self, joint: int) -> list[int]:
        out = []
        stack = self.children(joint)
        while stack:
            j = stack.pop()
            out.append(j)
            stack.extend(self.children(j))
        return sorted(out)

    def topological_order(self) -> list[int]:
        """Joint indices ordered root first, every parent before its children."""
        order = [self.root_index]
        queue = self.children(self.root_index)
        while queue:
            j = queue.pop(0)
            order.append(j)
            queue.extend(self.children(j))
        return order

    def rest_pose(self) -> "Pose":
        """Keypoints of the untransformed skeleton, root at origin."""
        positions = np.zeros((self.n_joints, 3))
        for bone, (parent, child) in enumerate(self.bones):
            positions[child] = positions[parent] + self.rest_directions[bone] * self.rest_lengths[bone]
        return Pose(positions)


@dataclass(frozen=True)
class Pose:
    """One frame of root-relative keypoints, shape (K, 3), meters."""

    positions: np.ndarray

    def __post_init__(self):
        positions = as_float_array(self.positions, "positions", ndim=2)
        if positions.shape[1] != 3:
            raise ShapeError(f"positions: expected (K, 3), got {positions.shape}")
        object.__setattr__(self, "positions", freeze(positions))

    @property
    def n_joints(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class PoseSequence:
    """A (T, K, 3) keypoint trajectory at a fixed frame rate."""

    frames: np.ndarray
    fps: float

    def __post_init__(self):
        frames = as_float_array(self.frames, "frames", ndim=3)
        if frames.shape[0] < 1 or frames.shape[2] != 3:
            raise ShapeError(f"frames: expected (T>=1, K, 3), got {frames.shape}")
        if not self.fps > 0:
            raise InvalidInputError(f"fps must be > 0, got {self.fps}")
        object.__setattr__(self, "frames", freeze(frames))
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames / self.fps

    def pose(self, t: int) -> Pose:
        return Pose(self.frames[t])


def _check_joint_count(n_joints: int, topo: SkeletonTopology) -> None:
    if n_joints != topo.n_joints:
        raise ShapeError(
            f"pose has {n_joints} joints but topology {topo.name!r} defines {topo.n_joints}"
        )


def bone_lengths(pose: Pose, topo: SkeletonTopology) -> np.ndarray:
    """Euclidean length of every topology bone in the posed skeleton."""
    _check_joint_count(pose.n_joints, topo)
    bones = np.asarray(topo.bones)
    deltas = pose.positions[bones[:, 1]] - pose.positions[bones[:, 0]]
    return np.linalg.norm(deltas, axis=1)


def sequence_bone_lengths(seq: PoseSequence, topo: SkeletonTopology) -> np.ndarray:
    """Per-frame bone lengths, shape (T, |bones|)."""
    _check_joint_count(seq.n_joints, topo)
    bones = np.asarray(topo.bones)
    deltas = seq.frames[:, bones[:, 1], :] - seq.frames[:, bones[:, 0], :]
    return np.linalg.norm(deltas, axis=2)


def motion(seq: PoseSequence) -> np.ndarray:
    """Displacement between consecutive frames, shape (T-1, K, 3)."""
    if seq.n_frames < 2:
        raise InsufficientFramesError(
            f"motion needs at least 2 frames, got {seq.n_frames}"
        )
    return seq.frames[1:] - seq.frames[:-1]


def root_normalize(seq: PoseSequence, topo: SkeletonTopology) -> PoseSequence:
    """Translate every frame so the root joint sits at the origin."""
    _check_joint_count(seq.n_joints, topo)
    offsets = seq.frames[:, topo.root_index, :]
    return PoseSequence(seq.frames - offsets[:, None, :], seq.fps)


# ---------------------------------------------------------------------------
# Topology file format
# ---------------------------------------------------------------------------
#
# JSON object with keys:
#   name            optional string, defaults to the file stem
#   joints          ordered array of {"name": str, "parent": str|null}
#   rest_directions array of [x, y, z] unit vectors, one per non-root joint
#                   in joint order
#   rest_lengths    array of positive lengths (meters), same order
#   root            name of the root joint


def load_topology(path) -> SkeletonTopology:
    path = Path(path)
    with open(path) as f:
        data = json.load(f)
    try:
        raw_joints = data["joints"]
        directions = data["rest_directions"]
        lengths = data["rest_lengths"]
        root_name = data["root"]
    except KeyError as exc:
        raise InvalidInputError(f"topology file {path}: missing key {exc}") from exc
    name_to_index = {j["name"]: i for i, j in enumerate(raw_joints)}
    joints = []
    for j in raw_joints:
        parent = j["parent"]
        if parent is not None:
            if parent not in name_to_index:
                raise InvalidInputError(
                    f"topology file {path}: joint {j['name']!r} references unknown parent {parent!r}"
                )
            parent = name_to_index[parent]
        joints.append((j["name"], parent))
    if root_name not in name_to_index:
        raise InvalidInputError(f"topology file {path}: unknown root {root_name!r}")
    return SkeletonTopology(
        name=data.get("name", path.stem),
        joints=tuple(joints),
        rest_directions=np.asarray(directions, dtype=np.float64),
        rest_lengths=np.asarray(lengths, dtype=np.float64),
        root_index=name_to_index[root_name],
    )


def save_topology(topo: SkeletonTopology, path) -> None:
    data = {
        "name": topo.name,
        "joints": [
            {"name": n, "parent": None if p is None else topo.joints[p][0]}
            for n, p in topo.joints
        ],
        "rest_directions": topo.rest_directions.tolist(),
        "rest_lengths": topo.rest_lengths.tolist(),
        "root": topo.joints[topo.root_index][0],
    }
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")


def default_topology() -> SkeletonTopology:
    """Upper-body rig with 8 body joints and 2x20 finger joints (48 total).

    Root is the pelvis; the neck sits one spine-length above it and carries
    both arms. Each hand hangs from its wrist as five straight 4-segment
    finger chains. All rest geometry lies in the x/y plane except a slight
    forward cant on the thumbs.
    """
    joints: list[tuple[str, int | None]] = [("root", None)]
    directions: list[tuple[float, float, float]] = []
    lengths: list[float] = []

    def add(name, parent_name, direction, length):
        parent = [n for n, _ in joints].index(parent_name)
        joints.append((name, parent))
        d = np.asarray(direction, dtype=np.float64)
        directions.append(tuple(d / np.linalg.norm(d)))
        lengths.append(length)

    add("neck", "root", (0, 1, 0), 0.55)
    for side, sx in (("l", -1.0), ("r", 1.0)):
        add(f"{side}_shoulder", "neck", (sx, 0, 0), 0.19)
        add(f"{side}_elbow", f"{side}_shoulder", (0, -1, 0), 0.28)
        add(f"{side}_wrist", f"{side}_elbow", (0, -1, 0), 0.26)
        spreads = {"thumb": -0.55, "index": -0.22, "middle": 0.0, "ring": 0.2, "pinky": 0.38}
        seg_lengths = (0.08, 0.045, 0.028, 0.022)
        for finger in FINGER_NAMES:
            direction = (sx * spreads[finger], -1.0, 0.25 if finger == "thumb" else 0.0)
            parent = f"{side}_wrist"
            for seg in range(1, SEGMENTS_PER_FINGER + 1):
                name = f"{side}_{finger}_{seg}"
                add(name, parent, direction, seg_lengths[seg - 1])
                parent = name

    return SkeletonTopology(
        name="upperbody48",
        joints=tuple(joints),
        rest_directions=np.asarray(directions),
        rest_lengths=np.asarray(lengths),
        root_index=0,
    )
