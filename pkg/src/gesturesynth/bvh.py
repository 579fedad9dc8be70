"""BVH serialization of joint-rotation sequences.

HIERARCHY nests joints depth-first with offsets in centimeters
(rest_direction * rest_length * 100); the root carries six channels
(Xposition Yposition Zposition Zrotation Yrotation Xrotation, positions
written as zeros since poses are root-relative), every other joint three
rotation channels in ZYX order, degrees. Frame time is 1/fps.

The rotation channels of a joint orient that joint's *own* offset from its
parent (see :mod:`gesturesynth.animation`); players that rotate children's
offsets instead will disagree at branch joints.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rotations as rot
from .animation import JointRotationSequence
from .errors import InvalidInputError
from .skeleton import SkeletonTopology

METERS_TO_CM = 100.0


def _dfs_order(topo: SkeletonTopology) -> list[int]:
    order = []

    def visit(j):
        order.append(j)
        for child in topo.children(j):
            visit(child)

    visit(topo.root_index)
    return order


def export_bvh(seq: JointRotationSequence, topo: SkeletonTopology, path) -> None:
    order = _dfs_order(topo)
    lines = ["HIERARCHY"]

    def offset_line(j: int, indent: str) -> str:
        if topo.parents[j] is None:
            vec = np.zeros(3)
        else:
            bone = topo.incoming_bone(j)
            vec = topo.rest_directions[bone] * topo.rest_lengths[bone] * METERS_TO_CM
        return f"{indent}OFFSET {vec[0]:.6f} {vec[1]:.6f} {vec[2]:.6f}"

    def write_joint(j: int, depth: int) -> None:
        indent = "\t" * depth
        keyword = "ROOT" if topo.parents[j] is None else "JOINT"
        lines.append(f"{indent}{keyword} {topo.joints[j][0]}")
        lines.append(f"{indent}{{")
        inner = "\t" * (depth + 1)
        lines.append(offset_line(j, inner))
        if topo.parents[j] is None:
            lines.append(
                f"{inner}CHANNELS 6 Xposition Yposition Zposition "
                f"Zrotation Yrotation Xrotation"
            )
        else:
            lines.append(f"{inner}CHANNELS 3 Zrotation Yrotation Xrotation")
        children = topo.children(j)
        if children:
            for child in children:
                write_joint(child, depth + 1)
        else:
            lines.append(f"{inner}End Site")
            lines.append(f"{inner}{{")
            lines.append(f"{inner}\tOFFSET 0.000000 0.000000 0.000000")
            lines.append(f"{inner}}}")
        lines.append(f"{indent}}}")

    write_joint(topo.root_index, 0)
    lines.append("MOTION")
    lines.append(f"Frames: {seq.n_frames}")
    lines.append(f"Frame Time: {repr(1.0 / seq.fps)}")
    euler_deg = np.degrees(rot.to_euler_zyx(seq.rotations))
    for t in range(seq.n_frames):
        row = []
        for j in order:
            if topo.parents[j] is None:
                row.extend(["0.0", "0.0", "0.0"])
            z, y, x = euler_deg[t, j]
            row.extend([repr(float(z)), repr(float(y)), repr(float(x))])
        lines.append(" ".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class BvhData:
    joint_names: list[str]
    parents: list[int]  # -1 for root, indexes into joint_names (file order)
    offsets_cm: np.ndarray  # (J, 3)
    frame_time: float
    rotations: np.ndarray  # (T, J, 4) unit quaternions, file order

    @property
    def n_frames(self) -> int:
        return self.rotations.shape[0]

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def rotations_for(self, topo: SkeletonTopology) -> np.ndarray:
        """Reorder parsed rotations into the topology's joint order by name."""
        index = {name: i for i, name in enumerate(self.joint_names)}
        try:
            columns = [index[name] for name in topo.joint_names]
        except KeyError as exc:
            raise InvalidInputError(f"BVH is missing joint {exc}") from exc
        return self.rotations[:, columns]


def parse_bvh(path) -> BvhData:
    text = Path(path).read_text()
    tokens = text.split()
    pos = 0

    def next_token() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise InvalidInputError(f"{path}: truncated BVH")
        token = tokens[pos]
        pos += 1
        return token

    def expect(value: str) -> None:
        token = next_token()
        if token != value:
            raise InvalidInputError(f"{path}: expected {value!r}, found {token!r}")

    expect("HIERARCHY")
    names: list[str] = []
    parents: list[int] = []
    offsets: list[list[float]] = []
    channel_counts: list[int] = []

    def parse_joint(parent: int) -> None:
        keyword = next_token()
        if keyword not in ("ROOT", "JOINT"):
            raise InvalidInputError(f"{path}: expected ROOT/JOINT, found {keyword!r}")
        name = next_token()
        index = len(names)
        names.append(name)
        parents.append(parent)
        expect("{")
        expect("OFFSET")
        offsets.append([float(next_token()) for _ in range(3)])
        expect("CHANNELS")
        count = int(next_token())
        channels = [next_token() for _ in range(count)]
        rotation_channels = [c for c in channels if c.endswith("rotation")]
        if rotation_channels != ["Zrotation", "Yrotation", "Xrotation"]:
            raise InvalidInputError(f"{path}: unsupported channel order {channels}")
        channel_counts.append(count)
        while True:
            token = next_token()
            if token == "}":
                return
            if token in ("ROOT", "JOINT"):
                pos_rewind()
                parse_joint(index)
            elif token == "End":
                expect("Site")
                expect("{")
                expect("OFFSET")
                for _ in range(3):
                    next_token()
                expect("}")
            else:
                raise InvalidInputError(f"{path}: unexpected token {token!r}")

    def pos_rewind() -> None:
        nonlocal pos
        pos -= 1

    parse_joint(-1)
    expect("MOTION")
    expect("Frames:")
    n_frames = int(next_token())
    expect("Frame")
    expect("Time:")
    frame_time = float(next_token())
    values_per_frame = sum(channel_counts)
    data = np.array(
        [float(next_token()) for _ in range(n_frames * values_per_frame)]
    ).reshape(n_frames, values_per_frame)
    if pos != len(tokens):
        raise InvalidInputError(f"{path}: trailing data after motion rows")

    rotations = np.zeros((n_frames, len(names), 4))
    column = 0
    for j, count in enumerate(channel_counts):
        rot_start = column + (count - 3)  # skip position channels
        angles = np.radians(data[:, rot_start : rot_start + 3])
        rotations[:, j] = rot.from_euler_zyx(angles)
        column += count
    return BvhData(names, parents, np.asarray(offsets), frame_time, rotations)
