"""Sequence canonicalization and multi-stream input assembly.

Alignment conventions: after the 3D rotation sequence the segment-averaged
spine (neck to hip midpoint) points along -y (head up at the origin) and the
segment-averaged backline (mean of hip line and shoulder line, right to
left) lies in the x-y plane with positive x. One composite rotation, built
from time-averaged vectors, is applied to every frame; rotating each frame
individually would cancel the rotational movement content itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import SkeletonSequence
from .errors import DatasetError, DegeneratePoseError
from .graph import EdgeList, GraphInit, build_edges
from .joints import L_HIP, L_SHOULDER, NECK, NUM_JOINTS, R_HIP, R_SHOULDER

DEGENERACY_EPS = 1e-9

STREAM_ORDER = "JBVA"


@dataclass(frozen=True)
class RotationReport:
    """Angles applied about (z, x, y) plus the guiding vectors before/after."""

    applied_angles: tuple[float, float, float]
    spine_before: np.ndarray
    spine_after: np.ndarray
    backline_before: np.ndarray
    backline_after: np.ndarray


@dataclass(frozen=True)
class StreamConfig:
    """Ordered subset of the J/B/V/A input streams; J is always present."""

    streams: str = "J"

    def __post_init__(self):
        s = self.streams.upper()
        if "J" not in s:
            raise ValueError("stream config must include the joint stream J")
        if any(ch not in STREAM_ORDER for ch in s):
            raise ValueError(f"unknown stream in {self.streams!r}")
        ordered = "".join(ch for ch in STREAM_ORDER if ch in s)
        if ordered != s:
            raise ValueError(f"streams must appear in order {STREAM_ORDER}, got {self.streams!r}")
        object.__setattr__(self, "streams", s)

    def input_channels(self, coord_dims: int) -> int:
        return len(self.streams) * coord_dims


def center_on_neck(seq: SkeletonSequence) -> SkeletonSequence:
    """Subtract the neck joint's coordinates from all joints, per frame."""
    coords = seq.coords - seq.coords[:, :, NECK : NECK + 1]
    return SkeletonSequence(coords, seq.frame_rate, seq.segment_id)


def _wrap_angle(a: float) -> float:
    a = math.remainder(a, 2 * math.pi)
    if a <= -math.pi:
        a += 2 * math.pi
    return a


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _mean_spine(coords: np.ndarray) -> np.ndarray:
    hips_mid = 0.5 * (coords[:, :, R_HIP] + coords[:, :, L_HIP])
    return (hips_mid - coords[:, :, NECK]).mean(axis=1)


def _mean_backline(coords: np.ndarray) -> np.ndarray:
    hip_line = coords[:, :, L_HIP] - coords[:, :, R_HIP]
    shoulder_line = coords[:, :, L_SHOULDER] - coords[:, :, R_SHOULDER]
    return 0.5 * (hip_line + shoulder_line).mean(axis=1)


def rotation_align_3d(seq: SkeletonSequence) -> tuple[SkeletonSequence, RotationReport]:
    """Align a centered 3D sequence to the canonical orientation.

    Three successive rotations, all computed from segment-averaged vectors
    and applied identically to every frame: about z to bring the spine into
    the y-z plane, about x to point it along -y, about y to put the backline
    into the x-y halfplane with positive x. The result is a canonical form:
    any pre-rotation of the input yields the same output.
    """
    if seq.C != 3:
        raise DatasetError(f"segment {seq.segment_id!r}: 3D alignment needs C=3, got C={seq.C}")
    spine = _mean_spine(seq.coords)
    backline = _mean_backline(seq.coords)
    s_norm = float(np.linalg.norm(spine))
    b_norm = float(np.linalg.norm(backline))
    if s_norm < DEGENERACY_EPS:
        raise DegeneratePoseError(f"segment {seq.segment_id!r}: average spine has zero norm")
    if b_norm < DEGENERACY_EPS:
        raise DegeneratePoseError(f"segment {seq.segment_id!r}: average backline has zero norm")

    sx, sy, _ = spine
    alpha = 0.0
    if math.hypot(sx, sy) > DEGENERACY_EPS * s_norm:
        alpha = _wrap_angle(-0.5 * math.pi - math.atan2(sy, sx))
    r1 = _rot_z(alpha)
    spine1 = r1 @ spine
    beta = _wrap_angle(math.pi - math.atan2(spine1[2], spine1[1]))
    r2 = _rot_x(beta)
    back2 = r2 @ (r1 @ backline)
    if math.hypot(back2[0], back2[2]) < DEGENERACY_EPS * b_norm:
        raise DegeneratePoseError(
            f"segment {seq.segment_id!r}: backline collinear with spine, orientation undefined"
        )
    gamma = _wrap_angle(math.atan2(back2[2], back2[0]))
    rot = _rot_y(gamma) @ r2 @ r1

    coords = np.einsum("ij,jtv->itv", rot, seq.coords)
    report = RotationReport(
        applied_angles=(alpha, beta, gamma),
        spine_before=spine,
        spine_after=rot @ spine,
        backline_before=backline,
        backline_after=rot @ backline,
    )
    return SkeletonSequence(coords, seq.frame_rate, seq.segment_id), report


def rotation_align_2d(seq: SkeletonSequence) -> tuple[SkeletonSequence, RotationReport]:
    """Align a centered 2D sequence: one z-rotation putting the spine on -y."""
    if seq.C != 2:
        raise DatasetError(f"segment {seq.segment_id!r}: 2D alignment needs C=2, got C={seq.C}")
    spine = _mean_spine(seq.coords)
    s_norm = float(np.linalg.norm(spine))
    if s_norm < DEGENERACY_EPS:
        raise DegeneratePoseError(f"segment {seq.segment_id!r}: average spine has zero norm")
    alpha = _wrap_angle(-0.5 * math.pi - math.atan2(spine[1], spine[0]))
    rot2 = _rot_z(alpha)[:2, :2]
    coords = np.einsum("ij,jtv->itv", rot2, seq.coords)

    def _pad(v):
        return np.array([v[0], v[1], 0.0])

    backline = _mean_backline(seq.coords)
    report = RotationReport(
        applied_angles=(alpha, 0.0, 0.0),
        spine_before=_pad(spine),
        spine_after=_pad(rot2 @ spine),
        backline_before=_pad(backline),
        backline_after=_pad(rot2 @ backline),
    )
    return SkeletonSequence(coords, seq.frame_rate, seq.segment_id), report


def drop_depth(seq: SkeletonSequence) -> SkeletonSequence:
    """Project a 3D sequence to 2D by keeping the x and y channels."""
    if seq.C != 3:
        raise DatasetError(f"segment {seq.segment_id!r}: drop_depth needs C=3, got C={seq.C}")
    return SkeletonSequence(seq.coords[:2].copy(), seq.frame_rate, seq.segment_id)


def bone_parents(edges: EdgeList) -> np.ndarray:
    """Derive parent[j] from a (parent, child) edge list rooted at the neck.

    Raises if the edges do not form a spanning tree over the 18 joints.
    """
    if len(edges.edges) != NUM_JOINTS - 1:
        raise ValueError(
            f"bone stream needs a spanning tree with {NUM_JOINTS - 1} edges, got {len(edges.edges)}"
        )
    parent = np.full(NUM_JOINTS, -1)
    parent[NECK] = NECK
    for p, c in edges.edges:
        if c == NECK or parent[c] != -1:
            raise ValueError("edges are not a tree rooted at the neck")
        parent[c] = p
    if np.any(parent < 0):
        raise ValueError("edges do not span all joints")
    # Every joint must reach the root.
    for j in range(NUM_JOINTS):
        node, hops = j, 0
        while node != NECK:
            node = parent[node]
            hops += 1
            if hops > NUM_JOINTS:
                raise ValueError("edge list contains a cycle")
    return parent


def assemble_streams(
    seq: SkeletonSequence,
    cfg: StreamConfig,
    edges: EdgeList | None = None,
) -> np.ndarray:
    """Stack the configured feature streams into a (C_in, T, V) tensor.

    Channel blocks appear in the fixed order J, B, V, A: raw joints; bone
    vectors to the tree parent (zero at the root); forward-difference
    velocity (zero at the final frame); forward-difference acceleration of
    that velocity (zero at the final frame).
    """
    if edges is None:
        edges = build_edges(GraphInit.PHYSICAL)
    parent = bone_parents(edges)
    x = seq.coords
    blocks = []
    for stream in cfg.streams:
        if stream == "J":
            blocks.append(x)
        elif stream == "B":
            blocks.append(x - x[:, :, parent])
        elif stream == "V":
            vel = np.zeros_like(x)
            vel[:, :-1] = x[:, 1:] - x[:, :-1]
            blocks.append(vel)
        else:  # A
            vel = np.zeros_like(x)
            vel[:, :-1] = x[:, 1:] - x[:, :-1]
            acc = np.zeros_like(x)
            acc[:, :-1] = vel[:, 1:] - vel[:, :-1]
            blocks.append(acc)
    return np.concatenate(blocks, axis=0)


def preprocess_sequence(
    seq: SkeletonSequence,
    dims: str = "3d",
    rotate: bool = True,
) -> SkeletonSequence:
    """Standard canonicalization chain: center, optionally rotate, project.

    ``dims='2d'`` on 3D input drops depth before the (2D) rotation.
    """
    out = center_on_neck(seq)
    if dims == "2d" and out.C == 3:
        out = drop_depth(out)
    elif dims == "3d" and out.C != 3:
        raise DatasetError(f"segment {seq.segment_id!r}: cannot build 3D input from 2D data")
    if rotate:
        if out.C == 3:
            out, _ = rotation_align_3d(out)
        else:
            out, _ = rotation_align_2d(out)
    return out
