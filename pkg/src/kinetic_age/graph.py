"""Skeleton graph construction, spatial partitioning, and normalization.

The graph convolution consumes three V x V adjacency matrices: identity
self-connections plus a centripetal / centrifugal split of the neighbor
edges, each symmetrically normalized by its degree matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .joints import END_EFFECTORS, NUM_JOINTS, PHYSICAL_TREE, rest_pose

# Distance ties against the gravity center count as centripetal.
TIE_EPS = 1e-12


class GraphInit(str, Enum):
    PHYSICAL = "physical"
    COORDINATION = "coordination"
    FULLY_CONNECTED = "fully_connected"


@dataclass(frozen=True)
class EdgeList:
    """Directed edges (from, to) plus the initialization scheme they encode."""

    edges: tuple[tuple[int, int], ...]
    init_kind: GraphInit

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class AdjacencySet:
    """Normalized adjacency stack: A[0] self, A[1] centripetal, A[2] centrifugal."""

    matrices: np.ndarray  # (3, V, V)
    init_kind: GraphInit

    @property
    def num_joints(self) -> int:
        return self.matrices.shape[-1]

    def stacked(self) -> np.ndarray:
        return self.matrices


def build_edges(kind: GraphInit | str) -> EdgeList:
    """Build the directed edge list for one of the three initializations.

    Physical: the 17 skeletal-tree edges (parent -> child). Coordination adds
    the 6 bidirectional end-effector pairs (12 directed edges). Fully
    connected: every ordered pair of distinct joints.
    """
    kind = GraphInit(kind)
    if kind is GraphInit.PHYSICAL:
        edges = tuple(PHYSICAL_TREE)
    elif kind is GraphInit.COORDINATION:
        coord = []
        for a, b in itertools.combinations(END_EFFECTORS, 2):
            coord.append((a, b))
            coord.append((b, a))
        edges = tuple(PHYSICAL_TREE) + tuple(coord)
    else:
        edges = tuple(
            (i, j) for i in range(NUM_JOINTS) for j in range(NUM_JOINTS) if i != j
        )
    return EdgeList(edges=edges, init_kind=kind)


def partition(edges: EdgeList, template: np.ndarray) -> np.ndarray:
    """Split edges into self / centripetal / centrifugal unnormalized matrices.

    Every edge is treated bidirectionally: each undirected neighbor pair
    contributes both directed slots, classified independently, so the 17
    physical bones fill 34 slots. A directed slot (i, j) is centripetal when
    the target j lies closer to the skeleton's gravity center (the mean of
    the template joints) than the source i, centrifugal when farther, and
    centripetal on ties. Entry [i, j] marks the edge i -> j, matching the
    contraction X A that aggregates into the target joint.

    Returns a (3, V, V) array; subset 0 is the identity.
    """
    template = np.asarray(template, dtype=float)
    if template.ndim != 2 or template.shape[0] != NUM_JOINTS:
        raise ValueError(f"template must be ({NUM_JOINTS}, C), got {template.shape}")
    if not np.all(np.isfinite(template)):
        raise ValueError("template pose contains non-finite values")

    center = template.mean(axis=0)
    dist = np.linalg.norm(template - center, axis=1)

    slots = set()
    for i, j in edges.edges:
        slots.add((i, j))
        slots.add((j, i))

    a = np.zeros((3, NUM_JOINTS, NUM_JOINTS))
    a[0] = np.eye(NUM_JOINTS)
    for i, j in sorted(slots):
        if dist[j] < dist[i] + TIE_EPS:
            a[1, i, j] = 1.0
        else:
            a[2, i, j] = 1.0
    return a


def normalize_adjacency(a_raw: np.ndarray) -> np.ndarray:
    """Symmetric degree normalization D^-1/2 A D^-1/2 with row-sum degrees.

    Zero-degree rows (and their matching columns) stay zero instead of being
    regularized.
    """
    a_raw = np.asarray(a_raw, dtype=float)
    if np.any(a_raw < 0):
        raise ValueError("adjacency entries must be nonnegative")
    deg = a_raw.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return inv_sqrt[:, None] * a_raw * inv_sqrt[None, :]


def build_adjacency_set(
    kind: GraphInit | str, template: np.ndarray | None = None
) -> AdjacencySet:
    """Partition the chosen edge set and normalize each subset independently.

    The result seeds both the fixed graph convolution input and the
    initialization of the learnable global graphs. When no template pose is
    given, the canonical rest pose is used for the partitioning distances.
    """
    kind = GraphInit(kind)
    if template is None:
        template = rest_pose()
    raw = partition(build_edges(kind), template)
    out = np.stack([normalize_adjacency(raw[k]) for k in range(3)])
    return AdjacencySet(matrices=out, init_kind=kind)
