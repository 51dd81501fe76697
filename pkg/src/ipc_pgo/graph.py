"""Pose-graph data model: vertices, odometry/loop edge sets and the consensus set."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import ErrorVec3, Pose2, boxminus, compose, relative


class EdgeKind(str, enum.Enum):
    ODOMETRY = "odometry"
    LOOP = "loop"


class GraphError(ValueError):
    pass


def information_from_upper(upper: Sequence[float]) -> np.ndarray:
    """Build a symmetric 3x3 matrix from ``(i11, i12, i13, i22, i23, i33)``."""
    if len(upper) != 6:
        raise GraphError(f"expected 6 upper-triangular entries, got {len(upper)}")
    a, b, c, d, e, f = (float(v) for v in upper)
    return np.array([[a, b, c], [b, d, e], [c, e, f]])


def information_upper(omega: np.ndarray) -> tuple[float, ...]:
    o = np.asarray(omega)
    return (o[0, 0], o[0, 1], o[0, 2], o[1, 1], o[1, 2], o[2, 2])


def is_positive_definite(omega: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        return False
    return bool(np.all(np.isfinite(omega)))


def check_information(omega) -> np.ndarray:
    """Return ``omega`` as a read-only symmetric float array, or raise if not PD."""
    o = np.array(omega, dtype=float)
    if o.shape != (3, 3):
        raise GraphError(f"information matrix must be 3x3, got shape {o.shape}")
    if not np.array_equal(o, o.T):
        raise GraphError("information matrix is not symmetric")
    if not is_positive_definite(o):
        raise GraphError("information matrix is not positive definite")
    o.setflags(write=False)
    return o


@dataclass(eq=False)
class EdgeRecord:
    """A relative-pose measurement ``z`` between vertices ``src`` and ``dst``.

    ``kind`` follows from the endpoints: consecutive ids are odometry,
    anything else is a loop closure.
    """

    src: int
    dst: int
    z: Pose2
    omega: np.ndarray

    def __post_init__(self):
        self.src = int(self.src)
        self.dst = int(self.dst)
        if self.src < 0 or self.dst < 0:
            raise GraphError("vertex ids must be non-negative")
        if self.src == self.dst:
            raise GraphError(f"self-loop on vertex {self.src}")
        self.omega = check_information(self.omega)
        self.z_array = self.z.to_array()

    @property
    def kind(self) -> EdgeKind:
        return EdgeKind.ODOMETRY if self.dst == self.src + 1 else EdgeKind.LOOP

    def key(self) -> tuple:
        return (self.src, self.dst, self.z, information_upper(self.omega))

    def __eq__(self, other):
        if not isinstance(other, EdgeRecord):
            return NotImplemented
        return self.key() == other.key()

    def __repr__(self):
        return f"EdgeRecord({self.src}->{self.dst}, z={self.z}, kind={self.kind.value})"


@dataclass(frozen=True)
class Snapshot:
    ids: np.ndarray
    poses: np.ndarray
    n_vertices: int


class PoseGraph:
    """Ordered vertices with odometry edges ``odom_edges`` (E_o), loop edges
    ``loop_edges`` (E_l) and the ids of accepted loop edges ``consensus``.

    Vertex estimates live in one ``(n, 3)`` float array (:attr:`poses`).
    """

    def __init__(self, origin: Pose2 | None = None):
        self._poses = np.zeros((16, 3))
        self._n = 0
        self.odom_edges: list[EdgeRecord] = []
        self.loop_edges: list[EdgeRecord] = []
        self.consensus: set[int] = set()
        if origin is not None:
            self.add_vertex(origin)

    # -- vertices ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self._n

    def __len__(self):
        return self._n

    @property
    def poses(self) -> np.ndarray:
        """Live view of the vertex estimates, shape ``(n, 3)``."""
        return self._poses[: self._n]

    def add_vertex(self, pose: Pose2) -> int:
        if self._n == len(self._poses):
            grown = np.zeros((2 * len(self._poses), 3))
            grown[: self._n] = self._poses[: self._n]
            self._poses = grown
        self._poses[self._n] = pose.to_array()
        self._n += 1
        return self._n - 1

    def pose(self, i: int) -> Pose2:
        self._check_vertex(i)
        return Pose2.from_array(self._poses[i])

    def set_pose(self, i: int, pose: Pose2):
        self._check_vertex(i)
        self._poses[i] = pose.to_array()

    def _check_vertex(self, i: int):
        if not 0 <= i < self._n:
            raise GraphError(f"vertex {i} does not exist (graph has {self._n})")

    # -- edges ------------------------------------------------------------

    def add_edge(self, edge: EdgeRecord) -> tuple[EdgeKind, int]:
        """Store ``edge`` in E_o or E_l according to its kind; return (kind, id)."""
        if edge.src > edge.dst:
            raise GraphError(f"edge {edge.src}->{edge.dst} is not in canonical orientation")
        self._check_vertex(edge.src)
        self._check_vertex(edge.dst)
        if edge.kind is EdgeKind.ODOMETRY:
            self.odom_edges.append(edge)
            return EdgeKind.ODOMETRY, len(self.odom_edges) - 1
        self.loop_edges.append(edge)
        return EdgeKind.LOOP, len(self.loop_edges) - 1

    def edges(self) -> Iterable[EdgeRecord]:
        yield from self.odom_edges
        yield from self.loop_edges

    def check(self):
        """Validate the structural invariants, raising :class:`GraphError`."""
        chain = {e.src for e in self.odom_edges}
        missing = [i for i in range(self._n - 1) if i not in chain]
        if missing:
            raise GraphError(f"odometry chain broken at vertices {missing[:5]}")
        for e in self.edges():
            if e.dst >= self._n:
                raise GraphError(f"edge {e.src}->{e.dst} references a missing vertex")
        if not self.consensus <= set(range(len(self.loop_edges))):
            raise GraphError("consensus set references unknown loop edges")

    def copy(self) -> PoseGraph:
        g = PoseGraph()
        g._poses = self._poses.copy()
        g._n = self._n
        g.odom_edges = list(self.odom_edges)
        g.loop_edges = list(self.loop_edges)
        g.consensus = set(self.consensus)
        return g

    def digest(self) -> str:
        """SHA-256 over estimates, edge sets and consensus; equal iff bit-identical."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.poses).tobytes())
        for tag, edges in ((b"o", self.odom_edges), (b"l", self.loop_edges)):
            h.update(tag)
            for e in edges:
                h.update(np.array([e.src, e.dst], dtype=np.int64).tobytes())
                h.update(e.z_array.tobytes())
                h.update(e.omega.tobytes())
        h.update(repr(sorted(self.consensus)).encode())
        return h.hexdigest()


# -- operations -------------------------------------------------------------


def append_odometry(graph: PoseGraph, z: Pose2, omega) -> int:
    """Integrate ``z`` from the newest vertex and add the new odometry edge."""
    if graph.n_vertices == 0:
        raise GraphError("graph has no origin vertex")
    omega = check_information(omega)
    i = graph.n_vertices - 1
    j = graph.add_vertex(compose(graph.pose(i), z))
    graph.add_edge(EdgeRecord(i, j, z, omega))
    return j


def edge_error(edge: EdgeRecord, graph: PoseGraph) -> ErrorVec3:
    return boxminus(relative(graph.pose(edge.src), graph.pose(edge.dst)), edge.z)


def edge_chi2(edge: EdgeRecord, graph: PoseGraph) -> float:
    e = edge_error(edge, graph).to_array()
    return float(e @ edge.omega @ e)


def total_chi2(graph: PoseGraph) -> float:
    return sum(edge_chi2(e, graph) for e in graph.edges())


def take_snapshot(graph: PoseGraph, ids) -> Snapshot:
    ids = np.asarray(list(ids), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= graph.n_vertices):
        raise GraphError("snapshot ids out of range")
    return Snapshot(ids=ids, poses=graph.poses[ids].copy(), n_vertices=graph.n_vertices)


def restore(graph: PoseGraph, snap: Snapshot):
    if snap.ids.size and snap.ids.max() >= graph.n_vertices:
        raise GraphError("snapshot references vertices missing from the graph")
    graph.poses[snap.ids] = snap.poses
