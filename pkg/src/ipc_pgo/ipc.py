"""Incremental consensus over loop closures.

Each incoming loop closure is tested on the smallest interval of the
trajectory that no accepted loop crosses.  The interval is optimized on
its own (odometry weighted by ``s``), every edge inside it must then pass a
chi-squared gate, and the closure is either accepted into the consensus set
with the update propagated rigidly to later poses, or rejected with the
interval restored bit-for-bit.
"""
from __future__ import annotations

import functools
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np
import scipy.stats

from .geometry import Pose2, compose, inverse, compose_arrays
from .graph import (
    EdgeKind,
    EdgeRecord,
    GraphError,
    PoseGraph,
    check_information,
    restore,
    take_snapshot,
)
from .solver import SolverConfig, SolverError, SubgraphProblem, solve, EdgeTerms

logger = logging.getLogger(__name__)


@functools.lru_cache(maxsize=None)
def chi2_quantile(alpha: float, dof: int) -> float:
    """``alpha``-quantile of the chi-squared distribution with ``dof`` degrees of freedom."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if int(dof) != dof or dof < 1:
        raise ValueError(f"dof must be a positive integer, got {dof}")
    return float(scipy.stats.chi2.ppf(alpha, int(dof)))


@dataclass(frozen=True)
class IpcConfig:
    alpha: float = 0.95
    dof: int = 3
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.dof < 1:
            raise ValueError("dof must be >= 1")

    @property
    def threshold(self) -> float:
        return chi2_quantile(self.alpha, self.dof)


@dataclass
class DecisionRecord:
    edge_id: int
    src: int
    dst: int
    accepted: bool
    subgraph_size: int
    max_chi2: float
    threshold: float
    wall_time: float
    problem: SubgraphProblem | None = field(default=None, repr=False, compare=False)

    def log_line(self, timing: bool = True) -> str:
        fields = [
            str(self.edge_id),
            "1" if self.accepted else "0",
            str(self.subgraph_size),
            format(self.max_chi2, ".17g"),
            format(self.threshold, ".17g"),
        ]
        if timing:
            fields.append(format(self.wall_time, ".6f"))
        return ",".join(fields)


DECISION_LOG_HEADER = "edge,accepted,subgraph_size,worst_chi2,threshold,seconds"


def format_decision_log(records: Iterable[DecisionRecord], timing: bool = True) -> str:
    header = DECISION_LOG_HEADER if timing else DECISION_LOG_HEADER.rsplit(",", 1)[0]
    return "\n".join([header, *(r.log_line(timing) for r in records)]) + "\n"


def parse_decision_log(text: str) -> list[dict]:
    rows = []
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        return rows
    header = lines[0].split(",")
    for ln in lines[1:]:
        vals = ln.split(",")
        if len(vals) != len(header):
            raise ValueError(f"malformed decision log line: {ln!r}")
        row = dict(zip(header, vals))
        out = {
            "edge": int(row["edge"]),
            "accepted": row["accepted"] == "1",
            "subgraph_size": int(row["subgraph_size"]),
            "worst_chi2": float(row["worst_chi2"]),
            "threshold": float(row["threshold"]),
        }
        if "seconds" in row:
            out["seconds"] = float(row["seconds"])
        rows.append(out)
    return rows


# -- subgraph discovery -------------------------------------------------------


def find_independent_subgraph(graph: PoseGraph, i: int, j: int, candidate: int | None = None) -> SubgraphProblem:
    """Smallest interval ``[a, j]`` with ``a <= i`` that no accepted loop enters from before ``a``.

    An accepted edge ``(k, g)`` with ``k < a < g <= j`` forces the interval
    to grow to ``k``; the expansion repeats until no such edge is left.
    ``candidate`` is the id of the loop edge under test, if already stored.
    """
    if not i < j:
        raise ValueError(f"loop closure endpoints must satisfy i < j, got ({i}, {j})")
    if j >= graph.n_vertices:
        raise GraphError(f"vertex {j} does not exist")
    accepted = [(graph.loop_edges[k].src, graph.loop_edges[k].dst, k) for k in sorted(graph.consensus)]
    a = i
    while True:
        entering = [src for src, dst, _ in accepted if src < a < dst <= j]
        if not entering:
            break
        a = min(entering)
    loop_ids = [k for src, dst, k in accepted if a <= src and dst <= j]
    if candidate is not None and candidate not in graph.consensus:
        loop_ids.append(candidate)
    odom_ids = [k for k, e in enumerate(graph.odom_edges) if a <= e.src and e.dst <= j]
    return SubgraphProblem(vertices=range(a, j + 1), anchor=a, odom_ids=odom_ids, loop_ids=loop_ids)


# -- gating -------------------------------------------------------------------


def problem_chi2(problem: SubgraphProblem, graph: PoseGraph) -> tuple[list[EdgeRecord], np.ndarray]:
    """Unscaled chi2 of every edge in ``problem`` at the current estimates."""
    edges = problem.edges(graph)
    terms = EdgeTerms(problem, graph, 1.0)
    if not edges:
        return edges, np.zeros(0)
    e = terms.residuals(graph.poses)
    return edges, np.einsum("ni,nij,nj->n", e, terms.weight, e)


def consensus_test(problem: SubgraphProblem, graph: PoseGraph, config: IpcConfig = IpcConfig()):
    """Gate every edge of ``problem`` (odometry included) at ``chi2 < threshold``.

    Returns ``(passed, worst_edge, worst_chi2)``.
    """
    edges, chi2 = problem_chi2(problem, graph)
    if not edges:
        return True, None, 0.0
    k = int(np.argmax(chi2))
    worst = float(chi2[k])
    return bool(worst < config.threshold), edges[k], worst


# -- propagation --------------------------------------------------------------


def propagate(graph: PoseGraph, j: int, old: Pose2, new: Pose2):
    """Apply the rigid correction ``new o inverse(old)`` to every vertex after ``j``."""
    if j + 1 >= graph.n_vertices:
        return
    delta = compose(new, inverse(old)).to_array()
    tail = graph.poses[j + 1 :]
    tail[:] = compose_arrays(delta[None], tail)


# -- engine -------------------------------------------------------------------


def process_measurement(
    graph: PoseGraph,
    i: int,
    j: int,
    z: Pose2,
    omega,
    config: IpcConfig = IpcConfig(),
    edge_id: int | None = None,
) -> DecisionRecord | int:
    """Dispatch one measurement.

    Odometry (``j == i + 1``) returns the id of vertex ``j``; a loop closure
    returns its :class:`DecisionRecord`.
    """
    omega = check_information(omega)
    if j == i + 1:
        if j == graph.n_vertices:
            if i != graph.n_vertices - 1:
                raise GraphError(f"odometry from {i} does not extend the newest vertex")
            j = graph.add_vertex(compose(graph.pose(i), z))
            graph.add_edge(EdgeRecord(i, j, z, omega))
        else:
            # repeated odometry between existing vertices
            graph.add_edge(EdgeRecord(i, j, z, omega))
        return j
    if not 0 <= i < j:
        raise GraphError(f"loop closure ({i}, {j}) is not in canonical orientation")
    if j >= graph.n_vertices:
        raise GraphError(f"loop closure references future vertex {j}")

    t0 = time.perf_counter()
    _, cand = graph.add_edge(EdgeRecord(i, j, z, omega))
    problem = find_independent_subgraph(graph, i, j, candidate=cand)
    snap = take_snapshot(graph, problem.vertices)
    old_j = graph.pose(j)
    try:
        solve(problem, graph, config.solver)
        passed, _, worst = consensus_test(problem, graph, config)
    except SolverError as exc:
        logger.warning("solve failed for loop (%d, %d): %s; rejecting", i, j, exc)
        passed, worst = False, float("inf")

    if passed:
        graph.consensus.add(cand)
        propagate(graph, j, old_j, graph.pose(j))
    else:
        restore(graph, snap)
        graph.loop_edges.pop()
    return DecisionRecord(
        edge_id=cand if edge_id is None else edge_id,
        src=i,
        dst=j,
        accepted=passed,
        subgraph_size=problem.size,
        max_chi2=worst,
        threshold=config.threshold,
        wall_time=time.perf_counter() - t0,
        problem=problem if passed else None,
    )


@dataclass
class Measurement:
    src: int
    dst: int
    z: Pose2
    omega: np.ndarray
    edge_id: int | None = None

    @property
    def kind(self) -> EdgeKind:
        return EdgeKind.ODOMETRY if self.dst == self.src + 1 else EdgeKind.LOOP


def measurement_stream(graph: PoseGraph) -> Iterator[Measurement]:
    """Replay a stored graph in arrival order.

    Edges are ordered by their later vertex, odometry first at equal index,
    loops in their stored order.  ``edge_id`` of a loop is its index in
    ``graph.loop_edges``.
    """
    items = []
    for k, e in enumerate(graph.odom_edges):
        items.append((e.dst, 0, k, Measurement(e.src, e.dst, e.z, e.omega)))
    for k, e in enumerate(graph.loop_edges):
        items.append((e.dst, 1, k, Measurement(e.src, e.dst, e.z, e.omega, edge_id=k)))
    items.sort(key=lambda t: t[:3])
    for *_, m in items:
        yield m


class IpcEngine:
    """Owns a growing pose graph and feeds it measurements one at a time."""

    def __init__(self, origin: Pose2 = Pose2(), config: IpcConfig = IpcConfig()):
        self.graph = PoseGraph(origin)
        self.config = config
        self.records: list[DecisionRecord] = []
        # maps engine loop-edge id -> caller's edge id
        self.accepted_ids: list[int] = []

    def process(self, m: Measurement) -> DecisionRecord | int:
        out = process_measurement(self.graph, m.src, m.dst, m.z, m.omega, self.config, m.edge_id)
        if isinstance(out, DecisionRecord):
            self.records.append(out)
            if out.accepted:
                self.accepted_ids.append(out.edge_id)
        return out

    def run(self, measurements: Iterable[Measurement]) -> IpcEngine:
        for m in measurements:
            self.process(m)
        return self


def run_ipc(graph: PoseGraph, config: IpcConfig = IpcConfig()) -> IpcEngine:
    """Stream ``graph``'s measurements through a fresh engine rooted at its first vertex."""
    return IpcEngine(graph.pose(0), config).run(measurement_stream(graph))
