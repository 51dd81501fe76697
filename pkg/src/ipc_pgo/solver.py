"""Trust-region (Powell Dog-Leg) least squares over a subgraph of SE(2) poses.

The cost is the scaled objective used while testing a loop closure::

    sum_{odometry} e^T (s * Omega) e  +  sum_{loop} e^T Omega e

with one vertex (the anchor) held fixed to remove the gauge freedom.
Poses are updated by right-composition ``x <- x o delta``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .geometry import ErrorVec3, normalize_angles, relative_arrays
from .graph import EdgeRecord, PoseGraph

logger = logging.getLogger(__name__)

DENSE_LIMIT = 300


class SolverError(RuntimeError):
    """Raised when the normal equations cannot be solved or residuals blow up."""


@dataclass(frozen=True)
class SolverConfig:
    s: float = 3.0
    max_iterations: int = 25
    rel_decrease_tol: float = 1e-6
    abs_grad_tol: float = 1e-9
    trust_radius_init: float = 1.0
    trust_radius_max: float = 1e4

    def __post_init__(self):
        if not self.s >= 1.0:
            raise ValueError(f"odometry scale s must be >= 1, got {self.s}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        for name in ("rel_decrease_tol", "abs_grad_tol", "trust_radius_init", "trust_radius_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SubgraphProblem:
    """Vertices, anchor and edge ids (into ``graph.odom_edges`` / ``graph.loop_edges``)."""

    vertices: Sequence[int]
    anchor: int
    odom_ids: list[int]
    loop_ids: list[int]

    def __post_init__(self):
        if self.anchor not in self.vertices:
            raise ValueError(f"anchor {self.anchor} is not one of the problem vertices")

    @property
    def size(self) -> int:
        return len(self.vertices)

    def edges(self, graph: PoseGraph) -> list[EdgeRecord]:
        return [graph.odom_edges[k] for k in self.odom_ids] + [graph.loop_edges[k] for k in self.loop_ids]


@dataclass
class SolveReport:
    iterations: int
    initial_objective: float
    final_objective: float
    converged: bool
    step_norm: float = 0.0
    grad_norm: float = 0.0
    accepted_objectives: list[float] = field(default_factory=list)


def full_problem(graph: PoseGraph, anchor: int = 0, loop_ids=None) -> SubgraphProblem:
    """The whole graph as one problem (batch optimization)."""
    if loop_ids is None:
        loop_ids = range(len(graph.loop_edges))
    return SubgraphProblem(
        vertices=range(graph.n_vertices),
        anchor=anchor,
        odom_ids=list(range(len(graph.odom_edges))),
        loop_ids=list(loop_ids),
    )


# -- linearization ------------------------------------------------------------


def _error_and_jacobians(xa: np.ndarray, xb: np.ndarray, z: np.ndarray):
    """Batched residuals (E,3) and Jacobians (E,3,3) wrt right perturbations of xa, xb."""
    p = relative_arrays(xa, xb)
    cz, sz = np.cos(z[:, 2]), np.sin(z[:, 2])
    tx = p[:, 0] - z[:, 0]
    ty = p[:, 1] - z[:, 1]
    e = np.empty_like(p)
    e[:, 0] = cz * tx + sz * ty
    e[:, 1] = -sz * tx + cz * ty
    e[:, 2] = normalize_angles(p[:, 2] - z[:, 2])

    n = len(p)
    ja = np.zeros((n, 3, 3))
    ja[:, 0, 0] = -cz
    ja[:, 0, 1] = -sz
    ja[:, 1, 0] = sz
    ja[:, 1, 1] = -cz
    # d(t_p)/d(theta_a) = (p_y, -p_x), rotated into the measurement frame
    ja[:, 0, 2] = cz * p[:, 1] - sz * p[:, 0]
    ja[:, 1, 2] = -sz * p[:, 1] - cz * p[:, 0]
    ja[:, 2, 2] = -1.0

    ce, se = np.cos(e[:, 2]), np.sin(e[:, 2])
    jb = np.zeros((n, 3, 3))
    jb[:, 0, 0] = ce
    jb[:, 0, 1] = -se
    jb[:, 1, 0] = se
    jb[:, 1, 1] = ce
    jb[:, 2, 2] = 1.0
    return e, ja, jb


def linearize_edge(edge: EdgeRecord, graph: PoseGraph):
    """Residual of ``edge`` and its 3x3 Jacobians wrt the from- and to-pose."""
    xa = graph.poses[edge.src][None]
    xb = graph.poses[edge.dst][None]
    e, ja, jb = _error_and_jacobians(xa, xb, edge.z_array[None])
    return ErrorVec3(*e[0]), ja[0], jb[0]


def objective(problem: SubgraphProblem, graph: PoseGraph, config: SolverConfig = SolverConfig()) -> float:
    """Scaled cost: ``s`` times the odometry chi2 plus the loop chi2."""
    t = EdgeTerms(problem, graph, config.s)
    return t.cost(graph.poses)


class EdgeTerms:
    """Edge data of a problem gathered into arrays once per solve."""

    def __init__(self, problem: SubgraphProblem, graph: PoseGraph, s: float):
        edges = problem.edges(graph)
        self.src = np.array([e.src for e in edges], dtype=np.int64)
        self.dst = np.array([e.dst for e in edges], dtype=np.int64)
        if edges:
            self.z = np.array([e.z_array for e in edges])
            w = np.array([e.omega for e in edges])
        else:
            self.z = np.zeros((0, 3))
            w = np.zeros((0, 3, 3))
        scale = np.ones(len(edges))
        scale[: len(problem.odom_ids)] = s
        self.weight = w * scale[:, None, None]

    def residuals(self, poses):
        e, _, _ = _error_and_jacobians(poses[self.src], poses[self.dst], self.z)
        return e

    def cost(self, poses) -> float:
        if len(self.src) == 0:
            return 0.0
        e = self.residuals(poses)
        return float(np.einsum("ni,nij,nj->", e, self.weight, e))


# -- solve --------------------------------------------------------------------


def _retract(x: np.ndarray, delta: np.ndarray) -> np.ndarray:
    c, s = np.cos(x[:, 2]), np.sin(x[:, 2])
    out = np.empty_like(x)
    out[:, 0] = x[:, 0] + c * delta[:, 0] - s * delta[:, 1]
    out[:, 1] = x[:, 1] + s * delta[:, 0] + c * delta[:, 1]
    out[:, 2] = normalize_angles(x[:, 2] + delta[:, 2])
    return out


class _NormalEquations:
    """Gauss-Newton matrix with a lazily computed factorization."""

    def __init__(self, H, n: int):
        self.H = H
        self.n = n
        self._solve = None

    def _factor(self):
        try:
            if self.n < DENSE_LIMIT:
                factor = scipy.linalg.cho_factor(self.H, check_finite=True)
                self._solve = lambda b: scipy.linalg.cho_solve(factor, b)
            else:
                self._solve = scipy.sparse.linalg.splu(self.H.tocsc()).solve
        except (np.linalg.LinAlgError, RuntimeError, ValueError) as exc:
            raise SolverError(f"normal equations are singular or indefinite: {exc}") from exc

    def solve(self, b):
        if self._solve is None:
            self._factor()
        x = self._solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite Gauss-Newton step")
        return x

    def quad(self, v) -> float:
        return float(v @ (self.H @ v))


def _dogleg(h_gn, g, ne: _NormalEquations, radius: float):
    gn_norm = np.linalg.norm(h_gn)
    if gn_norm <= radius:
        return h_gn
    g_norm2 = float(g @ g)
    alpha = g_norm2 / ne.quad(g)
    h_sd = -alpha * g
    sd_norm = math.sqrt(g_norm2) * alpha
    if sd_norm >= radius:
        return (radius / sd_norm) * h_sd
    # intersect the segment h_sd -> h_gn with the trust-region boundary
    d = h_gn - h_sd
    a = float(d @ d)
    b = 2.0 * float(h_sd @ d)
    c = sd_norm * sd_norm - radius * radius
    beta = (-b + math.sqrt(b * b - 4.0 * a * c)) / (2.0 * a)
    return h_sd + beta * d


def solve(problem: SubgraphProblem, graph: PoseGraph, config: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize the scaled objective in place; the anchor pose is never written.

    Non-convergence within ``max_iterations`` is reported, not raised.
    """
    verts = np.asarray(list(problem.vertices), dtype=np.int64)
    terms = EdgeTerms(problem, graph, config.s)
    local = np.full(graph.n_vertices, -1, dtype=np.int64)
    local[verts] = np.arange(len(verts))
    if np.any(local[terms.src] < 0) or np.any(local[terms.dst] < 0):
        raise ValueError("problem has an edge with an endpoint outside its vertex set")
    src, dst = local[terms.src], local[terms.dst]

    free = verts != problem.anchor
    var = np.full(len(verts), -1, dtype=np.int64)
    var[free] = np.arange(int(free.sum()))
    n = 3 * int(free.sum())

    x = graph.poses[verts].copy()

    def residuals(poses):
        e, ja, jb = _error_and_jacobians(poses[src], poses[dst], terms.z)
        if not np.all(np.isfinite(e)):
            raise SolverError("non-finite residual")
        return e, ja, jb

    def cost_of(e):
        return float(np.einsum("ni,nij,nj->", e, terms.weight, e))

    e, ja, jb = residuals(x)
    cost = cost_of(e)
    report = SolveReport(0, cost, cost, converged=False, accepted_objectives=[cost])
    if n == 0 or cost == 0.0:
        report.converged = True
        return report

    # block index bookkeeping for the sparse assembly
    va, vb = var[src], var[dst]
    off = np.arange(3)

    def normal_equations(e, ja, jb):
        we = np.einsum("nij,nj->ni", terms.weight, e)
        g = np.zeros(n)
        for v, j in ((va, ja), (vb, jb)):
            m = v >= 0
            contrib = np.einsum("nji,nj->ni", j[m], we[m])
            np.add.at(g, (3 * v[m][:, None] + off).ravel(), contrib.ravel())
        rows, cols, vals = [], [], []
        for v1, j1, v2, j2 in ((va, ja, va, ja), (va, ja, vb, jb), (vb, jb, va, ja), (vb, jb, vb, jb)):
            m = (v1 >= 0) & (v2 >= 0)
            if not m.any():
                continue
            blk = np.einsum("nki,nkl,nlj->nij", j1[m], terms.weight[m], j2[m])
            r = 3 * v1[m][:, None, None] + off[None, :, None]
            c = 3 * v2[m][:, None, None] + off[None, None, :]
            rows.append(np.broadcast_to(r, blk.shape).ravel())
            cols.append(np.broadcast_to(c, blk.shape).ravel())
            vals.append(blk.ravel())
        H = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        H = H.toarray() if n < DENSE_LIMIT else H.tocsc()
        return g, _NormalEquations(H, n)

    radius = config.trust_radius_init
    g, ne = normal_equations(e, ja, jb)
    h_gn = -ne.solve(g)
    step_norm = 0.0
    it = 0
    while True:
        grad_inf = float(np.max(np.abs(g)))
        if grad_inf <= config.abs_grad_tol:
            report.converged = True
            break
        if it >= config.max_iterations:
            break
        it += 1
        h = _dogleg(h_gn, g, ne, radius)
        step_norm = float(np.linalg.norm(h))
        predicted = -(float(g @ h) + 0.5 * ne.quad(h))
        delta = np.zeros_like(x)
        delta[free] = h.reshape(-1, 3)
        x_new = _retract(x, delta)
        e_new, ja_new, jb_new = residuals(x_new)
        cost_new = cost_of(e_new)
        actual = 0.5 * (cost - cost_new)
        rho = actual / predicted if predicted > 0 else -1.0

        if rho > 0 and cost_new <= cost:
            x, e, ja, jb = x_new, e_new, ja_new, jb_new
            old_cost, cost = cost, cost_new
            report.accepted_objectives.append(cost)
            if rho > 0.75:
                radius = min(max(radius, 2.0 * step_norm), config.trust_radius_max)
            elif rho < 0.25:
                radius *= 0.5
            g, ne = normal_equations(e, ja, jb)
            if cost == 0.0 or old_cost - cost <= config.rel_decrease_tol * old_cost:
                report.converged = True
                break
            h_gn = -ne.solve(g)
        else:
            radius *= 0.5
            if radius <= 1e-12 * (1.0 + float(np.linalg.norm(x))):
                report.converged = True
                break

    # anchor row is never touched: write back free vertices only
    graph.poses[verts[free]] = x[free]
    report.iterations = it
    report.final_objective = cost
    report.step_norm = step_norm
    report.grad_norm = float(np.max(np.abs(g))) if n else 0.0
    return report
