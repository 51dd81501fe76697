"""Synthetic planar pose graphs with known ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, compose_arrays, relative_arrays
from .graph import EdgeRecord, PoseGraph


@dataclass
class SyntheticGraph:
    graph: PoseGraph  # estimates initialized by dead reckoning
    truth: np.ndarray  # (n, 3) ground-truth poses


def _headings(xy: np.ndarray) -> np.ndarray:
    d = np.diff(xy, axis=0)
    th = np.arctan2(d[:, 1], d[:, 0])
    return np.append(th, th[-1])


def _ring(rows: int, cols: int) -> list[tuple[int, int]]:
    """Boundary cells of the lattice in counter-clockwise order from (0, 0)."""
    ring = [(x, 0) for x in range(cols)]
    ring += [(cols - 1, y) for y in range(1, rows)]
    ring += [(x, rows - 1) for x in range(cols - 2, -1, -1)]
    ring += [(0, y) for y in range(rows - 2, 0, -1)]
    return ring


def build_graph(
    truth: np.ndarray,
    loops: list[tuple[int, int]],
    odom_information,
    loop_information,
    odom_noise: tuple[float, float] = (0.0, 0.0),
    rng: np.random.Generator | None = None,
) -> SyntheticGraph:
    """Graph with odometry from ``truth`` (optionally noisy) and exact loop closures."""
    n = len(truth)
    steps = relative_arrays(truth[:-1], truth[1:])
    sigma_t, sigma_th = odom_noise
    if sigma_t > 0 or sigma_th > 0:
        rng = rng or np.random.default_rng()
        noise = np.column_stack([
            rng.normal(0.0, sigma_t, n - 1),
            rng.normal(0.0, sigma_t, n - 1),
            rng.normal(0.0, sigma_th, n - 1),
        ])
        steps = compose_arrays(steps, noise)
    g = PoseGraph(Pose2.from_array(truth[0]))
    for k in range(n - 1):
        z = Pose2.from_array(steps[k])
        x = compose_arrays(g.poses[k][None], steps[k][None])[0]
        g.add_vertex(Pose2.from_array(x))
        g.add_edge(EdgeRecord(k, k + 1, z, odom_information))
    for a, b in loops:
        z = relative_arrays(truth[a][None], truth[b][None])[0]
        g.add_edge(EdgeRecord(a, b, Pose2.from_array(z), loop_information))
    return SyntheticGraph(g, truth)


def grid_world(
    rows: int = 10,
    cols: int = 10,
    n_loops: int = 20,
    spacing: float = 1.0,
    odom_information=None,
    loop_information=None,
    odom_noise: tuple[float, float] = (0.0, 0.0),
    seed: int | None = None,
) -> SyntheticGraph:
    """Lawnmower sweep over a ``rows x cols`` lattice, then a revisit leg.

    After the sweep the robot walks the lattice boundary for ``n_loops``
    steps; each revisited cell yields one loop closure to the pose that
    first visited it.  A 10 x 10 lattice with 20 loops has 120 poses.
    """
    if odom_information is None:
        odom_information = 1e4 * np.eye(3)
    if loop_information is None:
        loop_information = np.eye(3)
    cells = []
    for y in range(rows):
        xs = range(cols) if y % 2 == 0 else range(cols - 1, -1, -1)
        cells += [(x, y) for x in xs]
    first_visit = {c: k for k, c in enumerate(cells)}

    ring = _ring(rows, cols)
    pos = ring.index(cells[-1])
    step = 1 if cells[-1][0] == 0 else -1
    loops = []
    for _ in range(n_loops):
        pos = (pos + step) % len(ring)
        cell = ring[pos]
        loops.append((first_visit[cell], len(cells)))
        cells.append(cell)

    xy = spacing * np.array(cells, dtype=float)
    truth = np.column_stack([xy, _headings(xy)])
    rng = np.random.default_rng(seed)
    return build_graph(truth, loops, odom_information, loop_information, odom_noise, rng)


def random_walk_graph(
    rng: np.random.Generator,
    n_poses: int,
    n_loops: int,
    odom_noise: tuple[float, float] = (0.0, 0.0),
    information=None,
) -> SyntheticGraph:
    """Random planar walk of ``n_poses`` with ``n_loops`` exact closures between random pose pairs."""
    if information is None:
        information = np.diag([1e4, 1e4, 4e4])
    turns = rng.uniform(-math.pi / 3, math.pi / 3, n_poses - 1)
    dist = rng.uniform(0.5, 1.5, n_poses - 1)
    steps = np.column_stack([dist, np.zeros(n_poses - 1), turns])
    truth = np.zeros((n_poses, 3))
    for k in range(n_poses - 1):
        truth[k + 1] = compose_arrays(truth[k][None], steps[k][None])[0]
    pairs = [(a, b) for a in range(n_poses) for b in range(a + 2, n_poses)]
    pick = rng.choice(len(pairs), size=min(n_loops, len(pairs)), replace=False)
    loops = sorted(pairs[k] for k in pick)
    return build_graph(truth, loops, information, information, odom_noise, rng)
