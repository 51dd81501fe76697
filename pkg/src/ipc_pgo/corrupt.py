"""Synthetic false loop closures, appended as a percentage of the true ones.

All sampling comes from one ``numpy.random.Generator`` (PCG64) seeded with
``OutlierSpec.seed``, so a given graph and spec always produce the same
corrupted graph on every platform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose2, boxminus, relative
from .graph import EdgeRecord, GraphError, PoseGraph
from .io_g2o import LabelManifest

POLICIES = ("random", "local")
MAX_DRAWS = 100_000


@dataclass(frozen=True)
class OutlierSpec:
    """How many outliers to add and how to draw them.

    ``translation_range`` defaults to the diagonal of the trajectory's
    bounding box.  ``min_chi2``, when set, redraws any outlier whose chi2
    against the current estimates falls below it (useful for building
    benchmarks where every outlier is gross by construction).
    """

    percentage: float
    policy: str = "random"
    seed: int = 0
    local_window: int = 20
    translation_range: float | None = None
    shuffle: bool = True
    min_chi2: float | None = None

    def __post_init__(self):
        if not self.percentage >= 0:
            raise ValueError(f"percentage must be >= 0, got {self.percentage}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.local_window < 2:
            raise ValueError("local_window must be at least 2")
        if self.translation_range is not None and not self.translation_range > 0:
            raise ValueError("translation_range must be positive")


def outlier_count(percentage: float, n_true: int) -> int:
    """``round(percentage / 100 * n_true)`` with halves rounded up."""
    return int(math.floor(percentage / 100.0 * n_true + 0.5))


def _bbox_diagonal(poses: np.ndarray) -> float:
    span = poses[:, :2].max(axis=0) - poses[:, :2].min(axis=0)
    d = float(np.hypot(*span))
    return d if d > 0 else 1.0


def _draw_pair(rng: np.random.Generator, n: int, spec: OutlierSpec) -> tuple[int, int]:
    for _ in range(MAX_DRAWS):
        if spec.policy == "random":
            a, b = sorted(int(v) for v in rng.integers(0, n, size=2))
        else:
            a = int(rng.integers(0, n))
            b = a + int(rng.integers(2, spec.local_window + 1))
        if b - a > 1 and b < n:
            return a, b
    raise GraphError("could not draw a valid outlier endpoint pair")


def inject(graph: PoseGraph, spec: OutlierSpec, name: str = "graph") -> tuple[PoseGraph, LabelManifest]:
    """Return a corrupted copy of ``graph`` and the manifest of injected loop indices."""
    n = graph.n_vertices
    true_loops = list(graph.loop_edges)
    if not true_loops:
        raise GraphError("graph has no loop closures to calibrate outliers against")
    if n < 3:
        raise GraphError("graph needs at least 3 vertices to place a loop closure")

    rng = np.random.default_rng(spec.seed)
    corrupted = graph.copy()
    count = outlier_count(spec.percentage, len(true_loops))
    if count == 0:
        return corrupted, LabelManifest(name, spec.seed, set())

    t_range = spec.translation_range or _bbox_diagonal(graph.poses)
    true_keys = {(e.src, e.dst, e.z) for e in true_loops}
    injected = []
    for _ in range(count):
        for _ in range(MAX_DRAWS):
            a, b = _draw_pair(rng, n, spec)
            tx, ty = rng.uniform(-t_range, t_range, size=2)
            # uniform on [-pi, pi) negated -> (-pi, pi]
            theta = -rng.uniform(-math.pi, math.pi)
            z = Pose2(tx, ty, theta)
            omega = true_loops[int(rng.integers(len(true_loops)))].omega
            if (a, b, z) in true_keys:
                continue
            if spec.min_chi2 is not None:
                err = boxminus(relative(graph.pose(a), graph.pose(b)), z).to_array()
                if err @ omega @ err < spec.min_chi2:
                    continue
            break
        else:
            raise GraphError("could not draw an outlier satisfying the OutlierSpec constraints")
        injected.append(EdgeRecord(a, b, z, omega))

    loops = true_loops + injected
    flags = [False] * len(true_loops) + [True] * len(injected)
    if spec.shuffle:
        perm = rng.permutation(len(loops))
        loops = [loops[k] for k in perm]
        flags = [flags[k] for k in perm]
    corrupted.loop_edges = loops
    corrupted.consensus = set()
    labels = {k for k, is_out in enumerate(flags) if is_out}
    return corrupted, LabelManifest(name, spec.seed, labels)
