"""Classification and trajectory metrics: precision/recall/F1, ATE, RPE, ACTxC."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from .geometry import Pose2, normalize_angles, relative_arrays
from .graph import PoseGraph, edge_chi2
from .io_g2o import LabelManifest
from .ipc import DecisionRecord, chi2_quantile
from .solver import SolveReport, SolverConfig, full_problem, solve


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def classify(accepted: Iterable[int], manifest: LabelManifest, n_loops: int) -> ConfusionCounts:
    """Confusion counts with membership in ``accepted`` as the positive prediction.

    Loop edges ``0..n_loops-1`` are evaluated; those in ``manifest.injected``
    are outliers, the rest inliers.
    """
    manifest.validate(n_loops)
    accepted = set(accepted)
    stray = [k for k in accepted if not 0 <= k < n_loops]
    if stray:
        raise ValueError(f"accepted ids {stray[:5]} out of range for {n_loops} loop edges")
    tp = fp = tn = fn = 0
    for k in range(n_loops):
        outlier = k in manifest.injected
        if k in accepted:
            fp += outlier
            tp += not outlier
        else:
            tn += outlier
            fn += not outlier
    return ConfusionCounts(tp, fp, tn, fn)


def classify_by_chi2(graph: PoseGraph, manifest: LabelManifest, alpha_th: float = 0.95, dof: int = 3) -> ConfusionCounts:
    """For estimators that do not classify: a loop edge is predicted inlier
    iff its chi2 at the final estimates is below the ``alpha_th`` quantile."""
    gate = chi2_quantile(alpha_th, dof)
    positive = {k for k, e in enumerate(graph.loop_edges) if edge_chi2(e, graph) < gate}
    return classify(positive, manifest, len(graph.loop_edges))


def precision_recall_f1(c: ConfusionCounts) -> tuple[float, float, float]:
    """Zero denominators: precision is 1 with no positives, recall is 1 with no
    true inliers, F1 is 0 when both precision and recall are 0."""
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 1.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# -- trajectory metrics ---------------------------------------------------------


def _as_array(traj) -> np.ndarray:
    if isinstance(traj, PoseGraph):
        return traj.poses.copy()
    a = np.array([p.to_array() if isinstance(p, Pose2) else p for p in traj], dtype=float)
    return a.reshape(-1, 3)


def _check_pair(est, ref):
    est, ref = _as_array(est), _as_array(ref)
    if len(est) != len(ref):
        raise ValueError(f"trajectory lengths differ: {len(est)} vs {len(ref)}")
    if len(est) < 2:
        raise ValueError("trajectories need at least two poses")
    return est, ref


def align_se2(est, ref) -> Pose2:
    """Rigid transform ``T`` minimizing ``sum |T * est_i - ref_i|^2`` over positions."""
    est, ref = _check_pair(est, ref)
    p, q = est[:, :2], ref[:, :2]
    pc, qc = p.mean(axis=0), q.mean(axis=0)
    p0, q0 = p - pc, q - qc
    cross = float(np.sum(p0[:, 0] * q0[:, 1] - p0[:, 1] * q0[:, 0]))
    dot = float(np.sum(p0 * q0))
    th = math.atan2(cross, dot)
    c, s = math.cos(th), math.sin(th)
    t = qc - np.array([c * pc[0] - s * pc[1], s * pc[0] + c * pc[1]])
    return Pose2(t[0], t[1], th)


def ate(est, ref) -> float:
    """RMSE of position residuals after :func:`align_se2`."""
    est, ref = _check_pair(est, ref)
    T = align_se2(est, ref)
    c, s = math.cos(T.theta), math.sin(T.theta)
    moved = np.column_stack([c * est[:, 0] - s * est[:, 1] + T.x, s * est[:, 0] + c * est[:, 1] + T.y])
    return float(np.sqrt(np.mean(np.sum((moved - ref[:, :2]) ** 2, axis=1))))


def _step_errors(est, ref) -> np.ndarray:
    d_est = relative_arrays(est[:-1], est[1:])
    d_ref = relative_arrays(ref[:-1], ref[1:])
    return relative_arrays(d_ref, d_est)


def rpe(est, ref) -> float:
    """RMSE of the translational error between consecutive relative poses."""
    est, ref = _check_pair(est, ref)
    err = _step_errors(est, ref)
    return float(np.sqrt(np.mean(err[:, 0] ** 2 + err[:, 1] ** 2)))


def rpe_heading(est, ref) -> float:
    est, ref = _check_pair(est, ref)
    err = _step_errors(est, ref)
    return float(np.sqrt(np.mean(normalize_angles(err[:, 2]) ** 2)))


def actxc(records: Sequence[DecisionRecord] | Sequence[float]) -> float:
    """Mean wall time per loop-closure decision."""
    times = [r.wall_time if isinstance(r, DecisionRecord) else float(r) for r in records]
    if not times:
        raise ValueError("no loop-closure decisions to average")
    return float(np.mean(times))


def reference_trajectory(clean: PoseGraph, config: SolverConfig | None = None) -> tuple[PoseGraph, SolveReport]:
    """Batch-optimize an outlier-free graph (``s = 1``) to serve as ground truth."""
    if config is None:
        config = SolverConfig(s=1.0, max_iterations=100, rel_decrease_tol=1e-12)
    g = clean.copy()
    report = solve(full_problem(g), g, config)
    return g, report


# -- report ---------------------------------------------------------------------


@dataclass
class MetricReport:
    dataset: str
    seed: int
    percentage: float
    precision: float
    recall: float
    f1: float
    ate: float
    rpe: float
    actxc: float
    rpe_heading: float = float("nan")
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> MetricReport:
        data = json.loads(text)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> MetricReport:
        raw = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            v = raw[f.name]
            kwargs[f.name] = v if f.type == "str" else int(v) if f.type == "int" else float(v)
        return cls(**kwargs)


def _fmt(v):
    return format(v, ".17g") if isinstance(v, float) else str(v)


def evaluate(
    accepted: Iterable[int],
    manifest: LabelManifest,
    n_loops: int,
    est,
    ref,
    records: Sequence[DecisionRecord] | Sequence[float] = (),
    percentage: float = float("nan"),
) -> MetricReport:
    counts = classify(accepted, manifest, n_loops)
    p, r, f1 = precision_recall_f1(counts)
    return MetricReport(
        dataset=manifest.name,
        seed=manifest.seed,
        percentage=percentage,
        precision=p,
        recall=r,
        f1=f1,
        ate=ate(est, ref),
        rpe=rpe(est, ref),
        actxc=actxc(records) if len(records) else float("nan"),
        rpe_heading=rpe_heading(est, ref),
        tp=counts.tp,
        fp=counts.fp,
        tn=counts.tn,
        fn=counts.fn,
    )
