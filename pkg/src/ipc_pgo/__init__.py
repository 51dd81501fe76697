"""Incremental consensus-based loop-closure validation for planar pose graphs."""

__version__ = "0.1.0"

from .geometry import ErrorVec3, Pose2, boxminus, compose, inverse, normalize_angle, relative
from .graph import EdgeKind, EdgeRecord, PoseGraph, append_odometry, edge_chi2, edge_error
from .solver import SolveReport, SolverConfig, SolverError, SubgraphProblem, solve
from .ipc import (
    DecisionRecord,
    IpcConfig,
    IpcEngine,
    chi2_quantile,
    consensus_test,
    find_independent_subgraph,
    process_measurement,
    propagate,
    run_ipc,
)
from .io_g2o import LabelManifest, parse_g2o, read_g2o, write_g2o
from .corrupt import OutlierSpec, inject
from .evaluation import ConfusionCounts, MetricReport, align_se2, ate, classify, precision_recall_f1, rpe

__all__ = [
    "ConfusionCounts", "DecisionRecord", "EdgeKind", "EdgeRecord", "ErrorVec3", "IpcConfig",
    "IpcEngine", "LabelManifest", "MetricReport", "OutlierSpec", "Pose2", "PoseGraph",
    "SolveReport", "SolverConfig", "SolverError", "SubgraphProblem", "align_se2",
    "append_odometry", "ate", "boxminus", "chi2_quantile", "classify", "compose",
    "consensus_test", "edge_chi2", "edge_error", "find_independent_subgraph", "inject",
    "inverse", "normalize_angle", "parse_g2o", "precision_recall_f1", "process_measurement",
    "propagate", "read_g2o", "relative", "rpe", "run_ipc", "solve", "write_g2o",
]
