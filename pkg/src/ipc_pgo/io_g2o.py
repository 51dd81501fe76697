"""Planar g2o text format and the outlier label sidecar.

Only ``VERTEX_SE2`` and ``EDGE_SE2`` are understood; other tags are skipped
with a warning.  Information matrices are stored as the upper triangle in
row-major order (``i11 i12 i13 i22 i23 i33``).
"""
from __future__ import annotations

import io
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .geometry import Pose2, adjoint, inverse
from .graph import (
    EdgeRecord,
    GraphError,
    PoseGraph,
    information_from_upper,
    information_upper,
    is_positive_definite,
)

logger = logging.getLogger(__name__)

FLOAT_FMT = ".17g"


class G2OFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class LoadReport:
    """What the parser did beyond a straight read."""

    original_ids: list[int] = field(default_factory=list)
    remapped: bool = False
    skipped: dict[str, int] = field(default_factory=dict)
    flipped_edges: int = 0


def _floats(tokens, line_no):
    try:
        vals = [float(t) for t in tokens]
    except ValueError as exc:
        raise G2OFormatError(f"non-numeric field ({exc})", line_no) from None
    if not all(math.isfinite(v) for v in vals):
        raise G2OFormatError("non-finite field", line_no)
    return vals


def _int(token, line_no):
    try:
        return int(token)
    except ValueError:
        raise G2OFormatError(f"vertex id {token!r} is not an integer", line_no) from None


def _lines(source) -> Iterable[str]:
    if isinstance(source, str):
        return source.splitlines()
    return source


def parse_g2o_report(source: str | IO[str] | Iterable[str]) -> tuple[PoseGraph, LoadReport]:
    """Parse g2o text (a string, a file object or an iterable of lines).

    Vertex ids are remapped to ``0..n-1`` in increasing order of the file's
    ids.  Edges written against the temporal order are flipped, with the
    information matrix carried through the adjoint of the measurement.
    """
    vertices: dict[int, Pose2] = {}
    raw_edges = []
    report = LoadReport()
    for line_no, line in enumerate(_lines(source), start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        tag = tokens[0]
        if tag == "VERTEX_SE2":
            if len(tokens) != 5:
                raise G2OFormatError(f"VERTEX_SE2 expects 4 fields, got {len(tokens) - 1}", line_no)
            vid = _int(tokens[1], line_no)
            x, y, th = _floats(tokens[2:], line_no)
            if vid in vertices:
                raise G2OFormatError(f"duplicate vertex {vid}", line_no)
            vertices[vid] = Pose2(x, y, th)
        elif tag == "EDGE_SE2":
            if len(tokens) != 12:
                raise G2OFormatError(f"EDGE_SE2 expects 11 fields, got {len(tokens) - 1}", line_no)
            a, b = _int(tokens[1], line_no), _int(tokens[2], line_no)
            vals = _floats(tokens[3:], line_no)
            omega = information_from_upper(vals[3:])
            if not is_positive_definite(omega):
                raise G2OFormatError("information matrix is not positive definite", line_no)
            raw_edges.append((line_no, a, b, Pose2(*vals[:3]), omega))
        else:
            report.skipped[tag] = report.skipped.get(tag, 0) + 1

    for tag, count in report.skipped.items():
        logger.warning("skipped %d line(s) with unsupported tag %s", count, tag)

    order = sorted(vertices)
    report.original_ids = order
    report.remapped = order != list(range(len(order)))
    index = {vid: k for k, vid in enumerate(order)}
    graph = PoseGraph()
    for vid in order:
        graph.add_vertex(vertices[vid])

    for line_no, a, b, z, omega in raw_edges:
        if a not in index or b not in index:
            missing = a if a not in index else b
            raise G2OFormatError(f"edge references unknown vertex {missing}", line_no)
        a, b = index[a], index[b]
        if a == b:
            raise G2OFormatError(f"self-loop on vertex {a}", line_no)
        if a > b:
            a, b, z, omega = b, a, inverse(z), _flip_information(z, omega)
            report.flipped_edges += 1
        try:
            graph.add_edge(EdgeRecord(a, b, z, omega))
        except GraphError as exc:
            raise G2OFormatError(str(exc), line_no) from None
    # odometry order carries no meaning; loop order is the arrival order
    graph.odom_edges.sort(key=lambda e: e.src)
    return graph, report


def _flip_information(z: Pose2, omega: np.ndarray) -> np.ndarray:
    # the reversed edge's error is -Ad(z) e to first order
    ad_inv = np.linalg.inv(adjoint(z))
    o = ad_inv.T @ omega @ ad_inv
    return 0.5 * (o + o.T)


def parse_g2o(source) -> PoseGraph:
    return parse_g2o_report(source)[0]


def read_g2o(path: str | os.PathLike) -> tuple[PoseGraph, LoadReport]:
    with open(path, encoding="utf-8") as fh:
        return parse_g2o_report(fh)


def write_g2o(graph: PoseGraph, loop_ids: Iterable[int] | None = None) -> str:
    """Serialize vertices, then odometry edges, then loop edges.

    ``loop_ids`` restricts which loop edges are written (default: all).
    """
    out = io.StringIO()
    for k, p in enumerate(graph.poses):
        out.write(f"VERTEX_SE2 {k} {_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
    loops = graph.loop_edges if loop_ids is None else [graph.loop_edges[k] for k in loop_ids]
    for e in [*graph.odom_edges, *loops]:
        z = e.z
        info = " ".join(_fmt(v) for v in information_upper(e.omega))
        out.write(f"EDGE_SE2 {e.src} {e.dst} {_fmt(z.x)} {_fmt(z.y)} {_fmt(z.theta)} {info}\n")
    return out.getvalue()


def save_g2o(graph: PoseGraph, path, loop_ids=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_g2o(graph, loop_ids))


def _fmt(v) -> str:
    return format(float(v), FLOAT_FMT)


# -- label manifest -------------------------------------------------------------


@dataclass
class LabelManifest:
    """Positions (within E_l) of injected outlier loop closures."""

    name: str
    seed: int
    injected: set[int] = field(default_factory=set)

    def validate(self, n_loops: int):
        bad = sorted(k for k in self.injected if not 0 <= k < n_loops)
        if bad:
            raise G2OFormatError(f"label indices {bad[:5]} out of range for {n_loops} loop edges")


_HEADER = re.compile(r"^#\s*name=(?P<name>\S*)\s+seed=(?P<seed>-?\d+)\s*$")


def write_labels(manifest: LabelManifest) -> str:
    if any(c.isspace() for c in manifest.name):
        raise ValueError("dataset name must not contain whitespace")
    lines = [f"# name={manifest.name} seed={manifest.seed}"]
    lines += [str(k) for k in sorted(manifest.injected)]
    return "\n".join(lines) + "\n"


def read_labels(text: str, n_loops: int | None = None) -> LabelManifest:
    lines = text.splitlines()
    if not lines:
        raise G2OFormatError("label file is empty")
    m = _HEADER.match(lines[0])
    if m is None:
        raise G2OFormatError(f"bad label header {lines[0]!r}", 1)
    injected = set()
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            injected.add(int(line))
        except ValueError:
            raise G2OFormatError(f"label {line!r} is not an integer", line_no) from None
    manifest = LabelManifest(m["name"], int(m["seed"]), injected)
    if n_loops is not None:
        manifest.validate(n_loops)
    return manifest
