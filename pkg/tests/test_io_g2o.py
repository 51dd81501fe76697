import io
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ipc_pgo import OutlierSpec, inject
from ipc_pgo.geometry import Pose2
from ipc_pgo.graph import EdgeKind, edge_chi2
from ipc_pgo.io_g2o import (
    G2OFormatError,
    LabelManifest,
    parse_g2o,
    parse_g2o_report,
    read_g2o,
    read_labels,
    save_g2o,
    write_g2o,
    write_labels,
)

from builders import random_graph
from oracles import edge_error_direct


def assert_graphs_equal(a, b):
    assert a.poses.tobytes() == b.poses.tobytes()
    assert a.odom_edges == b.odom_edges
    assert a.loop_edges == b.loop_edges


def test_vertex_line():
    g = parse_g2o("VERTEX_SE2 0 0.0 0.0 0.0")
    assert g.n_vertices == 1 and g.pose(0) == Pose2()


def test_identity_information_edge():
    g = parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n")
    (e,) = g.odom_edges
    assert e.kind is EdgeKind.ODOMETRY and e.z == Pose2(1, 0, 0)
    np.testing.assert_array_equal(e.omega, np.eye(3))
    assert not g.loop_edges


def test_upper_triangle_row_major():
    g = parse_g2o("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nEDGE_SE2 0 1 1 0 0 4 1 0.5 3 0.2 2\n")
    np.testing.assert_array_equal(g.odom_edges[0].omega, [[4, 1, 0.5], [1, 3, 0.2], [0.5, 0.2, 2]])


def test_empty_graph_writes_nothing():
    assert write_g2o(parse_g2o("")) == ""


def test_single_vertex_round_trip():
    g = parse_g2o("VERTEX_SE2 0 1.5 -2 0.25\n")
    assert write_g2o(g) == "VERTEX_SE2 0 1.5 -2 0.25\n"
    assert_graphs_equal(parse_g2o(write_g2o(g)), g)


@given(st.integers(0, 2**32 - 1), st.integers(3, 30), st.integers(0, 10))
def test_round_trip_random_graphs(seed, n, n_loops):
    g = random_graph(np.random.default_rng(seed), n=n, n_loops=n_loops)
    text = write_g2o(g)
    h = parse_g2o(text)
    assert_graphs_equal(h, g)
    assert write_g2o(h) == text


def test_file_round_trip(tmp_path, rng):
    g = random_graph(rng, n=10, n_loops=3)
    save_g2o(g, tmp_path / "g.g2o")
    h, report = read_g2o(tmp_path / "g.g2o")
    assert_graphs_equal(h, g)
    assert not report.remapped and report.flipped_edges == 0


def test_line_order_independence(rng):
    g = random_graph(rng, n=10, n_loops=4)
    lines = write_g2o(g).splitlines()
    vertices = [ln for ln in lines if ln.startswith("VERTEX")]
    odom = [ln for ln in lines if ln.startswith("EDGE")][: len(g.odom_edges)]
    loops = [ln for ln in lines if ln.startswith("EDGE")][len(g.odom_edges):]
    for _ in range(5):
        # any interleaving works as long as loop closures keep their arrival order
        pool = [vertices[k] for k in rng.permutation(len(vertices))] + [odom[k] for k in rng.permutation(len(odom))]
        slots = sorted(rng.choice(len(pool) + len(loops), size=len(loops), replace=False))
        mixed, it_pool, it_loop = [], iter(pool), iter(loops)
        for k in range(len(pool) + len(loops)):
            mixed.append(next(it_loop) if k in slots else next(it_pool))
        assert_graphs_equal(parse_g2o(mixed), g)


def test_remap_non_contiguous_ids():
    text = "VERTEX_SE2 10 0 0 0\nVERTEX_SE2 30 2 0 0\nVERTEX_SE2 20 1 0 0\nEDGE_SE2 10 20 1 0 0 1 0 0 1 0 1\nEDGE_SE2 20 30 1 0 0 1 0 0 1 0 1\n"
    g, report = parse_g2o_report(text)
    assert report.remapped and report.original_ids == [10, 20, 30]
    np.testing.assert_array_equal(g.poses[:, 0], [0, 1, 2])
    assert [(e.src, e.dst) for e in g.odom_edges] == [(0, 1), (1, 2)]


def test_reversed_edge_is_flipped_with_consistent_information(rng):
    xa, xb = np.array([0.3, -0.2, 0.4]), np.array([2.0, 1.0, 1.3])
    z_ba = Pose2(-1.2, 0.7, -0.9)
    a = rng.normal(size=(3, 3))
    omega = a @ a.T + np.eye(3)
    up = " ".join(repr(float(v)) for v in (omega[0, 0], omega[0, 1], omega[0, 2], omega[1, 1], omega[1, 2], omega[2, 2]))
    text = (f"VERTEX_SE2 0 {xa[0]} {xa[1]} {xa[2]}\nVERTEX_SE2 1 {xb[0]} {xb[1]} {xb[2]}\n"
            f"VERTEX_SE2 2 5 5 0\nEDGE_SE2 2 0 {z_ba.x} {z_ba.y} {z_ba.theta} {up}\n")
    # place vertex 2 so the reversed edge has a small residual
    from ipc_pgo.geometry import compose, inverse
    x2 = compose(compose(Pose2(*xa), inverse(z_ba)), Pose2(1e-4, -2e-4, 1e-4))
    text = text.replace("VERTEX_SE2 2 5 5 0", f"VERTEX_SE2 2 {x2.x!r} {x2.y!r} {x2.theta!r}")
    g, report = parse_g2o_report(text)
    assert report.flipped_edges == 1
    (e,) = g.loop_edges
    assert (e.src, e.dst) == (0, 2)
    err = edge_error_direct(g.poses[2], g.poses[0], z_ba.to_array())
    assert edge_chi2(e, g) == pytest.approx(err @ omega @ err, rel=1e-3)


@pytest.mark.parametrize(
    "text, line",
    [
        ("VERTEX_SE2 0 0 0\n", 1),
        ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 a 0 0\n", 2),
        ("VERTEX_SE2 0 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n", 2),
        ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\n\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 -1\n", 4),
        ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 0 1 0 0\n", 2),
        ("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0\n", 3),
        ("VERTEX_SE2 x 0 0 0\n", 1),
        ("VERTEX_SE2 0 nan 0 0\n", 1),
    ],
)
def test_format_errors_carry_line_numbers(text, line):
    with pytest.raises(G2OFormatError) as info:
        parse_g2o(text)
    assert info.value.line == line


def test_unknown_tags_skipped_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        g, report = parse_g2o_report("FIX 0\nVERTEX_SE2 0 0 0 0\nVERTEX_XY 1 2 3\n# comment\n")
    assert g.n_vertices == 1
    assert report.skipped == {"FIX": 1, "VERTEX_XY": 1}
    assert "VERTEX_XY" in caplog.text


def test_parse_accepts_file_objects():
    assert parse_g2o(io.StringIO("VERTEX_SE2 0 1 2 0.5\n")).pose(0) == Pose2(1, 2, 0.5)


def test_write_restricted_loop_set(rng):
    g = random_graph(rng, n=10, n_loops=4)
    h = parse_g2o(write_g2o(g, loop_ids=[1, 3]))
    assert h.loop_edges == [g.loop_edges[1], g.loop_edges[3]]


# -- labels ---------------------------------------------------------------------


def test_empty_manifest_is_header_only():
    assert write_labels(LabelManifest("intel", 3)) == "# name=intel seed=3\n"
    assert read_labels("# name=intel seed=3\n") == LabelManifest("intel", 3, set())


def test_manifest_round_trip():
    m = LabelManifest("grid", 42, {2, 5, 7})
    text = write_labels(m)
    assert text == "# name=grid seed=42\n2\n5\n7\n"
    assert read_labels(text, n_loops=8) == m


def test_manifest_errors():
    with pytest.raises(G2OFormatError):
        read_labels("# name=g seed=1\n9\n", n_loops=5)
    with pytest.raises(G2OFormatError):
        read_labels("name=g\n1\n")
    with pytest.raises(G2OFormatError):
        read_labels("# name=g seed=1\nx\n")
    with pytest.raises(G2OFormatError):
        read_labels("")
    with pytest.raises(ValueError):
        write_labels(LabelManifest("two words", 1))


def test_manifest_marks_exactly_injected_edges(rng):
    g = random_graph(rng, n=30, n_loops=10)
    corrupted, m = inject(g, OutlierSpec(60, seed=5, shuffle=False), name="rg")
    assert m.injected == set(range(10, 16))
    back = read_labels(write_labels(m), len(corrupted.loop_edges))
    assert back == m
    true = g.loop_edges
    for k, e in enumerate(corrupted.loop_edges):
        assert (k in back.injected) == (e not in true)
