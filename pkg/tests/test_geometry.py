import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from graphtube.geometry import (GeometryError, MetricGraph, Edge, ParamCurve, ProjectionError, graph_from_dict,
                                graph_to_dict, make_spider, project_curve, project_graph, project_spider,
                                single_curve_graph, tube_margin)

from conftest import plane_directions

coords = st.floats(-3, 3, allow_nan=False)


def test_kappa_two_opposite_rays():
    g = make_spider([[1, 0], [-1, 0]], [1, 1])
    assert g.kappa == pytest.approx(2.0, abs=1e-12)
    assert g.kappa0 == pytest.approx(1.0)


def test_kappa_symmetric_three_spider(symmetric_spider):
    assert symmetric_spider.kappa == pytest.approx(2 * np.sqrt(2) / np.sqrt(1.5), rel=1e-12)


def test_kappa_widths_112(spider112):
    # the widest ray dominates: 2 sqrt(2) * 2 / sqrt(1.5)
    assert spider112.kappa == pytest.approx(4.618802153517006, rel=1e-12)


@pytest.mark.parametrize("dirs, widths, msg", [
    ([[1, 0], [1, 0]], [1, 1], "parallel"),
    ([[1, 0], [0, 1.1]], [1, 1], "unit"),
    ([[1, 0], [0, 1]], [1, 0], "positive"),
    ([[1, 0]], [1], "two edges"),
])
def test_make_spider_rejects(dirs, widths, msg):
    with pytest.raises(GeometryError, match=msg):
        make_spider(dirs, widths)


def test_project_spider_examples():
    g = make_spider([[1, 0], [0, 1]], [1, 1])
    p = project_spider(g, [2, 0.3])
    assert (p.edge_index, p.s, p.dist) == (0, 2.0, pytest.approx(0.3))
    assert np.allclose(p.foot, [2, 0])
    o = project_spider(g, [0, 0])
    assert o.dist == 0 and o.s == 0 and o.edge_index == 0 and o.on_ambiguity_set
    t = project_spider(g, [1, 1])
    assert t.edge_index == 0 and t.on_ambiguity_set and t.dist == pytest.approx(1.0)


@given(x=st.tuples(coords, coords))
@settings(max_examples=200, deadline=None)
def test_projection_invariants_and_idempotence(spider112, x):
    p = project_spider(spider112, x)
    assert abs(np.linalg.norm(np.asarray(x) - p.foot) - p.dist) < 1e-9
    q = project_spider(spider112, p.foot)
    assert q.dist < 1e-9
    assert abs(q.s - p.s) < 1e-9


@given(x=st.tuples(coords, coords), y=st.tuples(coords, coords))
@settings(max_examples=200, deadline=None)
def test_distance_is_lipschitz(spider112, x, y):
    dx = project_spider(spider112, x).dist
    dy = project_spider(spider112, y).dist
    assert abs(dx - dy) <= np.linalg.norm(np.subtract(x, y)) + 1e-12


@given(s=st.floats(0.0, 5.0), off=st.floats(-0.99, 0.99), i=st.integers(0, 2))
@settings(max_examples=200, deadline=None)
def test_sector_consistency(spider112, s, off, i):
    # beyond the junction radius, inside the width, the spider and the single ray agree
    e = spider112.directions[i]
    normal = np.array([-e[1], e[0]])
    x = (spider112.kappa + s) * e + off * spider112.widths[i] * normal
    p = project_spider(spider112, x)
    assert p.edge_index == i
    assert p.s == pytest.approx(max(x @ e, 0.0), abs=1e-12)


@given(x=st.tuples(coords, coords, coords), seed=st.integers(0, 1000))
@settings(max_examples=100, deadline=None)
def test_rotational_equivariance(x, seed):
    Q = special_ortho_group.rvs(3, random_state=seed)
    D = np.eye(3)
    g = make_spider(D, [1, 2, 1])
    gq = make_spider(D @ Q.T, [1, 2, 1])
    p = project_spider(g, x)
    pq = project_spider(gq, Q @ np.asarray(x))
    assert pq.dist == pytest.approx(p.dist, abs=1e-9)
    if not p.on_ambiguity_set:
        assert np.allclose(pq.foot, Q @ p.foot, atol=1e-9)


def test_project_curve_line_and_arc():
    line = ParamCurve.line([0, 0], [1, 0], 10.0)
    p = project_curve(line, [3, 0.2])
    assert p.s == pytest.approx(3.0, abs=1e-10) and p.dist == pytest.approx(0.2, abs=1e-10)
    arc = ParamCurve.arc(1.0, np.pi)
    th = 1.1
    q = project_curve(arc, 1.1 * np.array([np.cos(th), np.sin(th)]))
    assert q.s == pytest.approx(th, abs=1e-8) and q.dist == pytest.approx(0.1, abs=1e-8)


def test_project_curve_focal_point_fails_or_flags():
    arc = ParamCurve.arc(1.0, np.pi)
    try:
        p = project_curve(arc, [0.0, 0.0])
    except ProjectionError:
        return
    # every point of the arc is at distance 1 from its centre
    assert p.dist == pytest.approx(1.0, abs=1e-8)


def test_curve_invariants_enforced():
    s = np.linspace(0, 1, 5)
    with pytest.raises(GeometryError, match="arc-length"):
        ParamCurve(s, np.c_[2 * s, 0 * s], np.tile([2.0, 0.0], (5, 1)), np.zeros((5, 2)))
    pts = np.array([[0, 0], [1, 0], [0, 0.0], [1, 1]])
    with pytest.raises(GeometryError):
        ParamCurve(np.arange(4.0), pts, np.tile([1.0, 0.0], (4, 1)), np.zeros((4, 2)))


def test_half_circle_geometry():
    c = ParamCurve.half_circle_with_tails()
    assert c.length == pytest.approx(4 + np.pi)
    assert c.has_straight_ends
    assert np.allclose(c.position(np.array([2 + np.pi / 2])), [[0, 1]], atol=1e-10)


def test_metric_graph_validation():
    V = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    e1 = Edge(0, 1, ParamCurve.line(V[0], V[1] - V[0], 1.0), 1.0)
    e2 = Edge(0, 2, ParamCurve.line(V[0], V[2] - V[0], 1.0), 0.5)
    g = MetricGraph(V, [e1, e2])
    assert list(g.degree) == [2, 1, 1]
    assert g.kappa[0] == pytest.approx(2 * np.sqrt(2))
    bad = Edge(1, 2, ParamCurve.line(V[0], V[2] - V[0], 1.0), 1.0)
    with pytest.raises(GeometryError, match="does not start"):
        MetricGraph(V, [e1, bad])
    dup = Edge(0, 1, ParamCurve.line(V[0], V[1] - V[0], 1.0), 1.0)
    with pytest.raises(GeometryError, match="same direction"):
        MetricGraph(V, [e1, dup])


def test_graph_json_round_trip(tmp_path):
    g = single_curve_graph(ParamCurve.half_circle_with_tails(n_grid=201))
    d = graph_to_dict(g)
    g2 = graph_from_dict(json.loads(json.dumps(d)))
    x = np.array([0.3, 1.02])
    assert project_graph(g2, x).dist == pytest.approx(project_graph(g, x).dist, abs=1e-12)
    sp = graph_from_dict({"n": 2, "spider": {"directions": plane_directions([0, 180]).tolist(), "widths": [1, 1]}})
    assert sp.kappa == pytest.approx(2.0)


def test_tube_margin_examples():
    line = ParamCurve.line([0, 0], [1, 0], 10.0)
    assert tube_margin(line, 0.1, [5, 0.05]) == pytest.approx(0.05)
    assert tube_margin(line, 0.1, [5, 0.1]) == pytest.approx(0.0, abs=1e-12)
    assert tube_margin(line, 0.1, [5, 1.0]) < 0
    g = make_spider([[1, 0], [0, 1]], [1, 2])
    assert tube_margin(g, 0.1, [5, 0.05]) == pytest.approx(0.05)
    with pytest.raises(GeometryError):
        tube_margin(g, 0.0, [1, 0])
