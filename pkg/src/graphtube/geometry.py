"""Embedded-graph and tube geometry.

Three kinds of graph are supported:

* :class:`SpiderGraph` -- ``N`` half-lines glued at the origin,
* :class:`ParamCurve` -- a single arc-length parametrised curve,
* :class:`MetricGraph` -- finitely many curved edges joined at vertices.

All heavy functions accept batches of points of shape ``(m, n)`` and return
arrays; the scalar entry points (:func:`project_spider`, :func:`project_curve`,
:func:`tube_margin`) wrap them for single points.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.spatial import cKDTree

UNIT_TOL = 1e-12
PARALLEL_TOL = 1e-9
TIE_TOL = 1e-12
ENDPOINT_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid graph or curve description."""


class ProjectionError(GeometryError):
    """Nearest-point projection did not converge.

    Usually means the tube width is too large compared with the curvature
    radius of an edge, so the query point sits near a focal point.
    """


@dataclass(frozen=True)
class Projection:
    edge_index: int
    s: float
    foot: np.ndarray
    dist: float
    on_ambiguity_set: bool = False


# --------------------------------------------------------------------------
# spiders


@dataclass(frozen=True)
class SpiderGraph:
    n: int
    directions: np.ndarray
    widths: np.ndarray
    kappa: float
    kappa0: float

    @property
    def n_edges(self) -> int:
        return len(self.widths)


def spider_kappa(directions: np.ndarray, widths: np.ndarray) -> float:
    """Junction radius ``max_{i != j} 2 sqrt(2) c_i / sqrt(1 - <e_i, e_j>)``."""
    gram = directions @ directions.T
    kappa = 0.0
    N = len(widths)
    for i in range(N):
        for j in range(N):
            if i != j:
                kappa = max(kappa, 2.0 * np.sqrt(2.0) * widths[i] / np.sqrt(1.0 - gram[i, j]))
    return float(kappa)


def make_spider(directions, widths, n: int | None = None, kappa0: float | None = None) -> SpiderGraph:
    """Validate and build a spider graph.

    ``kappa0`` (radius of the junction ball in tube units) defaults to
    ``kappa / 2``.
    """
    E = np.array(directions, dtype=float)
    c = np.array(widths, dtype=float)
    if E.ndim != 2:
        raise GeometryError("directions must be a list of vectors")
    if n is None:
        n = E.shape[1]
    if n < 2:
        raise GeometryError(f"ambient dimension must be >= 2, got {n}")
    if E.shape[1] != n:
        raise GeometryError(f"directions have length {E.shape[1]}, expected n={n}")
    if len(E) < 2:
        raise GeometryError("a spider needs at least two edges")
    if c.shape != (len(E),):
        raise GeometryError("need exactly one width per direction")
    if np.any(~np.isfinite(c)) or np.any(c <= 0):
        raise GeometryError("widths must be strictly positive")
    norms = np.linalg.norm(E, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if bad.size:
        raise GeometryError(f"direction {bad[0]} is not a unit vector (|e|={norms[bad[0]]!r})")
    gram = E @ E.T
    for i in range(len(E)):
        for j in range(i + 1, len(E)):
            if gram[i, j] >= 1.0 - PARALLEL_TOL:
                raise GeometryError(f"directions {i} and {j} are (near-)parallel")
    kappa = spider_kappa(E, c)
    if kappa0 is None:
        kappa0 = kappa / 2.0
    if not 0.0 < kappa0 < kappa:
        raise GeometryError("kappa0 must lie in (0, kappa)")
    E.setflags(write=False)
    c.setflags(write=False)
    return SpiderGraph(n=n, directions=E, widths=c, kappa=kappa, kappa0=float(kappa0))


def spider_rays(g: SpiderGraph, X: np.ndarray):
    """Per-ray foot parameters and distances.

    Returns ``(t, d)`` of shape ``(m, N)``: ``t[k, i] = max(<x_k, e_i>, 0)`` and
    ``d[k, i] = |x_k - t[k, i] e_i|``.
    """
    X = np.atleast_2d(X)
    # fixed-order dot products: a BLAS product may round differently with the
    # number of rows, which would make results depend on how paths are batched
    D = g.directions
    dots = X[:, 0:1] * D[None, :, 0]
    for j in range(1, X.shape[1]):
        dots = dots + X[:, j:j + 1] * D[None, :, j]
    t = np.maximum(dots, 0.0)
    # explicit residual; |x|^2 - t^2 would lose half the digits on the axis
    diff = X[:, None, :] - t[:, :, None] * g.directions[None, :, :]
    d = np.sqrt(np.einsum("kij,kij->ki", diff, diff))
    return t, d


def project_spider_many(g: SpiderGraph, X: np.ndarray):
    """Vectorised projection: ``(edge, s, dist, tie)`` arrays of length ``m``."""
    X = np.atleast_2d(X)
    t, d = spider_rays(g, X)
    edge = np.argmin(d, axis=1)
    rows = np.arange(len(X))
    dist = d[rows, edge]
    scale = np.maximum(1.0, np.linalg.norm(X, axis=1))
    close = (d - dist[:, None]) <= TIE_TOL * scale[:, None]
    tie = close.sum(axis=1) > 1
    return edge, t[rows, edge], dist, tie


def project_spider(g: SpiderGraph, x) -> Projection:
    x = np.asarray(x, dtype=float)
    edge, s, dist, tie = project_spider_many(g, x[None, :])
    e = int(edge[0])
    return Projection(
        edge_index=e,
        s=float(s[0]),
        foot=s[0] * g.directions[e],
        dist=float(dist[0]),
        on_ambiguity_set=bool(tie[0]),
    )


# --------------------------------------------------------------------------
# curves


class ParamCurve:
    """Arc-length parametrised curve sampled on a grid.

    Positions are interpolated with cubic Hermite splines built from the
    sampled tangents; tangents are interpolated from the sampled second
    derivatives, and the second derivative is the derivative of the tangent
    interpolant.
    """

    def __init__(self, s, points, tangents, accelerations, check: bool = True):
        self.s = np.array(s, dtype=float)
        self.points = np.array(points, dtype=float)
        self.tangents = np.array(tangents, dtype=float)
        self.accelerations = np.array(accelerations, dtype=float)
        if self.points.ndim != 2 or len(self.points) != len(self.s):
            raise GeometryError("curve samples must be a (G, n) array matching the s grid")
        if len(self.s) < 2 or abs(self.s[0]) > 0 or np.any(np.diff(self.s) <= 0):
            raise GeometryError("s grid must start at 0 and be strictly increasing")
        self.n = self.points.shape[1]
        self.length = float(self.s[-1])
        self._pos = CubicHermiteSpline(self.s, self.points, self.tangents, axis=0)
        self._tan = CubicHermiteSpline(self.s, self.tangents, self.accelerations, axis=0)
        self._acc = self._tan.derivative()
        self.max_curvature = float(np.max(np.linalg.norm(self.accelerations, axis=1)))
        if check:
            self.check()

    def check(self) -> None:
        speed = np.linalg.norm(self.tangents, axis=1)
        if np.max(np.abs(speed - 1.0)) > 1e-8:
            raise GeometryError("curve is not arc-length parametrised (|tangent| != 1)")
        ortho = np.einsum("ij,ij->i", self.tangents, self.accelerations)
        if np.max(np.abs(ortho)) > 1e-6:
            raise GeometryError("second derivative is not orthogonal to the tangent")
        tree = cKDTree(self.points)
        for i, j in tree.query_pairs(r=1e-12):
            if abs(i - j) > 1:
                raise GeometryError(f"curve self-crosses at samples {i} and {j}")

    @property
    def has_straight_ends(self) -> bool:
        a = np.linalg.norm(self.accelerations, axis=1)
        return bool(a[0] < 1e-12 and a[1] < 1e-12 and a[-1] < 1e-12 and a[-2] < 1e-12)

    def position(self, s):
        return self._pos(s)

    def tangent(self, s):
        return self._tan(s)

    def acceleration(self, s):
        return self._acc(s)

    # constructors -------------------------------------------------------

    @classmethod
    def from_function(
        cls,
        fn: Callable[[np.ndarray], tuple],
        length: float,
        n_grid: int = 2001,
        breakpoints: Sequence[float] = (),
        check: bool = True,
    ) -> "ParamCurve":
        """Sample ``fn(s) -> (gamma, dgamma, ddgamma)`` on a uniform grid.

        ``breakpoints`` are added to the grid so that pieces with different
        curvature join exactly at a node.
        """
        s = np.union1d(np.linspace(0.0, length, n_grid), np.asarray(breakpoints, dtype=float))
        s = s[(s >= 0) & (s <= length)]
        p, t, a = fn(s)
        return cls(s, p, t, a, check=check)

    @classmethod
    def line(cls, start, direction, length: float, n_grid: int = 65) -> "ParamCurve":
        start = np.asarray(start, dtype=float)
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)

        def fn(s):
            return start + s[:, None] * e, np.tile(e, (len(s), 1)), np.zeros((len(s), len(e)))

        return cls.from_function(fn, length, n_grid)

    @classmethod
    def arc(cls, radius: float, angle: float, center=(0.0, 0.0), phase: float = 0.0,
            n_grid: int = 2001, n: int = 2) -> "ParamCurve":
        """Counter-clockwise circular arc in the first two coordinates."""
        R = float(radius)
        c = np.zeros(n)
        c[:2] = center

        def fn(s):
            th = phase + s / R
            p = np.zeros((len(s), n))
            t = np.zeros((len(s), n))
            a = np.zeros((len(s), n))
            p[:, 0], p[:, 1] = c[0] + R * np.cos(th), c[1] + R * np.sin(th)
            t[:, 0], t[:, 1] = -np.sin(th), np.cos(th)
            a[:, 0], a[:, 1] = -np.cos(th) / R, -np.sin(th) / R
            return p, t, a

        return cls.from_function(fn, R * angle, n_grid)

    @classmethod
    def half_circle_with_tails(cls, radius: float = 1.0, tail: float = 2.0,
                               n_grid: int = 4001, n: int = 2) -> "ParamCurve":
        """Half circle of the given radius, extended by straight tangent tails.

        The arc runs counter-clockwise from ``(R, 0)`` to ``(-R, 0)``; arc
        length ``s`` on the arc equals ``tail + R * theta``.
        """
        R = float(radius)
        L = 2 * tail + np.pi * R

        def fn(s):
            p = np.zeros((len(s), n))
            t = np.zeros((len(s), n))
            a = np.zeros((len(s), n))
            u = s - tail
            first = u < 0
            last = u > np.pi * R
            mid = ~(first | last)
            th = u[mid] / R
            p[mid, 0], p[mid, 1] = R * np.cos(th), R * np.sin(th)
            t[mid, 0], t[mid, 1] = -np.sin(th), np.cos(th)
            a[mid, 0], a[mid, 1] = -np.cos(th) / R, -np.sin(th) / R
            p[first, 0], p[first, 1] = R, u[first]
            t[first, 1] = 1.0
            v = u[last] - np.pi * R
            p[last, 0], p[last, 1] = -R, -v
            t[last, 1] = -1.0
            return p, t, a

        return cls.from_function(fn, L, n_grid, breakpoints=(tail, tail + np.pi * R))

    @classmethod
    def from_samples(cls, samples, check: bool = True) -> "ParamCurve":
        """Build from ``[[s, point, tangent, acceleration], ...]`` rows."""
        s = [row[0] for row in samples]
        p = [row[1] for row in samples]
        t = [row[2] for row in samples]
        a = [row[3] for row in samples]
        return cls(s, p, t, a, check=check)

    def to_samples(self) -> list:
        return [[float(s), p.tolist(), t.tolist(), a.tolist()]
                for s, p, t, a in zip(self.s, self.points, self.tangents, self.accelerations)]

    def reversed(self) -> "ParamCurve":
        s = self.length - self.s[::-1]
        return ParamCurve(s, self.points[::-1], -self.tangents[::-1], self.accelerations[::-1], check=False)


def _grid_seed(c: ParamCurve, X: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty(len(X))
    for k in range(0, len(X), chunk):
        Xc = X[k:k + chunk]
        d2 = ((Xc[:, None, :] - c.points[None, :, :]) ** 2).sum(axis=2)
        out[k:k + chunk] = c.s[np.argmin(d2, axis=1)]
    return out


def project_curve_many(c: ParamCurve, X: np.ndarray, hint=None, tol: float = 1e-10,
                       maxiter: int = 50):
    """Safeguarded Newton projection of many points onto a curve.

    Solves ``<x - gamma(s), gamma'(s)> = 0`` for ``s`` in ``[0, length]``.
    Returns ``(s, foot, dist, ok)``; ``ok`` is False where Newton did not
    converge (focal points, or points out of the curve's reach).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = len(X)
    s = _grid_seed(c, X) if hint is None else np.clip(np.broadcast_to(np.asarray(hint, float), (m,)).copy(), 0.0, c.length)
    ok = np.zeros(m, dtype=bool)
    active = np.arange(m)
    max_step = 0.25 / c.max_curvature if c.max_curvature > 0 else np.inf
    for _ in range(maxiter):
        if active.size == 0:
            break
        sa = s[active]
        r = X[active] - c.position(sa)
        t = c.tangent(sa)
        a = c.acceleration(sa)
        g = np.einsum("ij,ij->i", r, t)
        gp = np.einsum("ij,ij->i", t, t) - np.einsum("ij,ij->i", r, a)
        at_lo = (sa <= 0.0) & (g <= 0.0)
        at_hi = (sa >= c.length) & (g >= 0.0)
        done = (np.abs(g) < tol) | at_lo | at_hi
        ok[active[done]] = True
        degenerate = ~done & (gp <= 1e-12)
        keep = ~done & ~degenerate
        step = np.clip(g[keep] / gp[keep], -max_step, max_step)
        s[active[keep]] = np.clip(sa[keep] + step, 0.0, c.length)
        active = active[keep]
    foot = c.position(s)
    dist = np.linalg.norm(X - foot, axis=1)
    return s, foot, dist, ok


def project_curve(c: ParamCurve, x, hint_s: float | None = None) -> Projection:
    x = np.asarray(x, dtype=float)
    s, foot, dist, ok = project_curve_many(c, x[None, :], None if hint_s is None else [hint_s])
    if not ok[0]:
        raise ProjectionError(
            f"projection onto curve did not converge at x={x.tolist()}; "
            "tube width is too large for the curvature"
        )
    return Projection(edge_index=0, s=float(s[0]), foot=foot[0], dist=float(dist[0]))


# --------------------------------------------------------------------------
# metric graphs


@dataclass(frozen=True)
class Edge:
    frm: int
    to: int
    curve: ParamCurve
    width: float = 1.0
    shape: int = 0

    @property
    def length(self) -> float:
        return self.curve.length


@dataclass
class MetricGraph:
    vertices: np.ndarray
    edges: list
    kappa0_ratio: float = 0.5
    incidence: list = field(init=False)
    kappa: np.ndarray = field(init=False)

    def __post_init__(self):
        self.vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        self.n = self.vertices.shape[1]
        if self.n < 2:
            raise GeometryError("ambient dimension must be >= 2")
        if not self.edges:
            raise GeometryError("a metric graph needs at least one edge")
        nv = len(self.vertices)
        self.incidence = [[] for _ in range(nv)]
        for k, e in enumerate(self.edges):
            if not (0 <= e.frm < nv and 0 <= e.to < nv):
                raise GeometryError(f"edge {k} references an unknown vertex")
            if e.width <= 0:
                raise GeometryError(f"edge {k} has non-positive width")
            if not (np.isfinite(e.length) and e.length > 0):
                raise GeometryError(f"edge {k} must have finite positive length")
            if e.curve.n != self.n:
                raise GeometryError(f"edge {k} lives in dimension {e.curve.n}, expected {self.n}")
            if np.linalg.norm(e.curve.points[0] - self.vertices[e.frm]) > ENDPOINT_TOL:
                raise GeometryError(f"edge {k} does not start at vertex {e.frm}")
            if np.linalg.norm(e.curve.points[-1] - self.vertices[e.to]) > ENDPOINT_TOL:
                raise GeometryError(f"edge {k} does not end at vertex {e.to}")
            self.incidence[e.frm].append((k, 0))
            self.incidence[e.to].append((k, 1))
        self.kappa = np.zeros(nv)
        for v, inc in enumerate(self.incidence):
            if len(inc) >= 2:
                for k, _ in inc:
                    if not self.edges[k].curve.has_straight_ends:
                        raise GeometryError(f"edge {k} must be straight near its vertices")
            tans = [self.outward_tangent(k, end) for k, end in inc]
            for a in range(len(inc)):
                for b in range(len(inc)):
                    if a == b:
                        continue
                    cos = float(tans[a] @ tans[b])
                    if cos >= 1.0 - PARALLEL_TOL:
                        raise GeometryError(f"edges at vertex {v} leave in the same direction")
                    ca = self.edges[inc[a][0]].width
                    self.kappa[v] = max(self.kappa[v], 2 * np.sqrt(2) * ca / np.sqrt(1 - cos))

    @property
    def kappa0(self) -> np.ndarray:
        return self.kappa * self.kappa0_ratio

    @property
    def degree(self) -> np.ndarray:
        return np.array([len(i) for i in self.incidence])

    def outward_tangent(self, k: int, end: int) -> np.ndarray:
        c = self.edges[k].curve
        return c.tangents[0] if end == 0 else -c.tangents[-1]

    def neighbours(self, k: int) -> list[int]:
        e = self.edges[k]
        out = {k}
        for v in (e.frm, e.to):
            out.update(j for j, _ in self.incidence[v])
        return sorted(out)

    def to_point(self, edge, s) -> np.ndarray:
        """Map graph coordinates (edge, s) to points in R^n."""
        edge = np.atleast_1d(edge)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((len(edge), self.n))
        for k in np.unique(edge):
            sel = edge == k
            out[sel] = self.edges[k].curve.position(s[sel])
        return out


def single_curve_graph(curve: ParamCurve, width: float = 1.0) -> MetricGraph:
    """A one-edge metric graph whose two ends are degree-one vertices."""
    return MetricGraph(np.array([curve.points[0], curve.points[-1]]),
                       [Edge(0, 1, curve, width)])


def project_graph_many(g: MetricGraph, X: np.ndarray, hints: np.ndarray | None = None):
    """Nearest edge over all edges of a metric graph.

    ``hints`` is an optional ``(m, E)`` array of per-edge arc-length seeds.
    Returns ``(edge, s, dist, tie, all_s, all_d)`` where ``all_s``/``all_d``
    are ``(m, E)`` per-edge results (``inf`` distance where Newton failed).
    """
    X = np.atleast_2d(X)
    m, E = len(X), len(g.edges)
    all_s = np.empty((m, E))
    all_d = np.empty((m, E))
    for k, e in enumerate(g.edges):
        h = None if hints is None else hints[:, k]
        s, _, d, ok = project_curve_many(e.curve, X, h)
        if hints is not None and not ok.all():
            bad = ~ok
            s2, _, d2, ok2 = project_curve_many(e.curve, X[bad], None)
            s[bad], d[bad] = s2, np.where(ok2, d2, np.inf)
        all_s[:, k] = s
        all_d[:, k] = np.where(np.isfinite(d), d, np.inf)
    edge = np.argmin(all_d, axis=1)
    rows = np.arange(m)
    dist = all_d[rows, edge]
    scale = np.maximum(1.0, np.linalg.norm(X, axis=1))
    tie = ((all_d - dist[:, None]) <= TIE_TOL * scale[:, None]).sum(axis=1) > 1
    return edge, all_s[rows, edge], dist, tie, all_s, all_d


def project_graph(g: MetricGraph, x) -> Projection:
    x = np.asarray(x, dtype=float)
    edge, s, dist, tie, _, _ = project_graph_many(g, x[None, :])
    k = int(edge[0])
    if not np.isfinite(dist[0]):
        raise ProjectionError(f"no edge projection converged at x={x.tolist()}")
    return Projection(k, float(s[0]), g.edges[k].curve.position(s[:1])[0], float(dist[0]), bool(tie[0]))


# --------------------------------------------------------------------------
# tube membership


def spider_margins(g: SpiderGraph, eps: float, X: np.ndarray):
    """Signed distance-like margin to the spider tube, vectorised.

    Away from the junction (``|x| >= kappa eps``) this is ``c_i eps - d(x, I_i)``
    for the projected edge ``i``.  Inside the junction the tube is the union
    of the edge cylinders and the ball of radius ``kappa0 eps``; the margin is
    the largest component margin, which never exceeds the true distance to
    the boundary of the union.
    """
    X = np.atleast_2d(X)
    t, d = spider_rays(g, X)
    edge = np.argmin(d, axis=1)
    rows = np.arange(len(X))
    cyl = g.widths[None, :] * eps - d
    radius = np.linalg.norm(X, axis=1)
    junction = radius < g.kappa * eps
    margin = cyl[rows, edge]
    if junction.any():
        jm = np.max(cyl[junction], axis=1)
        margin[junction] = np.maximum(jm, g.kappa0 * eps - radius[junction])
    return margin


def graph_margins(g: MetricGraph, eps: float, X: np.ndarray, hints=None):
    X = np.atleast_2d(X)
    edge, s, dist, tie, all_s, all_d = project_graph_many(g, X, hints)
    widths = np.array([e.width for e in g.edges])
    cyl = widths[None, :] * eps - all_d
    margin = cyl[np.arange(len(X)), edge]
    for v, inc in enumerate(g.incidence):
        if len(inc) < 2:
            continue
        rv = np.linalg.norm(X - g.vertices[v], axis=1)
        near = rv < g.kappa[v] * eps
        if near.any():
            ks = [k for k, _ in inc]
            jm = np.max(cyl[np.ix_(near, ks)], axis=1)
            margin[near] = np.maximum(jm, g.kappa0[v] * eps - rv[near])
    return margin


def tube_margin(g, eps: float, x, width: float = 1.0) -> float:
    """``c eps - d(x, graph)`` with junction handling; positive iff inside.

    ``width`` is only used when ``g`` is a bare :class:`ParamCurve`.
    """
    if eps <= 0:
        raise GeometryError("eps must be positive")
    x = np.asarray(x, dtype=float)[None, :]
    if isinstance(g, SpiderGraph):
        return float(spider_margins(g, eps, x)[0])
    if isinstance(g, MetricGraph):
        return float(graph_margins(g, eps, x)[0])
    if isinstance(g, ParamCurve):
        return float(width * eps - project_curve(g, x[0]).dist)
    raise TypeError(f"unsupported graph type {type(g).__name__}")


# --------------------------------------------------------------------------
# graph description files


def _curve_from_spec(spec: dict, start, end, n: int) -> ParamCurve:
    kind = spec.get("kind", "samples")
    if kind == "line":
        start, end = np.asarray(start, float), np.asarray(end, float)
        return ParamCurve.line(start, end - start, float(np.linalg.norm(end - start)),
                               n_grid=int(spec.get("n_grid", 65)))
    if kind == "half_circle":
        return ParamCurve.half_circle_with_tails(spec.get("radius", 1.0), spec.get("tail", 2.0),
                                                 int(spec.get("n_grid", 4001)), n)
    if kind == "samples":
        return ParamCurve.from_samples(spec["samples"])
    raise GeometryError(f"unknown curve kind {kind!r}")


def graph_from_dict(d: dict):
    """Build a graph from its JSON description.

    Accepted top-level keys: ``spider``, ``metric_graph`` or ``curve``.
    """
    n = d.get("n")
    if "spider" in d:
        sp = d["spider"]
        return make_spider(sp["directions"], sp["widths"], n, sp.get("kappa0"))
    if "metric_graph" in d:
        mg = d["metric_graph"]
        V = np.asarray(mg["vertices"], dtype=float)
        edges = []
        for k, e in enumerate(mg["edges"]):
            if "curve_samples" in e:
                curve = ParamCurve.from_samples(e["curve_samples"])
            else:
                curve = _curve_from_spec(e.get("curve", {"kind": "line"}), V[e["from"]], V[e["to"]], V.shape[1])
            edges.append(Edge(int(e["from"]), int(e["to"]), curve, float(e.get("width", 1.0)),
                              int(e.get("shape", k))))
        return MetricGraph(V, edges, kappa0_ratio=float(mg.get("kappa0_ratio", 0.5)))
    if "curve" in d:
        spec = d["curve"]
        curve = _curve_from_spec(spec, None, None, int(n or 2))
        return single_curve_graph(curve, float(spec.get("width", 1.0)))
    raise GeometryError("graph description needs a 'spider', 'metric_graph' or 'curve' key")


def load_graph(path) -> SpiderGraph | MetricGraph:
    return graph_from_dict(json.loads(Path(path).read_text()))


def graph_to_dict(g) -> dict:
    if isinstance(g, SpiderGraph):
        return {"n": g.n, "spider": {"directions": g.directions.tolist(), "widths": g.widths.tolist(),
                                     "kappa0": g.kappa0}}
    if isinstance(g, MetricGraph):
        return {"n": g.n, "metric_graph": {
            "vertices": g.vertices.tolist(),
            "kappa0_ratio": g.kappa0_ratio,
            "edges": [{"from": e.frm, "to": e.to, "width": e.width, "shape": e.shape,
                       "curve_samples": e.curve.to_samples()} for e in g.edges],
        }}
    raise TypeError(f"unsupported graph type {type(g).__name__}")


def n_edges(g) -> int:
    return g.n_edges if isinstance(g, SpiderGraph) else len(g.edges)


def edge_widths(g) -> np.ndarray:
    return g.widths if isinstance(g, SpiderGraph) else np.array([e.width for e in g.edges])
