"""Radial potential profiles and the scaled confining field around a graph."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline

from .geometry import (
    MetricGraph,
    SpiderGraph,
    project_graph_many,
    spider_rays,
)

DEFAULT_TAU = 0.05


class OutOfTubeError(ValueError):
    """A point (or radial coordinate) lies on or outside the tube boundary."""


class QuadratureError(RuntimeError):
    pass


class PotentialShape:
    """Radial profile ``u`` on ``[0, 1)``.

    Use :meth:`power_ratio` for ``u(r) = r^a / (1 - r^a)`` or :meth:`tabulated`
    for user-supplied samples of ``u`` and ``u'`` (cubic Hermite in between).
    """

    def __init__(self, kind: str, alpha: float | None = None, r=None, u=None, du=None):
        self.kind = kind
        self.alpha = alpha
        if kind == "power_ratio":
            if alpha is None or alpha <= 0:
                raise ValueError("power_ratio shape needs alpha > 0")
            self.alpha = float(alpha)
        elif kind == "tabulated":
            self.r = np.asarray(r, dtype=float)
            self._u = CubicHermiteSpline(self.r, np.asarray(u, float), np.asarray(du, float))
            self._du = self._u.derivative()
            self.table = (self.r.tolist(), list(map(float, u)), list(map(float, du)))
        else:
            raise ValueError(f"unknown shape kind {kind!r}")

    @classmethod
    def power_ratio(cls, alpha: float = 2.0) -> "PotentialShape":
        return cls("power_ratio", alpha=alpha)

    @classmethod
    def tabulated(cls, r, u, du) -> "PotentialShape":
        return cls("tabulated", r=r, u=u, du=du)

    @classmethod
    def from_function(cls, fn, dfn, n: int = 4000) -> "PotentialShape":
        """Tabulate callables on a grid that clusters towards ``r = 1``."""
        r = np.unique(np.concatenate([np.linspace(0, 0.9, n // 2), 1 - np.geomspace(0.1, 1e-7, n // 2)]))
        return cls.tabulated(r, fn(r), dfn(r))

    def u(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power_ratio":
            ra = r ** self.alpha
            with np.errstate(divide="ignore"):
                return np.where(r < 1.0, ra / (1.0 - ra), np.inf)
        return np.where(r < 1.0, self._u(r), np.inf)

    def du(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "power_ratio":
            a = self.alpha
            ra = r ** a
            with np.errstate(divide="ignore", invalid="ignore"):
                out = a * r ** (a - 1.0) / (1.0 - ra) ** 2
            return np.where(r < 1.0, out, np.inf)
        return np.where(r < 1.0, self._du(r), np.inf)

    def radial_moment(self, n: int) -> float:
        """``int_0^1 r^(n-2) exp(-u(r)) dr`` by adaptive quadrature (abs tol 1e-12)."""
        return radial_moment(self, n)

    def to_dict(self) -> dict:
        if self.kind == "power_ratio":
            return {"kind": "power_ratio", "alpha": self.alpha}
        r, u, du = self.table
        return {"kind": "tabulated", "r": r, "u": u, "du": du}

    def __repr__(self):
        if self.kind == "power_ratio":
            return f"PotentialShape.power_ratio({self.alpha})"
        return f"PotentialShape.tabulated(<{len(self.r)} samples>)"


def shape_from_dict(d: dict) -> PotentialShape:
    kind = d.get("kind")
    if kind == "power_ratio":
        return PotentialShape.power_ratio(float(d.get("alpha", 2.0)))
    if kind == "tabulated":
        return PotentialShape.tabulated(d["r"], d["u"], d["du"])
    raise ValueError(f"unknown shape kind {kind!r}")


def load_shapes(path) -> list[PotentialShape]:
    """Read a shape file: a single shape object or a list of them."""
    data = json.loads(Path(path).read_text())
    if isinstance(data, dict) and "shapes" in data:
        data = data["shapes"]
    if isinstance(data, dict):
        data = [data]
    return [shape_from_dict(d) for d in data]


def shape_eval(shape: PotentialShape, r: float) -> tuple[float, float]:
    if r < 0:
        raise ValueError(f"radial coordinate must be >= 0, got {r}")
    if r >= 1:
        raise OutOfTubeError(f"radial coordinate {r} is outside the tube (r >= 1)")
    return float(shape.u(r)), float(shape.du(r))


def radial_moment(shape: PotentialShape, n: int, tol: float = 1e-12) -> float:
    k = n - 2

    def f(r):
        if r >= 1.0:
            return 0.0
        return r ** k * np.exp(-float(shape.u(r)))

    val, err = integrate.quad(f, 0.0, 1.0, epsabs=tol / 10, epsrel=1e-13, limit=500)
    if not np.isfinite(val) or err > tol:
        raise QuadratureError(f"radial integral did not reach tolerance {tol} (error estimate {err})")
    return val


@dataclass
class ShapeReport:
    passed: bool
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def validate_shape(shape: PotentialShape) -> ShapeReport:
    """Numerical checks of the admissibility conditions on ``u``.

    Divergence at ``r -> 1`` cannot be verified exactly; it is probed at fixed
    points close to 1.
    """
    checks = {}
    u0 = float(shape.u(0.0))
    checks["u(0)=0"] = {"value": u0, "passed": abs(u0) < 1e-12}
    grid = np.linspace(0.0, 1 - 1e-6, 2001)
    du = shape.du(grid)
    checks["u'>=0"] = {"min": float(np.min(du)), "passed": bool(np.all(du >= -1e-12))}
    d_edge = float(shape.du(1 - 1e-6))
    d_mid = float(shape.du(0.5))
    checks["u'->inf"] = {"du(1-1e-6)": d_edge, "bound": 1e6 * d_mid + 1,
                         "passed": bool(d_edge > 1e6 * d_mid + 1)}
    probes = [1 - 1e-4, 1 - 1e-6]
    ratios = [float(-shape.u(r) / np.log(1 - r)) for r in probes]
    checks["-u/log(1-r)->inf"] = {"probes": probes, "ratios": ratios,
                                  "passed": bool(ratios[1] > ratios[0] and ratios[1] > 1e3)}
    return ShapeReport(all(c["passed"] for c in checks.values()), checks)


# --------------------------------------------------------------------------
# fields


@dataclass
class FieldEval:
    U: np.ndarray
    grad: np.ndarray
    margin: np.ndarray
    inside: np.ndarray
    edge: np.ndarray
    s: np.ndarray
    dist: np.ndarray
    hints: np.ndarray | None = None


def _softmin(terms: list, grads: list, tau: float):
    A = np.stack(terms, axis=1)
    amin = np.min(A, axis=1)
    finite = np.isfinite(amin)
    with np.errstate(invalid="ignore"):
        w = np.exp(-(A - np.where(finite, amin, 0.0)[:, None]) / tau)
    w = np.where(np.isfinite(A), w, 0.0)
    tot = w.sum(axis=1)
    safe = np.where(tot > 0, tot, 1.0)
    U = np.where(finite, amin - tau * np.log(safe), np.inf)
    w = w / safe[:, None]
    G = np.zeros_like(grads[0])
    for k, g in enumerate(grads):
        G += w[:, k:k + 1] * np.where(np.isfinite(g), g, 0.0)
    return U, G


class ConfinementField:
    """Scaled confining potential ``U^eps`` and its gradient around a graph.

    On the edge region the potential is ``u_i(d(x, graph) / (c_i eps))``.  In
    the junction ball ``|x - V| < kappa eps`` of a vertex it is a soft minimum
    (temperature ``tau``) over the incident edge terms and a ball term
    ``u_ball(|x - V| / (kappa0 eps))``; the ball term keeps ``U`` finite on the
    whole junction ball of radius ``kappa0 eps``.
    """

    def __init__(self, graph, shapes: Sequence[PotentialShape] | PotentialShape,
                 tau: float = DEFAULT_TAU, ball_shape: PotentialShape | None = None):
        self.graph = graph
        ne = graph.n_edges if isinstance(graph, SpiderGraph) else len(graph.edges)
        if isinstance(shapes, PotentialShape):
            shapes = [shapes] * ne
        shapes = list(shapes)
        if isinstance(graph, MetricGraph) and len(shapes) != ne:
            # metric-graph edges carry a shape index
            shapes = [shapes[e.shape] if e.shape < len(shapes) else shapes[0] for e in graph.edges]
        if len(shapes) != ne:
            raise ValueError(f"need {ne} shapes, got {len(shapes)}")
        self.shapes = shapes
        self.tau = float(tau)
        self.ball_shape = ball_shape or PotentialShape.power_ratio(2.0)
        self.n = graph.n

    # public API ----------------------------------------------------------

    def evaluate(self, X, eps: float, hints=None) -> FieldEval:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if isinstance(self.graph, SpiderGraph):
            return self._eval_spider(X, eps)
        return self._eval_graph(X, eps, hints)

    def potential(self, X, eps: float):
        return self.evaluate(X, eps).U

    def gradient(self, X, eps: float):
        return self.evaluate(X, eps).grad

    # spider --------------------------------------------------------------

    def _edge_term(self, shape, r, scale, diff, d):
        # gradient of u(d / scale); defined as 0 on the axis (d < 1e-14)
        u = shape.u(r)
        du = shape.du(r)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            unit = diff / np.where(d > 1e-14, d, 1.0)[:, None]
            g = (du / scale)[:, None] * unit
        g = np.where(d[:, None] > 1e-14, g, 0.0)
        return u, g

    def _eval_spider(self, X, eps):
        g = self.graph
        m = len(X)
        t, d = spider_rays(g, X)
        edge = np.argmin(d, axis=1)
        rows = np.arange(m)
        dist = d[rows, edge]
        s = t[rows, edge]
        radius = np.linalg.norm(X, axis=1)
        junction = radius < g.kappa * eps
        U = np.empty(m)
        G = np.zeros((m, self.n))
        margin = np.empty(m)

        out = ~junction
        for i in range(g.n_edges):
            sel = out & (edge == i)
            if not sel.any():
                continue
            ce = g.widths[i] * eps
            foot = t[sel, i:i + 1] * g.directions[i]
            u, gr = self._edge_term(self.shapes[i], d[sel, i] / ce, ce, X[sel] - foot, d[sel, i])
            U[sel] = u
            G[sel] = gr
            margin[sel] = ce - d[sel, i]

        if junction.any():
            Xj = X[junction]
            terms, grads, margins = [], [], []
            for i in range(g.n_edges):
                ce = g.widths[i] * eps
                foot = t[junction, i:i + 1] * g.directions[i]
                u, gr = self._edge_term(self.shapes[i], d[junction, i] / ce, ce, Xj - foot, d[junction, i])
                terms.append(u)
                grads.append(gr)
                margins.append(ce - d[junction, i])
            rb = g.kappa0 * eps
            u, gr = self._edge_term(self.ball_shape, radius[junction] / rb, rb, Xj, radius[junction])
            terms.append(u)
            grads.append(gr)
            margins.append(rb - radius[junction])
            U[junction], G[junction] = _softmin(terms, grads, self.tau)
            margin[junction] = np.max(np.stack(margins, axis=1), axis=1)
        inside = np.isfinite(U) & (margin > 0)
        return FieldEval(U, G, margin, inside, edge, s, dist)

    # metric graph --------------------------------------------------------

    def _eval_graph(self, X, eps, hints):
        g = self.graph
        m = len(X)
        edge, s, dist, _, all_s, all_d = project_graph_many(g, X, hints)
        widths = np.array([e.width for e in g.edges])
        U = np.empty(m)
        G = np.zeros((m, self.n))
        margin = np.empty(m)
        in_junction = np.zeros(m, dtype=bool)
        for v, inc in enumerate(g.incidence):
            if len(inc) < 2:
                continue
            rv = np.linalg.norm(X - g.vertices[v], axis=1)
            near = rv < g.kappa[v] * eps
            if not near.any():
                continue
            in_junction |= near
            Xn = X[near]
            terms, grads, margins = [], [], []
            for k, _ in inc:
                ce = widths[k] * eps
                foot = g.edges[k].curve.position(all_s[near, k])
                u, gr = self._edge_term(self.shapes[k], all_d[near, k] / ce, ce, Xn - foot, all_d[near, k])
                terms.append(u)
                grads.append(gr)
                margins.append(ce - all_d[near, k])
            rb = g.kappa0[v] * eps
            u, gr = self._edge_term(self.ball_shape, rv[near] / rb, rb, Xn - g.vertices[v], rv[near])
            terms.append(u)
            grads.append(gr)
            margins.append(rb - rv[near])
            U[near], G[near] = _softmin(terms, grads, self.tau)
            margin[near] = np.max(np.stack(margins, axis=1), axis=1)
        out = ~in_junction
        for k, e in enumerate(g.edges):
            sel = out & (edge == k)
            if not sel.any():
                continue
            ce = e.width * eps
            foot = e.curve.position(s[sel])
            u, gr = self._edge_term(self.shapes[k], dist[sel] / ce, ce, X[sel] - foot, dist[sel])
            U[sel] = u
            G[sel] = gr
            margin[sel] = ce - dist[sel]
        inside = np.isfinite(U) & (margin > 0)
        return FieldEval(U, G, margin, inside, edge, s, dist, hints=all_s)


def potential_gradient(field: ConfinementField, eps: float, x) -> np.ndarray:
    """Gradient of ``U^eps`` at a single point; raises outside the tube."""
    ev = field.evaluate(np.asarray(x, dtype=float)[None, :], eps)
    if not ev.inside[0]:
        raise OutOfTubeError(f"point {np.asarray(x).tolist()} is not inside the tube (margin {ev.margin[0]:.3g})")
    return ev.grad[0]


def potential_value(field: ConfinementField, eps: float, x) -> float:
    ev = field.evaluate(np.asarray(x, dtype=float)[None, :], eps)
    if not ev.inside[0]:
        raise OutOfTubeError(f"point {np.asarray(x).tolist()} is not inside the tube")
    return float(ev.U[0])
