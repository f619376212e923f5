"""Limit diffusion on the graph.

On each edge the process is the one-dimensional SDE in arc length

    ds = sqrt(a(s)) dB + m(s) dt,
    a(s) = |sigma(gamma(s))^T gamma'(s)|^2,
    m(s) = <b, gamma'> + <sigma^T gamma'', sigma^T gamma'>,

and at a vertex it continues on an incident edge chosen with the Kirchhoff
weights.  The vertex rule used here: when an Euler step overshoots a vertex
by ``o``, an incident edge is drawn with the vertex weights and the state is
placed at distance ``|o|`` from the vertex along that edge.  A vertex with a
single incident edge therefore reflects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import BPoly

from . import rng
from .coefficients import SdeCoefficients, matvec
from .confinement import PotentialShape, radial_moment
from .geometry import MetricGraph, SpiderGraph

SCHEMA_VERSION = 1


class DomainViolationError(ValueError):
    """A test function fails continuity, the Kirchhoff condition, or the generator match."""


# --------------------------------------------------------------------------
# weights


@dataclass
class KirchhoffWeights:
    p: np.ndarray
    kind: str = "kirchhoff"
    quadrature_tol: float | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.ndim != 1 or len(self.p) == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {self.p.tolist()}")

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": self.kind, "p": self.p.tolist(),
                "quadrature_tol": self.quadrature_tol}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _vertex_widths(target, vertex: int | None) -> np.ndarray:
    if isinstance(target, SpiderGraph):
        return np.asarray(target.widths, dtype=float)
    if isinstance(target, MetricGraph):
        if vertex is None:
            raise ValueError("a vertex id is needed for a metric graph")
        return np.array([target.edges[k].width for k, _ in target.incidence[vertex]])
    return np.asarray(target, dtype=float)


def _vertex_shapes(target, shapes, vertex, count):
    if isinstance(shapes, PotentialShape):
        return [shapes] * count
    shapes = list(shapes)
    if isinstance(target, MetricGraph):
        inc = target.incidence[vertex]
        if len(shapes) != count:
            return [shapes[target.edges[k].shape] for k, _ in inc]
    if len(shapes) != count:
        raise ValueError(f"need {count} shapes, got {len(shapes)}")
    return shapes


def kirchhoff_weights(target, shapes, n: int | None = None, vertex: int | None = None,
                      tol: float = 1e-12) -> KirchhoffWeights:
    """Weights ``p_i`` proportional to ``c_i^(n-1) * int_0^1 r^(n-2) exp(-u_i(r)) dr``.

    ``target`` is a SpiderGraph, a MetricGraph together with ``vertex``, or a
    plain sequence of widths (then ``n`` is required).
    """
    c = _vertex_widths(target, vertex)
    if n is None:
        n = target.n if hasattr(target, "n") else None
    if n is None or n < 2:
        raise ValueError("ambient dimension n >= 2 is required")
    shp = _vertex_shapes(target, shapes, vertex, len(c))
    cache: dict[int, float] = {}
    moments = []
    for s in shp:
        if id(s) not in cache:
            cache[id(s)] = radial_moment(s, n, tol)
        moments.append(cache[id(s)])
    raw = c ** (n - 1) * np.array(moments)
    return KirchhoffWeights(raw / raw.sum(), "kirchhoff", tol)


def reflecting_weights(target, n: int | None = None, vertex: int | None = None) -> KirchhoffWeights:
    """Cross-section weights ``c_i^(n-1) / sum_j c_j^(n-1)``."""
    c = _vertex_widths(target, vertex)
    if n is None:
        n = target.n if hasattr(target, "n") else None
    if n is None or n < 2:
        raise ValueError("ambient dimension n >= 2 is required")
    raw = c ** (n - 1)
    return KirchhoffWeights(raw / raw.sum(), "reflecting")


def graph_weights(graph, shapes=None, reflecting: bool = False) -> list:
    """Weights at every vertex, aligned with the vertex's incidence order."""
    if isinstance(graph, SpiderGraph):
        return [reflecting_weights(graph) if reflecting else kirchhoff_weights(graph, shapes)]
    out = []
    for v, inc in enumerate(graph.incidence):
        if not inc:
            out.append(None)
        elif reflecting:
            out.append(reflecting_weights(graph, vertex=v))
        else:
            out.append(kirchhoff_weights(graph, shapes, vertex=v))
    return out


# --------------------------------------------------------------------------
# edge coefficients


@dataclass
class EdgeSde:
    """Diffusion coefficient ``a(s)`` and drift ``m(s)`` along one edge.

    Finite edges are tabulated on the curve grid and linearly interpolated;
    spider rays are evaluated directly because they are unbounded.
    """

    length: float
    grid: np.ndarray | None = None
    diffusion2: np.ndarray | None = None
    drift: np.ndarray | None = None
    direction: np.ndarray | None = None
    coeffs: SdeCoefficients | None = field(default=None, repr=False)

    def coefficients(self, s) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        if self.grid is not None:
            return np.interp(s, self.grid, self.diffusion2), np.interp(s, self.grid, self.drift)
        X = s.reshape(-1, 1) * self.direction[None, :]
        a, m = _ray_coefficients(self.coeffs, self.direction, X)
        return a.reshape(s.shape), m.reshape(s.shape)

    def generator(self, s, d1, d2):
        """``L f`` on the edge given ``f'`` and ``f''`` at ``s``."""
        a, m = self.coefficients(s)
        return 0.5 * a * d2 + m * d1


def _ray_coefficients(coeffs: SdeCoefficients, e: np.ndarray, X: np.ndarray):
    m = len(X)
    E = np.broadcast_to(e, (m, len(e)))
    if coeffs.sigma_is_identity:
        a = np.ones(m)
    else:
        S = coeffs.sigma(X)
        st = matvec(np.transpose(S, (0, 2, 1)), np.ascontiguousarray(E))
        a = (st * st).sum(axis=1)
    drift = np.zeros(m) if coeffs.b_is_zero else (coeffs.b(X) * E).sum(axis=1)
    return a, drift


def edge_sde(edge, coeffs: SdeCoefficients) -> EdgeSde:
    """Coefficients of the arc-length SDE along an edge.

    ``edge`` is a unit direction (spider ray) or an object with a ``curve``
    attribute / a ParamCurve.
    """
    curve = getattr(edge, "curve", edge)
    if not hasattr(curve, "tangents"):
        e = np.asarray(curve, dtype=float)
        return EdgeSde(np.inf, direction=e, coeffs=coeffs)
    P, T, A = curve.points, curve.tangents, curve.accelerations
    if coeffs.sigma_is_identity:
        a = (T * T).sum(axis=1)
        curv = (A * T).sum(axis=1)
    else:
        St = np.transpose(coeffs.sigma(P), (0, 2, 1))
        sT = matvec(St, T)
        sA = matvec(St, A)
        a = (sT * sT).sum(axis=1)
        curv = (sA * sT).sum(axis=1)
    drift = curv if coeffs.b_is_zero else (coeffs.b(P) * T).sum(axis=1) + curv
    if np.min(a) <= 0:
        raise ValueError("diffusion coefficient vanishes along the edge")
    return EdgeSde(float(curve.length), grid=curve.s.copy(), diffusion2=a, drift=drift, coeffs=coeffs)


# --------------------------------------------------------------------------
# graph topology seen by the limit process


@dataclass
class LimitGraph:
    """Edges with lengths and end vertices plus per-vertex incidence.

    ``ends[k] = (v0, v1)`` with ``v1 = -1`` for an unbounded ray.
    ``incidence[v]`` lists ``(edge, end)`` with ``end = 0`` at ``s = 0``.
    """

    lengths: np.ndarray
    ends: np.ndarray
    incidence: list
    source: object = None

    @classmethod
    def from_graph(cls, graph) -> "LimitGraph":
        if isinstance(graph, SpiderGraph):
            N = graph.n_edges
            return cls(np.full(N, np.inf), np.array([[0, -1]] * N), [[(k, 0) for k in range(N)]], graph)
        lengths = np.array([e.length for e in graph.edges])
        ends = np.array([[e.frm, e.to] for e in graph.edges])
        return cls(lengths, ends, [list(i) for i in graph.incidence], graph)

    @property
    def n_edges(self) -> int:
        return len(self.lengths)


def graph_edge_sdes(graph, coeffs: SdeCoefficients) -> list:
    if isinstance(graph, SpiderGraph):
        return [edge_sde(e, coeffs) for e in graph.directions]
    return [edge_sde(e, coeffs) for e in graph.edges]


@dataclass
class GraphState:
    edge: int
    s: float

    def vertex(self, lg: LimitGraph) -> int | None:
        """Vertex id when the state sits exactly at an edge end."""
        if self.s == 0.0:
            return int(lg.ends[self.edge, 0])
        if self.s == lg.lengths[self.edge]:
            return int(lg.ends[self.edge, 1])
        return None


# --------------------------------------------------------------------------
# stepping


def _cumulative(weights: list) -> list:
    return [None if w is None else np.cumsum(w.p) for w in weights]


def _relocate(lg: LimitGraph, cum: list, edge, s, u):
    """Apply the vertex rule to states that left their edge.

    ``s`` is the unclamped candidate; returns the new ``(edge, s)`` and the
    mask of states that crossed a vertex.
    """
    edge = edge.copy()
    s = s.copy()
    L = lg.lengths[edge]
    low = s < 0
    high = s > L
    for side, mask in ((0, low), (1, high)):
        idx = np.flatnonzero(mask)
        if not idx.size:
            continue
        verts = lg.ends[edge[idx], side]
        over = np.where(side == 0, -s[idx], s[idx] - L[idx])
        for v in np.unique(verts):
            sel = idx[verts == v]
            o = over[verts == v]
            inc = lg.incidence[v]
            j = np.searchsorted(cum[v], u[sel], side="left")
            j = np.minimum(j, len(inc) - 1)
            ke = np.array([inc[q][0] for q in j])
            kend = np.array([inc[q][1] for q in j])
            Lk = lg.lengths[ke]
            o = np.minimum(o, Lk)
            edge[sel] = ke
            s[sel] = np.where(kend == 0, o, Lk - o)
    return edge, s, low | high


def step_graph_many(lg: LimitGraph, cum: list, sdes: list, edge, s, dt: float, z, u, v=None):
    """Vectorised Euler step with the vertex rule.

    ``z`` are normal draws and ``u`` uniforms for the edge choice.  When ``v``
    (a second set of uniforms) is given, a step that ends on the same edge is
    still treated as a vertex visit with the Brownian-bridge probability
    ``exp(-2 d d' / (a dt))`` of having touched a vertex of degree >= 2 in
    between (``d``, ``d'`` the distances to that vertex before and after).
    """
    a = np.empty_like(s)
    m = np.empty_like(s)
    for k in np.unique(edge):
        sel = edge == k
        a[sel], m[sel] = sdes[k].coefficients(s[sel])
    ds = m * dt + np.sqrt(a * dt) * z
    L = lg.lengths[edge]
    ds = np.clip(ds, -L, L)
    cand = s + ds
    if v is not None:
        cand = _bridge_visits(lg, edge, s, cand, L, a * dt, v)
    return _relocate(lg, cum, edge, cand, u)


def _bridge_visits(lg: LimitGraph, edge, s, cand, L, var, v):
    """Fold the candidates of undetected vertex visits beyond that vertex."""
    stay = (cand >= 0) & (cand <= L)
    deg = np.array([len(i) for i in lg.incidence])
    v0 = lg.ends[edge, 0]
    v1 = lg.ends[edge, 1]
    open0 = stay & (deg[v0] > 1)
    open1 = stay & (v1 >= 0) & (deg[np.maximum(v1, 0)] > 1)
    with np.errstate(invalid="ignore"):
        p0 = np.where(open0, np.exp(-2.0 * s * cand / var), 0.0)
        p1 = np.where(open1, np.exp(-2.0 * (L - s) * (L - cand) / var), 0.0)
    hit0 = v < p0
    hit1 = ~hit0 & (v < p0 + p1)
    out = cand.copy()
    out[hit0] = -cand[hit0]
    out[hit1] = L[hit1] + (L[hit1] - cand[hit1])
    return out


def step_graph(state: GraphState, weights: list, edge_sdes: list, dt: float, draws,
               lg: LimitGraph) -> GraphState:
    """One step of the limit process.

    ``draws = (gaussian, uniform)`` or ``(gaussian, uniform, bridge_uniform)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z, u, *rest = draws
    v = np.array([rest[0]], float) if rest else None
    e, s, _ = step_graph_many(lg, _cumulative(weights), edge_sdes, np.array([state.edge]),
                              np.array([float(state.s)]), dt, np.array([z], float), np.array([u], float), v)
    return GraphState(int(e[0]), float(s[0]))


# --------------------------------------------------------------------------
# simulation


@dataclass
class GraphSimConfig:
    dt: float
    T: float
    n_paths: int = 1000
    seed: int = 0
    record_every: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.T < 0:
            raise ValueError("dt must be positive and T non-negative")
        if self.n_paths < 0 or self.record_every < 1:
            raise ValueError("n_paths must be >= 0 and record_every >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class GraphBatch:
    """Trajectories in (edge, arc length) coordinates on a shared time grid."""

    times: np.ndarray
    edges: np.ndarray
    s: np.ndarray
    graph: LimitGraph | None = field(default=None, repr=False)
    vertex_visits: int = 0

    def __len__(self):
        return self.edges.shape[0]

    def positions(self, k: int = -1) -> np.ndarray:
        """Ambient coordinates of all paths at record index ``k``."""
        g = self.graph.source
        e, s = self.edges[:, k], self.s[:, k]
        if isinstance(g, SpiderGraph):
            return s[:, None] * g.directions[e]
        return g.to_point(e, s)

    def write_csv(self, path) -> None:
        """Long-format CSV with columns ``path, t, edge_index, s``."""
        m, r = self.edges.shape
        rows = np.column_stack([np.repeat(np.arange(m), r), np.tile(self.times, m),
                                self.edges.ravel(), self.s.ravel()])
        np.savetxt(path, rows, delimiter=",", header="path,t,edge_index,s", comments="",
                   fmt=["%d", "%.17g", "%d", "%.17g"])


def simulate_graph(graph, weights: list, coeffs: SdeCoefficients, cfg: GraphSimConfig,
                   x0, edge_sdes: list | None = None, bridge: bool = True) -> GraphBatch:
    """Simulate the limit process.

    ``x0`` is ``(edge, s)`` (scalars or arrays).  Gaussian draws use stream
    lane 0, edge-selection uniforms lane 1 and bridge-test uniforms lane 2,
    all indexed by step number, so the result does not depend on how paths
    are grouped.  ``bridge=False`` switches off the in-step visit test and
    leaves the bare overshoot rule.
    """
    lg = graph if isinstance(graph, LimitGraph) else LimitGraph.from_graph(graph)
    src = lg.source
    if isinstance(weights, KirchhoffWeights):
        weights = [weights]
    for v, inc in enumerate(lg.incidence):
        if inc and (weights[v] is None or len(weights[v].p) != len(inc)):
            raise ValueError(f"vertex {v} needs {len(inc)} weights")
    sdes = edge_sdes if edge_sdes is not None else graph_edge_sdes(src, coeffs)
    cum = _cumulative(weights)
    m = cfg.n_paths
    e0, s0 = x0
    edge = np.broadcast_to(np.asarray(e0, dtype=np.int64), (m,)).copy()
    s = np.broadcast_to(np.asarray(s0, dtype=float), (m,)).copy()
    if np.any((s < 0) | (s > lg.lengths[edge])):
        raise ValueError("initial arc lengths must lie on their edges")
    K = cfg.n_steps
    rec_idx = list(range(0, K + 1, cfg.record_every))
    if rec_idx[-1] != K:
        rec_idx.append(K)
    E = np.empty((m, len(rec_idx)), dtype=np.int64)
    S = np.empty((m, len(rec_idx)))
    E[:, 0], S[:, 0] = edge, s
    gkeys = rng.path_keys(cfg.seed, np.arange(m), lane=0)
    ukeys = rng.path_keys(cfg.seed, np.arange(m), lane=1)
    vkeys = rng.path_keys(cfg.seed, np.arange(m), lane=2)
    visits = 0
    r = 1
    for k in range(K):
        ctr = np.uint64(k)
        z = rng.normals(gkeys, ctr)
        u = rng.uniforms(ukeys, ctr)
        v = rng.uniforms(vkeys, ctr) if bridge else None
        edge, s, crossed = step_graph_many(lg, cum, sdes, edge, s, cfg.dt, z, u, v)
        visits += int(np.count_nonzero(crossed))
        if r < len(rec_idx) and rec_idx[r] == k + 1:
            E[:, r], S[:, r] = edge, s
            r += 1
    times = np.array(rec_idx, dtype=float) * cfg.dt
    return GraphBatch(times, E, S, lg, visits)


def edge_sde_euler(sde: EdgeSde, s0, dt: float, n_steps: int, seed: int, n_paths: int) -> np.ndarray:
    """Direct one-dimensional Euler scheme with the limit simulator's draws (no vertex rule)."""
    keys = rng.path_keys(seed, np.arange(n_paths), lane=0)
    s = np.broadcast_to(np.asarray(s0, dtype=float), (n_paths,)).copy()
    for k in range(n_steps):
        z = rng.normals(keys, np.uint64(k))
        a, m = sde.coefficients(s)
        s = s + (m * dt + np.sqrt(a * dt) * z)
    return s


# --------------------------------------------------------------------------
# test functions in the generator domain


@dataclass
class EdgeProfile:
    """Polynomial profile on ``[0, support]``; constant beyond ``support``."""

    poly: BPoly
    support: float

    def _split(self, s):
        s = np.asarray(s, dtype=float)
        return s, s >= self.support

    def value(self, s):
        s, tail = self._split(s)
        return np.where(tail, self.poly(self.support), self.poly(np.minimum(s, self.support)))

    def d1(self, s):
        s, tail = self._split(s)
        return np.where(tail, 0.0, self.poly(np.minimum(s, self.support), 1))

    def d2(self, s):
        s, tail = self._split(s)
        return np.where(tail, 0.0, self.poly(np.minimum(s, self.support), 2))

    def to_dict(self) -> dict:
        return {"breakpoints": self.poly.x.tolist(), "bernstein_coefficients": self.poly.c.tolist(),
                "support": self.support}


@dataclass
class TestFunction:
    """A function on the graph given edge by edge.

    ``profiles[k]`` is the profile of edge ``k`` in its own arc length.
    """

    __test__ = False

    profiles: list
    name: str = "f"

    def value(self, edges, s):
        return self._apply("value", edges, s)

    def d1(self, edges, s):
        return self._apply("d1", edges, s)

    def d2(self, edges, s):
        return self._apply("d2", edges, s)

    def _apply(self, what, edges, s):
        edges = np.asarray(edges)
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape)
        for k in np.unique(edges):
            sel = edges == k
            out[sel] = getattr(self.profiles[k], what)(s[sel])
        return out

    def generator(self, sdes: list, edges, s):
        edges = np.asarray(edges)
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape)
        for k in np.unique(edges):
            sel = edges == k
            p = self.profiles[k]
            out[sel] = sdes[k].generator(s[sel], p.d1(s[sel]), p.d2(s[sel]))
        return out

    def sup_derivatives(self, lg: LimitGraph, n_grid: int = 2001) -> float:
        """``sup |f'| + sup |f''|`` over all edges (finite part of rays)."""
        best1 = best2 = 0.0
        for k, p in enumerate(self.profiles):
            top = min(lg.lengths[k], p.support)
            g = np.linspace(0.0, top, n_grid)
            best1 = max(best1, float(np.max(np.abs(p.d1(g)))))
            best2 = max(best2, float(np.max(np.abs(p.d2(g)))))
        return best1 + best2

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "name": self.name,
                "profiles": [p.to_dict() for p in self.profiles]}


def _end_data(f: TestFunction, lg: LimitGraph, sdes: list, k: int, end: int):
    """Value, outward derivative and generator value of edge ``k`` at one end."""
    s = 0.0 if end == 0 else float(lg.lengths[k])
    p = f.profiles[k]
    val = float(p.value(s))
    d1 = float(p.d1(s))
    gen = float(sdes[k].generator(np.array(s), p.d1(s), p.d2(s)))
    return val, (d1 if end == 0 else -d1), gen


def check_domain(f: TestFunction, weights: list, sdes: list, lg: LimitGraph,
                 kirchhoff_tol: float = 1e-10, generator_tol: float = 1e-8) -> None:
    """Raise DomainViolationError unless ``f`` is in the generator domain."""
    if isinstance(weights, KirchhoffWeights):
        weights = [weights]
    for v, inc in enumerate(lg.incidence):
        if not inc:
            continue
        data = [_end_data(f, lg, sdes, k, end) for k, end in inc]
        vals = np.array([d[0] for d in data])
        outs = np.array([d[1] for d in data])
        gens = np.array([d[2] for d in data])
        scale = max(1.0, float(np.max(np.abs(vals))))
        if np.ptp(vals) > 1e-10 * scale:
            raise DomainViolationError(f"vertex {v}: edge values differ ({vals.tolist()})")
        flux = float(weights[v].p @ outs)
        if abs(flux) > kirchhoff_tol:
            raise DomainViolationError(f"vertex {v}: weighted Kirchhoff sum is {flux:.3e}, not 0")
        if np.ptp(gens) > generator_tol * max(1.0, float(np.max(np.abs(gens)))):
            raise DomainViolationError(f"vertex {v}: generator values differ ({gens.tolist()})")


def make_test_function(lg: LimitGraph, weights: list, sdes: list, seed: int, ray_support: float = 1.0,
                       name: str | None = None, kirchhoff_violation: float = 0.0) -> TestFunction:
    """Random quintic profiles satisfying the domain conditions at every vertex.

    At each vertex a common value and a common generator value are drawn,
    outward slopes are drawn and shifted so the weighted sum vanishes, and the
    second derivatives are solved from the generator condition.  Rays get a
    profile that becomes constant at ``ray_support``.  A non-zero
    ``kirchhoff_violation`` adds that amount to the weighted slope sum (used
    to build negative controls).
    """
    if isinstance(weights, KirchhoffWeights):
        weights = [weights]
    gen = np.random.default_rng(seed)
    nv = len(lg.incidence)
    vval = gen.normal(size=nv)
    vgen = gen.normal(size=nv)
    ends: dict = {}
    for v, inc in enumerate(lg.incidence):
        if not inc:
            continue
        slopes = gen.normal(size=len(inc))
        slopes = slopes - weights[v].p @ slopes + kirchhoff_violation
        for (k, end), a in zip(inc, slopes):
            s = 0.0 if end == 0 else float(lg.lengths[k])
            diff2, drift = sdes[k].coefficients(np.array(s))
            d1 = a if end == 0 else -a
            d2 = 2.0 * (vgen[v] - float(drift) * d1) / float(diff2)
            ends[(k, end)] = (vval[v], d1, d2)
    profiles = []
    for k in range(lg.n_edges):
        start = ends[(k, 0)]
        if np.isfinite(lg.lengths[k]):
            stop, top = ends[(k, 1)], float(lg.lengths[k])
        else:
            stop, top = (gen.normal(), 0.0, 0.0), ray_support
        poly = BPoly.from_derivatives([0.0, top], [list(start), list(stop)])
        profiles.append(EdgeProfile(poly, top))
    return TestFunction(profiles, name or f"quintic_{seed}")


def linear_test_function(lg: LimitGraph, weights: list, slopes, support: float = 1.0,
                         name: str = "linear") -> TestFunction:
    """Linear on each ray near the vertex with the given outward slopes.

    Each profile is linear on ``[0, support]`` and then bends to a constant over
    ``[support, 2 support]`` with a quintic, so ``L f = 0`` near the vertex for
    ``sigma = I, b = 0``.
    """
    profiles = []
    for a in slopes:
        top = 2.0 * support
        val = a * support
        poly = BPoly.from_derivatives([0.0, support, top], [[0.0, a, 0.0], [val, a, 0.0], [val + 0.5 * a * support, 0.0, 0.0]])
        profiles.append(EdgeProfile(poly, top))
    return TestFunction(profiles, name)


def load_weights(path) -> KirchhoffWeights:
    d = json.loads(Path(path).read_text())
    return KirchhoffWeights(d["p"], d.get("kind", "kirchhoff"), d.get("quadrature_tol"))
