"""Statistical estimators that turn simulated batches into pass/fail reports.

Every estimator is a deterministic function of its input; the permutation
test and the bootstrap take an explicit seed.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path as _FsPath

import numpy as np
from scipy import integrate, stats

from .confinement import ConfinementField, PotentialShape
from .geometry import SpiderGraph, project_graph_many, project_spider_many
from .limit_sim import GraphBatch, KirchhoffWeights, LimitGraph, TestFunction, check_domain
from .tube_sim import Path, TubeBatch

SCHEMA_VERSION = 1
Z99 = float(stats.norm.ppf(0.995))


class ExperimentInvalidError(RuntimeError):
    """Too many paths lack the event an estimator needs."""


class InsufficientSamplesError(RuntimeError):
    pass


def to_plain(x):
    if isinstance(x, dict):
        return {k: to_plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return to_plain(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


class _Report:
    def to_dict(self) -> dict:
        d = to_plain(asdict(self))
        d["schema_version"] = SCHEMA_VERSION
        d["report"] = type(self).__name__
        return d


# --------------------------------------------------------------------------
# graph coordinates


def graph_coords(graph, X, hints=None) -> tuple[np.ndarray, np.ndarray]:
    """``(edge, s)`` of the nearest-point projection of each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(graph, SpiderGraph):
        e, s, _, _ = project_spider_many(graph, X)
    else:
        e, s, _, _, _, _ = project_graph_many(graph, X, hints)
    return e, s


# --------------------------------------------------------------------------
# first passage


def first_passage_series(times, radius, edges, level: float):
    """First crossing of ``radius >= level`` on a sampled series.

    The crossing time is linearly interpolated between the bracketing
    samples; the edge is that of the first sample at or beyond ``level``.
    Returns ``(time, edge)`` or ``None``.
    """
    if level <= 0:
        raise ValueError("level must be positive")
    radius = np.asarray(radius, dtype=float)
    hit = np.flatnonzero(radius >= level)
    if not hit.size:
        return None
    k = int(hit[0])
    if k == 0:
        return float(times[0]), int(edges[0])
    r0, r1 = radius[k - 1], radius[k]
    w = (level - r0) / (r1 - r0) if r1 != r0 else 1.0
    return float(times[k - 1] + w * (times[k] - times[k - 1])), int(edges[k])


def first_passage(path, graph, level: float):
    """First passage of ``|pi(w(t))|`` over ``level`` for a tube path or a
    ``(times, edges, s)`` triple from the limit simulator."""
    if isinstance(path, Path):
        e, s = graph_coords(graph, path.positions)
        return first_passage_series(path.times, s, e, level)
    times, edges, s = path
    return first_passage_series(times, s, edges, level)


def _hit_edges(batch, graph, level: float) -> np.ndarray:
    """Edge index of the first passage for every path, ``-1`` when absent."""
    if isinstance(batch, GraphBatch):
        out = np.full(len(batch), -1, dtype=np.int64)
        beyond = batch.s >= level
        any_hit = beyond.any(axis=1)
        first = np.argmax(beyond, axis=1)
        rows = np.flatnonzero(any_hit)
        out[rows] = batch.edges[rows, first[rows]]
        return out
    out = np.full(len(batch), -1, dtype=np.int64)
    for i, p in enumerate(batch):
        fp = first_passage(p, graph, level)
        if fp is not None:
            out[i] = fp[1]
    return out


def wilson_interval(k, n, z: float = Z99):
    k = np.asarray(k, dtype=float)
    if n == 0:
        return np.zeros_like(k), np.ones_like(k)
    p = k / n
    den = 1 + z * z / n
    mid = (p + z * z / (2 * n)) / den
    half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return mid - half, mid + half


@dataclass
class HitProbReport(_Report):
    level: float
    n_paths: int
    counts: list
    missing: int
    probabilities: list
    wilson_low: list
    wilson_high: list
    targets: list
    standard_errors: list
    z_scores: list
    max_deviation: float
    tolerance: list
    passed: bool


def hitting_stats(batch, graph, level: float, targets, abs_tol: float = 0.02,
                  max_missing: float = 0.01) -> HitProbReport:
    """Edge-hit frequencies at first passage of ``|pi| = level``.

    Pass when every ``|empirical - target| <= max(3 SE, abs_tol)``; the
    standard error is the binomial one under the target probabilities.
    """
    targets = np.asarray(targets.p if isinstance(targets, KirchhoffWeights) else targets, dtype=float)
    n_edges = len(targets)
    hits = _hit_edges(batch, graph, level)
    n = len(hits)
    if n == 0:
        raise ExperimentInvalidError("empty batch")
    missing = int(np.count_nonzero(hits < 0))
    if missing > max_missing * n:
        raise ExperimentInvalidError(f"{missing} of {n} paths never reached |pi| = {level}")
    counts = np.bincount(hits[hits >= 0], minlength=n_edges)
    p = counts / n
    lo, hi = wilson_interval(counts, n)
    se = np.sqrt(targets * (1 - targets) / n)
    dev = np.abs(p - targets)
    tol = np.maximum(3 * se, abs_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (p - targets) / se, np.where(dev > 0, np.inf, 0.0))
    return HitProbReport(level, n, counts.tolist(), missing, p.tolist(), lo.tolist(), hi.tolist(),
                         targets.tolist(), se.tolist(), z.tolist(), float(dev.max()), tol.tolist(),
                         bool(np.all(dev <= tol)))


@dataclass
class StartInsensitivityReport(_Report):
    level: float
    distance: float
    p_value: float
    n_a: int
    n_b: int
    frequencies_a: list
    frequencies_b: list
    n_permutations: int
    seed: int
    passed: bool


def _tv(labels_a, labels_b, n_edges):
    fa = np.bincount(labels_a, minlength=n_edges) / len(labels_a)
    fb = np.bincount(labels_b, minlength=n_edges) / len(labels_b)
    return 0.5 * float(np.abs(fa - fb).sum()), fa, fb


def start_insensitivity(batch_a, batch_b, graph, level: float, seed: int = 0, n_permutations: int = 2000,
                        alpha: float = 0.01, max_missing: float = 0.01) -> StartInsensitivityReport:
    """Total-variation distance of the two edge-hit laws and its permutation p-value."""
    la = _hit_edges(batch_a, graph, level)
    lb = _hit_edges(batch_b, graph, level)
    for lab in (la, lb):
        if len(lab) == 0:
            raise ExperimentInvalidError("empty batch")
        if np.count_nonzero(lab < 0) > max_missing * len(lab):
            raise ExperimentInvalidError(f"too many paths never reached |pi| = {level}")
    la, lb = la[la >= 0], lb[lb >= 0]
    n_edges = int(max(la.max(initial=0), lb.max(initial=0))) + 1
    obs, fa, fb = _tv(la, lb, n_edges)
    pooled = np.concatenate([la, lb])
    gen = np.random.default_rng(seed)
    na = len(la)
    onehot = np.eye(n_edges)[pooled]
    exceed = 0
    for _ in range(n_permutations):
        perm = gen.permutation(len(pooled))
        ca = onehot[perm[:na]].sum(axis=0) / na
        cb = onehot[perm[na:]].sum(axis=0) / (len(pooled) - na)
        if 0.5 * np.abs(ca - cb).sum() >= obs - 1e-12:
            exceed += 1
    pval = (1 + exceed) / (1 + n_permutations)
    return StartInsensitivityReport(level, obs, pval, len(la), len(lb), fa.tolist(), fb.tolist(),
                                    n_permutations, seed, bool(pval > alpha))


# --------------------------------------------------------------------------
# occupation


@dataclass
class OccupationReport(_Report):
    deltas: list
    T: float
    occupation: list
    standard_errors: list
    ratios: list
    ratio_low: list
    ratio_high: list
    spread: float
    band: float
    passed: bool


def occupation_near_vertex(batch, deltas, T: float, vertex=None, band: float = 0.5) -> OccupationReport:
    """Mean occupation time of ``{|x - V| <= delta}`` on ``[0, T]`` (trapezoidal rule).

    Pass when ``max(ratio) / min(ratio) <= 1 + band`` where ``ratio =
    occupation / delta``.
    """
    deltas = np.asarray(deltas, dtype=float)
    per_path = []
    for p in batch:
        times = p.times if hasattr(p, "times") else p[0]
        pos = p.positions if hasattr(p, "positions") else p[1]
        sel = times <= T + 1e-12
        t = times[sel]
        if t[-1] < T - 1e-9:
            raise ValueError("path does not cover the horizon T")
        v = np.zeros(pos.shape[1]) if vertex is None else np.asarray(vertex, dtype=float)
        r = np.linalg.norm(pos[sel] - v, axis=1)
        ind = (r[None, :] <= deltas[:, None]).astype(float)
        per_path.append(integrate.trapezoid(ind, t, axis=1))
    occ = np.array(per_path)
    m = len(occ)
    mean = occ.mean(axis=0)
    se = occ.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    ratios = mean / deltas
    lo = (mean - Z99 * se) / deltas
    hi = (mean + Z99 * se) / deltas
    if np.min(ratios) <= 0:
        spread = np.inf
    else:
        spread = float(np.max(ratios) / np.min(ratios))
    passed = bool(np.isfinite(spread) and spread <= 1 + band and np.all(mean < T * (1 - 1e-9)))
    return OccupationReport(deltas.tolist(), T, mean.tolist(), se.tolist(), ratios.tolist(), lo.tolist(),
                            hi.tolist(), spread, band, passed)


def reflected_bm_occupation(delta: float, T: float) -> float:
    """``int_0^T P(|B_s| <= delta) ds`` for a standard Brownian motion."""
    val, _ = integrate.quad(lambda s: 2 * stats.norm.cdf(delta / np.sqrt(s)) - 1 if s > 0 else 1.0,
                            0.0, T, limit=200)
    return val


# --------------------------------------------------------------------------
# stationary transverse law


class RadialLaw:
    """CDF of the density proportional to ``r^(n-2) exp(-beta u(r))`` on ``[0, 1)``.

    ``beta = 1`` is the law named by the invariant measure ``exp(-U) dx``;
    ``beta = 2`` is the invariant law of ``dX = dW - grad U dt`` (generator
    ``Delta / 2 - grad U . grad``), kept as a diagnostic.
    """

    def __init__(self, shape: PotentialShape, n: int, n_grid: int = 4001, beta: float = 1.0):
        self.shape = shape
        self.n = n
        self.beta = beta
        k = n - 2

        def dens(r):
            return r ** k * np.exp(-beta * float(shape.u(r))) if r < 1 else 0.0

        grid = np.linspace(0.0, 1.0, n_grid)
        pieces = [integrate.quad(dens, a, b, epsabs=1e-14, epsrel=1e-12)[0] for a, b in zip(grid[:-1], grid[1:])]
        cum = np.concatenate([[0.0], np.cumsum(pieces)])
        self.norm = cum[-1]
        self.grid = grid
        self.cum = cum / cum[-1]
        self._dens = dens

    def cdf(self, r):
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        # piecewise-linear CDF on a fine grid; the integrand is smooth so the error is ~ (1/n_grid)^2
        return np.interp(r, self.grid, self.cum)


def effective_sample_size(series: list, max_lag: int = 200) -> float:
    """Pooled ESS of several autocorrelated series (initial positive sequence)."""
    series = [np.asarray(s, dtype=float) for s in series if len(s) > 0]
    if not series:
        return 0.0
    allv = np.concatenate(series)
    mu, var = allv.mean(), allv.var()
    n = len(allv)
    if var == 0:
        return 1.0
    rho_sum = 0.0
    for lag in range(1, max_lag):
        num = sum(float(((s[:-lag] - mu) * (s[lag:] - mu)).sum()) for s in series if len(s) > lag)
        cnt = sum(len(s) - lag for s in series if len(s) > lag)
        if cnt == 0:
            break
        rho = num / cnt / var
        if rho <= 0:
            break
        rho_sum += rho
    return n / (1 + 2 * rho_sum)


@dataclass
class RadialLawReport(_Report):
    n_samples: int
    effective_sample_size: float
    ks_statistic: float
    p_value: float
    histogram_edges: list
    histograms: dict = field(default_factory=dict)
    passed: bool = False
    beta: float = 1.0

    def write_histograms_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["edge", "bin_low", "bin_high", "count"])
            for e, counts in self.histograms.items():
                for a, b, c in zip(self.histogram_edges[:-1], self.histogram_edges[1:], counts):
                    w.writerow([e, a, b, c])


def transverse_samples(batch, field: ConfinementField, eps: float, burn_in: float, stride: int = 1,
                       min_distance: float | None = None):
    """Per-path series of ``(edge, r = d / (c eps))`` after burn-in, away from junctions."""
    g = field.graph
    if min_distance is None:
        kap = g.kappa if isinstance(g, SpiderGraph) else float(np.max(g.kappa))
        min_distance = 2 * kap * eps
    out = []
    for p in batch:
        sel = np.flatnonzero(p.times >= burn_in - 1e-12)[::stride]
        X = p.positions[sel]
        if isinstance(g, SpiderGraph):
            e, s, d, _ = project_spider_many(g, X)
            widths = g.widths
            far = s >= min_distance
        else:
            e, s, d, _, _, _ = project_graph_many(g, X)
            widths = np.array([ed.width for ed in g.edges])
            far = np.ones(len(X), dtype=bool)
            for v, inc in enumerate(g.incidence):
                if len(inc) >= 2:
                    far &= np.linalg.norm(X - g.vertices[v], axis=1) >= min_distance
        r = d / (widths[e] * eps)
        # series are broken where the path visits the junction; keep the runs
        runs = np.split(np.arange(len(r)), np.flatnonzero(np.diff(far.astype(int)) != 0) + 1)
        for run in runs:
            if run.size and far[run[0]]:
                out.append((e[run], r[run]))
    return out


def radial_stationarity(batch, field: ConfinementField, eps: float, burn_in: float, stride: int,
                        n: int | None = None, min_ess: float = 1000.0, alpha: float = 0.01,
                        bins: int = 20, beta: float = 1.0) -> RadialLawReport:
    """KS test of the transverse coordinate against ``r^(n-2) exp(-u(r))``.

    Samples are mapped through the CDF of their own edge's law and the pooled
    values are tested against the uniform law.  The KS p-value uses the
    effective sample size estimated from the autocorrelation of the
    subsampled series.
    """
    n = n or field.n
    series = transverse_samples(batch, field, eps, burn_in, stride)
    if not series:
        raise InsufficientSamplesError("no post-burn-in samples away from the junction")
    laws: dict[int, RadialLaw] = {}
    pits = []
    hist = {}
    edges_grid = np.linspace(0.0, 1.0, bins + 1)
    for e, r in series:
        u = np.empty(len(r))
        for k in np.unique(e):
            if k not in laws:
                laws[k] = RadialLaw(field.shapes[k], n, beta=beta)
            sel = e == k
            u[sel] = laws[k].cdf(r[sel])
            hist[int(k)] = hist.get(int(k), np.zeros(bins, dtype=int)) + np.histogram(r[sel], edges_grid)[0]
        pits.append(u)
    allu = np.concatenate(pits)
    ess = effective_sample_size(pits)
    if ess < min_ess:
        raise InsufficientSamplesError(f"effective sample size {ess:.0f} is below {min_ess:.0f}")
    D = float(stats.kstest(allu, "uniform").statistic)
    p = float(stats.kstwo.sf(D, int(np.floor(ess))))
    return RadialLawReport(len(allu), float(ess), D, p, edges_grid.tolist(),
                           {k: v.tolist() for k, v in sorted(hist.items())}, bool(p > alpha), beta)


def ks_uniform_report(samples, shape: PotentialShape, n: int, alpha: float = 0.01) -> RadialLawReport:
    """KS test of independent radial samples (no autocorrelation correction)."""
    law = RadialLaw(shape, n)
    r = np.asarray(samples, dtype=float)
    D = float(stats.kstest(law.cdf(r), "uniform").statistic)
    p = float(stats.kstwo.sf(D, len(r)))
    grid = np.linspace(0.0, 1.0, 21)
    return RadialLawReport(len(r), float(len(r)), D, p, grid.tolist(), {0: np.histogram(r, grid)[0].tolist()},
                           bool(p > alpha))


# --------------------------------------------------------------------------
# martingale residual


@dataclass
class ResidualReport(_Report):
    test_function: str
    s: float
    t: float
    estimate: float
    standard_error: float
    bias_budget: float
    n_paths: int
    passed: bool


def bias_budget(dt: float, f: TestFunction, lg: LimitGraph, factor: float = 1.0) -> float:
    """Allowance for the time-discretisation bias: ``factor * sqrt(dt) * (sup|f'| + sup|f''|)``."""
    return factor * np.sqrt(dt) * f.sup_derivatives(lg)


def martingale_residual(batch: GraphBatch, f: TestFunction, edge_sdes: list, weights, s: float, t: float,
                        budget_factor: float = 1.0) -> ResidualReport:
    """Estimate ``E[f(X_t) - f(X_s) - int_s^t L f(X_u) du]``.

    The integral is a left-point sum over the recorded grid, which must be
    the simulation grid (``record_every = 1``).  ``f`` must pass the domain
    check first; otherwise DomainViolationError is raised.
    """
    lg = batch.graph
    check_domain(f, weights, edge_sdes, lg)
    times = batch.times
    ks = int(np.argmin(np.abs(times - s)))
    kt = int(np.argmin(np.abs(times - t)))
    if abs(times[ks] - s) > 1e-9 or abs(times[kt] - t) > 1e-9 or kt <= ks:
        raise ValueError("s and t must be recorded times with s < t")
    dts = np.diff(times[ks:kt + 1])
    if dts.size and np.ptp(dts) > 1e-12 * max(1.0, t):
        raise ValueError("the martingale residual needs a uniform recording grid")
    dt = float(dts[0])
    integral = np.zeros(len(batch))
    for k in range(ks, kt):
        integral += f.generator(edge_sdes, batch.edges[:, k], batch.s[:, k]) * dt
    resid = f.value(batch.edges[:, kt], batch.s[:, kt]) - f.value(batch.edges[:, ks], batch.s[:, ks]) - integral
    est = float(resid.mean())
    se = float(resid.std(ddof=1) / np.sqrt(len(resid)))
    budget = float(bias_budget(dt, f, lg, budget_factor))
    return ResidualReport(f.name, float(times[ks]), float(times[kt]), est, se, budget, len(resid),
                          bool(abs(est) <= 3 * se + budget))


# --------------------------------------------------------------------------
# marginal distances


@dataclass
class MarginalDistanceReport(_Report):
    times: list
    distances: list
    edge_w1: list
    edge_tv: list


def marginal_distance_coords(coords_a, coords_b, n_edges: int):
    """``sum_i wbar_i W1_i + TV(edge frequencies)`` between two ``(edge, s)`` samples.

    ``wbar_i`` is the average of the two edge frequencies.
    """
    ea, sa = coords_a
    eb, sb = coords_b
    fa = np.bincount(ea, minlength=n_edges) / len(ea)
    fb = np.bincount(eb, minlength=n_edges) / len(eb)
    tv = 0.5 * float(np.abs(fa - fb).sum())
    w = 0.0
    per = []
    for i in range(n_edges):
        xa, xb = sa[ea == i], sb[eb == i]
        if len(xa) and len(xb):
            wi = float(stats.wasserstein_distance(xa, xb))
        else:
            wi = 0.0
        per.append(wi)
        w += 0.5 * (fa[i] + fb[i]) * wi
    return w + tv, per, tv


def marginal_distance(tube_batch: TubeBatch, graph, graph_batch: GraphBatch, times) -> MarginalDistanceReport:
    """Per-time distance between the projected tube marginal and the limit marginal."""
    n_edges = graph_batch.graph.n_edges
    out_d, out_w, out_tv = [], [], []
    for t in times:
        kg = np.flatnonzero(np.abs(graph_batch.times - t) < 1e-9)
        if not kg.size:
            raise ValueError(f"time {t} is not on the limit-simulator grid")
        try:
            X = tube_batch.positions_at(t)
        except ValueError as exc:
            raise ValueError(f"time {t} is not on the tube grid") from exc
        ca = graph_coords(graph, X)
        cb = (graph_batch.edges[:, kg[0]], graph_batch.s[:, kg[0]])
        d, per, tv = marginal_distance_coords(ca, cb, n_edges)
        out_d.append(d)
        out_w.append(per)
        out_tv.append(tv)
    return MarginalDistanceReport(list(map(float, times)), out_d, out_w, out_tv)


def bootstrap_se(fn, samples_a, samples_b, n_boot: int = 200, seed: int = 0) -> float:
    """Bootstrap standard error of ``fn(a, b)`` resampling both samples."""
    gen = np.random.default_rng(seed)
    a = np.asarray(samples_a)
    b = np.asarray(samples_b)
    vals = [fn(a[gen.integers(0, len(a), len(a))], b[gen.integers(0, len(b), len(b))]) for _ in range(n_boot)]
    return float(np.std(vals, ddof=1))


def non_increasing_trend(values, standard_errors, allowance: float = 2.0) -> bool:
    """``v[k+1] <= v[k] + allowance * sqrt(se[k]^2 + se[k+1]^2)`` for every k."""
    v = np.asarray(values, dtype=float)
    se = np.asarray(standard_errors, dtype=float)
    slack = allowance * np.sqrt(se[:-1] ** 2 + se[1:] ** 2)
    return bool(np.all(v[1:] <= v[:-1] + slack))


def write_report(report, path) -> None:
    import json
    _FsPath(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))

