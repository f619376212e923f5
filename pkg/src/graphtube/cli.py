"""Configuration loading, experiment orchestration and the ``graphtube`` command."""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import CoefficientError, SdeCoefficients
from .confinement import ConfinementField, PotentialShape, load_shapes, shape_from_dict
from .geometry import GeometryError, MetricGraph, SpiderGraph, graph_from_dict, load_graph
from .limit_sim import (DomainViolationError, GraphSimConfig, LimitGraph, graph_edge_sdes, graph_weights,
                        make_test_function, simulate_graph)
from .tube_sim import TubeBatch, TubeSimConfig, resolve_workers, simulate
from .verify import (bootstrap_se, graph_coords, hitting_stats, marginal_distance, marginal_distance_coords,
                     martingale_residual, non_increasing_trend, occupation_near_vertex, radial_stationarity,
                     start_insensitivity, to_plain)

SCHEMA_VERSION = 1
KINDS = ("hit_probs", "occupation", "stationarity", "residual", "convergence_sweep", "curve_limit",
         "reflected_variant")
# experiments whose targets are the vertex weights; these need sigma = I at the vertices
WEIGHT_SENSITIVE = {"hit_probs", "convergence_sweep", "reflected_variant", "residual"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    graph: dict
    shapes: list
    coefficients: dict
    eps: list
    T: float
    n_paths: int
    dt: float | None = None
    dt_over_eps2: float | None = None
    deltas: list = field(default_factory=lambda: [0.5])
    seed: int = 0
    options: dict = field(default_factory=dict)

    def dt_for(self, eps: float) -> float:
        return self.dt if self.dt is not None else self.dt_over_eps2 * eps * eps

    def to_dict(self) -> dict:
        d = {k: copy.deepcopy(getattr(self, k)) for k in self.__dataclass_fields__}
        return d


@dataclass
class SuiteConfig:
    experiments: list
    seed: int = 0
    workers: int = 0
    out: str | None = None

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "seed": self.seed, "workers": self.workers,
                "experiments": [e.to_dict() for e in self.experiments]}

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# loading and validation


def _shapes_list(spec) -> list:
    if isinstance(spec, dict):
        spec = [spec]
    return list(spec)


def _experiment_from_dict(d: dict, index: int, master_seed: int) -> ExperimentConfig:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in KINDS:
        raise ConfigError(f"experiment {index}: kind must be one of {KINDS}, got {kind!r}")
    for key in ("graph", "eps", "T", "n_paths"):
        if key not in d:
            raise ConfigError(f"experiment {index} ({kind}): missing field {key!r}")
    eps = d.pop("eps")
    eps = [float(e) for e in (eps if isinstance(eps, list) else [eps])]
    cfg = ExperimentConfig(
        kind=kind,
        name=str(d.pop("name", f"{kind}_{index}")),
        graph=d.pop("graph"),
        shapes=_shapes_list(d.pop("shapes", {"kind": "power_ratio", "alpha": 2.0})),
        coefficients=d.pop("coefficients", {"sigma": {"kind": "identity"}, "b": {"kind": "zero"}}),
        eps=eps,
        T=float(d.pop("T")),
        n_paths=int(d.pop("n_paths")),
        dt=d.pop("dt", None),
        dt_over_eps2=d.pop("dt_over_eps2", None),
        deltas=[float(x) for x in d.pop("deltas", [0.5])],
        seed=int(d.pop("seed", master_seed)),
        options=d.pop("options", {}),
    )
    if d:
        raise ConfigError(f"experiment {cfg.name}: unknown fields {sorted(d)}")
    validate_experiment(cfg)
    return cfg


def validate_experiment(cfg: ExperimentConfig) -> None:
    """Check referential validity and the numerical invariants; raise ConfigError."""
    where = f"experiment {cfg.name}"
    if (cfg.dt is None) == (cfg.dt_over_eps2 is None):
        raise ConfigError(f"{where}: give exactly one of dt and dt_over_eps2")
    if any(e <= 0 for e in cfg.eps) or not cfg.eps:
        raise ConfigError(f"{where}: eps values must be positive")
    emin = min(cfg.eps)
    dtmax = max(cfg.dt_for(e) for e in cfg.eps) if cfg.dt is None else cfg.dt
    if cfg.dt is not None and cfg.dt > emin ** 2:
        raise ConfigError(f"{where}: dt={cfg.dt} exceeds min(eps)^2={emin ** 2}")
    if cfg.dt_over_eps2 is not None and not 0 < cfg.dt_over_eps2 <= 1:
        raise ConfigError(f"{where}: dt_over_eps2 must lie in (0, 1]")
    if dtmax <= 0:
        raise ConfigError(f"{where}: dt must be positive")
    if cfg.n_paths < 100:
        raise ConfigError(f"{where}: n_paths must be >= 100")
    if cfg.T <= 0:
        raise ConfigError(f"{where}: T must be positive")
    try:
        graph = graph_from_dict(cfg.graph)
    except (GeometryError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid graph: {exc}") from exc
    try:
        shapes = [shape_from_dict(s) for s in cfg.shapes]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{where}: invalid shape: {exc}") from exc
    n_edges = graph.n_edges if isinstance(graph, SpiderGraph) else len(graph.edges)
    if isinstance(graph, MetricGraph):
        bad = [k for k, e in enumerate(graph.edges) if e.shape >= len(shapes)]
        if bad and len(shapes) != n_edges:
            raise ConfigError(f"{where}: edges {bad} reference unknown shape ids")
    elif len(shapes) not in (1, n_edges):
        raise ConfigError(f"{where}: need 1 or {n_edges} shapes, got {len(shapes)}")
    try:
        coeffs = SdeCoefficients.from_dict(graph.n, cfg.coefficients)
    except (CoefficientError, KeyError) as exc:
        raise ConfigError(f"{where}: invalid coefficients: {exc}") from exc
    if cfg.kind in WEIGHT_SENSITIVE:
        for v in _weight_vertices(graph):
            S = coeffs.sigma(v[None, :])[0]
            if np.max(np.abs(S - np.eye(graph.n))) > 1e-12:
                raise ConfigError(
                    f"{where}: {cfg.kind} needs sigma = I at every vertex "
                    f"(the edge weights are only valid under that assumption); sigma at {v.tolist()} is {S.tolist()}"
                )
    if cfg.kind == "stationarity" and not coeffs.sigma_at_origin_is_identity():
        raise ConfigError(f"{where}: the driftless reference process needs sigma(O) = I")


def _weight_vertices(graph) -> list:
    if isinstance(graph, SpiderGraph):
        return [np.zeros(graph.n)]
    return [graph.vertices[v] for v, inc in enumerate(graph.incidence) if len(inc) >= 2]


def suite_from_dict(data: dict) -> SuiteConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    seed = int(data.get("seed", 0))
    exps = data.get("experiments")
    if exps is None:
        exps = [{k: v for k, v in data.items() if k not in ("seed", "workers", "out", "schema_version")}]
    if not exps:
        raise ConfigError("no experiments configured")
    experiments = [_experiment_from_dict(e, i, seed) for i, e in enumerate(exps)]
    names = [e.name for e in experiments]
    if len(set(names)) != len(names):
        raise ConfigError("experiment names must be unique")
    return SuiteConfig(experiments, seed, int(data.get("workers", 0)), data.get("out"))


def load_config(path) -> SuiteConfig:
    """Parse and validate a configuration file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return suite_from_dict(data)


# --------------------------------------------------------------------------
# experiment runners


@dataclass
class RunManifest:
    config_hash: str
    code_version: str
    results: dict
    wall_clock: dict
    rng_accounting: dict
    halvings_p99: dict
    started: str
    finished: str
    workers: int

    @property
    def passed(self) -> bool:
        return all(self.results.values())

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "config_hash": self.config_hash,
                "code_version": self.code_version, "passed": self.passed, "results": self.results,
                "wall_clock_seconds": self.wall_clock, "rng_accounting": self.rng_accounting,
                "halvings_p99": self.halvings_p99, "started": self.started, "finished": self.finished,
                "workers": self.workers}


def derived_seed(master: int, *parts: int) -> int:
    """Deterministic 63-bit seed for a sub-run."""
    return int(np.random.SeedSequence([master, *parts]).generate_state(1, np.uint64)[0] >> np.uint64(1))


class _Context:
    def __init__(self, cfg: ExperimentConfig, workers: int):
        self.cfg = cfg
        self.workers = workers
        self.graph = graph_from_dict(cfg.graph)
        self.shapes = [shape_from_dict(s) for s in cfg.shapes]
        self.field = ConfinementField(self.graph, self.shapes if len(self.shapes) > 1 else self.shapes[0])
        self.coeffs = SdeCoefficients.from_dict(self.graph.n, cfg.coefficients)
        self.diag = {"draws": 0, "limit_draws": 0, "halvings_p99": 0.0, "non_exit_violations": 0}

    @property
    def opts(self) -> dict:
        return self.cfg.options

    def start_point(self, eps: float, key: str = "start"):
        """Initial condition from the options: a point, a point on an edge, or edges in rotation.

        ``{"point": [...]}``, ``{"edge": k, "radius": r, "kappa_multiple": m}``
        (arc length ``r + m kappa eps`` along edge ``k``), or
        ``{"edges": [k0, k1, ...], "radius": r}`` which places path ``i`` on
        edge ``k_{i mod len}``.
        """
        spec = self.opts.get(key, {"point": [0.0] * self.graph.n})
        if "point" in spec:
            return np.asarray(spec["point"], dtype=float)
        radius = float(spec.get("radius", 0.0)) + float(spec.get("kappa_multiple", 0.0)) * self._kappa() * eps
        if "edge" in spec:
            return self._edge_point(np.array([int(spec["edge"])]), radius)[0]
        if "edges" in spec:
            edges = np.asarray(spec["edges"], dtype=int)
            return lambda idx: self._edge_point(edges[np.asarray(idx) % len(edges)], radius)
        raise ConfigError(f"experiment {self.cfg.name}: cannot read start point {spec}")

    def _edge_point(self, edges: np.ndarray, s: float) -> np.ndarray:
        g = self.graph
        if isinstance(g, SpiderGraph):
            return s * g.directions[edges]
        return g.to_point(edges, np.full(len(edges), s))

    def _kappa(self) -> float:
        g = self.graph
        return g.kappa if isinstance(g, SpiderGraph) else float(np.max(g.kappa))

    def tube(self, eps: float, seed: int, x0, mode: str = "confined", T: float | None = None,
             stop_radius=None, record_every: int = 10 ** 9, dt: float | None = None) -> TubeBatch:
        cfg = TubeSimConfig(eps=eps, dt=self.cfg.dt_for(eps) if dt is None else dt, T=self.cfg.T if T is None else T,
                            n_paths=self.cfg.n_paths, seed=seed, mode=mode,
                            max_substep_halvings=int(self.opts.get("max_substep_halvings", 60)),
                            record_every=record_every, stop_radius=stop_radius, workers=self.workers)
        coeffs = SdeCoefficients.identity(self.graph.n) if mode == "driftless_reference" else self.coeffs
        batch = simulate(self.field, coeffs, cfg, x0)
        d = batch.diagnostics()
        self.diag["draws"] += d["draws_total"]
        self.diag["halvings_p99"] = max(self.diag["halvings_p99"], d["halvings_p99"])
        if mode != "reflected":
            self.diag["non_exit_violations"] += count_exits(self.field, eps, batch)
        return batch

    def count_limit_draws(self, gcfg: GraphSimConfig) -> None:
        # one normal and two uniforms per path and step
        self.diag["limit_draws"] += 3 * gcfg.n_paths * gcfg.n_steps

    def targets(self):
        if self.opts.get("targets", "kirchhoff") == "reflecting":
            return graph_weights(self.graph, reflecting=True)
        return graph_weights(self.graph, self.shapes if len(self.shapes) > 1 else self.shapes[0])


def count_exits(field: ConfinementField, eps: float, batch: TubeBatch) -> int:
    """Number of paths with a recorded position outside the open tube."""
    bad = 0
    for p in batch:
        if not np.all(field.evaluate(p.positions, eps).inside):
            bad += 1
    return bad


def _tube_summary(batch: TubeBatch) -> dict:
    d = batch.diagnostics()
    return {k: d[k] for k in ("n_paths", "halvings_total", "halvings_p99", "max_level", "reflections_total",
                              "draws_total")}


def _run_hits(ctx: _Context, mode: str, eps_list: list, idx: int) -> tuple[dict, bool]:
    cfg = ctx.cfg
    level = cfg.deltas[0]
    w = ctx.targets()[0]
    abs_tol = float(ctx.opts.get("abs_tol", 0.02))
    per_eps = []
    for j, eps in enumerate(eps_list):
        batch = ctx.tube(eps, derived_seed(cfg.seed, idx, j), ctx.start_point(eps), mode=mode, stop_radius=level,
                         T=cfg.T)
        rep = hitting_stats(batch, ctx.graph, level, w, abs_tol=abs_tol)
        entry = {"eps": eps, "dt": cfg.dt_for(eps), "hits": rep.to_dict(), "simulation": _tube_summary(batch)}
        if "start_b" in ctx.opts:
            other = ctx.tube(eps, derived_seed(cfg.seed, idx, j, 1), ctx.start_point(eps, "start_b"), mode=mode,
                             stop_radius=level, T=cfg.T)
            si = start_insensitivity(batch, other, ctx.graph, level, seed=derived_seed(cfg.seed, idx, j, 2),
                                     n_permutations=int(ctx.opts.get("n_permutations", 2000)))
            entry["start_insensitivity"] = si.to_dict()
            entry["simulation_b"] = _tube_summary(other)
        per_eps.append(entry)
    return {"per_eps": per_eps}, True


def run_hit_probs(ctx: _Context, idx: int) -> tuple[dict, bool]:
    mode = ctx.opts.get("mode", "confined")
    body, _ = _run_hits(ctx, mode, ctx.cfg.eps, idx)
    ok = True
    for e in body["per_eps"]:
        ok &= e["hits"]["passed"]
        if "start_insensitivity" in e:
            ok &= e["start_insensitivity"]["passed"]
    return body, bool(ok)


def run_reflected_variant(ctx: _Context, idx: int) -> tuple[dict, bool]:
    ctx.cfg.options.setdefault("targets", "reflecting")
    body, _ = _run_hits(ctx, "reflected", ctx.cfg.eps, idx)
    return body, bool(all(e["hits"]["passed"] for e in body["per_eps"]))


def run_convergence_sweep(ctx: _Context, idx: int) -> tuple[dict, bool]:
    eps_list = sorted(ctx.cfg.eps, reverse=True)
    body, _ = _run_hits(ctx, ctx.opts.get("mode", "confined"), eps_list, idx)
    devs, ses = [], []
    for e in body["per_eps"]:
        h = e["hits"]
        k = int(np.argmax(np.abs(np.subtract(h["probabilities"], h["targets"]))))
        devs.append(h["max_deviation"])
        ses.append(h["standard_errors"][k])
    trend = non_increasing_trend(devs, ses)
    body["max_deviation"] = devs
    body["trend_non_increasing"] = trend
    final_ok = body["per_eps"][-1]["hits"]["passed"]
    body["smallest_eps_passed"] = final_ok
    return body, bool(trend and final_ok)


def run_occupation(ctx: _Context, idx: int) -> tuple[dict, bool]:
    cfg = ctx.cfg
    out = []
    ok = True
    for j, eps in enumerate(cfg.eps):
        stride = int(ctx.opts.get("record_every", 5))
        batch = ctx.tube(eps, derived_seed(cfg.seed, idx, j), ctx.start_point(eps), record_every=stride)
        rep = occupation_near_vertex(batch, cfg.deltas, cfg.T, band=float(ctx.opts.get("band", 0.5)))
        out.append({"eps": eps, "occupation": rep.to_dict(), "simulation": _tube_summary(batch)})
        ok &= rep.passed
    return {"per_eps": out}, bool(ok)


def run_stationarity(ctx: _Context, idx: int) -> tuple[dict, bool]:
    cfg = ctx.cfg
    out = []
    ok = True
    for j, eps in enumerate(cfg.eps):
        dt = cfg.dt_for(eps)
        batch = ctx.tube(eps, derived_seed(cfg.seed, idx, j), ctx.start_point(eps), mode="driftless_reference",
                         record_every=1)
        burn = float(ctx.opts.get("burn_in_over_eps2", 10.0)) * eps * eps
        stride = max(1, int(np.ceil(float(ctx.opts.get("stride_over_eps2", 10.0)) * eps * eps / dt - 1e-9)))
        rep = radial_stationarity(batch, ctx.field, eps, burn, stride, min_ess=float(ctx.opts.get("min_ess", 1000)))
        entry = {"eps": eps, "dt": dt, "stride": stride, "radial_law": rep.to_dict(),
                 "simulation": _tube_summary(batch)}
        for beta in ctx.opts.get("diagnostic_betas", []):
            diag = radial_stationarity(batch, ctx.field, eps, burn, stride, beta=float(beta), min_ess=0)
            entry.setdefault("diagnostics", []).append(diag.to_dict())
        out.append(entry)
        ok &= rep.passed
    return {"per_eps": out}, bool(ok)


def run_residual(ctx: _Context, idx: int) -> tuple[dict, bool]:
    cfg = ctx.cfg
    lg = LimitGraph.from_graph(ctx.graph)
    w = ctx.targets()
    sdes = graph_edge_sdes(ctx.graph, ctx.coeffs)
    dt = cfg.dt if cfg.dt is not None else cfg.dt_over_eps2 * min(cfg.eps) ** 2
    start = ctx.opts.get("start_graph", {"edge": 0, "s": 0.0})
    s0, t1 = ctx.opts.get("window", [0.0, cfg.T])
    factor = float(ctx.opts.get("budget_factor", 1.0))
    functions = [make_test_function(lg, w, sdes, int(fs), ray_support=float(ctx.opts.get("ray_support", 1.0)))
                 for fs in ctx.opts.get("test_function_seeds", [0, 1, 2, 3])]

    def residuals(step: float, seed: int):
        gcfg = GraphSimConfig(dt=step, T=cfg.T, n_paths=cfg.n_paths, seed=seed)
        batch = simulate_graph(ctx.graph, w, ctx.coeffs, gcfg, (start["edge"], start["s"]), edge_sdes=sdes)
        ctx.count_limit_draws(gcfg)
        return batch, [martingale_residual(batch, f, sdes, w, s0, t1, budget_factor=factor) for f in functions]

    batch, reports = residuals(dt, derived_seed(cfg.seed, idx))
    ok = all(r.passed for r in reports)
    body = {"dt": dt, "residuals": [r.to_dict() for r in reports], "vertex_visits": batch.vertex_visits}
    if ctx.opts.get("dt_halving_check", False):
        # the observed change under halving dt gauges the discretization bias against the budget
        _, half = residuals(dt / 2, derived_seed(cfg.seed, idx, 1))
        body["dt_halving"] = [
            {"test_function": a.test_function, "estimate_dt": a.estimate, "estimate_half_dt": b.estimate,
             "change": b.estimate - a.estimate, "change_se": float(np.hypot(a.standard_error, b.standard_error)),
             "bias_budget": a.bias_budget}
            for a, b in zip(reports, half)
        ]
    neg = make_test_function(lg, w, sdes, 999, kirchhoff_violation=1.0, name="kirchhoff_violating")
    try:
        martingale_residual(batch, neg, sdes, w, s0, t1)
        body["negative_control"] = {"rejected": False}
    except DomainViolationError as exc:
        body["negative_control"] = {"rejected": True, "reason": str(exc)}
    ok &= body["negative_control"]["rejected"]
    return body, bool(ok)


def run_curve_limit(ctx: _Context, idx: int) -> tuple[dict, bool]:
    cfg = ctx.cfg
    g = ctx.graph
    start = ctx.opts.get("start_graph", {"edge": 0, "s": 0.0})
    x0 = ctx._edge_point(np.array([int(start["edge"])]), float(start["s"]))[0]
    limit_dt = float(ctx.opts.get("limit_dt", 1e-3))
    n_limit = int(ctx.opts.get("limit_paths", 5 * cfg.n_paths))
    gcfg = GraphSimConfig(dt=limit_dt, T=cfg.T, n_paths=n_limit, seed=derived_seed(cfg.seed, idx, 999),
                          record_every=max(1, int(round(cfg.T / limit_dt))))
    gb = simulate_graph(g, ctx.targets(), ctx.coeffs, gcfg, (start["edge"], start["s"]))
    ctx.count_limit_draws(gcfg)
    eps_list = sorted(cfg.eps, reverse=True)
    rows, dists, ses = [], [], []
    for j, eps in enumerate(eps_list):
        # shrink the step slightly so that T falls on the grid
        n_steps = int(np.ceil(cfg.T / cfg.dt_for(eps) - 1e-9))
        dt = cfg.T / n_steps
        batch = ctx.tube(eps, derived_seed(cfg.seed, idx, j), x0, record_every=n_steps, dt=dt)
        rep = marginal_distance(batch, g, gb, [cfg.T])
        se = _w1_noise_se(batch, g, gb, cfg.T, derived_seed(cfg.seed, idx, j, 7))
        rows.append({"eps": eps, "dt": dt, "distance": rep.to_dict(), "bootstrap_se": se,
                     "simulation": _tube_summary(batch)})
        dists.append(rep.distances[0])
        ses.append(se)
    threshold = float(ctx.opts.get("max_distance", 0.05))
    trend = non_increasing_trend(dists, ses)
    final_ok = dists[-1] < threshold
    return {"per_eps": rows, "distances": dists, "threshold": threshold, "trend_non_increasing": trend,
            "smallest_eps_passed": final_ok}, bool(trend and final_ok)


def _w1_noise_se(batch, g, gb, T, seed) -> float:
    X = batch.positions_at(T)
    ea, sa = graph_coords(g, X)
    k = int(np.argmin(np.abs(gb.times - T)))
    eb, sb = gb.edges[:, k], gb.s[:, k]
    n_edges = gb.graph.n_edges
    A = np.column_stack([ea, sa])
    B = np.column_stack([eb, sb])

    def fn(a, b):
        return marginal_distance_coords((a[:, 0].astype(int), a[:, 1]), (b[:, 0].astype(int), b[:, 1]), n_edges)[0]

    return bootstrap_se(fn, A, B, n_boot=100, seed=seed)


RUNNERS = {
    "hit_probs": run_hit_probs,
    "reflected_variant": run_reflected_variant,
    "convergence_sweep": run_convergence_sweep,
    "occupation": run_occupation,
    "stationarity": run_stationarity,
    "residual": run_residual,
    "curve_limit": run_curve_limit,
}


def run_experiment(suite: SuiteConfig, workers: int | None = None, out: str | Path | None = None,
                   only: list | None = None):
    """Run every experiment; returns ``(manifest, reports)``.

    Reports carry no timestamps so they are bitwise reproducible; wall-clock
    figures live only in the manifest.  When ``out`` is given the directory
    receives ``config.json``, ``manifest.json`` and ``reports/<name>.json``.
    """
    workers = resolve_workers(workers if workers is not None else suite.workers)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    reports, results, clocks, rng_acc, p99 = {}, {}, {}, {}, {}
    for idx, cfg in enumerate(suite.experiments):
        if only and cfg.name not in only:
            continue
        t0 = time.perf_counter()
        ctx = _Context(copy.deepcopy(cfg), workers)
        try:
            body, ok = RUNNERS[cfg.kind](ctx, idx)
        except Exception as exc:
            raise RuntimeError(f"experiment {cfg.name} ({cfg.kind}) failed: {exc}") from exc
        body["non_exit_violations"] = ctx.diag["non_exit_violations"]
        ok = bool(ok and ctx.diag["non_exit_violations"] == 0)
        reports[cfg.name] = to_plain({"schema_version": SCHEMA_VERSION, "name": cfg.name, "kind": cfg.kind,
                             "passed": ok, "config": cfg.to_dict(), "body": body})
        results[cfg.name] = ok
        clocks[cfg.name] = time.perf_counter() - t0
        rng_acc[cfg.name] = {"tube_gaussian_draws": int(ctx.diag["draws"]),
                             "limit_draws": int(ctx.diag["limit_draws"])}
        p99[cfg.name] = float(ctx.diag["halvings_p99"])
    manifest = RunManifest(suite.config_hash(), __version__, results, clocks, rng_acc, p99, started,
                           time.strftime("%Y-%m-%dT%H:%M:%S%z"), workers)
    if out is not None:
        write_outputs(Path(out), suite, manifest, reports)
    return manifest, reports


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False)


def write_outputs(out: Path, suite: SuiteConfig, manifest: RunManifest, reports: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "reports").mkdir(exist_ok=True)
    (out / "config.json").write_text(json.dumps(suite.to_dict(), indent=2, sort_keys=True))
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    for name, rep in reports.items():
        (out / "reports" / f"{name}.json").write_text(report_json(rep))


# --------------------------------------------------------------------------
# command line


def _cmd_run(args) -> int:
    suite = load_config(args.config)
    if args.seed is not None:
        suite.seed = args.seed
        for e in suite.experiments:
            e.seed = args.seed
    out = args.out or suite.out or "graphtube_run"
    manifest, reports = run_experiment(suite, workers=args.workers, out=out, only=args.only)
    for name, ok in manifest.results.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"halvings p99: {json.dumps(manifest.halvings_p99)}")
    print(f"reports written to {out}")
    return 0 if manifest.passed else 1


def _cmd_weights(args) -> int:
    graph = load_graph(args.graph)
    if args.reflecting:
        weights = graph_weights(graph, reflecting=True)
    else:
        shapes = load_shapes(args.shapes) if args.shapes else [PotentialShape.power_ratio(2.0)]
        weights = graph_weights(graph, shapes[0] if len(shapes) == 1 else shapes)
    if isinstance(graph, SpiderGraph):
        print(json.dumps(weights[0].to_dict()))
    else:
        print(json.dumps({"schema_version": SCHEMA_VERSION,
                          "vertices": [None if w is None else w.to_dict() for w in weights]}))
    return 0


def _cmd_validate(args) -> int:
    suite = load_config(args.config)
    print(f"ok: {len(suite.experiments)} experiment(s), config hash {suite.config_hash()[:12]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphtube", description="Thin-tube diffusions on graphs and their limits.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments of a configuration file")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: GRAPHTUBE_WORKERS or 1); never changes results")
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--only", nargs="*", default=None, help="run only the named experiments")
    r.set_defaults(func=_cmd_run)
    w = sub.add_parser("weights", help="print the Kirchhoff weights of a graph as JSON")
    w.add_argument("graph")
    w.add_argument("shapes", nargs="?", default=None)
    w.add_argument("--reflecting", action="store_true", help="cross-section weights of the reflected tube")
    w.set_defaults(func=_cmd_weights)
    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
