"""Euler-Maruyama simulation inside the tube.

Three modes share one engine:

``confined``
    ``dX = sigma dW + b dt - grad U^eps dt``.  A step is rejected and retried
    as two half steps with fresh Gaussian increments whenever the candidate
    leaves the tube or the drift impulse ``|grad U| h`` exceeds half the local
    margin.  Rejection is what enforces non-exit.
``reflected``
    ``dX = sigma dW + b dt`` followed by a normal projection back onto the
    closed tube when the candidate lands outside.
``driftless_reference``
    ``confined`` with ``sigma = I`` and ``b = 0``.

Each path is advanced on its own clock.  A base step of length ``dt`` is
split dyadically exactly as the recursive halving rule prescribes: after an
accepted sub-step at offset ``o`` (in units of ``dt / 2**L``) the next
attempt uses the largest dyadic block aligned at ``o``.  Gaussian draws come
from the counter-based stream of each path, consumed in depth-first order.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from .coefficients import SdeCoefficients, matvec
from .confinement import ConfinementField
from .geometry import MetricGraph, SpiderGraph, project_graph_many, spider_rays

MODES = ("confined", "reflected", "driftless_reference")


class SubstepExhaustionError(RuntimeError):
    """Step halving hit ``max_substep_halvings``; ``dt`` is too coarse for ``eps``."""

    def __init__(self, path_index: int, x, level: int):
        self.path_index = path_index
        self.x = np.asarray(x).tolist()
        super().__init__(
            f"path {path_index}: sub-step halving exhausted after {level} halvings at x={self.x}"
        )


@dataclass
class TubeSimConfig:
    eps: float
    dt: float
    T: float
    n_paths: int = 1000
    seed: int = 0
    mode: str = "confined"
    max_substep_halvings: int = 60
    record_every: int = 1
    stop_radius: float | None = None
    workers: int = 1

    def __post_init__(self):
        if not (self.eps > 0 and self.dt > 0 and self.T > 0):
            raise ValueError("eps, dt and T must be positive")
        if self.dt > self.eps ** 2 * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds eps^2={self.eps ** 2}; the step must resolve the transverse scale")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.n_paths < 0:
            raise ValueError("n_paths must be >= 0")
        if not 1 <= self.max_substep_halvings <= 60:
            raise ValueError("max_substep_halvings must be in [1, 60]")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Path:
    times: np.ndarray
    positions: np.ndarray
    halvings: int = 0
    max_level: int = 0
    reflections: int = 0
    stopped: bool = False
    draws: int = 0


@dataclass
class TubeBatch:
    paths: list
    config: TubeSimConfig
    start_index: int = 0

    def __len__(self):
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def __getitem__(self, i):
        return self.paths[i]

    @property
    def final_positions(self) -> np.ndarray:
        if not self.paths:
            return np.empty((0, 0))
        return np.array([p.positions[-1] for p in self.paths])

    @property
    def halvings(self) -> np.ndarray:
        return np.array([p.halvings for p in self.paths], dtype=int)

    def positions_at(self, t: float) -> np.ndarray:
        """Positions at a recorded time (paths must not have stopped earlier)."""
        out = []
        for p in self.paths:
            k = np.searchsorted(p.times, t - 1e-12)
            if k >= len(p.times) or abs(p.times[k] - t) > 1e-9:
                raise ValueError(f"time {t} is not on the recorded grid")
            out.append(p.positions[k])
        return np.array(out)

    def diagnostics(self) -> dict:
        h = self.halvings
        return {
            "n_paths": len(self.paths),
            "halvings_total": int(h.sum()) if h.size else 0,
            "halvings_p99": float(np.percentile(h, 99)) if h.size else 0.0,
            "max_level": int(max((p.max_level for p in self.paths), default=0)),
            "reflections_total": int(sum(p.reflections for p in self.paths)),
            "draws_total": int(sum(p.draws for p in self.paths)),
            "stopped": int(sum(p.stopped for p in self.paths)),
        }


# --------------------------------------------------------------------------
# reflection


def clamp_to_tube(graph, eps: float, X: np.ndarray, hints=None) -> tuple[np.ndarray, np.ndarray]:
    """Normal projection of points onto the closed tube.

    Points already inside (margin >= 0) are returned unchanged.  Returns the
    projected points and a mask of the points that moved.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float)).copy()
    if isinstance(graph, SpiderGraph):
        t, d = spider_rays(graph, X)
        feet = t[:, :, None] * graph.directions[None, :, :]
        widths = graph.widths
        centres = [np.zeros(graph.n)]
        balls = [graph.kappa0 * eps]
        junction_of = lambda Y: [np.linalg.norm(Y, axis=1) < graph.kappa * eps]  # noqa: E731
        incident = [list(range(graph.n_edges))]
    else:
        _, _, _, _, all_s, d = project_graph_many(graph, X, hints)
        feet = np.stack([e.curve.position(all_s[:, k]) for k, e in enumerate(graph.edges)], axis=1)
        widths = np.array([e.width for e in graph.edges])
        vs = [v for v, inc in enumerate(graph.incidence) if len(inc) >= 2]
        centres = [graph.vertices[v] for v in vs]
        balls = [graph.kappa0[v] * eps for v in vs]
        junction_of = lambda Y: [np.linalg.norm(Y - graph.vertices[v], axis=1) < graph.kappa[v] * eps for v in vs]  # noqa: E731
        incident = [[k for k, _ in graph.incidence[v]] for v in vs]

    cyl = widths[None, :] * eps - d
    edge = np.argmin(d, axis=1)
    rows = np.arange(len(X))
    margin = cyl[rows, edge]
    zones = junction_of(X)
    in_any = np.zeros(len(X), dtype=bool)
    for z, c, rb, inc in zip(zones, centres, balls, incident):
        if z.any():
            jm = np.max(cyl[np.ix_(z, inc)], axis=1)
            rad = np.linalg.norm(X[z] - c, axis=1)
            margin[z] = np.maximum(jm, rb - rad)
            in_any |= z
    moved = margin < 0
    if not moved.any():
        return X, moved

    def onto_cylinder(k, sel):
        diff = X[sel] - feet[sel, k]
        dd = d[sel, k][:, None]
        return feet[sel, k] + widths[k] * eps * diff / np.where(dd > 0, dd, 1.0)

    plain = moved & ~in_any
    for k in np.unique(edge[plain]):
        sel = plain & (edge == k)
        X[sel] = onto_cylinder(k, sel)
    for z, c, rb, inc in zip(zones, centres, balls, incident):
        sel = moved & z
        if not sel.any():
            continue
        cands = [onto_cylinder(k, sel) for k in inc]
        diff = X[sel] - c
        rad = np.linalg.norm(diff, axis=1)[:, None]
        cands.append(c + rb * diff / np.where(rad > 0, rad, 1.0))
        C = np.stack(cands, axis=1)
        dist = np.linalg.norm(C - X[sel][:, None, :], axis=2)
        X[sel] = C[np.arange(len(C)), np.argmin(dist, axis=1)]
    return X, moved


def _admissible(ev, h_floor: float) -> np.ndarray:
    """Inside the tube and able to take at least the finest allowed sub-step.

    A point so close to the wall that even ``h_floor`` would violate the
    drift-impulse rule is treated as an exit.  The excluded layer is where
    ``u`` is astronomically large, so it carries no mass under ``exp(-U)``,
    and every accepted point is guaranteed to make progress.
    """
    g = ev.grad
    return ev.inside & (np.sqrt((g * g).sum(axis=1)) * h_floor <= 0.5 * ev.margin)


# --------------------------------------------------------------------------
# single steps (scalar API; the batch engine follows the same rules)


def _increment(coeffs: SdeCoefficients, x, h, dW):
    inc = dW if coeffs.sigma_is_identity else matvec(coeffs.sigma(x), dW)
    if not coeffs.b_is_zero:
        inc = inc + coeffs.b(x) * h
    return inc


def step_confined(coeffs: SdeCoefficients, field: ConfinementField, eps: float, x, dt: float,
                  dW, stream: rng.PathStream | None = None, max_substep_halvings: int = 60) -> np.ndarray:
    """One confined Euler step with recursive halving.

    ``dW`` is the Brownian increment over ``dt``.  When the step is rejected
    the increment is discarded and each half step draws a fresh increment
    from ``stream``.
    """
    x = np.asarray(x, dtype=float)[None, :]
    h_floor = dt * np.ldexp(1.0, -max_substep_halvings)

    def attempt(x, h, dW, level):
        ev = field.evaluate(x, eps)
        if not ev.inside[0]:
            raise ValueError("step_confined needs a starting point strictly inside the tube")
        g = ev.grad
        ok = np.sqrt((g * g).sum(axis=1))[0] * h <= 0.5 * ev.margin[0]
        if ok:
            xp = x + _increment(coeffs, x, h, dW[None, :]) - g * h
            evp = field.evaluate(xp, eps)
            ok = bool(_admissible(evp, h_floor)[0])
        if ok:
            return xp
        if level >= max_substep_halvings:
            raise SubstepExhaustionError(-1, x[0], level)
        if stream is None:
            raise SubstepExhaustionError(-1, x[0], level)
        hh = h / 2
        x1 = attempt(x, hh, np.sqrt(hh) * stream.normal(x.shape[1]), level + 1)
        return attempt(x1, hh, np.sqrt(hh) * stream.normal(x.shape[1]), level + 1)

    return attempt(x, dt, np.asarray(dW, dtype=float), 0)[0]


def step_reflected(coeffs: SdeCoefficients, graph, eps: float, x, dt: float, dW) -> np.ndarray:
    """One Euler step without potential, projected back onto the closed tube."""
    x = np.asarray(x, dtype=float)[None, :]
    xp = x + _increment(coeffs, x, dt, np.asarray(dW, dtype=float)[None, :])
    return clamp_to_tube(graph, eps, xp)[0][0]


# --------------------------------------------------------------------------
# batch engine


def _lowest_bit_level(off: np.ndarray, lmax: int) -> np.ndarray:
    low = off & -off
    _, e = np.frexp(low.astype(np.float64))
    return lmax - (e - 1)


def _run_chunk(field: ConfinementField, coeffs: SdeCoefficients, cfg: TubeSimConfig,
               x0: np.ndarray, path_ids: np.ndarray) -> list:
    B, n = x0.shape
    eps, dt = cfg.eps, cfg.dt
    K = cfg.n_steps
    L = cfg.max_substep_halvings
    full = np.int64(1) << np.int64(L)
    h_floor = dt * np.ldexp(1.0, -L)
    confined = cfg.mode != "reflected"
    graph = field.graph
    is_graph = isinstance(graph, MetricGraph)

    keys = rng.path_keys(cfg.seed, path_ids)
    X = x0.copy()
    ev = field.evaluate(X, eps, _initial_hints(graph, X) if is_graph else None)
    bad = ~ev.inside if confined else ev.margin < 0
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"path {int(path_ids[i])}: initial point {X[i].tolist()} is outside the tube")
    G = ev.grad.copy()
    M = ev.margin.copy()
    S = ev.s.copy()
    H = ev.hints.copy() if is_graph else None

    k = np.zeros(B, dtype=np.int64)
    off = np.zeros(B, dtype=np.int64)
    lev = np.zeros(B, dtype=np.int64)
    ctr = np.zeros(B, dtype=np.uint64)
    halv = np.zeros(B, dtype=np.int64)
    maxlev = np.zeros(B, dtype=np.int64)
    refl = np.zeros(B, dtype=np.int64)
    stopped = np.zeros(B, dtype=bool)
    Xprev = X.copy()

    cap = K // cfg.record_every + 3
    rec = np.empty((B, cap, n))
    rec_t = np.empty((B, cap))
    rec_k = np.full((B, cap), -1, dtype=np.int64)
    cnt = np.zeros(B, dtype=np.int64)
    rec[:, 0], rec_t[:, 0], rec_k[:, 0] = X, 0.0, 0
    cnt[:] = 1

    active = np.flatnonzero(k < K) if K > 0 else np.empty(0, dtype=np.int64)
    if cfg.stop_radius is not None:
        done0 = S >= cfg.stop_radius
        stopped |= done0
        active = active[~done0[active]]

    nfac = np.uint64(n)
    while active.size:
        a = active
        h = dt * np.ldexp(1.0, -lev[a])
        xa = X[a]
        dW = np.sqrt(h)[:, None] * rng.normal_block(keys[a], ctr[a], n)
        ctr[a] += nfac
        inc = _increment(coeffs, xa, h[:, None], dW)
        if confined:
            ga = G[a]
            imp_ok = np.sqrt((ga * ga).sum(axis=1)) * h <= 0.5 * M[a]
            cand = np.flatnonzero(imp_ok)
            xp = (xa + inc - ga * h[:, None])[cand]
            ev = field.evaluate(xp, eps, H[a[cand]] if is_graph else None)
            good = _admissible(ev, h_floor)
        else:
            cand = np.arange(len(a))
            xp, moved = clamp_to_tube(graph, eps, xa + inc, H[a] if is_graph else None)
            refl[a] += moved
            ev = field.evaluate(xp, eps, H[a] if is_graph else None)
            good = np.ones(len(a), dtype=bool)
        ok = np.zeros(len(a), dtype=bool)
        ok[cand[good]] = True

        rej = a[~ok]
        if rej.size:
            lev[rej] += 1
            halv[rej] += 1
            maxlev[rej] = np.maximum(maxlev[rej], lev[rej])
            over = lev[rej] > L
            if over.any():
                i = int(rej[np.flatnonzero(over)[0]])
                raise SubstepExhaustionError(int(path_ids[i]), X[i], int(lev[i]) - 1)

        acc = a[cand[good]]
        X[acc] = xp[good]
        G[acc] = ev.grad[good]
        M[acc] = ev.margin[good]
        S[acc] = ev.s[good]
        if is_graph:
            H[acc] = ev.hints[good]
        off[acc] += full >> lev[acc]
        fin = off[acc] == full
        mid = acc[~fin]
        if mid.size:
            lev[mid] = _lowest_bit_level(off[mid], L)
        done = acc[fin]
        if done.size:
            off[done] = 0
            lev[done] = 0
            k[done] += 1
            kd = k[done]
            store = (kd % cfg.record_every == 0) | (kd == K)
            stop_now = np.zeros(len(done), dtype=bool)
            if cfg.stop_radius is not None:
                stop_now = S[done] >= cfg.stop_radius
                # keep the sample before the crossing so it can be interpolated
                need_prev = stop_now & ~store & (rec_k[done, cnt[done] - 1] != kd - 1)
                for i in done[need_prev]:
                    c = cnt[i]
                    rec[i, c], rec_t[i, c], rec_k[i, c] = Xprev[i], (k[i] - 1) * dt, k[i] - 1
                    cnt[i] += 1
                stopped[done[stop_now]] = True
            for i in done[store | stop_now]:
                c = cnt[i]
                rec[i, c], rec_t[i, c], rec_k[i, c] = X[i], k[i] * dt, k[i]
                cnt[i] += 1
            Xprev[done] = X[done]
        active = active[(k[active] < K) & ~stopped[active]]

    out = []
    for i in range(B):
        c = cnt[i]
        out.append(Path(rec_t[i, :c].copy(), rec[i, :c].copy(), int(halv[i]), int(maxlev[i]),
                        int(refl[i]), bool(stopped[i]), int(ctr[i])))
    return out


def _initial_hints(graph: MetricGraph, X: np.ndarray) -> np.ndarray:
    _, _, _, _, all_s, _ = project_graph_many(graph, X)
    return all_s


def _resolve_x0(x0, n_paths: int, n: int, start: int = 0) -> np.ndarray:
    if callable(x0):
        X = np.asarray(x0(np.arange(start, start + n_paths)), dtype=float)
    else:
        X = np.asarray(x0, dtype=float)
        if X.ndim == 1:
            X = np.tile(X, (n_paths, 1))
    if X.shape != (n_paths, n):
        raise ValueError(f"initial points must have shape ({n_paths}, {n}), got {X.shape}")
    return X


def _chunk_job(args):
    field, coeffs, cfg, x0, ids = args
    return _run_chunk(field, coeffs, cfg, x0, ids)


def resolve_workers(workers: int | None) -> int:
    if workers is None or workers <= 0:
        workers = int(os.environ.get("GRAPHTUBE_WORKERS", "1") or 1)
    return max(1, workers)


def simulate(field: ConfinementField, coeffs: SdeCoefficients, cfg: TubeSimConfig, x0) -> TubeBatch:
    """Simulate ``cfg.n_paths`` independent paths; see the module docstring.

    ``x0`` is a point, an ``(n_paths, n)`` array, or a callable mapping an
    array of path indices to starting points.
    """
    n = field.n
    if cfg.n_paths == 0:
        return TubeBatch([], cfg)
    X0 = _resolve_x0(x0, cfg.n_paths, n)
    ids = np.arange(cfg.n_paths, dtype=np.int64)
    workers = resolve_workers(cfg.workers)
    if workers == 1:
        return TubeBatch(_run_chunk(field, coeffs, cfg, X0, ids), cfg)
    parts = np.array_split(ids, min(workers * 4, cfg.n_paths))
    jobs = [(field, coeffs, cfg, X0[p], p) for p in parts if p.size]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        results = list(ex.map(_chunk_job, jobs))
    return TubeBatch([p for r in results for p in r], cfg)


def simulate_confined(graph, field: ConfinementField, coeffs: SdeCoefficients, cfg: TubeSimConfig,
                      x0) -> TubeBatch:
    if cfg.mode != "confined":
        raise ValueError("simulate_confined needs mode='confined'")
    _check_graph(graph, field)
    return simulate(field, coeffs, cfg, x0)


def simulate_reflected(graph, field: ConfinementField, coeffs: SdeCoefficients, cfg: TubeSimConfig,
                       x0) -> TubeBatch:
    if cfg.mode != "reflected":
        raise ValueError("simulate_reflected needs mode='reflected'")
    _check_graph(graph, field)
    return simulate(field, coeffs, cfg, x0)


def simulate_driftless_reference(graph, field: ConfinementField, eps: float, cfg: TubeSimConfig,
                                 x0) -> TubeBatch:
    """Confined simulation with ``sigma = I`` and ``b = 0``."""
    if cfg.mode != "driftless_reference":
        raise ValueError("simulate_driftless_reference needs mode='driftless_reference'")
    if abs(cfg.eps - eps) > 0:
        raise ValueError("eps does not match the configuration")
    _check_graph(graph, field)
    return simulate(field, SdeCoefficients.identity(field.n), cfg, x0)


def _check_graph(graph, field):
    if graph is not field.graph:
        raise ValueError("field was built for a different graph")


# --------------------------------------------------------------------------
# trajectory output


def write_paths_csv(batch: TubeBatch, directory, compress: bool = False) -> list:
    """One CSV per path with columns ``t, x_1, ..., x_n``."""
    import gzip
    from pathlib import Path as _P

    d = _P(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for i, p in enumerate(batch.paths):
        n = p.positions.shape[1]
        header = "t," + ",".join(f"x_{j + 1}" for j in range(n))
        rows = np.column_stack([p.times, p.positions])
        name = d / (f"path_{i:06d}.csv" + (".gz" if compress else ""))
        opener = gzip.open if compress else open
        with opener(name, "wt") as fh:
            fh.write(header + "\n")
            np.savetxt(fh, rows, delimiter=",", fmt="%.17g")
        files.append(name)
    return files


def write_paths_npz(batch: TubeBatch, path) -> None:
    """Binary column file: concatenated ``t`` / ``x`` columns plus path offsets."""
    lengths = np.array([len(p.times) for p in batch.paths], dtype=np.int64)
    np.savez_compressed(
        path,
        offsets=np.concatenate([[0], np.cumsum(lengths)]),
        t=np.concatenate([p.times for p in batch.paths]) if batch.paths else np.empty(0),
        x=np.concatenate([p.positions for p in batch.paths]) if batch.paths else np.empty((0, 0)),
    )
