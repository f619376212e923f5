import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtube.coefficients import SdeCoefficients
from graphtube.confinement import PotentialShape
from graphtube.limit_sim import (DomainViolationError, GraphBatch, GraphSimConfig, LimitGraph, graph_edge_sdes,
                                 graph_weights, linear_test_function, make_test_function, simulate_graph)
from graphtube.tube_sim import Path, TubeBatch, TubeSimConfig
from graphtube.verify import (ExperimentInvalidError, InsufficientSamplesError, RadialLaw, effective_sample_size,
                              first_passage, first_passage_series, hitting_stats, ks_uniform_report,
                              marginal_distance, marginal_distance_coords, martingale_residual,
                              non_increasing_trend, occupation_near_vertex, radial_stationarity,
                              reflected_bm_occupation, start_insensitivity, wilson_interval, write_report)

ID2 = SdeCoefficients.identity(2)
ALPHA2 = PotentialShape.power_ratio(2.0)
CFG = TubeSimConfig(eps=0.1, dt=0.01, T=1.0)


def radial_path(direction, radii, dt=0.01):
    radii = np.asarray(radii, dtype=float)
    return Path(np.arange(len(radii)) * dt, radii[:, None] * np.asarray(direction)[None, :])


def batch_of(paths):
    return TubeBatch(list(paths), CFG)


def test_first_passage_examples(spider112):
    e2 = spider112.directions[1]
    p = radial_path(e2, [0.0, 0.2, 0.4, 0.6, 0.8])
    t, edge = first_passage(p, spider112, 0.5)
    assert t == pytest.approx(0.025) and edge == 1
    assert first_passage(radial_path(e2, [0.0, 0.1, 0.2]), spider112, 0.5) is None
    assert first_passage(radial_path(e2, [0.7, 0.1]), spider112, 0.5) == (0.0, 1)
    with pytest.raises(ValueError):
        first_passage_series([0, 1], [0, 1], [0, 0], 0.0)


def test_hitting_stats_rigged_batch_fails(spider112):
    b = batch_of(radial_path(spider112.directions[2], [0.0, 1.0]) for _ in range(500))
    rep = hitting_stats(b, spider112, 0.5, [1 / 6, 1 / 6, 2 / 3])
    assert not rep.passed
    assert rep.counts == [0, 0, 500]
    assert rep.z_scores[2] > 3 and rep.z_scores[0] < -3


def test_hitting_stats_exact_frequencies_pass(spider112):
    paths = [radial_path(spider112.directions[k], [0.0, 1.0]) for k in [0] * 25 + [1] * 25 + [2] * 50]
    rep = hitting_stats(batch_of(paths), spider112, 0.5, [0.25, 0.25, 0.5])
    assert rep.passed and rep.max_deviation == 0
    assert all(lo <= p <= hi for lo, p, hi in zip(rep.wilson_low, rep.probabilities, rep.wilson_high))


@given(counts=st.lists(st.integers(0, 60), min_size=3, max_size=3), missing=st.integers(0, 1))
@settings(max_examples=50, deadline=None)
def test_hitting_probabilities_sum_to_one_with_missing(spider112, counts, missing):
    paths = [radial_path(spider112.directions[k], [0.0, 1.0]) for k in range(3) for _ in range(counts[k])]
    n_hit = len(paths)
    paths += [radial_path(spider112.directions[0], [0.0, 0.1])] * missing
    if n_hit < 100 * missing or not paths:
        return
    rep = hitting_stats(batch_of(paths), spider112, 0.5, [1 / 3] * 3)
    assert sum(rep.probabilities) + rep.missing / rep.n_paths == pytest.approx(1.0)
    assert sum(rep.counts) + rep.missing == rep.n_paths


def test_hitting_stats_too_many_missing(spider112):
    paths = [radial_path(spider112.directions[0], [0.0, 0.1])] * 2 + \
        [radial_path(spider112.directions[0], [0.0, 1.0])] * 98
    with pytest.raises(ExperimentInvalidError):
        hitting_stats(batch_of(paths), spider112, 0.5, [1 / 3] * 3)


def test_standard_errors_shrink_with_more_paths(spider112):
    def rep(n):
        paths = [radial_path(spider112.directions[k % 3], [0, 1]) for k in range(n)]
        return hitting_stats(batch_of(paths), spider112, 0.5, [0.25, 0.25, 0.5])

    ratio = np.array(rep(2000).standard_errors) / np.array(rep(1000).standard_errors)
    assert np.allclose(ratio, 1 / np.sqrt(2), rtol=0.2)


def test_wilson_interval_contains_estimate():
    lo, hi = wilson_interval(np.array([0, 5, 10]), 10)
    assert lo[0] == 0 and hi[2] == pytest.approx(1.0) and lo[1] < 0.5 < hi[1]


def test_start_insensitivity_identical_and_different(spider112):
    paths = [radial_path(spider112.directions[k % 3], [0, 1]) for k in range(300)]
    same = start_insensitivity(batch_of(paths), batch_of(paths), spider112, 0.5, seed=1, n_permutations=200)
    assert same.distance == 0 and same.passed
    other = [radial_path(spider112.directions[0], [0, 1]) for _ in range(300)]
    diff = start_insensitivity(batch_of(paths), batch_of(other), spider112, 0.5, seed=1, n_permutations=200)
    assert diff.distance == pytest.approx(2 / 3) and not diff.passed
    again = start_insensitivity(batch_of(paths), batch_of(other), spider112, 0.5, seed=1, n_permutations=200)
    assert again.to_dict() == diff.to_dict()


def test_occupation_examples():
    far = [Path(np.linspace(0, 1, 11), np.tile([5.0, 0.0], (11, 1))) for _ in range(3)]
    rep = occupation_near_vertex(far, [0.1, 0.2, 0.4], 1.0)
    assert rep.occupation == [0, 0, 0] and not rep.passed
    stuck = [Path(np.linspace(0, 1, 11), np.zeros((11, 2))) for _ in range(3)]
    rep = occupation_near_vertex(stuck, [0.1, 0.2, 0.4], 1.0)
    assert rep.occupation == pytest.approx([1.0, 1.0, 1.0]) and not rep.passed


def test_occupation_of_reflected_brownian_motion_passes():
    # |B| sampled exactly on a fine grid; the ratios match the closed form
    gen = np.random.default_rng(0)
    T, n = 1.0, 400
    t = np.linspace(0, T, n + 1)
    paths = []
    for _ in range(400):
        b = np.concatenate([[0], np.cumsum(gen.normal(scale=np.sqrt(T / n), size=n))])
        paths.append(Path(t, np.c_[b, np.zeros_like(b)]))
    rep = occupation_near_vertex(paths, [0.1, 0.2, 0.4], T)
    assert rep.passed
    oracle = [reflected_bm_occupation(d, T) / d for d in (0.1, 0.2, 0.4)]
    assert np.allclose(rep.ratios, oracle, rtol=0.15)


def _inverse_cdf_samples(law, m, seed):
    u = np.random.default_rng(seed).uniform(size=m)
    return np.interp(u, law.cum, law.grid)


@pytest.mark.parametrize("n", [2, 3])
def test_radial_law_ks_passes_on_exact_samples(n):
    law = RadialLaw(ALPHA2, n)
    assert ks_uniform_report(_inverse_cdf_samples(law, 5000, n), ALPHA2, n).passed


def test_radial_law_ks_fails_on_uniform_samples():
    r = np.random.default_rng(1).uniform(size=5000)
    assert not ks_uniform_report(r, ALPHA2, 2).passed


def test_radial_law_cdf_oracle():
    # n = 2, alpha = 2: compare the tabulated CDF with a fine midpoint rule
    law = RadialLaw(ALPHA2, 2)
    m = 1_000_000
    r = (np.arange(m) + 0.5) / m
    dens = np.exp(-r ** 2 / (1 - r ** 2))
    cum = np.cumsum(dens) / dens.sum()
    q = np.array([0.1, 0.3, 0.5, 0.7, 0.9])
    assert np.allclose(law.cdf(q), np.interp(q, r, cum), atol=1e-6)


def test_radial_stationarity_on_synthetic_paths(spider112, field112):
    # transverse offsets drawn from the target law, far out on edge 0
    eps = 0.05
    law = RadialLaw(ALPHA2, 2)
    e = spider112.directions[0]
    normal = np.array([-e[1], e[0]])
    paths = []
    for i in range(300):
        r = _inverse_cdf_samples(law, 12, i) * np.sign(np.random.default_rng(i).normal(size=12))
        pos = 1.0 * e[None, :] + (r * eps)[:, None] * normal[None, :]
        paths.append(Path(np.arange(12) * 0.01, pos))
    rep = radial_stationarity(paths, field112, eps, burn_in=0.0, stride=1, min_ess=1000)
    assert rep.passed and rep.effective_sample_size > 1000
    with pytest.raises(InsufficientSamplesError):
        radial_stationarity(paths, field112, eps, burn_in=0.0, stride=1, min_ess=10 ** 6)
    with pytest.raises(InsufficientSamplesError):
        radial_stationarity(paths, field112, eps, burn_in=10.0, stride=1)


def test_effective_sample_size_of_ar1():
    gen = np.random.default_rng(2)
    phi = 0.8
    x = np.zeros(20000)
    for k in range(1, len(x)):
        x[k] = phi * x[k - 1] + gen.normal()
    ess = effective_sample_size([x])
    assert ess == pytest.approx(len(x) * (1 - phi) / (1 + phi), rel=0.2)


@pytest.fixture(scope="module")
def spider_limit_batch(spider112):
    w = graph_weights(spider112, ALPHA2)
    b = simulate_graph(spider112, w, ID2, GraphSimConfig(dt=1e-3, T=0.3, n_paths=5000, seed=8), (0, 0.0))
    return b, w, graph_edge_sdes(spider112, ID2), LimitGraph.from_graph(spider112)


def test_residual_of_constant_is_exactly_zero(spider_limit_batch):
    b, w, sdes, lg = spider_limit_batch
    const = linear_test_function(lg, w, [0.0, 0.0, 0.0])
    rep = martingale_residual(b, const, sdes, w, 0.0, 0.3)
    assert rep.estimate == 0 and rep.standard_error == 0 and rep.passed


def test_residual_of_linear_kirchhoff_function(spider_limit_batch):
    b, w, sdes, lg = spider_limit_batch
    f = linear_test_function(lg, w, [1.0, 1.0, -1.0], support=2.0)
    rep = martingale_residual(b, f, sdes, w, 0.0, 0.3)
    assert rep.passed


def test_residual_rejects_kirchhoff_violation(spider_limit_batch):
    b, w, sdes, lg = spider_limit_batch
    with pytest.raises(DomainViolationError):
        martingale_residual(b, linear_test_function(lg, w, [1.0, 1.0, 1.0]), sdes, w, 0.0, 0.3)
    with pytest.raises(DomainViolationError):
        martingale_residual(b, make_test_function(lg, w, sdes, 0, kirchhoff_violation=1.0), sdes, w, 0.0, 0.3)


def test_residual_needs_recorded_times(spider_limit_batch):
    b, w, sdes, lg = spider_limit_batch
    f = make_test_function(lg, w, sdes, 1)
    with pytest.raises(ValueError):
        martingale_residual(b, f, sdes, w, 0.2, 0.1)


def test_marginal_distance_identical_and_shifted(spider112):
    gen = np.random.default_rng(3)
    e = gen.integers(0, 3, 4000)
    s = gen.exponential(size=4000)
    d, _, tv = marginal_distance_coords((e, s), (e, s), 3)
    assert d == 0 and tv == 0
    d, per, tv = marginal_distance_coords((e, s), (e, s + 0.25), 3)
    assert d == pytest.approx(0.25) and tv == 0


def test_marginal_distance_against_tube_batch(spider112):
    lg = LimitGraph.from_graph(spider112)
    times = np.array([0.0, 0.5])
    E = np.zeros((200, 2), dtype=int)
    S = np.tile([0.0, 1.0], (200, 1))
    gb = GraphBatch(times, E, S, lg)
    paths = [Path(times, np.array([[0.0, 0.0], spider112.directions[0] * 1.0])) for _ in range(200)]
    rep = marginal_distance(TubeBatch(paths, CFG), spider112, gb, [0.5])
    assert rep.distances == [0.0]
    with pytest.raises(ValueError):
        marginal_distance(TubeBatch(paths, CFG), spider112, gb, [0.25])


def test_non_increasing_trend():
    assert non_increasing_trend([0.3, 0.2, 0.1], [0.01] * 3)
    assert non_increasing_trend([0.1, 0.11, 0.09], [0.01] * 3)
    assert not non_increasing_trend([0.1, 0.2, 0.3], [0.01] * 3)
    assert non_increasing_trend([0.1], [0.01])


def test_reports_serialize(tmp_path, spider112):
    paths = [radial_path(spider112.directions[k % 3], [0, 1]) for k in range(30)]
    rep = hitting_stats(batch_of(paths), spider112, 0.5, [1 / 3] * 3, abs_tol=0.1)
    write_report(rep, tmp_path / "r.json")
    d = json.loads((tmp_path / "r.json").read_text())
    assert d["schema_version"] == 1 and d["report"] == "HitProbReport"
