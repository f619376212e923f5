import numpy as np
import pytest
from scipy import stats

from graphtube import rng
from graphtube.coefficients import SdeCoefficients
from graphtube.confinement import ConfinementField, PotentialShape
from graphtube.geometry import ParamCurve, make_spider, single_curve_graph
from graphtube.tube_sim import (SubstepExhaustionError, TubeSimConfig, clamp_to_tube, simulate,
                                simulate_confined, simulate_driftless_reference, simulate_reflected,
                                step_confined, step_reflected, write_paths_csv, write_paths_npz)

ID2 = SdeCoefficients.identity(2)


@pytest.fixture(scope="module")
def line_graph():
    return single_curve_graph(ParamCurve.line([0.0, 0.0], [1.0, 0.0], 20.0))


@pytest.fixture(scope="module")
def line_field(line_graph):
    return ConfinementField(line_graph, PotentialShape.power_ratio(2.0))


def test_config_validation():
    with pytest.raises(ValueError, match="exceeds"):
        TubeSimConfig(eps=0.1, dt=0.02, T=1.0)
    with pytest.raises(ValueError):
        TubeSimConfig(eps=0.1, dt=0.001, T=1.0, mode="bouncy")
    with pytest.raises(ValueError):
        TubeSimConfig(eps=0.1, dt=0.001, T=1.0, max_substep_halvings=61)


def test_step_confined_examples(line_field):
    eps, dt = 0.1, 0.0025
    x = np.array([10.0, 0.0])
    assert np.array_equal(step_confined(ID2, line_field, eps, x, dt, np.zeros(2)), x)
    drift = SdeCoefficients(2, b_spec={"kind": "constant", "vector": [1.0, 0.0]})
    assert np.allclose(step_confined(drift, line_field, eps, x, dt, np.zeros(2)), x + [dt, 0.0])
    # transverse coordinate: old + dW_perp - (c eps)^-1 u'(d / c eps) dt
    y0, dw = 0.03, np.array([0.01, 0.004])
    out = step_confined(ID2, line_field, eps, [10.0, y0], dt, dw)
    du = PotentialShape.power_ratio(2).du(y0 / eps)
    assert out[1] == pytest.approx(y0 + dw[1] - du / eps * dt, rel=1e-12)
    assert out[0] == pytest.approx(10.0 + dw[0], rel=1e-12)


def test_step_confined_halves_on_exit(line_field):
    eps, dt = 0.1, 0.0025
    stream = rng.PathStream(3, 0)
    out = step_confined(ID2, line_field, eps, [10.0, 0.05], dt, np.array([0.0, 0.5]), stream=stream)
    assert abs(out[1]) < eps
    assert stream.counter >= 4
    with pytest.raises(SubstepExhaustionError):
        step_confined(ID2, line_field, eps, [10.0, 0.05], dt, np.array([0.0, 0.5]))


def test_step_reflected_examples(line_graph):
    eps, dt = 0.1, 0.0025
    x = np.array([10.0, 0.02])
    dw = np.array([0.01, 0.01])
    assert np.allclose(step_reflected(ID2, line_graph, eps, x, dt, dw), x + dw)
    out = step_reflected(ID2, line_graph, eps, [10.0, 0.0], dt, np.array([0.0, 1.2 * eps]))
    assert out == pytest.approx([10.0, eps])
    edge = np.array([[10.0, eps]])
    assert np.array_equal(clamp_to_tube(line_graph, eps, edge)[0], edge)


def test_clamp_in_spider_junction_lands_in_closed_tube(spider112):
    eps = 0.05
    X = np.random.default_rng(1).normal(scale=0.3, size=(500, 2))
    Y, moved = clamp_to_tube(spider112, eps, X)
    f = ConfinementField(spider112, PotentialShape.power_ratio(2))
    assert np.all(f.evaluate(Y, eps).margin > -1e-12)
    assert np.array_equal(Y[~moved], X[~moved])


def test_empty_batch(field112):
    b = simulate(field112, ID2, TubeSimConfig(eps=0.1, dt=0.0025, T=0.1, n_paths=0), [0.0, 0.0])
    assert len(b) == 0


def test_determinism_and_worker_invariance(field112):
    cfg = TubeSimConfig(eps=0.05, dt=0.05 ** 2 / 4, T=0.05, n_paths=40, seed=9, record_every=5)
    a = simulate(field112, ID2, cfg, [0.0, 0.0])
    b = simulate(field112, ID2, cfg, [0.0, 0.0])
    cfg2 = TubeSimConfig(**{**cfg.__dict__, "workers": 2})
    c = simulate(field112, ID2, cfg2, [0.0, 0.0])
    for p, q, r in zip(a, b, c):
        assert np.array_equal(p.positions, q.positions)
        assert np.array_equal(p.positions, r.positions)
        assert np.array_equal(p.times, r.times)
        assert p.halvings == r.halvings


def test_non_exit_and_recording(field112):
    eps = 0.05
    cfg = TubeSimConfig(eps=eps, dt=eps ** 2, T=0.1, n_paths=50, seed=1, record_every=3)
    b = simulate_confined(field112.graph, field112, ID2, cfg, [0.0, 0.0])
    for p in b:
        assert np.all(field112.evaluate(p.positions, eps).inside)
        assert p.times[0] == 0 and p.times[-1] == pytest.approx(0.1)
    d = b.diagnostics()
    assert d["n_paths"] == 50 and d["halvings_p99"] >= 0


def test_stop_radius_ends_paths(field112):
    cfg = TubeSimConfig(eps=0.05, dt=0.05 ** 2 / 4, T=10.0, n_paths=20, seed=2, stop_radius=0.3,
                        record_every=10 ** 9)
    b = simulate(field112, ID2, cfg, [0.0, 0.0])
    assert all(p.stopped for p in b)
    assert all(np.linalg.norm(p.positions[-1]) >= 0.3 - 1e-12 for p in b)


def test_start_outside_rejected(field112):
    with pytest.raises(ValueError, match="outside"):
        simulate(field112, ID2, TubeSimConfig(eps=0.05, dt=0.0005, T=0.01, n_paths=1), [0.0, -1.0])


def test_mode_and_graph_checks(field112, spider112):
    cfg = TubeSimConfig(eps=0.05, dt=0.0005, T=0.01, n_paths=1)
    with pytest.raises(ValueError):
        simulate_reflected(spider112, field112, ID2, cfg, [0.0, 0.0])
    other = make_spider([[1, 0], [0, 1]], [1, 1])
    with pytest.raises(ValueError, match="different graph"):
        simulate_confined(other, field112, ID2, cfg, [0.0, 0.0])


def test_longitudinal_coordinate_is_brownian(line_graph, line_field):
    eps, T = 0.05, 0.5
    cfg = TubeSimConfig(eps=eps, dt=eps ** 2 / 4, T=T, n_paths=2000, seed=4, record_every=10 ** 9)
    b = simulate(line_field, ID2, cfg, [10.0, 0.0])
    x = b.final_positions[:, 0] - 10.0
    var = x.var(ddof=1)
    se = T * np.sqrt(2 / (len(x) - 1))
    assert abs(var - T) < 3 * se
    assert abs(x.mean()) < 3 * np.sqrt(T / len(x))


def test_reflected_paths_stay_in_closed_tube(spider112, field112):
    eps = 0.05
    cfg = TubeSimConfig(eps=eps, dt=eps ** 2 / 4, T=0.05, n_paths=50, seed=5, mode="reflected")
    b = simulate_reflected(spider112, field112, ID2, cfg, [0.0, 0.0])
    for p in b:
        assert np.all(field112.evaluate(p.positions, eps).margin > -1e-12)
    assert b.diagnostics()["reflections_total"] > 0


def test_driftless_reference_scaling_law(spider112, field112):
    # law of Y^eps_x(t) equals law of eps * Y^1_{x/eps}(t / eps^2)
    x = np.array([0.0, 0.02])
    eps, t = 0.1, 0.02
    a = simulate_driftless_reference(spider112, field112, eps, TubeSimConfig(
        eps=eps, dt=eps ** 2 / 8, T=t, n_paths=800, seed=6, mode="driftless_reference", record_every=10 ** 9), x)
    b = simulate_driftless_reference(spider112, field112, 1.0, TubeSimConfig(
        eps=1.0, dt=1.0 / 8, T=t / eps ** 2, n_paths=800, seed=7, mode="driftless_reference",
        record_every=10 ** 9), x / eps)
    ra = np.linalg.norm(a.final_positions, axis=1)
    rb = eps * np.linalg.norm(b.final_positions, axis=1)
    assert stats.ks_2samp(ra, rb).pvalue > 0.001


def test_reflected_and_confined_transverse_laws_approach_with_steeper_walls(line_graph):
    eps = 0.1
    x0 = [10.0, 0.0]

    def transverse(mode, alpha, seed):
        f = ConfinementField(line_graph, PotentialShape.power_ratio(alpha))
        cfg = TubeSimConfig(eps=eps, dt=eps ** 2 / 16, T=0.1, n_paths=300, seed=seed, mode=mode,
                            record_every=10 ** 9)
        return np.abs(simulate(f, ID2, cfg, x0).final_positions[:, 1]) / eps

    refl = transverse("reflected", 2.0, 100)
    w = [stats.wasserstein_distance(transverse("confined", a, 100 + k), refl) for k, a in enumerate((2, 4, 8))]
    assert w[0] > w[1] > w[2] - 0.02


def test_trajectory_writers(tmp_path, field112):
    cfg = TubeSimConfig(eps=0.05, dt=0.0005, T=0.005, n_paths=3, seed=1)
    b = simulate(field112, ID2, cfg, [0.0, 0.0])
    files = write_paths_csv(b, tmp_path / "csv", compress=True)
    assert len(files) == 3
    data = np.loadtxt(files[0], delimiter=",", skiprows=1)
    assert np.allclose(data[:, 1:], b[0].positions)
    write_paths_npz(b, tmp_path / "paths.npz")
    z = np.load(tmp_path / "paths.npz")
    assert z["offsets"][-1] == sum(len(p.times) for p in b)


def test_worker_invariance_on_curved_graph():
    g = single_curve_graph(ParamCurve.half_circle_with_tails(n_grid=2001))
    f = ConfinementField(g, PotentialShape.power_ratio(2.0))
    cfg = TubeSimConfig(eps=0.05, dt=0.05 ** 2 / 4, T=0.02, n_paths=12, seed=3, record_every=4)
    a = simulate(f, ID2, cfg, [0.0, 1.0])
    b = simulate(f, ID2, TubeSimConfig(**{**cfg.__dict__, "workers": 3}), [0.0, 1.0])
    assert all(np.array_equal(p.positions, q.positions) for p, q in zip(a, b))
