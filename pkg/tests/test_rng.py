import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from graphtube import rng


def test_draws_are_pure_functions_of_seed_path_and_counter():
    keys = rng.path_keys(42, np.arange(5))
    a = rng.normals(keys[:, None], np.arange(10, dtype=np.uint64)[None, :])
    b = np.array([rng.PathStream(42, i).normal(10) for i in range(5)])
    assert np.array_equal(a, b)


@given(seed=st.integers(0, 2**63 - 1), start=st.integers(0, 1000), width=st.integers(1, 20))
@settings(max_examples=50, deadline=None)
def test_normal_block_matches_any_split(seed, start, width):
    keys = rng.path_keys(seed, np.arange(3))
    whole = rng.normal_block(keys, np.full(3, start), width)
    cut = width // 2
    left = rng.normal_block(keys, np.full(3, start), cut) if cut else np.empty((3, 0))
    right = rng.normal_block(keys, np.full(3, start + cut), width - cut)
    assert np.array_equal(whole, np.hstack([left, right]))


def test_lanes_and_paths_give_different_streams():
    k = rng.path_keys(1, np.arange(4))
    k2 = rng.path_keys(1, np.arange(4), lane=1)
    assert len(set(k.tolist()) | set(k2.tolist())) == 8


def test_uniforms_in_half_open_unit_interval_and_moments():
    keys = rng.path_keys(7, np.arange(200))
    u = rng.uniforms(keys[:, None], np.arange(500, dtype=np.uint64)[None, :])
    assert u.min() > 0 and u.max() <= 1
    assert abs(u.mean() - 0.5) < 0.005
    z = rng.normals(keys[:, None], np.arange(500, dtype=np.uint64)[None, :]).ravel()
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.01
