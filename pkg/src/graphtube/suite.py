"""The default experiment matrix.

``paper_suite()`` returns the configuration dictionary that ``graphtube run``
accepts; ``configs/paper_suite.json`` is the same dictionary written to disk.
Each experiment carries the desk-scale settings used by the acceptance tests.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

_ANGLES = np.deg2rad([90.0, 210.0, 330.0])

# three rays in the plane at 120 degrees, widths (1, 1, 2)
SPIDER = {"n": 2, "spider": {"directions": np.column_stack([np.cos(_ANGLES), np.sin(_ANGLES)]).tolist(),
                             "widths": [1.0, 1.0, 2.0]}}
# half circle of radius 1 with straight tails of length 2
HALF_CIRCLE = {"n": 2, "curve": {"kind": "half_circle", "radius": 1.0, "tail": 2.0}}
ALPHA2 = [{"kind": "power_ratio", "alpha": 2.0}]
IDENTITY = {"sigma": {"kind": "identity"}, "b": {"kind": "zero"}}
# identity only at the origin, a sheared matrix away from it, with a pull towards the origin
CURVED_COEFFICIENTS = {"sigma": {"kind": "vertex_identity", "matrix": [[1.3, 0.2], [0.1, 0.8]], "length": 0.7},
                       "b": {"kind": "tangential_pull", "strength": 0.5}}
HALF_CIRCLE_MIDPOINT = 2.0 + np.pi / 2


def _tube(kind, name, eps, n_paths, T, dt_over_eps2=0.25, graph=SPIDER, **extra):
    d = {"kind": kind, "name": name, "graph": graph, "shapes": ALPHA2, "coefficients": IDENTITY,
         "eps": eps, "dt_over_eps2": dt_over_eps2, "T": T, "n_paths": n_paths}
    d.update(extra)
    return d


def paper_suite(seed: int = 20240601) -> dict:
    experiments = [
        _tube("convergence_sweep", "edge_hits", [0.08, 0.04, 0.02], 10_000, 5.0, deltas=[0.5]),
        _tube("reflected_variant", "reflected_hits", [0.02], 10_000, 5.0, deltas=[0.5]),
        _tube("hit_probs", "start_insensitivity", [0.02], 2_000, 5.0, deltas=[0.5],
              options={"start": {"edge": 0, "kappa_multiple": 2.0},
                       "start_b": {"edge": 2, "kappa_multiple": 2.0}}),
        _tube("occupation", "occupation", [0.04], 1_000, 1.0, deltas=[0.1, 0.2, 0.4],
              options={"record_every": 5}),
        _tube("stationarity", "radial_law", [0.02], 300, 0.2, dt_over_eps2=1 / 16,
              options={"start": {"edges": [0, 1, 2], "radius": 1.0}, "burn_in_over_eps2": 10.0,
                       "stride_over_eps2": 10.0, "min_ess": 1000, "diagnostic_betas": [2.0]}),
        {"kind": "residual", "name": "residual_spider", "graph": SPIDER, "shapes": ALPHA2,
         "coefficients": IDENTITY, "eps": [0.04], "dt": 1e-3, "T": 0.5, "n_paths": 20_000,
         "options": {"test_function_seeds": [0, 1, 2, 3], "dt_halving_check": True}},
        {"kind": "residual", "name": "residual_curve", "graph": HALF_CIRCLE, "shapes": ALPHA2,
         "coefficients": CURVED_COEFFICIENTS, "eps": [0.04], "dt": 1e-3, "T": 0.5, "n_paths": 20_000,
         "options": {"test_function_seeds": [4], "start_graph": {"edge": 0, "s": HALF_CIRCLE_MIDPOINT},
                     "dt_halving_check": True}},
        _tube("curve_limit", "curve_limit", [0.08, 0.04, 0.02], 2_000, 0.5, graph=HALF_CIRCLE,
              options={"start_graph": {"edge": 0, "s": HALF_CIRCLE_MIDPOINT}, "limit_dt": 1e-3,
                       "limit_paths": 10_000, "max_distance": 0.05}),
    ]
    return {"schema_version": 1, "seed": seed, "experiments": experiments}


def write_paper_suite(path) -> None:
    Path(path).write_text(json.dumps(paper_suite(), indent=2) + "\n")
