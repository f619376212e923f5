"""Counter-based per-path random streams.

Every path owns a SplitMix64 stream keyed by ``(seed, path_index)``.  Draw
``j`` of path ``p`` is a pure function of ``(seed, p, j)``, so a batch can be
split across any number of workers, or vectorised over any subset of paths,
without changing a single bit of the output.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_PATH_MIX = np.uint64(0xD1B54A32D192ED03)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def path_keys(seed: int, path_index, lane: int = 0) -> np.ndarray:
    """Stream key of each path; ``path_index`` may be a scalar or an array.

    Distinct ``lane`` values give statistically independent streams for the
    same path (e.g. Gaussian increments vs. edge-selection uniforms).
    """
    idx = np.asarray(path_index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + _GAMMA)
        base = _mix(base + np.uint64(lane) * _M2)
        return _mix(base ^ ((idx + np.uint64(1)) * _PATH_MIX))


def uniforms(keys, counters) -> np.ndarray:
    """Uniform draws in (0, 1] at the given stream positions.

    ``keys`` and ``counters`` broadcast against each other.
    """
    k = np.asarray(keys, dtype=np.uint64)
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix(k + (c + np.uint64(1)) * _GAMMA)
    return ((z >> _S11).astype(np.float64) + 1.0) * _INV_2_53


def normals(keys, counters) -> np.ndarray:
    """Standard normal draws; normal ``j`` consumes uniforms ``2j`` and ``2j+1``."""
    c = np.asarray(counters, dtype=np.uint64)
    two = np.uint64(2)
    u1 = uniforms(keys, c * two)
    u2 = uniforms(keys, c * two + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def normal_block(keys: np.ndarray, start: np.ndarray, width: int) -> np.ndarray:
    """``width`` consecutive normals per path, starting at ``start`` (per path).

    Returns an array of shape ``(len(keys), width)``.
    """
    offs = np.arange(width, dtype=np.uint64)
    ctr = np.asarray(start, dtype=np.uint64)[:, None] + offs[None, :]
    return normals(np.asarray(keys)[:, None], ctr)


class PathStream:
    """Sequential view of one path's stream, for scalar code and tests."""

    def __init__(self, seed: int, path_index: int, lane: int = 0):
        self.key = path_keys(seed, path_index, lane)
        self.counter = 0

    def normal(self, size: int = 1) -> np.ndarray:
        ctr = np.arange(self.counter, self.counter + size, dtype=np.uint64)
        self.counter += size
        return normals(self.key, ctr)

    def uniform(self, size: int = 1) -> np.ndarray:
        ctr = np.arange(self.counter, self.counter + size, dtype=np.uint64)
        self.counter += size
        return uniforms(self.key, ctr)
