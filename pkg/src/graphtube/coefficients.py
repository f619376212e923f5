"""Diffusion and drift coefficients ``sigma(x)``, ``b(x)`` from a preset catalogue.

Presets (JSON)::

    {"sigma": {"kind": "identity"}
              | {"kind": "constant", "matrix": [[...]]}
              | {"kind": "radial_scalar", "params": {"amplitude": a, "length": l}}
              | {"kind": "vertex_identity", "matrix": [[...]], "length": l},
     "b": {"kind": "zero"}
          | {"kind": "constant", "vector": [...]}
          | {"kind": "tangential_pull", "strength": g}}

``radial_scalar`` is ``(1 + a (1 - exp(-|x|^2 / l^2))) I``; ``vertex_identity``
blends from the identity at the origin to a constant matrix ``A`` away from it,
``I + (1 - exp(-|x|^2 / l^2)) (A - I)``.  ``tangential_pull`` is the bounded
drift ``-g x / (1 + |x|)`` towards the origin.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class CoefficientError(ValueError):
    pass


def matvec(S: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched ``S @ v`` with a fixed summation order (bitwise reproducible)."""
    out = S[:, :, 0] * v[:, 0:1]
    for j in range(1, v.shape[1]):
        out = out + S[:, :, j] * v[:, j:j + 1]
    return out


@dataclass
class SdeCoefficients:
    n: int
    sigma_spec: dict = field(default_factory=lambda: {"kind": "identity"})
    b_spec: dict = field(default_factory=lambda: {"kind": "zero"})
    ellipticity_floor: float = field(init=False, default=0.0)

    def __post_init__(self):
        ks, kb = self.sigma_spec.get("kind"), self.b_spec.get("kind")
        if ks not in {"identity", "constant", "radial_scalar", "vertex_identity"}:
            raise CoefficientError(f"unknown sigma kind {ks!r}")
        if kb not in {"zero", "constant", "tangential_pull"}:
            raise CoefficientError(f"unknown drift kind {kb!r}")
        if ks in {"constant", "vertex_identity"}:
            A = np.asarray(self.sigma_spec["matrix"], dtype=float)
            if A.shape != (self.n, self.n):
                raise CoefficientError(f"sigma matrix must be {self.n}x{self.n}")
            self._A = A
        if ks == "radial_scalar":
            p = self.sigma_spec.get("params", {})
            self._amp = float(p.get("amplitude", 0.5))
            self._len = float(p.get("length", 1.0))
            if self._amp <= -1:
                raise CoefficientError("radial_scalar amplitude must be > -1")
        if ks == "vertex_identity":
            self._len = float(self.sigma_spec.get("length", 1.0))
        if kb == "constant":
            v = np.asarray(self.b_spec["vector"], dtype=float)
            if v.shape != (self.n,):
                raise CoefficientError(f"drift vector must have length {self.n}")
            self._bv = v
        if kb == "tangential_pull":
            self._g = float(self.b_spec.get("strength", 1.0))
        self.ellipticity_floor = self.check_ellipticity()
        if self.ellipticity_floor <= 0:
            raise CoefficientError("sigma sigma^T is not uniformly positive definite on the probes")

    @classmethod
    def identity(cls, n: int) -> "SdeCoefficients":
        return cls(n)

    @classmethod
    def from_dict(cls, n: int, d: dict | None) -> "SdeCoefficients":
        d = d or {}
        return cls(n, d.get("sigma", {"kind": "identity"}), d.get("b", {"kind": "zero"}))

    def to_dict(self) -> dict:
        return {"sigma": self.sigma_spec, "b": self.b_spec}

    @property
    def sigma_is_identity(self) -> bool:
        return self.sigma_spec["kind"] == "identity"

    @property
    def b_is_zero(self) -> bool:
        return self.b_spec["kind"] == "zero"

    def sigma(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        m, n = X.shape
        kind = self.sigma_spec["kind"]
        eye = np.broadcast_to(np.eye(n), (m, n, n))
        if kind == "identity":
            return eye.copy()
        if kind == "constant":
            return np.broadcast_to(self._A, (m, n, n)).copy()
        r2 = (X * X).sum(axis=1)
        phi = 1.0 - np.exp(-r2 / self._len ** 2)
        if kind == "radial_scalar":
            return (1.0 + self._amp * phi)[:, None, None] * eye
        return eye + phi[:, None, None] * (self._A - np.eye(n))[None]

    def b(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        kind = self.b_spec["kind"]
        if kind == "zero":
            return np.zeros_like(X)
        if kind == "constant":
            return np.broadcast_to(self._bv, X.shape).copy()
        r = np.sqrt((X * X).sum(axis=1))
        return -self._g * X / (1.0 + r)[:, None]

    def sigma_at_origin_is_identity(self, tol: float = 1e-12) -> bool:
        S = self.sigma(np.zeros((1, self.n)))[0]
        return bool(np.max(np.abs(S - np.eye(self.n))) <= tol)

    def check_ellipticity(self, n_probes: int = 1000, radius: float = 10.0, seed: int = 0) -> float:
        """Smallest eigenvalue of ``sigma sigma^T`` over random probes (and the origin)."""
        rng = np.random.default_rng(seed)
        P = rng.uniform(-radius, radius, size=(n_probes, self.n))
        P = np.vstack([np.zeros(self.n), P, P / radius])
        S = self.sigma(P)
        a = S @ np.transpose(S, (0, 2, 1))
        return float(np.min(np.linalg.eigvalsh(a)))
