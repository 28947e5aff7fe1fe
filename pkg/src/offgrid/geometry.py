"""Parameter space, discrete measures and the constant Fisher-Rao metric."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PreconditionError


@dataclass(frozen=True)
class ParameterBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size == 0:
            raise InvalidArgument("box bounds must be 1-d vectors of equal length")
        if not np.all(lo < hi):
            raise InvalidArgument("box requires lower < upper on every axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def d(self) -> int:
        return self.lower.size

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.atleast_2d(x)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clamp(self, x):
        return np.clip(x, self.lower, self.upper)

    def diameter(self, g: "MetricTensor | None" = None) -> float:
        diag = self.upper - self.lower
        if g is None:
            return float(np.linalg.norm(diag))
        # the metric is constant, so the diameter is the largest corner-to-corner distance
        best = 0.0
        for signs in np.ndindex(*(2,) * self.d):
            v = diag * (2 * np.array(signs) - 1)
            best = max(best, float(np.sqrt(v @ g.matrix @ v)))
        return best

    @classmethod
    def around(cls, points, margin: float) -> "ParameterBox":
        points = np.atleast_2d(points)
        return cls(points.min(axis=0) - margin, points.max(axis=0) + margin)


@dataclass(frozen=True)
class MetricTensor:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise InvalidArgument("metric tensor must be square")
        if not np.allclose(m, m.T, rtol=1e-10, atol=1e-14 * np.abs(m).max()):
            raise InvalidArgument("metric tensor must be symmetric")
        m = 0.5 * (m + m.T)
        w = np.linalg.eigvalsh(m)
        if w.min() <= 0:
            raise InvalidArgument("metric tensor must be positive definite")
        object.__setattr__(self, "matrix", m)

    @property
    def d(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def isotropic(cls, scale: float, d: int) -> "MetricTensor":
        return cls(scale * np.eye(d))

    def sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.matrix)
        return (v * np.sqrt(w)) @ v.T

    def inv_sqrt(self) -> np.ndarray:
        w, v = np.linalg.eigh(self.matrix)
        return (v / np.sqrt(w)) @ v.T

    def norm(self, v) -> np.ndarray:
        """‖v‖_g for one vector or a stack of row vectors."""
        v = np.asarray(v, dtype=float)
        return np.sqrt(np.einsum("...i,ij,...j->...", v, self.matrix, v))


def _check_dim(g: MetricTensor, *vecs):
    for v in vecs:
        if np.shape(v)[-1] != g.d:
            raise InvalidArgument(f"dimension mismatch: vector of length {np.shape(v)[-1]} vs metric of size {g.d}")


def fisher_rao_distance(g: MetricTensor, s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if s.ndim == 0:
        s = s[None]
    if t.ndim == 0:
        t = t[None]
    _check_dim(g, s, t)
    out = g.norm(s - t)
    return float(out) if np.ndim(out) == 0 else out


def pairwise_distances(g: MetricTensor, a, b=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    _check_dim(g, a, b)
    diff = a[:, None, :] - b[None, :, :]
    return g.norm(diff)


@dataclass(frozen=True)
class DiscreteMeasure:
    weights: np.ndarray
    positions: np.ndarray
    box: ParameterBox | None = field(default=None, compare=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        x = np.asarray(self.positions, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if w.size != 1 or x.size == 1 else x[None, :]
        if x.size == 0:
            d = self.box.d if self.box is not None else (x.shape[1] if x.ndim == 2 else 1)
            x = np.zeros((0, d))
        if x.shape[0] != w.size:
            raise InvalidArgument("one position per weight required")
        if self.box is not None:
            if x.shape[1] != self.box.d:
                raise InvalidArgument("positions do not match box dimension")
            if not self.box.contains(x, tol=1e-12):
                raise InvalidArgument("atom outside the parameter box")
        w.setflags(write=False)
        x = x.copy()
        x.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "positions", x)

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    @property
    def tv_norm(self) -> float:
        return float(np.abs(self.weights).sum())

    @classmethod
    def zero(cls, d: int, box: ParameterBox | None = None) -> "DiscreteMeasure":
        return cls(np.zeros(0), np.zeros((0, d)), box)

    def scaled(self, c: float) -> "DiscreteMeasure":
        return DiscreteMeasure(c * self.weights, self.positions, self.box)

    def plus(self, other: "DiscreteMeasure") -> "DiscreteMeasure":
        return DiscreteMeasure(np.concatenate([self.weights, other.weights]),
                               np.vstack([self.positions, other.positions]), self.box)

    def to_json(self) -> dict:
        return {"atoms": [{"w": float(w), "x": [float(v) for v in x]}
                          for w, x in zip(self.weights, self.positions)]}

    @classmethod
    def from_json(cls, obj, box: ParameterBox | None = None, d: int | None = None) -> "DiscreteMeasure":
        if isinstance(obj, str):
            obj = json.loads(obj)
        atoms = obj["atoms"]
        if not atoms:
            return cls.zero(d or (box.d if box else 1), box)
        w = [a["w"] for a in atoms]
        x = [a["x"] for a in atoms]
        return cls(np.array(w), np.array(x, dtype=float).reshape(len(w), -1), box)


def min_separation(mu: DiscreteMeasure, g: MetricTensor) -> float:
    if len(mu) < 2:
        raise PreconditionError("min_separation needs at least 2 atoms")
    dist = pairwise_distances(g, mu.positions)
    iu = np.triu_indices(len(mu), k=1)
    return float(dist[iu].min())


def model_membership(mu: DiscreteMeasure, s0: int, delta0: float, g: MetricTensor) -> bool:
    if len(mu) > s0:
        return False
    if len(mu) < 2:
        return True
    return min_separation(mu, g) >= delta0


@dataclass(frozen=True)
class RegionLabeling:
    radius: float
    reference_spikes: np.ndarray
    labels: np.ndarray  # -1 for far, k for near_k (0-based)

    def near(self, k: int) -> np.ndarray:
        return self.labels == k

    @property
    def far(self) -> np.ndarray:
        return self.labels < 0


def classify_regions(spikes, r: float, g: MetricTensor, queries) -> RegionLabeling:
    if r < 0:
        raise InvalidArgument("radius must be nonnegative")
    spikes = np.atleast_2d(np.asarray(spikes, dtype=float))
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != g.d and queries.shape[0] == g.d and g.d != 1:
        queries = queries.T
    dist = pairwise_distances(g, queries, spikes)
    inside = dist <= r
    # nearest spike within radius; argmin keeps the smallest index on exact ties
    masked = np.where(inside, dist, np.inf)
    labels = np.where(inside.any(axis=1), np.argmin(masked, axis=1), -1)
    return RegionLabeling(float(r), spikes, labels)


def region_statistics(mu: DiscreteMeasure, spikes0, amplitudes0, r: float, g: MetricTensor):
    """Far mass |μ|(F(r)) and per-spike near errors |μ(N_k(r)) − a⁰_k|."""
    spikes0 = np.atleast_2d(np.asarray(spikes0, dtype=float))
    amplitudes0 = np.asarray(amplitudes0, dtype=float)
    if len(mu) == 0:
        return 0.0, np.abs(amplitudes0)
    lab = classify_regions(spikes0, r, g, mu.positions)
    far_mass = float(np.abs(mu.weights[lab.far]).sum())
    near_mass = np.array([mu.weights[lab.labels == k].sum() for k in range(len(spikes0))])
    return far_mass, np.abs(near_mass - amplitudes0)
