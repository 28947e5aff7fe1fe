"""Interpolating dual certificates for a pivot kernel, population and sketched."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import IllPosedError, InvalidArgument
from .geometry import DiscreteMeasure, MetricTensor, ParameterBox, pairwise_distances
from .kernels import Sinc4Kernel, TIKernel
from .lpc import sinc4_decay_bound
from .sketching import SketchOperator

COND_LIMIT = 1e12
MARGIN_TOL = 1e-10
NEAR_CAP = 100_000


def _points(points, d=None) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, d or 1) if d in (None, 1) else x.reshape(-1, d)
    return x


def _check_distinct(x: np.ndarray):
    if len(x) > 1:
        dist = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
        dist[np.diag_indices(len(x))] = np.inf
        if dist.min() == 0:
            raise InvalidArgument("certificate points must be pairwise distinct")


def _normalizer(g: MetricTensor, s: int) -> np.ndarray:
    d = g.d
    D = np.eye(s * (d + 1))
    ih = g.inv_sqrt()
    for j in range(s):
        a = s + j * d
        D[a:a + d, a:a + d] = ih
    return D


def _solve_normalized(A_tilde: np.ndarray, rhs: np.ndarray, refine: int = 2) -> np.ndarray:
    """Symmetric-indefinite solve with a few rounds of iterative refinement."""
    x = linalg.solve(A_tilde, rhs, assume_a="sym")
    for _ in range(refine):
        r = rhs - A_tilde @ x
        x = x + linalg.solve(A_tilde, r, assume_a="sym")
    return x


@dataclass(frozen=True, eq=False)
class UpsilonSystem:
    points: np.ndarray
    pivot: TIKernel
    upsilon: np.ndarray
    normalizer: np.ndarray
    upsilon_tilde: np.ndarray
    condition: float

    @property
    def s(self) -> int:
        return len(self.points)

    @property
    def inverse_norm(self) -> float:
        """‖Υ̃⁻¹‖ in spectral norm."""
        w = np.linalg.eigvalsh(self.upsilon_tilde)
        return float(1.0 / np.abs(w).min())

    def solve(self, u: np.ndarray) -> np.ndarray:
        """α with Υ α = u, solved in the normalized coordinates."""
        D = self.normalizer
        beta = _solve_normalized(self.upsilon_tilde, D @ u)
        return D @ beta


def assemble_upsilon(points, pivot: TIKernel) -> UpsilonSystem:
    d = pivot.d
    x = _points(points, d)
    if x.shape[1] != d:
        raise InvalidArgument("point dimension does not match the pivot kernel")
    _check_distinct(x)
    s = len(x)
    off = x[None, :, :] - x[:, None, :]          # off[i, j] = x_j − x_i
    K0 = pivot.derivative(off, 0)
    K1 = pivot.derivative(off, 1)                # (s, s, d)
    K2 = pivot.derivative(off, 2)                # (s, s, d, d)
    n = s * (d + 1)
    U = np.zeros((n, n))
    U[:s, :s] = K0
    top_right = K1.reshape(s, s * d)              # row i, column (j, a): ∂_a ρ(x_j − x_i)
    U[:s, s:] = top_right
    U[s:, :s] = top_right.T
    U[s:, s:] = -K2.transpose(0, 2, 1, 3).reshape(s * d, s * d)
    U = 0.5 * (U + U.T)
    D = _normalizer(pivot.metric, s)
    Ut = D @ U @ D
    Ut = 0.5 * (Ut + Ut.T)
    cond = float(np.linalg.cond(Ut))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllPosedError(f"interpolation system is ill-posed (condition number {cond:.3e} > {COND_LIMIT:.0e}); "
                            "points are too close for this kernel")
    return UpsilonSystem(x, pivot, U, D, Ut, cond)


# ---------------------------------------------------------------------------
# certificates

class Certificate:
    """Common evaluation and interpolation checks."""

    points: np.ndarray
    targets: np.ndarray
    kind: str
    index: int | None

    def eval(self, x) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def metric(self) -> MetricTensor:
        raise NotImplementedError

    def interpolation_residuals(self) -> tuple[float, float]:
        """(max value error, max metric-normalized gradient norm) at the interpolation points."""
        val = np.abs(self.eval(self.points) - self.targets).max()
        grad = self.gradient(self.points) @ self.metric.inv_sqrt()
        return float(val), float(np.linalg.norm(grad, axis=1).max())

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True, eq=False)
class DualCertificate(Certificate):
    alpha1: np.ndarray
    alpha2: np.ndarray
    points: np.ndarray
    pivot: TIKernel
    targets: np.ndarray
    kind: str = "full"
    index: int | None = None
    rkhs_norm_sq: float = float("nan")
    rkhs_norm_bound: float = float("nan")
    system: UpsilonSystem | None = field(default=None, repr=False)

    @property
    def metric(self) -> MetricTensor:
        return self.pivot.metric

    @property
    def rkhs_norm(self) -> float:
        return math.sqrt(max(self.rkhs_norm_sq, 0.0))

    def _offsets(self, x):
        x = _points(x, self.d)
        return self.points[None, :, :] - x[:, None, :]

    def eval(self, x) -> np.ndarray:
        u = self._offsets(x)
        val = self.pivot.derivative(u, 0) @ self.alpha1
        val += np.einsum("nsa,sa->n", self.pivot.derivative(u, 1), self.alpha2)
        return val

    def gradient(self, x) -> np.ndarray:
        u = self._offsets(x)
        g = -np.einsum("nsa,s->na", self.pivot.derivative(u, 1), self.alpha1)
        g -= np.einsum("nsab,sb->na", self.pivot.derivative(u, 2), self.alpha2)
        return g

    def to_json(self) -> dict:
        return {"kind": self.kind, "index": self.index, "points": self.points.tolist(),
                "targets": self.targets.tolist(), "alpha1": self.alpha1.tolist(),
                "alpha2": self.alpha2.tolist(), "rkhs_norm_sq": self.rkhs_norm_sq,
                "rkhs_norm_bound": self.rkhs_norm_bound, "pivot": self.pivot.describe()}


def _certificate_from_targets(points, targets, pivot, kind, index, bound) -> DualCertificate:
    sys = assemble_upsilon(points, pivot)
    s, d = sys.s, pivot.d
    u = np.concatenate([targets, np.zeros(s * d)])
    alpha = sys.solve(u)
    return DualCertificate(alpha[:s].copy(), alpha[s:].reshape(s, d).copy(), sys.points, pivot,
                           np.asarray(targets, dtype=float), kind, index, float(u @ alpha), bound, sys)


def build_certificate(points, signs, pivot: TIKernel) -> DualCertificate:
    """η with η(x_j) = sign_j and ∇η(x_j) = 0, minimal in the pivot RKHS norm."""
    signs = np.asarray(signs, dtype=float).ravel()
    x = _points(points, pivot.d)
    if signs.size != len(x):
        raise InvalidArgument("one sign per point required")
    return _certificate_from_targets(x, signs, pivot, "full", None, math.sqrt(2 * len(x)))


def build_localizing_certificate(points, index: int, pivot: TIKernel, signs=None) -> DualCertificate:
    """η_i with η_i(x_j) = δ_ij sign_j and ∇η_i(x_j) = 0."""
    x = _points(points, pivot.d)
    if not 0 <= index < len(x):
        raise InvalidArgument("localizing index out of range")
    signs = np.ones(len(x)) if signs is None else np.asarray(signs, dtype=float).ravel()
    targets = np.zeros(len(x))
    targets[index] = signs[index]
    return _certificate_from_targets(x, targets, pivot, "localizing", index, math.sqrt(2))


# ---------------------------------------------------------------------------
# sketched certificates

@dataclass(frozen=True, eq=False)
class SketchedCertificate(Certificate):
    coefficients: np.ndarray        # c in the pivot-feature span
    model_coefficients: np.ndarray  # c' with η = ⟨c', F_sketch δ_x⟩
    op: SketchOperator
    points: np.ndarray
    targets: np.ndarray
    kind: str = "full"
    index: int | None = None
    norm_bound: float = float("nan")
    condition: float = float("nan")

    @property
    def metric(self) -> MetricTensor:
        return Sinc4Kernel(self.op.tau, self.op.d).metric

    @property
    def coefficient_norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))

    @property
    def model_coefficient_norm(self) -> float:
        return float(np.linalg.norm(self.model_coefficients))

    @property
    def norm_bound_ok(self) -> bool:
        return self.model_coefficient_norm <= self.norm_bound

    def _features(self, x):
        x = _points(x, self.d)
        return self.op.pivot_weights / math.sqrt(self.op.m) * np.exp(-1j * (x @ self.op.omegas.T))

    def eval(self, x) -> np.ndarray:
        return np.real(self._features(x) @ np.conj(self.coefficients))

    def gradient(self, x) -> np.ndarray:
        psi = self._features(x) * np.conj(self.coefficients)
        return np.real((-1j * psi) @ self.op.omegas)

    def to_json(self) -> dict:
        return {"kind": self.kind, "index": self.index, "points": self.points.tolist(),
                "targets": self.targets.tolist(),
                "coefficients": [[float(c.real), float(c.imag)] for c in self.coefficients],
                "model_coefficient_norm": self.model_coefficient_norm,
                "norm_bound": self.norm_bound, "norm_bound_ok": self.norm_bound_ok}


def build_sketched_certificate(points, signs, op: SketchOperator, kind: str = "full", index: int | None = None,
                               c_pivot: float = 1.0, c_switch: float | None = None) -> SketchedCertificate:
    """Minimum-norm interpolating coefficients in the sketched pivot-feature span."""
    x = _points(points, op.d)
    _check_distinct(x)
    s, d, m = len(x), op.d, op.m
    signs = np.asarray(signs, dtype=float).ravel()
    if signs.size != s:
        raise InvalidArgument("one sign per point required")
    if kind == "full":
        targets = signs.copy()
    elif kind == "localizing":
        if index is None or not 0 <= index < s:
            raise InvalidArgument("localizing certificate needs a valid index")
        targets = np.zeros(s)
        targets[index] = signs[index]
    else:
        raise InvalidArgument(f"unknown certificate kind '{kind}'")

    psi = op.pivot_weights / math.sqrt(m) * np.exp(-1j * (x @ op.omegas.T))   # (s, m)
    dpsi = (-1j * psi)[:, None, :] * op.omegas.T[None, :, :]                  # (s, d, m)
    rows = np.concatenate([psi, dpsi.reshape(s * d, m)], axis=0)
    M = np.concatenate([rows.real, rows.imag], axis=1)                        # real (s(d+1), 2m)
    D = _normalizer(Sinc4Kernel(op.tau, d).metric, s)
    Mt = D @ M
    gram = Mt @ Mt.T
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllPosedError(f"sketched interpolation system is rank-deficient (condition {cond:.3e}); "
                            f"increase the sketch size m (currently {m}, need at least {s * (d + 1)})")
    u = np.concatenate([targets, np.zeros(s * d)])
    beta = _solve_normalized(0.5 * (gram + gram.T), D @ u)
    v = Mt.T @ beta
    c = v[:m] + 1j * v[m:]
    model_c = c * np.conj(op.switch_ratios())
    if c_switch is None:
        c_switch = float(np.abs(op.switch_ratios()).max())
    base = math.sqrt(s) if kind == "full" else 1.0
    return SketchedCertificate(c, model_c, op, x, targets, kind, index,
                               c_pivot * c_switch * base, cond)


# ---------------------------------------------------------------------------
# audit

@dataclass
class CertificateAudit:
    kind: str
    eps0_required: float
    eps2_required: float
    r0: float
    far_margin: float
    near_margin: float
    far_witness: np.ndarray | None
    near_witness: np.ndarray | None
    tail_bound: float | None
    far_points: int
    near_points: int
    interpolation_error: float
    gradient_error: float
    tolerance: float = MARGIN_TOL

    @property
    def far_pass(self) -> bool:
        tail_ok = self.tail_bound is None or self.tail_bound <= 1 - self.eps0_required
        return self.far_margin >= -self.tolerance and tail_ok

    @property
    def near_pass(self) -> bool:
        return self.near_margin >= -self.tolerance

    @property
    def passed(self) -> bool:
        return self.far_pass and self.near_pass

    def to_json(self) -> dict:
        def arr(v):
            return None if v is None else np.asarray(v).tolist()
        return {"kind": self.kind, "eps0_required": self.eps0_required, "eps2_required": self.eps2_required,
                "r0": self.r0, "far_margin": self.far_margin, "near_margin": self.near_margin,
                "far_witness": arr(self.far_witness), "near_witness": arr(self.near_witness),
                "tail_bound": self.tail_bound, "far_points": self.far_points, "near_points": self.near_points,
                "interpolation_error": self.interpolation_error, "gradient_error": self.gradient_error,
                "far_pass": self.far_pass, "near_pass": self.near_pass, "passed": self.passed}


def _near_offsets(d: int, r0: float, density: int) -> np.ndarray:
    """Offsets in metric-normalized coordinates filling the closed ball of radius r0."""
    density = max(2, min(density, int(NEAR_CAP ** (1.0 / d))))
    axis = np.linspace(-r0, r0, density)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    grid = grid[np.linalg.norm(grid, axis=1) <= r0]
    return np.vstack([np.zeros((1, d)), grid])


def _far_candidates(y: np.ndarray, r0: float, radius: float, count: int, rng, d: int) -> np.ndarray:
    """Stratified uniform samples over the window around the points plus a fine shell just outside r0."""
    lo, hi = y.min(axis=0) - radius, y.max(axis=0) + radius
    per_axis = max(1, int(round(count ** (1.0 / d))))
    cells = np.stack(np.meshgrid(*([np.arange(per_axis)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    width = (hi - lo) / per_axis
    strat = lo + (cells + rng.random(cells.shape)) * width
    if d == 1:
        radii = r0 + np.concatenate([[1e-9 * max(r0, 1.0)], np.linspace(0.0, 2.0, 2001)[1:]])
        shell = np.concatenate([radii, -radii])[:, None]
    else:
        radii = r0 + np.concatenate([[1e-9 * max(r0, 1.0)], np.linspace(0.0, 2.0, 201)[1:]])
        ang = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        base = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        if d > 2:
            base = np.hstack([base, np.zeros((len(base), d - 2))])
        shell = (radii[:, None, None] * base[None]).reshape(-1, d)
    shells = (y[:, None, :] + shell[None]).reshape(-1, d)
    return np.vstack([strat, shells])


def audit_certificate(cert: Certificate, r0: float, eps0: float, eps2: float, g: MetricTensor | None = None,
                      far_samples: int = 10_000, near_grid_density: int = 200, far_radius: float = 50.0,
                      box: ParameterBox | None = None, seed: int = 0) -> CertificateAudit:
    """Grid check of the far bound, near quadratic decay, and (localizing) near interpolation."""
    g = g or cert.metric
    d = cert.d
    G_half, G_ihalf = g.sqrt(), g.inv_sqrt()
    pts = cert.points
    y = pts @ G_half

    near_off = _near_offsets(d, r0, near_grid_density)
    near_margin, near_witness, n_near = np.inf, None, 0
    for j in range(len(pts)):
        q = pts[j] + near_off @ G_ihalf
        if box is not None:
            q = q[np.all((q >= box.lower) & (q <= box.upper), axis=1)]
        dist = g.norm(q - pts[j])
        eta = cert.eval(q)
        if cert.kind == "localizing":
            margin = eps2 * dist ** 2 - np.abs(cert.targets[j] - eta)
        else:
            margin = 1 - eps2 * dist ** 2 - np.abs(eta)
        k = int(np.argmin(margin))
        n_near += len(q)
        if margin[k] < near_margin:
            near_margin, near_witness = float(margin[k]), q[k]

    rng = np.random.default_rng(seed)
    cand = _far_candidates(y, r0, far_radius, far_samples, rng, d) @ G_ihalf
    if box is not None:
        cand = cand[np.all((cand >= box.lower) & (cand <= box.upper), axis=1)]
    dmin = pairwise_distances(g, cand, pts).min(axis=1)
    cand = cand[dmin > r0]
    if len(cand):
        margin = 1 - eps0 - np.abs(cert.eval(cand))
        k = int(np.argmin(margin))
        far_margin, far_witness = float(margin[k]), cand[k]
    else:
        far_margin, far_witness = np.inf, None

    tail = None if _window_covers(box, G_half, y, far_radius) else _tail_bound(cert, far_radius)

    val, grad = cert.interpolation_residuals()
    return CertificateAudit(cert.kind, eps0, eps2, r0, far_margin, float(near_margin), far_witness,
                            near_witness, tail, len(cand), n_near, val, grad)


def _window_covers(box: ParameterBox | None, G_half: np.ndarray, y: np.ndarray, radius: float) -> bool:
    if box is None:
        return False
    corners = np.array([np.where(np.array(c, dtype=bool), box.upper, box.lower)
                        for c in np.ndindex(*(2,) * box.d)]) @ G_half
    return bool(np.all(corners >= y.min(axis=0) - radius) and np.all(corners <= y.max(axis=0) + radius))


def _tail_bound(cert: Certificate, radius: float) -> float | None:
    """Upper bound on |η| at Fisher-Rao distance ≥ radius from every point (sinc-4 pivots only)."""
    if isinstance(cert, DualCertificate) and isinstance(cert.pivot, Sinc4Kernel):
        d = cert.d
        a2 = cert.alpha2 @ cert.pivot.metric.sqrt()
        b0 = sinc4_decay_bound(d, 0, 0, radius)
        b1 = sinc4_decay_bound(d, 1, 0, radius)
        return float(np.abs(cert.alpha1).sum() * b0 + np.linalg.norm(a2, axis=1).sum() * b1)
    return None


# ---------------------------------------------------------------------------
# Bregman divergence

def bregman_divergence(mu: DiscreteMeasure, mu0: DiscreteMeasure, cert: Certificate) -> float:
    """‖μ‖_TV − ‖μ⁰‖_TV − ⟨η, μ − μ⁰⟩."""
    lin = 0.0
    if len(mu):
        lin += float(mu.weights @ cert.eval(mu.positions))
    if len(mu0):
        lin -= float(mu0.weights @ cert.eval(mu0.positions))
    return mu.tv_norm - mu0.tv_norm - lin


def divergence_lower_bound(mu: DiscreteMeasure, spikes0, r: float, eps2: float, g: MetricTensor) -> float:
    """ε̄₂ r² |μ|(far) + ε̄₂ Σ_l ∫_{near_l} d_g(x, t_l)² d|μ|."""
    if len(mu) == 0:
        return 0.0
    dist = pairwise_distances(g, mu.positions, np.atleast_2d(spikes0))
    nearest = dist.min(axis=1)
    near = nearest <= r
    w = np.abs(mu.weights)
    return float(eps2 * r ** 2 * w[~near].sum() + eps2 * (w[near] * nearest[near] ** 2).sum())
