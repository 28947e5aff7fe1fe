"""BLASSO objective, a sliding Frank-Wolfe solver, and error-bound verdicts."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from .errors import InvalidArgument, PreconditionError, UnsupportedError
from .geometry import (DiscreteMeasure, MetricTensor, ParameterBox, classify_regions, pairwise_distances,
                       region_statistics)
from .kernels import Sinc4Kernel, TIKernel
from .sketching import SketchOperator, SketchVector


# ---------------------------------------------------------------------------
# data terms: J(w, X) = ½‖y‖² − wᵀc(X) + ½ wᵀG(X)w + κ‖w‖₁

class SketchedData:
    """Observation y ∈ ℂ^m with the sketched forward operator."""

    mode = "sketched"

    def __init__(self, op: SketchOperator, y):
        self.op = op
        self.y = np.asarray(y.z if isinstance(y, SketchVector) else y, dtype=complex).ravel()
        if self.y.size != op.m:
            raise InvalidArgument(f"observation has length {self.y.size}, operator has m = {op.m}")
        self.norm_sq = float(np.vdot(self.y, self.y).real)

    @property
    def d(self) -> int:
        return self.op.d

    def features(self, X) -> np.ndarray:
        return self.op.atom_matrix(np.asarray(X, dtype=float).reshape(-1, self.d))

    def residual(self, w, X) -> np.ndarray:
        if len(w) == 0:
            return self.y.copy()
        return self.y - self.features(X) @ w

    def smooth(self, w, X) -> float:
        r = self.residual(w, X)
        return 0.5 * float(np.vdot(r, r).real)

    def cross(self, X) -> np.ndarray:
        return np.real(self.features(X).conj().T @ self.y)

    def gram(self, X) -> np.ndarray:
        A = self.features(X)
        return np.real(A.conj().T @ A)

    def eta(self, xq, w, X) -> np.ndarray:
        r = self.residual(w, X)
        return np.real(self.features(xq).conj().T @ r)

    def curvature(self) -> tuple[float, np.ndarray]:
        """(‖Fδ_x‖², ∇_s∇_t K(x, x)), both independent of x."""
        amp = np.abs(self.op.feature_scale) ** 2
        return float(amp.sum()), (self.op.omegas * amp[:, None]).T @ self.op.omegas

    def eta_grad(self, xq, w, X) -> tuple[np.ndarray, np.ndarray]:
        r = self.residual(w, X)
        v = self.features(xq).conj() * r[:, None]                 # (m, N)
        eta = np.real(v.sum(axis=0))
        grad = np.real(1j * (v.T @ self.op.omegas))               # (N, d)
        return eta, grad


class GramClosure:
    """Population observation y = F ν for a known measure ν, evaluated through the model kernel."""

    mode = "population"

    def __init__(self, kernel: TIKernel, observation: DiscreteMeasure):
        if observation is None:
            raise UnsupportedError("population data term requires a Gram closure (observation measure)")
        self.kernel = kernel
        self.obs = observation
        Z, b = observation.positions, observation.weights
        self.norm_sq = float(b @ self._k(Z, Z) @ b) if len(b) else 0.0

    @property
    def d(self) -> int:
        return self.kernel.d

    def _k(self, A, B) -> np.ndarray:
        A = np.asarray(A, dtype=float).reshape(-1, self.d)
        B = np.asarray(B, dtype=float).reshape(-1, self.d)
        return self.kernel.profile(A[:, None, :] - B[None, :, :])

    def _dk(self, A, B) -> np.ndarray:
        A = np.asarray(A, dtype=float).reshape(-1, self.d)
        B = np.asarray(B, dtype=float).reshape(-1, self.d)
        return self.kernel.derivative(A[:, None, :] - B[None, :, :], 1)

    def cross(self, X) -> np.ndarray:
        if len(self.obs) == 0:
            return np.zeros(len(np.asarray(X).reshape(-1, self.d)))
        return self._k(X, self.obs.positions) @ self.obs.weights

    def gram(self, X) -> np.ndarray:
        return self._k(X, X)

    def smooth(self, w, X) -> float:
        if len(w) == 0:
            return 0.5 * self.norm_sq
        return 0.5 * (self.norm_sq - 2 * w @ self.cross(X) + w @ self.gram(X) @ w)

    def eta(self, xq, w, X) -> np.ndarray:
        out = self.cross(xq)
        if len(w):
            out = out - self._k(xq, X) @ w
        return out

    def curvature(self) -> tuple[float, np.ndarray]:
        return self.kernel.value_at_zero, -self.kernel.derivative(np.zeros(self.d), 2)

    def eta_grad(self, xq, w, X) -> tuple[np.ndarray, np.ndarray]:
        eta = self.eta(xq, w, X)
        grad = np.zeros((len(eta), self.d))
        if len(self.obs):
            grad += np.einsum("nla,l->na", self._dk(xq, self.obs.positions), self.obs.weights)
        if len(w):
            grad -= np.einsum("nka,k->na", self._dk(xq, X), w)
        return eta, grad


@dataclass(eq=False)
class BlassoProblem:
    data: SketchedData | GramClosure
    kappa: float
    box: ParameterBox
    metric: MetricTensor

    def __post_init__(self):
        if not self.kappa > 0:
            raise InvalidArgument("kappa must be positive")
        if self.box.d != self.data.d or self.metric.d != self.data.d:
            raise InvalidArgument("box, metric and observation dimensions differ")

    @property
    def mode(self) -> str:
        return self.data.mode

    @property
    def d(self) -> int:
        return self.data.d

    @classmethod
    def sketched(cls, op: SketchOperator, y, kappa: float, box: ParameterBox,
                 metric: MetricTensor | None = None) -> "BlassoProblem":
        return cls(SketchedData(op, y), kappa, box, metric or Sinc4Kernel(op.tau, op.d).metric)

    @classmethod
    def population(cls, kernel: TIKernel, observation: DiscreteMeasure | None, kappa: float, box: ParameterBox,
                   metric: MetricTensor | None = None) -> "BlassoProblem":
        return cls(GramClosure(kernel, observation), kappa, box, metric or kernel.metric)

    def with_kappa(self, kappa: float) -> "BlassoProblem":
        return BlassoProblem(self.data, kappa, self.box, self.metric)


def objective(problem: BlassoProblem, mu: DiscreteMeasure) -> float:
    if len(mu) and not problem.box.contains(mu.positions, tol=1e-12):
        raise InvalidArgument("measure has atoms outside the parameter box")
    return problem.data.smooth(np.asarray(mu.weights), mu.positions) + problem.kappa * mu.tv_norm


def near_optimality(problem: BlassoProblem, mu_hat: DiscreteMeasure, mu0: DiscreteMeasure) -> bool:
    j_hat, j0 = objective(problem, mu_hat), objective(problem, mu0)
    return j_hat <= j0 + 1e-12 * max(abs(j0), 1.0)


# ---------------------------------------------------------------------------
# regularization

def calibrate_kappa(gamma_bound: float, s0: int, c_kappa: float) -> float:
    if gamma_bound <= 0 or s0 < 1 or c_kappa <= 0:
        raise InvalidArgument("gamma_bound, s0 and c_kappa must be positive")
    return c_kappa * gamma_bound / math.sqrt(s0)


def population_c_kappa(c_switch: float) -> float:
    return 1.0 / (math.sqrt(2) * c_switch)


def sketched_c_kappa(c_switch: float, c_pivot: float = 1.0) -> float:
    return 1.0 / (c_pivot * c_switch)


def unknown_sparsity_c_kappa(s0: int) -> float:
    """c_κ = √s0, so κ = γ; bounds then grow like s0 instead of √s0."""
    return math.sqrt(s0)


# ---------------------------------------------------------------------------
# sliding Frank-Wolfe

@dataclass
class SolveConfig:
    max_atoms: int = 50
    max_iter: int = 200
    lmo_grid: int | None = None          # points per axis; 1024 (d=1) or 128 (d≥2) when None
    lmo_refine_steps: int = 20
    sliding_iterations: int = 500
    armijo_step: float = 1.0
    armijo_factor: float = 0.5
    armijo_c: float = 1e-4
    merge_radius: float = 0.025          # Fisher-Rao units (r0/10 for sinc-4, d=1)
    prune_ratio: float = 1e-3            # prune below prune_ratio·κ
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        for name in ("max_atoms", "max_iter", "lmo_refine_steps", "sliding_iterations"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be positive")
        if not (0 < self.armijo_factor < 1 and 0 < self.armijo_c < 1 and self.armijo_step > 0):
            raise InvalidArgument("invalid Armijo parameters")
        if self.merge_radius <= 0 or self.prune_ratio <= 0 or self.tol <= 0:
            raise InvalidArgument("merge radius, prune ratio and tolerance must be positive")

    def grid_points(self, d: int) -> int:
        return self.lmo_grid or (1024 if d == 1 else 128)


@dataclass
class SolveTrace:
    objectives: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    atoms: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    reason: str = ""
    near_optimal: bool | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _lasso_weights(data, X, w0, kappa, sweeps=2000, tol=1e-14):
    """Exact coordinate descent for min ½wᵀGw − wᵀc + κ‖w‖₁ at fixed positions."""
    if len(X) == 0:
        return np.zeros(0)
    G, c = data.gram(X), data.cross(X)
    w = np.array(w0, dtype=float)
    diag = np.diag(G)
    for _ in range(sweeps):
        delta = 0.0
        for k in range(len(w)):
            if diag[k] <= 0:
                w[k] = 0.0
                continue
            rho = c[k] - G[k] @ w + diag[k] * w[k]
            new = math.copysign(max(abs(rho) - kappa, 0.0), rho) / diag[k]
            delta = max(delta, abs(new - w[k]) * math.sqrt(diag[k]))
            w[k] = new
        if delta <= tol * max(1.0, math.sqrt(data.norm_sq)):
            break
    return w


class _Sliding:
    """Projected gradient with Armijo backtracking on (w⁺, w⁻, G^{1/2}x).

    Each coordinate is scaled by the inverse diagonal Gauss-Newton curvature so that
    the unit initial step is meaningful for weights and positions alike.
    """

    def __init__(self, problem: BlassoProblem, config: SolveConfig):
        self.p = problem
        self.cfg = config
        self.Gh = problem.metric.sqrt()
        self.Gih = problem.metric.inv_sqrt()
        k0, H = problem.data.curvature()
        self.k0 = max(k0, 1e-300)
        self.hy = max(float(np.linalg.eigvalsh(self.Gih @ H @ self.Gih).max()), 1e-300)

    def value(self, w, X):
        return self.p.data.smooth(w, X) + self.p.kappa * np.abs(w).sum()

    def run(self, w, X, iterations):
        kappa, cfg, box = self.p.kappa, self.cfg, self.p.box
        wp, wm = np.maximum(w, 0.0), np.maximum(-w, 0.0)
        Y = X @ self.Gh
        f = self.value(wp - wm, X)
        for _ in range(iterations):
            w = wp - wm
            eta, geta = self.p.data.eta_grad(X, w, X)
            gw = -eta
            gy = (-w[:, None] * geta) @ self.Gih
            gp, gm = gw + kappa, -gw + kappa
            sw = 1.0 / self.k0
            wmax = np.abs(w).max() if len(w) else 0.0
            sy = 1.0 / (self.hy * np.maximum(w ** 2, 1e-6 * wmax ** 2 + 1e-300))[:, None]
            accepted = False
            t = cfg.armijo_step
            for _ in range(60):
                wp_n = np.maximum(wp - t * sw * gp, 0.0)
                wm_n = np.maximum(wm - t * sw * gm, 0.0)
                X_n = box.clamp((Y - t * sy * gy) @ self.Gih)
                Y_n = X_n @ self.Gh
                decrease = gp @ (wp_n - wp) + gm @ (wm_n - wm) + np.sum(gy * (Y_n - Y))
                f_n = self.value(wp_n - wm_n, X_n)
                if f_n <= f + cfg.armijo_c * decrease:
                    accepted = True
                    break
                t *= cfg.armijo_factor
            if not accepted:
                break
            done = f - f_n <= 1e-15 * max(abs(f), 1.0)
            if f_n <= f:
                wp, wm, X, Y, f = wp_n, wm_n, X_n, Y_n, f_n
            if done:
                break
        return wp - wm, X, f


def _lmo_grid(box: ParameterBox, n: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, n) for lo, hi in zip(box.lower, box.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.d)


def _refine_argmax(data, x0, w, X, box: ParameterBox, halfwidth: np.ndarray, steps: int):
    def neg(v):
        v = box.clamp(np.atleast_1d(v))
        return -abs(float(data.eta(v[None, :], w, X)[0]))
    if box.d == 1:
        lo = max(x0[0] - halfwidth[0], box.lower[0])
        hi = min(x0[0] + halfwidth[0], box.upper[0])
        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                       options={"maxiter": steps, "xatol": 1e-10 * max(hi - lo, 1e-300)})
        x, val = np.array([res.x]), -res.fun
    else:
        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                options={"maxiter": steps * box.d})
        x, val = box.clamp(res.x), -res.fun
    base = -neg(x0)
    return (x, val) if val >= base else (np.asarray(x0, dtype=float), base)


def _merge_candidates(X, metric, radius):
    if len(X) < 2:
        return None
    dist = pairwise_distances(metric, X)
    dist[np.diag_indices(len(X))] = np.inf
    i, j = np.unravel_index(np.argmin(dist), dist.shape)
    return (int(min(i, j)), int(max(i, j))) if dist[i, j] < radius else None


def solve(problem: BlassoProblem, config: SolveConfig | None = None) -> tuple[DiscreteMeasure, SolveTrace]:
    cfg = config or SolveConfig()
    data, kappa, box, d = problem.data, problem.kappa, problem.box, problem.d
    slider = _Sliding(problem, cfg)
    grid = _lmo_grid(box, cfg.grid_points(d))
    halfwidth = (box.upper - box.lower) / (cfg.grid_points(d) - 1)

    w, X = np.zeros(0), np.zeros((0, d))
    trace = SolveTrace()
    J = slider.value(w, X)
    trace.objectives.append(J)

    for it in range(cfg.max_iter):
        trace.iterations = it + 1
        eta = np.abs(data.eta(grid, w, X))
        k = int(np.argmax(eta))
        x_new, val = _refine_argmax(data, grid[k], w, X, box, halfwidth, cfg.lmo_refine_steps)
        gap = val - kappa
        trace.gaps.append(float(gap))
        if gap <= cfg.tol * kappa:
            trace.converged, trace.reason = True, "dual-gap surrogate below tolerance"
            break
        if len(w) >= cfg.max_atoms:
            trace.reason = "max_atoms reached"
            break

        w_prev, X_prev = w.copy(), X.copy()
        X = np.vstack([X, x_new[None, :]])
        w = np.append(w, 0.0)
        w = _lasso_weights(data, X, w, kappa)
        w, X, _ = slider.run(w, X, cfg.sliding_iterations)
        w = _lasso_weights(data, X, w, kappa)
        w, X = _merge_and_prune(slider, w, X, problem.metric, cfg, kappa)
        J_new = slider.value(w, X)
        if J_new > J:
            # rounding in the weight solve; keep the previous iterate so the trace never increases
            w, X, J_new = w_prev, X_prev, J
        J = J_new
        trace.objectives.append(J)
    else:
        trace.reason = "iteration budget exhausted"

    keep = w != 0
    mu = DiscreteMeasure(w[keep], X[keep], box)
    trace.atoms = [{"w": float(a), "x": x.tolist()} for a, x in zip(mu.weights, mu.positions)]
    return mu, trace


def _merge_and_prune(slider: _Sliding, w, X, metric, cfg: SolveConfig, kappa: float):
    data = slider.p.data
    f = slider.value(w, X)
    keep = w != 0
    w, X = w[keep], X[keep]
    while True:
        pair = _merge_candidates(X, metric, cfg.merge_radius)
        if pair is None:
            break
        i, j = pair
        a = np.abs(w[[i, j]])
        pos = (a[0] * X[i] + a[1] * X[j]) / a.sum() if a.sum() > 0 else X[i]
        X_try = np.delete(X, j, axis=0)
        X_try[i] = pos
        w_try = np.delete(w, j)
        w_try[i] = w[i] + w[j]
        w_try = _lasso_weights(data, X_try, w_try, kappa)
        f_try = slider.value(w_try, X_try)
        if f_try <= f:
            w, X, f = w_try, X_try, f_try
        else:
            break
    small = np.abs(w) < cfg.prune_ratio * kappa
    if np.any(small):
        w_try = _lasso_weights(data, X[~small], w[~small], kappa)
        f_try = slider.value(w_try, X[~small])
        if f_try <= f:
            w, X, f = w_try, X[~small], f_try
    keep = w != 0
    return w[keep], X[keep]


# ---------------------------------------------------------------------------
# error-bound verdicts

@dataclass(frozen=True)
class BoundConstants:
    mode: str                 # "population" | "sketched"
    c_switch: float
    c_kappa: float
    eps0: float
    eps2: float
    r0: float
    c_pivot: float = 1.0

    def __post_init__(self):
        if self.mode not in ("population", "sketched"):
            raise InvalidArgument("mode must be 'population' or 'sketched'")

    @property
    def radius_limit(self) -> tuple[float, str]:
        curv = self.eps0 / self.eps2 if self.mode == "population" else self.eps0 / (6 * self.eps2)
        name = "sqrt(eps0/eps2)" if self.mode == "population" else "sqrt(eps0/(6 eps2))"
        c = math.sqrt(curv)
        return (self.r0, "r0") if self.r0 <= c else (c, name)

    @property
    def c_bar(self) -> float:
        k = math.sqrt(2) * self.c_switch if self.mode == "population" else self.c_pivot * self.c_switch
        return (1 + k * self.c_kappa) ** 2 / (2 * self.c_kappa)

    @property
    def c_tilde(self) -> float:
        e = self.eps0 if self.mode == "population" else self.eps0 / 4
        return self.c_bar * max(1.0, e)

    @property
    def c_hat(self) -> float:
        k = math.sqrt(2) * self.c_switch if self.mode == "population" else self.c_pivot * self.c_switch
        return 2 * k * (1 + k * self.c_kappa)

    def scaled_noise(self, gamma: float, r: float) -> float:
        """γ/(ε̄₂r²), with the extra 2/3 in the sketched case."""
        base = gamma / (self.eps2 * r ** 2)
        return base if self.mode == "population" else 2 * base / 3


@dataclass
class BoundReport:
    mode: str
    r: float
    gamma: float
    s0: int
    constants: dict
    far_mass: float
    far_bound: float
    near_errors: list
    near_bound: float
    detection_threshold: float
    detection_violations: list
    localization: float
    precondition_ok: bool
    precondition_note: str
    verdicts: dict

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> dict:
        out = asdict(self)
        out["passed"] = self.passed
        return out


def localization_distance(mu_hat: DiscreteMeasure, spikes0, metric: MetricTensor) -> float:
    """max_k min_atoms d_g(atom, t_k); +inf for an empty estimate."""
    if len(mu_hat) == 0:
        return math.inf
    return float(pairwise_distances(metric, np.atleast_2d(spikes0), mu_hat.positions).min(axis=1).max())


def _clusters(positions, metric, r):
    """Connected components of atoms under the relation d_g ≤ r."""
    n = len(positions)
    if n == 0:
        return []
    adj = pairwise_distances(metric, positions) <= r
    seen, out = np.zeros(n, bool), []
    for s in range(n):
        if seen[s]:
            continue
        stack, comp = [s], []
        seen[s] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(adj[i] & ~seen):
                seen[j] = True
                stack.append(int(j))
        out.append(sorted(comp))
    return out


def bound_verdict(mu_hat: DiscreteMeasure, mu0: DiscreteMeasure, r: float, gamma: float, s0: int,
                  constants: BoundConstants, metric: MetricTensor, strict: bool = True,
                  far_bound: float | None = None, near_bound: float | None = None) -> BoundReport:
    """Measure far mass, near errors and detection, and compare with the error-bound ceilings.

    `far_bound` / `near_bound` override the generic ceilings (used for proposition-specific forms).
    """
    limit, name = constants.radius_limit
    ok = 0 < r < limit
    note = "ok" if ok else f"r = {r:.6g} violates r < {name} = {limit:.6g}"
    if not ok and strict:
        raise PreconditionError(note)
    g_scaled = constants.scaled_noise(gamma, r) if r > 0 else math.inf
    sq = math.sqrt(s0)
    far_b = far_bound if far_bound is not None else constants.c_bar * g_scaled * sq
    near_b = near_bound if near_bound is not None else constants.c_tilde * g_scaled * sq + constants.c_hat * gamma
    detect = far_b

    far_mass, near_err = region_statistics(mu_hat, mu0.positions, mu0.weights, r, metric)
    violations = []
    if len(mu_hat):
        spikes = mu0.positions
        groups = [[i] for i in range(len(mu_hat))] + [c for c in _clusters(mu_hat.positions, metric, r) if len(c) > 1]
        for grp in groups:
            mass = float(np.abs(mu_hat.weights[grp]).sum())
            if mass > detect:
                dist = pairwise_distances(metric, mu_hat.positions[grp], spikes).min()
                if dist > r:
                    violations.append({"atoms": grp, "mass": mass, "distance": float(dist)})
    verdicts = {
        "far": far_mass <= far_b,
        "near": bool(np.all(near_err <= near_b)),
        "detection": not violations,
    }
    return BoundReport(constants.mode, float(r), float(gamma), int(s0), asdict(constants),
                       float(far_mass), float(far_b), [float(v) for v in near_err], float(near_b),
                       float(detect), violations, localization_distance(mu_hat, mu0.positions, metric),
                       ok, note, verdicts)


# ---------------------------------------------------------------------------
# effective radius

def effective_radius(n: int, schedule: dict) -> tuple[float, float]:
    """(r_n, v_n) = (δ_n n^{−1/4}, δ_n^{−2}) for δ_n given by the schedule."""
    if n < 1:
        raise InvalidArgument("n must be at least 1")
    kind = schedule.get("kind")
    if kind == "poly":
        a = float(schedule.get("a", 0.1))
        if not 0 < a < 0.25:
            raise InvalidArgument("poly schedule exponent must lie in (0, 1/4)")
        delta = n ** a
    elif kind == "log":
        if n < 2:
            raise InvalidArgument("log schedule needs n >= 2")
        delta = math.sqrt(math.log(n))
    elif kind == "logpoly":
        a, b = float(schedule.get("a", 0.1)), float(schedule.get("b", 1.0))
        if not 0 < a < 0.25:
            raise InvalidArgument("logpoly schedule exponent must lie in (0, 1/4)")
        if n < 2:
            raise InvalidArgument("logpoly schedule needs n >= 2")
        delta = n ** a * math.log(n) ** b
    else:
        raise InvalidArgument(f"unknown schedule kind '{kind}'")
    return delta * n ** -0.25, delta ** -2


def radius_constant(constants: BoundConstants) -> float:
    """c_d = (radius limit)^{−4}; the propositions need n ≥ c_d δ_n⁴."""
    return constants.radius_limit[0] ** -4
