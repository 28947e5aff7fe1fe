"""Translation-invariant kernels K(s, t) = ρ(s − t) with derivatives up to order 4.

Fourier convention: F[g](ω) = ∫ g(x) e^{−iωᵀx} dx, so a kernel profile is
ρ(u) = ∫ ν(ω) e^{iωᵀu} dω with spectral density ν = F[ρ] / (2π)^d.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InvalidArgument, UnsupportedError
from .geometry import MetricTensor

MAX_ORDER = 4
_SERIES_TERMS = 14


# ---------------------------------------------------------------------------
# sinc and its derivatives

def sinc(z):
    """Unnormalised sinc, sin(z)/z, with a Taylor branch near the origin."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-4
    safe = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, 1.0 - z2 / 6.0 + z2 * z2 / 120.0, np.sin(safe) / safe)


def sinc_derivatives(z, kmax: int = MAX_ORDER) -> np.ndarray:
    """Array of shape (kmax+1, *z.shape) holding sinc^{(k)}(z) for k = 0..kmax.

    Uses the power series for |z| < 1 and the recursion
    z s^{(k)} + k s^{(k−1)} = sin^{(k)}(z) elsewhere.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty((kmax + 1,) + z.shape)
    small = np.abs(z) < 1.0
    zs = np.where(small, z, 0.0)
    zl = np.where(small, 1.0, z)

    # series: sinc(z) = Σ (−1)^n z^{2n} / (2n+1)!
    for k in range(kmax + 1):
        acc = np.zeros_like(z)
        for n in range((k + 1) // 2, _SERIES_TERMS):
            p = 2 * n - k
            coef = (-1) ** n * math.factorial(2 * n) / (math.factorial(p) * math.factorial(2 * n + 1))
            acc = acc + coef * zs ** p
        out[k] = acc

    prev = np.sin(zl) / zl
    big = prev
    for k in range(kmax + 1):
        if k > 0:
            big = (np.sin(zl + k * np.pi / 2) - k * prev) / zl
            prev = big
        out[k] = np.where(small, out[k], big)
    return out


def _fourth_power_derivatives(s: np.ndarray) -> np.ndarray:
    """Derivatives of f⁴ given stacked derivatives s[k] = f^{(k)}, k ≤ 4."""
    f, f1, f2, f3, f4 = s
    out = np.empty_like(s)
    out[0] = f ** 4
    out[1] = 4 * f ** 3 * f1
    out[2] = 12 * f ** 2 * f1 ** 2 + 4 * f ** 3 * f2
    out[3] = 24 * f * f1 ** 3 + 36 * f ** 2 * f1 * f2 + 4 * f ** 3 * f3
    out[4] = (24 * f1 ** 4 + 144 * f * f1 ** 2 * f2 + 36 * f ** 2 * f2 ** 2
              + 48 * f ** 2 * f1 * f3 + 4 * f ** 3 * f4)
    return out


def sinc_envelope(z):
    """Upper envelope (1 − z²/12) on |z| ≤ 2 and 1/2 beyond, dominating |sinc|."""
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) <= 2, 1 - z * z / 12, 0.5)


def irwin_hall4_density(x):
    """Density of the sum of four independent U[0, 1] variables."""
    x = np.asarray(x, dtype=float)
    acc = np.zeros_like(x)
    for k in range(5):
        acc = acc + (-1) ** k * math.comb(4, k) * np.clip(x - k, 0.0, None) ** 3
    acc = acc / 6.0
    return np.where((x < 0) | (x > 4), 0.0, np.clip(acc, 0.0, None))


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class SpectralGrid:
    """Tensor Gauss-Legendre rule on the cube [−1/τ, 1/τ]^d."""
    tau: float
    d: int
    nodes_per_axis: int = 0

    def __post_init__(self):
        n = self.nodes_per_axis or default_nodes(self.d)
        if n < 2:
            raise ConfigurationError("spectral grid needs at least 2 nodes per axis")
        if self.tau <= 0:
            raise InvalidArgument("tau must be positive")
        object.__setattr__(self, "nodes_per_axis", n)

    @cached_property
    def _rule(self):
        x, w = np.polynomial.legendre.leggauss(self.nodes_per_axis)
        half = 1.0 / self.tau
        x = x * half
        w = w * half
        pts = np.stack(np.meshgrid(*([x] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d)
        wts = np.prod(np.stack(np.meshgrid(*([w] * self.d), indexing="ij"), axis=-1).reshape(-1, self.d), axis=1)
        return pts, wts

    @property
    def nodes(self) -> np.ndarray:
        return self._rule[0]

    @property
    def weights(self) -> np.ndarray:
        return self._rule[1]

    def integrate(self, fn: Callable) -> float:
        return float(np.sum(self.weights * fn(self.nodes)))


def default_nodes(d: int) -> int:
    return 64 if d <= 2 else 32


# ---------------------------------------------------------------------------
# kernels

def _as_offsets(u, d):
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u[None]
    if u.shape[-1] != d:
        if d == 1:
            u = u[..., None]
        else:
            raise InvalidArgument(f"offset dimension {u.shape[-1]} does not match kernel dimension {d}")
    return u


class TIKernel:
    """Base class. Subclasses provide `_derivative(u, order)` and `spectral_density`."""

    d: int
    normalized: bool = True
    name: str = "kernel"
    support_halfwidth: float | None = None  # spectral support cube half-width, None if unbounded

    def profile(self, u):
        u = _as_offsets(u, self.d)
        return self._derivative(u, 0)

    def eval(self, s, t):
        s = _as_offsets(s, self.d)
        t = _as_offsets(t, self.d)
        out = self.profile(s - t)
        return float(out) if np.ndim(out) == 0 else out

    __call__ = eval

    def derivative(self, u, order: int) -> np.ndarray:
        """∇^order ρ(u); shape (*batch, d, ..., d)."""
        if order < 0 or order > MAX_ORDER:
            raise UnsupportedError(f"derivative order {order} not supported (max {MAX_ORDER})")
        return self._derivative(_as_offsets(u, self.d), order)

    def _derivative(self, u, order):
        raise NotImplementedError

    def spectral_density(self, omega):
        raise NotImplementedError

    @cached_property
    def metric(self) -> MetricTensor:
        return MetricTensor(-self.derivative(np.zeros(self.d), 2))

    @property
    def value_at_zero(self) -> float:
        return float(self.profile(np.zeros(self.d)))

    def describe(self) -> dict:
        return {"kind": self.name, "d": self.d}


class ProductKernel(TIKernel):
    """ρ(u) = ∏_j h(u_j) for a one-dimensional even profile h."""

    def _axis_derivatives(self, x) -> np.ndarray:
        """h^{(k)}(x) for k = 0..4, stacked on axis 0."""
        raise NotImplementedError

    def _derivative(self, u, order):
        h = self._axis_derivatives(u)  # (5, *batch, d)
        batch = u.shape[:-1]
        d = self.d
        if order == 0:
            return np.prod(h[0], axis=-1)
        out = np.empty(batch + (d,) * order)
        for idx in itertools.product(range(d), repeat=order):
            counts = np.bincount(idx, minlength=d)
            val = np.ones(batch)
            for j in range(d):
                val = val * h[counts[j], ..., j]
            out[(Ellipsis,) + idx] = val
        return out


@dataclass(eq=False)
class Sinc4Kernel(ProductKernel):
    """Ψ_τ(u) = ∏_j sinc⁴(u_j / (4τ)); spectral measure is Irwin-Hall of order 4."""
    tau: float
    d: int = 1
    name: str = field(default="sinc4", init=False)

    def __post_init__(self):
        if self.tau <= 0 or self.d < 1:
            raise InvalidArgument("sinc4 kernel needs tau > 0 and d >= 1")
        self.support_halfwidth = 1.0 / self.tau
        self.normalized = True

    def _axis_derivatives(self, x):
        c = 4.0 * self.tau
        g = _fourth_power_derivatives(sinc_derivatives(x / c))
        scale = c ** -np.arange(MAX_ORDER + 1, dtype=float)
        return g * scale.reshape((-1,) + (1,) * x.ndim)

    def spectral_density(self, omega):
        omega = _as_offsets(omega, self.d)
        per_axis = 2 * self.tau * irwin_hall4_density(2 * self.tau * omega + 2)
        return np.prod(per_axis, axis=-1)

    @property
    def spectral_max(self) -> float:
        return (2.0 / 3.0) ** self.d * (2 * self.tau) ** self.d

    @cached_property
    def metric(self) -> MetricTensor:
        return MetricTensor.isotropic(1.0 / (12 * self.tau ** 2), self.d)

    def sample_frequencies(self, rng: np.random.Generator, m: int) -> np.ndarray:
        half = 1.0 / (4 * self.tau)
        return rng.uniform(-half, half, size=(m, self.d, 4)).sum(axis=-1)

    def describe(self):
        return {"kind": "sinc4", "tau": self.tau, "d": self.d}


@dataclass(eq=False)
class SincSmoothingKernel(ProductKernel):
    """λ_τ(u) = τ^{−d} ∏ sinc(u_j/τ); spectral density 2^{−d} on [−1/τ, 1/τ]^d."""
    tau: float
    d: int = 1
    name: str = field(default="sinc", init=False)

    def __post_init__(self):
        if self.tau <= 0 or self.d < 1:
            raise InvalidArgument("sinc kernel needs tau > 0 and d >= 1")
        self.support_halfwidth = 1.0 / self.tau
        self.normalized = False

    def _axis_derivatives(self, x):
        s = sinc_derivatives(x / self.tau)
        scale = self.tau ** -(np.arange(MAX_ORDER + 1, dtype=float) + 1)
        return s * scale.reshape((-1,) + (1,) * x.ndim)

    def spectral_density(self, omega):
        omega = _as_offsets(omega, self.d)
        inside = np.all(np.abs(omega) <= 1.0 / self.tau, axis=-1)
        return np.where(inside, 2.0 ** -self.d, 0.0)

    def describe(self):
        return {"kind": "sinc", "tau": self.tau, "d": self.d}


@dataclass(eq=False)
class GaussianKernel(TIKernel):
    """Θ_Ω(u) = exp(−½ uᵀΩu); its metric tensor is Ω."""
    omega: np.ndarray
    name: str = field(default="gaussian", init=False)

    def __post_init__(self):
        om = np.atleast_2d(np.asarray(self.omega, dtype=float))
        MetricTensor(om)  # validates symmetric positive definite
        self.omega = om
        self.d = om.shape[0]
        self.normalized = True
        self.support_halfwidth = None

    @classmethod
    def isotropic(cls, d: int, scale: float = 1.0) -> "GaussianKernel":
        return cls(scale * np.eye(d))

    def _derivative(self, u, order):
        om = self.omega
        rho = np.exp(-0.5 * np.einsum("...i,ij,...j->...", u, om, u))
        a = -np.einsum("ij,...j->...i", om, u)
        if order == 0:
            return rho
        if order == 1:
            return rho[..., None] * a
        r2 = rho[..., None, None]
        if order == 2:
            return r2 * (np.einsum("...i,...j->...ij", a, a) - om)
        if order == 3:
            aaa = np.einsum("...i,...j,...k->...ijk", a, a, a)
            sym = (np.einsum("ij,...k->...ijk", om, a) + np.einsum("ik,...j->...ijk", om, a)
                   + np.einsum("jk,...i->...ijk", om, a))
            return rho[..., None, None, None] * (aaa - sym)
        aaaa = np.einsum("...i,...j,...k,...l->...ijkl", a, a, a, a)
        pairs = [("ij", "kl"), ("ik", "jl"), ("il", "jk"), ("kl", "ij"), ("jl", "ik"), ("jk", "il")]
        oaa = sum(np.einsum(f"{p},...{q[0]},...{q[1]}->...ijkl", om, a, a) for p, q in pairs)
        oo = (np.einsum("ij,kl->ijkl", om, om) + np.einsum("ik,jl->ijkl", om, om)
              + np.einsum("il,jk->ijkl", om, om))
        return rho[..., None, None, None, None] * (aaaa - oaa + oo)

    def spectral_density(self, omega):
        omega = _as_offsets(omega, self.d)
        inv = np.linalg.inv(self.omega)
        norm = (2 * np.pi) ** (-self.d / 2) / np.sqrt(np.linalg.det(self.omega))
        return norm * np.exp(-0.5 * np.einsum("...i,ij,...j->...", omega, inv, omega))

    @cached_property
    def metric(self) -> MetricTensor:
        return MetricTensor(self.omega)

    def describe(self):
        return {"kind": "gaussian", "omega": self.omega.tolist()}


@dataclass(eq=False)
class SpectralKernel(TIKernel):
    """Kernel defined by an even spectral density on the cube, evaluated by quadrature."""
    density: Callable
    grid: SpectralGrid
    name: str = "spectral"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid is None:
            raise ConfigurationError("quadrature grid unset")
        self.d = self.grid.d
        self.support_halfwidth = 1.0 / self.grid.tau
        self._w = self.grid.weights * self.density(self.grid.nodes)
        self.normalized = abs(float(self._w.sum()) - 1.0) < 1e-8

    def spectral_density(self, omega):
        omega = _as_offsets(omega, self.d)
        inside = np.all(np.abs(omega) <= self.support_halfwidth, axis=-1)
        return np.where(inside, self.density(np.where(inside[..., None], omega, 0.0)), 0.0)

    def _derivative(self, u, order):
        nodes = self.grid.nodes
        theta = u @ nodes.T  # (*batch, Q)
        # Re(i^k e^{iθ}) = cos(θ + kπ/2)
        c = np.cos(theta + order * np.pi / 2) * self._w
        if order == 0:
            return c.sum(axis=-1)
        letters = "abcd"[:order]
        operands = [c] + [nodes] * order
        spec = "...q," + ",".join(f"q{l}" for l in letters) + "->..." + letters
        return np.einsum(spec, *operands)

    def describe(self):
        return {"kind": self.name, "tau": self.grid.tau, "d": self.d, **self.meta}


# ---------------------------------------------------------------------------
# template distributions

@dataclass(frozen=True)
class TemplateDistribution:
    name: str
    cf: Callable  # ω (…, d) → complex
    sampler: Callable | None = None  # (rng, count, d) → (count, d)
    params: dict = field(default_factory=dict)

    def characteristic(self, omega):
        return np.asarray(self.cf(np.asarray(omega, dtype=float)))

    def sample(self, rng: np.random.Generator, count: int, d: int) -> np.ndarray:
        if self.sampler is None:
            raise UnsupportedError(f"template '{self.name}' has no sampler")
        return self.sampler(rng, count, d)

    def describe(self) -> dict:
        return {"kind": self.name, **self.params}


def gaussian_template(sigma: float) -> TemplateDistribution:
    if sigma <= 0:
        raise InvalidArgument("sigma must be positive")
    return TemplateDistribution(
        "gaussian",
        lambda w: np.exp(-0.5 * sigma ** 2 * np.sum(np.atleast_1d(w) ** 2, axis=-1)),
        lambda rng, n, d: sigma * rng.standard_normal((n, d)),
        {"sigma": sigma},
    )


def cauchy_template(scale: float) -> TemplateDistribution:
    if scale <= 0:
        raise InvalidArgument("scale must be positive")
    return TemplateDistribution(
        "cauchy",
        lambda w: np.exp(-scale * np.sum(np.abs(np.atleast_1d(w)), axis=-1)),
        lambda rng, n, d: scale * rng.standard_cauchy((n, d)),
        {"scale": scale},
    )


def point_mass_template() -> TemplateDistribution:
    return TemplateDistribution(
        "point",
        lambda w: np.ones(np.shape(w)[:-1]),
        lambda rng, n, d: np.zeros((n, d)),
    )


def supermix_density(template: TemplateDistribution, tau: float, d: int) -> Callable:
    """U_τ(ω)·|F[φ](ω)|², the spectral density of λ_τ ⋆ φ ⋆ φ̌ restricted to the cube."""
    def density(omega):
        omega = _as_offsets(omega, d)
        inside = np.all(np.abs(omega) <= 1.0 / tau, axis=-1)
        val = np.abs(template.characteristic(omega)) ** 2
        return np.where(inside, 2.0 ** -d * val, 0.0)
    return density


def model_kernel_from_template(template: TemplateDistribution, tau: float, d: int = 1,
                               grid: SpectralGrid | None = None) -> SpectralKernel:
    if tau <= 0:
        raise InvalidArgument("tau must be positive")
    grid = grid if grid is not None else SpectralGrid(tau, d)
    if grid.tau != tau or grid.d != d:
        raise ConfigurationError("spectral grid does not match (tau, d)")
    return SpectralKernel(supermix_density(template, tau, d), grid, name="supermix",
                          meta={"template": template.describe()})


# ---------------------------------------------------------------------------
# derivative forms and norms

def covariant_derivative(kernel: TIKernel, s, t, i: int, j: int, U=None, V=None):
    """K^{(i,j)}(s,t) = (−1)^j ∇^{i+j}ρ(s−t), optionally contracted with U (i vectors) and V (j vectors)."""
    if i < 0 or j < 0 or i + j > MAX_ORDER:
        raise UnsupportedError(f"order ({i},{j}) not supported")
    s = _as_offsets(s, kernel.d)
    t = _as_offsets(t, kernel.d)
    T = (-1) ** j * kernel.derivative(s - t, i + j)
    vecs = list(U or []) + list(V or [])
    if not vecs:
        return T
    if len(vecs) != i + j:
        raise InvalidArgument("need one tangent vector per derivative slot")
    for v in reversed(vecs):
        T = T @ np.asarray(v, dtype=float)
    return float(T) if np.ndim(T) == 0 else T


def normalize_slots(T: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Precompose every slot of a d^k tensor with the matrix G."""
    for axis in range(T.ndim):
        T = np.moveaxis(np.tensordot(T, G, axes=([axis], [0])), -1, axis)
    return T


def symmetric_tensor_norm(T: np.ndarray, restarts: int = 24, iters: int = 200, seed: int = 0) -> float:
    """max over unit v of |T[v, …, v]| for a symmetric tensor (equals its multilinear norm)."""
    k = T.ndim
    if k == 0:
        return float(abs(T))
    if k == 1:
        return float(np.linalg.norm(T))
    if k == 2:
        return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (T + T.T)))))
    d = T.shape[0]
    if d == 1:
        return float(abs(T.reshape(-1)[0]))

    def contract(v, times):
        out = T
        for _ in range(times):
            out = out @ v
        return out

    rng = np.random.default_rng(seed)
    starts = [np.eye(d)[i] for i in range(d)] + [np.ones(d) / math.sqrt(d)]
    starts += list(rng.standard_normal((restarts, d)))
    shift = float(np.linalg.norm(T)) * (k - 1)
    best = 0.0
    for sign in (1.0, -1.0):
        for v in starts:
            v = v / np.linalg.norm(v)
            for _ in range(iters):
                w = sign * contract(v, k - 1) + shift * v
                nw = np.linalg.norm(w)
                if nw == 0:
                    break
                w = w / nw
                if np.linalg.norm(w - v) < 1e-13:
                    v = w
                    break
                v = w
            best = max(best, abs(float(contract(v, k))))
    return best


def operator_norm(kernel: TIKernel, s, t, i: int, j: int) -> float:
    """‖K^{(i,j)}(s,t)‖ with every slot measured in the metric of the kernel."""
    if i + j > 3:
        raise UnsupportedError("operator norms are provided up to total order 3")
    s = _as_offsets(s, kernel.d)
    t = _as_offsets(t, kernel.d)
    T = kernel.derivative(s - t, i + j)
    T = normalize_slots(T, kernel.metric.inv_sqrt())
    return symmetric_tensor_norm(T)


# ---------------------------------------------------------------------------
# config

def template_from_config(cfg: dict) -> TemplateDistribution:
    kind = cfg.get("kind", "gaussian")
    if kind == "gaussian":
        return gaussian_template(float(cfg.get("sigma", 1.0)))
    if kind == "cauchy":
        return cauchy_template(float(cfg.get("scale", cfg.get("alpha", 1.0))))
    if kind in ("point", "point_mass", "dirac"):
        return point_mass_template()
    raise ConfigurationError(f"unknown template kind '{kind}' (custom templates need a Python callable)")


def kernel_from_config(cfg: dict, d: int | None = None) -> TIKernel:
    kind = cfg.get("kind")
    d = int(cfg.get("d", d or 1))
    if kind == "sinc4":
        return Sinc4Kernel(float(cfg["tau"]), d)
    if kind == "sinc":
        return SincSmoothingKernel(float(cfg["tau"]), d)
    if kind == "gaussian":
        om = cfg.get("omega")
        return GaussianKernel(np.eye(d) if om is None else np.asarray(om, dtype=float))
    if kind == "template":
        tau = float(cfg["tau"])
        nodes = int(cfg.get("nodes", 0))
        return model_kernel_from_template(template_from_config(cfg.get("template", {})), tau, d,
                                          SpectralGrid(tau, d, nodes))
    raise ConfigurationError(f"unknown kernel kind '{kind}'")
