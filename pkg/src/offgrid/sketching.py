"""Random Fourier feature sketches of mixture data and the sketched forward operator."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidArgument
from .geometry import DiscreteMeasure
from .kernels import Sinc4Kernel, TemplateDistribution, irwin_hall4_density, template_from_config

CHUNK = 8192


# ---------------------------------------------------------------------------
# sketching laws

class SketchingLaw:
    tau: float
    d: int
    name: str

    def density(self, omega) -> np.ndarray:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        raise NotImplementedError

    @property
    def sup_u_ratio(self) -> float:
        """‖U_τ/Λ‖_∞ over the cube."""
        raise NotImplementedError

    @property
    def c_lambda(self) -> float:
        """C_Λ = sup over the cube of f⁽⁴⁾_τ / Λ."""
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.name, "tau": self.tau, "d": self.d}


@dataclass(frozen=True)
class IrwinHallLaw(SketchingLaw):
    """Λ = f⁽⁴⁾_τ: per-axis sum of four uniforms on [−1/(4τ), 1/(4τ)]."""
    tau: float
    d: int = 1
    name: str = field(default="irwin_hall", init=False)

    def density(self, omega):
        omega = np.atleast_2d(omega)
        return np.prod(2 * self.tau * irwin_hall4_density(2 * self.tau * omega + 2), axis=-1)

    def sample(self, rng, m):
        half = 1.0 / (4 * self.tau)
        return rng.uniform(-half, half, size=(m, self.d, 4)).sum(axis=-1)

    @property
    def sup_u_ratio(self):
        # f⁽⁴⁾ vanishes on the boundary of the cube while U_τ does not
        return math.inf

    @property
    def c_lambda(self):
        return 1.0


@dataclass(frozen=True)
class UniformCubeLaw(SketchingLaw):
    """Λ uniform on [−1/τ, 1/τ]^d, i.e. U_τ normalised to a probability density."""
    tau: float
    d: int = 1
    name: str = field(default="uniform", init=False)

    def density(self, omega):
        omega = np.atleast_2d(omega)
        inside = np.all(np.abs(omega) <= 1.0 / self.tau, axis=-1)
        return np.where(inside, (self.tau / 2) ** self.d, 0.0)

    def sample(self, rng, m):
        return rng.uniform(-1.0 / self.tau, 1.0 / self.tau, size=(m, self.d))

    @property
    def sup_u_ratio(self):
        return self.tau ** -self.d

    @property
    def c_lambda(self):
        return (8.0 / 3.0) ** self.d


def law_from_config(cfg: dict | str, tau: float, d: int) -> SketchingLaw:
    kind = cfg if isinstance(cfg, str) else cfg.get("kind", "uniform")
    if kind in ("irwin_hall", "sinc4", "f4"):
        return IrwinHallLaw(tau, d)
    if kind == "uniform":
        return UniformCubeLaw(tau, d)
    raise ConfigurationError(f"unknown sketching law '{kind}'")


def u_tau(omega, tau: float) -> np.ndarray:
    omega = np.atleast_2d(omega)
    d = omega.shape[-1]
    inside = np.all(np.abs(omega) <= 1.0 / tau, axis=-1)
    return np.where(inside, 2.0 ** -d, 0.0)


# ---------------------------------------------------------------------------
# operator

@dataclass(frozen=True, eq=False)
class SketchOperator:
    omegas: np.ndarray          # (m, d)
    weights: np.ndarray         # W(ω_i) = sqrt(U_τ/Λ)(ω_i)
    template_cf: np.ndarray     # F[φ](ω_i), complex
    pivot_weights: np.ndarray   # sqrt(f⁽⁴⁾_τ/Λ)(ω_i)
    tau: float
    seed: int | None
    law: dict

    @property
    def m(self) -> int:
        return self.omegas.shape[0]

    @property
    def d(self) -> int:
        return self.omegas.shape[1]

    @property
    def feature_scale(self) -> np.ndarray:
        """W(ω_i)·F[φ](ω_i)/√m, the coefficient of e^{−iω_iᵀx} in F δ_x."""
        return self.weights * self.template_cf / math.sqrt(self.m)

    def atom_matrix(self, positions) -> np.ndarray:
        """(m, k) matrix whose columns are F δ_{x_k}."""
        x = np.atleast_2d(np.asarray(positions, dtype=float))
        if x.shape[1] != self.d:
            x = x.reshape(-1, self.d)
        return self.feature_scale[:, None] * np.exp(-1j * (self.omegas @ x.T))

    def forward(self, mu: DiscreteMeasure) -> np.ndarray:
        if len(mu) == 0:
            return np.zeros(self.m, dtype=complex)
        return self.atom_matrix(mu.positions) @ mu.weights

    def sketched_kernel(self, s, t, complex_values: bool = False):
        """(1/m) Σ φ_{ω_i}(s) conj(φ_{ω_i}(t)) = ⟨F δ_s, F δ_t⟩."""
        s = np.atleast_2d(np.asarray(s, dtype=float)).reshape(-1, self.d)
        t = np.atleast_2d(np.asarray(t, dtype=float)).reshape(-1, self.d)
        amp = np.abs(self.weights * self.template_cf) ** 2 / self.m
        phase = (s - t) @ self.omegas.T
        val = np.exp(-1j * phase) @ amp if complex_values else np.cos(phase) @ amp
        return val if val.size > 1 else val.item()

    def pivot_kernel(self, offsets):
        """Sketched sinc-4 kernel (1/m) Σ (f⁽⁴⁾/Λ)(ω_i) cos(ω_iᵀu)."""
        u = np.atleast_2d(np.asarray(offsets, dtype=float)).reshape(-1, self.d)
        return np.cos(u @ self.omegas.T) @ (self.pivot_weights ** 2) / self.m

    def switch_ratios(self) -> np.ndarray:
        """r_i with ψ_{ω_i} = r_i φ_{ω_i}; |r_i| is the pointwise kernel-switch ratio."""
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(self.weights > 0, self.pivot_weights / (self.weights * self.template_cf), 0.0)
        return r

    def to_json(self) -> dict:
        return {
            "m": self.m, "tau": self.tau, "seed": self.seed, "law": self.law,
            "omegas": self.omegas.tolist(), "weights": self.weights.tolist(),
            "pivot_weights": self.pivot_weights.tolist(),
            "template_cf": [[float(c.real), float(c.imag)] for c in self.template_cf],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SketchOperator":
        om = np.asarray(obj["omegas"], dtype=float)
        cf = np.asarray(obj["template_cf"], dtype=float)
        pw = obj.get("pivot_weights")
        if pw is None:
            law = law_from_config(obj["law"], obj["tau"], om.shape[1])
            pw = np.sqrt(Sinc4Kernel(obj["tau"], om.shape[1]).spectral_density(om) / law.density(om))
        return cls(om, np.asarray(obj["weights"], dtype=float), cf[:, 0] + 1j * cf[:, 1],
                   np.asarray(pw, dtype=float), float(obj["tau"]), obj.get("seed"), obj["law"])


def draw_operator(law: SketchingLaw, template: TemplateDistribution, m: int, seed: int | None) -> SketchOperator:
    if m < 1:
        raise InvalidArgument("sketch size must be at least 1")
    rng = np.random.default_rng(seed)
    om = law.sample(rng, m).reshape(m, law.d)
    dens = law.density(om)
    if np.any(dens <= 0):
        raise ConfigurationError("sketching law has zero density at a drawn frequency")
    weights = np.sqrt(u_tau(om, law.tau) / dens)
    cf = np.asarray(template.characteristic(om), dtype=complex).reshape(m)
    pivot = np.sqrt(Sinc4Kernel(law.tau, law.d).spectral_density(om) / dens)
    desc = {**law.describe(), "template": template.describe()}
    return SketchOperator(om, weights, cf, pivot, law.tau, seed, desc)


# ---------------------------------------------------------------------------
# data sketches

@dataclass(frozen=True, eq=False)
class SketchVector:
    z: np.ndarray
    n: int
    seed: int | None = None
    digest: str | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.z)):
            raise InvalidArgument("sketch has non-finite entries")


def dataset_digest(samples: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(samples, dtype=np.float64).tobytes()).hexdigest()


def empirical_characteristic_sums(samples: np.ndarray, omegas: np.ndarray, chunk: int = CHUNK) -> np.ndarray:
    """Σ_j e^{−iω_iᵀz_j}, accumulated over fixed-size chunks in order."""
    acc = np.zeros(len(omegas), dtype=complex)
    for a in range(0, len(samples), chunk):
        phase = samples[a:a + chunk] @ omegas.T
        acc += np.cos(phase).sum(axis=0) - 1j * np.sin(phase).sum(axis=0)
    return acc


def sketch_dataset(samples, op: SketchOperator, seed: int | None = None) -> SketchVector:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples.reshape(-1, op.d)
    if samples.shape[0] == 0:
        raise InvalidArgument("cannot sketch an empty dataset")
    if samples.shape[1] != op.d:
        raise InvalidArgument("sample dimension does not match the operator")
    sums = empirical_characteristic_sums(samples, op.omegas)
    z = op.weights * sums / (samples.shape[0] * math.sqrt(op.m))
    return SketchVector(z, samples.shape[0], seed, dataset_digest(samples))


def merge_sketches(a: SketchVector, b: SketchVector) -> SketchVector:
    n = a.n + b.n
    return SketchVector((a.n * a.z + b.n * b.z) / n, n)


def sketch_to_json(op: SketchOperator, sk: SketchVector) -> dict:
    out = op.to_json()
    out.update({"z": [[float(c.real), float(c.imag)] for c in sk.z], "n": sk.n,
                "dataset_sha256": sk.digest})
    return out


def sketch_from_json(obj: dict | str) -> tuple[SketchOperator, SketchVector]:
    if isinstance(obj, str):
        obj = json.loads(obj)
    op = SketchOperator.from_json(obj)
    z = np.asarray(obj["z"], dtype=float)
    return op, SketchVector(z[:, 0] + 1j * z[:, 1], int(obj["n"]), obj.get("seed"), obj.get("dataset_sha256"))


# ---------------------------------------------------------------------------
# constants

def sketch_size(s0: int, d: int, box_diameter: float, alpha: float, c_sketch: float = 1.0) -> int:
    if not 0 < alpha < 1 or s0 < 1:
        raise InvalidArgument("need alpha in (0,1) and s0 >= 1")
    rhs = c_sketch * max(d, math.log(s0)) * s0 * math.log(max(1.0, box_diameter) * s0 / alpha)
    return max(1, math.ceil(rhs - 1e-12))


@dataclass(frozen=True)
class Sinc4SketchConstants:
    N: float
    C1: float
    C2: float

    def c_sketch(self, C: float = 1.0) -> float:
        return 2 * C * max(self.C1, self.C2)

    def m0(self, s0: int, d: int, alpha: float, C: float = 1.0) -> float:
        return C * s0 * (self.C1 * math.log(s0) * math.log(s0 / alpha)
                         + self.C2 * math.log((s0 * self.N) ** d / alpha))


def sinc4_sketch_constants(d: int, c_lambda: float = 1.0, box_diameter: float = 1.0) -> Sinc4SketchConstants:
    r12d = math.sqrt(12 * d)
    q = (128 / 23) ** 2
    N = (box_diameter * 32 * math.sqrt(12) * math.sqrt(c_lambda) * d ** 3.5
         + (128 / 23) * (12 * math.sqrt(12) * c_lambda * d ** 0.5 + math.sqrt(c_lambda) * 12 * d))
    C1 = (1 + 12 * d) * c_lambda * (1024 * d ** 6 * (2 + r12d) + q * (1 + r12d + 12 * d))
    C2 = c_lambda * (1024 * d ** 6 + 32 * d ** 3 * math.sqrt(1 + 12 * d) + q * 144 * d ** 2
                     + (128 / 23) * 12 * d * math.sqrt(1 + 12 * d))
    return Sinc4SketchConstants(N, C1, C2)


def tail_bound_levels(d: int, c_lambda: float) -> tuple:
    if not math.isfinite(c_lambda):
        raise InvalidArgument("C_Lambda must be finite")
    return tuple(math.sqrt(c_lambda) * math.sqrt(12 * d) ** r for r in range(4))


def pivot_feature_derivative_norms(op: SketchOperator, order: int) -> np.ndarray:
    """‖ψ_ω^{(order)}‖ in metric units: sqrt(f⁽⁴⁾/Λ)(ω)·(2√3 τ ‖ω‖)^order."""
    return op.pivot_weights * (2 * math.sqrt(3) * op.tau * np.linalg.norm(op.omegas, axis=1)) ** order


@dataclass(frozen=True)
class NoiseBound:
    value: float            # C_{α,m}/√n
    c_alpha_m: float
    population_limit: float   # C_{α/2} τ^{−d/2}, the m → ∞ limit of C_{α,m}
    remark_limit: float       # C_{α/2} (4/τ)^{d/2}
    population_constant: float  # C_α τ^{−d/2}
    constants: dict


def c_alpha(alpha: float, C1: float = 1.0, C2: float = 1.0) -> float:
    return 2 * math.sqrt(1 + C1 * math.log(C2 / alpha))


def noise_level_bound(alpha: float, m: int, n: int, tau: float, law: SketchingLaw,
                      C1: float = 1.0, C2: float = 1.0) -> NoiseBound:
    if not 0 < alpha < 1 or m < 1 or n < 1:
        raise InvalidArgument("need alpha in (0,1), m >= 1, n >= 1")
    d = law.d
    first = tau ** -d + law.sup_u_ratio * math.log(2 / alpha) / (2 * math.sqrt(m))
    second = 1 + C1 * math.log(2 * C2 / alpha)
    cam = 2 * math.sqrt(first * second)
    half = c_alpha(alpha / 2, C1, C2)
    return NoiseBound(
        value=cam / math.sqrt(n), c_alpha_m=cam,
        population_limit=half * tau ** (-d / 2),
        remark_limit=half * (4 / tau) ** (d / 2),
        population_constant=c_alpha(alpha, C1, C2) * tau ** (-d / 2),
        constants={"C1": C1, "C2": C2, "flag": "universal constants C1, C2 are configured defaults"},
    )


def population_noise_bound(alpha: float, n: int, tau: float, d: int, C1: float = 1.0, C2: float = 1.0) -> float:
    return c_alpha(alpha, C1, C2) * tau ** (-d / 2) / math.sqrt(n)


def sketched_noise(op: SketchOperator, sk: SketchVector, mu0: DiscreteMeasure) -> float:
    """‖z − F_sketch μ⁰‖ for a synthetic dataset with known μ⁰."""
    return float(np.linalg.norm(sk.z - op.forward(mu0)))


def operator_from_config(cfg: dict, seed: int | None = None) -> SketchOperator:
    tau = float(cfg["tau"])
    d = int(cfg.get("d", 1))
    law = law_from_config(cfg.get("law", "uniform"), tau, d)
    template = template_from_config(cfg.get("template", {"kind": "gaussian", "sigma": 1.0}))
    return draw_operator(law, template, int(cfg["m"]), seed if seed is not None else cfg.get("seed"))
