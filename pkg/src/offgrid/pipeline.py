"""Synthetic mixture experiments: simulate, sketch, estimate, and check the error bounds."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .errors import InvalidArgument, OffgridError, UnsupportedError
from .geometry import DiscreteMeasure, ParameterBox, min_separation, model_membership
from .kernels import Sinc4Kernel, TemplateDistribution, template_from_config
from .lpc import sinc4_lpc_params
from .sketching import (draw_operator, law_from_config, noise_level_bound, sketch_dataset, sketch_size,
                        sketched_noise)
from .solver import (BlassoProblem, BoundConstants, SolveConfig, bound_verdict, calibrate_kappa,
                     effective_radius, near_optimality, radius_constant, sketched_c_kappa, solve)
from .switch import supermix_switch_constant

TAU_DENOMINATOR = 147.77
AUTO_TAU_FACTOR = 0.99


def tau_max(mu0: DiscreteMeasure, d: int | None = None) -> float:
    """Largest bandwidth for which μ⁰ is Δ0-separated in the sinc-4 Fisher-Rao metric."""
    d = d or mu0.d
    s0 = len(mu0)
    if s0 < 2:
        warnings.warn("tau_max is unbounded for fewer than 2 atoms", RuntimeWarning, stacklevel=2)
        return math.inf
    x = mu0.positions
    gap = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    gap[np.diag_indices(s0)] = np.inf
    return float(gap.min() / (TAU_DENOMINATOR * s0 ** 0.25 * d ** 1.75))


def simulate_mixture(mu0: DiscreteMeasure, template: TemplateDistribution, n: int, seed) -> np.ndarray:
    """n i.i.d. draws from Σ a_k φ(· − x_k)."""
    w = np.asarray(mu0.weights)
    if np.any(w <= 0) or abs(w.sum() - 1) > 1e-9:
        raise InvalidArgument("mixture weights must be positive and sum to 1")
    if template.sampler is None:
        raise UnsupportedError(f"template '{template.name}' has no sampler")
    if n == 0:
        return np.zeros((0, mu0.d))
    rng = np.random.default_rng(seed)
    comp = rng.choice(len(w), size=n, p=w)
    return mu0.positions[comp] + template.sample(rng, n, mu0.d)


# ---------------------------------------------------------------------------
# configuration

@dataclass
class ExperimentConfig:
    weights: list
    positions: list
    template: dict = field(default_factory=lambda: {"kind": "gaussian", "sigma": 2.0, "relative": True})
    tau: float | str = "auto"
    d: int = 1
    n_list: list = field(default_factory=lambda: [1000, 10000])
    m: int | str = 512
    alpha: float = 0.5
    schedule: dict = field(default_factory=lambda: {"kind": "log"})
    seeds: list = field(default_factory=lambda: list(range(5)))
    kappa_preset: str | float = "s2mix"
    law: str = "uniform"
    c1: float = 1.0
    c2: float = 1.0
    c_pivot: float = 1.0
    box_margin: float | None = None
    solve: dict = field(default_factory=dict)
    output_dir: str | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(len(self.weights), -1).tolist()
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1) > 1e-9:
            raise InvalidArgument("mixture weights must be positive and sum to 1")
        if len(self.positions[0]) != self.d:
            raise InvalidArgument("positions do not match d")
        if not 0 < self.alpha < 1:
            raise InvalidArgument("alpha must lie in (0, 1)")
        if any(int(n) < 1 for n in self.n_list):
            raise InvalidArgument("sample sizes must be positive")
        if isinstance(self.seeds, int):
            self.seeds = list(range(self.seeds))

    @classmethod
    def from_json(cls, obj: dict | str | Path) -> "ExperimentConfig":
        if isinstance(obj, (str, Path)) and Path(obj).exists():
            obj = json.loads(Path(obj).read_text())
        elif isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj)
        if "mu0" in obj:
            mu0 = DiscreteMeasure.from_json(obj.pop("mu0"))
            obj["weights"], obj["positions"] = mu0.weights.tolist(), mu0.positions.tolist()
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise InvalidArgument(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        body = {k: v for k, v in self.to_json().items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()

    @property
    def mu0(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.weights, self.positions)


@dataclass
class Resolved:
    """Quantities fixed by the configuration before any sampling."""

    mu0: DiscreteMeasure
    tau: float
    tau_max: float
    template: TemplateDistribution
    law: object
    box: ParameterBox
    c_switch: float
    lpc: dict
    constants: BoundConstants
    c_kappa: float
    c_d: float
    m: int


def resolve(config: ExperimentConfig) -> Resolved:
    mu0, d, s0 = config.mu0, config.d, len(config.weights)
    tmax = tau_max(mu0, d)
    if config.tau == "auto":
        if not math.isfinite(tmax):
            raise InvalidArgument("tau = 'auto' needs at least 2 atoms; give tau explicitly")
        tau = AUTO_TAU_FACTOR * tmax
    else:
        tau = float(config.tau)
        if tau <= 0:
            raise InvalidArgument("tau must be positive")
        if tau > tmax:
            raise InvalidArgument(
                f"bandwidth tau = {tau:.6g} exceeds tau_max = {tmax:.6g}; the bandwidth condition requires "
                f"tau <= min gap / ({TAU_DENOMINATOR} s0^(1/4) d^(7/4)) so that the target is separated "
                "enough for the sinc-4 pivot")
    tcfg = dict(config.template)
    if tcfg.pop("relative", False):
        for key in ("sigma", "scale"):
            if key in tcfg:
                tcfg[key] = float(tcfg[key]) * tau
    template = template_from_config(tcfg)
    law = law_from_config(config.law, tau, d)
    if config.box_margin is not None:
        margin = float(config.box_margin)
    elif s0 > 1:
        margin = 0.25 * min_separation(mu0, Sinc4Kernel(tau, d).metric) * 2 * math.sqrt(3) * tau
    else:
        margin = 100 * tau
    box = ParameterBox.around(mu0.positions, margin)
    lpc = sinc4_lpc_params(d, s0)
    csw = supermix_switch_constant(template, tau, d).value
    if config.kappa_preset == "s2mix":
        ck = sketched_c_kappa(csw, config.c_pivot)
    elif isinstance(config.kappa_preset, (int, float)) and config.kappa_preset > 0:
        ck = float(config.kappa_preset)
    else:
        raise InvalidArgument("kappa_preset must be 's2mix' or a positive c_kappa; the pipeline observes "
                              "sketched samples, so population presets do not apply")
    constants = BoundConstants("sketched", csw, ck, lpc.eps0_lower, lpc.eps2_lower, lpc.r0, config.c_pivot)
    m = int(config.m) if config.m != "auto" else _auto_m(s0, d, box, tau, config.alpha)
    return Resolved(mu0, tau, tmax, template, law, box, csw, lpc.to_json(), constants, ck,
                    radius_constant(constants), m)


def _auto_m(s0, d, box, tau, alpha) -> int:
    return sketch_size(s0, d, box.diameter(Sinc4Kernel(tau, d).metric), alpha)


# ---------------------------------------------------------------------------
# runs

@dataclass
class RunRecord:
    config_digest: str
    config: dict
    resolved: dict
    cells: list
    environment: dict

    def to_json(self) -> dict:
        return asdict(self)


CSV_FIELDS = ["n", "seed", "status", "converged", "near_optimal", "kappa", "gamma_bound", "gamma_empirical",
              "r_n", "precondition_ok", "far_mass", "far_bound", "max_near_error", "near_bound",
              "localization", "bounds_hold", "atoms", "seconds"]


def s2mix_bounds(c_pivot: float, c_switch: float, c_alpha_m: float, n: int, r: float, s0: int):
    """Far and near ceilings for sketched mixtures, written with δ_n² = r² √n."""
    scale = c_pivot * c_switch * c_alpha_m / (r ** 2 * math.sqrt(n)) * math.sqrt(s0)
    return 512 / 69 * scale, 1536 / 69 * scale


def supermix_bounds(c_switch: float, c_alpha: float, tau: float, d: int, n: int, r: float, s0: int):
    """Far and near ceilings for population mixtures with sinc smoothing."""
    scale = math.sqrt(2) * c_switch * c_alpha * tau ** (-d / 2) / (r ** 2 * math.sqrt(n)) * math.sqrt(s0)
    return 256 / 23 * scale, 768 / 23 * scale


def run_cell(config: ExperimentConfig, res: Resolved, n: int, seed: int) -> dict:
    t0 = time.perf_counter()
    s0 = len(res.mu0)
    cell = {"n": int(n), "seed": int(seed)}
    try:
        op = draw_operator(res.law, res.template, res.m, seed)
        samples = simulate_mixture(res.mu0, res.template, n, [int(seed), int(n)])
        sk = sketch_dataset(samples, op, seed)
        nb = noise_level_bound(config.alpha, res.m, n, res.tau, res.law, config.c1, config.c2)
        gamma = nb.value
        kappa = calibrate_kappa(gamma, s0, res.c_kappa)
        problem = BlassoProblem.sketched(op, sk, kappa, res.box)
        mu_hat, trace = solve(problem, SolveConfig(**{"merge_radius": res.constants.r0 / 10, **config.solve}))
        r, _ = effective_radius(n, config.schedule)
        far_b, near_b = s2mix_bounds(config.c_pivot, res.c_switch, nb.c_alpha_m, n, r, s0)
        report = bound_verdict(mu_hat, res.mu0, r, gamma, s0, res.constants, problem.metric, strict=False,
                               far_bound=far_b, near_bound=near_b)
        generic = bound_verdict(mu_hat, res.mu0, r, gamma, s0, res.constants, problem.metric, strict=False)
        cell.update({
            "status": "ok", "converged": trace.converged, "near_optimal": near_optimality(problem, mu_hat, res.mu0),
            "kappa": kappa, "gamma_bound": gamma, "c_alpha_m": nb.c_alpha_m,
            "gamma_empirical": sketched_noise(op, sk, res.mu0), "r_n": r,
            "precondition_ok": report.precondition_ok, "precondition_note": report.precondition_note,
            "far_mass": report.far_mass, "far_bound": report.far_bound,
            "near_errors": report.near_errors, "max_near_error": max(report.near_errors),
            "near_bound": report.near_bound, "localization": report.localization,
            "bounds_hold": report.passed, "generic_bounds_hold": generic.passed,
            "report": report.to_json(), "mu_hat": mu_hat.to_json(), "atoms": len(mu_hat),
            "objectives": trace.objectives, "iterations": trace.iterations,
        })
    except OffgridError as exc:
        cell.update({"status": "error", "error": f"{type(exc).__name__}: {exc}"})
    cell["seconds"] = time.perf_counter() - t0
    return cell


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("OFFGRID_THREADS", "1")))
    except ValueError:
        return 1


def environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "platform": platform.platform(), "threads": _threads()}


def run_experiment(config: ExperimentConfig) -> RunRecord:
    res = resolve(config)
    tasks = [(int(n), int(s)) for n in config.n_list for s in config.seeds]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        cells = list(pool.map(lambda ns: run_cell(config, res, *ns), tasks))
    resolved = {
        "tau": res.tau, "tau_max": res.tau_max, "template": res.template.describe(), "law": res.law.describe(),
        "box": [res.box.lower.tolist(), res.box.upper.tolist()], "c_switch": res.c_switch,
        "c_kappa": res.c_kappa, "c_d": res.c_d, "m": res.m, "lpc": res.lpc,
        "constants": asdict(res.constants),
        "membership": model_membership(res.mu0, len(res.mu0), res.lpc["delta0"], Sinc4Kernel(res.tau, config.d).metric)
        if len(res.mu0) > 1 else True,
        "flags": ["C1, C2 and C'_pivot are configured defaults, not derived constants"],
    }
    record = RunRecord(config.digest(), config.to_json(), resolved, cells, environment())
    if config.output_dir:
        write_record(record, config.output_dir)
    return record


def write_record(record: RunRecord, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "record.json").write_text(json.dumps(record.to_json(), indent=1, default=_json_default))
    with open(out / "cells.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for cell in record.cells:
            writer.writerow(cell)
    return out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def summarize(record: RunRecord) -> dict:
    """Median max-near-error per n and the log-log slope across n."""
    ok = [c for c in record.cells if c.get("status") == "ok"]
    ns = sorted({c["n"] for c in ok})
    med = [float(np.median([c["max_near_error"] for c in ok if c["n"] == n])) for n in ns]
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0]) if len(ns) >= 2 and min(med) > 0 else float("nan")
    return {"n": ns, "median_max_near_error": med, "slope": slope,
            "all_near_optimal": all(c["near_optimal"] for c in ok if c["converged"]),
            "all_bounds_hold": all(c["bounds_hold"] for c in ok),
            "errors": [c for c in record.cells if c.get("status") != "ok"]}
