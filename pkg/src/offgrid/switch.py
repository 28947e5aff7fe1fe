"""Kernel-switch constant between a pivot and a model translation-invariant kernel."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import EmbeddingViolation, InvalidArgument
from .kernels import (GaussianKernel, Sinc4Kernel, TemplateDistribution, TIKernel,
                      model_kernel_from_template)

PIVOT_FLOOR = 1e-12


@dataclass
class SwitchConstant:
    value: float
    pivot: dict
    model: dict
    grid: dict
    attained_at: np.ndarray

    def to_json(self) -> dict:
        return {"value": self.value, "pivot": self.pivot, "model": self.model,
                "grid": self.grid, "attained_at": np.asarray(self.attained_at).tolist()}


def default_switch_nodes(d: int) -> int:
    return 4096 if d == 1 else 256


def _pivot_halfwidth(pivot: TIKernel) -> float:
    if pivot.support_halfwidth is not None:
        return pivot.support_halfwidth
    if isinstance(pivot, GaussianKernel):
        lam = float(np.linalg.eigvalsh(pivot.omega).max())
        return math.sqrt(2 * math.log(1.0 / PIVOT_FLOOR) * lam) * 1.05
    raise InvalidArgument("pivot without a known spectral extent; pass `halfwidth`")


def switch_constant(pivot: TIKernel, model: TIKernel, nodes: int | None = None,
                    halfwidth: float | None = None, refine: bool = True) -> SwitchConstant:
    """max over the pivot spectral support of sqrt(ν_pivot / ν_model), with 0/0 = 0."""
    d = pivot.d
    if model.d != d:
        raise InvalidArgument("pivot and model dimensions differ")
    nodes = nodes or default_switch_nodes(d)
    hw = halfwidth or _pivot_halfwidth(pivot)
    axis = np.linspace(-hw, hw, nodes)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    p = pivot.spectral_density(grid)
    floor = PIVOT_FLOOR * float(p.max())
    support = p > floor
    q = model.spectral_density(grid)
    bad = support & (q <= 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise EmbeddingViolation(
            f"model spectral density vanishes at ω={grid[k].tolist()} where the pivot density is {p[k]:.3e}",
            frequency=grid[k])
    ratio = np.zeros_like(p)
    ratio[support] = np.sqrt(p[support] / q[support])
    k = int(np.argmax(ratio))
    best, at = float(ratio[k]), grid[k]

    if refine and best > 0:
        step = axis[1] - axis[0]

        def neg(w):
            w = np.clip(np.atleast_1d(w), -hw, hw)
            pv = float(pivot.spectral_density(w[None, :])[0])
            qv = float(model.spectral_density(w[None, :])[0])
            if pv <= floor or qv <= 0:
                return 0.0
            return -math.sqrt(pv / qv)
        if d == 1:
            lo, hi = max(at[0] - step, -hw), min(at[0] + step, hw)
            res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-12 * max(hw, 1.0)})
            cand, val = np.array([res.x]), -res.fun
        else:
            res = optimize.minimize(neg, at, method="Nelder-Mead",
                                    options={"xatol": 1e-10 * hw, "fatol": 1e-14, "maxiter": 4000})
            cand, val = np.clip(res.x, -hw, hw), -res.fun
        if val > best:
            best, at = float(val), cand

    return SwitchConstant(best, pivot.describe(), model.describe(),
                          {"nodes_per_axis": nodes, "halfwidth": hw, "floor": PIVOT_FLOOR, "refined": refine},
                          np.asarray(at))


def supermix_switch_constant(template: TemplateDistribution, tau: float, d: int = 1, **kw) -> SwitchConstant:
    return switch_constant(Sinc4Kernel(tau, d), model_kernel_from_template(template, tau, d), **kw)


@dataclass
class ScalingFit:
    alpha_hat: float
    intercept: float
    residual: float
    taus: np.ndarray
    values: np.ndarray
    warnings: list = field(default_factory=list)


def supersmooth_scaling_probe(template: TemplateDistribution, taus, d: int = 1, p: float = 2.0,
                              beta: float = 2.0,
                              model_factory: Callable[[float], TIKernel] | None = None,
                              pivot_factory: Callable[[float], TIKernel] | None = None) -> ScalingFit:
    """Fit log C(τ) − (d/2) log τ ≈ α (d^{1/p}/τ)^β + c over the given bandwidths."""
    taus = np.asarray(taus, dtype=float)
    if taus.size < 4 or np.any(np.diff(taus) <= 0):
        raise InvalidArgument("taus must be increasing with at least 4 entries")
    pivot_factory = pivot_factory or (lambda t: Sinc4Kernel(t, d))
    model_factory = model_factory or (lambda t: model_kernel_from_template(template, t, d))
    vals = np.array([switch_constant(pivot_factory(t), model_factory(t)).value for t in taus])
    notes = []
    diffs = np.diff(vals)
    if np.allclose(vals, vals[0], rtol=1e-12, atol=0):
        notes.append("degenerate fit: switch constant is identical for every tau")
    elif not (np.all(diffs <= 0) or np.all(diffs >= 0)):
        notes.append("switch constant is not monotone in tau (grid may be too coarse)")
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    x = (d ** (1.0 / p) / taus) ** beta
    y = np.log(vals) - 0.5 * d * np.log(taus)
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return ScalingFit(float(coef[0]), float(coef[1]), resid, taus, vals, notes)
