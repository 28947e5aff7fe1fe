"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Lines are printed as the tests run and repeated in the "acceptance criteria" section of the
terminal summary. Thresholds are taken as stated; a criterion that the implementation cannot
meet is reported as FAIL rather than relaxed.
"""
import math
import time

import numpy as np
import pytest

from offgrid.certificates import (audit_certificate, bregman_divergence, build_certificate,
                                  divergence_lower_bound)
from offgrid.errors import EmbeddingViolation
from offgrid.geometry import DiscreteMeasure, model_membership, region_statistics
from offgrid.kernels import (GaussianKernel, Sinc4Kernel, SincSmoothingKernel, SpectralGrid, gaussian_template,
                             model_kernel_from_template, point_mass_template)
from offgrid.lpc import audit_sinc4, sinc4_lpc_params
from offgrid.pipeline import ExperimentConfig, resolve, run_experiment, simulate_mixture
from offgrid.sketching import (UniformCubeLaw, draw_operator, merge_sketches, noise_level_bound, sketch_dataset,
                               sketched_noise)
from offgrid.switch import supersmooth_scaling_probe, switch_constant

FR = 2 * math.sqrt(3)


# ---------------------------------------------------------------------------
# 1. curvature constants of the sinc-4 pivot

@pytest.mark.parametrize("d", [1, 2])
def test_c1_sinc4_lpc_audit(d, verdict):
    t0 = time.perf_counter()
    rep = audit_sinc4(d, s0=1, tau=1.0, grid_density=200, trials=4000)
    elapsed = time.perf_counter() - t0
    a = rep.audited
    eps0_ok = a["eps0_hat"] >= 1 / (32 * d ** 3)
    eps2_ok = a["eps2_hat"] >= 23 / 128
    b_ok = all(a["b_hat"][k] <= (12 * d) ** (sum(k) / 2) for k in a["b_hat"])
    time_ok = elapsed < 120
    detail = (f"eps0_hat={a['eps0_hat']:.6g} vs 1/(32d^3)={1 / (32 * d ** 3):.6g} {'ok' if eps0_ok else 'BELOW'}; "
              f"eps2_hat={a['eps2_hat']:.6g} vs 23/128 {'ok' if eps2_ok else 'BELOW'}; "
              f"B_ij within (12d)^((i+j)/2): {b_ok}; {elapsed:.1f}s; "
              f"eps0_hat >= 1/(512d^3): {a['eps0_hat'] >= 1 / (512 * d ** 3)}")
    ok = verdict(f"C1 sinc-4 LPC audit d={d}", eps0_ok and eps2_ok and b_ok and time_ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 2. spectral measure of the sinc-4 kernel

def test_c2_spectral_measure(verdict):
    checks = []
    for tau in (0.5, 1.0, 2.0):
        k = Sinc4Kernel(tau, 1)
        mass = SpectralGrid(tau, 1, 2000).integrate(k.spectral_density)
        checks.append(("integral", tau, 1, abs(mass - 1.0), 1e-8))
    for d in (1, 2, 3):
        for tau in (0.5, 1.3):
            k = Sinc4Kernel(tau, d)
            peak = k.spectral_density(np.zeros((1, d)))[0]
            checks.append(("max", tau, d, abs(peak - (2 / 3) ** d * (2 * tau) ** d), 1e-10))
    bad = [c for c in checks if c[3] > c[4]]
    worst_int = max(c[3] for c in checks if c[0] == "integral")
    worst_max = max(c[3] for c in checks if c[0] == "max")
    detail = f"max |integral-1|={worst_int:.2e} (tol 1e-8); max |peak-(2/3)^d(2tau)^d|={worst_max:.2e} (tol 1e-10)"
    ok = verdict("C2 spectral measure", not bad, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 3. derivative correctness

def _kernels():
    return {
        "sinc4 d=1": Sinc4Kernel(1.0, 1),
        "sinc4 d=2": Sinc4Kernel(0.4, 2),
        "sinc d=1": SincSmoothingKernel(0.5, 1),
        "sinc d=2": SincSmoothingKernel(0.7, 2),
        "gaussian d=2": GaussianKernel(np.array([[2.0, 0.3], [0.3, 0.5]])),
        "supermix d=1": model_kernel_from_template(gaussian_template(0.8), 1.0, 1),
        "supermix d=2": model_kernel_from_template(gaussian_template(0.5), 1.0, 2),
    }


def test_c3_derivatives(verdict):
    rng = np.random.default_rng(3)
    worst_fd, worst_metric = {}, {}
    for name, k in _kernels().items():
        lam = float(np.linalg.eigvalsh(k.metric.matrix).max())
        length = 1 / math.sqrt(lam)
        h = 1e-4 * length
        rho0 = abs(k.value_at_zero)
        err = 0.0
        for _ in range(100):
            u = rng.normal(size=k.d) * 3 * length
            for order in range(1, 5):
                exact = k.derivative(u, order)
                fd = np.stack([(k.derivative(u + h * e, order - 1) - k.derivative(u - h * e, order - 1)) / (2 * h)
                               for e in np.eye(k.d)], axis=-1)
                err = max(err, np.abs(exact - fd).max() / (rho0 * lam ** (order / 2)))
        worst_fd[name] = err
        # metric against a finite-difference Hessian of the profile at 0
        hh = 1e-3 * length
        E = np.eye(k.d)
        hess = np.array([[(k.profile(hh * (E[i] + E[j])) - k.profile(hh * (E[i] - E[j]))
                           - k.profile(hh * (E[j] - E[i])) + k.profile(-hh * (E[i] + E[j]))) / (4 * hh * hh)
                          for j in range(k.d)] for i in range(k.d)])
        worst_metric[name] = float(np.abs(k.metric.matrix + hess).max() / lam)
    fd_ok = all(v < 1e-5 for v in worst_fd.values())
    metric_ok = all(v < 1e-6 for v in worst_metric.values())
    detail = (f"max rel FD error {max(worst_fd.values()):.2e} (tol 1e-5, orders 1-4, 100 offsets x "
              f"{len(worst_fd)} kernels); max rel metric error {max(worst_metric.values()):.2e} (tol 1e-6)")
    ok = verdict("C3 derivative correctness", fd_ok and metric_ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 4. certificate suite

def test_c4_certificates(verdict):
    t0 = time.perf_counter()
    parts, all_ok, informational = [], True, []
    k = Sinc4Kernel(1.0, 1)
    for s0 in (1, 2, 4):
        rep = sinc4_lpc_params(1, s0)
        x = np.arange(s0)[:, None] * rep.delta0 * FR
        signs = np.resize([1.0, -1.0], s0)
        cert = build_certificate(x, signs, k)
        audit = audit_certificate(cert, rep.r0, rep.eps0_lower, rep.eps2_lower, far_samples=10_000,
                                  near_grid_density=200)
        val, grad = cert.interpolation_residuals()
        inv = cert.system.inverse_norm
        ok = (val <= 1e-9 and grad <= 1e-9 and audit.passed and inv <= 2 and cert.rkhs_norm_sq <= 2 * s0)
        all_ok &= ok
        parts.append(f"s0={s0}: interp={max(val, grad):.1e} far_margin={audit.far_margin:.2e} "
                     f"near_margin={audit.near_margin:.1e} |inv|={inv:.4f} norm2={cert.rkhs_norm_sq:.4f}")
        grid_ok = audit_certificate(cert, rep.r0, 1 / 512, rep.eps2_lower, far_samples=10_000).passed
        informational.append(f"s0={s0} passes with eps0=1/512: {grid_ok}")
    elapsed = time.perf_counter() - t0
    all_ok &= elapsed < 60
    detail = "; ".join(parts) + f"; {elapsed:.1f}s; " + ", ".join(informational)
    ok = verdict("C4 certificate suite", all_ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 5. sketch consistency

def test_c5_sketch_consistency(verdict):
    tau = 0.5
    pop = SincSmoothingKernel(tau, 1)
    u = np.linspace(-8, 8, 401)[:, None]
    ms = [2 ** j for j in range(6, 15)]
    gaps = []
    for m in ms:
        g = [np.abs(draw_operator(UniformCubeLaw(tau, 1), point_mass_template(), m, seed=s)
                    .sketched_kernel(u, np.zeros_like(u)) - pop.profile(u)).max() for s in range(20)]
        gaps.append(float(np.mean(g)))
    slope = float(np.polyfit(np.log(ms), np.log(gaps), 1)[0])
    slope_ok = -0.65 <= slope <= -0.35

    rng = np.random.default_rng(5)
    op = draw_operator(UniformCubeLaw(tau, 1), gaussian_template(0.2), 256, seed=1)
    a, b = rng.normal(size=(CHUNKED := 9000, 1)), rng.normal(size=(7000, 1))
    merged = merge_sketches(sketch_dataset(a, op), sketch_dataset(b, op))
    whole = sketch_dataset(np.vstack([a, b]), op)
    merge_err = float(np.abs(merged.z - whole.z).max() / np.abs(whole.z).max())
    merge_ok = merge_err <= 1e-14

    op2 = draw_operator(UniformCubeLaw(tau, 1), gaussian_template(0.2), 256, seed=1)
    det_ok = (np.array_equal(op.omegas, op2.omegas) and np.array_equal(op.weights, op2.weights)
              and np.array_equal(sketch_dataset(a, op).z, sketch_dataset(a, op2).z))
    detail = (f"slope={slope:.3f} (want -0.5+-0.15) over m=2^6..2^14; merge rel err={merge_err:.1e} "
              f"({CHUNKED}+7000 samples); bit-identical redraw: {det_ok}")
    ok = verdict("C5 sketch consistency", slope_ok and merge_ok and det_ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 6. noise-level coverage

def test_c6_noise_coverage(verdict):
    mu0 = DiscreteMeasure([0.2, 0.5, 0.3], [[0.0], [1.0], [2.0]])
    cfg = ExperimentConfig(weights=[0.2, 0.5, 0.3], positions=[0.0, 1.0, 2.0], m=256, alpha=0.2)
    res = resolve(cfg)
    n, m = 10_000, 256
    bound = noise_level_bound(0.2, m, n, res.tau, res.law, 1.0, 1.0).value
    hits, norms = 0, []
    for r in range(200):
        op = draw_operator(res.law, res.template, m, seed=r)
        sk = sketch_dataset(simulate_mixture(mu0, res.template, n, [r, n, 6]), op)
        g = sketched_noise(op, sk, mu0)
        norms.append(g)
        hits += g <= bound
    detail = (f"coverage {hits}/200 = {hits / 200:.3f} (need >= 0.80); bound={bound:.4g}, "
              f"median |Gamma|={np.median(norms):.4g}; C1=C2=1 configured defaults")
    ok = verdict("C6 noise-level coverage", hits >= 160, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 7. end-to-end S2Mix recovery

def test_c7_s2mix_recovery(verdict, tmp_path):
    t0 = time.perf_counter()
    cfg = ExperimentConfig(weights=[0.2, 0.5, 0.3], positions=[0.0, 1.0, 2.0],
                           template={"kind": "gaussian", "sigma": 2.0, "relative": True}, tau="auto", d=1,
                           n_list=[1000, 10_000, 100_000, 1_000_000], m=512, alpha=0.5, schedule={"kind": "log"},
                           seeds=list(range(20)), output_dir=str(tmp_path / "s2mix"))
    rec = run_experiment(cfg)
    elapsed = time.perf_counter() - t0
    cells = rec.cells
    ok_cells = [c for c in cells if c["status"] == "ok"]
    errors = len(cells) - len(ok_cells)
    converged = [c for c in ok_cells if c["converged"]]
    a_ok = all(c["near_optimal"] for c in converged) and len(converged) > 0
    b_ok = all(c["bounds_hold"] for c in ok_cells)
    ns = sorted({c["n"] for c in ok_cells})
    med = [float(np.median([c["max_near_error"] for c in ok_cells if c["n"] == n])) for n in ns]
    slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0])
    c_ok = all(b <= a for a, b in zip(med, med[1:])) and slope <= -0.2
    loc_bad = [(c["n"], c["seed"], c["localization"], c["r_n"]) for c in ok_cells
               if c["n"] >= 10_000 and not c["localization"] <= c["r_n"]]
    d_ok = not loc_bad
    time_ok = elapsed < 1800
    membership = rec.resolved["membership"]
    detail = (f"tau={rec.resolved['tau']:.6g} member={membership}; cells={len(cells)} errors={errors} "
              f"converged={len(converged)}; (a) near-optimal={a_ok}; (b) bounds hold={b_ok}; "
              f"(c) medians={['%.3g' % v for v in med]} slope={slope:.3f}; (d) localization<=r_n "
              f"for n>=1e4: {d_ok} ({len(loc_bad)} misses); {elapsed / 60:.1f} min")
    ok = verdict("C7 end-to-end S2Mix recovery",
                 a_ok and b_ok and c_ok and d_ok and time_ok and errors == 0 and membership, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 8. kernel switch

def test_c8_kernel_switch(verdict):
    kernels = [Sinc4Kernel(1.0, 1), Sinc4Kernel(0.5, 2), SincSmoothingKernel(0.5, 1), GaussianKernel(np.eye(1)),
               model_kernel_from_template(gaussian_template(1.0), 1.0, 1)]
    ones = []
    for k in kernels:
        try:
            ones.append(switch_constant(k, k).value == 1.0)
        except EmbeddingViolation:
            ones.append(False)
    self_ok = all(ones)
    model = model_kernel_from_template(gaussian_template(1.0), 1.0, 1)
    try:
        switch_constant(GaussianKernel(np.eye(1)), model)
        gauss_raises = False
    except EmbeddingViolation:
        gauss_raises = True
    sinc_val = switch_constant(Sinc4Kernel(1.0, 1), model).value
    finite_ok = math.isfinite(sinc_val)
    fit = supersmooth_scaling_probe(gaussian_template(1.0), [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    alpha_ok = 0.4 <= fit.alpha_hat <= 0.6
    small = supersmooth_scaling_probe(gaussian_template(1.0), [0.1, 0.15, 0.2, 0.3, 0.4])
    detail = (f"self-switch == 1 for all: {self_ok}; Gaussian pivot raises: {gauss_raises}; "
              f"sinc-4 pivot value={sinc_val:.6g}; alpha_hat={fit.alpha_hat:.4f} over tau 0.4..1.0 "
              f"(want [0.4, 0.6]); alpha_hat over tau 0.1..0.4 = {small.alpha_hat:.4f}")
    ok = verdict("C8 kernel-switch sanity", self_ok and gauss_raises and finite_ok and alpha_ok, detail)
    assert ok, detail


# ---------------------------------------------------------------------------
# 9. Bregman lower bound

def test_c9_bregman_lower_bound(verdict):
    k = Sinc4Kernel(1.0, 1)
    rep = sinc4_lpc_params(1, 3)
    g = k.metric
    x0 = np.arange(3)[:, None] * rep.delta0 * FR
    mu0 = DiscreteMeasure([0.5, -0.3, 0.2], x0)
    cert = build_certificate(x0, np.sign(mu0.weights), k)
    radii = [0.05, 0.1, 0.2, rep.r0]
    audits = {r: audit_certificate(cert, rep.r0, rep.eps2_lower * r ** 2, rep.eps2_lower) for r in radii}
    audited = all(a.passed for a in audits.values())
    rng = np.random.default_rng(9)
    worst, violations = np.inf, 0
    span = (x0[0, 0] - 20 * FR, x0[-1, 0] + 20 * FR)
    for trial in range(500):
        r = radii[trial % len(radii)]
        parts = [mu0]
        for _ in range(rng.integers(1, 5)):
            j = rng.integers(3)
            off = rng.normal(scale=0.3 * FR) if rng.random() < 0.7 else rng.uniform(-3, 3) * FR
            parts.append(DiscreteMeasure([rng.normal(scale=0.3)], [[x0[j, 0] + off]]))
        for _ in range(rng.integers(0, 3)):
            parts.append(DiscreteMeasure([rng.normal(scale=0.2)], [[rng.uniform(*span)]]))
        mu = parts[0]
        for p in parts[1:]:
            mu = mu.plus(p)
        if rng.random() < 0.3:
            mu = DiscreteMeasure(mu.weights * rng.uniform(0.5, 1.5, len(mu)), mu.positions)
        div = bregman_divergence(mu, mu0, cert)
        lb = divergence_lower_bound(mu, x0, r, rep.eps2_lower, g)
        far, _ = region_statistics(mu, x0, mu0.weights, r, g)
        assert lb >= rep.eps2_lower * r ** 2 * far - 1e-15
        worst = min(worst, div - lb)
        violations += div < lb - 1e-12
    detail = (f"certificate audited at eps0=eps2*r^2 for r in {radii}: {audited}; "
              f"violations {violations}/500; min(divergence - bound)={worst:.3e}")
    ok = verdict("C9 Bregman lower bound", audited and violations == 0, detail)
    assert ok, detail


def test_c9_membership_of_reference(verdict):
    """The reference measure used above lies in the separated class."""
    rep = sinc4_lpc_params(1, 3)
    x0 = np.arange(3)[:, None] * rep.delta0 * FR
    assert model_membership(DiscreteMeasure([0.5, -0.3, 0.2], x0), 3, rep.delta0 * (1 - 1e-12),
                            Sinc4Kernel(1.0, 1).metric)
