import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from offgrid.certificates import (assemble_upsilon, audit_certificate, bregman_divergence, build_certificate,
                                  build_localizing_certificate, build_sketched_certificate, divergence_lower_bound)
from offgrid.errors import IllPosedError, InvalidArgument
from offgrid.geometry import DiscreteMeasure
from offgrid.kernels import GaussianKernel, Sinc4Kernel, point_mass_template
from offgrid.lpc import sinc4_lpc_params
from offgrid.sketching import IrwinHallLaw, UniformCubeLaw, draw_operator

FR = 2 * math.sqrt(3)  # Euclidean length of one Fisher-Rao unit for sinc-4 at tau = 1


def spaced(count, fr_gap):
    return np.arange(count)[:, None] * fr_gap * FR


def test_single_point_system_is_identity():
    for k in (Sinc4Kernel(1.0, 2), GaussianKernel(np.array([[2.0, 0.1], [0.1, 1.0]]))):
        sys = assemble_upsilon([[0.3, -0.2]], k)
        assert np.allclose(sys.upsilon_tilde, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("s0", [1, 2, 4])
def test_separated_system_inverse_bound(s0):
    delta0 = sinc4_lpc_params(1, s0).delta0
    sys = assemble_upsilon(spaced(s0, delta0), Sinc4Kernel(1.0, 1))
    assert sys.inverse_norm <= 2
    assert np.allclose(np.diag(sys.upsilon_tilde), 1.0, atol=1e-12)
    assert np.array_equal(sys.upsilon, sys.upsilon.T)


def test_system_matches_feature_gram(rng):
    """Υ is the Gram matrix of (k_x, -∂k_x) features; check with finite differences of the kernel."""
    k = Sinc4Kernel(1.0, 2)
    x = rng.normal(size=(3, 2)) * 4
    sys = assemble_upsilon(x, k)
    h = 1e-4

    def feat_inner(i, a, j, b):
        # a, b = None for value; otherwise derivative direction index
        def K(dx, dy):
            return k.eval(x[i] + dx, x[j] + dy)
        e = np.eye(2)
        if a is None and b is None:
            return K(0, 0)
        if b is None:
            return (K(h * e[a], 0) - K(-h * e[a], 0)) / (2 * h)
        if a is None:
            return (K(0, h * e[b]) - K(0, -h * e[b])) / (2 * h)
        return (K(h * e[a], h * e[b]) - K(h * e[a], -h * e[b]) - K(-h * e[a], h * e[b])
                + K(-h * e[a], -h * e[b])) / (4 * h * h)

    n = 3
    fd = np.zeros((9, 9))
    idx = [(i, None) for i in range(n)] + [(i, a) for i in range(n) for a in range(2)]
    for p, (i, a) in enumerate(idx):
        for q, (j, b) in enumerate(idx):
            fd[p, q] = feat_inner(i, a, j, b)
    assert np.allclose(sys.upsilon, fd, atol=1e-5 * np.abs(fd).max())


def test_coincident_points_rejected():
    with pytest.raises((IllPosedError, InvalidArgument)):
        assemble_upsilon([[0.0], [0.0]], Sinc4Kernel(1.0, 1))
    with pytest.raises(IllPosedError):
        assemble_upsilon([[0.0], [1e-7]], Sinc4Kernel(1.0, 1))


def test_single_spike_certificate_is_kernel():
    k = Sinc4Kernel(1.0, 1)
    cert = build_certificate([[0.5]], [1.0], k)
    assert cert.alpha1[0] == pytest.approx(1.0, abs=1e-14) and abs(cert.alpha2[0, 0]) < 1e-14
    assert cert.rkhs_norm == pytest.approx(1.0, abs=1e-14)
    x = np.linspace(-20, 20, 101)[:, None]
    assert np.allclose(cert.eval(x), k.profile(x - 0.5), atol=1e-14)


def test_two_spike_opposite_signs():
    k = Sinc4Kernel(1.0, 1)
    delta0 = sinc4_lpc_params(1, 2).delta0
    cert = build_certificate(spaced(2, 1.5 * delta0), [1, -1], k)
    val, grad = cert.interpolation_residuals()
    assert val < 1e-9 and grad < 1e-9
    assert cert.rkhs_norm_sq <= 4


def test_mixed_signs_three_spikes_reproduce_signs(rng):
    k = Sinc4Kernel(0.7, 2)
    x = np.array([[0.0, 0.0], [3.0, 1.0], [-2.0, 4.0]])
    signs = np.array([1.0, -1.0, 1.0])
    cert = build_certificate(x, signs, k)
    assert np.allclose(cert.eval(x), signs, atol=1e-9)
    assert np.linalg.norm(cert.gradient(x), axis=1).max() < 1e-8


def test_rkhs_norm_matches_quadratic_form():
    k = Sinc4Kernel(1.0, 1)
    x = spaced(3, 5.0)
    cert = build_certificate(x, [1, -1, 1], k)
    alpha = np.concatenate([cert.alpha1, cert.alpha2.ravel()])
    assert cert.rkhs_norm_sq == pytest.approx(alpha @ cert.system.upsilon @ alpha, rel=1e-10)


def test_localizing_examples():
    k = Sinc4Kernel(1.0, 1)
    one = build_localizing_certificate([[0.0]], 0, k)
    full = build_certificate([[0.0]], [1.0], k)
    assert np.allclose(one.alpha1, full.alpha1) and np.allclose(one.alpha2, full.alpha2)
    delta0 = sinc4_lpc_params(1, 2).delta0
    x = spaced(2, delta0)
    loc = build_localizing_certificate(x, 0, k)
    assert abs(loc.eval(x[1:])[0]) < 1e-9 and loc.eval(x[:1])[0] == pytest.approx(1.0, abs=1e-9)
    assert loc.rkhs_norm <= math.sqrt(2)


@pytest.mark.parametrize("s0", [1, 2, 4])
def test_audit_interpolation_and_near(s0):
    rep = sinc4_lpc_params(1, s0)
    cert = build_certificate(spaced(s0, rep.delta0), np.resize([1, -1], s0), Sinc4Kernel(1.0, 1))
    audit = audit_certificate(cert, rep.r0, rep.eps0_lower, rep.eps2_lower, far_samples=4000)
    assert audit.interpolation_error < 1e-9
    assert audit.near_pass
    assert audit.near_points > 0 and audit.far_points > 0


def test_audit_with_grid_certified_far_constant():
    rep = sinc4_lpc_params(1, 2)
    cert = build_certificate(spaced(2, rep.delta0), [1, 1], Sinc4Kernel(1.0, 1))
    audit = audit_certificate(cert, rep.r0, 1 / 512, rep.eps2_lower, far_samples=4000)
    assert audit.passed


def test_audit_failure_path_reports_witness():
    k = Sinc4Kernel(1.0, 1)
    rep = sinc4_lpc_params(1, 2)
    cert = build_certificate(spaced(2, 0.1 * rep.delta0 * 0.2), [1, -1], k)
    audit = audit_certificate(cert, rep.r0, rep.eps0_lower, rep.eps2_lower, far_samples=2000)
    assert not audit.passed
    worst = min(audit.far_margin, audit.near_margin)
    assert worst < 0
    assert (audit.far_witness if audit.far_margin < 0 else audit.near_witness) is not None


def test_sketched_single_spike_interpolates():
    op = draw_operator(IrwinHallLaw(1.0, 1), point_mass_template(), 64, seed=0)
    cert = build_sketched_certificate([[0.3]], [1.0], op)
    assert cert.eval([[0.3]])[0] == pytest.approx(1.0, abs=1e-12)
    assert abs(cert.gradient([[0.3]])[0, 0]) < 1e-10


def test_sketched_rank_deficient_suggests_larger_m():
    op = draw_operator(IrwinHallLaw(1.0, 1), point_mass_template(), 2, seed=0)
    with pytest.raises(IllPosedError, match="increase the sketch size"):
        build_sketched_certificate(spaced(3, 50.0), [1, 1, 1], op)


def test_sketched_certificate_converges_to_pivot():
    k = Sinc4Kernel(1.0, 1)
    x = spaced(2, 45.0)
    pop = build_certificate(x, [1, -1], k)
    grid = np.linspace(-30, x[-1, 0] + 30, 801)[:, None]
    ms = [2 ** j for j in range(8, 15, 2)]
    gaps = []
    for m in ms:
        g = [np.abs(build_sketched_certificate(x, [1, -1], draw_operator(IrwinHallLaw(1.0, 1),
                                                                          point_mass_template(), m, seed=s))
                    .eval(grid) - pop.eval(grid)).max() for s in range(6)]
        gaps.append(np.mean(g))
    slope = np.polyfit(np.log(ms), np.log(gaps), 1)[0]
    assert -0.7 <= slope <= -0.3


def test_sketched_norm_bound_reported():
    op = draw_operator(UniformCubeLaw(1.0, 1), point_mass_template(), 4096, seed=1)
    cert = build_sketched_certificate(spaced(2, 45.0), [1, 1], op, c_pivot=2.0)
    assert cert.norm_bound == pytest.approx(2.0 * np.abs(op.switch_ratios()).max() * math.sqrt(2))
    assert isinstance(cert.norm_bound_ok, bool)
    assert cert.model_coefficient_norm <= np.abs(op.switch_ratios()).max() * cert.coefficient_norm * (1 + 1e-12)


def test_sketched_audit_passes_in_most_seeds():
    alpha = 0.2
    rep = sinc4_lpc_params(1, 2)
    x = spaced(2, rep.delta0)
    passes = 0
    for seed in range(50):
        op = draw_operator(IrwinHallLaw(1.0, 1), point_mass_template(), 512, seed=seed)
        cert = build_sketched_certificate(x, [1, -1], op)
        audit = audit_certificate(cert, rep.r0, rep.eps0_lower / 4, 1.5 * rep.eps2_lower, far_samples=2000,
                                  near_grid_density=50, far_radius=20.0)
        passes += audit.passed
    assert passes >= (1 - alpha) * 50


def test_bregman_examples():
    k = Sinc4Kernel(1.0, 1)
    x0 = spaced(2, 60.0)
    mu0 = DiscreteMeasure([0.4, -0.6], x0)
    cert = build_certificate(x0, np.sign(mu0.weights), k)
    assert abs(bregman_divergence(mu0, mu0, cert)) < 1e-12
    far_x = x0[0] + 5 * FR
    mu = mu0.plus(DiscreteMeasure([0.1], [far_x]))
    assert bregman_divergence(mu, mu0, cert) >= 0.1 * (1 / 32)
    assert abs(bregman_divergence(mu0.scaled(2.0), mu0, cert)) < 1e-9


@given(st.lists(st.tuples(st.floats(-1.0, 1.0), st.floats(-40.0, 250.0)), min_size=1, max_size=6))
def test_bregman_lower_bound_randomised(atoms):
    k = Sinc4Kernel(1.0, 1)
    rep = sinc4_lpc_params(1, 2)
    x0 = spaced(2, 60.0)
    mu0 = DiscreteMeasure([0.5, 0.5], x0)
    cert = build_certificate(x0, [1, 1], k)
    w, x = zip(*atoms)
    mu = DiscreteMeasure(np.array(w), np.array(x)[:, None])
    r = 0.2
    audit = audit_certificate(cert, rep.r0, rep.eps2_lower * r ** 2, rep.eps2_lower, far_samples=2000)
    assert audit.passed
    lb = divergence_lower_bound(mu, x0, r, rep.eps2_lower, k.metric)
    assert bregman_divergence(mu, mu0, cert) >= lb - 1e-12
