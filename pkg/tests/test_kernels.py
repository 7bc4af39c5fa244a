import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stablelike.constants import sphere_area, stable_constant
from stablelike.errors import ConfigurationError, DomainError
from stablelike.kernels import (Anisotropic, ConstantStable, KernelBounds, Modulated,
                                UserKernel, continuity_modulus, default_h_grid,
                                envelope_intensity, evaluate_kernel, kernel_from_spec,
                                psi_eta, validate_bounds)

finite = st.floats(-5, 5, allow_nan=False)
radius = st.floats(1e-4, 1e2)


def test_standard_cauchy_value(std1):
    assert evaluate_kernel(std1, 0.0, 2.0) == pytest.approx(1 / (4 * math.pi), rel=1e-15)
    assert stable_constant(1, 1.0) == pytest.approx(1 / math.pi, rel=1e-15)


@pytest.mark.parametrize("alpha", [0.3, 0.5, 1.0, 1.5, 1.9])
def test_standard_constant_d1_closed_form(alpha):
    c = (alpha * 2 ** (alpha - 1) * math.gamma((1 + alpha) / 2)
         / (math.sqrt(math.pi) * math.gamma(1 - alpha / 2)))
    assert stable_constant(1, alpha) == pytest.approx(c, rel=1e-14)


def test_modulated_without_modulation_is_inverse_square():
    k = Modulated(KernelBounds(1, 1.0, 0.5), a=0.0)
    for h in (0.1, 1.0, -3.0):
        assert evaluate_kernel(k, 0.7, h) == pytest.approx(1 / h ** 2, rel=1e-15)


def test_zero_displacement_rejected(std1):
    with pytest.raises(DomainError):
        evaluate_kernel(std1, 0.0, 0.0)


def test_vectorized_evaluation(modulated):
    x = np.linspace(-1, 1, 5)[:, None]
    h = np.array([[0.5], [-0.5], [2.0], [-2.0], [1.0]])
    out = evaluate_kernel(modulated, x, h)
    assert out.shape == (5,)
    assert out[0] == pytest.approx(evaluate_kernel(modulated, x[0], h[0]))


@pytest.mark.parametrize("bad", [dict(d=4, alpha=1.0, kappa=0.5), dict(d=1, alpha=2.0, kappa=0.5),
                                 dict(d=1, alpha=0.0, kappa=0.5), dict(d=1, alpha=1.0, kappa=1.0),
                                 dict(d=1, alpha=1.0, kappa=0.5, eta=0.0)])
def test_bounds_validation(bad):
    with pytest.raises(ConfigurationError):
        KernelBounds(**bad)


def test_validate_constant_passes():
    k = ConstantStable(KernelBounds(1, 1.0, 0.5), 1.0)
    rep = validate_bounds(k, np.linspace(-1, 1, 7))
    assert rep.passed
    assert rep.min_ratio == pytest.approx(1.0, rel=1e-14)
    assert rep.max_ratio == pytest.approx(1.0, rel=1e-14)


def test_validate_modulated_lower_bound_failure():
    # min of m is 1 - 0.6 = 0.4 < kappa
    k = Modulated(KernelBounds(1, 1.0, 0.5), a=0.6)
    rep = validate_bounds(k, np.linspace(-5, 5, 41))
    assert not rep.passed and not rep.bounds_ok and rep.symmetric
    assert rep.min_ratio < 0.5
    assert rep.worst_ratio == pytest.approx(rep.min_ratio)


def test_validate_modulated_passes(modulated):
    rep = validate_bounds(modulated, np.linspace(-5, 5, 41))
    assert rep.passed
    assert 0.7 - 1e-12 <= rep.min_ratio and rep.max_ratio <= 1.3 + 1e-12


def test_validate_flags_asymmetric_user_kernel():
    k = UserKernel(KernelBounds(1, 1.0, 0.5),
                   lambda x, h: (1 + 0.1 * np.sign(h[..., 0])) / np.abs(h[..., 0]) ** 2)
    rep = validate_bounds(k, [0.0])
    assert rep.bounds_ok and not rep.symmetric


def test_default_h_grid_shape():
    g = default_h_grid(2)
    assert g.shape == (64 * 16, 2)
    r = np.linalg.norm(g, axis=1)
    assert r.min() == pytest.approx(1e-4) and r.max() == pytest.approx(1e2)


@pytest.mark.parametrize("d,alpha,kappa,eps,expected", [
    (1, 1.0, 1 - 1e-12, 1.0, 2.0), (1, 1.0, 1 - 1e-12, 0.5, 4.0), (2, 1.0, 0.5, 1.0, 4 * math.pi)])
def test_envelope_intensity_examples(d, alpha, kappa, eps, expected):
    assert envelope_intensity(KernelBounds(d, alpha, kappa), eps) == pytest.approx(expected,
                                                                                  rel=1e-11)


def test_envelope_rejects_nonpositive_cutoff():
    with pytest.raises(DomainError):
        envelope_intensity(KernelBounds(1, 1.0, 0.5), 0.0)


@given(st.sampled_from([1, 2, 3]), st.floats(0.05, 1.95), st.floats(0.05, 0.95),
       st.lists(st.floats(1e-6, 0.99), min_size=2, max_size=6))
def test_envelope_times_eps_alpha_constant(d, alpha, kappa, eps_list):
    b = KernelBounds(d, alpha, kappa)
    target = sphere_area(d) / (kappa * alpha)
    for e in eps_list:
        assert envelope_intensity(b, e) * e ** alpha == pytest.approx(target, rel=1e-12)
    es = sorted(set(eps_list))
    rates = [envelope_intensity(b, e) for e in es]
    # eps values a few ulps apart can round to the same rate
    assert all(a >= b_ for a, b_ in zip(rates, rates[1:]))


def _builtin(draw_d, alpha, kappa, amp):
    b = KernelBounds(draw_d, alpha, kappa)
    lim = 1 - kappa
    if draw_d == 1:
        return [ConstantStable.standard(1, alpha), Modulated(b, a=amp * lim)]
    return [ConstantStable.standard(draw_d, alpha), Modulated(b, a=amp * lim),
            Anisotropic(b, b=amp * lim)]


@given(st.sampled_from([1, 2, 3]), st.floats(0.1, 1.9), st.floats(0.2, 0.9),
       st.floats(-0.99, 0.99), st.lists(finite, min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3), radius)
def test_builtin_bounds_and_symmetry(d, alpha, kappa, amp, x, u, r):
    u = np.array(u[:d])
    if np.linalg.norm(u) < 1e-3:
        u = np.ones(d)
    h = r * u / np.linalg.norm(u)
    xp = np.array(x[:d])
    for k in _builtin(d, alpha, kappa, amp):
        kb = k.bounds.kappa
        q = evaluate_kernel(k, xp, h) * np.linalg.norm(h) ** (d + alpha)
        assert kb * (1 - 1e-12) <= q <= (1 + 1e-12) / kb
        assert evaluate_kernel(k, xp, -h) == pytest.approx(evaluate_kernel(k, xp, h),
                                                          rel=1e-12)


def test_anisotropic_needs_two_dims():
    with pytest.raises(ConfigurationError):
        Anisotropic(KernelBounds(1, 1.0, 0.5), b=0.2)


def test_continuity_modulus_needs_eta(modulated):
    with pytest.raises(ConfigurationError):
        continuity_modulus(modulated, 0.0, 0.1, 1.0)


def test_continuity_modulus_constant_is_zero():
    k = ConstantStable.standard(1, 1.0, eta=0.5)
    assert continuity_modulus(k, -0.3, 0.8, 1.0) == 0.0


def test_continuity_modulus_same_point_is_zero():
    k = Modulated(KernelBounds(1, 1.0, 0.5, eta=0.5), a=0.3)
    assert continuity_modulus(k, 0.2, 0.2, 1.0) == 0.0


def test_continuity_modulus_matches_dense_grid_oracle():
    eta = 0.5
    k = Modulated(KernelBounds(1, 1.0, 0.5, eta=eta), a=0.3)
    val = continuity_modulus(k, 0.0, 0.1, 1.0)
    # independent dense evaluation on the same radius range, 10x more radii
    r = np.logspace(-4, 0, 640)
    m = lambda x: 1 + 0.3 * (2 * np.exp(-0.5 * x * x) - 1)
    dense = np.max(abs(m(0.0) - m(0.1)) * (1 + np.log(np.maximum(1 / r, 1))) ** (1 + eta))
    assert val > 0
    assert val == pytest.approx(dense, rel=1e-12)
    lip = 2 * math.exp(-0.5)
    assert val <= 0.3 * lip * 0.1 * float(psi_eta(1e-4, eta))


def test_continuity_modulus_shrinks_with_distance():
    k = Modulated(KernelBounds(1, 1.0, 0.5, eta=0.5), a=0.3)
    vals = [continuity_modulus(k, 0.5, 0.5 + dy, 1.0) for dy in (0.2, 0.1, 0.05, 0.01)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_continuity_modulus_rejects_bad_grid():
    k = Modulated(KernelBounds(1, 1.0, 0.5, eta=0.5), a=0.3)
    with pytest.raises(DomainError):
        continuity_modulus(k, 0.0, 0.1, 1.0, h_grid=[0.5, 2.0])
    with pytest.raises(DomainError):
        continuity_modulus(k, 0.0, 0.1, 0.0)


def test_kernel_from_spec():
    k = kernel_from_spec({"family": "modulated", "d": 1, "alpha": 1.2, "kappa": 0.5, "a": 0.2})
    assert isinstance(k, Modulated) and k.a == 0.2 and k.bounds.alpha == 1.2
    s = kernel_from_spec({"family": "standard", "d": 2, "alpha": 1.5})
    assert s.is_standard
    for bad in ({"family": "nope", "d": 1, "alpha": 1.0, "kappa": 0.5},
                {"family": "modulated", "d": 1, "alpha": 1.0, "a": 0.2},
                {"family": "standard", "d": 1},
                {"family": "modulated", "d": 1, "alpha": 1.0, "kappa": 0.5, "zz": 1}):
        with pytest.raises(ConfigurationError):
            kernel_from_spec(bad)
