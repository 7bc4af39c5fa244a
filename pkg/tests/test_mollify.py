import math

import numpy as np
import pytest
from scipy import integrate

from stablelike.errors import ConfigurationError, DomainError, SupportError
from stablelike.estimators import resolvent_samples
from stablelike.geometry import Ball
from stablelike.kernels import ConstantStable, KernelBounds, Modulated
from stablelike.mollify import (MollifiedKernel, Mollifier, OccupationMeasure,
                                bound_inheritance_check, build_mollifier,
                                convolution_offsets, estimate_mu, kernel_convergence_check,
                                mollified_evaluate, mollifier_constant,
                                resolvent_convergence_check)
from stablelike.sampler import SimConfig
from stablelike.verify import default_grids

CFG = SimConfig(eps_cut=0.02, t_max=20.0, master_seed=77)
MOD = Modulated(KernelBounds(1, 1.0, 0.5), a=0.3)


@pytest.fixture(scope="module")
def mu_mod():
    return estimate_mu(MOD, [0.0], 1.0, CFG, 400)


def test_mollifier_constant_d1():
    assert mollifier_constant(1) == pytest.approx(35 / 32, rel=1e-15)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mollifier_integrates_to_one(d):
    m = build_mollifier(d, 0.3)
    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    radial, _ = integrate.quad(lambda r: float(m(np.array([r] + [0.0] * (d - 1))))
                               * r ** (d - 1), 0, 0.3, epsabs=1e-13)
    assert area * radial == pytest.approx(1.0, abs=1e-6)


def test_mollifier_profile():
    m = build_mollifier(1, 0.2)
    assert float(m(np.zeros(1))) == pytest.approx(35 / 32 / 0.2)
    assert float(m(np.array([0.2]))) == 0.0 and float(m(np.array([-0.25]))) == 0.0
    inside = np.linspace(-0.1999, 0.1999, 101)[:, None]
    assert np.all(m(inside) > 0)
    assert np.array_equal(m(inside), m(-inside))
    with pytest.raises(DomainError):
        build_mollifier(1, 0.0)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mollifier_sampling(d):
    m = Mollifier(d, 0.5)
    z = m.sample(200_000, seed=3)
    r2 = np.sum(z * z, axis=1) / 0.25
    assert r2.max() < 1
    mean = (d / 2) / (d / 2 + 4)
    sd = math.sqrt(mean * (1 - mean) / (d / 2 + 4 + 1))
    assert abs(r2.mean() - mean) < 4 * sd / math.sqrt(z.shape[0])
    assert np.all(np.abs(z.mean(axis=0)) < 4 * 0.5 / math.sqrt(z.shape[0]))


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_mu_mass(std1, lam):
    mu = estimate_mu(std1, [0.0], lam, CFG, 200)
    assert np.all(mu.weights > 0)
    assert mu.total_mass == pytest.approx(1 / lam, abs=mu.tail_bound + 4 / lam * 2 ** -52)
    assert mu.atom_mass() == pytest.approx(mu.total_mass, rel=1e-12)


def test_mu_empty_region(std1):
    mu = estimate_mu(std1, [0.0], 1.0, CFG, 50)
    assert mu.measure(Ball([1e6], 1.0)) == 0.0


def test_mu_matches_resolvent_on_same_paths(std1):
    C = Ball([0.0], 1.0)
    mu = estimate_mu(std1, [0.0], 1.0, CFG, 300)
    v = resolvent_samples(std1, [0.0], lambda x: C.contains(x).astype(float), 1.0, CFG, 300)
    assert np.array_equal(mu.path_measures(C), v)
    assert mu.measure(C) == pytest.approx(v.mean(), rel=1e-15)


def test_mu_charges_open_balls():
    cfg = CFG.replace(t_max=10.0)
    k = ConstantStable.standard(1, 1.0)
    mu = estimate_mu(k, [0.0], 1.0, cfg, 10_000)
    for c in np.linspace(-1.9, 1.9, 9):
        est = mu.charge_estimate(Ball([c], 0.1))
        assert est.lower > 0


def test_constant_base_reproduced_exactly(mu_mod):
    k = ConstantStable(KernelBounds(1, 1.0, 0.5), 1.3)
    mk = MollifiedKernel(k, mu_mod, build_mollifier(1, 0.2))
    x = np.linspace(-3, 3, 41)[:, None]
    assert np.all(mk.ratio(x, np.ones((1, 1))) == 1.3)
    assert mollified_evaluate(mk, 0.3, 2.0) == 1.3 / 4


def test_no_atoms_falls_back_to_base(mu_mod):
    mk = MollifiedKernel(MOD, mu_mod, build_mollifier(1, 0.1))
    far = 1e4
    assert mk.ratio(np.array([far]), np.ones(1)) == pytest.approx(
        float(MOD.ratio(np.array([far]), np.ones(1))), rel=1e-15)
    assert mk.failures == 1 and mk.failure_fraction() == 1.0
    mk.reset_counter()
    mk.ratio(np.array([0.0]), np.ones(1))
    assert mk.failures == 0 and mk.evaluations == 1


def test_mollified_value_by_direct_enumeration(mu_mod):
    eps = 0.2
    mk = MollifiedKernel(MOD, mu_mod, build_mollifier(1, eps))
    got = mollified_evaluate(mk, 0.0, 1.0)
    # every atom, no window search
    y = mu_mod.atoms[:, 0]
    w = mu_mod.weights / mu_mod.n_paths * build_mollifier(1, eps)(-y[:, None])
    m = MOD.modulation(mu_mod.atoms)
    ref = (np.sum(w * m) + mk.rho * float(MOD.modulation(np.zeros(1)))) / (w.sum() + mk.rho)
    assert got == pytest.approx(ref, rel=1e-12)
    grid = np.linspace(-eps, eps, 2001)[:, None]
    mods = MOD.modulation(grid)
    assert mods.min() - 1e-15 <= got <= mods.max() + 1e-15
    assert 0.5 <= got <= 2.0


@pytest.mark.parametrize("eps", [0.4, 0.2, 0.1])
def test_bounds_inherited(mu_mod, eps):
    mk = MollifiedKernel(MOD, mu_mod, build_mollifier(1, eps))
    x_grid, h_grid = default_grids(1)
    lo, hi, sym, ok = bound_inheritance_check(mk, x_grid, h_grid)
    assert ok and sym and 0.5 <= lo <= hi <= 2.0


def test_tabulated_kernel_close_to_exact(mu_mod):
    mk = MollifiedKernel(MOD, mu_mod, build_mollifier(1, 0.2))
    tab = mk.tabulated(center=0.0)
    x = np.linspace(-2, 2, 301)[:, None]
    exact = mk.ratio(x, np.ones((1, 1)))
    approx = tab.ratio(x, np.ones((1, 1)))
    assert np.max(np.abs(exact - approx)) < 1e-3
    far = np.array([[50.0]])
    assert tab.ratio(far, far) == pytest.approx(mk.ratio(far, far), rel=1e-12)
    assert np.all((approx >= 0.5) & (approx <= 2.0))


def test_kernel_error_zero_for_constant_base(mu_mod):
    k = ConstantStable(KernelBounds(1, 1.0, 0.5), 1.0)
    x_grid, h_grid = default_grids(1)
    rows = kernel_convergence_check(k, mu_mod, [0.4, 0.1], x_grid, h_grid)
    assert all(r.sup_error == 0.0 for r in rows)


def test_kernel_error_support_failure(mu_mod):
    with pytest.raises(SupportError):
        kernel_convergence_check(MOD, mu_mod, [0.1], np.array([[1e9], [2e9]]),
                                 np.ones((1, 1)))


def test_resolvent_check_requires_decreasing_eps(mu_mod):
    with pytest.raises(ConfigurationError):
        resolvent_convergence_check(MOD, [0.0], lambda x: np.ones(len(x)), 1.0, [0.1, 0.2],
                                    CFG, 10, 10, mu=mu_mod)


def test_resolvent_check_constant_function(mu_mod):
    rows = resolvent_convergence_check(MOD, [0.0], lambda x: np.ones(len(x)), 1.0,
                                       [0.4, 0.2], CFG.replace(t_max=10.0), 200, 0, mu=mu_mod)
    for r in rows:
        assert r.estimate == pytest.approx(1.0, abs=1e-4)
        assert r.abs_error < 1e-12 and abs(r.kernel_effect) < 1e-12


def test_resolvent_check_constant_base_has_no_kernel_effect(mu_mod):
    k = ConstantStable(KernelBounds(1, 1.0, 0.5), 1.0)
    f = lambda x: np.cos(2 * np.pi * x[..., 0])
    rows = resolvent_convergence_check(k, [0.0], f, 1.0, [0.4, 0.1], CFG.replace(t_max=5.0),
                                       200, 0, mu=mu_mod)
    assert all(r.kernel_effect == 0.0 for r in rows)


def test_convolution_identity_rate():
    f = lambda x: np.cos(2 * np.pi * x)
    for eps in (0.4, 0.2, 0.1, 0.05):
        z = convolution_offsets(build_mollifier(1, eps), 5)[:, 0]
        assert abs(np.mean(f(0.3 - z)) - f(0.3)) <= 2 * np.pi * eps


def test_dimension_mismatch(mu_mod):
    with pytest.raises(ConfigurationError):
        MollifiedKernel(ConstantStable.standard(2, 1.0), mu_mod, build_mollifier(2, 0.1))
