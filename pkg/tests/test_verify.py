import numpy as np
import pytest

from stablelike.errors import FamilyError, PreconditionError
from stablelike.geometry import Ball, Union
from stablelike.kernels import ConstantStable, KernelBounds
from stablelike.sampler import SimConfig
from stablelike.verify import (estimate_phi_envelope, random_dyadic_sets,
                               verify_exit_scaling, verify_hitting_bound,
                               verify_mollify_pipeline, verify_support_theorem, zigzag)

CFG = SimConfig(eps_cut=1e-3, t_max=20.0, master_seed=99)


def test_scaling_rejects_variable_kernel(modulated):
    with pytest.raises(FamilyError):
        verify_exit_scaling(modulated, [0.5, 1.0], CFG, 100)


def test_scaling_single_radius_is_vacuous(std1):
    res = verify_exit_scaling(std1, [1.0], CFG, 500)
    assert res.overall
    assert any("vacuous" in c.description for c in res.checks)
    assert all(c.n_samples > 0 for c in res.checks)


def test_scaling_passes(std1):
    res = verify_exit_scaling(std1, [0.5, 1.0, 2.0], CFG, 3000)
    assert res.overall, [c for c in res.failures()]
    assert len(res.estimates) == 3


def test_hitting_preconditions(std1):
    with pytest.raises(PreconditionError):
        verify_hitting_bound(std1, [Union((), 1)], [[0.0]], CFG, 10)
    with pytest.raises(PreconditionError):
        verify_hitting_bound(std1, [Ball([0.0], 1.5)], [[0.0]], CFG, 10)
    with pytest.raises(PreconditionError):
        verify_hitting_bound(std1, [Ball([0.0], 0.5)], [[2.5]], CFG, 10)


def test_hitting_bound_passes(std1):
    res = verify_hitting_bound(std1, [Ball([0.0], 0.5), Ball([0.0], 0.25), Ball([0.0], 0.1)],
                               [[1.5]], CFG, 2000)
    assert res.overall, res.failures()
    assert res.checks[0].observed > 0


def test_support_narrow_tube_fails_with_diagnostics(std1):
    res = verify_support_theorem(std1, [zigzag()], [0.5, 4e-4], CFG, 1000)
    wide, narrow = res.checks
    assert wide.passed
    assert not narrow.passed and not res.overall
    assert "eps_cut/2" in narrow.detail and "min sup distance" in narrow.detail


def test_random_dyadic_sets_volume():
    for s in random_dyadic_sets(2, 4, 0.3, 5, seed=1):
        assert 0.3 <= s.volume() < 0.3 + 4 / 256


def test_phi_envelope_monotone(std1):
    cfg = CFG.replace(eps_cut=1e-2)
    res = estimate_phi_envelope(std1, [0.1, 0.3, 0.6], 3, cfg, 300, level=5)
    vals = [row["phi_hat"] for row in res.table]
    assert vals == sorted(vals)
    assert res.overall
    with pytest.raises(PreconditionError):
        estimate_phi_envelope(std1, [0.0, 0.5], 1, cfg, 10)
    with pytest.raises(PreconditionError):
        estimate_phi_envelope(std1, [0.5], 1, cfg, 10, x_grid=[[0.9]])


def test_mollify_pipeline_constant_base():
    k = ConstantStable(KernelBounds(1, 1.0, 0.5), 1.0)
    res = verify_mollify_pipeline(k, [0.4, 0.2], CFG.replace(eps_cut=0.02, t_max=10.0), 200, 300)
    assert res.overall, res.failures()
    assert all(row["kernel_sup_error"] == 0.0 for row in res.table)


def test_result_serializes(std1):
    res = verify_exit_scaling(std1, [1.0], CFG, 50)
    doc = res.to_dict()
    assert doc["theorem_id"] == "exit-scaling" and doc["overall"] is True
    assert len(res.params_digest) == 64 or len(res.params_digest) > 8
