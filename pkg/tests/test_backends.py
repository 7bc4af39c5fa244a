import os
import subprocess
import sys

import numpy as np
import pytest

from stablelike._accel import HAVE_NUMBA, resolve_backend
from stablelike.geometry import Ball, Cube
from stablelike.kernels import KernelBounds, Modulated, kernel_from_spec
from stablelike.sampler import SimConfig, simulate_batch

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba disabled")

CASES = [
    (lambda: kernel_from_spec({"family": "standard", "d": 1, "alpha": 1.0}), {}),
    (lambda: Modulated(KernelBounds(1, 1.0, 0.5), a=0.3), {}),
    (lambda: kernel_from_spec({"family": "standard", "d": 2, "alpha": 1.5}),
     {"small_jump_mode": "GAUSS", "gauss_dt": 1e-2, "eps_cut": 0.05}),
    (lambda: kernel_from_spec({"family": "standard", "d": 3, "alpha": 0.7}), {}),
]


@pytest.mark.parametrize("make,extra", CASES)
def test_backends_agree(make, extra):
    k = make()
    cfg = SimConfig(**{"eps_cut": 0.01, "t_max": 2.0, "master_seed": 5, **extra})
    dom = Ball(np.zeros(k.d), 1.0)
    ids = np.arange(200)
    a = simulate_batch(k, np.zeros(k.d), cfg, ids, domain=dom, record=True, backend="numba")
    b = simulate_batch(k, np.zeros(k.d), cfg, ids, domain=dom, record=True, backend="numpy")
    assert np.array_equal(a.n_candidates, b.n_candidates)
    assert np.array_equal(a.n_accepted, b.n_accepted)
    assert np.array_equal(a.offsets, b.offsets)
    assert np.array_equal(a.status, b.status)
    np.testing.assert_allclose(a.positions, b.positions, rtol=0, atol=1e-12)
    np.testing.assert_allclose(a.stop_time, b.stop_time, rtol=0, atol=1e-12)


def test_unknown_backend():
    with pytest.raises(ValueError):
        resolve_backend("cuda")


def test_env_flag_selects_numpy():
    code = ("import stablelike._accel as a, numpy as np;"
            "from stablelike.kernels import kernel_from_spec;"
            "from stablelike.sampler import SimConfig, simulate_batch;"
            "k = kernel_from_spec({'family': 'standard', 'd': 1, 'alpha': 1.0});"
            "r = simulate_batch(k, [0.0], SimConfig(eps_cut=0.01, t_max=1.0, master_seed=5),"
            " np.arange(20));"
            "print(a.HAVE_NUMBA, a.default_backend(), int(r.n_candidates.sum()))")
    env = {**os.environ, "STABLELIKE_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                         text=True, check=True).stdout.split()
    assert out[:2] == ["False", "numpy"]
    k = kernel_from_spec({"family": "standard", "d": 1, "alpha": 1.0})
    r = simulate_batch(k, [0.0], SimConfig(eps_cut=0.01, t_max=1.0, master_seed=5),
                       np.arange(20), backend="numba")
    assert int(out[2]) == int(r.n_candidates.sum())
