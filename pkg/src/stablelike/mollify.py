"""Discounted occupation measure, mollifier and mollified kernels.

mu(C) = E int_0^inf e^{-lam t} 1_C(X_t) dt is held as weighted atoms read off
path skeletons, so every integral against mu is a finite sum. The mollified
kernel averages the base kernel over mu near x with weights phi_eps(x - y):

    n_eps(x, h) = [sum w_i phi_eps(x - y_i) n(y_i, h) + rho n(x, h)]
                  / [sum w_i phi_eps(x - y_i) + rho]

a convex combination of base values, so it keeps the base kernel's bounds
and symmetry.
"""

from dataclasses import dataclass
import math
import threading

import numpy as np

from ._accel import HAVE_NUMBA, njit
from .constants import sphere_area
from .errors import ConfigurationError, DomainError, FamilyError, SupportError
from .estimators import CIMethod, EstimateWithCI, discount_weights, resolvent_samples
from .kernels import ConstantStable, JitSpec, JumpKernel, Modulated, _bump, evaluate_kernel
from .sampler import simulate_batch

REGULARIZER = 1e-12
N_OFFSETS = 128
NODES_PER_EPS = 32


def mollifier_constant(d):
    """c_d with c_d int_{|z|<1} (1 - |z|^2)^3 dz = 1 (d = 1 gives 35/32)."""
    radial = math.gamma(d / 2) * math.gamma(4) / (2 * math.gamma(d / 2 + 4))
    return 1.0 / (sphere_area(d) * radial)


@dataclass(frozen=True)
class Mollifier:
    """phi_eps(x) = eps^{-d} c_d (1 - |x/eps|^2)^3 on |x| < eps."""

    d: int
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise DomainError(f"mollifier scale must be positive, got {self.eps}")
        object.__setattr__(self, "c", mollifier_constant(self.d))

    def profile(self, z):
        z = np.asarray(z, dtype=np.float64)
        b = 1.0 - np.sum(z * z, axis=-1)
        return np.where(b > 0, self.c * np.maximum(b, 0.0) ** 3, 0.0)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.profile(x / self.eps) / self.eps ** self.d

    def sample(self, n, seed):
        """n draws from the density phi_eps; |z/eps|^2 is Beta(d/2, 4)."""
        gen = np.random.default_rng(seed)
        r = self.eps * np.sqrt(gen.beta(self.d / 2, 4.0, size=n))
        if self.d == 1:
            u = np.where(gen.random(n) < 0.5, 1.0, -1.0)[:, None]
        else:
            z = gen.standard_normal((n, self.d))
            u = z / np.linalg.norm(z, axis=1, keepdims=True)
        return r[:, None] * u


def build_mollifier(d, eps):
    return Mollifier(int(d), float(eps))


class OccupationMeasure:
    """Weighted atoms (y_i, w_i / M) from M discounted path skeletons."""

    def __init__(self, lam, start, atoms, weights, atom_path, n_paths, t_max):
        self.lam = float(lam)
        self.start = np.asarray(start, dtype=np.float64)
        self.atoms = atoms
        self.weights = weights
        self.atom_path = atom_path
        self.n_paths = int(n_paths)
        self.t_max = float(t_max)
        # each skeleton's weights telescope to (1 - e^{-lam t_max}) / lam
        self.path_mass = -math.expm1(-self.lam * self.t_max) / self.lam
        self.total_mass = self.path_mass

    @property
    def d(self):
        return self.atoms.shape[1]

    @property
    def tail_bound(self):
        return math.exp(-self.lam * self.t_max) / self.lam

    def atom_mass(self):
        """Sum of all atom weights divided by M (equals total_mass up to rounding)."""
        return math.fsum(self.weights) / self.n_paths

    def path_measures(self, C):
        """Per-path discounted time in C."""
        inside = np.asarray(C.contains(self.atoms), dtype=bool)
        return np.bincount(self.atom_path[inside], weights=self.weights[inside],
                           minlength=self.n_paths)

    def measure(self, C):
        return float(self.path_measures(C).sum() / self.n_paths)

    def charge_estimate(self, C):
        """Fraction of paths putting positive mass on C, with a Wilson interval."""
        hit = int(np.count_nonzero(self.path_measures(C) > 0))
        p = hit / self.n_paths
        return EstimateWithCI(p, math.sqrt(p * (1 - p) / self.n_paths), self.n_paths,
                              CIMethod.WILSON)


def estimate_mu(kernel, x0, lam, cfg, M, *, first_path=0, backend=None, workers=1):
    """Occupation measure from M skeletons on [0, cfg.t_max]."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if M < 1:
        raise DomainError("M must be at least 1")
    res = simulate_batch(kernel, x0, cfg, np.arange(first_path, first_path + M), record=True,
                         backend=backend, workers=workers)
    path, pos, t_lo, t_hi = res.segments()
    w = discount_weights(lam, t_lo, t_hi)
    keep = w > 0
    return OccupationMeasure(lam, np.atleast_1d(np.asarray(x0, dtype=np.float64)),
                             pos[keep], w[keep], path[keep], M, cfg.t_max)


# -------------------------------------------------------------- mollified kernel

class MollifiedKernel(JumpKernel):
    """n_eps built from an occupation measure; same (d, alpha, kappa) as the base."""

    family = "mollified"

    def __init__(self, base, mu, mollifier, regularizer_weight=None):
        super().__init__(base.bounds)
        if mu.d != base.d or mollifier.d != base.d:
            raise ConfigurationError("base kernel, measure and mollifier dimensions differ")
        self.base = base
        self.mu = mu
        self.mollifier = mollifier
        self.radial = base.radial
        self.directional = base.directional
        self.rho = (REGULARIZER * mu.total_mass if regularizer_weight is None
                    else float(regularizer_weight))
        order = np.argsort(mu.atoms[:, 0], kind="stable")
        self._ys = np.ascontiguousarray(mu.atoms[order])
        self._w = mu.weights[order] / mu.n_paths
        self._path = mu.atom_path[order]
        self._lock = threading.Lock()
        self.evaluations = 0
        self.failures = 0

    @property
    def eps(self):
        return self.mollifier.eps

    def _window(self, x):
        lo = np.searchsorted(self._ys[:, 0], x[0] - self.eps, side="right")
        hi = np.searchsorted(self._ys[:, 0], x[0] + self.eps, side="left")
        ys = self._ys[lo:hi]
        phi = self.mollifier(x - ys)
        sel = phi > 0
        return ys[sel], self._w[lo:hi][sel] * phi[sel], self._path[lo:hi][sel]

    def _combine(self, wphi, r_atoms, r_x):
        # r_x + sum wphi (r_i - r_x) / (sum wphi + rho): the ratio formula,
        # written so that an x-independent base is reproduced exactly
        den = wphi.sum()
        return r_x + np.dot(wphi, r_atoms - r_x) / (den + self.rho), den

    def ratio(self, x, h):
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        shape = np.broadcast_shapes(x.shape[:-1], h.shape[:-1])
        xb = np.broadcast_to(x, shape + (self.d,)).reshape(-1, self.d)
        hb = np.broadcast_to(h, shape + (self.d,)).reshape(-1, self.d)
        out = np.empty(xb.shape[0])
        fails = 0
        h_free = not (self.radial or self.directional)
        cache = {}
        for i in range(xb.shape[0]):
            key = xb[i].tobytes()
            if h_free and key in cache:
                out[i], failed = cache[key]
            else:
                ys, wphi, _ = self._window(xb[i])
                hi = hb[i]
                r_atoms = self.base.ratio(ys, hi[None, :]) if ys.size else np.zeros(0)
                r_x = float(self.base.ratio(xb[i], hi))
                val, den = self._combine(wphi, r_atoms, r_x)
                failed = den < self.rho
                out[i] = val
                if h_free:
                    cache[key] = (val, failed)
            fails += bool(failed)
        with self._lock:
            self.evaluations += xb.shape[0]
            self.failures += fails
        return out.reshape(shape)

    def axis_moments(self, x):
        if self.directional or self.radial:
            return super().axis_moments(x)
        x = np.asarray(x, dtype=np.float64)
        u = np.zeros(x.shape)
        u[..., 0] = 1.0
        q = self.ratio(x, u)
        return np.repeat(q[..., None] / self.d, self.d, axis=-1)

    def failure_fraction(self):
        return self.failures / self.evaluations if self.evaluations else 0.0

    def reset_counter(self):
        with self._lock:
            self.evaluations = 0
            self.failures = 0

    def group_ratios(self, x, h, n_groups):
        """Per path-group sums, for leave-one-group-out error bars.

        Returns (num_g, den_g, r_x) with num_g = sum over the group's atoms of
        w phi (r_i - r_x) and den_g = sum of w phi.
        """
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        ys, wphi, path = self._window(x)
        r_x = float(self.base.ratio(x, h))
        r_atoms = self.base.ratio(ys, h[None, :]) if ys.size else np.zeros(0)
        g = path % n_groups
        num = np.bincount(g, weights=wphi * (r_atoms - r_x), minlength=n_groups)
        den = np.bincount(g, weights=wphi, minlength=n_groups)
        return num, den, r_x

    def params(self):
        return {"base": self.base.describe(), "eps": self.eps, "lambda": self.mu.lam,
                "M": self.mu.n_paths, "rho": self.rho}

    def tabulated(self, center=None, nodes_per_eps=NODES_PER_EPS, mass_quantile=1e-3):
        return TabulatedMollifiedKernel(self, center, nodes_per_eps, mass_quantile)


def mollified_evaluate(mk, x, h):
    """n_eps(x, h); bumps the kernel's failure counter where mu has no atoms near x."""
    return evaluate_kernel(mk, x, h)


# ------------------------------------------------------------ compiled table form

@njit(cache=True, nogil=True)
def _window_value(x, ys, w, wr, eps, rho, r_x):
    lo = np.searchsorted(ys, x - eps, side="right")
    hi = np.searchsorted(ys, x + eps, side="left")
    inv = 1.0 / eps
    num = 0.0
    den = 0.0
    for k in range(lo, hi):
        z = (x - ys[k]) * inv
        b = 1.0 - z * z
        if b > 0.0:
            p = b * b * b
            num += w[k] * p * (wr[k] - r_x)
            den += w[k] * p
    return r_x + num / (den + rho)


@njit(cache=True, nogil=True)
def _base_ratio(params, x):
    # params[6:10] = scale, a, center, width of a modulated (or constant) base
    return params[6] * (1.0 + params[7] * _bump((x - params[8]) / params[9]))


@njit(cache=True, nogil=True)
def _ratio_table(params, table, x, h):
    x_lo = params[0]
    inv_dx = params[1]
    n_nodes = int(params[2])
    n_atoms = int(params[3])
    u = (x[0] - x_lo) * inv_dx
    if u >= 0.0 and u < n_nodes - 1:
        i = int(u)
        f = u - i
        return table[i] + f * (table[i + 1] - table[i])
    ys = table[n_nodes:n_nodes + n_atoms]
    w = table[n_nodes + n_atoms:n_nodes + 2 * n_atoms]
    wr = table[n_nodes + 2 * n_atoms:n_nodes + 3 * n_atoms]
    return _window_value(x[0], ys, w, wr, params[4], params[5], _base_ratio(params, x[0]))


@njit(cache=True, nogil=True)
def _moments_table(params, table, x, out):
    q = _ratio_table(params, table, x, x)
    d = out.shape[0]
    for i in range(d):
        out[i] = q / d


@njit(cache=True)
def _fill_nodes(nodes, ys, w, wr, eps, rho, params):
    out = np.empty(nodes.size)
    for j in range(nodes.size):
        out[j] = _window_value(nodes[j], ys, w, wr, eps, rho, _base_ratio(params, nodes[j]))
    return out


def _fill_nodes_numpy(nodes, ys, w, wr, eps, rho, params):
    scale, a, center, width = params[6:10]
    z0 = (nodes - center) / width
    r_nodes = scale * (1.0 + a * (2.0 * np.exp(-0.5 * z0 * z0) - 1.0))
    lo = np.searchsorted(ys, nodes - eps, side="right")
    hi = np.searchsorted(ys, nodes + eps, side="left")
    out = np.empty(nodes.size)
    for j in range(nodes.size):
        z = (nodes[j] - ys[lo[j]:hi[j]]) / eps
        b = np.maximum(1.0 - z * z, 0.0)
        p = w[lo[j]:hi[j]] * b * b * b
        out[j] = r_nodes[j] + np.dot(p, wr[lo[j]:hi[j]] - r_nodes[j]) / (p.sum() + rho)
    return out


def _base_params(base):
    if isinstance(base, ConstantStable):
        return base.c, 0.0, 0.0, 1.0
    if isinstance(base, Modulated):
        return base.scale, base.a, base.center, base.width
    raise FamilyError("tabulation supports constant-stable and modulated base kernels only")


class TabulatedMollifiedKernel(JumpKernel):
    """Compiled stand-in for a one-dimensional mollified kernel, used for simulation.

    Exact node values of n_eps on a grid of spacing eps / nodes_per_eps are
    linearly interpolated; outside the grid the exact windowed sum is
    evaluated directly. Interpolated values stay between neighbouring node
    values, so the bounds carry over.
    """

    family = "mollified-table"

    def __init__(self, mk, center=None, nodes_per_eps=NODES_PER_EPS, mass_quantile=1e-3):
        super().__init__(mk.bounds)
        if mk.d != 1:
            raise FamilyError("tabulated mollified kernels are one-dimensional")
        self.mk = mk
        bp = _base_params(mk.base)
        eps = mk.eps
        ys = np.ascontiguousarray(mk._ys[:, 0])
        # mollifier normalization folded into the weights
        w = mk._w * (mk.mollifier.c / eps)
        wr = mk.base.ratio(mk._ys, np.ones((1, 1)))
        # grid over the bulk of mu; the sparse tails use the direct sum
        cw = np.cumsum(mk._w)
        cw /= cw[-1]
        lo = ys[np.searchsorted(cw, mass_quantile)] - eps
        hi = ys[min(np.searchsorted(cw, 1 - mass_quantile), ys.size - 1)] + eps
        if center is not None:
            lo = min(lo, center - 2 * eps)
            hi = max(hi, center + 2 * eps)
        dx = eps / nodes_per_eps
        n_nodes = int(math.ceil((hi - lo) / dx)) + 1
        params = np.array([lo, 1.0 / dx, n_nodes, ys.size, eps, mk.rho, *bp])
        nodes = lo + dx * np.arange(n_nodes)
        fill = _fill_nodes if HAVE_NUMBA else _fill_nodes_numpy
        vals = fill(nodes, ys, w, wr, eps, mk.rho, params)
        self._spec = JitSpec(_ratio_table, _moments_table, params,
                             np.concatenate([vals, ys, w, wr]))
        self.n_nodes = n_nodes
        self.grid = (lo, hi)

    def ratio(self, x, h):
        x = np.asarray(x, dtype=np.float64)
        h = np.asarray(h, dtype=np.float64)
        shape = np.broadcast_shapes(x.shape[:-1], h.shape[:-1])
        xb = np.broadcast_to(x, shape + (1,)).reshape(-1, 1)
        s = self._spec
        n_nodes = self.n_nodes
        u = (xb[:, 0] - s.params[0]) * s.params[1]
        on_grid = (u >= 0.0) & (u < n_nodes - 1)
        out = np.empty(u.size)
        i = u[on_grid].astype(np.int64)
        f = u[on_grid] - i
        vals = s.table[:n_nodes]
        out[on_grid] = vals[i] + f * (vals[i + 1] - vals[i])
        for k in np.flatnonzero(~on_grid):
            out[k] = _ratio_table(s.params, s.table, xb[k], xb[k])
        return out.reshape(shape)

    def axis_moments(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.ratio(x, x)[..., None]

    def jit_spec(self):
        return self._spec

    def params(self):
        return {"mollified": self.mk.params(), "nodes": self.n_nodes}


# ---------------------------------------------------------------- diagnostics

@dataclass(frozen=True)
class ConvergenceRow:
    """One eps of the resolvent check.

    abs_error compares the smoothed mollified resolvent with the base
    resolvent at x0. kernel_effect isolates the change of kernel: mollified
    minus base resolvent from the same shifted starts and seeds (exactly 0
    when the base does not depend on x).
    """

    eps: float
    estimate: float
    reference: float
    abs_error: float
    combined_se: float
    kernel_effect: float
    kernel_effect_se: float
    support_failure_fraction: float

    def to_dict(self):
        return {"eps": self.eps, "estimate": self.estimate, "reference": self.reference,
                "abs_error": self.abs_error, "combined_se": self.combined_se,
                "kernel_effect": self.kernel_effect,
                "kernel_effect_se": self.kernel_effect_se,
                "support_failure_fraction": self.support_failure_fraction}


def _se(v):
    return float(v.std(ddof=1) / math.sqrt(v.size))


def convolution_offsets(mollifier, seed, n=N_OFFSETS):
    return mollifier.sample(n, seed)


def resolvent_convergence_check(base_kernel, x0, f, lam, eps_list, cfg, N, M, *, mu=None,
                                n_offsets=N_OFFSETS, backend=None, workers=1):
    """|(S^eps f * phi_eps)(x0) - S f(x0)| for each eps.

    The convolution is estimated by starting path i at x0 - z_{i mod n_offsets}
    with offsets z drawn from phi_eps. Both sides use paths 0..N-1, so the
    per-path differences give the combined standard error. mu is built once
    from M base-kernel paths (indices N.. onward, disjoint from the others).
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ConfigurationError("eps_list must be strictly decreasing")
    if mu is None:
        mu = estimate_mu(base_kernel, x0, lam, cfg, M, first_path=N, backend=backend,
                         workers=workers)
    ref = resolvent_samples(base_kernel, x0, f, lam, cfg, N, backend=backend, workers=workers)
    rows = []
    for k, eps in enumerate(eps_list):
        mk = MollifiedKernel(base_kernel, mu, build_mollifier(base_kernel.d, eps))
        z = convolution_offsets(mk.mollifier, cfg.master_seed + 7919 * (k + 1), n_offsets)
        starts = x0[None, :] - z[np.arange(N) % n_offsets]
        mk.ratio(starts[:n_offsets], np.ones((1, base_kernel.d)))
        fail = mk.failure_fraction()
        sim_kernel = mk.tabulated(center=float(x0[0])) if base_kernel.d == 1 else mk
        est = resolvent_samples(sim_kernel, starts, f, lam, cfg, N, backend=backend,
                                workers=workers)
        shifted = resolvent_samples(base_kernel, starts, f, lam, cfg, N, backend=backend,
                                    workers=workers)
        diff = est - ref
        effect = est - shifted
        rows.append(ConvergenceRow(eps, float(est.mean()), float(ref.mean()),
                                   abs(float(diff.mean())), _se(diff),
                                   float(effect.mean()), _se(effect), fail))
    return rows


@dataclass(frozen=True)
class KernelErrorRow:
    eps: float
    sup_error: float
    std_error: float
    support_failure_fraction: float

    def to_dict(self):
        return {"eps": self.eps, "sup_error": self.sup_error, "std_error": self.std_error,
                "support_failure_fraction": self.support_failure_fraction}


def kernel_convergence_check(base_kernel, mu, eps_list, x_grid, h_grid, *, n_groups=20,
                             max_failure_fraction=0.01):
    """sup over the grid of |n_eps - n| |h|^{d+alpha} for each eps.

    The standard error is a delete-one-group jackknife over n_groups groups
    of mu's paths.
    """
    x_grid = np.atleast_2d(np.asarray(x_grid, dtype=np.float64))
    h_grid = np.atleast_2d(np.asarray(h_grid, dtype=np.float64))
    if x_grid.shape[1] != base_kernel.d:
        x_grid = x_grid.reshape(-1, base_kernel.d)
    if h_grid.shape[1] != base_kernel.d:
        h_grid = h_grid.reshape(-1, base_kernel.d)
    h_free = not (base_kernel.radial or base_kernel.directional)
    hs = h_grid[:1] if h_free else h_grid
    rows = []
    for eps in eps_list:
        mk = MollifiedKernel(base_kernel, mu, build_mollifier(base_kernel.d, eps))
        full = []
        loo = []
        fails = 0
        for x in x_grid:
            for h in hs:
                num, den, r_x = mk.group_ratios(x, h, n_groups)
                fails += den.sum() < mk.rho
                full.append(abs(num.sum() / (den.sum() + mk.rho)))
                # leave-one-group-out: reweight to the remaining paths
                scale = n_groups / (n_groups - 1)
                loo.append(np.abs((num.sum() - num) * scale
                                  / ((den.sum() - den) * scale + mk.rho)))
        frac = fails / (len(x_grid) * len(hs))
        if frac > max_failure_fraction:
            raise SupportError(
                f"{frac:.1%} of grid points at eps={eps} have no occupation atoms nearby; "
                "increase M or shrink the grid")
        sup = float(max(full))
        loo_sup = np.max(np.array(loo), axis=0)
        g = n_groups
        se = math.sqrt((g - 1) / g * float(np.sum((loo_sup - loo_sup.mean()) ** 2)))
        rows.append(KernelErrorRow(float(eps), sup, se, frac))
    return rows


def bound_inheritance_check(mk, x_grid, h_grid):
    """Exact check of kappa <= n_eps |h|^{d+alpha} <= 1/kappa and h-symmetry.

    Returns (min ratio, max ratio, symmetric, passed).
    """
    x_grid = np.asarray(x_grid, dtype=np.float64).reshape(-1, mk.d)
    h_grid = np.asarray(h_grid, dtype=np.float64).reshape(-1, mk.d)
    X = np.repeat(x_grid, len(h_grid), axis=0)
    H = np.tile(h_grid, (len(x_grid), 1))
    r_pos = mk.ratio(X, H)
    r_neg = mk.ratio(X, -H)
    k = mk.bounds.kappa
    lo, hi = float(r_pos.min()), float(r_pos.max())
    sym = bool(np.array_equal(r_pos, r_neg))
    ok = lo >= k and hi <= 1.0 / k and sym and bool(np.all(r_neg >= k)) \
        and bool(np.all(r_neg <= 1.0 / k))
    return lo, hi, sym, ok
