"""Statistical verification suites, one per statement about the process.

"Positive probability" or "positive expectation" is checked as a 95% lower
confidence bound above zero; no suite tries to estimate the unspecified
constants. Each suite returns a :class:`VerificationResult` whose checks all
carry nonzero sample counts.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import FamilyError, PreconditionError
from .estimators import (Polyline, clt_estimate, digest, estimate_row, exit_time_mean,
                         hit_indicators, occupation_samples, tube_distances, wilson_estimate)
from .geometry import Ball, Cube, DyadicUnion, as_region, contains_region
from .kernels import ConstantStable
from .mollify import (bound_inheritance_check, build_mollifier, estimate_mu,
                      kernel_convergence_check, MollifiedKernel, resolvent_convergence_check)
from .rng import sub_seed
from .sampler import simulate_batch

TREND_SE_FACTOR = 2.0


@dataclass(frozen=True)
class Check:
    description: str
    observed: float
    threshold: float
    passed: bool
    n_samples: int
    detail: str = ""

    def to_dict(self):
        return {"description": self.description, "observed": self.observed,
                "threshold": self.threshold, "pass": self.passed,
                "n_samples": self.n_samples, "detail": self.detail}


@dataclass
class VerificationResult:
    theorem_id: str
    checks: list
    params: dict
    seed: int
    estimates: list = field(default_factory=list)
    table: list = field(default_factory=list)

    @property
    def overall(self):
        return bool(self.checks) and all(c.passed for c in self.checks)

    @property
    def params_digest(self):
        return digest({"theorem": self.theorem_id, "params": self.params, "seed": self.seed})

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def to_dict(self):
        return {"theorem_id": self.theorem_id, "overall": self.overall,
                "seed": self.seed, "params_digest": self.params_digest,
                "params": self.params, "checks": [c.to_dict() for c in self.checks],
                "table": self.table}


def _combined(a, b):
    return math.sqrt(a * a + b * b)


# ------------------------------------------------------------------ exit scaling

def verify_exit_scaling(kernel, r_list, cfg, N, *, backend=None, workers=1):
    """E tau(ball(0, r)) / r^alpha is the same for every r (exact for constant kernels)."""
    if not isinstance(kernel, ConstantStable):
        raise FamilyError("exit-time scaling is exact only for constant-stable kernels")
    alpha = kernel.bounds.alpha
    origin = np.zeros(kernel.d)
    scaled = []
    checks = []
    estimates = []
    for k, r in enumerate(r_list):
        est = exit_time_mean(kernel, origin, Ball(origin, r), cfg, N, first_path=k * N,
                             backend=backend, workers=workers)
        estimates.append(estimate_row("exit_time_mean", {"r": r}, est, cfg.master_seed))
        scaled.append((est.mean / r ** alpha, est.std_error / r ** alpha, r))
        checks.append(Check(f"E tau(B(0,{r})) lower confidence bound > 0",
                            est.lower, 0.0, est.lower > 0, N))
    ref, ref_se, r0 = scaled[0]
    for val, se, r in scaled[1:]:
        gap = abs(val - ref)
        tol = 4 * _combined(se, ref_se)
        checks.append(Check(f"E tau(r)/r^alpha equal for r={r0} and r={r}", gap, tol,
                            gap <= tol, N, f"ratios {ref:.6g} and {val:.6g}"))
    if len(scaled) == 1:
        checks.append(Check("single radius: scaling holds vacuously", 0.0, 0.0, True, N))
    table = [{"r": r, "scaled_mean": v, "scaled_se": s} for v, s, r in scaled]
    return VerificationResult("exit-scaling", checks,
                              {"kernel": kernel.describe(), "r_list": list(r_list),
                               "cfg": cfg.to_dict(), "N": N},
                              cfg.master_seed, estimates, table)


# ------------------------------------------------------------------ hitting bound

def verify_hitting_bound(kernel, A_list, y_list, cfg, N, *, x=None, backend=None, workers=1):
    """P^y(T_A < tau_{B(x,3)}) / |A| stays bounded below over shrinking sets A."""
    d = kernel.d
    x = np.zeros(d) if x is None else np.atleast_1d(np.asarray(x, dtype=np.float64))
    inner = Ball(x, 1.0)
    container = Ball(x, 3.0)
    A_list = [as_region(A, d) for A in A_list]
    for A in A_list:
        if getattr(A, "empty", False) or A.volume() <= 0:
            raise PreconditionError("every A must have positive volume")
        if not contains_region(inner, A):
            raise PreconditionError("every A must lie inside B(x, 1)")
    ys = [np.atleast_1d(np.asarray(y, dtype=np.float64)) for y in y_list]
    for y in ys:
        if not Ball(x, 2.0).contains(y):
            raise PreconditionError("every y must lie inside B(x, 2)")
    order = np.argsort([-A.volume() for A in A_list], kind="stable")
    checks = []
    estimates = []
    table = []
    min_ratio_lower = math.inf
    for j, y in enumerate(ys):
        probs = []
        for i in order:
            A = A_list[i]
            # common path indices across sets: nested sets give nested hits
            hits, censored = hit_indicators(kernel, y, A, container, cfg, N, first_path=j * N,
                                            backend=backend, workers=workers)
            est = wilson_estimate(int(hits.sum()), N, censored)
            vol = A.volume()
            probs.append((vol, est))
            min_ratio_lower = min(min_ratio_lower, est.lower / vol)
            estimates.append(estimate_row("hitting_probability",
                                          {"A": A.to_dict(), "y": y.tolist()}, est,
                                          cfg.master_seed))
            table.append({"y": y.tolist(), "volume": vol, "p": est.mean,
                          "ratio": est.mean / vol, "ratio_lower": est.lower / vol})
        for (v1, e1), (v2, e2) in zip(probs, probs[1:]):
            excess = e2.mean - e1.mean
            tol = 4 * _combined(e1.std_error, e2.std_error)
            checks.append(Check(f"hitting probability nonincreasing as |A| shrinks "
                                f"({v1:.4g} -> {v2:.4g}), y={y.tolist()}",
                                excess, tol, excess <= tol, N))
    checks.insert(0, Check("min over (A, y) of Wilson lower bound / |A| > 0",
                           min_ratio_lower, 0.0, min_ratio_lower > 0, N))
    return VerificationResult("hitting-bound", checks,
                              {"kernel": kernel.describe(), "A": [A.to_dict() for A in A_list],
                               "y": [y.tolist() for y in ys], "x": x.tolist(),
                               "cfg": cfg.to_dict(), "N": N},
                              cfg.master_seed, estimates, table)


# ---------------------------------------------------------------- support theorem

def verify_support_theorem(kernel, phi_list, eps_list, cfg, N, *, backend=None, workers=1):
    """Every tube {sup |X_s - phi(s)| < eps} has positive probability.

    Failing pairs are reported with the largest tube probability seen and
    the relation between eps and the truncation radius, so an unreachable
    tube shows up as a failure rather than a vacuous pass.
    """
    checks = []
    estimates = []
    table = []
    for i, phi in enumerate(phi_list):
        res = simulate_batch(kernel, phi.points[0], cfg.replace(t_max=phi.t_end),
                             np.arange(i * N, (i + 1) * N), record=True, backend=backend,
                             workers=workers)
        sup_dist = tube_distances(res, phi)
        jumps = res.n_accepted
        for eps in eps_list:
            inside = sup_dist < eps
            est = wilson_estimate(int(inside.sum()), N)
            detail = ""
            if not est.lower > 0:
                detail = (f"no path stayed in the tube; min sup distance "
                          f"{float(sup_dist.min()):.4g}, eps/eps_cut = {eps / cfg.eps_cut:.3g}, "
                          f"mean accepted jumps {float(jumps.mean()):.3g}")
                if not cfg.gauss and 2 * eps < cfg.eps_cut:
                    detail += ("; tube narrower than eps_cut/2: every jump leaves the tube "
                               "and the path cannot follow a moving curve")
            checks.append(Check(f"tube probability lower bound > 0 (phi #{i}, eps={eps})",
                                est.lower, 0.0, est.lower > 0, N, detail))
            estimates.append(estimate_row("tube_probability",
                                          {"phi": phi.to_dict(), "eps": eps}, est,
                                          cfg.master_seed))
            table.append({"phi": i, "eps": eps, "p": est.mean, "lower": est.lower})
    return VerificationResult("support-theorem", checks,
                              {"kernel": kernel.describe(),
                               "phi": [p.to_dict() for p in phi_list],
                               "eps": list(eps_list), "cfg": cfg.to_dict(), "N": N},
                              cfg.master_seed, estimates, table)


def zigzag(d=1, height=0.5, t0=1.0):
    """0 -> height e_1 -> 0 over [0, t0]."""
    top = np.zeros(d)
    top[0] = height
    return Polyline([0.0, t0 / 2, t0], np.stack([np.zeros(d), top, np.zeros(d)]))


# ------------------------------------------------------------------ phi envelope

def random_dyadic_sets(d, level, measure, count, seed):
    """``count`` random unions of grid cells of Q(0,1) with volume >= measure."""
    cube = Cube(np.zeros(d), 1.0)
    n_cells = (2 ** level) ** d
    k = min(n_cells, math.ceil(measure * n_cells - 1e-9))
    gen = np.random.default_rng(seed)
    return [DyadicUnion(cube, level, gen.choice(n_cells, size=k, replace=False))
            for _ in range(count)]


def default_x_grid(d, per_axis=3):
    """Points of Q(0, 1/2) on a small regular grid."""
    axis = np.linspace(-0.2, 0.2, per_axis)
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


def estimate_phi_envelope(kernel, measure_grid, random_set_count, cfg, N, *, x_grid=None,
                          level=7, backend=None, workers=1):
    """Lower envelope of E^x int_0^{tau_Q(0,1)} 1_B(X_s) ds over sets with |B| >= level.

    For each measure level, random dyadic sets B of at least that volume are
    scored on shared paths from each grid point x of Q(0,1/2). The envelope is
    the running minimum taken from the largest level down, so it is
    nondecreasing by construction; lower confidence bounds are enveloped the
    same way.
    """
    d = kernel.d
    grid = sorted(float(e) for e in measure_grid)
    if not grid or grid[0] <= 0 or grid[-1] >= 1:
        raise PreconditionError("measure levels must lie in (0, 1)")
    x_grid = default_x_grid(d) if x_grid is None else np.asarray(x_grid, float).reshape(-1, d)
    if not np.all(Cube(np.zeros(d), 0.5).contains(x_grid)):
        raise PreconditionError("x grid must lie in Q(0, 1/2)")
    domain = Cube(np.zeros(d), 1.0)
    sets = {e: random_dyadic_sets(d, level, e, random_set_count,
                                  sub_seed(cfg.master_seed, f"phi-sets-{e!r}"))
            for e in grid}
    raw = {e: (math.inf, math.inf) for e in grid}
    for ix, x in enumerate(x_grid):
        res = simulate_batch(kernel, x, cfg, np.arange(ix * N, (ix + 1) * N), domain=domain,
                             record=True, backend=backend, workers=workers)
        for e in grid:
            for B in sets[e]:
                vals = occupation_samples(kernel, x, B, domain, cfg, N, result=res,
                                          exact=False)
                est = clt_estimate(vals)
                raw[e] = (min(raw[e][0], est.mean), min(raw[e][1], est.lower))
    table = []
    env_mean = math.inf
    env_lower = math.inf
    envelope = {}
    for e in reversed(grid):
        env_mean = min(env_mean, raw[e][0])
        env_lower = min(env_lower, raw[e][1])
        envelope[e] = (env_mean, env_lower)
    checks = []
    for e in grid:
        m, lo = envelope[e]
        table.append({"measure": e, "phi_hat": m, "phi_lower": lo, "raw_min": raw[e][0]})
        checks.append(Check(f"phi_hat({e}) lower confidence bound > 0", lo, 0.0, lo > 0, N,
                            f"min over {random_set_count} sets x {len(x_grid)} points"))
    values = [envelope[e][0] for e in grid]
    mono = all(a <= b for a, b in zip(values, values[1:]))
    checks.append(Check("envelope nondecreasing", float(mono), 1.0, mono, N))
    return VerificationResult("phi-envelope", checks,
                              {"kernel": kernel.describe(), "measure_grid": grid,
                               "random_set_count": random_set_count, "level": level,
                               "x_grid": x_grid.tolist(), "cfg": cfg.to_dict(), "N": N},
                              cfg.master_seed, [], table)


# --------------------------------------------------------------- mollify pipeline

def _cos_field(x):
    return np.cos(2 * np.pi * x[..., 0])


def default_grids(d, n=32, x_extent=1.0):
    xs = np.linspace(-x_extent, x_extent, n)
    x_grid = np.zeros((n, d))
    x_grid[:, 0] = xs
    radii = np.geomspace(1e-2, 10.0, n)
    h_grid = np.zeros((n, d))
    h_grid[:, 0] = radii * np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    if d > 1:
        ang = np.linspace(0, np.pi, n, endpoint=False)
        h_grid[:, 0] = radii * np.cos(ang)
        h_grid[:, 1] = radii * np.sin(ang)
    return x_grid, h_grid


def verify_mollify_pipeline(base_kernel, eps_list, cfg, N, M, *, lam=1.0, x0=None, f=None,
                            f_sup=1.0, x_grid=None, h_grid=None, backend=None, workers=1):
    """Bound inheritance, resolvent convergence and kernel convergence in one result."""
    d = base_kernel.d
    x0 = np.zeros(d) if x0 is None else np.atleast_1d(np.asarray(x0, dtype=np.float64))
    f = _cos_field if f is None else f
    dx, dh = default_grids(d)
    x_grid = dx if x_grid is None else x_grid
    h_grid = dh if h_grid is None else h_grid
    eps_list = [float(e) for e in eps_list]
    mu = estimate_mu(base_kernel, x0, lam, cfg, M, first_path=N, backend=backend,
                     workers=workers)
    checks = []
    table = []
    k = base_kernel.bounds.kappa
    for eps in eps_list:
        mk = MollifiedKernel(base_kernel, mu, build_mollifier(d, eps))
        lo, hi, sym, ok = bound_inheritance_check(mk, x_grid, h_grid)
        checks.append(Check(f"kappa bounds and symmetry of n_eps on the grid (eps={eps})",
                            lo, k, ok, mu.n_paths,
                            f"ratio range [{lo:.6g}, {hi:.6g}] vs [{k}, {1 / k}], "
                            f"symmetric={sym}"))
    rows = resolvent_convergence_check(base_kernel, x0, f, lam, eps_list, cfg, N, M, mu=mu,
                                       backend=backend, workers=workers)
    krows = kernel_convergence_check(base_kernel, mu, eps_list, x_grid, h_grid)
    for r, kr in zip(rows, krows):
        table.append({**r.to_dict(), "kernel_sup_error": kr.sup_error,
                      "kernel_sup_se": kr.std_error})
    constant = isinstance(base_kernel, ConstantStable)
    if constant:
        for r, kr in zip(rows, krows):
            checks.append(Check(f"constant base: mollified kernel leaves the resolvent "
                                f"unchanged (eps={r.eps})", abs(r.kernel_effect), 0.0,
                                r.kernel_effect == 0.0, N))
            checks.append(Check(f"constant base: kernel error is zero (eps={kr.eps})",
                                kr.sup_error, 0.0, kr.sup_error == 0.0, mu.n_paths))
    elif len(eps_list) > 1:
        a, b = rows[0], rows[-1]
        gap = a.abs_error - b.abs_error
        tol = TREND_SE_FACTOR * _combined(a.combined_se, b.combined_se)
        checks.append(Check(f"resolvent error smaller at eps={b.eps} than at eps={a.eps}",
                            gap, tol, gap > tol, N,
                            f"errors {a.abs_error:.4g} and {b.abs_error:.4g}"))
        ka, kb = krows[0], krows[-1]
        gap = ka.sup_error - kb.sup_error
        tol = TREND_SE_FACTOR * _combined(ka.std_error, kb.std_error)
        checks.append(Check(f"kernel sup error smaller at eps={kb.eps} than at eps={ka.eps}",
                            gap, tol, gap > tol, mu.n_paths,
                            f"errors {ka.sup_error:.4g} and {kb.sup_error:.4g}"))
    return VerificationResult("mollify-pipeline", checks,
                              {"kernel": base_kernel.describe(), "eps": eps_list,
                               "lambda": lam, "x0": x0.tolist(), "f_sup": f_sup,
                               "cfg": cfg.to_dict(), "N": N, "M": M},
                              cfg.master_seed, [], table)
