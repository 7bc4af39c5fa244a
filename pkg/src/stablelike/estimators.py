"""Monte Carlo functionals of the process with 95% confidence intervals.

Every estimator draws paths ``first_path, ..., first_path + N - 1`` from the
sampler, so two estimators called with the same config and N share their
random numbers path by path. The ``*_samples`` functions return the per-path
values behind each estimate.
"""

from dataclasses import dataclass
import enum
import hashlib
import json
import math

import numpy as np

from .errors import ConfigurationError, DomainError, PreconditionError
from .geometry import as_region, contains_region
from .sampler import iter_batches, simulate_batch

Z95 = 1.959963984540054


class CIMethod(str, enum.Enum):
    CLT = "CLT"
    WILSON = "WILSON"


def wilson_interval(p, n, z=Z95):
    z2 = z * z
    denom = 1.0 + z2 / n
    mid = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    # the endpoints at p = 0 and p = 1 are exact; avoid rounding residue there
    lo = 0.0 if p == 0 else max(0.0, mid - half)
    hi = 1.0 if p == 1 else min(1.0, mid + half)
    return lo, hi


@dataclass(frozen=True)
class EstimateWithCI:
    mean: float
    std_error: float
    n_samples: int
    method: CIMethod = CIMethod.CLT
    bias_bound: float = 0.0
    exact: bool = False

    def __post_init__(self):
        object.__setattr__(self, "method", CIMethod(self.method))
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")
        if self.method is CIMethod.WILSON and not 0.0 <= self.mean <= 1.0:
            raise ValueError("a Wilson estimate must be a probability")

    def interval(self, z=Z95):
        if self.exact:
            return self.mean, self.mean
        if self.method is CIMethod.WILSON:
            return wilson_interval(self.mean, self.n_samples, z)
        return self.mean - z * self.std_error, self.mean + z * self.std_error

    @property
    def lower(self):
        return self.interval()[0]

    @property
    def upper(self):
        return self.interval()[1]

    def to_dict(self):
        lo, hi = self.interval()
        return {"mean": self.mean, "std_error": self.std_error, "n": self.n_samples,
                "method": self.method.value, "bias_bound": self.bias_bound,
                "ci_low": lo, "ci_high": hi}


def clt_estimate(values, bias_bound=0.0):
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return EstimateWithCI(float(values.mean()), se, n, CIMethod.CLT, float(bias_bound))


def wilson_estimate(successes, n, bias_bound=0.0):
    p = successes / n
    return EstimateWithCI(float(p), math.sqrt(p * (1 - p) / n), int(n), CIMethod.WILSON,
                          float(bias_bound))


def digest(obj):
    """Short stable hash of a JSON-serializable parameter description."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, enum.Enum):
        return o.value
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")


CSV_COLUMNS = ("estimator", "params_digest", "mean", "std_error", "n", "bias_bound",
               "method", "ci_low", "ci_high", "seed")


def estimate_row(name, params, est, seed):
    row = {"estimator": name, "params_digest": digest(params), "seed": int(seed)}
    row.update(est.to_dict())
    return row


# --------------------------------------------------------------------- helpers

def _path_ids(n, first_path):
    if n < 1:
        raise PreconditionError("need at least one path")
    return np.arange(first_path, first_path + n, dtype=np.int64)


def _grid_bias(cfg):
    # GAUSS paths are read on the gauss_dt grid; disclosed as an O(dt) term
    return cfg.gauss_dt if cfg.gauss else 0.0


def _per_path(kernel, x0, cfg, ids, fn, backend, workers, **sim_kw):
    """Concatenate ``fn(chunk)`` over streamed chunks; memory stays per chunk."""
    parts = [fn(res) for res in iter_batches(kernel, x0, cfg, ids, record=True,
                                             backend=backend, workers=workers, **sim_kw)]
    return np.concatenate(parts)


def _horizon_fraction(res):
    return float(np.mean(res.status == 0))


def _segment_starts(res):
    return res.offsets[:-1] + np.arange(res.n_paths)


def _run_sums(res, inside):
    """Per path, the correctly rounded sum of holding times flagged ``inside``.

    Consecutive flagged intervals are merged into runs first, so a path that
    stays inside until it stops gets exactly its stop time.
    """
    path, _, t_lo, t_hi = res.segments()
    n = res.n_paths
    m = inside.size
    same_prev = np.zeros(m, dtype=bool)
    same_prev[1:] = path[1:] == path[:-1]
    same_next = np.zeros(m, dtype=bool)
    same_next[:-1] = path[:-1] == path[1:]
    prev_in = np.zeros(m, dtype=bool)
    prev_in[1:] = inside[:-1]
    next_in = np.zeros(m, dtype=bool)
    next_in[:-1] = inside[1:]
    starts = np.flatnonzero(inside & ~(same_prev & prev_in))
    ends = np.flatnonzero(inside & ~(same_next & next_in))
    run_path = path[starts]
    run_t0 = t_lo[starts]
    run_t1 = t_hi[ends]
    out = np.zeros(n)
    n_runs = np.bincount(run_path, minlength=n)
    single = n_runs[run_path] == 1
    out[run_path[single]] = run_t1[single] - run_t0[single]
    multi = np.flatnonzero(~single)
    if multi.size:
        # runs of one path are contiguous; fsum keeps the result correctly rounded
        bounds = np.flatnonzero(np.diff(run_path[multi])) + 1
        for grp in np.split(multi, bounds):
            out[run_path[grp[0]]] = math.fsum(np.concatenate([run_t1[grp], -run_t0[grp]]))
    return out


# ------------------------------------------------------------------ exit times

def exit_time_samples(kernel, x0, domain, cfg, N, *, first_path=0, backend=None, workers=1):
    """Per-path exit times (censored at t_max) and the censored fraction."""
    res = simulate_batch(kernel, x0, cfg, _path_ids(N, first_path), domain=domain,
                         record=False, backend=backend, workers=workers)
    return res.stop_time, _horizon_fraction(res)


def exit_time_mean(kernel, x0, domain, cfg, N, *, first_path=0, backend=None, workers=1):
    """Mean first exit time from ``domain``.

    Paths still inside at t_max contribute t_max; the bias bound discloses
    P(tau > t_max) * t_max.
    """
    if N < 2:
        raise PreconditionError("exit_time_mean needs N >= 2")
    values, censored = exit_time_samples(kernel, x0, domain, cfg, N, first_path=first_path,
                                         backend=backend, workers=workers)
    return clt_estimate(values, censored * cfg.t_max + _grid_bias(cfg))


# ----------------------------------------------------------- hitting probability

def hit_indicators(kernel, y, A, container, cfg, N, *, first_path=0, backend=None, workers=1):
    A = as_region(A, kernel.d)
    if getattr(A, "empty", False):
        return np.zeros(N, dtype=bool), 0.0
    if not contains_region(container, A):
        raise PreconditionError("A must lie inside the container")
    res = simulate_batch(kernel, y, cfg, _path_ids(N, first_path), domain=container,
                         target=A, record=False, backend=backend, workers=workers)
    return res.hit, _horizon_fraction(res)


def hitting_probability(kernel, y, A, container, cfg, N, *, first_path=0, backend=None,
                        workers=1):
    """P(the path enters A before leaving the container), Wilson interval.

    Paths that reach t_max without either event count as misses; their
    fraction is the bias bound. An empty A gives an exact zero.
    """
    A = as_region(A, kernel.d)
    if getattr(A, "empty", False):
        return EstimateWithCI(0.0, 0.0, int(N), CIMethod.WILSON, 0.0, exact=True)
    hits, censored = hit_indicators(kernel, y, A, container, cfg, N, first_path=first_path,
                                    backend=backend, workers=workers)
    return wilson_estimate(int(hits.sum()), hits.size, censored + _grid_bias(cfg))


# --------------------------------------------------------------- occupation time

def occupation_samples(kernel, x0, B, domain, cfg, N, *, first_path=0, backend=None,
                       workers=1, result=None, exact=True):
    """Per-path time spent in B before leaving ``domain`` (or t_max).

    Exact on the piecewise-constant skeleton. A precomputed ``result`` from
    :func:`simulate_batch` (with ``domain`` and ``record=True``) may be
    passed to score several sets on the same paths. ``exact=False`` replaces
    the correctly rounded run sums by a plain float accumulation.
    """
    B = as_region(B, kernel.d)
    if not contains_region(domain, B):
        raise PreconditionError("B must lie inside the domain")
    if result is None:
        return _per_path(kernel, x0, cfg, _path_ids(N, first_path),
                         lambda r: _occupation(r, B, exact), backend, workers, domain=domain)
    return _occupation(result, B, exact)


def _occupation(result, B, exact):
    if getattr(B, "empty", False):
        return np.zeros(result.n_paths)
    path, pos, t_lo, t_hi = result.segments()
    inside = B.contains(pos)
    if not exact:
        return np.bincount(path, weights=np.where(inside, t_hi - t_lo, 0.0),
                           minlength=result.n_paths)
    return _run_sums(result, inside)


def occupation_time(kernel, x0, B, domain, cfg, N, *, first_path=0, backend=None, workers=1,
                    result=None):
    if result is None:
        B = as_region(B, kernel.d)
        if not contains_region(domain, B):
            raise PreconditionError("B must lie inside the domain")
        # second column flags paths that reached t_max
        both = _per_path(kernel, x0, cfg, _path_ids(N, first_path),
                         lambda r: np.column_stack([_occupation(r, B, True), r.status == 0]),
                         backend, workers, domain=domain)
        values, censored = both[:, 0], float(both[:, 1].mean())
    else:
        values = occupation_samples(kernel, x0, B, domain, cfg, N, result=result)
        censored = _horizon_fraction(result)
    return clt_estimate(values, censored * cfg.t_max + _grid_bias(cfg))


# ------------------------------------------------------------- tube probability

@dataclass(frozen=True)
class Polyline:
    """Continuous piecewise-linear curve through (times[k], points[k])."""

    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64).ravel()
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim == 1:
            p = p[:, None]
        if t.size < 2 or p.shape[0] != t.size:
            raise ConfigurationError("a polyline needs at least two (time, point) vertices")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigurationError("polyline times must start at 0 and increase strictly")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(p))):
            raise ConfigurationError("polyline vertices must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @classmethod
    def from_vertices(cls, vertices):
        ts, ps = zip(*vertices)
        return cls(np.array(ts, dtype=np.float64),
                   np.array([np.atleast_1d(p) for p in ps], dtype=np.float64))

    @property
    def d(self):
        return self.points.shape[1]

    @property
    def t_end(self):
        return float(self.times[-1])

    def __call__(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.stack([np.interp(s, self.times, self.points[:, k]) for k in range(self.d)],
                        axis=-1)

    def to_dict(self):
        return {"times": self.times.tolist(), "points": self.points.tolist()}


def tube_distances(result, phi):
    """Per path, sup over [0, t_end] of |X_s - phi(s)|.

    Distance from a fixed point to a segment is convex along the segment, so
    on each holding interval the sup sits at an interval end or at a vertex of
    phi inside it.
    """
    path, pos, t_lo, t_hi = result.segments()
    n = result.n_paths
    d_lo = np.linalg.norm(pos - phi(t_lo), axis=1)
    d_hi = np.linalg.norm(pos - phi(t_hi), axis=1)
    seg0 = _segment_starts(result)
    worst = np.maximum.reduceat(np.maximum(d_lo, d_hi), seg0)
    ev_path = np.repeat(np.arange(n), np.diff(result.offsets))
    for tv, pv in zip(phi.times[1:-1], phi.points[1:-1]):
        before = np.bincount(ev_path[result.times <= tv], minlength=n)
        here = pos[seg0 + before]
        worst = np.maximum(worst, np.linalg.norm(here - pv, axis=1))
    return worst


def tube_indicators(kernel, phi, eps, cfg, N, *, first_path=0, backend=None, workers=1):
    if not eps > 0:
        raise DomainError("tube radius must be positive")
    run_cfg = cfg.replace(t_max=phi.t_end)
    dist = _per_path(kernel, phi.points[0], run_cfg, _path_ids(N, first_path),
                     lambda r: tube_distances(r, phi), backend, workers)
    return dist < eps


def tube_probability(kernel, phi, eps, cfg, N, *, first_path=0, backend=None, workers=1):
    """P(sup_{s <= t_end} |X_s - phi(s)| < eps) from X_0 = phi(0); Wilson interval.

    The horizon is the last vertex time of ``phi``; ``cfg.t_max`` is ignored.
    """
    inside = tube_indicators(kernel, phi, eps, cfg, N, first_path=first_path,
                             backend=backend, workers=workers)
    return wilson_estimate(int(inside.sum()), inside.size, _grid_bias(cfg))


# ---------------------------------------------------------------------- resolvent

def discount_weights(lam, t_lo, t_hi):
    """(exp(-lam t_lo) - exp(-lam t_hi)) / lam, computed without cancellation."""
    return np.exp(-lam * t_lo) * -np.expm1(-lam * (t_hi - t_lo)) / lam


def resolvent_samples(kernel, x0, f, lam, cfg, N, *, first_path=0, backend=None, workers=1,
                      result=None):
    """Per-path sum of f(x_i) (e^{-lam t_i} - e^{-lam t_{i+1}}) / lam up to t_max."""
    if not lam > 0:
        raise DomainError(f"lambda must be positive, got {lam}")
    if result is None:
        return _per_path(kernel, x0, cfg, _path_ids(N, first_path),
                         lambda r: _discounted_sums(r, f, lam), backend, workers)
    return _discounted_sums(result, f, lam)


def _discounted_sums(result, f, lam):
    path, pos, t_lo, t_hi = result.segments()
    fv = np.asarray(f(pos), dtype=np.float64).reshape(-1)
    return np.bincount(path, weights=fv * discount_weights(lam, t_lo, t_hi),
                       minlength=result.n_paths)


def resolvent(kernel, x0, f, lam, cfg, N, *, f_sup, first_path=0, backend=None, workers=1):
    """E int_0^inf e^{-lam t} f(X_t) dt, truncated at t_max.

    The tail beyond t_max is disclosed as f_sup * e^{-lam t_max} / lam.
    """
    values = resolvent_samples(kernel, x0, f, lam, cfg, N, first_path=first_path,
                               backend=backend, workers=workers)
    tail = abs(f_sup) * math.exp(-lam * cfg.t_max) / lam
    return clt_estimate(values, tail + _grid_bias(cfg) * abs(f_sup))
