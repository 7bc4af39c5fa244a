"""Path simulation by Poisson thinning.

Candidate jumps arrive at the rate of the dominating measure
``kappa^{-1} |h|^{-d-alpha}`` restricted to ``|h| >= eps_cut``; a candidate
``h`` proposed at state ``x`` is kept with probability
``kappa * n(x, h) |h|^{d+alpha}``. The accepted jumps form exactly the process
whose kernel is ``n`` truncated below ``eps_cut``. Because the kernels are
symmetric no drift correction is needed. In GAUSS mode the removed small jumps
are replaced by Gaussian increments on a fixed time grid.

Two interchangeable backends produce the same paths from the same counter
slots: a compiled per-path loop (numba) and a numpy loop that advances every
path of a chunk in lockstep.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import enum
import math

import numpy as np

from . import _loops
from ._accel import resolve_backend
from .geometry import Ball, Cube, as_region, encode_region
from .errors import ConfigurationError, KernelBoundError, PreconditionError
from .kernels import envelope_intensity, small_jump_variance_scale
from .rng import (CAND_SLOTS, GRID_OFFSET, GRID_SLOTS, SLOT_ACCEPT, SLOT_DIR, SLOT_GAP,
                  SLOT_RADIUS, derive_keys, uniform_np)

DEFAULT_CHUNK = 256


class SmallJumpMode(str, enum.Enum):
    DROP = "DROP"
    GAUSS = "GAUSS"


@dataclass(frozen=True)
class SimConfig:
    eps_cut: float = 1e-3
    t_max: float = 20.0
    small_jump_mode: SmallJumpMode = SmallJumpMode.DROP
    gauss_dt: float = 1e-3
    master_seed: int = 0

    def __post_init__(self):
        try:
            mode = SmallJumpMode(str(getattr(self.small_jump_mode, "value",
                                             self.small_jump_mode)).upper())
        except ValueError:
            raise ConfigurationError(
                f"small_jump_mode must be DROP or GAUSS, got {self.small_jump_mode!r}") from None
        object.__setattr__(self, "small_jump_mode", mode)
        if not 0 < self.eps_cut < 1:
            raise ConfigurationError(f"eps_cut must lie in (0, 1), got {self.eps_cut}")
        if not self.t_max > 0:
            raise ConfigurationError(f"t_max must be positive, got {self.t_max}")
        if mode is SmallJumpMode.GAUSS and not self.gauss_dt > 0:
            raise ConfigurationError("gauss_dt must be positive in GAUSS mode")
        seed = int(self.master_seed)
        if not 0 <= seed < 2 ** 64:
            raise ConfigurationError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", seed)

    @classmethod
    def for_alpha(cls, alpha, **kw):
        """Defaults: DROP with eps_cut 1e-3 up to alpha 1.5, GAUSS above."""
        if "small_jump_mode" not in kw:
            kw["small_jump_mode"] = SmallJumpMode.GAUSS if alpha > 1.5 else SmallJumpMode.DROP
        return cls(**kw)

    def replace(self, **kw):
        cur = {"eps_cut": self.eps_cut, "t_max": self.t_max,
               "small_jump_mode": self.small_jump_mode, "gauss_dt": self.gauss_dt,
               "master_seed": self.master_seed}
        cur.update(kw)
        return SimConfig(**cur)

    @property
    def gauss(self):
        return self.small_jump_mode is SmallJumpMode.GAUSS

    def to_dict(self):
        return {"eps_cut": self.eps_cut, "t_max": self.t_max,
                "small_jump_mode": self.small_jump_mode.value, "gauss_dt": self.gauss_dt,
                "master_seed": self.master_seed}


@dataclass
class PathSkeleton:
    """Piecewise-constant path: X_t = positions[i] on [times[i], times[i+1])."""

    start: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    horizon: float
    truncated_mass_bound: float = 0.0

    @property
    def events(self):
        return [(float(t), x.copy()) for t, x in zip(self.times, self.positions)]

    def position_at(self, t):
        i = np.searchsorted(self.times, t, side="right")
        return self.start.copy() if i == 0 else self.positions[i - 1].copy()


@dataclass
class ExitRecord:
    exit_time: float
    exit_position: np.ndarray
    pre_exit_position: np.ndarray
    exited: bool


@dataclass
class BatchResult:
    """Flat record of a chunk of paths.

    Events of path k are ``times[offsets[k]:offsets[k+1]]`` (and positions);
    ``stop_time`` is the exit/hit time, or the horizon if neither happened.
    """

    path_index: np.ndarray
    starts: np.ndarray
    status: np.ndarray
    stop_time: np.ndarray
    end_pos: np.ndarray
    pre_pos: np.ndarray
    n_candidates: np.ndarray
    n_accepted: np.ndarray
    offsets: np.ndarray
    times: np.ndarray
    positions: np.ndarray
    horizon: float
    truncated_mass_bound: float = 0.0

    @property
    def n_paths(self):
        return self.path_index.size

    @property
    def exited(self):
        return self.status == _loops.ST_EXIT

    @property
    def hit(self):
        return (self.status == _loops.ST_HIT) | (self.status == _loops.ST_START_IN_TARGET)

    def skeleton(self, k):
        a, b = self.offsets[k], self.offsets[k + 1]
        return PathSkeleton(self.starts[k].copy(), self.times[a:b].copy(),
                            self.positions[a:b].copy(), self.horizon,
                            self.truncated_mass_bound)

    def exit_record(self, k):
        return ExitRecord(float(self.stop_time[k]), self.end_pos[k].copy(),
                          self.pre_pos[k].copy(), bool(self.status[k] == _loops.ST_EXIT))

    def segments(self):
        """Holding intervals of every path up to its stop time.

        Returns (path, position, t_lo, t_hi) with one row per interval; the
        first interval of each path sits at the start point.
        """
        n = self.n_paths
        counts = np.diff(self.offsets) + 1
        path = np.repeat(np.arange(n), counts)
        seg_start = np.concatenate([[0], np.cumsum(counts)[:-1]])
        m = counts.sum()
        d = self.starts.shape[1]
        pos = np.empty((m, d))
        t_lo = np.empty(m)
        t_hi = np.empty(m)
        first = seg_start
        pos[first] = self.starts
        t_lo[first] = 0.0
        rest = np.ones(m, dtype=bool)
        rest[first] = False
        pos[rest] = self.positions
        t_lo[rest] = self.times
        t_hi[:-1] = t_lo[1:]
        last = seg_start + counts - 1
        t_hi[last] = self.stop_time
        return path, pos, t_lo, t_hi


def _concat(results, horizon, tmb):
    if len(results) == 1:
        return results[0]
    offs = [results[0].offsets]
    total = results[0].offsets[-1]
    for r in results[1:]:
        offs.append(r.offsets[1:] + total)
        total += r.offsets[-1]
    return BatchResult(
        path_index=np.concatenate([r.path_index for r in results]),
        starts=np.concatenate([r.starts for r in results]),
        status=np.concatenate([r.status for r in results]),
        stop_time=np.concatenate([r.stop_time for r in results]),
        end_pos=np.concatenate([r.end_pos for r in results]),
        pre_pos=np.concatenate([r.pre_pos for r in results]),
        n_candidates=np.concatenate([r.n_candidates for r in results]),
        n_accepted=np.concatenate([r.n_accepted for r in results]),
        offsets=np.concatenate(offs),
        times=np.concatenate([r.times for r in results]),
        positions=np.concatenate([r.positions for r in results]),
        horizon=horizon, truncated_mass_bound=tmb)


def truncated_mass_bound(bounds, cfg):
    """Upper bound on the variance of the removed small jumps over [0, t_max]."""
    return small_jump_variance_scale(bounds, cfg.eps_cut) * cfg.t_max / bounds.kappa


def _check_domain(domain):
    if domain is not None and not isinstance(domain, (Ball, Cube)):
        raise ConfigurationError("domain must be a Ball or a Cube")


# ---------------------------------------------------------------- numpy lockstep

def _np_direction(keys, base, d):
    if d == 1:
        u = uniform_np(keys, base + np.uint64(SLOT_DIR))
        return np.where(u < 0.5, 1.0, -1.0)[:, None]
    z = _np_normals(keys, base + np.uint64(SLOT_DIR), d)
    if d == 2:
        nz = np.sqrt(z[:, 0] * z[:, 0] + z[:, 1] * z[:, 1])
    else:
        nz = np.sqrt(z[:, 0] * z[:, 0] + z[:, 1] * z[:, 1] + z[:, 2] * z[:, 2])
    return z / nz[:, None]


def _np_normals(keys, base, d):
    out = np.empty((keys.size, d))
    for j in range((d + 1) // 2):
        u1 = uniform_np(keys, base + np.uint64(2 * j))
        u2 = uniform_np(keys, base + np.uint64(2 * j + 1))
        rad = np.sqrt(-2.0 * np.log(u1))
        out[:, 2 * j] = rad * np.cos(2.0 * math.pi * u2)
        if 2 * j + 1 < d:
            out[:, 2 * j + 1] = rad * np.sin(2.0 * math.pi * u2)
    return out


def _simulate_chunk_numpy(kernel, keys, starts, cfg, lam, var_scale, domain, target, record):
    n, d = starts.shape
    kappa = kernel.bounds.kappa
    inv_alpha = 1.0 / kernel.bounds.alpha
    eps, t_max, dt = cfg.eps_cut, cfg.t_max, cfg.gauss_dt
    gauss = cfg.gauss
    slots = np.uint64(CAND_SLOTS)

    x = starts.copy()
    pre = starts.copy()
    status = np.zeros(n, dtype=np.int64)
    stop = np.full(n, float(t_max))
    n_cand = np.zeros(n, dtype=np.int64)
    n_acc = np.zeros(n, dtype=np.int64)
    ck = np.zeros(n, dtype=np.uint64)
    gj = np.zeros(n, dtype=np.int64)
    inv_lam = 1.0 / lam
    t_cand = -np.log(uniform_np(keys, np.uint64(SLOT_GAP))) * inv_lam
    t_grid = np.full(n, dt if gauss else np.inf)

    active = np.ones(n, dtype=bool)
    if target is not None:
        start_in = target.contains(x)
        status[start_in] = _loops.ST_START_IN_TARGET
        stop[start_in] = 0.0
        active &= ~start_in

    ev_path, ev_t, ev_x = [], [], []
    idx = np.flatnonzero(active)
    while idx.size:
        is_grid = (t_grid[idx] <= t_cand[idx]) if gauss else np.zeros(idx.size, dtype=bool)
        t_next = np.where(is_grid, t_grid[idx], t_cand[idx])
        done = t_next > t_max
        moved_idx = []
        moved_t = []

        g = idx[is_grid & ~done]
        if g.size:
            mom = kernel.axis_moments(x[g])
            z = _np_normals(keys[g], np.uint64(GRID_OFFSET) + gj[g].astype(np.uint64)
                            * np.uint64(GRID_SLOTS), d)
            pre[g] = x[g]
            x[g] = x[g] + np.sqrt(var_scale * mom * dt) * z
            moved_idx.append(g)
            moved_t.append(t_grid[g])
            gj[g] += 1
            t_grid[g] = (gj[g] + 1) * dt

        c = idx[~is_grid & ~done]
        if c.size:
            n_cand[c] += 1
            base = ck[c] * slots
            kc = keys[c]
            u = _np_direction(kc, base, d)
            if kernel.radial:
                r = eps * uniform_np(kc, base + np.uint64(SLOT_RADIUS)) ** (-inv_alpha)
                acc = kappa * kernel.ratio(x[c], r[:, None] * u)
            else:
                acc = kappa * kernel.ratio(x[c], u)
            bad = ~((acc >= 0.0) & (acc <= 1.0 + _loops.ACCEPT_TOL))
            if np.any(bad):
                b = c[bad]
                status[b] = _loops.ST_BAD_KERNEL
                stop[b] = acc[bad]
                active[b] = False
            ok = ~bad
            a_mask = ok & (uniform_np(kc, base + np.uint64(SLOT_ACCEPT)) < acc)
            a = c[a_mask]
            if a.size:
                if kernel.radial:
                    ra = r[a_mask]
                else:
                    ra = eps * uniform_np(kc[a_mask], base[a_mask]
                                          + np.uint64(SLOT_RADIUS)) ** (-inv_alpha)
                pre[a] = x[a]
                x[a] = x[a] + ra[:, None] * u[a_mask]
                n_acc[a] += 1
                moved_idx.append(a)
                moved_t.append(t_cand[a])
            ck[c] += np.uint64(1)
            t_cand[c] += -np.log(uniform_np(kc, ck[c] * slots + np.uint64(SLOT_GAP))) * inv_lam

        active[idx[done]] = False
        if moved_idx:
            m = np.concatenate(moved_idx)
            tm = np.concatenate(moved_t)
            if record:
                ev_path.append(m)
                ev_t.append(tm)
                ev_x.append(x[m].copy())
            if domain is not None:
                out = ~domain.contains(x[m])
                e = m[out]
                status[e] = _loops.ST_EXIT
                stop[e] = tm[out]
                active[e] = False
                keep = ~out
                m, tm = m[keep], tm[keep]
            if target is not None and m.size:
                h = target.contains(x[m])
                e = m[h]
                status[e] = _loops.ST_HIT
                stop[e] = tm[h]
                active[e] = False
        idx = idx[active[idx]]

    ended = (status == _loops.ST_EXIT) | (status == _loops.ST_HIT)
    pre_out = np.where(ended[:, None], pre, x)
    if record and ev_path:
        p = np.concatenate(ev_path)
        order = np.argsort(p, kind="stable")
        times = np.concatenate(ev_t)[order]
        positions = np.concatenate(ev_x)[order]
        counts = np.bincount(p, minlength=n)
    else:
        times = np.zeros(0)
        positions = np.zeros((0, d))
        counts = np.zeros(n, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return status, stop, x, pre_out, n_cand, n_acc, offsets, times, positions


# ---------------------------------------------------------------- drivers

def _empty_region_arrays(d):
    return np.zeros(0, dtype=np.int64), np.zeros((0, d)), np.zeros(0)


def _run_chunk(kernel, cfg, keys, starts, domain, target, record, backend):
    b = kernel.bounds
    lam = envelope_intensity(b, cfg.eps_cut)
    var_scale = small_jump_variance_scale(b, cfg.eps_cut)
    if cfg.gauss:
        # fail early with a clear message if GAUSS moments are unavailable
        kernel.axis_moments(starts[:1])
    if backend == "numba":
        spec = kernel.jit_spec()
        dom = encode_region(domain, b.d) if domain is not None else _empty_region_arrays(b.d)
        tgt = encode_region(target, b.d) if target is not None else _empty_region_arrays(b.d)
        out = _loops.simulate_chunk(
            spec.ratio, spec.moments, spec.params, spec.table, kernel.radial,
            kernel.directional,
            keys, starts, b.kappa, b.alpha, lam, cfg.eps_cut, cfg.t_max,
            cfg.gauss, cfg.gauss_dt, var_scale,
            dom[0], dom[1], dom[2], tgt[0], tgt[1], tgt[2], record)
    else:
        out = _simulate_chunk_numpy(kernel, keys, starts, cfg, lam, var_scale,
                                    domain, target, record)
    status = out[0]
    if np.any(status == _loops.ST_BAD_KERNEL):
        k = int(np.flatnonzero(status == _loops.ST_BAD_KERNEL)[0])
        raise KernelBoundError(
            f"acceptance probability {out[1][k]!r} outside [0, 1] at x={out[2][k]}; "
            f"the declared kappa={b.kappa} does not bound this kernel")
    return out


def simulate_batch(kernel, x0, cfg, path_indices, domain=None, target=None, record=True,
                   backend=None, workers=1, chunk_size=DEFAULT_CHUNK):
    """Simulate many paths; returns a :class:`BatchResult` ordered by ``path_indices``.

    ``x0`` is one start point or an array of starts (one per path). Paths
    stop on leaving ``domain``, on landing in ``target``, or at the horizon.
    Results depend only on ``(cfg.master_seed, path_index)``, never on
    ``workers`` or ``chunk_size``.
    """
    return _concat(list(iter_batches(kernel, x0, cfg, path_indices, domain, target,
                                     record, backend, workers, chunk_size)),
                   cfg.t_max, truncated_mass_bound(kernel.bounds, cfg))


def iter_batches(kernel, x0, cfg, path_indices, domain=None, target=None, record=True,
                 backend=None, workers=1, chunk_size=DEFAULT_CHUNK):
    """Like :func:`simulate_batch` but yields one BatchResult per chunk, in order."""
    d = kernel.d
    backend = resolve_backend(backend)
    if backend == "numba" and kernel.jit_spec() is None:
        backend = "numpy"
    _check_domain(domain)
    target = None if target is None else as_region(target, d)
    if target is not None and getattr(target, "empty", False):
        target = None
    path_indices = np.asarray(path_indices, dtype=np.int64).reshape(-1)
    n = path_indices.size
    starts = np.asarray(x0, dtype=np.float64)
    if starts.ndim <= 1:
        starts = np.broadcast_to(starts.reshape(d), (n, d))
    starts = np.ascontiguousarray(starts, dtype=np.float64).reshape(n, d)
    if domain is not None and not np.all(domain.contains(starts)):
        raise PreconditionError("start point outside the domain")
    tmb = truncated_mass_bound(kernel.bounds, cfg)

    bounds_list = [(a, min(a + chunk_size, n)) for a in range(0, n, chunk_size)]

    def work(ab):
        a, b = ab
        keys = derive_keys(cfg.master_seed, path_indices[a:b])
        st = np.ascontiguousarray(starts[a:b])
        out = _run_chunk(kernel, cfg, keys, st, domain, target, record, backend)
        return BatchResult(path_indices[a:b].copy(), st.copy(), out[0], out[1], out[2],
                           out[3], out[4], out[5], out[6], out[7], out[8], cfg.t_max, tmb)

    if workers <= 1 or len(bounds_list) <= 1:
        for ab in bounds_list:
            yield work(ab)
    else:
        # bounded window keeps at most a few finished chunks in memory
        window = 2 * workers
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for g in range(0, len(bounds_list), window):
                yield from pool.map(work, bounds_list[g:g + window])


def simulate_path(kernel, x0, cfg, path_index, backend=None):
    """One path on [0, t_max]; a pure function of (cfg.master_seed, path_index)."""
    res = simulate_batch(kernel, x0, cfg, [path_index], backend=backend)
    return res.skeleton(0)


def simulate_until_exit(kernel, x0, domain, cfg, path_index, backend=None):
    """One path stopped on its first jump out of ``domain`` (or at t_max)."""
    if not np.all(domain.contains(np.atleast_1d(np.asarray(x0, dtype=np.float64)))):
        raise PreconditionError("start point outside the domain")
    res = simulate_batch(kernel, x0, cfg, [path_index], domain=domain, backend=backend)
    return res.skeleton(0), res.exit_record(0)


def sample_candidate(bounds, eps_cut, rng_stream, size=None):
    """Draw displacements from the normalized envelope measure on |h| >= eps_cut.

    Radius is Pareto(alpha) with scale eps_cut, direction is uniform on the
    sphere. Returns shape (d,) or (size, d).
    """
    if not eps_cut > 0:
        raise ConfigurationError("eps_cut must be positive")
    n = 1 if size is None else int(size)
    d = bounds.d
    r = eps_cut * rng_stream.uniforms(n) ** (-1.0 / bounds.alpha)
    if d == 1:
        u = np.where(rng_stream.uniforms(n) < 0.5, 1.0, -1.0)[:, None]
    else:
        z = rng_stream.normals(n * d).reshape(n, d)
        u = z / np.sqrt(np.sum(z * z, axis=1))[:, None]
    h = r[:, None] * u
    return h[0] if size is None else h
