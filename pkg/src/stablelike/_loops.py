"""Compiled path loop: Poisson thinning against the constant stable envelope.

One call simulates a chunk of paths. Random numbers come from fixed counter
slots (see :mod:`stablelike.rng`), so the numpy lockstep implementation in
:mod:`stablelike.sampler` reproduces the same paths.

Status codes: 0 horizon reached, 1 left the domain, 2 landed in the target,
3 started inside the target, -1 acceptance probability out of range.
"""

import math

import numpy as np

from ._accel import njit
from .rng import (CAND_SLOTS, GRID_OFFSET, GRID_SLOTS, SLOT_ACCEPT, SLOT_DIR,
                  SLOT_GAP, SLOT_RADIUS, uniform)

ST_HORIZON = 0
ST_EXIT = 1
ST_HIT = 2
ST_START_IN_TARGET = 3
ST_BAD_KERNEL = -1

ACCEPT_TOL = 1e-9
_U_SLOTS = np.uint64(CAND_SLOTS)
_U_GRID_SLOTS = np.uint64(GRID_SLOTS)
_U_GRID_OFFSET = np.uint64(GRID_OFFSET)
_U_GAP = np.uint64(SLOT_GAP)
_U_ACC = np.uint64(SLOT_ACCEPT)
_U_RAD = np.uint64(SLOT_RADIUS)
_U_DIR = np.uint64(SLOT_DIR)
_TWO_PI = 2.0 * math.pi


@njit(cache=True, nogil=True)
def in_region(kinds, centers, sizes, x):
    for k in range(kinds.shape[0]):
        if kinds[k] == 0:
            s = 0.0
            for i in range(x.shape[0]):
                dx = x[i] - centers[k, i]
                s += dx * dx
            if s < sizes[k] * sizes[k]:
                return True
        else:
            inside = True
            for i in range(x.shape[0]):
                if abs(x[i] - centers[k, i]) >= sizes[k]:
                    inside = False
                    break
            if inside:
                return True
    return False


@njit(cache=True, nogil=True)
def _normals(key, base, d, out):
    """Fill out[:d] with Box-Muller normals from counters base, base+1, ..."""
    m = (d + 1) // 2
    for j in range(m):
        u1 = uniform(key, base + np.uint64(2 * j))
        u2 = uniform(key, base + np.uint64(2 * j + 1))
        rad = math.sqrt(-2.0 * math.log(u1))
        out[2 * j] = rad * math.cos(_TWO_PI * u2)
        if 2 * j + 1 < d:
            out[2 * j + 1] = rad * math.sin(_TWO_PI * u2)


@njit(cache=True, nogil=True)
def _direction(key, base, d, out):
    if d == 1:
        out[0] = 1.0 if uniform(key, base + _U_DIR) < 0.5 else -1.0
        return
    _normals(key, base + _U_DIR, d, out)
    if d == 2:
        nz = math.sqrt(out[0] * out[0] + out[1] * out[1])
    else:
        nz = math.sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2])
    for i in range(d):
        out[i] = out[i] / nz



@njit(nogil=True)
def _grid_step(moments_fn, params, table, key, gj, var_scale, dt, x, pre, mom, z):
    d = x.shape[0]
    moments_fn(params, table, x, mom)
    _normals(key, _U_GRID_OFFSET + np.uint64(gj) * _U_GRID_SLOTS, d, z)
    for i in range(d):
        pre[i] = x[i]
    for i in range(d):
        x[i] = x[i] + math.sqrt(var_scale * mom[i] * dt) * z[i]


@njit(nogil=True)
def _run_path(ratio_fn, moments_fn, params, table, radial, directional,
              key, kappa, inv_alpha, inv_lam, eps_cut, t_max,
              gauss, gauss_dt, var_scale,
              dom_kinds, dom_centers, dom_sizes, tgt_kinds, tgt_centers, tgt_sizes,
              record, ev_t, ev_x, n_ev, x, pre, u, z, mom, out_i, out_f):
    """Advance one path from x; events go to ev_t/ev_x starting at n_ev.

    Writes (status, candidates, accepted, new n_ev, overflow) to out_i and
    the stop time to out_f[0]. On overflow the caller grows the buffers and
    reruns the path.
    """
    d = x.shape[0]
    cap = ev_t.shape[0]
    has_dom = dom_kinds.shape[0] > 0
    has_tgt = tgt_kinds.shape[0] > 0
    st = ST_HORIZON
    t_stop = t_max
    nc = 0
    na = 0
    overflow = 0
    if has_tgt and in_region(tgt_kinds, tgt_centers, tgt_sizes, x):
        st = ST_START_IN_TARGET
        t_stop = 0.0
    else:
        ck = np.uint64(0)
        t_cand = -math.log(uniform(key, _U_GAP)) * inv_lam
        gj = 0
        fresh = True
        acc = 0.0
        t_grid = gauss_dt if gauss else np.inf
        while True:
            moved = False
            t_now = 0.0
            if gauss and t_grid <= t_cand:
                if t_grid > t_max:
                    break
                _grid_step(moments_fn, params, table, key, gj, var_scale, gauss_dt,
                           x, pre, mom, z)
                t_now = t_grid
                moved = True
                gj += 1
                t_grid = (gj + 1) * gauss_dt
            else:
                if t_cand > t_max:
                    break
                nc += 1
                base = ck * _U_SLOTS
                r = 0.0
                if radial or directional:
                    _direction(key, base, d, u)
                    if radial:
                        r = eps_cut * uniform(key, base + _U_RAD) ** (-inv_alpha)
                        for i in range(d):
                            z[i] = r * u[i]
                        acc = kappa * ratio_fn(params, table, x, z[:d])
                    else:
                        acc = kappa * ratio_fn(params, table, x, u)
                elif fresh:
                    # ratio depends on x only: reuse until the path moves
                    acc = kappa * ratio_fn(params, table, x, u)
                    fresh = False
                if not (acc >= 0.0 and acc <= 1.0 + ACCEPT_TOL):
                    st = ST_BAD_KERNEL
                    t_stop = acc
                    break
                if uniform(key, base + _U_ACC) < acc:
                    if not (radial or directional):
                        _direction(key, base, d, u)
                    if not radial:
                        r = eps_cut * uniform(key, base + _U_RAD) ** (-inv_alpha)
                    for i in range(d):
                        pre[i] = x[i]
                    for i in range(d):
                        x[i] = x[i] + r * u[i]
                    t_now = t_cand
                    moved = True
                    na += 1
                ck += np.uint64(1)
                t_cand += -math.log(uniform(key, ck * _U_SLOTS + _U_GAP)) * inv_lam
            if moved:
                fresh = True
                if record:
                    if n_ev == cap:
                        overflow = 1
                        break
                    ev_t[n_ev] = t_now
                    for i in range(d):
                        ev_x[n_ev, i] = x[i]
                    n_ev += 1
                if has_dom and not in_region(dom_kinds, dom_centers, dom_sizes, x):
                    st = ST_EXIT
                    t_stop = t_now
                    break
                if has_tgt and in_region(tgt_kinds, tgt_centers, tgt_sizes, x):
                    st = ST_HIT
                    t_stop = t_now
                    break
    out_i[0] = st
    out_i[1] = nc
    out_i[2] = na
    out_i[3] = n_ev
    out_i[4] = overflow
    out_f[0] = t_stop


@njit(nogil=True)
def simulate_chunk(ratio_fn, moments_fn, params, table, radial, directional,
                   keys, starts, kappa, alpha, lam, eps_cut, t_max,
                   gauss, gauss_dt, var_scale,
                   dom_kinds, dom_centers, dom_sizes,
                   tgt_kinds, tgt_centers, tgt_sizes,
                   record):
    n, d = starts.shape
    status = np.zeros(n, dtype=np.int64)
    end_time = np.empty(n)
    end_pos = np.empty((n, d))
    pre_pos = np.empty((n, d))
    n_cand = np.zeros(n, dtype=np.int64)
    n_acc = np.zeros(n, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)

    cap = 4096 if record else 1
    ev_t = np.empty(cap)
    ev_x = np.empty((cap, d))
    n_ev = 0
    x = np.empty(d)
    pre = np.empty(d)
    u = np.zeros(d)
    z = np.empty(d + 1)
    mom = np.empty(d)
    out_i = np.zeros(5, dtype=np.int64)
    out_f = np.zeros(1)

    p = 0
    while p < n:
        for i in range(d):
            x[i] = starts[p, i]
            pre[i] = starts[p, i]
        _run_path(ratio_fn, moments_fn, params, table, radial, directional,
                  keys[p], kappa, 1.0 / alpha, 1.0 / lam, eps_cut, t_max,
                  gauss, gauss_dt, var_scale,
                  dom_kinds, dom_centers, dom_sizes, tgt_kinds, tgt_centers, tgt_sizes,
                  record, ev_t, ev_x, n_ev, x, pre, u, z, mom, out_i, out_f)
        if out_i[4] == 1:
            cap *= 2
            nt = np.empty(cap)
            nx = np.empty((cap, d))
            nt[:n_ev] = ev_t[:n_ev]
            nx[:n_ev] = ev_x[:n_ev]
            ev_t = nt
            ev_x = nx
            continue  # rerun the same path; its draws are fixed by the counters
        st = out_i[0]
        status[p] = st
        n_cand[p] = out_i[1]
        n_acc[p] = out_i[2]
        n_ev = out_i[3]
        end_time[p] = out_f[0]
        for i in range(d):
            end_pos[p, i] = x[i]
            if st == ST_EXIT or st == ST_HIT:
                pre_pos[p, i] = pre[i]
            else:
                pre_pos[p, i] = x[i]
        offsets[p + 1] = n_ev
        p += 1
    return (status, end_time, end_pos, pre_pos, n_cand, n_acc, offsets,
            ev_t[:n_ev].copy(), ev_x[:n_ev].copy())
