"""Command-line front end: ``stablelike run CONFIG``, ``list-tasks``, ``version``.

Exit status: 0 ok, 2 config error, 3 precondition error, 4 verification
failure, 5 kernel-bound violation. Outputs are written atomically and never
depend on the worker count.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time

import numpy as np

from . import __version__
from ._accel import default_backend
from .config import TASKS, ConfigError, load_config
from .errors import (ConfigurationError, DomainError, KernelBoundError, PreconditionError,
                     StableLikeError, SupportError)
from .estimators import (CSV_COLUMNS, Polyline, _jsonable, estimate_row, exit_time_mean,
                         hitting_probability, occupation_time, resolvent, tube_probability)
from .geometry import Ball, Cube, Union
from .mollify import estimate_mu
from .sampler import simulate_batch
from .verify import (estimate_phi_envelope, verify_exit_scaling, verify_hitting_bound,
                     verify_mollify_pipeline, verify_support_theorem, zigzag)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_VERIFICATION = 4
EXIT_KERNEL_BOUND = 5

SCHEMA_VERSION = 1
ESTIMATE_COLUMNS = ("schema_version", "config_digest") + CSV_COLUMNS
CHECK_COLUMNS = ("schema_version", "config_digest", "seed", "theorem_id", "description",
                 "observed", "threshold", "passed", "n")
PATH_COLUMNS = ("schema_version", "config_digest", "seed", "path_index", "status",
                "stop_time", "n_candidates", "n_accepted", "end_pos")
MU_COLUMNS = ("schema_version", "config_digest", "seed", "lam", "n_paths", "t_max",
              "total_mass", "atom_mass", "tail_bound", "mass_gap", "n_atoms")

# id -> (parameters, what the task checks)
CATALOG = {
    "simulate.paths": (
        "x0, N, first_path=0, domain?",
        "raw path summaries from the thinning sampler"),
    "estimate.exit": (
        "x0, domain, N",
        "mean exit time from a ball or cube; compare the closed-form ball exit mean"),
    "estimate.hit": (
        "y, A (region list), container, N",
        "probability of reaching A before leaving the container"),
    "estimate.occupation": (
        "x0, B, domain, N",
        "expected time spent in B before leaving the domain"),
    "estimate.tube": (
        "phi {times, points} or zigzag, eps, N",
        "probability that the path stays within eps of a polyline"),
    "estimate.resolvent": (
        "x0, lam, f {kind: constant|indicator|cos}, f_sup, N",
        "discounted occupation functional E int exp(-lam t) f(X_t) dt"),
    "verify.scaling": (
        "r_list, N",
        "exit-time upper bound of order r^alpha; exact scaling for constant kernels"),
    "verify.hitting": (
        "A_list, y_list, N, x?",
        "hitting probability of A before leaving B(x,3) bounded below by a multiple of |A|"),
    "verify.support": (
        "phi_list or zigzag, eps_list, N",
        "every tube around a continuous curve has positive probability"),
    "verify.phi": (
        "measure_grid, random_set_count, N, level=7",
        "occupation time of B in the unit cube bounded below by a function of |B|"),
    "verify.mollify": (
        "eps_list, N, M, lam=1, x0?",
        "mollified kernels keep the kappa bounds and converge back to the base kernel"),
    "mollify-build.mu": (
        "x0, lam, M",
        "discounted occupation measure built from path skeletons"),
}


# ------------------------------------------------------------------ parameters

class _Params:
    def __init__(self, cfg):
        self.cfg = cfg
        self.raw = cfg.task_params

    def _err(self, key, msg):
        return self.cfg.error(("task", "params", key), msg)

    def has(self, key):
        return key in self.raw

    def get(self, key, default=None, required=False):
        if key not in self.raw:
            if required:
                raise self.cfg.error(("task", "params"), f"missing parameter {key!r}")
            return default
        return self.raw[key]

    def int(self, key, default=None, required=False, minimum=1):
        v = self.get(key, default, required)
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise self._err(key, f"must be an integer >= {minimum}")
        return v

    def float(self, key, default=None, required=False, positive=False):
        v = self.get(key, default, required)
        try:
            v = float(v)
        except (TypeError, ValueError):
            raise self._err(key, "must be a number") from None
        if not math.isfinite(v) or (positive and not v > 0):
            raise self._err(key, "must be a positive finite number" if positive
                            else "must be finite")
        return v

    def floats(self, key, default=None, required=False):
        v = self.get(key, default, required)
        if not isinstance(v, (list, tuple)) or not v:
            raise self._err(key, "must be a nonempty list of numbers")
        try:
            return [float(x) for x in v]
        except (TypeError, ValueError):
            raise self._err(key, "must be a nonempty list of numbers") from None

    def point(self, key, d, default=None, required=False):
        v = self.get(key, default, required)
        if v is None:
            return np.zeros(d)
        try:
            p = np.atleast_1d(np.asarray(v, dtype=np.float64))
        except (TypeError, ValueError):
            raise self._err(key, "must be a number or list of numbers") from None
        if p.shape != (d,) or not np.all(np.isfinite(p)):
            raise self._err(key, f"must have {d} finite coordinates")
        return p

    def region(self, key, d, required=True, value=None):
        v = self.get(key, None, required) if value is None else value
        return _region(v, d, lambda msg: self._err(key, msg))

    def polyline(self, key, d, value=None):
        v = self.get(key, None, True) if value is None else value
        if v == "zigzag":
            return zigzag(d)
        if isinstance(v, dict) and v.get("kind") == "zigzag":
            return zigzag(d, float(v.get("height", 0.5)), float(v.get("t0", 1.0)))
        try:
            pts = np.asarray(v["points"], dtype=np.float64)
            return Polyline(v["times"], pts.reshape(len(pts), d))
        except (KeyError, TypeError, ValueError) as exc:
            raise self._err(key, f"bad polyline: {exc}") from None


def _region(v, d, err):
    if isinstance(v, list):
        parts = [_region(p, d, err) for p in v]
        for p in parts:
            if isinstance(p, Union):
                raise err("nested unions are not supported")
        return Union(tuple(parts), d)
    if not isinstance(v, dict):
        raise err("region must be a mapping or a list of mappings")
    kind = v.get("kind")
    try:
        center = np.atleast_1d(np.asarray(v.get("center", np.zeros(d)), dtype=np.float64))
        if center.shape != (d,):
            raise err(f"center must have {d} coordinates")
        if kind == "ball":
            return Ball(center, float(v["radius"]))
        if kind == "cube":
            return Cube(center, float(v["side"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise err(f"bad {kind} region: {exc}") from None
    raise err("region kind must be 'ball' or 'cube'")


def _field(params, d):
    """Bounded scalar field and its declared sup norm."""
    spec = params.get("f", {"kind": "constant", "value": 1.0})
    err = lambda msg: params._err("f", msg)
    if not isinstance(spec, dict):
        raise err("must be a mapping with a 'kind'")
    kind = spec.get("kind")
    if kind == "constant":
        c = float(spec.get("value", 1.0))
        return (lambda x: np.full(x.shape[:-1], c)), abs(c)
    if kind == "indicator":
        reg = _region(spec.get("region"), d, err)
        return (lambda x: reg.contains(x).astype(np.float64)), 1.0
    if kind == "cos":
        k = float(spec.get("freq", 1.0))
        return (lambda x: np.cos(2 * np.pi * k * x[..., 0])), 1.0
    raise err("kind must be constant, indicator or cos")


# ------------------------------------------------------------------ tasks

def _estimate(cfg, kernel, backend):
    p = _Params(cfg)
    d = kernel.d
    name = cfg.task_name
    N = p.int("N", required=True)
    kw = {"backend": backend, "workers": cfg.workers}
    sim = cfg.sim
    if name == "exit":
        x0 = p.point("x0", d)
        dom = p.region("domain", d)
        est = exit_time_mean(kernel, x0, dom, sim, N, **kw)
        info = {"x0": x0, "domain": dom}
    elif name == "hit":
        y = p.point("y", d, required=True)
        A = p.region("A", d)
        cont = p.region("container", d)
        est = hitting_probability(kernel, y, A, cont, sim, N, **kw)
        info = {"y": y, "A": A, "container": cont}
    elif name == "occupation":
        x0 = p.point("x0", d)
        B = p.region("B", d)
        dom = p.region("domain", d)
        est = occupation_time(kernel, x0, B, dom, sim, N, **kw)
        info = {"x0": x0, "B": B, "domain": dom}
    elif name == "tube":
        phi = p.polyline("phi", d)
        eps = p.float("eps", required=True)
        est = tube_probability(kernel, phi, eps, sim, N, **kw)
        info = {"phi": phi, "eps": eps}
    else:
        x0 = p.point("x0", d)
        lam = p.float("lam", required=True, positive=True)
        f, f_sup = _field(p, d)
        f_sup = p.float("f_sup", f_sup)
        est = resolvent(kernel, x0, f, lam, sim, N, f_sup=f_sup, **kw)
        info = {"x0": x0, "lam": lam, "f": p.get("f"), "f_sup": f_sup}
    row = estimate_row(name, info, est, sim.master_seed)
    row = {"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest, **row}
    summary = (f"estimate.{name}: mean={est.mean:.6g} se={est.std_error:.3g} "
               f"ci=[{est.lower:.6g}, {est.upper:.6g}] n={est.n_samples}")
    doc = {"estimate": est.to_dict(), "inputs": info}
    return [("", ESTIMATE_COLUMNS, [row])], doc, summary, True


def _verify(cfg, kernel, backend):
    p = _Params(cfg)
    d = kernel.d
    name = cfg.task_name
    N = p.int("N", required=True)
    kw = {"backend": backend, "workers": cfg.workers}
    sim = cfg.sim
    if name == "scaling":
        res = verify_exit_scaling(kernel, p.floats("r_list", [1.0, 2.0]), sim, N, **kw)
    elif name == "hitting":
        raw = p.get("A_list", required=True)
        if not isinstance(raw, list) or not raw:
            raise p._err("A_list", "must be a nonempty list of regions")
        A_list = [p.region("A_list", d, value=a) for a in raw]
        ys = p.get("y_list", required=True)
        if not isinstance(ys, list) or not ys:
            raise p._err("y_list", "must be a nonempty list of points")
        res = verify_hitting_bound(kernel, A_list, ys, sim, N, x=p.point("x", d), **kw)
    elif name == "support":
        raw = p.get("phi_list", ["zigzag"])
        if not isinstance(raw, list) or not raw:
            raise p._err("phi_list", "must be a nonempty list of polylines")
        phis = [p.polyline("phi_list", d, value=v) for v in raw]
        res = verify_support_theorem(kernel, phis, p.floats("eps_list", required=True), sim,
                                     N, **kw)
    elif name == "phi":
        res = estimate_phi_envelope(kernel, p.floats("measure_grid", required=True),
                                    p.int("random_set_count", 4), sim, N,
                                    level=p.int("level", 7), **kw)
    else:
        f, f_sup = _field(p, d) if p.has("f") else (None, 1.0)
        res = verify_mollify_pipeline(kernel, p.floats("eps_list", required=True), sim, N,
                                      p.int("M", N), lam=p.float("lam", 1.0, positive=True),
                                      x0=p.point("x0", d), f=f, f_sup=f_sup, **kw)
    rows = [{"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest,
             "seed": sim.master_seed, "theorem_id": res.theorem_id,
             "description": c.description, "observed": float(c.observed),
             "threshold": float(c.threshold), "passed": bool(c.passed), "n": int(c.n_samples)}
            for c in res.checks]
    n_fail = len(res.failures())
    summary = (f"verify.{name}: {'PASS' if res.overall else 'FAIL'} "
               f"({len(res.checks) - n_fail}/{len(res.checks)} checks)")
    for c in res.failures():
        summary += f"\n  failed: {c.description}" + (f" [{c.detail}]" if c.detail else "")
    raw = [{"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest, **r}
           for r in res.estimates]
    tables = [("", CHECK_COLUMNS, rows), ("-estimates", ESTIMATE_COLUMNS, raw)]
    return tables, res.to_dict(), summary, res.overall


def _simulate(cfg, kernel, backend):
    p = _Params(cfg)
    d = kernel.d
    N = p.int("N", required=True)
    first = p.int("first_path", 0, minimum=0)
    x0 = p.point("x0", d)
    dom = p.region("domain", d, required=False) if p.has("domain") else None
    res = simulate_batch(kernel, x0, cfg.sim, np.arange(first, first + N), domain=dom,
                         record=False, backend=backend, workers=cfg.workers)
    rows = []
    for k in range(res.n_paths):
        rows.append({"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest,
                     "seed": cfg.sim.master_seed, "path_index": int(res.path_index[k]),
                     "status": int(res.status[k]), "stop_time": float(res.stop_time[k]),
                     "n_candidates": int(res.n_candidates[k]),
                     "n_accepted": int(res.n_accepted[k]),
                     "end_pos": ";".join(repr(float(v)) for v in res.end_pos[k])})
    doc = {"n_paths": res.n_paths, "truncated_mass_bound": res.truncated_mass_bound,
           "mean_accepted": float(res.n_accepted.mean())}
    summary = (f"simulate.paths: {N} paths, mean accepted jumps "
               f"{float(res.n_accepted.mean()):.4g}")
    return [("", PATH_COLUMNS, rows)], doc, summary, True


def _mollify_build(cfg, kernel, backend):
    p = _Params(cfg)
    d = kernel.d
    M = p.int("M", required=True)
    lam = p.float("lam", 1.0, positive=True)
    mu = estimate_mu(kernel, p.point("x0", d), lam, cfg.sim, M, backend=backend,
                     workers=cfg.workers)
    atom = mu.atom_mass()
    row = {"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest,
           "seed": cfg.sim.master_seed, "lam": lam, "n_paths": M, "t_max": cfg.sim.t_max,
           "total_mass": mu.total_mass, "atom_mass": atom, "tail_bound": mu.tail_bound,
           "mass_gap": abs(mu.total_mass - 1.0 / lam), "n_atoms": int(mu.atoms.shape[0])}
    doc = dict(row)
    if p.get("save_atoms", False):
        doc["atoms"] = mu.atoms.tolist()
        doc["weights"] = mu.weights.tolist()
        doc["atom_path"] = mu.atom_path.tolist()
    summary = (f"mollify-build.mu: {row['n_atoms']} atoms, total mass {mu.total_mass:.12g}, "
               f"|mass - 1/lam| = {row['mass_gap']:.3g} <= tail {mu.tail_bound:.3g}")
    return [("", MU_COLUMNS, [row])], doc, summary, True


RUNNERS = {"simulate": _simulate, "estimate": _estimate, "verify": _verify,
           "mollify-build": _mollify_build}


# ------------------------------------------------------------------ output

def _csv_text(columns, rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r[k] for k in columns})
    return buf.getvalue()


def atomic_write(path, text):
    """Write via a temp file in the target directory and rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_config(cfg, backend=None, out=sys.stdout):
    """Run one configured task; return (exit status, written paths).

    Everything is computed before the first file is touched, so a failing
    run leaves earlier outputs intact.
    """
    kernel = cfg.kernel
    tables, doc, summary, ok = RUNNERS[cfg.task_kind](cfg, kernel, backend)
    base = os.path.join(cfg.output_dir, cfg.output_name)
    payload = {"schema_version": SCHEMA_VERSION, "config_digest": cfg.digest,
               "master_seed": cfg.sim.master_seed, "config": cfg.canonical(),
               "task": f"{cfg.task_kind}.{cfg.task_name}", "result": doc}
    texts = {base + suffix + ".csv": _csv_text(columns, rows)
             for suffix, columns, rows in tables}
    texts[base + ".json"] = json.dumps(payload, indent=2, sort_keys=True,
                                       default=_jsonable) + "\n"
    for path, text in texts.items():
        atomic_write(path, text)
    print(summary, file=out)
    return (EXIT_OK if ok else EXIT_VERIFICATION), list(texts)


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers is not None:
        cfg.workers = args.workers
    if args.output_dir is not None:
        cfg.output_dir = args.output_dir
    t0 = time.perf_counter()
    try:
        status, _ = run_config(cfg, backend=args.backend)
    except KernelBoundError as exc:
        print(f"kernel-bound violation: {exc}", file=sys.stderr)
        return EXIT_KERNEL_BOUND
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PreconditionError, DomainError) as exc:
        print(f"precondition error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SupportError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except StableLikeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    print(f"done in {time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return status


def _cmd_list(args):
    ids = list(CATALOG)
    if args.task:
        if args.task not in CATALOG:
            print(f"unknown task {args.task!r}; known: {', '.join(ids)}", file=sys.stderr)
            return EXIT_CONFIG
        ids = [args.task]
    if args.json:
        cat = [{"id": i, "kind": i.split(".")[0], "name": i.split(".")[1],
                "params": CATALOG[i][0], "checks": CATALOG[i][1]} for i in ids]
        print(json.dumps(cat, indent=2))
    else:
        for i in ids:
            print(f"{i:22s} {CATALOG[i][1]}\n{'':22s} params: {CATALOG[i][0]}")
    return EXIT_OK


def _cmd_version(args):
    print(f"stablelike {__version__} (backend: {default_backend()})")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="stablelike", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the task described by a YAML config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None, help="override worker threads")
    r.add_argument("--output-dir", default=None)
    r.add_argument("--backend", choices=("numba", "numpy"), default=None)
    r.set_defaults(func=_cmd_run)
    lt = sub.add_parser("list-tasks", help="print the task catalog")
    lt.add_argument("task", nargs="?", help="show one task, e.g. verify.phi")
    lt.add_argument("--json", action="store_true", help="machine-readable catalog")
    lt.set_defaults(func=_cmd_list)
    v = sub.add_parser("version")
    v.set_defaults(func=_cmd_version)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
