"""Experiment configuration: one YAML document per experiment.

Schema (all sections are mappings)::

    kernel:   family, d, alpha, kappa, eta, and family parameters
    sim:      eps_cut, t_max, small_jump_mode, gauss_dt, master_seed (required)
    task:     kind (simulate | estimate | verify | mollify-build), name, params
    output:   dir, name
    workers:  worker threads (results do not depend on it)

The environment variable STABLELIKE_MASTER_SEED overrides sim.master_seed.
Every problem is reported as ``<file>:<line>: <field>: <message>``.
"""

from dataclasses import dataclass, field
import os
import re

import yaml

from .errors import ConfigurationError, StableLikeError
from .estimators import digest
from .kernels import kernel_from_spec
from .sampler import SimConfig

SEED_ENV = "STABLELIKE_MASTER_SEED"

TASKS = {
    "simulate": ("paths",),
    "estimate": ("exit", "hit", "occupation", "tube", "resolvent"),
    "verify": ("scaling", "hitting", "support", "phi", "mollify"),
    "mollify-build": ("mu",),
}


class ConfigError(ConfigurationError):
    """Schema violation with a field path and, when known, a line number."""

    def __init__(self, message, field_path="", line=None, source="<config>"):
        self.field_path = field_path
        self.line = line
        self.source = source
        where = source if line is None else f"{source}:{line}"
        label = f"{field_path}: " if field_path else ""
        super().__init__(f"{where}: {label}{message}")


def _line_index(node, path=(), out=None):
    """Map field paths to 1-based line numbers of a composed YAML tree."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (str(k.value),)
            out[p] = k.start_mark.line + 1
            _line_index(v, p, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            p = path + (str(i),)
            out[p] = v.start_mark.line + 1
            _line_index(v, p, out)
    return out


@dataclass
class ExperimentConfig:
    kernel_spec: dict
    sim: SimConfig
    task_kind: str
    task_name: str
    task_params: dict
    output_dir: str = "."
    output_name: str = ""
    workers: int = 1
    source: str = "<config>"
    lines: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.output_name:
            self.output_name = f"{self.task_kind}-{self.task_name}"

    @property
    def kernel(self):
        return kernel_from_spec(self.kernel_spec)

    def canonical(self):
        """Everything that determines results (not workers, not output paths)."""
        return {"kernel": self.kernel_spec, "sim": self.sim.to_dict(),
                "task": {"kind": self.task_kind, "name": self.task_name,
                         "params": self.task_params}}

    @property
    def digest(self):
        return digest(self.canonical())

    def error(self, path, message):
        return ConfigError(message, ".".join(path), self.lines.get(tuple(path)), self.source)


def _section(data, key, lines, source, required=True):
    val = data.get(key)
    if val is None:
        if required:
            raise ConfigError("missing section", key, None, source)
        return {}
    if not isinstance(val, dict):
        raise ConfigError("must be a mapping", key, lines.get((key,)), source)
    return val


def parse_config(text, source="<config>", env=None):
    env = os.environ if env is None else env
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ConfigError(f"invalid YAML: {exc.problem}", "", line, source) from None
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", "", 1, source)
    lines = _line_index(node)
    unknown = set(data) - {"kernel", "sim", "task", "output", "workers"}
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown section", key, lines.get((key,)), source)

    kernel_spec = _section(data, "kernel", lines, source)
    try:
        kernel_from_spec(kernel_spec)
    except StableLikeError as exc:
        # point at the offending field when the message names one
        hit = [k for k in kernel_spec if re.search(rf"\b{re.escape(str(k))}\b", str(exc))]
        path = ("kernel", hit[0]) if hit else ("kernel",)
        raise ConfigError(str(exc), ".".join(path), lines.get(path), source) from None

    sim = dict(_section(data, "sim", lines, source))
    if env.get(SEED_ENV, "").strip():
        try:
            sim["master_seed"] = int(env[SEED_ENV], 0)
        except ValueError:
            raise ConfigError(f"{SEED_ENV} is not an integer", "sim.master_seed", None,
                              source) from None
    if "master_seed" not in sim:
        raise ConfigError("master_seed is required (no clock seeding)", "sim.master_seed",
                          lines.get(("sim",)), source)
    allowed = {"eps_cut", "t_max", "small_jump_mode", "gauss_dt", "master_seed"}
    for key in sim:
        if key not in allowed:
            raise ConfigError("unknown field", f"sim.{key}", lines.get(("sim", key)), source)
    try:
        sim_cfg = SimConfig(**{k: (v if k in ("small_jump_mode", "master_seed") else float(v))
                               for k, v in sim.items()})
    except (StableLikeError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), "sim", lines.get(("sim",)), source) from None

    task = _section(data, "task", lines, source)
    kind = task.get("kind")
    if kind not in TASKS:
        raise ConfigError(f"must be one of {sorted(TASKS)}", "task.kind",
                          lines.get(("task", "kind")), source)
    name = task.get("name", TASKS[kind][0])
    if name not in TASKS[kind]:
        raise ConfigError(f"must be one of {list(TASKS[kind])}", "task.name",
                          lines.get(("task", "name")), source)
    params = task.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("must be a mapping", "task.params",
                          lines.get(("task", "params")), source)

    output = _section(data, "output", lines, source, required=False)
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("must be a positive integer", "workers", lines.get(("workers",)),
                          source)
    return ExperimentConfig(kernel_spec, sim_cfg, kind, name, params,
                            str(output.get("dir", ".")), str(output.get("name", "")),
                            workers, source, lines)


def load_config(path, env=None):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "", None, str(path)) from None
    return parse_config(text, str(path), env)
