"""YAML run configuration: schema, defaults and validation with line diagnostics.

A configuration has up to eight top-level blocks; every key is optional and
unknown keys are rejected. Defaults describe the reference tracking setup on [-1, 1]::

    scheme:     {dx: 0.01, dt: null, cfl_factor: null, T: 0.25, H: null,
                 boundary: constant, store_every: 1, domain: [-1, 1]}
    kernel:     {shape: affine, H: null}
    speed:      {law: greenshields}
    datum:      {kind: null, value: 0.5, path: null}   # null: bump for solve, step for optimize
    objective:  {terms: [{kind: distributed_tracking, weight: 1.0, window: [-1, 1],
                          p: 1, reference: {kind: local, H: null}}]}
    optimizer:  {max_iterations: 1000, max_evaluations: 100000, step_tolerance: null,
                 optimality_tolerance: null, fd_step: 1.0e-6, initial_step: 1.0,
                 armijo: {c: 1.0e-4, shrink: 0.5, max_backtracks: 30}, workers: 1}
    admissible: {box_lo: 0.0, box_hi: 1.0, tv_bound: null, support: null}
    study:      {kind: grid_convergence_local, dx_list: [0.08, 0.04, 0.02, 0.01],
                 H_list: [0.08, 0.04, 0.02, 0.01, 0.005], dx: 0.01, H: 0.5,
                 coupling: half, T: 0.25, datum: bump, start: step}

``dt: null`` with ``cfl_factor: null`` means the largest step not above dx/2
that divides T. ``reference`` may instead name a previous ``solve`` run via
``{run_id: <id>, search: <dir>}`` or ``{manifest: <path>}``.
"""

from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    pass


_NUM = (int, float)

DEFAULTS: dict[str, Any] = {
    "scheme": {"dx": 0.01, "dt": None, "cfl_factor": None, "T": 0.25, "H": None, "boundary": "constant",
               "store_every": 1, "domain": [-1.0, 1.0]},
    "kernel": {"shape": "affine", "H": None},
    "speed": {"law": "greenshields"},
    "datum": {"kind": None, "value": 0.5, "path": None},
    "objective": {"terms": None},
    "optimizer": {"max_iterations": 1000, "max_evaluations": 100_000, "step_tolerance": None,
                  "optimality_tolerance": None, "fd_step": 1e-6, "initial_step": 1.0,
                  "armijo": {"c": 1e-4, "shrink": 0.5, "max_backtracks": 30}, "workers": 1},
    "admissible": {"box_lo": 0.0, "box_hi": 1.0, "tv_bound": None, "support": None},
    "study": {"kind": "grid_convergence_local", "dx_list": [0.08, 0.04, 0.02, 0.01],
              "H_list": [0.08, 0.04, 0.02, 0.01, 0.005], "dx": 0.01, "H": 0.5, "coupling": "half",
              "T": 0.25, "datum": "bump", "start": "step"},
}

TERM_DEFAULTS = {"kind": "distributed_tracking", "weight": 1.0, "window": [-1.0, 1.0], "p": 1.0,
                 "reference": {"kind": "local", "H": None}}
REFERENCE_KEYS = {"kind", "H", "manifest", "run_id", "search"}
DATUM_KINDS = ("bump", "step", "riemann", "constant", "file")


def _line(node: yaml.Node | None) -> str:
    return f"line {node.start_mark.line + 1}" if node is not None else "config"


def _mapping_keys(node: yaml.Node) -> dict[str, yaml.Node]:
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: v for k, v in node.value}


def _check_keys(node: yaml.Node | None, allowed: set[str], where: str) -> None:
    if node is None:
        return
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError(f"{_line(node)}: block '{where}' must be a mapping")
    for k, _ in node.value:
        if k.value not in allowed:
            raise ConfigError(f"{_line(k)}: unknown key '{k.value}' in '{where}' (allowed: {', '.join(sorted(allowed))})")


def _validate_structure(root: yaml.Node) -> None:
    _check_keys(root, set(DEFAULTS), "<top level>")
    blocks = _mapping_keys(root)
    for name, node in blocks.items():
        allowed = set(DEFAULTS[name])
        _check_keys(node, allowed, name)
    opt = _mapping_keys(blocks.get("optimizer")) if blocks.get("optimizer") is not None else {}
    if "armijo" in opt:
        _check_keys(opt["armijo"], set(DEFAULTS["optimizer"]["armijo"]), "optimizer.armijo")
    obj = _mapping_keys(blocks.get("objective")) if blocks.get("objective") is not None else {}
    terms = obj.get("terms")
    if terms is not None:
        if not isinstance(terms, yaml.SequenceNode):
            raise ConfigError(f"{_line(terms)}: 'objective.terms' must be a list")
        for i, t in enumerate(terms.value):
            _check_keys(t, set(TERM_DEFAULTS), f"objective.terms[{i}]")
            ref = _mapping_keys(t).get("reference")
            if ref is not None:
                _check_keys(ref, REFERENCE_KEYS, f"objective.terms[{i}].reference")


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class _Checker:
    def __init__(self, root: yaml.Node | None):
        self.root = root

    def node(self, *path: str) -> yaml.Node | None:
        n = self.root
        for p in path:
            if n is None:
                return None
            n = _mapping_keys(n).get(p)
        return n

    def fail(self, path: tuple[str, ...], msg: str):
        raise ConfigError(f"{_line(self.node(*path))}: '{'.'.join(path)}' {msg}")

    def number(self, cfg: dict, *path: str, positive: bool = False, optional: bool = False, minimum=None):
        v = cfg
        for p in path:
            v = v[p]
        if v is None and optional:
            return
        if isinstance(v, bool) or not isinstance(v, _NUM) or not math.isfinite(v):
            self.fail(path, f"must be a finite number, got {v!r}")
        if positive and not v > 0:
            self.fail(path, f"must be positive, got {v!r}")
        if minimum is not None and v < minimum:
            self.fail(path, f"must be >= {minimum}, got {v!r}")

    def choice(self, cfg: dict, options, *path: str):
        v = cfg
        for p in path:
            v = v[p]
        if v not in options:
            self.fail(path, f"must be one of {list(options)}, got {v!r}")

    def interval(self, cfg: dict, *path: str, optional: bool = False):
        v = cfg
        for p in path:
            v = v[p]
        if v is None and optional:
            return
        if (not isinstance(v, list) or len(v) != 2 or not all(isinstance(a, _NUM) for a in v)
                or not v[0] < v[1]):
            self.fail(path, f"must be an increasing pair [lo, hi], got {v!r}")

    def number_list(self, cfg: dict, *path: str):
        v = cfg
        for p in path:
            v = v[p]
        if not isinstance(v, list) or not v or not all(isinstance(a, _NUM) and a > 0 for a in v):
            self.fail(path, f"must be a non-empty list of positive numbers, got {v!r}")


def _validate_values(cfg: dict, chk: _Checker) -> None:
    from .kernels import SHAPES
    from .scheme import SPEED_LAWS
    from .studies import COUPLINGS, DATA, STUDY_KINDS

    chk.number(cfg, "scheme", "dx", positive=True)
    chk.number(cfg, "scheme", "dt", positive=True, optional=True)
    chk.number(cfg, "scheme", "cfl_factor", positive=True, optional=True)
    chk.number(cfg, "scheme", "T", minimum=0)
    chk.number(cfg, "scheme", "H", positive=True, optional=True)
    chk.choice(cfg, ["constant"], "scheme", "boundary")
    if not isinstance(cfg["scheme"]["store_every"], int) or cfg["scheme"]["store_every"] < 1:
        chk.fail(("scheme", "store_every"), "must be an integer >= 1")
    chk.interval(cfg, "scheme", "domain")
    if cfg["scheme"]["dt"] is not None and cfg["scheme"]["cfl_factor"] is not None:
        chk.fail(("scheme", "dt"), "and 'scheme.cfl_factor' are mutually exclusive")
    chk.choice(cfg, list(SHAPES), "kernel", "shape")
    chk.number(cfg, "kernel", "H", positive=True, optional=True)
    hs, hk = cfg["scheme"]["H"], cfg["kernel"]["H"]
    if hs is not None and hk is not None and hs != hk:
        chk.fail(("kernel", "H"), f"conflicts with scheme.H ({hk!r} vs {hs!r})")
    chk.choice(cfg, list(SPEED_LAWS), "speed", "law")
    chk.choice(cfg, (None,) + DATUM_KINDS, "datum", "kind")
    chk.number(cfg, "datum", "value", minimum=0)
    if cfg["datum"]["kind"] == "file" and not cfg["datum"]["path"]:
        chk.fail(("datum", "path"), "is required when datum.kind is 'file'")
    for key in ("max_iterations", "max_evaluations", "fd_step", "initial_step", "workers"):
        chk.number(cfg, "optimizer", key, positive=True)
    for key in ("step_tolerance", "optimality_tolerance"):
        chk.number(cfg, "optimizer", key, positive=True, optional=True)
    for key in ("c", "shrink", "max_backtracks"):
        chk.number(cfg, "optimizer", "armijo", key, positive=True)
    chk.number(cfg, "admissible", "box_lo")
    chk.number(cfg, "admissible", "box_hi")
    chk.number(cfg, "admissible", "tv_bound", positive=True, optional=True)
    chk.interval(cfg, "admissible", "support", optional=True)
    chk.choice(cfg, STUDY_KINDS, "study", "kind")
    chk.choice(cfg, COUPLINGS, "study", "coupling")
    chk.number_list(cfg, "study", "dx_list")
    chk.number_list(cfg, "study", "H_list")
    for key in ("dx", "H", "T"):
        chk.number(cfg, "study", key, positive=True)
    chk.choice(cfg, list(DATA), "study", "datum")
    chk.choice(cfg, list(DATA), "study", "start")
    terms = cfg["objective"]["terms"]
    if not isinstance(terms, list) or not terms:
        chk.fail(("objective", "terms"), "must be a non-empty list")
    from .objectives import KINDS

    for i, t in enumerate(terms):
        if t["kind"] not in KINDS:
            raise ConfigError(f"{_line(chk.node('objective'))}: objective.terms[{i}].kind must be one of {KINDS}")
        for key in ("weight", "p"):
            v = t[key]
            if isinstance(v, bool) or not isinstance(v, _NUM) or v < 0:
                raise ConfigError(f"{_line(chk.node('objective'))}: objective.terms[{i}].{key} must be >= 0")


def parse_config(text: str, source: str = "<config>") -> dict:
    """Validate ``text`` and return the effective configuration with defaults filled in."""
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: malformed YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    _validate_structure(root)
    given_terms = (data.get("objective") or {}).get("terms")
    cfg = _merge(DEFAULTS, {k: (v or {}) for k, v in data.items()})
    terms = given_terms if given_terms is not None else [{}]
    cfg["objective"]["terms"] = [_merge(TERM_DEFAULTS, t or {}) for t in terms]
    for t, given in zip(cfg["objective"]["terms"], terms):
        if given and "reference" in given and given["reference"] is not None:
            t["reference"] = dict(given["reference"])
    try:
        _validate_values(cfg, _Checker(root))
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if cfg["kernel"]["H"] is not None and cfg["scheme"]["H"] is None:
        cfg["scheme"]["H"] = cfg["kernel"]["H"]
    cfg["kernel"]["H"] = cfg["scheme"]["H"]
    return cfg


def load_config(path: str | Path) -> dict:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))
