"""Strict YAML experiment configuration.

Grammar (all blocks are mappings, unknown keys are errors)::

    experiment: spectrum | minmax | continuity | compare | wave
    seed: 0                        # optional, 64-bit
    output: results/run1           # optional, the --out flag wins
    geometry:
      variant: circle | interval | torus
      length: 6.283185307179586    # 1-D; or lengths: [L1, L2] on the torus
      twist: 0.5                   # circle; twists: [d1, d2] on the torus
      chirality_sign: 1            # interval only
      resolution: 64
    weight:                        # spectrum, minmax, compare, wave
      kind: identity | constant | profile | smooth | random
      value: 2.0                   # constant (scalar or fiber matrix)
      profile: exp-sin | sine | sine-squared
      amplitude: 0.5
      mode: 1
    second_weight: {...}           # compare: weight with A1 >= A2 as the 'weight' block
    family:                        # continuity, or wave along a family
      kind: oscillatory-sine
      params: {amplitude: 0.5}
      members: [1, 2, 4, 8]
    compare:
      random_pairs: 20             # draw ordered pairs instead of weight/second_weight
    solver:
      k_max: 5
      l_max: 3
      kernel_tol: 1.0e-8
      cluster_tol_rel: 1.0e-6
      cluster_tol_abs: 1.0e-9
      p: 4
      alpha: 0.5
      n_samples: 64
      tol: 1.0e-7
      dictionary_size: 3
      times: [0.5, 1.0, 2.0]
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .domain import CIRCLE, INTERVAL, TORUS, Geometry, Grid
from .errors import ConfigurationError
from .weights import (FAMILY_KINDS, WeightField, angle_coordinate, random_spd_weight,
                      smooth_base)

EXPERIMENTS = ("spectrum", "minmax", "continuity", "compare", "wave")
PROFILES = ("exp-sin", "sine", "sine-squared")

TOP_KEYS = {"experiment", "seed", "output", "geometry", "weight", "second_weight", "family",
            "compare", "solver"}
GEOMETRY_KEYS = {"variant", "length", "lengths", "twist", "twists", "chirality_sign", "resolution"}
WEIGHT_KEYS = {"kind", "value", "profile", "amplitude", "mode"}
FAMILY_KEYS = {"kind", "params", "members"}
COMPARE_KEYS = {"random_pairs"}
SOLVER_DEFAULTS = {
    "k_max": 5, "l_max": 3, "kernel_tol": 1e-8, "cluster_tol_rel": 1e-6, "cluster_tol_abs": 1e-9,
    "p": 4.0, "alpha": 0.5, "n_samples": 64, "tol": 1e-7, "dictionary_size": 3,
    "times": [0.5, 1.0, 2.0],
}

REQUIRED = {
    "spectrum": ("geometry",),
    "minmax": ("geometry",),
    "continuity": ("geometry", "family"),
    "compare": ("geometry",),
    "wave": ("geometry",),
}


@dataclass
class ExperimentConfig:
    experiment: str
    geometry: Geometry
    seed: int = 0
    output: str | None = None
    weight: dict = field(default_factory=lambda: {"kind": "identity"})
    second_weight: dict | None = None
    family: dict | None = None
    compare: dict = field(default_factory=dict)
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    source_sha256: str = ""


def _key_lines(node, path=()):
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            p = path + (k.value,)
            out[p] = k.start_mark.line + 1
            out.update(_key_lines(v, p))
    return out


class _Ctx:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, msg):
        line = self.lines.get(tuple(path))
        where = ".".join(str(p) for p in path) or "<top>"
        at = f" (line {line})" if line else ""
        raise ConfigurationError(f"{where}{at}: {msg}")

    def mapping(self, value, path, allowed):
        if not isinstance(value, dict):
            self.fail(path, "expected a mapping")
        for k in value:
            if k not in allowed:
                self.fail(tuple(path) + (k,), f"unknown key; allowed: {sorted(allowed)}")
        return value


def parse_config(text: str, seed_override: int | None = None) -> ExperimentConfig:
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed YAML: {exc}") from None
    ctx = _Ctx(_key_lines(node) if node is not None else {})
    if raw is None:
        raise ConfigurationError("empty configuration")
    ctx.mapping(raw, (), TOP_KEYS)
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        ctx.fail(("experiment",), f"expected one of {EXPERIMENTS}, got {exp!r}")
    for block in REQUIRED[exp]:
        if block not in raw:
            ctx.fail((block,), f"block is required for the {exp} experiment")

    geometry = _parse_geometry(ctx, raw["geometry"])
    cfg = ExperimentConfig(exp, geometry, source_sha256=hashlib.sha256(text.encode()).hexdigest())
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        ctx.fail(("seed",), "seed must be a nonnegative 64-bit integer")
    cfg.seed = int(seed if seed_override is None else seed_override)
    if "output" in raw:
        if not isinstance(raw["output"], str):
            ctx.fail(("output",), "output must be a path string")
        cfg.output = raw["output"]
    if "weight" in raw:
        cfg.weight = _parse_weight(ctx, raw["weight"], ("weight",), geometry)
    if "second_weight" in raw:
        cfg.second_weight = _parse_weight(ctx, raw["second_weight"], ("second_weight",), geometry)
    if "family" in raw:
        cfg.family = _parse_family(ctx, raw["family"])
    if "compare" in raw:
        cfg.compare = dict(ctx.mapping(raw["compare"], ("compare",), COMPARE_KEYS))
        n = cfg.compare.get("random_pairs")
        if n is not None and (not isinstance(n, int) or n < 1):
            ctx.fail(("compare", "random_pairs"), "must be a positive integer")
    if exp == "compare" and cfg.second_weight is None and "random_pairs" not in cfg.compare:
        ctx.fail(("compare",), "give either second_weight or compare.random_pairs")
    solver = dict(SOLVER_DEFAULTS)
    if "solver" in raw:
        for k, v in ctx.mapping(raw["solver"], ("solver",), set(SOLVER_DEFAULTS)).items():
            solver[k] = v
    _check_solver(ctx, solver)
    cfg.solver = solver
    return cfg


def load_config(path, seed_override=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, seed_override)


def _parse_geometry(ctx, g) -> Geometry:
    path = ("geometry",)
    ctx.mapping(g, path, GEOMETRY_KEYS)
    variant = g.get("variant")
    try:
        if variant == CIRCLE:
            _only(ctx, g, path, {"variant", "length", "twist", "resolution"})
            return Geometry.circle(float(g.get("length", 2 * math.pi)), g.get("resolution", 64),
                                   float(g.get("twist", 0.0)))
        if variant == INTERVAL:
            _only(ctx, g, path, {"variant", "length", "chirality_sign", "resolution"})
            return Geometry.interval(float(g.get("length", math.pi)), g.get("resolution", 64),
                                     g.get("chirality_sign", 1))
        if variant == TORUS:
            _only(ctx, g, path, {"variant", "lengths", "twists", "resolution"})
            return Geometry.torus(tuple(g.get("lengths", (2 * math.pi, 2 * math.pi))),
                                  g.get("resolution", 16), tuple(g.get("twists", (0.0, 0.0))))
    except (TypeError, ValueError) as exc:
        ctx.fail(path, str(exc))
    ctx.fail(path + ("variant",), f"expected one of circle, interval, torus; got {variant!r}")


def _only(ctx, block, path, allowed):
    for k in block:
        if k not in allowed:
            ctx.fail(tuple(path) + (k,), f"not valid for variant {block.get('variant')}")


def _parse_weight(ctx, w, path, geometry) -> dict:
    ctx.mapping(w, path, WEIGHT_KEYS)
    kind = w.get("kind")
    if kind not in ("identity", "constant", "profile", "smooth", "random"):
        ctx.fail(tuple(path) + ("kind",), f"unknown weight kind {kind!r}")
    if kind == "constant" and "value" not in w:
        ctx.fail(path, "constant weight needs a value")
    if kind == "profile" and w.get("profile") not in PROFILES:
        ctx.fail(tuple(path) + ("profile",), f"expected one of {PROFILES}")
    return dict(w)


def _parse_family(ctx, f) -> dict:
    path = ("family",)
    ctx.mapping(f, path, FAMILY_KEYS)
    if f.get("kind") not in FAMILY_KINDS:
        ctx.fail(path + ("kind",), f"expected one of {FAMILY_KINDS}")
    members = f.get("members", [1, 2, 4, 8])
    if (not isinstance(members, list) or not members
            or not all(isinstance(m, int) and m >= 1 for m in members)):
        ctx.fail(path + ("members",), "members must be a list of positive integers")
    params = f.get("params", {}) or {}
    if not isinstance(params, dict):
        ctx.fail(path + ("params",), "params must be a mapping")
    return {"kind": f["kind"], "params": params, "members": members}


def _check_solver(ctx, s):
    for key in ("k_max", "l_max", "n_samples", "dictionary_size"):
        if not isinstance(s[key], int) or s[key] < (0 if key == "n_samples" else 1):
            ctx.fail(("solver", key), "must be a positive integer")
    for key in ("kernel_tol", "cluster_tol_rel", "cluster_tol_abs", "tol", "p", "alpha"):
        if not isinstance(s[key], (int, float)) or not s[key] > 0:
            ctx.fail(("solver", key), "must be a positive number")
    if not 0 < s["alpha"] < 1:
        ctx.fail(("solver", "alpha"), "Holder exponent must lie in (0, 1)")
    if not isinstance(s["times"], list) or not all(isinstance(t, (int, float)) for t in s["times"]):
        ctx.fail(("solver", "times"), "times must be a list of numbers")


def build_weight(spec: dict, grid: Grid, seed: int = 0) -> WeightField:
    kind = spec["kind"]
    fd = grid.fiber_dim
    if kind == "identity":
        return WeightField.identity(grid)
    if kind == "constant":
        val = np.asarray(spec["value"], dtype=complex)
        if val.ndim == 0:
            return WeightField.scalar(np.full(grid.n_points, float(val.real)), fd)
        return WeightField.constant(val, grid)
    if kind == "smooth":
        return smooth_base(grid)
    if kind == "random":
        return random_spd_weight(grid, np.random.default_rng(seed))
    theta = angle_coordinate(grid)
    a = float(spec.get("amplitude", 0.5))
    mode = int(spec.get("mode", 1))
    if spec["profile"] == "exp-sin":
        rho = np.exp(a * np.sin(mode * theta))
    elif spec["profile"] == "sine":
        rho = 1 + a * np.sin(mode * theta)
    else:
        rho = 1 + a * np.sin(mode * theta) ** 2
    return WeightField.scalar(rho, fd)
