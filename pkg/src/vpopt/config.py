"""Run configuration files: strict YAML schema, validation and bundled presets.

A config is a YAML mapping with the blocks ``scenario``, ``control``,
``optimizer``, ``output``, ``scan`` and ``grad_check``, all optional except
``scenario.kind``. ``preset: <name>`` starts from a bundled preset and
deep-merges the remaining blocks on top. Unknown keys are errors, reported with
their dotted path and line number.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any

import numpy as np
import yaml

from .control import COSINE, SINE, ControlBasis
from .optimizer import DEConfig, GDConfig, HybridConfig, default_bounds
from .phase_space import FOCUSING, TWO_STREAM, PhaseGrid, ScenarioConfig, TimeSpec

METHODS = ("gd", "de", "hybrid")
PRESETS = ("focusing_default", "two_stream_default")

# Named initial guesses (A/B/C) for the ten-mode focusing and five-mode two-stream problems.
INITIAL_GUESSES = {
    FOCUSING: {
        "A": (-0.69531099, -1.7011901, -3.70236071, -1.049485, -0.45695289,
              1.87686503, 1.91960996, 1.69153168, 0.42096132, -0.40649424),
        "B": (0.94504888, 1.14103725, -1.55007537, 0.8429296, -0.08029718,
              2.40461788, 0.9644806, 2.25242665, -0.12171427, -0.60917031),
        "C": (-0.69531099, -1.7011901, -3.1878159, 0.97433649, 1.82681106,
              1.68046644, 2.31895602, 1.69153168, 1.33032262, -0.89049334),
    },
    TWO_STREAM: {
        "A": (-0.00016439, -0.00003536, 0.00135148, -0.01075463, 0.01016917),
        "B": (0.00015670, -0.00016387, 0.00113154, -0.01082209, 0.01086655),
        "C": (-0.00018648, -0.00043187, 0.00172712, -0.01063006, 0.01045662),
    },
}

_SCHEMA: dict[str, Any] = {
    "preset": None,
    "scenario": {
        "kind": None,
        "params": {"a": None, "b": None, "alpha": None, "beta": None, "vbar": None},
        "grid": {"n_x": None, "n_v": None, "x_min": None, "x_max": None, "v_min": None, "v_max": None},
        "time": {"dt": None, "T": None, "n_steps": None},
        "self_field": None,
    },
    "control": {"parity": None, "modes": None, "initial": None},
    "optimizer": {
        "method": None,
        "seed": None,
        "gd": {"max_iters": None, "h0": None, "c1": None, "backtrack": None, "max_backtracks": None,
               "gtol": None, "tol": None},
        "de": {"popsize": None, "bounds": None, "mutation": None, "crossover": None,
               "max_generations": None, "target_J": None, "workers": None},
        "hybrid": {"n_p": None, "it": None},
    },
    "output": {"directory": None, "snapshot_times": None, "cadence": None, "k_max": None},
    "scan": {"axes": None, "workers": None},
    "grad_check": {"eps": None, "n_points": None, "n_coords": None, "sigma": None, "rtol": None},
}

_PARAM_DEFAULTS = {
    FOCUSING: {"a": 0.2, "b": 2 * math.pi},
    TWO_STREAM: {"alpha": 1e-3, "beta": 0.2, "vbar": 2.4},
}


class ConfigError(ValueError):
    """Schema or invariant violation, carrying the offending field and its line."""

    def __init__(self, message: str, path: tuple = (), line: int | None = None, source: str | None = None):
        self.path = ".".join(str(p) for p in path)
        self.line = line
        where = source or "<config>"
        if line is not None:
            where += f":{line}"
        prefix = f"{where}: " + (f"field '{self.path}': " if self.path else "")
        super().__init__(prefix + message)


# --------------------------------------------------------------------------- YAML with line marks


def _construct(node, path, marks):
    marks[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k_node, v_node in node.value:
            key = _construct(k_node, path, {})
            if not isinstance(key, str):
                raise ConfigError(f"keys must be strings, got {key!r}", path, k_node.start_mark.line + 1)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", path + (key,), k_node.start_mark.line + 1)
            out[key] = _construct(v_node, path + (key,), marks)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), marks) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def load_yaml(text: str, source: str = "<config>") -> tuple[dict, dict]:
    """Parse YAML text into ``(mapping, marks)`` where ``marks`` maps key paths to line numbers."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1, source=source) from None
    if node is None:
        return {}, {}
    marks: dict = {}
    data = _construct(node, (), marks)
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping", line=1, source=source)
    return data, marks


def _check_keys(data: dict, schema: dict, path: tuple, marks: dict, source: str) -> None:
    for key, value in data.items():
        p = path + (key,)
        if key not in schema:
            allowed = ", ".join(sorted(schema))
            raise ConfigError(f"unknown key (allowed: {allowed})", p, marks.get(p), source)
        sub = schema[key]
        if isinstance(sub, dict):
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", p, marks.get(p), source)
            _check_keys(value, sub, p, marks, source)


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}", ("preset",))
    return resources.files("vpopt").joinpath("presets", f"{name}.yaml").read_text()


# --------------------------------------------------------------------------- typed config


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    snapshot_times: tuple[float, ...] = ()
    cadence: int = 1
    k_max: int = 8


@dataclass(frozen=True)
class GradCheckConfig:
    eps: float = 1e-5
    n_points: int = 20
    n_coords: int = 5
    sigma: float = 0.01
    rtol: float = 1e-5


@dataclass(frozen=True)
class RunConfig:
    """Validated run description assembled from a config file."""

    scenario: ScenarioConfig
    basis: ControlBasis
    initial: np.ndarray
    method: str
    seed: int
    gd: GDConfig
    de: DEConfig
    hybrid: HybridConfig
    output: OutputConfig
    scan_axes: tuple | None = None
    scan_workers: int = 1
    grad_check: GradCheckConfig = field(default_factory=GradCheckConfig)
    source: str = "<config>"

    def with_seed(self, seed: int) -> "RunConfig":
        seed = _as_int(seed, ("optimizer", "seed"), {}, self.source, minimum=0)
        return replace(self, seed=seed, de=replace(self.de, seed=seed),
                       hybrid=replace(self.hybrid, de=replace(self.de, seed=seed)))

    def with_output_dir(self, directory: str) -> "RunConfig":
        return replace(self, output=replace(self.output, directory=str(directory)))

    def snapshot_steps(self, time: TimeSpec | None = None) -> tuple[int, ...]:
        """Step indices of ``output.snapshot_times`` on ``time`` (default: the scenario's)."""
        time = time or self.scenario.time
        steps = []
        for t in self.output.snapshot_times:
            n = round(t / time.dt)
            if abs(n * time.dt - t) > 1e-9 * max(1.0, abs(t)) or not 0 <= n <= time.n_steps:
                raise ConfigError(f"snapshot time {t} is not a step time in [0, {time.T}]",
                                  ("output", "snapshot_times"), source=self.source)
            steps.append(int(n))
        return tuple(sorted(set(steps)))


def _get(d: dict, key: str, default=None):
    return d.get(key, default) if d is not None else default


def _as_float(value, path, marks, source, positive=False, nonneg=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path, marks.get(path), source)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", path, marks.get(path), source)
    if positive and not value > 0:
        raise ConfigError(f"must be > 0, got {value}", path, marks.get(path), source)
    if nonneg and value < 0:
        raise ConfigError(f"must be >= 0, got {value}", path, marks.get(path), source)
    return value


def _as_int(value, path, marks, source, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"expected an integer, got {value!r}", path, marks.get(path), source)
    if minimum is not None and value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path, marks.get(path), source)
    return value


def _as_list(value, path, marks, source):
    if not isinstance(value, list):
        raise ConfigError(f"expected a list, got {value!r}", path, marks.get(path), source)
    return value


def _wrap(fn, path, marks, source):
    """Run a constructor and re-raise its ValueError as a ConfigError at ``path``."""
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path, marks.get(path), source) from None


def _build_scenario(block: dict, marks, source) -> ScenarioConfig:
    path = ("scenario",)
    if not block or "kind" not in block:
        raise ConfigError("scenario.kind is required", path, marks.get(path), source)
    kind = block["kind"]
    if kind not in (FOCUSING, TWO_STREAM):
        raise ConfigError(f"kind must be {FOCUSING!r} or {TWO_STREAM!r}, got {kind!r}",
                          path + ("kind",), marks.get(path + ("kind",)), source)
    params = dict(_PARAM_DEFAULTS[kind])
    for key, value in (_get(block, "params") or {}).items():
        p = path + ("params", key)
        if key not in params:
            raise ConfigError(f"not a parameter of {kind}", p, marks.get(p), source)
        params[key] = _as_float(value, p, marks, source)
    if kind == TWO_STREAM:
        for key in ("beta", "vbar"):
            if not params[key] > 0:
                p = path + ("params", key)
                raise ConfigError("must be > 0", p, marks.get(p), source)

    g = _get(block, "grid") or {}
    gp = path + ("grid",)
    n_x = _as_int(_get(g, "n_x", 128), gp + ("n_x",), marks, source, minimum=2)
    n_v = _as_int(_get(g, "n_v", 128), gp + ("n_v",), marks, source, minimum=2)
    x_hi = 4 * math.pi if kind == FOCUSING else 2 * math.pi / params["beta"]
    bounds = {"x_min": 0.0, "x_max": x_hi, "v_min": -6.0, "v_max": 6.0}
    for key in bounds:
        if key in g:
            bounds[key] = _as_float(g[key], gp + (key,), marks, source)
    grid = _wrap(lambda: PhaseGrid(n_x, n_v, **bounds), gp, marks, source)

    t = _get(block, "time") or {}
    tp = path + ("time",)
    dt = _as_float(_get(t, "dt", 0.5 if kind == FOCUSING else 0.1), tp + ("dt",), marks, source, positive=True)
    if "T" in t and "n_steps" in t:
        raise ConfigError("give either T or n_steps, not both", tp, marks.get(tp), source)
    if "n_steps" in t:
        n_steps = _as_int(t["n_steps"], tp + ("n_steps",), marks, source, minimum=1)
        time = TimeSpec(dt, n_steps)
    else:
        T = _as_float(_get(t, "T", 20.0 if kind == FOCUSING else 40.0), tp + ("T",), marks, source, positive=True)
        time = _wrap(lambda: TimeSpec.from_horizon(dt, T), tp + ("T",), marks, source)

    self_field = _get(block, "self_field", True)
    if not isinstance(self_field, bool):
        p = path + ("self_field",)
        raise ConfigError(f"expected true/false, got {self_field!r}", p, marks.get(p), source)
    return ScenarioConfig(kind, grid, time, params, self_field)


def _build_control(block: dict, scenario: ScenarioConfig, marks, source):
    path = ("control",)
    block = block or {}
    parity = _get(block, "parity", SINE if scenario.kind == FOCUSING else COSINE)
    modes_raw = _get(block, "modes", list(range(1, 11)) if scenario.kind == FOCUSING else [1, 2, 3, 4, 5])
    modes = [_as_int(m, path + ("modes", i), marks, source) for i, m in
             enumerate(_as_list(modes_raw, path + ("modes",), marks, source))]
    basis = _wrap(lambda: ControlBasis(tuple(modes), parity), path, marks, source)

    init = _get(block, "initial")
    ip = path + ("initial",)
    if init is None:
        a0 = np.zeros(len(basis))
    elif isinstance(init, str):
        table = INITIAL_GUESSES[scenario.kind]
        if init not in table:
            raise ConfigError(f"unknown initial-guess set {init!r}; available: {', '.join(table)}",
                              ip, marks.get(ip), source)
        a0 = np.array(table[init])
        if a0.size != len(basis):
            raise ConfigError(f"set {init!r} has {a0.size} coefficients but modes has {len(basis)}",
                              ip, marks.get(ip), source)
    else:
        values = _as_list(init, ip, marks, source)
        a0 = np.array([_as_float(v, ip + (i,), marks, source) for i, v in enumerate(values)])
        if a0.size != len(basis):
            raise ConfigError(f"expected {len(basis)} coefficients, got {a0.size}", ip, marks.get(ip), source)
    a0.setflags(write=False)
    return basis, a0


def _pair(value, path, marks, source):
    values = _as_list(value, path, marks, source)
    if len(values) != 2:
        raise ConfigError(f"expected [low, high], got {value!r}", path, marks.get(path), source)
    return tuple(_as_float(v, path + (i,), marks, source) for i, v in enumerate(values))


def _build_optimizer(block: dict, scenario: ScenarioConfig, marks, source):
    path = ("optimizer",)
    block = block or {}
    method = _get(block, "method", "gd")
    if method not in METHODS:
        p = path + ("method",)
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}", p, marks.get(p), source)
    seed = _as_int(_get(block, "seed", 0), path + ("seed",), marks, source, minimum=0)

    gd_block = _get(block, "gd") or {}
    gp = path + ("gd",)
    gd_kwargs = {"h0": 1.0 if scenario.kind == FOCUSING else 0.01}
    for key, value in gd_block.items():
        p = gp + (key,)
        gd_kwargs[key] = (_as_int(value, p, marks, source) if key in ("max_iters", "max_backtracks")
                          else _as_float(value, p, marks, source))
    gd = _wrap(lambda: GDConfig(**gd_kwargs), gp, marks, source)

    de_block = _get(block, "de") or {}
    dp = path + ("de",)
    de_kwargs: dict[str, Any] = {"bounds": (default_bounds(scenario),), "seed": seed}
    for key, value in de_block.items():
        p = dp + (key,)
        if key == "bounds":
            values = _as_list(value, p, marks, source)
            if values and isinstance(values[0], list):
                de_kwargs["bounds"] = tuple(_pair(v, p + (i,), marks, source) for i, v in enumerate(values))
            else:
                de_kwargs["bounds"] = (_pair(value, p, marks, source),)
        elif key == "mutation":
            de_kwargs["mutation"] = _pair(value, p, marks, source)
        elif key in ("popsize", "max_generations", "workers"):
            de_kwargs[key] = _as_int(value, p, marks, source, minimum=1 if key == "workers" else 0)
        elif key == "target_J":
            de_kwargs[key] = None if value is None else _as_float(value, p, marks, source)
        else:
            de_kwargs[key] = _as_float(value, p, marks, source)
    de = _wrap(lambda: DEConfig(**de_kwargs), dp, marks, source)

    hb = _get(block, "hybrid") or {}
    hp = path + ("hybrid",)
    n_p = _as_int(_get(hb, "n_p", 1), hp + ("n_p",), marks, source, minimum=0)
    it = _as_int(_get(hb, "it", 3), hp + ("it",), marks, source, minimum=1)
    hybrid = _wrap(lambda: HybridConfig(de, n_p=n_p, it=it, h0=gd.h0, c1=gd.c1, backtrack=gd.backtrack),
                   hp, marks, source)
    return method, seed, gd, de, hybrid


def _build_output(block: dict, marks, source) -> OutputConfig:
    path = ("output",)
    block = block or {}
    directory = _get(block, "directory", "out")
    if not isinstance(directory, str) or not directory:
        p = path + ("directory",)
        raise ConfigError("expected a non-empty path string", p, marks.get(p), source)
    times_raw = _as_list(_get(block, "snapshot_times", []), path + ("snapshot_times",), marks, source)
    times = tuple(_as_float(t, path + ("snapshot_times", i), marks, source, nonneg=True)
                  for i, t in enumerate(times_raw))
    cadence = _as_int(_get(block, "cadence", 1), path + ("cadence",), marks, source, minimum=1)
    k_max = _as_int(_get(block, "k_max", 8), path + ("k_max",), marks, source, minimum=0)
    return OutputConfig(directory, times, cadence, k_max)


def _build_scan(block: dict, n_coeffs: int, marks, source):
    if not block or "axes" not in block:
        return None, 1
    path = ("scan", "axes")
    axes_raw = _as_list(block["axes"], path, marks, source)
    axes = []
    for i, ax in enumerate(axes_raw):
        p = path + (i,)
        if isinstance(ax, dict):
            unknown = set(ax) - {"start", "stop", "num"}
            if unknown or set(ax) != {"start", "stop", "num"}:
                raise ConfigError("axis mapping needs exactly start, stop, num", p, marks.get(p), source)
            start = _as_float(ax["start"], p + ("start",), marks, source)
            stop = _as_float(ax["stop"], p + ("stop",), marks, source)
            num = _as_int(ax["num"], p + ("num",), marks, source, minimum=1)
            axes.append(np.linspace(start, stop, num))
        else:
            values = _as_list(ax, p, marks, source)
            if not values:
                raise ConfigError("axis must be non-empty", p, marks.get(p), source)
            axes.append(np.array([_as_float(v, p + (j,), marks, source) for j, v in enumerate(values)]))
    if len(axes) != n_coeffs:
        raise ConfigError(f"need one axis per control mode ({n_coeffs}), got {len(axes)}",
                          path, marks.get(path), source)
    workers = _as_int(_get(block, "workers", 1), ("scan", "workers"), marks, source, minimum=1)
    return tuple(axes), workers


def _build_grad_check(block: dict, marks, source) -> GradCheckConfig:
    block = block or {}
    path = ("grad_check",)
    kw = {}
    for key, value in block.items():
        p = path + (key,)
        if key in ("n_points", "n_coords"):
            kw[key] = _as_int(value, p, marks, source, minimum=1)
        else:
            kw[key] = _as_float(value, p, marks, source, positive=True)
    return GradCheckConfig(**kw)


def config_from_mapping(data: dict, marks: dict | None = None, source: str = "<config>") -> RunConfig:
    """Validate a parsed mapping (presets merged in) and build a :class:`RunConfig`."""
    marks = marks or {}
    _check_keys(data, _SCHEMA, (), marks, source)
    if "preset" in data:
        name = data["preset"]
        if not isinstance(name, str) or name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}",
                              ("preset",), marks.get(("preset",)), source)
        base, _ = load_yaml(_preset_text(name), f"<preset {name}>")
        data = _merge(base, {k: v for k, v in data.items() if k != "preset"})
        _check_keys(data, _SCHEMA, (), marks, source)
    scenario = _build_scenario(data.get("scenario"), marks, source)
    basis, a0 = _build_control(data.get("control"), scenario, marks, source)
    method, seed, gd, de, hybrid = _build_optimizer(data.get("optimizer"), scenario, marks, source)
    output = _build_output(data.get("output"), marks, source)
    scan_axes, scan_workers = _build_scan(data.get("scan"), len(basis), marks, source)
    grad_check = _build_grad_check(data.get("grad_check"), marks, source)
    cfg = RunConfig(scenario, basis, a0, method, seed, gd, de, hybrid, output,
                    scan_axes, scan_workers, grad_check, source)
    cfg.snapshot_steps()
    return cfg


def parse_config(path: str | os.PathLike) -> RunConfig:
    """Read and validate a YAML run config.

    ``path`` may also name a bundled preset (``focusing_default``,
    ``two_stream_default``) when no such file exists.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        if path in PRESETS:
            return load_preset(path)
        raise ConfigError(f"config file not found: {path}", source=path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    data, marks = load_yaml(text, path)
    return config_from_mapping(data, marks, path)


def load_preset(name: str) -> RunConfig:
    data, marks = load_yaml(_preset_text(name), f"<preset {name}>")
    return config_from_mapping(data, marks, f"<preset {name}>")
