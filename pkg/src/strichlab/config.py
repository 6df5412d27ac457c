"""Declarative experiment configurations.

A config is one YAML mapping::

    kind: khat-scan
    seed: 0
    output: results/khat.csv
    params: {a: 2, d: 3}
    grid: {}

Each kind declares its parameter keys with defaults and a check that reuses
the owning module's own preconditions. Validation runs before any
computation and reports the dotted key that failed.
"""

import copy
import math
from dataclasses import dataclass, field
from fractions import Fraction

import yaml

from .errors import ConfigError, StrichlabError
from .levy_kernels import StableDensitySpec
from .mixed_norms import INF, check_exponent, theorem3_threshold
from .scans import theorem2_threshold
from .spectral_core import DispersionParams, UniformGrid

TOP_LEVEL = ("kind", "seed", "output", "params", "grid")


class _Key:
    """One parameter: default value and a converter that raises ValueError."""

    def __init__(self, default, convert):
        self.default = default
        self.convert = convert


def _float(lo=-math.inf, hi=math.inf, lo_open=False):
    def convert(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"expected a number, got {v!r}")
        v = float(v)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        if v < lo or v > hi or (lo_open and v == lo):
            rel = ">" if lo_open else ">="
            raise ValueError(f"{v} outside the range {rel} {lo} and <= {hi}")
        return v
    return convert


def _int(lo=None, hi=None):
    def convert(v):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValueError(f"expected an integer, got {v!r}")
        if (lo is not None and v < lo) or (hi is not None and v > hi):
            raise ValueError(f"{v} outside [{lo}, {hi}]")
        return v
    return convert


def _list(item, min_len=1):
    def convert(v):
        if not isinstance(v, (list, tuple)) or len(v) < min_len:
            raise ValueError(f"expected a list with at least {min_len} entries")
        return [item(x) for x in v]
    return convert


def _exponent(name):
    def convert(v):
        if isinstance(v, bool):
            raise ValueError(f"expected an exponent, got {v!r}")
        e = check_exponent(name, v)
        return "inf" if e is INF else str(e)
    return convert


POSITIVE = _float(0.0, lo_open=True)
DERIVED = object()  # default computed from other keys after parsing
EPS_DEFAULT = [2.0**-j for j in range(3, 11)]

SCHEMAS = {
    "density": {
        "a": _Key(None, _float(0, 2, lo_open=True)),
        "d": _Key(1, _int(1, 8)),
        "t": _Key(1.0, POSITIVE),
        "x": _Key([-10.0 + 0.5 * i for i in range(41)], _list(_float(-1e3, 1e3))),
    },
    "char-check": {
        "a": _Key(None, _float(0, 2, lo_open=True)),
        "d": _Key(1, _int(1, 3)),
        "t": _Key(1.0, POSITIVE),
        "eta": _Key([0.0, 0.5, 1.0, 2.0, 5.0], _list(_float(0.0, 50.0))),
    },
    "dispersive-decay": {
        "a": _Key(None, POSITIVE),
        "d": _Key(None, _int(1, 3)),
        "band": _Key(DERIVED, _int(-2, 6)),
        "t_min": _Key(DERIVED, POSITIVE),
        "t_max": _Key(DERIVED, POSITIVE),
        "samples": _Key(16, _int(1, 200)),
    },
    "khat-scan": {
        "a": _Key(None, POSITIVE),
        "d": _Key(None, _int(1, 8)),
        "eps": _Key(EPS_DEFAULT, _list(POSITIVE)),
    },
    "closed-form-k": {
        "a": _Key(None, POSITIVE),
        "d": _Key(None, _int(1, 8)),
        "sigma": _Key([0.5, 1.0], _list(POSITIVE)),
        "t": _Key([0.0, 0.5, 2.0, 8.0], _list(_float(-1e3, 1e3))),
        "alpha": _Key(DERIVED, _float()),
        "gamma": _Key(0.0, _float(-10, 10)),
    },
    "bessel-verify": {
        "nu_max": _Key(10.0, _float(0.0, 200.0)),
        "r_max": _Key(20.0, _float(0.0, 1e4, lo_open=True)),
        "nu_count": _Key(10, _int(1, 100)),
        "r_count": _Key(20, _int(1, 1000)),
    },
    "theorem2-scan": {
        "a": _Key(None, POSITIVE),
        "d": _Key(None, _int(2, 8)),
        "s": _Key(0.0, _float()),
        "degrees": _Key(list(range(13)), _list(_int(0, 60))),
        "trials": _Key(16, _int(1, 1000)),
        "band": _Key(0, _int(-2, 3)),
        "window": _Key(16.0, POSITIVE),
        "dt": _Key(0.1, POSITIVE),
        "dr": _Key(0.1, POSITIVE),
        "modes": _Key(8, _int(1, 40)),
    },
    "theorem3-scan": {
        "a": _Key(None, _float(0, 2, lo_open=True)),
        "d": _Key(None, _int(2, 8)),
        "p": _Key(None, _exponent("p")),
        "r": _Key(None, _exponent("r")),
        "trials": _Key(16, _int(1, 1000)),
        "window": _Key(64.0, POSITIVE),
        "dt": _Key(0.25, POSITIVE),
        "dr": _Key(0.25, POSITIVE),
        "support": _Key(8.0, POSITIVE),
        "bumps": _Key(4, _int(1, 40)),
        "modes": _Key(4, _int(1, 40)),
    },
    "nls-run": {
        "a": _Key(None, POSITIVE),
        "d": _Key(None, _int(1, 2)),
        "amplitude": _Key(0.3, _float(0.0)),
        "width": _Key(1.0, POSITIVE),
        "dt": _Key(0.05, POSITIVE),
        "horizon": _Key(20.0, POSITIVE),
        "store_every": _Key(10, _int(1)),
    },
    "admissible-table": {
        "a": _Key(None, POSITIVE),
        "d": _Key(None, _int(1, 64)),
        "q": _Key(["2", "4", "inf"], _list(_exponent("q"))),
        "p": _Key(["2", "4", "6", "inf"], _list(_exponent("p"))),
    },
}

GRID_SCHEMA = {
    "points": _Key(None, _int(8)),
    "half_width": _Key(None, POSITIVE),
}

# kinds that run on a periodic grid, with defaults per (a, d) filled in later
GRID_KINDS = ("dispersive-decay", "nls-run")


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    output: str
    params: dict
    grid: dict = field(default_factory=dict)

    def to_dict(self):
        return {"kind": self.kind, "seed": self.seed, "output": self.output,
                "params": copy.deepcopy(self.params), "grid": copy.deepcopy(self.grid)}

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def dispersion(self):
        return DispersionParams(self.params["a"], self.params["d"])

    def uniform_grid(self):
        if not self.grid:
            return None
        return UniformGrid(self.params["d"], self.grid["points"], self.grid["half_width"])


def _check_block(block, schema, prefix):
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(prefix, "must be a mapping")
    for key in block:
        if key not in schema:
            raise ConfigError(f"{prefix}.{key}", "unknown key")
    out = {}
    for key, spec in schema.items():
        path = f"{prefix}.{key}"
        if key in block and block[key] is not None:
            try:
                out[key] = spec.convert(block[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(path, str(exc)) from None
        elif spec.default is None:
            raise ConfigError(path, "required key is missing")
        elif spec.default is DERIVED:
            out[key] = None
        else:
            out[key] = copy.deepcopy(spec.default)
    return out


def _derived_defaults(kind, params):
    if kind == "dispersive-decay":
        radial = params["d"] >= 3
        # the fit needs t 2^{k a} well past 1; the radial path also waits out focusing at r = 0
        defaults = dict(band=0, t_min=32.0, t_max=512.0) if radial else dict(band=3, t_min=1.0, t_max=40.0)
        for key, value in defaults.items():
            if params[key] is None:
                params[key] = value


def _default_grid(kind, params):
    a, d = params["a"], params["d"]
    if kind == "dispersive-decay":
        if d >= 3:
            return {}
        # the fastest packet, speed a (1.6 2^k)^(a-1), must stay inside half the box
        top = 1.6 * 2.0 ** params["band"]
        reach = a * top ** (a - 1) * params["t_max"] + 40.0 / top
        half = 2.0 ** math.ceil(math.log2(max(2.5 * reach, 8.0)))
        points = 2 ** math.ceil(math.log2(max(8.0, 2.0 * half * top / math.pi)))
        return {"points": int(points), "half_width": float(half)}
    return {"points": 1024, "half_width": 128.0}


def _cross_checks(kind, params, grid):
    """Module preconditions that couple several keys."""
    if "a" in params and "d" in params:
        try:
            dp = DispersionParams(params["a"], params["d"])
        except StrichlabError as exc:
            raise ConfigError("params.a", str(exc)) from None
    if kind in ("density", "char-check"):
        try:
            StableDensitySpec(params["a"], params["d"], params["t"])
        except StrichlabError as exc:
            raise ConfigError("params.a", str(exc)) from None
    if kind == "dispersive-decay":
        if params["t_max"] < params["t_min"]:
            raise ConfigError("params.t_max", "must not be below t_min")
        if dp.d >= 3:
            lo, hi = 0.625 * 2.0 ** params["band"], 1.6 * 2.0 ** params["band"]
            r_max = dp.a * max(lo ** (dp.a - 1), hi ** (dp.a - 1)) * params["t_max"] + 128.0
            if hi * r_max > 1e4:
                raise ConfigError("params.t_max", "radial window exceeds the Bessel evaluation envelope")
    if kind == "khat-scan":
        if dp.d <= dp.d_a:
            raise ConfigError("params.d", f"k_hat needs d > d_a = {dp.d_a}")
        span = math.log2(max(params["eps"]) / min(params["eps"]))
        if 0 < span < 3:
            raise ConfigError("params.eps", f"spans {span:.2f} octaves; at least 3 are required")
    if kind == "closed-form-k":
        if params["alpha"] is None:
            params["alpha"] = 0.5 * (dp.a - dp.d)
        beta = dp.a - dp.d - params["alpha"]
        if params["alpha"] <= -dp.d or beta <= -dp.d:
            raise ConfigError("params.alpha", "alpha and a - d - alpha must exceed -d")
    if kind == "theorem2-scan":
        limit = theorem2_threshold(dp)
        if limit is None:
            raise ConfigError("params.d", f"no homogeneous estimate for d={dp.d}, a={dp.a}")
        if not params["s"] < limit:
            raise ConfigError("params.s", f"must be below the threshold {limit:.6g}")
    if kind == "theorem3-scan":
        if dp.d <= dp.d_a:
            raise ConfigError("params.d", f"needs d > d_a = {dp.d_a}")
        limit = theorem3_threshold(dp)
        for name in ("p", "r"):
            e = params[name]
            if e != "inf" and not Fraction(e) > limit:
                raise ConfigError(f"params.{name}", f"exponent {name}={e} must exceed the threshold {limit}")
    if kind == "nls-run":
        try:
            g = UniformGrid(dp.d, grid["points"], grid["half_width"])
        except StrichlabError as exc:
            raise ConfigError("grid.points", str(exc)) from None
        peak = g.nyquist * (math.sqrt(dp.d))
        if params["dt"] * peak**dp.a > math.pi:
            raise ConfigError("params.dt", "dt * max|xi|^a exceeds pi")
        steps = params["horizon"] / params["dt"]
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError("params.horizon", "must be an integer multiple of dt")
        if round(steps) % params["store_every"]:
            raise ConfigError("params.store_every", "must divide the number of steps")
    if kind == "dispersive-decay" and grid:
        try:
            g = UniformGrid(dp.d, grid["points"], grid["half_width"])
        except StrichlabError as exc:
            raise ConfigError("grid.points", str(exc)) from None
        if 1.6 * 2.0 ** params["band"] >= g.nyquist:
            raise ConfigError("grid.points", "band not resolved below the grid Nyquist frequency")


def validate(raw):
    """Turn a parsed mapping into an :class:`ExperimentConfig` or raise :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a mapping")
    for key in raw:
        if key not in TOP_LEVEL:
            raise ConfigError(str(key), "unknown key")
    kind = raw.get("kind")
    if kind not in SCHEMAS:
        raise ConfigError("kind", f"must be one of {', '.join(sorted(SCHEMAS))}")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    output = raw.get("output")
    if not isinstance(output, str) or not output:
        raise ConfigError("output", "required path is missing")
    params = _check_block(raw.get("params"), SCHEMAS[kind], "params")
    _derived_defaults(kind, params)
    grid_raw = raw.get("grid") or {}
    if kind in GRID_KINDS:
        grid = _default_grid(kind, params) if not grid_raw else _check_block(grid_raw, GRID_SCHEMA, "grid")
    elif grid_raw:
        raise ConfigError("grid", f"kind {kind} takes no grid block")
    else:
        grid = {}
    _cross_checks(kind, params, grid)
    return ExperimentConfig(kind, seed, output, params, grid)


def load(path):
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return validate(raw)
