"""Experiment configuration: defaults table, TOML loading and overrides.

Every physical or numerical default lives in ``DEFAULTS``. A config file
only needs to state what differs; the resolved tree (defaults filled in)
is echoed into each run summary so a run can be reproduced from it.
"""

from __future__ import annotations

import copy
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

# Keys marked "free" accept family-specific parameters in addition to the
# ones listed here.
DEFAULTS = {
    "grid": {
        "dim": 1,
        "points": 1024,
        "half_extent": 20.0,
    },
    "potential": {               # free: family parameters
        "family": "poschl_teller",
        "strength": 2.0,
    },
    "dipole": {                  # free: family parameters
        "family": "gaussian_dipole",
        "amplitude": 1.0,
        "width": 2.0,
    },
    "spectrum": {
        "energy_cut": None,      # None: -spacing^2
        "method": "shift_invert",
    },
    "initial": {
        "kind": "coefficients",  # eigenstate | coefficients | tabulated | random | gaussian
        "index": 0,
        "coefficients": [[0.7071067811865476, 0.0], [0.0, 0.7071067811865476]],  # [re, im] per state
        "path": None,
        "seed": 0,
        "width": 1.0,
        "center": None,
        "project_ac": False,
    },
    "controller": {
        "mode": "feed",
        "eps": 0.1,
        "gain": "auto",          # auto: min(1, 0.05 / ((M+2) ||mu||_inf dt))
        "alpha": 0.0,
        "sigma": 0.0,
        "target": 0,
        "kick": None,            # table: source, amplitude (0.1), duration (half Rabi period)
    },
    "propagator": {
        "dt": 0.005,
        "precision": "double",   # extended: long double transforms, slower
        "absorber": {
            "kind": "mask",
            "width": 0.1,
            "strength": 1.0,
        },
    },
    "assumptions": {
        "gap_tol": 1e-6,
        "coupling_tol": 1e-8,
    },
    "run": {
        "horizon": 500.0,
        "csv_every": 10,
        "plot": True,
        "sensitivity_strengths": [],   # extra absorber strengths rerun for comparison
        "out": "runs/latest",
    },
    "sigma_scan": {
        "points": 16,
        "lo": 1e-3,
        "hi": None,              # None: 0.5 / ||mu||_inf
        "values": None,          # explicit grid overrides points/lo/hi
    },
    "dispersion": {
        "free": False,           # True: V = 0 for the probe
        "times": None,
        "t_start": 3.0,
        "t_end": 9.0,
        "count": 13,
        "expect_slope": None,
        "tolerance": 0.05,
    },
}

_FREE_TABLES = {("potential",), ("dipole",), ("controller", "kick")}
_CONFIG_KEY = "__source__"


def _merge(base: dict, extra: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        where = path + (k,)
        name = ".".join(where)
        if where in _FREE_TABLES:
            if not isinstance(v, dict):
                raise ConfigError(f"{name} must be a table")
            cur = out.get(k) or {}
            if "family" in v and v["family"] != cur.get("family"):
                # a different family discards the default family's parameters
                cur = {}
            cur.update(copy.deepcopy(v))
            out[k] = cur
        elif k not in out:
            raise ConfigError(f"unknown config key {name!r}")
        elif isinstance(out[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{name} must be a table")
            out[k] = _merge(out[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(text: str):
    """Interpret an override value as a TOML value, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _apply_override(tree: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    node = tree
    for i, p in enumerate(parts[:-1]):
        if node.get(p) is None and tuple(parts[: i + 1]) in _FREE_TABLES:
            node[p] = {}
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key.strip()!r}")
        node = node[p]
    last = parts[-1]
    if last not in node and tuple(parts[:-1]) not in _FREE_TABLES:
        raise ConfigError(f"unknown config key {key.strip()!r}")
    node[last] = parse_value(text.strip())


def resolve(raw: dict | None = None, overrides=()) -> dict:
    tree = _merge(DEFAULTS, raw or {})
    for item in overrides:
        _apply_override(tree, item)
    return tree


def load(path, overrides=()) -> dict:
    """Read a TOML file, fill defaults and apply ``key=value`` overrides."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    tree = resolve(raw, overrides)
    tree[_CONFIG_KEY] = str(p.resolve().parent)
    return tree


def source_dir(tree: dict) -> Path:
    return Path(tree.get(_CONFIG_KEY, "."))


def echo(tree: dict) -> dict:
    """The resolved tree without internal bookkeeping keys."""
    return {k: v for k, v in tree.items() if k != _CONFIG_KEY}


def get(tree: dict, dotted: str):
    node = tree
    for p in dotted.split("."):
        node = node[p]
    return node


def require(cond: bool, field: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{field}: {message}")
