"""YAML run configuration: defaults, validation, and object construction."""

import copy
import logging
import math

import numpy as np
import yaml

from .dynamics import StepConfig, make_initial_state
from .errors import ConfigError
from .grid import build_grid
from .steady import (
    ConstantDelta,
    DeltaOfPsi,
    HarmonicMode,
    LinearZ,
    PhysicalParams,
    SteadyState,
)

log = logging.getLogger(__name__)

DEFAULTS = {
    "grid": {"Lx": 2.0 * math.pi, "h": 1.0, "Nx": 64, "Nz": 65},
    "params": {
        "f": 1.0,
        "nu": None,          # required
        "alpha": 1.0,
        "alpha0": 0.0,
        "gamma": 1.0,
        "beta": None,        # None -> gamma * max(Psi) + 1
    },
    "steady": {
        "a0": 0.0,
        "a1": 0.0,
        "rho_ref": 0.0,
        "delta": {"kind": "constant", "value": -1.0},
        "potential": {"kind": "linear", "g": 1.0},
    },
    "run": {
        "mode": "nonlinear",
        "t_end": 10.0,
        "dt": 0.01,
        "cfl_target": 0.5,
        "dealias": True,
        "observe_every": 1,
        "snapshot_every": 0,
        "max_steps": 10_000_000,
    },
    "ic": {
        "kind": "single_mode",
        "field": "omega",
        "amplitude": 0.01,
        "m": 1,
        "n": 1,
        "phase": 0.0,
        "fields": ["omega"],
        "kmax": None,
        "seed": 0,
    },
    "stability": {
        "method": "auto",
        "tol_phi": 1e-10,
    },
}

# Sections whose sub-dicts are swapped wholesale, not merged key-by-key.
_VARIANT_KEYS = {("steady", "delta"), ("steady", "potential")}

_VARIANT_FIELDS = {
    ("steady", "delta"): {
        "constant": {"kind", "value"},
        "poly_psi": {"kind", "coeffs"},
    },
    ("steady", "potential"): {
        "linear": {"kind", "g"},
        "harmonic_mode": {"kind", "g", "eps", "m"},
    },
}


def _merge(defaults, user, path=""):
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        dotted = f"{path}{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key: {dotted}")
        if isinstance(defaults[key], dict) and tuple(dotted.split(".")) not in _VARIANT_KEYS:
            if not isinstance(val, dict):
                raise ConfigError(f"{dotted} must be a mapping")
            out[key] = _merge(defaults[key], val, dotted + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _check_variant(cfg, section, name):
    spec = cfg[section][name]
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{section}.{name} must be a mapping with a 'kind'")
    kinds = _VARIANT_FIELDS[(section, name)]
    kind = spec["kind"]
    if kind not in kinds:
        raise ConfigError(
            f"{section}.{name}.kind must be one of {sorted(kinds)}, got {kind!r}"
        )
    extra = set(spec) - kinds[kind]
    if extra:
        raise ConfigError(
            f"unknown config key: {section}.{name}.{sorted(extra)[0]}"
        )


def load_config(source=None):
    """Merge a YAML file path, YAML string, or dict over the defaults."""
    if source is None:
        user = {}
    elif isinstance(source, dict):
        user = source
    else:
        user = yaml.safe_load(source)
        if user is None:
            user = {}
        if not isinstance(user, dict):
            raise ConfigError("config root must be a mapping")
    cfg = _merge(DEFAULTS, user)
    _check_variant(cfg, "steady", "delta")
    _check_variant(cfg, "steady", "potential")
    if cfg["params"]["nu"] is None:
        raise ConfigError("params.nu is required")
    if cfg["params"]["alpha0"] != cfg["steady"]["a0"]:
        raise ConfigError(
            "params.alpha0 (%r) must equal steady.a0 (%r): the shear of the "
            "steady v-profile is what multiplies u in the rotation term"
            % (cfg["params"]["alpha0"], cfg["steady"]["a0"])
        )
    return cfg


def load_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        user = yaml.safe_load(fh)
    if user is None:
        user = {}
    if not isinstance(user, dict):
        raise ConfigError("config root must be a mapping")
    return load_config(user)


def _build_delta(spec):
    if spec["kind"] == "constant":
        return ConstantDelta(spec.get("value", -1.0))
    coeffs = spec.get("coeffs")
    if not coeffs:
        raise ConfigError("steady.delta.coeffs is required for poly_psi")
    return DeltaOfPsi(coeffs)


def _build_potential(spec):
    if spec["kind"] == "linear":
        return LinearZ(spec.get("g", 1.0))
    return HarmonicMode(
        spec.get("g", 1.0), spec.get("eps", 0.1), int(spec.get("m", 1))
    )


def build_problem(cfg):
    """cfg dict -> (grid, steady state, params, step config)."""
    g = cfg["grid"]
    grid = build_grid(g["Lx"], g["h"], int(g["Nx"]), int(g["Nz"]))
    st = cfg["steady"]
    ss = SteadyState.build(
        grid,
        _build_delta(st["delta"]),
        _build_potential(st["potential"]),
        a0=st["a0"],
        a1=st["a1"],
        rho_ref=st["rho_ref"],
    )
    p = cfg["params"]
    beta = p["beta"]
    if beta is None:
        beta = p["gamma"] * float(np.max(ss.Psi)) + 1.0
        log.info("config: beta defaulted to gamma*max(Psi)+1 = %.6g", beta)
    params = PhysicalParams(
        f=p["f"], nu=p["nu"], alpha=p["alpha"], alpha0=p["alpha0"],
        gamma=p["gamma"], beta=beta,
    )
    r = cfg["run"]
    step_cfg = StepConfig(
        dt=r["dt"], mode=r["mode"], cfl_target=r["cfl_target"],
        dealias=bool(r["dealias"]),
    )
    return grid, ss, params, step_cfg


def build_initial_state(cfg, grid, ss, params, seed=None):
    ic = dict(cfg["ic"])
    if seed is not None:
        ic["seed"] = seed
    rng = np.random.default_rng(int(ic.get("seed") or 0))
    return make_initial_state(grid, ss, params, ic, rng=rng)


def render_config(cfg):
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)
