import math

import numpy as np
import pytest

from bsnq.config import (
    build_initial_state,
    build_problem,
    load_config,
    load_config_file,
    render_config,
)
from bsnq.errors import ConfigError


def test_defaults_need_only_nu():
    cfg = load_config({"params": {"nu": 0.1}})
    assert cfg["grid"]["Nx"] == 64
    assert cfg["grid"]["Lx"] == 2.0 * math.pi
    assert cfg["run"]["mode"] == "nonlinear"
    assert cfg["steady"]["delta"]["kind"] == "constant"
    grid, ss, params, step_cfg = build_problem(cfg)
    assert params.nu == 0.1
    # beta defaults to gamma * max(Psi) + 1 = 1 * 1 + 1
    assert abs(params.beta - 2.0) < 1e-12


def test_nu_required():
    with pytest.raises(ConfigError) as err:
        load_config({})
    assert "params.nu" in str(err.value)


def test_unknown_keys_rejected_with_dotted_path():
    with pytest.raises(ConfigError) as err:
        load_config({"params": {"nu": 0.1, "bogus": 3}})
    assert "params.bogus" in str(err.value)
    with pytest.raises(ConfigError) as err:
        load_config({"params": {"nu": 0.1}, "runn": {}})
    assert "runn" in str(err.value)
    with pytest.raises(ConfigError) as err:
        load_config({"params": {"nu": 0.1},
                     "steady": {"delta": {"kind": "constant", "epsilon": 1}}})
    assert "steady.delta" in str(err.value)


def test_variant_kind_validation():
    with pytest.raises(ConfigError):
        load_config({"params": {"nu": 0.1},
                     "steady": {"potential": {"kind": "cubic"}}})
    cfg = load_config({"params": {"nu": 0.1},
                       "steady": {"potential": {"kind": "harmonic_mode",
                                                "g": 1.0, "eps": 0.2, "m": 2}}})
    assert cfg["steady"]["potential"]["m"] == 2


def test_shear_consistency_enforced():
    with pytest.raises(ConfigError) as err:
        load_config({"params": {"nu": 0.1, "alpha0": 0.5}})
    assert "alpha0" in str(err.value)
    cfg = load_config({"params": {"nu": 0.1, "alpha0": 0.5},
                       "steady": {"a0": 0.5}})
    assert cfg["steady"]["a0"] == 0.5


def test_yaml_string_and_file(tmp_path):
    text = "params:\n  nu: 0.2\nrun:\n  t_end: 1.5\n"
    cfg = load_config(text)
    assert cfg["run"]["t_end"] == 1.5
    p = tmp_path / "c.yaml"
    p.write_text(text)
    cfg2 = load_config_file(str(p))
    assert cfg2 == cfg
    with pytest.raises(ConfigError):
        load_config("- just\n- a list\n")


def test_render_roundtrip():
    cfg = load_config({"params": {"nu": 0.1}})
    text = render_config(cfg)
    cfg2 = load_config_file_text(text)
    assert cfg2 == cfg


def load_config_file_text(text):
    import yaml

    return load_config(yaml.safe_load(text))


def test_initial_state_seed_override():
    cfg = load_config({"params": {"nu": 0.1}, "grid": {"Nx": 16, "Nz": 17},
                       "ic": {"kind": "random", "amplitude": 0.1, "seed": 1}})
    grid, ss, params, _ = build_problem(cfg)
    a = build_initial_state(cfg, grid, ss, params)
    b = build_initial_state(cfg, grid, ss, params)
    c = build_initial_state(cfg, grid, ss, params, seed=2)
    assert np.array_equal(a.omega, b.omega)
    assert not np.array_equal(a.omega, c.omega)


def test_poly_delta_needs_coeffs():
    with pytest.raises(ConfigError):
        cfg = load_config({"params": {"nu": 0.1},
                           "steady": {"delta": {"kind": "poly_psi"}}})
        build_problem(cfg)
