"""Run configuration: YAML document with strict (unknown keys rejected) schema.

Defaults reproduce the published analysis settings: filter R = 0.7, quadrature
bins of width 1 on [-20, 20], ~0.1-wide phase bins, phase-space grid
[-20, 20] at step 0.25, and the condensate model parameters of the
simulation section.
"""

from __future__ import annotations

import copy
import os
from pathlib import Path

import yaml

ENV_CONFIG = "QUASIP_CONFIG"

DEFAULTS = {
    "master_seed": 12345,
    "tomography": {
        "R": 0.7,
        "x_min": -20.0,
        "x_max": 20.0,
        "n_x": 40,
        "n_phi": 62,
        "grid": {"qmin": -20.0, "qmax": 20.0, "pmin": -20.0, "pmax": 20.0, "step": 0.25},
    },
    "selection": {
        "s_list": [2.0, 5.0, 10.0],
        "w": 0.57,
        "orthogonality_window": 2000,
    },
    "twa": {
        "m_eff": 1e-4,
        "gamma_c": 0.2,
        "gamma_r": 0.3,
        "R_r": 0.015,
        "g_c": 6e-3,
        "g_r": 6e-3,
        "P0": 8.0,
        "pump_width": 40.0,
        "L": 230.4,
        "N": 256,
        "dt": 0.02,
        "hbar": 0.6582,
        "M": 100,
        "t_relax": 300.0,
        "t_max": 1500.0,
        "record_every": 10.0,
        "powers": [0.8, 1.0, 1.3, 1.7],
        "p_thr": 8.0,
        "mode": "samples",
        "seeds": {"relax": 101, "prepare": 202},
    },
    "fits": {
        "models": ["exponential", "gaussian", "power", "shifted_power"],
        "weighted": False,
    },
    "io": {
        "outdir": "out",
    },
}


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


def _merge(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"section {path or '<root>'} must be a mapping")
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown configuration key: {here}")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, here)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Load and validate a YAML run configuration.

    ``path=None`` falls back to the QUASIP_CONFIG environment variable, then
    to pure defaults.  Unknown keys raise :class:`ConfigError`.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path is None:
        return copy.deepcopy(DEFAULTS)
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    return _merge(DEFAULTS, data)


def model_params_from(config: dict):
    from quasip.twa import ModelParams

    twa = config["twa"]
    keys = ("m_eff", "gamma_c", "gamma_r", "R_r", "g_c", "g_r", "P0",
            "pump_width", "L", "N", "dt", "hbar")
    return ModelParams(**{k: twa[k] for k in keys})
