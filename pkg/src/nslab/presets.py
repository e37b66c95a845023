"""Shipped experiment configurations.

Run presets are configs for :func:`nslab.harness.run_single`; sweep presets
are sweep specs for :func:`nslab.harness.run_sweep`.
"""
from __future__ import annotations

import copy

from nslab.exceptions import ConfigError

_FRONT_GRID = {"n_cells": 1600, "length": 4.0, "x_left": -2.0, "boundary": "constant_extension"}

RUNS = {
    "constant": {
        "grid": {"n_cells": 400, "length": 4.0, "boundary": "periodic"},
        "kernel": {"kind": "constant", "gamma": 1.0},
        "ic": {"name": "constant", "value": 0.4},
        "sim": {"t_final": 2.0},
    },
    # local flux; the kernel only sets the time-step cap
    "lwr_limit": {
        "grid": {"n_cells": 3200, "length": 1.0, "x_left": 0.0, "boundary": "periodic"},
        "kernel": {"kind": "constant", "gamma": 0.1},
        "flux": {"name": "lwr"},
        "ic": {"name": "sine", "mean": 0.5, "amplitude": 0.25, "period": 1.0},
        "sim": {"t_final": 2.0},
    },
    "full_ramp": {
        "grid": {"n_cells": 1600, "length": 8.0, "boundary": "constant_extension"},
        "kernel": {"kind": "constant", "gamma": 1.0},
        "ic": {"name": "full_ramp", "x1": -1.0, "x2": 1.0},
        "sim": {"t_final": 20.0},
    },
    "red_light_gamma1": {
        "grid": {"n_cells": 800, "length": 4.0, "x_left": -2.0, "boundary": "constant_extension"},
        "kernel": {"kind": "constant", "gamma": 1.0},
        "ic": {"name": "red_light", "c": 0.5, "sup_slope": 1.75},
        "sim": {"t_final": 1.0, "order": 2},
    },
    "red_light_gamma01": {
        "grid": {"n_cells": 800, "length": 4.0, "x_left": -2.0, "boundary": "constant_extension"},
        "kernel": {"kind": "constant", "gamma": 0.1},
        "ic": {"name": "red_light", "c": 0.5, "sup_slope": 1.75},
        "sim": {"t_final": 1.0, "order": 2},
    },
}


def _front_sweep(kind: str) -> dict:
    return {
        "axis1": {"key": "ic.sup_slope", "linspace": [0.1, 5.0, 20]},
        "fixed": {
            "grid": dict(_FRONT_GRID),
            "kernel": {"kind": kind, "gamma": 1.0},
            "ic": {"name": "tanh_front", "u_left": 0.2, "u_right": 0.8, "sup_slope": 1.0},
            "sim": {"t_final": 20.0},
        },
    }


SWEEPS = {
    "constant_front_sweep": _front_sweep("constant"),
    "linear_front_sweep": _front_sweep("linear"),
    # both slopes varied; short horizon keeps the two fronts apart
    "two_front_sweep": {
        "axis1": {"key": "ic.sup_slope", "linspace": [0.5, 5.0, 10]},
        "axis2": {"key": "ic.inf_slope", "values": [-0.5, -3.0]},
        "fixed": {
            "grid": {"n_cells": 3200, "length": 16.0, "boundary": "constant_extension"},
            "kernel": {"kind": "constant", "gamma": 1.0},
            "ic": {"name": "two_front", "base": 0.2, "peak": 0.8, "sup_slope": 1.0,
                   "inf_slope": -1.0, "x_up": -4.0, "x_down": 4.0},
            "sim": {"t_final": 20.0},
        },
    },
}


def get_run(name: str) -> dict:
    try:
        return copy.deepcopy(RUNS[name])
    except KeyError:
        raise ConfigError(f"unknown run preset {name!r}; known: {sorted(RUNS)}") from None


def get_sweep(name: str) -> dict:
    try:
        return copy.deepcopy(SWEEPS[name])
    except KeyError:
        raise ConfigError(f"unknown sweep preset {name!r}; known: {sorted(SWEEPS)}") from None
