"""Finite-state mean field games on the periodic lattice."""

from ._core import (
    CflError,
    Config,
    ConfigError,
    ContractError,
    Equilibrium,
    NumericalError,
    eval_master,
    fit_rate,
    load_config,
    parse_config,
    project_density,
    run,
    simulate,
    solve_mfg,
    w1_circle,
    w1_circle_embedded,
)

__all__ = [
    "CflError",
    "Config",
    "ConfigError",
    "ContractError",
    "Equilibrium",
    "NumericalError",
    "eval_master",
    "fit_rate",
    "load_config",
    "parse_config",
    "project_density",
    "run",
    "simulate",
    "solve_mfg",
    "w1_circle",
    "w1_circle_embedded",
]
