"""Index tracking with learned factor coefficients and a cardinality-constrained MILP."""

import json as _json

from ._core import (
    ConfigError,
    DegenerateError,
    EmptyInputError,
    EmpiricalCdf,
    Error,
    LookAheadError,
    MissingDataError,
    ModelingError,
    ParseError,
    ScheduleError,
    ShapeError,
    ValidationError,
    fit_cdf,
    generate_market,
    load_panels,
    ols,
    solve_portfolio,
    theil_sen,
    tracking_error,
)
from ._core import run_backtest as _run_backtest


def run_backtest(config):
    """Run a backtest from a config dict (or JSON string) and return the aggregates."""
    text = config if isinstance(config, str) else _json.dumps(config)
    return _run_backtest(text)


__all__ = [
    "ConfigError",
    "DegenerateError",
    "EmptyInputError",
    "EmpiricalCdf",
    "Error",
    "LookAheadError",
    "MissingDataError",
    "ModelingError",
    "ParseError",
    "ScheduleError",
    "ShapeError",
    "ValidationError",
    "fit_cdf",
    "generate_market",
    "load_panels",
    "ols",
    "run_backtest",
    "solve_portfolio",
    "theil_sen",
    "tracking_error",
]
