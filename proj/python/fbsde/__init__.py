"""Derivative pricing via FBSDE deep-learning solvers and classical benchmarks."""

from ._core import (
    ConfigError,
    ContractSpec,
    MarketConfig,
    NumericalError,
    TimeGrid,
    TrainingProtocol,
    bermudan_basket_call,
    black_scholes_call,
    callable_yield_note,
    crank_nicolson_1d,
    efficiency_protocol,
    european_basket_call,
    forward_dnn_solve,
    full_protocol,
    lsq_backward_dnn_solve,
    lsq_monte_carlo,
    reference_bermudan,
    reference_cyn,
    reference_european,
    reference_market,
    run_price_json,
    simulate_paths,
)

__all__ = [
    "ConfigError",
    "ContractSpec",
    "MarketConfig",
    "NumericalError",
    "TimeGrid",
    "TrainingProtocol",
    "bermudan_basket_call",
    "black_scholes_call",
    "callable_yield_note",
    "crank_nicolson_1d",
    "efficiency_protocol",
    "european_basket_call",
    "forward_dnn_solve",
    "full_protocol",
    "lsq_backward_dnn_solve",
    "lsq_monte_carlo",
    "reference_bermudan",
    "reference_cyn",
    "reference_european",
    "reference_market",
    "run_price_json",
    "simulate_paths",
]
