"""Smoke tests for the python bindings."""

import math

import pytest

import fbsde


def quarterly_grid():
    return fbsde.TimeGrid(1.0, 100, [25, 50, 75, 100])


def test_black_scholes_reference_value():
    price = fbsde.black_scholes_call(
        spot=100, strike=100, rate=0.01, dividend=0.03, vol=0.2, maturity=1.0
    )
    assert abs(price - 6.8669) < 1e-4


def test_simulate_paths_shape_and_determinism():
    market = fbsde.reference_market(2)
    grid = fbsde.TimeGrid(1.0, 20, [20])
    paths = fbsde.simulate_paths(market, grid, num_paths=50, seed=7)
    assert paths.shape == (50, 21, 2)
    assert (paths[:, 0, 0] == 100.0).all()
    again = fbsde.simulate_paths(market, grid, num_paths=50, seed=7)
    assert (paths == again).all()


def test_pde_matches_black_scholes():
    market = fbsde.reference_market(1)
    grid = fbsde.TimeGrid(1.0, 100, [100])
    contract = fbsde.reference_european(1)
    pde = fbsde.crank_nicolson_1d(market, grid, contract)
    bs = fbsde.black_scholes_call(100, 100, 0.01, 0.03, 0.2, 1.0)
    assert abs(pde / bs - 1.0) < 1e-3


def test_lsq_monte_carlo_bermudan():
    market = fbsde.reference_market(1)
    grid = quarterly_grid()
    contract = fbsde.reference_bermudan(1, grid)
    price, stderr = fbsde.lsq_monte_carlo(market, grid, contract, num_paths=200000, seed=3)
    assert abs(price - 6.9923) < 0.08
    assert 0 < stderr < 0.05


def test_backward_solver_tiny_run():
    market = fbsde.reference_market(1)
    grid = fbsde.TimeGrid(1.0, 10, [10])
    contract = fbsde.reference_european(1)
    protocol = fbsde.TrainingProtocol(
        iterations=30, validate_every=10, select_count=2, batch_size=128, seed=5
    )
    report = fbsde.lsq_backward_dnn_solve(market, grid, contract, protocol)
    assert math.isfinite(report["price"])
    assert len(report["loss_history"]) == 30
    assert len(report["validation_history"]) == 3
    again = fbsde.lsq_backward_dnn_solve(market, grid, contract, protocol)
    assert report["price"] == again["price"]


def test_forward_solver_rejects_early_exercise():
    market = fbsde.reference_market(1)
    grid = quarterly_grid()
    contract = fbsde.reference_bermudan(1, grid)
    protocol = fbsde.TrainingProtocol(
        iterations=10, validate_every=10, select_count=1, batch_size=64, seed=5
    )
    with pytest.raises(ValueError):
        fbsde.forward_dnn_solve(market, grid, contract, protocol)


def test_run_price_json_roundtrip():
    config = """
    {
      "market": {"rate": 0.01,
                 "assets": [{"spot": 100.0, "dividend": 0.03, "vol": 0.2}],
                 "correlation": 0.0},
      "grid": {"maturity": 1.0, "steps": 100},
      "contract": {"type": "european_basket_call", "strike": 100.0},
      "method": "black_scholes",
      "seed": 1
    }
    """
    record = fbsde.run_price_json(config)
    assert abs(record["price"] - 6.8669) < 1e-4
    assert record["method"] == "black_scholes"
    assert record["dims"] == 1
