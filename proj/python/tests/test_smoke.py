import csv
import itertools

import numpy as np
import pytest

import itrack


def brute_theil_sen(x, y):
    slopes = [
        (y[j] - y[i]) / (x[j] - x[i])
        for i, j in itertools.combinations(range(len(x)), 2)
        if x[i] != x[j]
    ]
    beta = float(np.median(slopes))
    alpha = float(np.median([y[k] - beta * x[k] for k in range(len(x))]))
    return alpha, beta


def test_theil_sen_matches_brute_force():
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = rng.normal(size=7)
        y = 0.1 + 0.9 * x + rng.normal(scale=0.3, size=7)
        alpha, beta = itrack.theil_sen(x, y)
        ref_alpha, ref_beta = brute_theil_sen(x, y)
        assert beta == ref_beta
        assert alpha == pytest.approx(ref_alpha, abs=1e-12)


def test_theil_sen_rejects_constant_x():
    with pytest.raises(itrack.DegenerateError):
        itrack.theil_sen([1.0, 1.0, 1.0], [0.0, 1.0, 2.0])


def test_cdf_knot_rule_and_roundtrip():
    values = np.array([3.0, 1.0, 2.0, 2.0, 5.0])
    f = itrack.fit_cdf(values)
    assert f.knots == [1.0, 2.0, 3.0, 5.0]
    assert f.ordinates == pytest.approx([0.2, 0.4, 0.6, 0.8])
    for x in np.linspace(1.0, 5.0, 41):
        assert f.inverse(f(x)) == pytest.approx(x, abs=1e-12)
    assert f(-10.0) == f(1.0)


def test_synthetic_index_is_weighted_sum():
    m = itrack.generate_market(n_instruments=8, n_days=60, seed=2)
    prices, weights = m["prices"], m["weights"]
    idx = m["ids"].index(m["index_id"])
    r = prices[:, 1:] / prices[:, :-1] - 1.0
    members = [k for k in range(len(m["ids"])) if k != idx]
    implied = (weights[members, :-1] * r[members]).sum(axis=0)
    np.testing.assert_allclose(r[idx], implied, atol=1e-12, rtol=0)


def enumerate_portfolio(prior, alpha, beta, n_star):
    from scipy.optimize import linprog

    n = len(prior)
    best = np.inf
    a_target = float(prior @ alpha)
    b_target = float(prior @ beta)
    for support in itertools.combinations(range(n), n_star):
        # variables w (n), z (n), Z
        c = np.r_[np.zeros(n), np.full(n, 1.0 / n), 1.0]
        a_ub, b_ub = [], []
        for i in range(n):
            row = np.zeros(2 * n + 1)
            row[i], row[n + i] = 1.0, -1.0
            a_ub.append(row), b_ub.append(prior[i])
            row = np.zeros(2 * n + 1)
            row[i], row[n + i] = -1.0, -1.0
            a_ub.append(row), b_ub.append(-prior[i])
            row = np.zeros(2 * n + 1)
            row[n + i], row[2 * n] = 1.0, -1.0
            a_ub.append(row), b_ub.append(0.0)
        a_eq = [np.r_[np.ones(n), np.zeros(n + 1)], np.r_[beta, np.zeros(n + 1)], np.r_[alpha, np.zeros(n + 1)]]
        bounds = [(0, None) if i in support else (0, 0) for i in range(n)] + [(0, None)] * (n + 1)
        res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=[1.0, b_target, a_target], bounds=bounds)
        if res.status == 0:
            best = min(best, res.fun)
    return best


def test_solve_portfolio_matches_enumeration():
    ids = ["A", "B", "C", "D", "E", "F", "G"]
    rng = np.random.default_rng(11)
    prior = rng.uniform(0.05, 1.0, size=7)
    prior /= prior.sum()
    beta = rng.uniform(0.5, 1.5, size=7)
    alpha = rng.normal(scale=0.01, size=7)
    out = itrack.solve_portfolio(ids, prior, alpha, beta, n_star=3)
    assert out["status"] == "optimal"
    assert out["support"] <= 3
    w = np.array(out["weights"])
    assert w.sum() == pytest.approx(1.0, abs=1e-9)
    assert w @ beta == pytest.approx(prior @ beta, abs=1e-8)
    assert out["objective"] == pytest.approx(enumerate_portfolio(prior, alpha, beta, 3), abs=1e-8)

    full = itrack.solve_portfolio(ids, prior, alpha, beta, n_star=7)
    np.testing.assert_allclose(full["weights"], prior, atol=1e-12)


def test_errors_are_typed():
    with pytest.raises(itrack.ConfigError):
        itrack.generate_market(n_instruments=4, n_days=10, weighting="float")
    with pytest.raises(itrack.Error):
        itrack.load_panels("/nonexistent/prices.csv", "/nonexistent/weights.csv")
    with pytest.raises(itrack.ConfigError):
        itrack.run_backtest({"schedule": {"T_A": "soon"}})


def write_panels(m, directory):
    prices_path = directory / "prices.csv"
    weights_path = directory / "weights.csv"
    idx = m["ids"].index(m["index_id"])
    with open(prices_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "instrument", "close"])
        for t, date in enumerate(m["dates"]):
            for s, name in enumerate(m["ids"]):
                w.writerow([date, name, repr(float(m["prices"][s, t]))])
    with open(weights_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["date", "instrument", "weight"])
        for t, date in enumerate(m["dates"]):
            for s, name in enumerate(m["ids"]):
                if s != idx:
                    w.writerow([date, name, repr(float(m["weights"][s, t]))])
    return prices_path, weights_path


def test_small_backtest_runs(tmp_path):
    m = itrack.generate_market(n_instruments=10, n_days=300, seed=6)
    prices, weights = write_panels(m, tmp_path)
    loaded = itrack.load_panels(str(prices), str(weights))
    np.testing.assert_array_equal(loaded["prices"][loaded["ids"].index("S003")], m["prices"][3])
    config = {
        "paths": {"prices": str(prices), "weights": str(weights), "output_dir": str(tmp_path)},
        "schedule": {"T_A": 5, "T_C": 1, "T_D": 40, "T_E": 160, "t0": 200, "n_episodes": 2},
        "n_star": [4],
        "historical": {"windows": [20]},
        "features": {"tau_offsets": [1, 3], "window_lengths": [5, 10]},
        "network": {"extractor_width": 8, "extractor_layers": 1, "head_width": 4},
        "train": {"max_epochs": 2, "batch_size": 64, "record_stride": 3},
    }
    out = itrack.run_backtest(config)
    assert out["episodes"] == 2
    assert set(out["prediction_error"]) == {"mlp", "hist_20"}
    assert out["zero_lag_te"] <= 1e-20
    assert 4 in out["tracking_error"]
