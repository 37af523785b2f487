import math

import numpy as np
import pytest
from scipy.stats import norm

from ipdmatch.data import Covariate, CovariateSchema, CovariateTable
from ipdmatch.errors import NoResponseColumnError, ZeroWeightSumError
from ipdmatch.inference import difference_summary, estimate_response


def make_table(y0, y1) -> CovariateTable:
    schema = CovariateSchema((Covariate("x", "continuous"),))
    y = np.array(list(y0) + list(y1), dtype=float)
    return CovariateTable(
        schema=schema,
        study=np.array([0] * len(y0) + [1] * len(y1), dtype=np.int8),
        columns={"x": np.zeros(len(y)) + np.arange(len(y))},
        response=y,
    )


def test_uniform_weights_reduce_to_plain_estimates():
    y0, y1 = [1.0, 2.0, 3.0], [2.0, 4.0]
    t = make_table(y0, y1)
    est = estimate_response(t, np.ones(3) / 3, np.ones(2) / 2)
    assert est.mu0 == pytest.approx(2.0)
    assert est.mu1 == pytest.approx(3.0)
    s2_0 = np.var(y0)  # 1/n divisor
    s2_1 = np.var(y1)
    assert est.s2_0 == pytest.approx(s2_0)
    assert est.var_mu0 == pytest.approx(s2_0 / 3)
    assert est.var_mu1 == pytest.approx(s2_1 / 2)
    assert est.ess0 == pytest.approx(3.0)


def test_weighted_variance_formula_frozen_example():
    # weights (2,1,1) on y = (1,2,3): ESS = 16/6, s^2 = 2/3 (1/n divisor),
    # var(mu) = s^2 / ESS = (6/16)*(2/3) = 1/4; mu = 7/4.
    t = make_table([1.0, 2.0, 3.0], [0.0, 0.0])
    est = estimate_response(t, np.array([2.0, 1.0, 1.0]), np.ones(2))
    assert est.mu0 == pytest.approx(7.0 / 4.0)
    assert est.s2_0 == pytest.approx(2.0 / 3.0)
    assert est.ess0 == pytest.approx(16.0 / 6.0)
    assert est.var_mu0 == pytest.approx(0.25)


def test_variance_never_below_uniform_floor():
    rng = np.random.default_rng(17)
    t = make_table(rng.normal(size=12), rng.normal(size=9))
    for _ in range(200):
        w0 = rng.uniform(0.0, 1.0, size=12)
        w1 = rng.uniform(0.0, 1.0, size=9)
        est = estimate_response(t, w0, w1)
        assert est.var_mu0 >= est.s2_0 / 12 - 1e-15
        assert est.var_mu1 >= est.s2_1 / 9 - 1e-15
    uniform = estimate_response(t, np.full(12, 0.37), np.full(9, 1.2))
    assert uniform.var_mu0 == pytest.approx(uniform.s2_0 / 12, abs=1e-15)


def test_estimates_invariant_under_weight_rescaling():
    rng = np.random.default_rng(23)
    t = make_table(rng.normal(size=8), rng.normal(size=6))
    w0 = rng.uniform(0.1, 1.0, size=8)
    w1 = rng.uniform(0.1, 1.0, size=6)
    a = estimate_response(t, w0, w1)
    b = estimate_response(t, 123.0 * w0, 0.003 * w1)
    assert a.mu0 == pytest.approx(b.mu0, abs=1e-12)
    assert a.mu1 == pytest.approx(b.mu1, abs=1e-12)
    assert a.var_mu0 == pytest.approx(b.var_mu0, abs=1e-15)
    assert a.var_mu1 == pytest.approx(b.var_mu1, abs=1e-15)
    assert a.difference == pytest.approx(b.difference, abs=1e-12)


def test_uniform_ci_equals_classical_two_sample_ci():
    rng = np.random.default_rng(29)
    y0 = rng.normal(size=15)
    y1 = rng.normal(loc=0.3, size=11)
    t = make_table(y0, y1)
    est = estimate_response(t, np.ones(15), np.ones(11), ci_level=0.9)
    diff = y1.mean() - y0.mean()
    se = math.sqrt(np.var(y0) / 15 + np.var(y1) / 11)
    z = norm.ppf(0.95)
    assert est.difference == pytest.approx(diff, abs=1e-12)
    assert est.se == pytest.approx(se, abs=1e-12)
    assert est.ci_low == pytest.approx(diff - z * se, abs=1e-12)
    assert est.ci_high == pytest.approx(diff + z * se, abs=1e-12)


def test_response_errors():
    t = make_table([1.0], [2.0])
    bare = CovariateTable(
        schema=t.schema, study=t.study, columns=t.columns, response=None
    )
    with pytest.raises(NoResponseColumnError):
        estimate_response(bare, [1.0], [1.0])
    with pytest.raises(ZeroWeightSumError):
        estimate_response(t, [0.0], [1.0])
    with pytest.raises(ValueError):
        estimate_response(t, [1.0, 1.0], [1.0])
    with pytest.raises(ValueError):
        estimate_response(t, [1.0], [1.0], ci_level=1.0)


def test_difference_summary_degenerate():
    s = difference_summary([0.7])
    assert s.count == 1
    assert s.minimum == s.q1 == s.median == s.mean == s.q3 == s.maximum == 0.7
    assert s.sd == 0.0
    assert s.na_count == 0


def test_difference_summary_two_values():
    s = difference_summary([-1.0, 1.0])
    assert s.mean == pytest.approx(0.0)
    assert s.sd == pytest.approx(math.sqrt(2.0))
    assert s.minimum == -1.0
    assert s.maximum == 1.0


def test_difference_summary_counts_na():
    s = difference_summary([0.5, None, 1.5, float("nan")])
    assert s.na_count == 2
    assert s.count == 2
    assert s.mean == pytest.approx(1.0)
    with pytest.raises(ValueError):
        difference_summary([])
    all_na = difference_summary([None, None])
    assert all_na.na_count == 2
    assert math.isnan(all_na.mean)


def test_json_round_trip():
    t = make_table([1.0, 2.0], [3.0, 4.0])
    est = estimate_response(t, np.ones(2), np.ones(2))
    blob = est.to_json_dict()
    assert blob["difference"] == pytest.approx(2.0)
    assert blob["ci_level"] == 0.95
    s = difference_summary([1.0, 2.0, None]).to_json_dict()
    assert s["na_count"] == 1
