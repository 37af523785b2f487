import numpy as np
import pytest

from ipdmatch.simulation import (
    LATENT_CONTINUOUS,
    POST_CATEGORIZATION,
    SimulationConfig,
    correlation_matrix,
    draw_latent_pair,
    generate_pair,
    run_study,
)

SMALL = dict(n_per_study=40, replications=2, seed=11)


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(rho=(0.3, 0.5))  # one rho per block
    with pytest.raises(ValueError):
        SimulationConfig(rho=(0.3, 0.5, -0.9))  # block not PD: 1+4*(-0.9)<0
    with pytest.raises(ValueError):
        SimulationConfig(mean_shift=(1.0, 0.0))
    with pytest.raises(ValueError):
        SimulationConfig(cut_probabilities={"X99": (0.5,)})
    with pytest.raises(ValueError):
        SimulationConfig(cut_probabilities={"X3": (0.6, 0.4)})
    with pytest.raises(ValueError):
        SimulationConfig(response_coefficients={"X77": 1.0})
    with pytest.raises(ValueError):
        SimulationConfig(response_scale="other")
    with pytest.raises(ValueError):
        SimulationConfig(replications=0)
    with pytest.raises(ValueError):
        run_study(SimulationConfig(replications=1))  # seed required


def test_correlation_matrix_blocks():
    corr = correlation_matrix(SimulationConfig(seed=1))
    assert corr.shape == (15, 15)
    assert np.array_equal(np.diag(corr), np.ones(15))
    assert corr[0, 4] == 0.3
    assert corr[5, 9] == 0.5
    assert corr[10, 14] == 0.7
    assert corr[0, 5] == 0.0
    assert corr[4, 10] == 0.0
    assert np.array_equal(corr, corr.T)


def test_null_configuration_is_iid_standard_normal():
    cfg = SimulationConfig(
        n_per_study=50_000,
        rho=(0.0, 0.0, 0.0),
        mean_shift=(0.0,) * 15,
        seed=5,
        replications=1,
    )
    xa, xb, _ = draw_latent_pair(cfg, 0)
    for x in (xa, xb):
        assert np.abs(x.mean(axis=0)).max() < 0.05
        assert np.abs(x.std(axis=0) - 1.0).max() < 0.05
    # independence across a block boundary and inside blocks
    c = np.corrcoef(xa[:, 0], xa[:, 1])[0, 1]
    assert abs(c) < 0.05


def test_shifted_means_of_study_b():
    cfg = SimulationConfig(n_per_study=100_000, seed=9, replications=1)
    xa, xb, _ = draw_latent_pair(cfg, 0)
    assert abs(xb[:, 0].mean() - 1.0) < 0.02  # X1
    assert abs(xb[:, 7].mean() - 1.0) < 0.02  # X8
    assert abs(xb[:, 14].mean() - 1.0) < 0.02  # X15
    assert abs(xb[:, 1].mean()) < 0.02
    assert abs(xa.mean(axis=0)).max() < 0.02


def test_sample_covariance_matches_target():
    cfg = SimulationConfig(n_per_study=100_000, seed=13, replications=1)
    xa, _, _ = draw_latent_pair(cfg, 0)
    target = correlation_matrix(cfg)
    sample = np.cov(xa, rowvar=False)
    assert np.abs(sample - target).max() < 0.02


def test_categorized_level_proportions():
    # X3 cuts at qnorm(0.12, 0.335, 0.68): study-A level proportions are
    # the successive CDF differences (0.12, 0.215, 0.345, 0.32).
    cfg = SimulationConfig(n_per_study=100_000, seed=17, replications=1)
    table = generate_pair(cfg, 0)
    x3 = table.columns["X3"][table.study == 0]
    props = np.bincount(x3, minlength=4) / len(x3)
    assert np.abs(props - [0.12, 0.215, 0.345, 0.32]).max() < 0.01


def test_generated_table_shape_and_schema():
    cfg = SimulationConfig(**SMALL)
    table = generate_pair(cfg, 0)
    assert table.n0 == table.n1 == 40
    kinds = {c.name: c.kind for c in table.schema}
    assert kinds["X1"] == "binary"
    assert kinds["X3"] == "categorical"
    assert kinds["X4"] == "continuous"
    assert kinds["X14"] == "categorical"
    levels = {c.name: c.levels for c in table.schema if c.kind == "categorical"}
    assert levels["X3"] == ("A", "B", "C", "D")
    assert levels["X8"] == ("A", "B", "C")
    assert levels["X14"] == ("A", "B", "C", "D", "E")
    from ipdmatch.data import encode

    assert encode(table).n_cols == 24
    assert table.response is not None


def test_response_modes_share_covariate_draws():
    base = SimulationConfig(**SMALL)
    alt = SimulationConfig(**{**SMALL, "response_scale": POST_CATEGORIZATION})
    t1 = generate_pair(base, 0)
    t2 = generate_pair(alt, 0)
    for name in t1.columns:
        assert np.array_equal(t1.columns[name], t2.columns[name])
    assert not np.allclose(t1.response, t2.response)
    assert base.response_scale == LATENT_CONTINUOUS


def test_category_scores_override():
    cfg = SimulationConfig(
        **{
            **SMALL,
            "response_scale": POST_CATEGORIZATION,
            "category_scores": {"X1": (0.0, 10.0)},
        }
    )
    t = generate_pair(cfg, 0)
    base = SimulationConfig(**{**SMALL, "response_scale": POST_CATEGORIZATION})
    t0 = generate_pair(base, 0)
    x1 = t.columns["X1"].astype(float)
    # difference between the two responses is exactly 0.3 * (10-1) * X1...
    # scores (0,10) vs (0,1): delta = 0.3 * 9 * X1
    assert np.allclose(t.response - t0.response, 0.3 * 9.0 * x1)


def test_replication_streams_are_independent_of_each_other():
    cfg = SimulationConfig(**SMALL)
    t0 = generate_pair(cfg, 0)
    t1 = generate_pair(cfg, 1)
    assert not np.array_equal(t0.columns["X4"], t1.columns["X4"])
    again = generate_pair(cfg, 0)
    assert np.array_equal(t0.columns["X4"], again.columns["X4"])
    assert np.array_equal(t0.response, again.response)


def as_json(summary) -> str:
    import json

    return json.dumps(summary.to_json_dict(), sort_keys=True)


def test_run_study_deterministic():
    cfg = SimulationConfig(**SMALL)
    s1 = run_study(cfg)
    s2 = run_study(cfg)
    assert as_json(s1) == as_json(s2)
    assert len(s1.records) == 2
    assert set(s1.ess) == {"unconstrained", "constrained", "propensity"}
    assert set(s1.ydiff) == {"observed", "unconstrained", "constrained", "propensity"}


def test_run_study_thread_invariance():
    cfg = SimulationConfig(n_per_study=30, replications=6, seed=23)
    serial = run_study(cfg, threads=1)
    parallel = run_study(cfg, threads=3)
    assert as_json(serial) == as_json(parallel)


def test_run_study_counts_no_solution():
    # Huge shifts make the constrained (and often unconstrained) match fail.
    cfg = SimulationConfig(
        n_per_study=12,
        mean_shift=(8.0,) * 15,
        replications=3,
        seed=3,
    )
    s = run_study(cfg)
    assert s.no_solution["constrained"] >= 1
    assert s.ydiff["observed"].count == 3
