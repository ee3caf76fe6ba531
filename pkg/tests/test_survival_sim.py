"""Simulation, CSV I/O and event-order contracts."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from hazard_dantzig import (
    ClippedGaussianCovariates,
    ConfigError,
    ConstantBaseline,
    CsvParseError,
    DegenerateDatasetError,
    RademacherCovariates,
    SimConfig,
    SurvivalDataset,
    UniformCovariates,
    WeibullBaseline,
    event_order,
    load_csv,
    simulate_dataset,
    write_csv,
)


def test_exponential_times_match_closed_form_cdf():
    # beta0 = 0, constant baseline c, no censoring: T ~ Exponential(c).
    # KS statistic must clear the 1% asymptotic critical value 1.628/sqrt(n).
    cfg = SimConfig(
        n=5000, p=2, s=1, beta0_values=(0.0,), tau=1e9,
        baseline=ConstantBaseline(1.3), censor_rate=0.0, seed=99,
    )
    ds = simulate_dataset(cfg)
    ks = stats.kstest(ds.times, "expon", args=(0, 1 / 1.3))
    assert ks.statistic < 1.628 / np.sqrt(5000)


def test_weibull_times_match_closed_form_cdf():
    cfg = SimConfig(
        n=5000, p=2, s=1, beta0_values=(0.0,), tau=1e9,
        baseline=WeibullBaseline(shape=1.7, scale=0.9), seed=98,
    )
    ds = simulate_dataset(cfg)
    ks = stats.kstest(ds.times, "weibull_min", args=(1.7, 0, 0.9))
    assert ks.statistic < 1.628 / np.sqrt(5000)


def test_no_censoring_mechanism_gives_all_events():
    cfg = SimConfig(n=300, p=3, s=1, beta0_values=(0.7,), tau=1e12, censor_rate=0.0, seed=4)
    ds = simulate_dataset(cfg)
    assert np.all(ds.status == 1)
    assert ds.event_fraction == 1.0


def test_same_seed_is_bitwise_identical():
    cfg = SimConfig(n=150, p=6, s=2, beta0_values=(1.0, -0.5), censor_rate=0.3, seed=17)
    a = simulate_dataset(cfg)
    b = simulate_dataset(cfg)
    assert a == b
    assert np.array_equal(a.times, b.times)


def test_censor_rate_calibration_hits_target():
    for target in (0.2, 0.45):
        cfg = SimConfig(
            n=4000, p=2, s=1, beta0_values=(0.5,), tau=3.0, censor_rate=target, seed=55
        )
        ds = simulate_dataset(cfg)
        assert abs((1 - ds.event_fraction) - target) < 0.05


def test_covariates_strictly_bounded_and_laws_sample():
    laws = [
        UniformCovariates(1.0),
        ClippedGaussianCovariates(sigma=0.7, clip=0.99),
    ]
    for law in laws:
        cfg = SimConfig(
            n=500, p=8, s=2, beta0_values=(0.5, -0.5), covariate_law=law, k1=1.0, seed=3
        )
        ds = simulate_dataset(cfg)
        assert np.max(np.abs(ds.covariates)) < cfg.k1
    cfg = SimConfig(
        n=200, p=4, s=1, beta0_values=(0.5,),
        covariate_law=RademacherCovariates(), k1=1.5, seed=3,
    )
    ds = simulate_dataset(cfg)
    assert set(np.unique(ds.covariates)) == {-1.0, 1.0}


def test_counting_process_paths_are_monotone():
    cfg = SimConfig(n=80, p=3, s=1, beta0_values=(0.8,), censor_rate=0.2, seed=9)
    ds = simulate_dataset(cfg)
    grid = np.sort(ds.times)
    for i in range(ds.n):
        y_path = (ds.times[i] >= grid).astype(int)   # at-risk indicator
        n_path = ((ds.times[i] <= grid) & (ds.status[i] == 1)).astype(int)
        assert np.all(np.diff(y_path) <= 0)
        assert np.all(np.diff(n_path) >= 0)
        assert n_path.max() <= 1


def test_degenerate_dataset_raises():
    # all subjects administratively censored at a tiny tau is impossible by
    # construction (times <= tau always), so force zero events via censoring
    cfg = SimConfig(n=5, p=2, s=1, beta0_values=(0.0,), tau=1e-9,
                    baseline=ConstantBaseline(1e-12), seed=1)
    with pytest.raises(DegenerateDatasetError, match="degenerate dataset"):
        simulate_dataset(cfg)


def test_config_validation_messages():
    with pytest.raises(ConfigError, match="S=5.*p=3"):
        SimConfig(n=10, p=3, s=5, beta0_values=(1, 1, 1, 1, 1))
    with pytest.raises(ConfigError, match="censor_rate"):
        SimConfig(n=10, p=3, s=1, beta0_values=(1,), censor_rate=1.0)
    with pytest.raises(ConfigError, match="integrable"):
        ConstantBaseline(-2.0)
    with pytest.raises(ConfigError, match="integrable"):
        WeibullBaseline(shape=-1.0, scale=1.0)
    with pytest.raises(ConfigError, match="sup\\|Z\\| < K1"):
        SimConfig(
            n=10, p=3, s=1, beta0_values=(1,),
            covariate_law=UniformCovariates(2.0), k1=1.0,
        )
    with pytest.raises(ConfigError, match="K1"):
        SimConfig(
            n=10, p=3, s=1, beta0_values=(1,),
            covariate_law=RademacherCovariates(), k1=1.0,
        )
    with pytest.raises(ConfigError, match="clip"):
        ClippedGaussianCovariates(sigma=1.0, clip=1.5).validate(1.0)


def test_simconfig_json_roundtrip():
    cfg = SimConfig(
        n=40, p=7, s=2, beta0_values=(0.3, -0.9),
        baseline=WeibullBaseline(1.4, 2.0), censor_rate=0.25,
        covariate_law=ClippedGaussianCovariates(0.5, 0.9), k1=1.0, tau=4.0, seed=12,
    )
    assert SimConfig.from_json(cfg.to_json()) == cfg


def test_event_order_sorting_and_ties():
    z = np.zeros((3, 2))
    ds = SurvivalDataset(times=np.array([3.0, 1.0, 2.0]), status=np.array([1, 1, 1]),
                         covariates=z, tau=3.0)
    ev = event_order(ds)
    assert ev.pairs() == [(1.0, 1), (2.0, 2), (3.0, 0)]
    assert not ev.has_ties

    ds0 = SurvivalDataset(times=np.array([3.0, 1.0]), status=np.array([0, 0]),
                          covariates=np.zeros((2, 2)), tau=3.0)
    assert len(event_order(ds0)) == 0

    ds_tie = SurvivalDataset(times=np.array([1.0, 1.0]), status=np.array([1, 1]),
                             covariates=np.zeros((2, 2)), tau=1.0)
    ev = event_order(ds_tie)
    assert ev.pairs() == [(1.0, 0), (1.0, 1)]
    assert ev.has_ties


def test_csv_roundtrip_preserves_dataset(tmp_path):
    cfg = SimConfig(n=60, p=4, s=2, beta0_values=(1.0, -1.0), censor_rate=0.3, seed=21)
    ds = simulate_dataset(cfg)
    path = tmp_path / "d.csv"
    write_csv(ds, path)
    loaded = load_csv(path, tau=ds.tau)
    assert loaded == ds


def test_csv_minimal_parse(tmp_path):
    path = tmp_path / "two.csv"
    path.write_text("time,status,z1,z2\n1.5,1,0.2,-0.3\n2.0,0,0.1,0.4\n")
    ds = load_csv(path)
    assert ds.n == 2 and ds.p == 2
    assert_allclose(ds.times, [1.5, 2.0])
    assert ds.tau == 2.0


@pytest.mark.parametrize(
    "body,match",
    [
        ("1.0,1,0.2\n2.0,2,0.1\n", "line 3.*status"),
        ("1.0,1,0.2\n-1.0,1,0.1\n", "line 3.*time"),
        ("1.0,1,0.2\nfoo,1,0.1\n", "line 3.*non-numeric"),
        ("1.0,1\n", "line 2.*columns"),
    ],
)
def test_csv_errors_name_line_numbers(tmp_path, body, match):
    path = tmp_path / "bad.csv"
    path.write_text("time,status,z1\n" + body)
    with pytest.raises(CsvParseError, match=match):
        load_csv(path)


def test_csv_bad_header(tmp_path):
    path = tmp_path / "hdr.csv"
    path.write_text("time,event,z1\n1.0,1,0.2\n")
    with pytest.raises(CsvParseError, match="header"):
        load_csv(path)
