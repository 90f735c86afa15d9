import numpy as np
import pytest
from scipy import special, stats as sps

from stickyflow import kernel_flow as K
from stickyflow import paths as P
from stickyflow import semigroup as S
from stickyflow import stats as ST


def test_mc_mean_examples():
    e = ST.mc_mean([0.0, 2.0])
    assert (e.mean, e.std_error, e.n) == (1.0, 1.0, 2)
    c = ST.mc_mean(np.full(10, 3.5))
    assert c.ci_low == c.ci_high == 3.5
    x = np.random.default_rng(0).standard_normal(100_000)
    assert ST.mc_mean(x).contains(0.0)
    e = ST.mc_mean(x)
    assert e.ci_low <= e.mean <= e.ci_high
    assert e.std_error == pytest.approx(x.std(ddof=1) / np.sqrt(x.size), rel=1e-12)
    with pytest.raises(ValueError):
        ST.mc_mean([1.0])
    with pytest.raises(ValueError):
        ST.mc_mean([1.0, np.nan])


def test_difference_pools():
    d = ST.difference(ST.McEstimate(1.0, 3.0, 10), ST.McEstimate(0.5, 4.0, 20))
    assert d.mean == 0.5 and d.std_error == 5.0


def test_kolmogorov_sf_matches_scipy():
    lam = np.concatenate([np.linspace(0.05, 3, 300), [0.0, 5.0]])
    assert np.max(np.abs(ST.kolmogorov_sf(lam) - special.kolmogorov(lam))) < 1e-13
    assert ST.kolmogorov_sf(0.0) == 1.0


def test_ks_two_sample_examples():
    a = np.arange(10.0)
    r = ST.ks_two_sample(a, a)
    assert r.statistic == 0 and r.p_value == 1 and r.passed
    r = ST.ks_two_sample(a, a + 100)
    assert r.statistic == 1 and not r.passed
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(300), rng.standard_normal(400) + 0.1
    ref = sps.ks_2samp(x, y, method="asymp")
    r = ST.ks_two_sample(x, y)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-15)
    assert r.p_value == pytest.approx(ref.pvalue, abs=1e-3)
    with pytest.raises(ValueError):
        ST.ks_two_sample([], [1.0])


def test_ks_report_validation():
    with pytest.raises(ValueError):
        ST.KsReport(1.2, 1, 1, 0.5)
    with pytest.raises(ValueError):
        ST.KsReport(0.2, 1, 1, -0.5)


def test_ks_one_sample_matches_scipy():
    x = np.random.default_rng(2).standard_normal(500)
    r = ST.ks_one_sample(x, sps.norm.cdf)
    ref = sps.kstest(x, "norm", method="asymp")
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-15)
    assert r.p_value == pytest.approx(ref.pvalue, abs=1e-12)


def test_ks_null_calibration():
    # two 10^4-size normal samples, 200 seeded repetitions
    rejects = 0
    for i in range(200):
        rng = P.rng_for((99, i), P.INCREMENTS)
        rejects += not ST.ks_two_sample(rng.standard_normal(10_000), rng.standard_normal(10_000)).passed
    n, a = 200, 0.01
    assert rejects <= n * a + 4 * np.sqrt(n * a * (1 - a))
    assert 200 - rejects >= 196  # at least 98 in 100


def test_ensemble_map_order_and_threads():
    f = lambda i: P.sample_brownian(P.TimeGrid.uniform(1.0, 50), (3, i)).values[-1]
    assert ST.ensemble_map(f, 20, 1) == ST.ensemble_map(f, 20, 4)


def test_joint_law_trivial():
    cfg = ST.SimConfig(n_steps=50, source_factor=2, seed=1)
    e = ST.joint_law_test(K.constant(1.0), ST.functional_one(), 1.0, 1.0, 50, cfg)
    assert abs(e.mean) < 1e-12 and e.std_error < 1e-12


def test_joint_law_constant_functional_estimates_semigroup():
    f = K.da_function(1, 0, 1.0)
    cfg = ST.SimConfig(n_steps=400, source_factor=4, seed=2)
    samples = ST.joint_law_battery([f], [ST.functional_one()], 1.0, 1.0, 3000, cfg)[0, 0]
    target = S.apply(1.0, 1.0, f, 0.0)
    assert ST.mc_mean(samples.sticky).contains(target)
    assert ST.mc_mean(samples.reference).contains(target)
    assert samples.estimate().contains(0.0)


def test_joint_law_rejects_late_coordinates():
    g = ST.DriverFunctional((2.0,), lambda w: w[..., 0])
    with pytest.raises(ValueError):
        ST.joint_law_test(K.constant(1.0), g, 1.0, 1.0, 10, ST.SimConfig(n_steps=10))
    with pytest.raises(ValueError):
        ST.SimConfig(n_steps=0)


def test_epsilon_local_time():
    g = P.TimeGrid.uniform(1.0, 100)
    zero = P.reflect(P.BrownianPath(g, np.zeros(101)))
    assert ST.epsilon_local_time(zero, 0.1) == pytest.approx(1.0 / 0.2)
    up = P.reflect(P.BrownianPath(g, np.concatenate([[0.0], np.full(100, 1.0)])))
    assert ST.epsilon_local_time(up, 0.1, t=1.0) == pytest.approx(0.01 / 0.2)
    assert ST.epsilon_local_time(P.reflect(P.BrownianPath(g, np.linspace(0, 5, 101))), 0.01) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        ST.epsilon_local_time(zero, 0.0)


def test_epsilon_local_time_agrees_with_running_minimum():
    g = P.TimeGrid.uniform(1.0, 4096)
    eps = 4 * np.sqrt(g.dt)
    est, lev = [], []
    for i in range(300):
        r = P.reflect(P.sample_brownian(g, (4, i)))
        est.append(ST.epsilon_local_time(r, eps))
        lev.append(r.L[-1])
    assert abs(np.mean(est) / np.mean(lev) - 1) <= 0.15


def test_reports(tmp_path):
    checks = [ST.Check("a", 1.0, 2.0, True), ST.Check("b", 3.0, 2.0, False, "why")]
    text = ST.summary_block("T", checks)
    assert "PASS  a" in text and "FAIL  b" in text and "1/2 checks passed" in text
    ST.write_checks_csv(tmp_path / "c.csv", checks)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "name,value,threshold,passed,detail"
    ST.write_estimate_csv(tmp_path / "e.csv", [("x", ST.mc_mean([0.0, 2.0]))])
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 2
    ST.histogram_csv(tmp_path / "h.csv", [0.1, 0.2], [0.3], bins=4)
    rows = (tmp_path / "h.csv").read_text().splitlines()
    assert rows[0] == "bin_low,bin_high,count_sim,count_law" and len(rows) == 5
