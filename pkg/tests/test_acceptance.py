"""Acceptance criteria at full size.

Each test records one PASS/FAIL line, printed at the end of the pytest run.
Statistical checks use z = 4 intervals and alpha = 0.01 throughout.
"""

import filecmp
import os

import numpy as np
import pytest

from stickyflow import cli
from stickyflow import suites as U
from stickyflow.stats import Check

SEED = 0
THETAS = (0.5, 1.0, 2.0)
TIMES = (0.25, 1.0, 4.0)


def _finish(record_criterion, number, title, checks):
    assert checks, "no checks ran"
    ok = record_criterion(number, title, checks)
    bad = [f"{c.name}: {c.value:.4g} (threshold {c.threshold:.4g}) {c.detail}" for c in checks if not c.passed]
    assert ok, "\n".join(bad)


@pytest.fixture(scope="module")
def semigroup_checks():
    return U.semigroup_suite(THETAS, TIMES, ck_theta=THETAS)


def test_criterion_01_conservativity(semigroup_checks, record_criterion):
    checks = [c for c in semigroup_checks if c.name.startswith("mass")]
    assert len(checks) == 9
    _finish(record_criterion, 1, "mass = 1 within 1e-8", checks)


def test_criterion_02_g_ode(semigroup_checks, record_criterion):
    checks = [c for c in semigroup_checks if c.name.startswith("g ODE")]
    assert len(checks) == 9
    _finish(record_criterion, 2, "g ODE residual <= 1e-8 on 200 points of [0, 10]", checks)


def test_criterion_03_boundary_identity(semigroup_checks, record_criterion):
    checks = [c for c in semigroup_checks if c.name.startswith("boundary")]
    assert len(checks) == 5 * 9
    _finish(record_criterion, 3, "boundary identity for 5 functions", checks)


def test_criterion_04_chapman_kolmogorov(semigroup_checks, record_criterion):
    checks = [c for c in semigroup_checks if "Chapman" in c.name or "atom dropped" in c.name]
    assert len(checks) == 2 * 2 * len(THETAS)
    _finish(record_criterion, 4, "Chapman-Kolmogorov <= 1e-6, atom-dropped control > 1e-3", checks)


@pytest.fixture(scope="module")
def flow_checks():
    return U.flow_suite(1.0, 1000, 1000, 100, SEED)


def test_criterion_05_g_transform(flow_checks, record_criterion):
    checks = [c for c in flow_checks if "G_" in c.name or "boundary-violating" in c.name]
    assert len(checks) == 1 + 2 * 5 + 1
    _finish(record_criterion, 5, "G-transform identities and negative control", checks)


def test_criterion_06_flow_property(flow_checks, record_criterion):
    checks = [c for c in flow_checks if "composition" in c.name]
    assert len(checks) == 2
    _finish(record_criterion, 6, "phi exact on 1000 tuples, kernel <= 1e-8 on 100", checks)


def test_criterion_07_joint_law(record_criterion):
    checks, rows = U.joint_law_suite(1.0, 1.0, 2000, 4, 100_000, SEED)
    assert len(checks) == 6
    _finish(record_criterion, 7, "joint law |delta| <= 4 SE for 6 pairs", checks)


def test_criterion_08_marginal_law(record_criterion):
    checks = U.marginal_suite(1.0, 1.0, 100_000, (SEED, 7))
    _finish(record_criterion, 8, "atom frequency and positive-part KS", checks)


def test_criterion_09_occupation_law(record_criterion):
    # 4096 output steps on 2^16 source steps, then one bridge refinement of both
    checks, _ = U.occupation_suite((0.5, 1.0), 1.0, 4096, 16, 10_000, SEED)
    assert len(checks) == 4
    _finish(record_criterion, 9, "occupation-time KS at base and refined grids", checks)


def test_criterion_10_sde_residual(record_criterion):
    checks, study = U.sde_suite(1.0, 256, 1000, SEED, levels=4)
    assert len(study.steps) == 4
    _finish(record_criterion, 10, "RMS residual step-halving ratios in [1.2, 2.0]", checks)


def test_criterion_11_chaos(record_criterion):
    checks, res = U.chaos_suite(1.0, 1.0, 200, 200, 1000, SEED)
    assert np.array_equal(res.truncation, res.partial(3))
    _finish(record_criterion, 11, "chaos MSE, means and reflected form", checks)


SMALL = {
    "warren-check": ["--steps", "100", "--paths", "300"],
    "occupation-check": ["--steps", "256", "--paths", "200"],
    "semigroup-check": ["--t", "0.5"],
    "flow-check": ["--steps", "100", "--paths", "100"],
    "sde-residual": ["--steps", "16", "--paths", "30"],
    "chaos-check": ["--steps", "20", "--paths", "50", "--set", "space_nodes=60"],
}


def test_criterion_12_reproducibility(tmp_path, record_criterion):
    # same config (including out_dir, which summary.txt records) run twice
    checks = []
    for cmd, args in SMALL.items():
        out = tmp_path / cmd
        kept = []
        for rep in range(2):
            code = cli.main([cmd, *args, "--seed", "3", "--out", str(out)])
            assert code in (0, 1)
            kept.append(tmp_path / f"{cmd}-{rep}")
            os.rename(out, kept[-1])
        names = sorted(os.listdir(kept[0]))
        assert names == sorted(os.listdir(kept[1])) and "summary.txt" in names
        _, mismatch, errors = filecmp.cmpfiles(kept[0], kept[1], names, shallow=False)
        bad = mismatch + errors
        checks.append(Check(f"{cmd} ({len(names)} files)", len(bad), 0, not bad, " ".join(bad)))
    _finish(record_criterion, 12, "bitwise-identical outputs for every subcommand", checks)
