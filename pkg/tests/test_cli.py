import filecmp
import subprocess
import sys
import time

import pytest

from stickyflow import cli


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def test_print_config_layers(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\ntheta = 2.5\nn_paths = 77  # trailing\n")
    assert cli.main(["warren-check", "--config", str(cfg), "--paths", "88", "--set", "seed=5",
                     "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "theta = 2.5" in out and "n_paths = 88" in out and "seed = 5" in out
    assert "n_time_steps = 2000" in out


@pytest.mark.parametrize("argv, needle", [
    (["semigroup-check", "--theta", "-1"], "theta must be positive"),
    (["warren-check", "--paths", "1"], "n_paths"),
    (["warren-check", "--steps", "1001"], "even"),
    (["chaos-check", "--steps", "600"], "cost guard"),
    (["flow-check", "--set", "bogus=1"], "unknown config key"),
    (["flow-check", "--set", "theta=abc"], "bad value"),
    (["flow-check", "--set", "theta"], "KEY=VALUE"),
    (["flow-check", "--config", "/nonexistent/file"], "cannot read"),
])
def test_config_errors_exit_2(tmp_path, capsys, argv, needle):
    assert run(tmp_path, *argv) == 2
    assert needle in capsys.readouterr().err


def test_warren_smoke(tmp_path):
    start = time.perf_counter()
    code = run(tmp_path, "warren-check", "--paths", "100")
    assert time.perf_counter() - start < 5.0
    assert code in (0, 1)
    for name in ("summary.txt", "checks.csv", "joint_law.csv"):
        assert (tmp_path / name).exists()
    header = (tmp_path / "joint_law.csv").read_text().splitlines()[0]
    assert header == "name,mean,std_error,n,ci_low,ci_high"


def test_warren_negative_control_fails(tmp_path):
    code = run(tmp_path, "warren-check", "--steps", "200", "--paths", "20000",
               "--set", "theta_reference=2")
    assert code == 1
    assert "FAIL" in (tmp_path / "summary.txt").read_text()


def test_semigroup_check_passes(tmp_path):
    assert run(tmp_path, "semigroup-check") == 0
    assert (tmp_path / "semigroup_table.csv").read_text().startswith("x,y,density,atom")


def test_occupation_smoke(tmp_path):
    assert run(tmp_path, "occupation-check", "--steps", "512", "--paths", "300") in (0, 1)
    assert (tmp_path / "occupation_hist.csv").read_text().startswith("bin_low,bin_high,count_sim,count_law")


def test_sde_and_chaos_smoke(tmp_path):
    assert run(tmp_path / "s", "sde-residual", "--steps", "16", "--paths", "20") in (0, 1)
    assert (tmp_path / "s" / "sde_residual.csv").read_text().startswith("f,x,n_steps,rms")
    assert run(tmp_path / "c", "chaos-check", "--steps", "10", "--paths", "20",
               "--set", "space_nodes=40") in (0, 1)
    assert (tmp_path / "c" / "chaos_terms.csv").read_text().startswith("path_id,order,value,reference")


def test_flow_check_passes(tmp_path):
    assert run(tmp_path, "flow-check", "--steps", "200", "--paths", "200") == 0


def test_chaos_check_reproducible_across_processes(tmp_path):
    # the interpolation weights once came from an unseeded random node order
    cmd = [sys.executable, "-m", "stickyflow", "chaos-check", "--steps", "10", "--paths", "20",
           "--set", "space_nodes=40", "--out", str(tmp_path / "o")]
    files = ["chaos_terms.csv", "checks.csv", "summary.txt"]
    for rep in range(2):
        subprocess.run(cmd, check=False, capture_output=True)
        (tmp_path / "o").rename(tmp_path / f"r{rep}")
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "r0", tmp_path / "r1", files, shallow=False)
    assert mismatch == errors == []
