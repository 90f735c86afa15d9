"""``stickyflow`` command line: one subcommand per verification suite.

Settings resolve in three layers: subcommand defaults, then a ``--config``
file of ``key = value`` lines (``#`` starts a comment), then flags. Every
subcommand writes ``checks.csv`` and ``summary.txt`` to ``--out`` plus the
CSV files listed in its help, and exits 0 when all checks pass, 1 when a
check fails and 2 on a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
from dataclasses import dataclass, fields

import numpy as np

from . import chaos as C
from . import semigroup as SG
from . import stats as T
from . import suites as U

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    theta: float = 1.0
    t_horizon: float = 1.0
    n_time_steps: int = 1000
    n_paths: int = 1000
    seed: int = 0
    zero_detect_c: float = 1e-2
    quad_tol: float = 1e-10
    out_dir: str = "stickyflow_out"
    threads: int = 1
    source_factor: int = 4
    space_nodes: int = 200
    theta_reference: float | None = None

    def validate(self, command: str) -> "ExperimentConfig":
        pos = {"theta": self.theta, "t_horizon": self.t_horizon, "zero_detect_c": self.zero_detect_c,
               "quad_tol": self.quad_tol}
        for k, v in pos.items():
            if not v > 0:
                raise ConfigError(f"{k} must be positive, got {v}")
        if self.theta_reference is not None and not self.theta_reference > 0:
            raise ConfigError(f"theta_reference must be positive, got {self.theta_reference}")
        if self.n_time_steps < 1:
            raise ConfigError(f"n_time_steps must be >= 1, got {self.n_time_steps}")
        if self.n_paths < 2:
            raise ConfigError(f"n_paths must be >= 2 (standard errors need two samples), got {self.n_paths}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.threads < 1 or self.source_factor < 1:
            raise ConfigError("threads and source_factor must be >= 1")
        if self.space_nodes < 16:
            raise ConfigError(f"space_nodes must be >= 16, got {self.space_nodes}")
        if command == "chaos-check" and self.n_time_steps > C.MAX_TIME_STEPS:
            raise ConfigError(f"chaos-check allows at most {C.MAX_TIME_STEPS} time steps "
                              f"(cost guard), got {self.n_time_steps}")
        if command == "warren-check":
            # functionals read the driver at t/2 and t
            if self.n_time_steps % 2:
                raise ConfigError("warren-check needs an even n_time_steps (the driver is read at t/2)")
        return self


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}

DEFAULTS = {
    "warren-check": dict(n_time_steps=2000, n_paths=100_000, source_factor=4),
    "occupation-check": dict(n_time_steps=4096, n_paths=10_000, source_factor=16),
    "semigroup-check": dict(),
    "flow-check": dict(n_time_steps=1000, n_paths=1000),
    "sde-residual": dict(n_time_steps=256, n_paths=1000),
    "chaos-check": dict(n_time_steps=200, n_paths=1000, space_nodes=200),
}

HELP = {
    "warren-check": """Joint law of (X_t, W) against G_f(W+_t) for 2 functions f x 3 driver
functionals, plus the marginal law of (W+_t - T)^+.
n_time_steps: output grid; source grid is n_time_steps * source_factor.
theta_reference: rate used on the reference side (negative control).
CSV: joint_law.csv (name, mean, std_error, n, ci_low, ci_high).""",
    "occupation-check": """Two-sample KS between time-change occupation times at 0 and the
closed-form law, at the base grid and after one refinement.
n_time_steps: output grid; source grid is n_time_steps * source_factor.
CSV: occupation_hist.csv (bin_low, bin_high, count_sim, count_law).""",
    "semigroup-check": """Mass conservation, g ODE residual, boundary identity, Chapman-Kolmogorov
(and its atom-dropped negative control) at (theta, t_horizon).
CSV: semigroup_table.csv (x, y, density, atom).""",
    "flow-check": """phi composition on n_paths random tuples, kernel composition on
min(n_paths, 100) tuples, G-transform identities and their negative control.
n_time_steps: grid of the driving paths on [0, 1].""",
    "sde-residual": """RMS residual of the flow equation at n, 2n, 4n, 8n steps (n =
n_time_steps); successive ratios must lie in [1.2, 2.0].
CSV: sde_residual.csv (f, x, n_steps, rms).""",
    "chaos-check": """Truncated chaos expansion (orders 0..3) on n_paths paths of n_time_steps
steps with space_nodes Chebyshev nodes; L2 error, means and the reflected form.
CSV: chaos_terms.csv (path_id, order, value, reference).""",
}


def _coerce(key, text):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(FIELD_TYPES)}")
    typ = FIELD_TYPES[key]
    text = text.strip()
    try:
        if "None" in typ and text.lower() in ("", "none"):
            return None
        if typ.startswith("int"):
            return int(text)
        if typ.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} ({typ})") from None


def read_config_file(fname) -> dict:
    out = {}
    try:
        with open(fname) as fh:
            lines = fh.readlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {fname}: {e.strerror}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{fname}:{n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = _coerce(k.strip(), v)
    return out


def format_config(cfg: ExperimentConfig) -> str:
    return "\n".join(f"{f.name} = {getattr(cfg, f.name)}" for f in fields(cfg)) + "\n"


FLAG_KEYS = {"theta": "theta", "t": "t_horizon", "steps": "n_time_steps", "paths": "n_paths", "seed": "seed",
             "out": "out_dir", "threads": "threads"}


def resolve_config(command: str, args) -> ExperimentConfig:
    values = dict(DEFAULTS[command])
    if args.config:
        values.update(read_config_file(args.config))
    for flag, key in FLAG_KEYS.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = v
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = _coerce(k.strip(), v)
    return ExperimentConfig(**values).validate(command)


# -- subcommands ---------------------------------------------------------------

def cmd_semigroup_check(cfg: ExperimentConfig):
    t = cfg.t_horizon
    checks = U.semigroup_suite([cfg.theta], [t], cfg.quad_tol, ck_pairs=((t / 4, t / 4), (t / 2, t)))
    SG.tabulate_csv(os.path.join(cfg.out_dir, "semigroup_table.csv"), cfg.theta, t,
                    np.linspace(0.0, 3.0, 7), np.linspace(0.05, 5.0, 100))
    return checks


def cmd_flow_check(cfg: ExperimentConfig):
    return U.flow_suite(cfg.theta, cfg.n_time_steps, cfg.n_paths, min(cfg.n_paths, 100), cfg.seed)


def cmd_sde_residual(cfg: ExperimentConfig):
    checks, study = U.sde_suite(cfg.theta, cfg.n_time_steps, cfg.n_paths, cfg.seed)
    with open(os.path.join(cfg.out_dir, "sde_residual.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["f", "x", "n_steps", "rms"])
        for (name, x), rms in study.rms.items():
            for n, r in zip(study.steps, rms):
                w.writerow([name, repr(float(x)), n, repr(float(r))])
    return checks


def cmd_occupation_check(cfg: ExperimentConfig):
    checks, data = U.occupation_suite([cfg.theta], cfg.t_horizon, cfg.n_time_steps, cfg.source_factor,
                                      cfg.n_paths, cfg.seed, cfg.zero_detect_c, cfg.threads)
    sim, law = data[cfg.theta, "base"]
    T.histogram_csv(os.path.join(cfg.out_dir, "occupation_hist.csv"), sim, law)
    return checks


def cmd_warren_check(cfg: ExperimentConfig):
    checks, rows = U.joint_law_suite(cfg.theta, cfg.t_horizon, cfg.n_time_steps, cfg.source_factor, cfg.n_paths,
                                  cfg.seed, cfg.theta_reference, cfg.threads, cfg.zero_detect_c)
    T.write_estimate_csv(os.path.join(cfg.out_dir, "joint_law.csv"), rows)
    checks += U.marginal_suite(cfg.theta, cfg.t_horizon, cfg.n_paths, (cfg.seed, 7))
    return checks


def cmd_chaos_check(cfg: ExperimentConfig):
    checks, res = U.chaos_suite(cfg.theta, cfg.t_horizon, cfg.n_time_steps, cfg.space_nodes, cfg.n_paths, cfg.seed)
    C.write_csv(os.path.join(cfg.out_dir, "chaos_terms.csv"), res)
    return checks


COMMANDS = {
    "warren-check": cmd_warren_check,
    "occupation-check": cmd_occupation_check,
    "semigroup-check": cmd_semigroup_check,
    "flow-check": cmd_flow_check,
    "sde-residual": cmd_sde_residual,
    "chaos-check": cmd_chaos_check,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stickyflow", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=HELP[name].splitlines()[0], description=HELP[name],
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--t", type=float, help="time horizon")
        sp.add_argument("--steps", type=int, help="n_time_steps")
        sp.add_argument("--paths", type=int, help="n_paths")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--config", help="file of 'key = value' lines")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (e.g. theta_reference=2)")
        sp.add_argument("--print-config", action="store_true", help="print the resolved config and exit")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
    except (ConfigError, TypeError) as e:
        print(f"stickyflow {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.print_config:
        sys.stdout.write(format_config(cfg))
        return EXIT_PASS
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
    except OSError as e:
        print(f"stickyflow {args.command}: cannot create {cfg.out_dir}: {e.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        checks = COMMANDS[args.command](cfg)
    except ValueError as e:
        print(f"stickyflow {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    summary = T.summary_block(args.command, checks)
    with open(os.path.join(cfg.out_dir, "summary.txt"), "w") as fh:
        fh.write(format_config(cfg) + "\n" + summary + "\n")
    T.write_checks_csv(os.path.join(cfg.out_dir, "checks.csv"), checks)
    print(summary)
    print(f"({time.perf_counter() - start:.1f} s, outputs in {cfg.out_dir})")
    return EXIT_PASS if all(c.passed for c in checks) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
