"""Verification suites shared by the command line and the test-suite.

Each ``*_suite`` returns a list of :class:`~stickyflow.stats.Check` plus the
data behind it, and is deterministic given its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chaos as C
from . import kernel_flow as KF
from . import paths as P
from . import semigroup as SG
from . import sticky_sim as S
from . import stats as T
from .stats import Check


# -- test-function batteries ---------------------------------------------------

def da_battery(theta: float) -> list[KF.TestFunction]:
    """Five functions ``(a + b y + c y^2) e^{-y}`` in the generator domain."""
    return [KF.da_function(a, b, theta) for a, b in ((1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, -1.0), (2.0, 0.5))]


def boundary_violator(theta: float) -> KF.TestFunction:
    """Smooth and decaying but with ``f''(0) != 2 theta f'(0)``."""
    return KF.s_function(lambda y: np.exp(-y), lambda y: -np.exp(-y), lambda y: np.exp(-y), "exp(-y)")


def s_battery() -> list[KF.TestFunction]:
    """Five smooth rapidly decaying functions with no boundary condition imposed."""
    e = np.exp
    return [
        KF.s_function(lambda y: e(-y), lambda y: -e(-y), lambda y: e(-y), "exp(-y)"),
        KF.s_function(lambda y: e(-y * y), lambda y: -2 * y * e(-y * y), lambda y: (4 * y * y - 2) * e(-y * y),
                      "exp(-y^2)"),
        KF.s_function(lambda y: (1 + y) * e(-2 * y), lambda y: (-1 - 2 * y) * e(-2 * y),
                      lambda y: 4 * y * e(-2 * y), "(1+y)exp(-2y)"),
        KF.s_function(lambda y: np.cos(y) * e(-y), lambda y: -(np.sin(y) + np.cos(y)) * e(-y),
                      lambda y: 2 * np.sin(y) * e(-y), "cos(y)exp(-y)"),
        KF.s_function(lambda y: 1 / np.cosh(y), lambda y: -np.tanh(y) / np.cosh(y),
                      lambda y: (np.tanh(y) ** 2 - 1 / np.cosh(y) ** 2) / np.cosh(y), "sech(y)"),
    ]


def driver_functionals(t: float) -> list[T.DriverFunctional]:
    return [
        T.functional_one(),
        T.DriverFunctional((t,), lambda w: np.exp(-w[..., 0] ** 2), "exp(-W_t^2)"),
        T.DriverFunctional((t / 2,), lambda w: np.sin(w[..., 0]), "sin(W_t/2)"),
    ]


# -- semigroup ------------------------------------------------------------------

def semigroup_suite(thetas, ts, tol: float = 1e-10, ck_pairs=None, ck_theta=None) -> list[Check]:
    checks = []
    xs = np.array([0.0, 0.5, 2.0])
    xo = np.linspace(0.0, 10.0, 200)
    for th in thetas:
        for t in ts:
            k = SG.TransitionKernel(SG.SemigroupParams(th, t), tol)
            err = float(np.max(np.abs(k.total_mass(xs) - 1.0)))
            checks.append(Check(f"mass theta={th:g} t={t:g}", err, 1e-8, err <= 1e-8))
            res = float(np.max(np.abs(SG.g_ode_residual(th, t, xo))))
            checks.append(Check(f"g ODE theta={th:g} t={t:g}", res, 1e-8, res <= 1e-8))
            for f in s_battery():
                defect, d2 = SG.boundary_defect(th, t, f)
                bound = 1e-6 * (1.0 + abs(d2))
                checks.append(Check(f"boundary {f.name} theta={th:g} t={t:g}", abs(defect), bound,
                                    abs(defect) <= bound))
    pairs = ck_pairs if ck_pairs is not None else ((0.25, 0.25), (0.5, 1.0))
    for th in (ck_theta if ck_theta is not None else thetas):
        f = s_battery()[0]
        xg = np.linspace(0.0, 5.0, 26)
        for s, t in pairs:
            err = SG.chapman_check(th, s, t, f, xg)
            checks.append(Check(f"Chapman-Kolmogorov theta={th:g} s={s:g} t={t:g}", err, 1e-6, err <= 1e-6))
            bad = SG.chapman_check(th, s, t, f, xg, drop_atom=True)
            checks.append(Check(f"atom dropped (must fail) theta={th:g} s={s:g} t={t:g}", bad, 1e-3, bad > 1e-3))
    return checks


# -- flow ------------------------------------------------------------------------

def _random_tuple(grid, seed):
    rng = P.rng_for(seed, P.KERNEL)
    s, t, u = np.sort(rng.integers(0, grid.n_steps + 1, size=3))
    x = float(P.quantize(rng.uniform(0.0, 1.5)))
    return int(s), int(t), int(u), x


def flow_suite(theta: float, n_steps: int, n_phi: int, n_kernel: int, seed: int) -> list[Check]:
    grid = P.TimeGrid.uniform(1.0, n_steps)
    mismatches = 0
    for i in range(n_phi):
        W = P.sample_brownian(grid, (seed, i))
        s, t, u, x = _random_tuple(grid, (seed, i))
        if KF.phi(W, s, u, x) != KF.phi(W, t, u, KF.phi(W, s, t, x)):
            mismatches += 1
    checks = [Check(f"phi composition ({n_phi} tuples)", mismatches, 0, mismatches == 0)]
    worst = 0.0
    for i in range(n_kernel):
        W = P.sample_brownian(grid, (seed, 1, i))
        s, t, u, x = _random_tuple(grid, (seed, 1, i))
        f = da_battery(theta)[i % 5]
        lhs, rhs = KF.kernel_compose(W, s, t, u, x, theta, f)
        worst = max(worst, abs(lhs - rhs))
    checks.append(Check(f"kernel composition ({n_kernel} tuples)", worst, 1e-8, worst <= 1e-8))
    y = np.linspace(0.0, 5.0, 101)
    one = float(np.max(np.abs(KF.g_transform(KF.constant(1.0), theta, y) - 1.0)))
    checks.append(Check("G_1 = 1", one, 1e-10, one <= 1e-10))
    for f in da_battery(theta):
        e1, e2 = KF.g_intertwine_check(f, theta, y)
        checks.append(Check(f"G_(f'1) = (G_f)' {f.name}", e1, 1e-8, e1 <= 1e-8))
        checks.append(Check(f"G_(f'') = (G_f)'' {f.name}", e2, 1e-8, e2 <= 1e-8))
    _, bad = KF.g_intertwine_check(boundary_violator(theta), theta, y)
    checks.append(Check("boundary-violating f (must fail)", bad, 1e-2, bad >= 1e-2))
    return checks


# -- flow equation residual ------------------------------------------------------

@dataclass
class ResidualStudy:
    steps: list
    rms: dict = field(default_factory=dict)  # (f name, x) -> list of RMS per level

    def ratios(self):
        return {k: [a / b for a, b in zip(v, v[1:])] for k, v in self.rms.items()}


def sde_residual_study(theta, fs, xs, n0, levels, n_paths, seed, t=1.0) -> ResidualStudy:
    """RMS over paths of the left-point residual at ``n0 * 2^k`` steps, ``k < levels``.

    Level ``k + 1`` refines level ``k``'s path by Brownian bridges.
    """
    steps = [n0 * 2 ** k for k in range(levels)]
    sq = {(f.name, x): np.zeros(levels) for f in fs for x in xs}
    for i in range(n_paths):
        W = P.sample_brownian(P.TimeGrid.uniform(t, n0), (seed, i))
        for k in range(levels):
            if k:
                W = P.refine(W, 2, (seed, i, k))
            for f in fs:
                for x in xs:
                    sq[f.name, x][k] += KF.sde_residual(W, x, theta, f, W.grid.n_steps) ** 2
    study = ResidualStudy(steps)
    for key, v in sq.items():
        study.rms[key] = list(np.sqrt(v / n_paths))
    return study


def sde_suite(theta, n0, n_paths, seed, levels=4, fs=None, xs=(0.0, 0.5)):
    fs = fs if fs is not None else da_battery(theta)
    study = sde_residual_study(theta, fs, xs, n0, levels, n_paths, seed)
    checks = []
    for (name, x), rs in study.ratios().items():
        for k, r in enumerate(rs):
            ok = 1.2 <= r <= 2.0
            checks.append(Check(f"RMS ratio {name} x={x:g} {study.steps[k]}->{study.steps[k + 1]}", r, 1.2, ok,
                                "must lie in [1.2, 2.0]"))
    return checks, study


# -- occupation time ----------------------------------------------------------------

def occupation_ensemble(thetas, t, out_steps, source_factor, n_paths, seed, zero_detect_c=S.DEFAULT_ZERO_DETECT_C,
                        refined: bool = False, threads: int = 1) -> dict:
    """Occupation times at 0 over ``[0, t]`` of time-change paths, one per seed ``(seed, i)``.

    The reflected source path is shared between the ``thetas``. With
    ``refined`` the source path is bridge-refined by 2 and the output grid
    doubled.
    """
    src = P.TimeGrid.uniform(t, out_steps * source_factor)
    out = P.TimeGrid.uniform(t, out_steps * (2 if refined else 1))
    params = [S.StickyParams(th) for th in thetas]

    def one(i):
        W = P.sample_brownian(src, (seed, i))
        bseed = (seed, i)
        if refined:
            W = P.refine(W, 2, (seed, i))
            bseed = (seed, i, 1)
        R = P.reflect(W, bridge_seed=bseed)
        return [S.occupation_time(S.simulate_time_change(R, p, out, zero_detect_c), t).value for p in params]

    rows = np.array(T.ensemble_map(one, n_paths, threads))
    return {th: rows[:, k] for k, th in enumerate(thetas)}


def occupation_suite(thetas, t, out_steps, source_factor, n_paths, seed, zero_detect_c=S.DEFAULT_ZERO_DETECT_C,
                     threads: int = 1, refine: bool = True):
    checks, data = [], {}
    levels = [False, True] if refine else [False]
    for refined in levels:
        sims = occupation_ensemble(thetas, t, out_steps, source_factor, n_paths, seed, zero_detect_c, refined, threads)
        for th in thetas:
            law = S.occupation_law_samples(S.StickyParams(th), t, n_paths, (seed, 99))
            ks = T.ks_two_sample(sims[th], law)
            tag = "refined" if refined else "base"
            checks.append(Check(f"occupation KS theta={th:g} {tag}", ks.p_value, ks.alpha, ks.passed,
                                f"D={ks.statistic:.5f}"))
            data[th, tag] = (sims[th], law)
    return checks, data


# -- joint law and marginal law -------------------------------------------------------

def joint_law_suite(theta, t, n_steps, source_factor, n_paths, seed, theta_reference=None, threads=1,
                 zero_detect_c=S.DEFAULT_ZERO_DETECT_C, fs=None):
    fs = fs if fs is not None else da_battery(theta)[:2]
    gs = driver_functionals(t)
    cfg = T.SimConfig(n_steps, source_factor, seed, True, zero_detect_c, theta_reference, threads)
    res = T.joint_law_battery(fs, gs, theta, t, n_paths, cfg)
    checks, rows = [], []
    for (i, j), samples in sorted(res.items()):
        e = samples.estimate()
        name = f"{fs[i].name} x {gs[j].name}"
        rows.append((name, e))
        checks.append(Check(f"joint law {name}", abs(e.mean), 4.0 * e.std_error, e.contains(0.0),
                            f"delta={e.mean:.3g} se={e.std_error:.3g}"))
    return checks, rows


def reflected_terminal(theta_unused, t, n, seed):
    """Exact samples of ``W+_t = W_t - min_{s<=t} W_s`` (one bridge minimum per path)."""
    rng = P.rng_for(seed, P.INCREMENTS)
    Wt = rng.standard_normal(n) * np.sqrt(t)
    u = P.rng_for(seed, P.BRIDGE_MIN).random(n)
    low = 0.5 * (Wt - np.sqrt(Wt * Wt - 2.0 * t * np.log1p(-u)))
    return Wt - np.minimum(low, 0.0)


def marginal_suite(theta, t, n, seed):
    """``(W+_t - T)^+`` with ``T ~ Exp(2 theta)``: atom at 0 and law of the positive part."""
    wp = reflected_terminal(theta, t, n, seed)
    T_ = P.rng_for(seed, P.EXPONENTIAL).exponential(1.0 / (2.0 * theta), n)
    y = np.maximum(wp - T_, 0.0)
    atom = SG.atom_mass(theta, t, 0.0)
    freq = float(np.mean(y == 0.0))
    sigma = np.sqrt(atom * (1.0 - atom) / n)
    checks = [Check("atom frequency", abs(freq - atom), 4.0 * sigma, abs(freq - atom) <= 4.0 * sigma,
                    f"freq={freq:.5f} atom={atom:.5f}")]
    pos = y[y > 0.0]
    ks = T.ks_one_sample(pos, lambda v: SG.positive_part_cdf(theta, t, v) / (1.0 - atom))
    checks.append(Check("positive part KS", ks.p_value, ks.alpha, ks.passed, f"D={ks.statistic:.5f}"))
    return checks


# -- chaos ----------------------------------------------------------------------------------

def chaos_suite(theta, t, n_steps, m, n_paths, seed, f=None, n_max=3):
    f = f if f is not None else da_battery(theta)[0]
    grid = C.SpaceGrid.chebyshev(max(20.0, 12.0 * np.sqrt(t)), m)
    props = C.build_propagators(theta, t, n_steps, grid)
    plus = C.build_propagators(theta, t, n_steps, grid, kind="reflected")
    tg = P.TimeGrid.uniform(t, n_steps)
    paths = [P.sample_brownian(tg, (seed, i)) for i in range(n_paths)]
    res = C.iterated_ito_sum(paths, props, f, t, n_max)
    res_plus = C.iterated_ito_sum(paths, plus, f, t, n_max)
    checks = []
    sq = [(res.reference - res.partial(n)) ** 2 for n in range(n_max + 1)]
    for n in range(n_max):
        d = T.mc_mean(sq[n] - sq[n + 1])
        if n == 0:
            checks.append(Check("MSE strictly decreases 0->1", d.mean, 4.0 * d.std_error, d.ci_low > 0.0,
                                f"mse0={np.mean(sq[0]):.5g} mse1={np.mean(sq[1]):.5g}"))
        else:
            checks.append(Check(f"MSE nonincreasing {n}->{n + 1}", d.mean, -4.0 * d.std_error, d.ci_high >= 0.0,
                                f"mse{n}={np.mean(sq[n]):.5g} mse{n + 1}={np.mean(sq[n + 1]):.5g}"))
    for n in range(1, n_max + 1):
        e = T.mc_mean(res.partial(n))
        checks.append(Check(f"mean of truncation n={n} vs P_t f(0)", abs(e.mean - res.J0), 4.0 * e.std_error,
                            e.contains(res.J0)))
    ref = T.mc_mean(res.reference)
    checks.append(Check("mean of G_f(W+_t) vs P_t f(0)", abs(ref.mean - res.J0), 4.0 * ref.std_error,
                        ref.contains(res.J0)))
    d0 = abs(res.J0 - res_plus.J0)
    checks.append(Check("|P_t f(0) - P+_t G_f(0)|", d0, 1e-6, d0 <= 1e-6))
    if n_max >= 1:
        d1 = float(np.max(np.abs(res.J[0] - res_plus.J[0])))
        checks.append(Check("max |J1 - J1+|", d1, 1e-4, d1 <= 1e-4))
    return checks, res
