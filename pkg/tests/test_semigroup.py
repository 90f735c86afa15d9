import mpmath as mp
import numpy as np
import pytest
from scipy import integrate

from stickyflow import semigroup as S

mp.mp.dps = 40


def g_oracle(theta, t, x):
    # the unscaled textbook form at high precision
    theta, t, x = mp.mpf(theta), mp.mpf(t), mp.mpf(x)
    return theta * mp.exp(2 * theta * x + 2 * theta**2 * t) * mp.erfc(x / mp.sqrt(2 * t) + theta * mp.sqrt(2 * t))


@pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 3.0])
@pytest.mark.parametrize("t", [1e-3, 0.2, 1.0, 7.0])
def test_g_against_high_precision(theta, t):
    xs = [0.0, 0.01, 0.3, 1.0, 2.5]
    got = S.g_fn(theta, t, np.array(xs))
    for x, v in zip(xs, got):
        ref = float(g_oracle(theta, t, x))
        assert abs(v - ref) <= 1e-13 * max(1.0, abs(ref))


def test_g_known_value():
    # theta = t = 1, x = 0: erfcx(sqrt 2)
    assert abs(S.g_fn(1.0, 1.0, 0.0) - 0.336204002446341) < 1e-14


def test_g_no_overflow():
    v = S.g_fn(5.0, 50.0, np.array([0.0, 10.0, 400.0]))
    assert np.all(np.isfinite(v)) and np.all(v >= 0)
    assert S.g_fn(1.0, 1.0, 60.0) < 1e-300


def test_g_derivatives_and_ode():
    theta, t = 0.8, 0.6
    x = np.linspace(0.05, 3, 25)
    h = 1e-5
    fd1 = (S.g_fn(theta, t, x + h) - S.g_fn(theta, t, x - h)) / (2 * h)
    assert np.max(np.abs(fd1 - S.g_prime(theta, t, x))) < 1e-8
    fd2 = (S.g_prime(theta, t, x + h) - S.g_prime(theta, t, x - h)) / (2 * h)
    assert np.max(np.abs(fd2 - S.g_second(theta, t, x))) < 1e-8
    assert np.max(np.abs(S.g_ode_residual(theta, t, x))) < 1e-12


def test_density_at_zero_start_is_twice_g():
    y = np.linspace(0.01, 4, 30)
    assert np.allclose(S.density(0.7, 0.5, 0.0, y), 2 * S.g_fn(0.7, 0.5, y), rtol=0, atol=1e-15)


@pytest.mark.parametrize("theta, t", [(0.1, 0.01), (1.0, 1.0), (4.0, 3.0)])
def test_density_positive(theta, t):
    x = np.linspace(0, 5, 21)[:, None]
    y = np.linspace(1e-4, 8, 41)[None, :]
    d = S.density(theta, t, x, y)
    assert np.all(d[np.isfinite(d)] >= 0)
    a = S.atom_mass(theta, t, x)
    assert np.all((a >= 0) & (a < 1))
    # strictly positive until it underflows
    near = S.atom_mass(theta, t, np.array([0.0, 2 * np.sqrt(t)]))
    assert np.all(near > 0)


def test_density_derivatives_fd():
    theta, t = 1.3, 0.4
    x, y = 0.7, np.linspace(0.05, 3, 20)
    h = 1e-5
    fd = (S.density(theta, t, x + h, y) - S.density(theta, t, x - h, y)) / (2 * h)
    assert np.max(np.abs(fd - S.density_dx(theta, t, x, y))) < 1e-7
    fd2 = (S.density_dx(theta, t, x + h, y) - S.density_dx(theta, t, x - h, y)) / (2 * h)
    assert np.max(np.abs(fd2 - S.density_dxx(theta, t, x, y))) < 1e-6


@pytest.mark.parametrize("theta", [0.2, 1.0, 5.0])
@pytest.mark.parametrize("t", [0.05, 1.0, 4.0])
def test_mass_is_one(theta, t):
    x = np.array([0.0, 0.3, 1.0, 3.0])
    k = S.kernel(theta, t)
    assert np.max(np.abs(k.total_mass(x) - 1)) < 1e-9
    # closed-form tail from 0 plus the atom
    assert np.max(np.abs(S.tail_mass(theta, t, x, 0.0) + S.atom_mass(theta, t, x) - 1)) < 1e-14


def test_tail_mass_matches_quadrature():
    theta, t, x, a = 0.9, 0.7, 0.4, 0.6
    ref, _ = integrate.quad(lambda y: S.density(theta, t, x, y), a, np.inf, epsabs=1e-13)
    assert abs(S.tail_mass(theta, t, x, a) - ref) < 1e-11
    h = 1e-5
    fd = (S.tail_mass(theta, t, x + h, a) - S.tail_mass(theta, t, x - h, a)) / (2 * h)
    assert abs(fd - S.tail_mass_dx(theta, t, x, a)) < 1e-8


def test_positive_part_cdf():
    theta, t = 0.5, 1.0
    for y in (0.1, 1.0, 3.0):
        ref, _ = integrate.quad(lambda u: 2 * S.g_fn(theta, t, u), 0, y, epsabs=1e-13)
        assert abs(S.positive_part_cdf(theta, t, y) - ref) < 1e-11
    assert abs(S.positive_part_cdf(theta, t, 50.0) - (1 - S.atom_mass(theta, t, 0.0))) < 1e-12


def test_apply_matches_scipy_quad():
    theta, t, x = 1.0, 0.5, 0.8
    f = lambda y: np.exp(-y) * np.cos(y)
    ref, _ = integrate.quad(lambda y: S.density(theta, t, x, y) * f(y), 0, np.inf, epsabs=1e-13, limit=200)
    ref += S.atom_mass(theta, t, x) * f(0.0)
    assert abs(S.apply(theta, t, f, x) - ref) < 1e-10


def test_apply_small_t_is_near_identity():
    f = lambda y: np.exp(-y)
    x = np.array([0.0, 0.5, 2.0])
    assert np.max(np.abs(S.apply(1.0, 1e-6, f, x) - f(x))) < 1e-3
    assert np.array_equal(S.apply(1.0, 0.0, f, x), f(x))


def test_apply_prime_second_fd():
    f = lambda y: np.exp(-y * y)
    k = S.kernel(0.6, 0.3)
    x, h = 0.9, 1e-4
    fd1 = (k.apply(f, x + h) - k.apply(f, x - h)) / (2 * h)
    fd2 = (k.apply(f, x + h) - 2 * k.apply(f, x) + k.apply(f, x - h)) / h**2
    assert abs(fd1 - k.apply_prime(f, x)) < 1e-7
    assert abs(fd2 - k.apply_second(f, x)) < 1e-4


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_boundary_condition(theta):
    defect, d2 = S.boundary_defect(theta, 0.5, lambda y: np.exp(-y) * (1 + y))
    assert abs(defect) <= 1e-8 * max(1.0, abs(d2))


def test_chapman_kolmogorov_and_ablation():
    f = lambda y: np.exp(-y)
    xs = np.array([0.0, 0.5, 1.5])
    assert S.chapman_check(1.0, 0.3, 0.4, f, xs) < 1e-9
    assert S.chapman_check(1.0, 0.3, 0.4, f, xs, drop_atom=True) > 1e-2


def test_reflected():
    f = lambda y: np.exp(-y)
    x = np.array([0.0, 1.0])
    ones = S.reflected_apply(None, 0.8, lambda y: np.ones_like(y), x)
    assert np.max(np.abs(ones - 1)) < 1e-10
    h = 1e-4
    fd = (S.reflected_apply(None, 0.8, f, 1 + h) - S.reflected_apply(None, 0.8, f, 1 - h)) / (2 * h)
    assert abs(fd - S.reflected_apply_prime(0.8, f, 1.0)) < 1e-7
    # Neumann condition at the wall
    assert abs(S.reflected_apply_prime(0.8, f, 0.0)) < 1e-12


def test_params_validation():
    with pytest.raises(ValueError):
        S.SemigroupParams(0.0, 1.0)
    with pytest.raises(ValueError):
        S.SemigroupParams(1.0, 0.0)
    with pytest.raises(ValueError):
        S.g_fn(1.0, -1.0, 0.0)


def test_tabulate_csv(tmp_path):
    S.tabulate_csv(tmp_path / "k.csv", 1.0, 1.0, [0.0, 1.0], [0.5, 1.0, 2.0])
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "x,y,density,atom" and len(lines) == 7
