import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from dyadic.errors import DyadicError, HypothesisViolation
from dyadic.estimates import (
    ConstantTrajectory,
    blowup_functional,
    cube_bound,
    cube_integral,
    level_set_bounds,
    level_set_grid,
    level_set_measure,
    psi_metric,
)
from dyadic.galerkin import IntegratorConfig, integrate
from dyadic.model import ModelParams, compute_constants

P = ModelParams(2.0, 2.5)


def spectrum(N, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0, 1, N) * 0.6 ** np.arange(N)
    return a / np.linalg.norm(a)


@pytest.fixture(scope="module")
def traj10():
    return integrate(P, spectrum(10), IntegratorConfig(t_end=2.0))


def brute_measure(traj, f, m=400_001):
    t = np.linspace(0, traj.t_end, m)
    return np.mean(f(traj(t)) >= 0) * traj.t_end


def test_level_set_above_norm(traj10):
    s = level_set_measure(traj10, 2, 1.01 * traj10.data_norm)
    assert s.measure_B == 0 and s.measure_A == 0


def test_level_set_zero_data():
    traj = integrate(P, np.zeros(6), IntegratorConfig(t_end=1.0))
    s = level_set_measure(traj, 3, 0.01)
    assert s.measure_A == 0 and s.measure_B == 0


def test_level_set_example(traj10):
    s = level_set_measure(traj10, 4, 0.1)
    assert s.measure_B <= s.bound_B
    assert s.ok


def test_level_set_against_brute_force(traj10):
    n, y = 1, 0.05
    s = level_set_measure(traj10, n, y)
    assert s.measure_B > 0
    assert s.measure_B == pytest.approx(brute_measure(traj10, lambda u: u[:, 0] - y), abs=2e-5)
    fa = lambda u: np.minimum(u[:, 0] - y, y - u[:, 2])  # noqa: E731
    assert s.measure_A == pytest.approx(brute_measure(traj10, fa), abs=2e-5)


def test_level_set_single_mode_closed_form():
    # u_1 = e^(-4t) while modes 2, 3 stay 0 until excited; mode 3 only feeds from 2
    traj = integrate(P, [1.0, 0.0, 0.0], IntegratorConfig(t_end=3.0))
    y = 0.2
    s = level_set_measure(traj, 1, y)
    u1 = lambda t: traj(t)[0]  # noqa: E731
    assert s.measure_B == pytest.approx(brentq(lambda t: u1(t) - y, 0, 3), rel=1e-7)


@settings(max_examples=20)
@given(st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_level_set_monotone_in_y(y1, y2):
    traj = _shared()
    lo, hi = sorted((y1, y2))
    a, b = level_set_measure(traj, 2, lo), level_set_measure(traj, 2, hi)
    assert b.measure_B <= a.measure_B + 1e-9


_TRAJ = {}


def _shared():
    if "t" not in _TRAJ:
        _TRAJ["t"] = integrate(P, spectrum(6, 3), IntegratorConfig(t_end=2.0))
    return _TRAJ["t"]


def test_level_set_errors(traj10):
    with pytest.raises(DyadicError):
        level_set_measure(traj10, 9, 0.1)
    with pytest.raises(ValueError):
        level_set_measure(traj10, 2, 0.0)


def test_level_set_needs_nonnegative_tail():
    traj = integrate(P, [0.2, 0.1, -0.05, 0.02], IntegratorConfig(t_end=1.0))
    with pytest.raises(HypothesisViolation):
        level_set_measure(traj, 2, 0.01)


def test_level_set_bound_formula():
    c = compute_constants(P)
    bA, bB = level_set_bounds(P, 3, 0.2, 1.0)
    denom = 0.2**3 * 2 ** 7.5 + 0.2**2 * 2**6
    assert bA == pytest.approx(c.c2 / denom) and bB == pytest.approx(c.c3 / denom)


def test_level_set_grid(traj10):
    stats = level_set_grid(traj10, [1, 2], [0.1, 0.2])
    assert [(s.mode, s.level) for s in stats] == [(1, 0.1), (1, 0.2), (2, 0.1), (2, 0.2)]


def test_cube_zero():
    r = cube_integral(integrate(P, np.zeros(3), IntegratorConfig(t_end=1.0)), 2)
    assert (r.integral_value, r.tail_bound, r.paper_bound) == (0.0, 0.0, 0.0)


def test_cube_single_mode():
    r = cube_integral(integrate(P, [1.0], IntegratorConfig(t_end=2.5)), 1)
    # int_0^T e^(-12 t) dt plus the remainder estimate
    assert r.integral_value == pytest.approx((1 - math.exp(-30)) / 12, rel=1e-8)
    assert abs(r.total - 1 / 12) < 1e-6
    assert r.total >= 1 / 12 - 1e-12


def test_cube_bound_holds(traj10):
    for n in range(4, 9):
        assert cube_integral(traj10, n).ok


def test_cube_bound_formula():
    c3 = compute_constants(P).c3
    assert cube_bound(P, 4, 1.0) == pytest.approx(3 * c3 * 2**-10 * math.log(2**2 + 1))


def test_blowup_functional_zero():
    assert blowup_functional(integrate(P, np.zeros(4), IntegratorConfig(t_end=1.0)), 0.1) == 0.0


def test_blowup_functional_bounded_for_beta_two():
    p = ModelParams(2.0, 2.0)
    a = 0.1 * 2.0 ** -np.arange(1, 9)
    vals = [blowup_functional(integrate(p, a, IntegratorConfig(t_end=T)), 0.1) for T in (1.0, 2.0, 4.0)]
    assert vals[0] > 0
    assert vals[2] - vals[1] < 1e-6 * vals[0]


def test_blowup_functional_grows_with_N():
    p = ModelParams(2.0, 3.5)
    vals = []
    for N in (4, 6, 8):
        a = np.zeros(N)
        a[0] = 5.0
        vals.append(blowup_functional(integrate(p, a, IntegratorConfig(t_end=0.5)), 0.1))
    assert vals[0] < vals[1] < vals[2], vals


def test_psi_identical(traj10):
    s = psi_metric(traj10, traj10, 10)
    assert np.all(s.values == 0)


def test_psi_bounded_by_data_norm():
    a = spectrum(8, 1)
    A = integrate(P, a, IntegratorConfig(t_end=1.0))
    B = integrate(P, np.concatenate([a, np.zeros(8)]), IntegratorConfig(t_end=1.0))
    s = psi_metric(A, B, 8)
    assert s.max <= 4 * np.sum(a**2)
    assert s.max < 1e-6


def test_psi_shrinks_as_truncation_grows():
    a = lambda N: 0.5 * 2.0 ** -np.arange(1, N + 1)  # noqa: E731
    cfg = IntegratorConfig(t_end=1.0)
    T = {N: integrate(P, a(N), cfg) for N in (4, 8, 16)}
    s1 = psi_metric(T[4], T[8], 4, times=np.linspace(0, 1, 101)).max
    s2 = psi_metric(T[8], T[16], 4, times=np.linspace(0, 1, 101)).max
    assert s2 < s1


def test_psi_constant_vs_trajectory():
    a = spectrum(6, 2)
    traj = integrate(P, a, IntegratorConfig(t_end=1.0))
    s = psi_metric(ConstantTrajectory(P, a), traj, 6)
    assert s.values[0] == 0 and s.at(1.0) > 0


def test_psi_errors(traj10):
    other = integrate(ModelParams(2.0, 2.0), traj10.initial, IntegratorConfig(t_end=1.0))
    with pytest.raises(DyadicError):
        psi_metric(traj10, other, 4)
    with pytest.raises(DyadicError):
        psi_metric(traj10, traj10, 11)
    shifted = integrate(P, traj10.initial + 0.01, IntegratorConfig(t_end=1.0))
    with pytest.raises(DyadicError):
        psi_metric(traj10, shifted, 4)
