import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stochprox.benchmarks import BENCHMARKS, euclidean_benchmark
from stochprox.geometry import Euclidean, Hyperboloid, Point, Spider
from stochprox.sppa import (
    INT_CAP,
    Schedule,
    certificate_for,
    fast_bound,
    log_grid,
    make_certificate,
    monte_carlo,
    remark_bound,
    rho,
    rho_prime,
    run_trajectory,
    schedule_lambda,
    schedule_moduli,
)
from stochprox.stochastic import ScenarioDistribution

E1 = Euclidean(1)
H = Schedule("harmonic")
BIG = 10**7
# sum_{n>=0} 1/(n+1)^2 up to BIG terms, plus the integral remainder bound
HARMONIC_SQ = np.cumsum(1.0 / np.arange(1, BIG + 1, dtype=float) ** 2)


def harmonic_sq_tail(N):
    """Sum_{n >= N} 1/(n+1)^2 from a long partial sum with an upper remainder."""
    head = HARMONIC_SQ[N - 1] if N > 0 else 0.0
    return HARMONIC_SQ[-1] - head + 1.0 / BIG


# --- schedules --------------------------------------------------------------------


def test_schedule_lambda_examples():
    assert schedule_lambda(H, 0) == 1.0
    assert schedule_lambda(Schedule("fast_harmonic", 0.5), 0) == 1.0
    assert schedule_lambda(H, 9) == pytest.approx(0.1)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule("constant")
    with pytest.raises(ValueError):
        Schedule("fast_harmonic")
    with pytest.raises(ValueError):
        schedule_moduli(Schedule("fast_harmonic", 0.5))


def test_moduli_examples():
    mod = schedule_moduli(H)
    assert mod.chi(0.1) == 10
    assert harmonic_sq_tail(10) < 0.1
    assert mod.theta(0, 1.0) == 3
    assert sum(1.0 / (n + 1) for n in range(4)) == pytest.approx(25 / 12)
    assert mod.Lambda == pytest.approx(math.pi**2 / 6 + 1e-9, abs=1e-15)
    assert mod.Lambda > HARMONIC_SQ[-1] + 1.0 / BIG


def test_chi_spot_checks():
    chi = schedule_moduli(H).chi
    for eps in np.geomspace(1e-6, 5.0, 150):
        assert harmonic_sq_tail(chi(eps)) < eps


def test_theta_spot_checks():
    theta = schedule_moduli(H).theta
    rng = np.random.default_rng(0)
    for _ in range(150):
        k = int(rng.integers(0, 2000))
        b = float(rng.uniform(0.0, 6.0))
        m = theta(k, b)
        assert sum(1.0 / (n + 1) for n in range(k, m + 1)) >= b


def test_schedule_is_square_summable_not_summable():
    n = np.arange(10**6)
    for s in (H, Schedule("fast_harmonic", 0.4)):
        lam = s.lam(n)
        assert lam.sum() > 5.0  # grows like log n
        assert np.sum(lam**2) < s.Lambda
        assert s.tail_sq_sum(0) == pytest.approx(np.sum(lam**2) + np.sum(s.lam(np.arange(10**6, 10**7)) ** 2), rel=1e-6)


@given(n=st.integers(0, 10**5))
def test_tail_square_sum_matches_partial_sums(n):
    ref = harmonic_sq_tail(n)
    assert H.tail_sq_sum(n) == pytest.approx(ref, rel=1e-5)


def test_fast_harmonic_lambda_bound():
    s = Schedule("fast_harmonic", 0.5)
    assert s.Lambda > (math.pi**2 / 6 - 1) / 0.25


# --- certificates -------------------------------------------------------------------------


def test_make_certificate_examples():
    c = make_certificate(1.0, 1.0, 0.5, 2.0)
    assert c.C == pytest.approx(22.0)
    assert c.D == pytest.approx(23 * math.exp(4))
    assert c.D == pytest.approx(1255.757, abs=1e-3)
    assert make_certificate(1.0, 1.0, 1.0, 2.0, sigma=1.0).u == pytest.approx(12.0)
    assert make_certificate(1.0, 1.0, 1.0, 2.0).D == pytest.approx(math.exp(4) * 23 / 2)


@pytest.mark.parametrize("bad", [(0, 1, 1, 1), (1, -1, 1, 1), (1, 1, 0, 1), (1, 1, 1, 0)])
def test_make_certificate_rejects_nonpositive(bad):
    with pytest.raises(ValueError):
        make_certificate(*bad)
    with pytest.raises(ValueError):
        make_certificate(1, 1, 1, 1, sigma=0.0)


def test_certificate_for_benchmark():
    dist, x0 = euclidean_benchmark()
    cert = certificate_for(dist, H, x0)
    assert cert.b == pytest.approx(16.0 + 1e-9, abs=1e-15)
    assert cert.c == pytest.approx(1.0 + 1e-9, abs=1e-15)
    assert cert.Lambda == pytest.approx(math.pi**2 / 6 + 1e-9, abs=1e-15)


def test_rho_example():
    cert = make_certificate(1.0, 1.0, 0.5, 2.0)
    r = rho(cert, H, 1.0)
    assert r.log_value == pytest.approx(math.log(3) + 46 * math.exp(4))
    assert r.saturated and r.value == INT_CAP
    with pytest.raises(ValueError):
        rho(cert, H, 0.0)


def test_rho_small_values_are_exact():
    cert = make_certificate(1e-3, 1e-3, 1.0, 2.0)
    r = rho(cert, H, 10.0)
    # chi(5000) = 1, theta(1, 2D/10)
    assert r.value == math.ceil(2 * math.exp(2 * cert.D / 10.0))
    assert not r.saturated


@given(e=st.floats(1e-3, 10.0))
def test_rho_monotone_in_eps(e):
    cert = make_certificate(2.0, 0.5, 0.8, math.pi**2 / 6)
    assert rho(cert, H, e / 2).log_value >= rho(cert, H, e).log_value


@given(lc=st.floats(0.01, 1.0), e=st.floats(0.01, 10.0))
def test_rho_prime_depends_on_product(lc, e):
    cert = make_certificate(2.0, 0.5, 0.8, 1.7)
    assert rho_prime(cert, H, lc, e) == rho(cert, H, lc * e)
    assert rho_prime(cert, H, 1.0, e) == rho(cert, H, e)
    with pytest.raises(ValueError):
        rho_prime(cert, H, 0.0, e)


def test_single_noiseless_scenario_rate_is_finite():
    dist = ScenarioDistribution(E1, [1.0], [1.0], [[0.0]])
    cert = certificate_for(dist, H, Point(E1, np.array([1.0])))
    assert math.isfinite(rho(cert, H, 1.0).log_value)


def test_fast_bound_examples():
    cert = make_certificate(1.0, 1.0, 1.0, 2.0, sigma=1.0)
    mean, tail = fast_bound(cert, 10)
    assert mean == pytest.approx(1.0)
    _, tail = fast_bound(cert, 98)
    assert tail(1.0) == pytest.approx(math.exp(4) * 18 / 100)
    means = fast_bound(cert, np.arange(100))[0]
    assert np.all(np.diff(means) < 0)
    with pytest.raises(ValueError):
        fast_bound(make_certificate(1, 1, 1, 1), 3)


def test_remark_bound_formula():
    cert = make_certificate(1.0, 1.0, 0.5, 2.0)
    assert remark_bound(cert, 0) == pytest.approx(4 * 23 * math.exp(4) / math.log(2))


# --- trajectories ------------------------------------------------------------------------


@pytest.mark.parametrize("space", [Euclidean(2), Hyperboloid(2), Spider(3)], ids=lambda s: s.kind)
def test_single_scenario_contraction(space):
    rng = np.random.default_rng(5)
    z, x0 = space.sample(rng, 2, 3.0)
    alpha = 0.6
    dist = ScenarioDistribution(space, [1.0], [alpha], [z])
    traj = run_trajectory(dist, H, Point(space, x0), 200, 0)
    factors = 1.0 / (1.0 + H.lam(np.arange(200)) * alpha)
    ref = space.dist(x0, z) * np.concatenate([[1.0], np.cumprod(factors)])
    np.testing.assert_allclose(np.sqrt(traj.sq_dists), ref, rtol=1e-9, atol=1e-12)
    assert np.all(np.diff(traj.sq_dists) < 0)


def test_fixed_point_trajectory():
    dist = ScenarioDistribution(E1, [1.0], [1.0], [[2.0]])
    traj = run_trajectory(dist, H, Point(E1, np.array([2.0])), 50, 3)
    assert np.all(traj.points == 2.0)


@pytest.mark.parametrize("name", sorted(BENCHMARKS))
def test_trajectory_is_deterministic(name):
    dist, x0 = BENCHMARKS[name]()
    a = run_trajectory(dist, H, x0, 300, 9)
    b = run_trajectory(dist, H, x0, 300, 9)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.draws, b.draws)
    assert a.point(300).space == dist.space


def test_trajectory_follows_resolvents():
    dist, x0 = euclidean_benchmark()
    traj = run_trajectory(dist, H, x0, 100, 1)
    for n in range(100):
        z = dist.anchors[traj.draws[n], 0]
        lam = 1.0 / (n + 1)
        assert traj.points[n + 1, 0] == pytest.approx((traj.points[n, 0] + lam * z) / (1 + lam), abs=1e-14)


def test_log_grid():
    np.testing.assert_array_equal(log_grid(10), [0, 1, 2, 4, 8, 10])
    np.testing.assert_array_equal(log_grid(0), [0])
    np.testing.assert_array_equal(log_grid(8, extra=[3, 20]), [0, 1, 2, 3, 4, 8])


# --- Monte Carlo ----------------------------------------------------------------------------


def exact_second_moment(N):
    """E[(x_n - 1)^2] on the Euclidean benchmark with harmonic steps.

    Each step is x <- (1-t) x + t z with t = 1/(n+2) and z - 1 = +-1 with equal
    probability, so e^2 evolves as (1-t)^2 e^2 + t^2 in expectation.
    """
    m = np.empty(N + 1)
    m[0] = 16.0
    for n in range(N):
        t = 1.0 / (n + 2)
        m[n + 1] = (1 - t) ** 2 * m[n] + t * t
    return m


def test_monte_carlo_matches_exact_second_moment():
    dist, x0 = euclidean_benchmark()
    stats = monte_carlo(dist, H, x0, 2000, 4000, seed=17)
    ref = exact_second_moment(2000)[stats.n]
    z = np.abs(stats.mean_sq_dist - ref)[1:] / stats.stderr[1:]
    assert np.all(z < 4.5)
    assert stats.mean_sq_dist[0] == 16.0 and stats.stderr[0] == 0.0


def test_monte_carlo_single_replication_equals_trajectory():
    dist, x0 = euclidean_benchmark()
    stats = monte_carlo(dist, H, x0, 500, 1, seed=21, eps=(0.05,))
    traj = run_trajectory(dist, H, x0, 500, 21)
    np.testing.assert_array_equal(stats.mean_sq_dist, traj.sq_dists[stats.n])
    assert np.all(stats.stderr == 0)
    # sup-tail indicator from the trajectory itself
    exceed = traj.sq_dists >= 0.05
    ref = [float(exceed[n:].any()) for n in stats.n]
    np.testing.assert_array_equal(stats.tail_freq[:, 0], ref)


def test_monte_carlo_noiseless_has_zero_stderr():
    dist = ScenarioDistribution(E1, [1.0], [1.0], [[0.0]])
    stats = monte_carlo(dist, H, Point(E1, np.array([3.0])), 100, 50, seed=1)
    assert np.all(stats.stderr == 0.0)


def test_monte_carlo_mean_decreasing_after_ten():
    dist, x0 = euclidean_benchmark()
    stats = monte_carlo(dist, H, x0, 4096, 10_000, seed=3)
    late = stats.mean_sq_dist[stats.n >= 10]
    assert np.all(np.diff(late) < 0)


def test_monte_carlo_independent_of_parallelism(monkeypatch):
    dist, x0 = BENCHMARKS["hyperboloid"]()
    a = monte_carlo(dist, H, x0, 300, 40, seed=5, eps=(0.1,), n_jobs=1)
    b = monte_carlo(dist, H, x0, 300, 40, seed=5, eps=(0.1,), n_jobs=3)
    monkeypatch.setenv("SPPA_THREADS", "2")
    c = monte_carlo(dist, H, x0, 300, 40, seed=5, eps=(0.1,))
    for s in (b, c):
        assert np.array_equal(a.per_replication, s.per_replication)
        assert np.array_equal(a.mean_sq_dist, s.mean_sq_dist)
        assert np.array_equal(a.tail_freq, s.tail_freq)


def test_monte_carlo_measures_sigma():
    dist, x0 = euclidean_benchmark()
    stats = monte_carlo(dist, H, x0, 100, 5, seed=2, measure_sigma=True)
    # at n = 0 with x0 = 5: Yosida magnitudes alpha d(J, z) = 5/2 and 3/2
    assert stats.sigma >= 0.5 * (2.5**2 + 1.5**2) - 1e-12


def test_monte_carlo_validation():
    dist, x0 = euclidean_benchmark()
    with pytest.raises(ValueError):
        monte_carlo(dist, H, x0, 10, 0, seed=0)
    with pytest.raises(ValueError):
        monte_carlo(dist, H, Point(Spider(3), Spider(3).origin()), 10, 1, seed=0)
    stats = monte_carlo(dist, H, x0, 10, 2, seed=0)
    with pytest.raises(KeyError):
        stats.mean_at(3)
