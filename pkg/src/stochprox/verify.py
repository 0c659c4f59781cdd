"""Pathwise and statistical checkers for the convergence analysis.

Conditional expectations given the past are computed exactly by enumerating
the next scenario, so the recurrence inequalities become deterministic
per-step assertions. Slacks are ``RHS - LHS``; a step violates a check when
its slack falls below ``-tol``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from . import benchmarks
from .fields import oracle_fraction, resolvent_fraction, subgradient_coords
from .geometry import INEQ_TOL, Euclidean, Hyperboloid, Space, Spider
from .sppa import RunStats, Schedule, Trajectory, monte_carlo, run_trajectory
from .stochastic import ScenarioDistribution, mean_modulus, phi_star, second_moment, zero_of_mean

HYPERBOLOID_TOL = 1e-7


class VerificationError(AssertionError):
    """A checked lemma produced a counterexample."""


def default_tol(space: Space) -> float:
    return HYPERBOLOID_TOL if isinstance(space, Hyperboloid) else INEQ_TOL


@dataclass
class SlackReport:
    name: str
    slacks: np.ndarray
    tol: float
    runtime: float = 0.0

    @property
    def cases(self) -> int:
        return int(np.size(self.slacks))

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slacks)) if self.cases else math.inf

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(np.asarray(self.slacks) < -self.tol))

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_json(self):
        return {
            "check": self.name,
            "cases": self.cases,
            "min_slack": self.min_slack,
            "violations": self.violations,
            "runtime": round(self.runtime, 4),
        }


# ---------------------------------------------------------------------------
# Recurrence inequalities along trajectories
# ---------------------------------------------------------------------------


class _NextStep(NamedTuple):
    lam: np.ndarray
    d2: np.ndarray       # d^2(x_n, x*)
    lhs: np.ndarray      # E_n d^2(x_{n+1}, x*)
    yosida2: np.ndarray  # E_n ||A_lambda(xi, x_n)||^2


def _enumerate_next(dist: ScenarioDistribution, schedule: Schedule, traj: Trajectory, x_star) -> _NextStep:
    space = dist.space
    X = traj.points[:-1]
    lam = schedule.lam(np.arange(X.shape[0]))
    xs = np.broadcast_to(x_star.coords, X.shape)
    lhs = np.zeros(X.shape[0])
    yos = np.zeros(X.shape[0])
    for p, a, z in zip(dist.probabilities, dist.alphas, dist.anchors):
        J = space.geodesic(X, np.broadcast_to(z, X.shape), resolvent_fraction(a, lam))
        lhs += p * space.dist(J, xs) ** 2
        yos += p * (space.dist(X, J) / lam) ** 2
    return _NextStep(lam, space.dist(X, xs) ** 2, lhs, yos)


def check_ineq1(dist, schedule, trajectory: Trajectory, beta: float, tol: float | None = None) -> SlackReport:
    if not 0.0 < beta <= 0.5:
        raise ValueError(f"beta must lie in (0, 1/2], got {beta}")
    t0 = time.perf_counter()
    x_star = zero_of_mean(dist)
    c_exact = second_moment(phi_star(dist, x_star), dist)
    s = _enumerate_next(dist, schedule, trajectory, x_star)
    rhs = s.d2 - s.lam**2 * (1.0 - 2.0 * beta) * s.yosida2 + s.lam**2 * c_exact / (2.0 * beta)
    tol = default_tol(dist.space) if tol is None else tol
    return SlackReport(f"ineq1(beta={beta})", rhs - s.lhs, tol, time.perf_counter() - t0)


def check_ineq2(dist, schedule, trajectory: Trajectory, tol: float | None = None) -> SlackReport:
    t0 = time.perf_counter()
    x_star = zero_of_mean(dist)
    c_exact = second_moment(phi_star(dist, x_star), dist)
    s = _enumerate_next(dist, schedule, trajectory, x_star)
    V = 2.0 * s.yosida2 + c_exact
    rhs = (1.0 + 2.0 * s.lam**2) * s.d2 - 2.0 * s.lam * mean_modulus(dist) * s.d2 + s.lam**2 * V
    tol = default_tol(dist.space) if tol is None else tol
    return SlackReport("ineq2", rhs - s.lhs, tol, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Auxiliary real-sequence lemmas
# ---------------------------------------------------------------------------


class QihouResult(NamedTuple):
    valid: bool
    passed: bool | None
    beta_sum: float
    bound: float


def check_qihou(x, alpha, beta, gamma, K, L, M) -> QihouResult:
    """Check ``sum beta < L (K + M)`` on a finite prefix satisfying the hypotheses.

    ``x`` has one more entry than the coefficient sequences. A prefix that
    breaks the hypotheses is reported as invalid rather than failed.
    """
    x, alpha, beta, gamma = (np.asarray(v, dtype=float) for v in (x, alpha, beta, gamma))
    n = alpha.size
    if x.size != n + 1 or beta.size != n or gamma.size != n:
        raise ValueError("x needs one more entry than alpha, beta, gamma")
    bound = L * (K + M)
    step = (1.0 + alpha) * x[:-1] - beta + gamma
    valid = bool(
        all(np.all(v >= 0) for v in (x, alpha, beta, gamma))
        and np.all(x[1:] <= step + 1e-12 * np.maximum(1.0, np.abs(step)))
        and x[0] < K
        and np.prod(1.0 + alpha) < L
        and gamma.sum() < M
    )
    total = float(beta.sum())
    return QihouResult(valid, (total < bound) if valid else None, total, float(bound))


def random_qihou_instance(rng: np.random.Generator, length: int = 50) -> dict:
    alpha = rng.exponential(0.02, size=length)
    gamma = rng.exponential(0.1, size=length) * (rng.random(length) < 0.5)
    x = np.empty(length + 1)
    beta = np.empty(length)
    x[0] = rng.exponential(5.0)
    for n in range(length):
        room = (1.0 + alpha[n]) * x[n] + gamma[n]
        beta[n] = rng.random() * room
        x[n + 1] = rng.random() * (room - beta[n])
    K = x[0] * (1.0 + rng.random()) + 1e-9
    L = float(np.prod(1.0 + alpha)) * (1.0 + rng.random()) + 1e-9
    M = float(gamma.sum()) * (1.0 + rng.random()) + 1e-9
    return dict(x=x, alpha=alpha, beta=beta, gamma=gamma, K=K, L=L, M=M)


def prefix_theta(u) -> Callable[[int, float], int]:
    """Smallest ``m`` with ``sum_{n=k}^m u_n >= b`` on the prefix, else ``len(u)``."""
    u = np.asarray(u, dtype=float)
    cs = np.concatenate([[0.0], np.cumsum(u)])

    def theta(k, b):
        m = int(np.searchsorted(cs, cs[k] + b, side="left")) - 1
        return max(m, k) if m < u.size else u.size

    return theta


def check_sumconv(u, v, theta, L: float, eps: float, N: int) -> int:
    """Return ``n`` in ``[N, theta(N, L/eps)]`` with ``v_n < eps``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(u < 0) or np.any(v < 0) or not float(u @ v) < L:
        raise ValueError("hypotheses fail: need nonnegative sequences with sum u v < L")
    hi = theta(N, L / eps)
    if hi >= u.size:
        raise ValueError("theta(N, L/eps) lies beyond the supplied prefix")
    window = np.nonzero(v[N : hi + 1] < eps)[0]
    if window.size == 0:
        raise VerificationError(f"no n in [{N}, {hi}] with v_n < {eps}")
    return int(N + window[0])


def random_sumconv_instance(rng: np.random.Generator, length: int = 400) -> dict:
    while True:
        u = rng.uniform(0.5, 1.5, size=length)
        v = rng.exponential(rng.uniform(0.1, 2.0), size=length)
        L = float(u @ v) * (1.0 + 0.5 * rng.random()) + 1e-12
        eps = float(rng.uniform(0.05, 2.0) * v.mean())
        N = int(rng.integers(0, 50))
        theta = prefix_theta(u)
        if theta(N, L / eps) < length:
            return dict(u=u, v=v, theta=theta, L=L, eps=eps, N=N)


# ---------------------------------------------------------------------------
# Statistical checks
# ---------------------------------------------------------------------------


class TailCheck(NamedTuple):
    empirical: float
    ville_bound: float
    stderr: float
    passed: bool


def check_supermartingale_tail(stats: RunStats, schedule: Schedule, cert, eps: float, n0: int) -> TailCheck:
    """Compare the empirical sup-tail frequency after ``n0`` with ``E[X_n0]/eps``.

    ``X_n = d^2(x_n, x*) + c sum_{m >= n} lambda_m^2`` is a nonnegative
    supermartingale, so Ville's inequality bounds the tail frequency.
    """
    if stats.replications < 100:
        raise ValueError("need at least 100 replications")
    try:
        e = stats.eps.index(float(eps))
    except ValueError:
        raise ValueError(f"eps={eps} was not tracked in the run") from None
    i = stats._index(n0)
    emp = float(stats.tail_freq[i, e])
    ex = stats.mean_at(n0) + cert.c * float(schedule.tail_sq_sum(n0))
    bound = ex / eps
    se = math.sqrt(emp * (1.0 - emp) / stats.replications)
    return TailCheck(emp, bound, se, emp <= bound + 3.0 * se)


class A3Statistic(NamedTuple):
    values: np.ndarray
    mean: float
    stderr: float
    max_abs: float
    flat: bool
    passed: bool | None


def a3_values(dist: ScenarioDistribution, x_star, phi, X) -> np.ndarray:
    """Per-path exact ``sum_s p_s g_{x*}(phi*(s), log_{x*} x_n)``."""
    space = dist.space
    xs = np.broadcast_to(x_star.coords, X.shape)
    d, m = space.log(xs, X)
    out = np.zeros(X.shape[0])
    for p, pd, pm in zip(dist.probabilities, phi.directions, phi.magnitudes):
        out += p * pm * m * space.cos_angle(xs, np.broadcast_to(pd, d.shape), d)
    return out


def check_a3(dist, schedule, x0, R: int, n: int, seed: int = 0, tol: float = INEQ_TOL) -> A3Statistic:
    if R < 1000:
        raise ValueError("need at least 1000 trajectories")
    x_star = zero_of_mean(dist)
    phi = phi_star(dist, x_star)
    stats = monte_carlo(dist, schedule, x0, n, R, seed, snapshot_at=(n,))
    vals = a3_values(dist, x_star, phi, stats.snapshots[n])
    flat = dist.space.flat_tangents
    mx = float(np.max(np.abs(vals)))
    return A3Statistic(
        vals,
        float(vals.mean()),
        float(vals.std(ddof=1) / math.sqrt(R)),
        mx,
        flat,
        (mx <= tol) if flat else None,
    )


# ---------------------------------------------------------------------------
# Property suites
# ---------------------------------------------------------------------------

SCALES = {Euclidean: 5.0, Hyperboloid: 3.0, Spider: 5.0}


def _timed(name, tol, fn):
    t0 = time.perf_counter()
    slacks = fn()
    return SlackReport(name, slacks, tol, time.perf_counter() - t0)


def geometry_suite(space: Space, n: int, rng: np.random.Generator, tol: float | None = None) -> list[SlackReport]:
    tol = default_tol(space) if tol is None else tol
    scale = SCALES[type(space)]
    D = space.dist
    tag = space.kind

    def pts():
        return space.sample(rng, n, scale)

    def cs():
        x, y, u, v = pts(), pts(), pts(), pts()
        q = 0.5 * (D(x, v) ** 2 + D(y, u) ** 2 - D(x, u) ** 2 - D(y, v) ** 2)
        return D(x, y) * D(u, v) - q

    def cn():
        x, a, b = pts(), pts(), pts()
        t = rng.random(n)
        m = space.geodesic(a, b, t)
        rhs = (1 - t) * D(a, x) ** 2 + t * D(b, x) ** 2 - t * (1 - t) * D(a, b) ** 2
        return rhs - D(m, x) ** 2

    def geodesic_split():
        a, b = pts(), pts()
        t = rng.random(n)
        m = space.geodesic(a, b, t)
        d = D(a, b)
        return -np.maximum(np.abs(D(a, m) - t * d), np.abs(D(m, b) - (1 - t) * d))

    def tangent_cat0():
        x, a, b = pts(), pts(), pts()
        t, s = rng.uniform(0, 2, n), rng.uniform(0, 2, n)
        da, ma = space.log(x, a)
        db, mb = space.log(x, b)
        g = t * ma * s * mb * space.cos_angle(x, da, db)
        return g - 0.5 * t * s * (D(x, a) ** 2 + D(x, b) ** 2 - D(a, b) ** 2)

    def _tangents(x, k):
        out = []
        for _ in range(k):
            d, m = space.log(x, pts())
            out.append((d, m * rng.uniform(0, 2, n)))
        return out

    def _tdist(x, u, v):
        return space.tangent_dist(x, u[0], u[1], v[0], v[1])

    def _g(x, u, v):
        return u[1] * v[1] * space.cos_angle(x, u[0], v[0])

    def nonexp_g():
        x = pts()
        u, v, w = _tangents(x, 3)
        return u[1] * _tdist(x, v, w) - np.abs(_g(x, u, v) - _g(x, u, w))

    def log_nonexp():
        x, a, b = pts(), pts(), pts()
        return D(a, b) - _tdist(x, space.log(x, a), space.log(x, b))

    def tangent_triangle():
        x = pts()
        u, v, w = _tangents(x, 3)
        return _tdist(x, u, v) + _tdist(x, v, w) - _tdist(x, u, w)

    checks = [
        ("CS", cs, tol),
        ("CN", cn, tol),
        ("geodesic", geodesic_split, tol),
        ("tangentCat0", tangent_cat0, tol),
        ("nonexpCat0", nonexp_g, tol),
        ("log_nonexpansive", log_nonexp, tol),
        ("tangent_triangle", tangent_triangle, tol),
    ]
    return [_timed(f"{tag}:{name}", t, fn) for name, fn, t in checks]


def fields_suite(space: Space, n: int, rng: np.random.Generator, tol: float | None = None,
                 oracle_tol: float = 1e-6, probes: int = 100) -> list[SlackReport]:
    tol = default_tol(space) if tol is None else tol
    scale = SCALES[type(space)]
    D = space.dist
    tag = space.kind

    def params(k):
        alpha = rng.uniform(0.05, 1.0, k)
        lam = np.exp(rng.uniform(np.log(0.05), np.log(5.0), k))
        return alpha, lam

    def oracle():
        x, z = space.sample(rng, n, scale), space.sample(rng, n, scale)
        alpha, lam = params(n)
        closed = space.geodesic(x, z, resolvent_fraction(alpha, lam))
        brute = space.geodesic(x, z, oracle_fraction(space, x, z, alpha, lam))
        return -D(closed, brute)

    def nonexpansive():
        x, y, z = (space.sample(rng, n, scale) for _ in range(3))
        alpha, lam = params(n)
        t = resolvent_fraction(alpha, lam)
        return D(x, y) - D(space.geodesic(x, z, t), space.geodesic(y, z, t))

    def fixed_point():
        z = space.sample(rng, n, scale)
        alpha, lam = params(n)
        return -D(space.geodesic(z, z, resolvent_fraction(alpha, lam)), z)

    def _subgradient_slack(base, d, mag, z, alpha, k):
        # f(y) - f(base) - g_base(u, log_base y) over k probes per base
        m = base.shape[0]
        ys = space.sample(rng, m * k, scale)
        B = np.repeat(base, k, axis=0)
        Z = np.repeat(z, k, axis=0)
        A = np.repeat(alpha, k)
        dy, my = space.log(B, ys)
        g = np.repeat(mag, k) * my * space.cos_angle(B, np.repeat(d, k, axis=0), dy)
        val = 0.5 * A * (D(ys, Z) ** 2 - D(B, Z) ** 2) - g
        return val.reshape(m, k).min(axis=1)

    def yosida_membership():
        m = max(n // 10, 10)
        x, z = space.sample(rng, m, scale), space.sample(rng, m, scale)
        alpha, lam = params(m)
        J = space.geodesic(x, z, resolvent_fraction(alpha, lam))
        d, mag = space.log(J, x)
        return _subgradient_slack(J, d, mag / lam, z, alpha, probes)

    def subgradient_ineq():
        m = max(n // 10, 10)
        x, z = space.sample(rng, m, scale), space.sample(rng, m, scale)
        alpha, _ = params(m)
        d, mag = subgradient_coords(space, x, z, alpha)
        return _subgradient_slack(x, d, mag, z, alpha, probes)

    def strong_monotonicity():
        x, y, z = (space.sample(rng, n, scale) for _ in range(3))
        alpha, _ = params(n)
        du, mu = subgradient_coords(space, x, z, alpha)
        dv, mv = subgradient_coords(space, y, z, alpha)
        dxy, mxy = space.log(x, y)
        dyx, myx = space.log(y, x)
        gx = mu * mxy * space.cos_angle(x, du, dxy)
        gy = mv * myx * space.cos_angle(y, dv, dyx)
        return -(gx + gy + alpha * D(x, y) ** 2)

    checks = [
        ("resolvent_vs_oracle", oracle, oracle_tol),
        ("resolvent_nonexpansive", nonexpansive, tol),
        ("resolvent_fixed_point", fixed_point, 1e-10),
        ("yosida_membership", yosida_membership, 1e-8),
        ("subgradient_inequality", subgradient_ineq, 1e-8),
        ("strong_monotonicity", strong_monotonicity, tol),
    ]
    return [_timed(f"{tag}:{name}", t, fn) for name, fn, t in checks]


def aux_lemma_suite(n: int, rng: np.random.Generator) -> list[SlackReport]:
    def qihou():
        out = []
        for _ in range(n):
            r = check_qihou(**random_qihou_instance(rng))
            if not r.valid:
                raise VerificationError("generator produced an infeasible qihou instance")
            out.append(r.bound - r.beta_sum)
        return np.array(out)

    def sumconv():
        out = []
        for _ in range(n):
            inst = random_sumconv_instance(rng)
            try:
                k = check_sumconv(**inst)
                out.append(inst["eps"] - inst["v"][k])
            except VerificationError:
                out.append(-math.inf)
        return np.array(out)

    # strict inequalities: a zero slack already counts as a failure
    return [_timed("aux:qihou", -1e-300, qihou), _timed("aux:sumconv", -1e-300, sumconv)]


def config_pathwise_suite(dist, schedule, x0, N: int, trajectories: int, seed: int = 0,
                          tol: float | None = None, name: str = "config") -> list[SlackReport]:
    """Both one-step lemmas along ``trajectories`` sample paths of one scenario set."""
    reports = {"ineq1(beta=0.25)": [], "ineq1(beta=0.5)": [], "ineq2": []}
    t0 = time.perf_counter()
    for r in range(trajectories):
        traj = run_trajectory(dist, schedule, x0, N, seed ^ r)
        reports["ineq1(beta=0.25)"].append(check_ineq1(dist, schedule, traj, 0.25, tol).slacks)
        reports["ineq1(beta=0.5)"].append(check_ineq1(dist, schedule, traj, 0.5, tol).slacks)
        reports["ineq2"].append(check_ineq2(dist, schedule, traj, tol).slacks)
    rt = time.perf_counter() - t0
    t = default_tol(dist.space) if tol is None else tol
    return [SlackReport(f"{name}:{k}", np.concatenate(v), t, rt / 3) for k, v in reports.items()]


def pathwise_suite(N: int, trajectories: int, seed: int = 0, tol: float | None = None) -> list[SlackReport]:
    out = []
    for name in ("euclidean", "hyperboloid"):
        dist, x0 = benchmarks.BENCHMARKS[name]()
        out += config_pathwise_suite(dist, Schedule("harmonic"), x0, N, trajectories, seed, tol, name)
    return out


def a3_suite(R: int, n: int, seed: int = 0, tol: float | None = None) -> list[SlackReport]:
    out = []
    for name in ("euclidean", "hyperboloid"):
        dist, x0 = benchmarks.BENCHMARKS[name]()
        t0 = time.perf_counter()
        st = check_a3(dist, Schedule("harmonic"), x0, R, n, seed)
        t = INEQ_TOL if tol is None else tol
        out.append(SlackReport(f"{name}:A3", -np.abs(st.values), t, time.perf_counter() - t0))
    return out


def spider_a3_report(R: int, n: int, seed: int = 0) -> dict:
    dist, x0 = benchmarks.spider_benchmark()
    st = check_a3(dist, Schedule("harmonic"), x0, R, n, seed)
    return {"check": "spider:A3", "mean": st.mean, "stderr": st.stderr, "max_abs": st.max_abs, "contract": None}


LEVELS = {
    "quick": dict(samples=1_000, path_N=1_000, paths=3, a3_R=1_000, a3_n=50),
    "full": dict(samples=10_000, path_N=10_000, paths=10, a3_R=1_000, a3_n=200),
}


def run_all(level: str = "quick", seed: int = 0, tol: float | None = None) -> tuple[list[SlackReport], dict]:
    """Every property suite; ``tol`` overrides all per-check tolerances."""
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    cfg = LEVELS[level]
    rng = np.random.default_rng(seed)
    reports: list[SlackReport] = []
    for space in (Euclidean(3), Hyperboloid(2), Spider(3)):
        reports += geometry_suite(space, cfg["samples"], rng)
        reports += fields_suite(space, cfg["samples"], rng)
    reports += aux_lemma_suite(cfg["samples"], rng)
    reports += pathwise_suite(cfg["path_N"], cfg["paths"], seed)
    reports += a3_suite(cfg["a3_R"], cfg["a3_n"], seed)
    if tol is not None:
        for r in reports:
            r.tol = tol
    return reports, spider_a3_report(cfg["a3_R"], cfg["a3_n"], seed)

