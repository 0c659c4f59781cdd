"""Stochastic proximal point iteration, step-size schedules and rate certificates."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import polygamma

from .fields import resolvent_fraction
from .geometry import Point
from .stochastic import (
    RngStream,
    ScenarioDistribution,
    mean_modulus,
    phi_star,
    sample_from_uniforms,
    second_moment,
    zero_of_mean,
)

BASEL = math.pi**2 / 6.0
STRICT = 1e-9
INT_CAP = 2**63 - 1
RNG_BLOCK = 4096


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    """Step sizes ``1/(n+1)`` (``harmonic``) or ``1/(abar (n+2))`` (``fast_harmonic``)."""

    kind: str = "harmonic"
    alpha_bar: float | None = None

    def __post_init__(self):
        if self.kind not in ("harmonic", "fast_harmonic"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "fast_harmonic" and not (self.alpha_bar and self.alpha_bar > 0):
            raise ValueError("fast_harmonic needs a positive alpha_bar")

    def lam(self, n):
        n = np.asarray(n, dtype=float)
        if self.kind == "harmonic":
            return 1.0 / (n + 1.0)
        return 1.0 / (self.alpha_bar * (n + 2.0))

    def tail_sq_sum(self, n):
        """``sum_{m >= n} lambda_m^2`` in closed form."""
        n = np.asarray(n, dtype=float)
        if self.kind == "harmonic":
            return polygamma(1, n + 1.0)
        return polygamma(1, n + 2.0) / self.alpha_bar**2

    @property
    def Lambda(self) -> float:
        """A strict upper bound on ``sum_n lambda_n^2``."""
        return float(self.tail_sq_sum(0)) + STRICT


def schedule_lambda(s: Schedule, n: int) -> float:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return float(s.lam(n))


class Moduli(NamedTuple):
    chi: Callable[[float], int]
    theta: Callable[[int, float], int]
    Lambda: float
    log_theta: Callable[[int, float], float]


def _harmonic_chi(eps: float) -> int:
    if not eps > 0:
        raise ValueError("eps must be positive")
    return math.ceil(1.0 / eps)


def _harmonic_log_theta(k: int, b: float) -> float:
    return math.log(k + 1) + b


def _harmonic_theta(k: int, b: float) -> int:
    if not b > 0:
        raise ValueError("b must be positive")
    log_val = _harmonic_log_theta(k, b)
    if log_val > math.log(INT_CAP):
        return INT_CAP
    return math.ceil((k + 1) * math.exp(b))


def schedule_moduli(s: Schedule) -> Moduli:
    """Moduli ``chi``, ``theta`` and the bound ``Lambda`` for the harmonic steps.

    ``chi(eps) = ceil(1/eps)`` because the squared tail from ``N`` is below
    ``1/N``; ``theta(k, b) = ceil((k+1) e^b)`` because partial harmonic sums
    dominate ``log((m+2)/(k+1))``.
    """
    if s.kind != "harmonic":
        raise ValueError("moduli are provided for the harmonic schedule only")
    return Moduli(_harmonic_chi, _harmonic_theta, BASEL + STRICT, _harmonic_log_theta)


# ---------------------------------------------------------------------------
# Certificates and rates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateCertificate:
    b: float
    c: float
    alpha_bar: float
    Lambda: float
    C: float
    D: float
    sigma: float | None = None
    u: float | None = None

    def to_json(self):
        return {k: getattr(self, k) for k in ("b", "c", "alpha_bar", "Lambda", "C", "D", "sigma", "u")}


def make_certificate(b, c, alpha_bar, Lambda, sigma=None) -> RateCertificate:
    for name, v in (("b", b), ("c", c), ("alpha_bar", alpha_bar), ("Lambda", Lambda)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    C = 4.0 * (b + Lambda * 2.0 * c) + Lambda * c
    D = math.exp(2.0 * Lambda) * (b + C) / (2.0 * alpha_bar)
    u = None
    if sigma is not None:
        if not sigma > 0:
            raise ValueError(f"sigma must be positive, got {sigma}")
        u = max(4.0 * sigma + 2.0 * c, math.ceil(4.0 / alpha_bar**2) * (b + c * Lambda))
    return RateCertificate(b, c, alpha_bar, Lambda, C, D, sigma, u)


class Rate(NamedTuple):
    """An iteration count reported in log space next to a saturating integer."""

    log_value: float
    value: int
    saturated: bool


def rho(cert: RateCertificate, s: Schedule, eps: float) -> Rate:
    if not eps > 0:
        raise ValueError("eps must be positive")
    mod = schedule_moduli(s)
    k = mod.chi(eps / (2.0 * cert.c))
    b = 2.0 * cert.D / eps
    log_val = mod.log_theta(k, b)
    value = mod.theta(k, b)
    return Rate(log_val, value, value == INT_CAP)


def rho_prime(cert: RateCertificate, s: Schedule, lambda_conf: float, eps: float) -> Rate:
    if not lambda_conf > 0:
        raise ValueError("lambda_conf must be positive")
    return rho(cert, s, lambda_conf * eps)


def remark_bound(cert: RateCertificate, n):
    """``4 max{C, D} / ln(n+2)`` for the harmonic schedule."""
    return 4.0 * max(cert.C, cert.D) / np.log(np.asarray(n, dtype=float) + 2.0)


def fast_bound(cert: RateCertificate, n):
    """Mean bound ``u/(n+2)`` and the tail bound as a function of ``eps``."""
    if cert.sigma is None or cert.u is None:
        raise ValueError("the fast bound needs a certificate with sigma")
    n2 = np.asarray(n, dtype=float) + 2.0
    mean = cert.u / n2
    scale = math.exp(2.0 * cert.Lambda) * (cert.u + 4.0 * cert.sigma + 2.0 * cert.c)

    def tail(eps):
        return scale / (eps * n2)

    return mean, tail


def certificate_for(dist: ScenarioDistribution, schedule: Schedule, x0: Point, sigma=None, x_star=None):
    """Certificate with ``b`` and ``c`` set just above their exact values."""
    x_star = zero_of_mean(dist) if x_star is None else x_star
    phi = phi_star(dist, x_star)
    b = float(dist.space.dist(x0.coords, x_star.coords)) ** 2 + STRICT
    c = second_moment(phi, dist) + STRICT
    return make_certificate(b, c, mean_modulus(dist), schedule.Lambda, sigma)


# ---------------------------------------------------------------------------
# Iteration
# ---------------------------------------------------------------------------


def log_grid(N: int, extra: Sequence[int] = ()) -> np.ndarray:
    """``{0, 1, 2, 4, ..., N}`` plus any extra indices within ``[0, N]``."""
    pts = {0, N}
    k = 1
    while k < N:
        pts.add(k)
        k *= 2
    pts.update(int(e) for e in extra if 0 <= e <= N)
    return np.array(sorted(pts), dtype=np.int64)


@dataclass
class Trajectory:
    points: np.ndarray
    draws: np.ndarray
    sq_dists: np.ndarray
    space: object = field(repr=False)

    def point(self, n: int) -> Point:
        return Point(self.space, self.points[n])

    def __len__(self):
        return self.points.shape[0]


def _uniform_blocks(seeds, N):
    streams = [RngStream(s) for s in seeds]
    done = 0
    while done < N:
        b = min(RNG_BLOCK, N - done)
        yield np.stack([st.uniform(b) for st in streams])
        done += b


def _step_fractions(dist, schedule, n):
    return resolvent_fraction(dist.alphas, schedule.lam(n))


def run_trajectory(dist, schedule, x0: Point, N: int, rng: RngStream | int) -> Trajectory:
    """``N`` steps of the iteration along a single path, recording everything."""
    seed = rng.seed if isinstance(rng, RngStream) else int(rng)
    space = dist.space
    if x0.space != space:
        raise ValueError("x0 must live in the scenario space")
    x_star = zero_of_mean(dist)
    points = np.empty((N + 1,) + space.coord_shape)
    draws = np.empty(N, dtype=np.int64)
    points[0] = x0.coords
    n = 0
    for block in _uniform_blocks([seed], N):
        ids = sample_from_uniforms(dist, block[0])
        for s in ids:
            t = resolvent_fraction(dist.alphas[s], schedule.lam(n))
            points[n + 1] = space.geodesic(points[n], dist.anchors[s], t)
            draws[n] = s
            n += 1
    sq = space.dist(points, np.broadcast_to(x_star.coords, points.shape)) ** 2
    return Trajectory(points, draws, sq, space)


@dataclass
class _Chunk:
    sq: np.ndarray          # (R, L) squared distances at logged n
    last_exceed: np.ndarray  # (R, E) last index with d^2 >= eps
    sigma: float
    snapshots: dict


def _simulate_chunk(dist, schedule, x0, N, seeds, x_star, logged, eps, measure_sigma, snapshot_at):
    space = dist.space
    R = len(seeds)
    eps = np.asarray(eps, dtype=float)
    X = np.broadcast_to(x0, (R,) + space.coord_shape).copy()
    xs = np.broadcast_to(x_star, X.shape)
    L = len(logged)
    sq_log = np.empty((R, L))
    last = np.full((R, eps.size), -1, dtype=np.int64)
    snaps = {}
    snap_set = set(int(s) for s in snapshot_at)
    sigma = 0.0
    li = 0

    def record(n, X):
        nonlocal li
        d2 = space.dist(X, xs) ** 2
        if eps.size:
            hit = d2[:, None] >= eps[None, :]
            last[hit] = n
        if li < L and logged[li] == n:
            sq_log[:, li] = d2
            li += 1
        if n in snap_set:
            snaps[n] = X.copy()

    def yosida_sq_moment(n, X):
        lam = schedule.lam(n)
        m = np.zeros(R)
        for p, a, z in zip(dist.probabilities, dist.alphas, dist.anchors):
            d = space.dist(X, np.broadcast_to(z, X.shape))
            m += p * (a * d / (1.0 + lam * a)) ** 2
        return float(m.max())

    record(0, X)
    n = 0
    for block in _uniform_blocks(seeds, N):
        ids_block = sample_from_uniforms(dist, block)
        for j in range(ids_block.shape[1]):
            if measure_sigma:
                sigma = max(sigma, yosida_sq_moment(n, X))
            ids = ids_block[:, j]
            t = _step_fractions(dist, schedule, n)[ids]
            X = space.geodesic(X, dist.anchors[ids], t)
            n += 1
            record(n, X)
    return _Chunk(sq_log, last, sigma, snaps)


@dataclass
class RunStats:
    n: np.ndarray
    lambda_n: np.ndarray
    mean_sq_dist: np.ndarray
    stderr: np.ndarray
    per_replication: np.ndarray
    eps: tuple
    tail_freq: np.ndarray
    sigma: float | None
    replications: int
    seed: int
    snapshots: dict = field(default_factory=dict, repr=False)

    def mean_at(self, n: int) -> float:
        return float(self.mean_sq_dist[self._index(n)])

    def stderr_at(self, n: int) -> float:
        return float(self.stderr[self._index(n)])

    def _index(self, n):
        idx = np.searchsorted(self.n, n)
        if idx >= self.n.size or self.n[idx] != n:
            raise KeyError(f"n={n} was not logged")
        return idx


def _threads(n_jobs):
    if n_jobs is not None:
        return max(1, int(n_jobs))
    env = os.environ.get("SPPA_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def monte_carlo(
    dist: ScenarioDistribution,
    schedule: Schedule,
    x0: Point,
    N: int,
    R: int,
    seed: int,
    eps: Sequence[float] = (),
    log_at: Sequence[int] = (),
    measure_sigma: bool = False,
    snapshot_at: Sequence[int] = (),
    n_jobs: int | None = None,
) -> RunStats:
    """Run ``R`` independent replications, replication ``r`` seeded with ``seed ^ r``.

    Replications are vectorized; with ``n_jobs > 1`` (or ``SPPA_THREADS``)
    contiguous chunks of replications run in worker processes. Results are
    concatenated in replication order, so output does not depend on the
    degree of parallelism.
    """
    if R < 1 or N < 0:
        raise ValueError("need R >= 1 and N >= 0")
    if x0.space != dist.space:
        raise ValueError("x0 must live in the scenario space")
    x_star = zero_of_mean(dist)
    logged = log_grid(N, log_at)
    seeds = [(int(seed) ^ r) & 0xFFFFFFFFFFFFFFFF for r in range(R)]
    args = (dist, schedule, x0.coords, N)
    tail = (x_star.coords, logged, tuple(eps), measure_sigma, tuple(snapshot_at))
    jobs = min(_threads(n_jobs), R)
    if jobs == 1:
        chunks = [_simulate_chunk(*args, seeds, *tail)]
    else:
        parts = np.array_split(np.arange(R), jobs)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(_simulate_chunk, *args, [seeds[i] for i in part], *tail) for part in parts]
            chunks = [f.result() for f in futs]
    sq = np.concatenate([c.sq for c in chunks])
    last = np.concatenate([c.last_exceed for c in chunks])
    mean = sq.mean(axis=0)
    # shifting by one replication keeps identical samples at exactly zero spread
    se = (sq - sq[0]).std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else np.zeros_like(mean)
    tail_freq = (last[:, None, :] >= logged[None, :, None]).mean(axis=0)
    snaps = {k: np.concatenate([c.snapshots[k] for c in chunks]) for k in chunks[0].snapshots}
    return RunStats(
        n=logged,
        lambda_n=schedule.lam(logged),
        mean_sq_dist=mean,
        stderr=se,
        per_replication=sq,
        eps=tuple(float(e) for e in eps),
        tail_freq=tail_freq,
        sigma=max(c.sigma for c in chunks) if measure_sigma else None,
        replications=R,
        seed=int(seed),
        snapshots=snaps,
    )
