"""Scikit-learn style estimator wrapping the iteration.

Rows of ``X`` are points of a Hadamard space. ``fit`` treats the rows as an
empirical scenario set (one quadratic field per row, weighted by
``sample_weight``) and runs the stochastic proximal point iteration on it;
the fitted location estimates the weighted Fréchet mean of the rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import _check_sample_weight, check_array, check_is_fitted, validate_data

from .fields import resolvent_fraction
from .geometry import Euclidean, Hyperboloid, Point, Space
from .sppa import Schedule, certificate_for, run_trajectory
from .stochastic import ScenarioDistribution, zero_of_mean


def resolve_space(space, n_features: int) -> Space:
    """Turn ``"euclidean"``, ``"hyperboloid"`` or a :class:`Space` into a space for ``n_features`` columns."""
    if isinstance(space, Space):
        if space.coord_shape != (n_features,):
            raise ValueError(f"{space!r} expects {space.coord_shape[0]} columns, got {n_features}")
        return space
    if space == "euclidean":
        return Euclidean(n_features)
    if space == "hyperboloid":
        if n_features < 2:
            raise ValueError("hyperboloid points need at least 2 ambient coordinates")
        return Hyperboloid(n_features - 1)
    raise ValueError(f"space must be 'euclidean', 'hyperboloid' or a Space instance, got {space!r}")


def check_points(space: Space, X) -> np.ndarray:
    """Validate a 2-d array of points of ``space``; returns a float copy."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    return space.check(X)


class StochasticProximalPoint(TransformerMixin, BaseEstimator):
    """Stochastic proximal point estimate of a weighted Fréchet mean.

    Parameters
    ----------
    space : {"euclidean", "hyperboloid"} or Space, default="euclidean"
        Geometry of the rows of ``X``. Hyperboloid rows are ambient
        coordinates on the upper sheet; a ``Spider`` instance expects
        ``(leg, r)`` rows.
    alpha : float, default=1.0
        Modulus of every quadratic field ``(alpha/2) d^2(., x_i)``, in (0, 1].
    schedule : {"harmonic", "fast_harmonic"}, default="harmonic"
        Step sizes ``1/(n+1)`` or ``1/(alpha_bar (n+2))``.
    n_iter : int, default=1000
        Number of random proximal steps taken by ``fit``.
    x0 : array-like or None, default=None
        Starting point; the first row of ``X`` when None.
    random_state : int, RandomState instance or None, default=None

    Attributes
    ----------
    location_ : ndarray
        Coordinates of the final iterate.
    frechet_mean_ : ndarray
        Exact zero of the mean field of the empirical scenario set.
    certificate_ : RateCertificate
    sq_dist_path_ : ndarray of shape (n_iter + 1,)
        Squared distance of every iterate to ``frechet_mean_``.
    n_steps_ : int
        Steps taken so far, including those from ``partial_fit``.
    """

    def __init__(self, space="euclidean", alpha=1.0, schedule="harmonic", n_iter=1000, x0=None,
                 random_state=None):
        self.space = space
        self.alpha = alpha
        self.schedule = schedule
        self.n_iter = n_iter
        self.x0 = x0
        self.random_state = random_state

    def _validate_params(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.schedule not in ("harmonic", "fast_harmonic"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if int(self.n_iter) != self.n_iter or self.n_iter < 0:
            raise ValueError("n_iter must be a nonnegative integer")

    def _schedule(self):
        return Schedule("harmonic") if self.schedule == "harmonic" else Schedule("fast_harmonic", self.alpha)

    def _start(self, space, X):
        x0 = X[0] if self.x0 is None else space.check(np.asarray(self.x0, dtype=float))
        return Point(space, x0)

    def fit(self, X, y=None, sample_weight=None):
        """Run ``n_iter`` steps on the empirical scenario set of the rows of ``X``."""
        self._validate_params()
        X = validate_data(self, X, dtype=np.float64)
        space = resolve_space(self.space, X.shape[1])
        X = space.check(X)
        w = _check_sample_weight(sample_weight, X, ensure_non_negative=True)
        if not w.sum() > 0:
            raise ValueError("sample weights must have a positive sum")
        # zero-weight rows are not scenarios
        X, w = X[w > 0], w[w > 0]
        dist = ScenarioDistribution(space, w / w.sum(), np.full(len(w), float(self.alpha)), X)
        sched = self._schedule()
        x0 = self._start(space, X)
        seed = check_random_state(self.random_state).randint(0, 2**31 - 1)
        traj = run_trajectory(dist, sched, x0, int(self.n_iter), seed)

        self.space_ = space
        self.frechet_mean_ = zero_of_mean(dist).coords
        self.certificate_ = certificate_for(dist, sched, x0)
        self.location_ = traj.points[-1].copy()
        self.sq_dist_path_ = traj.sq_dists
        self.n_steps_ = int(self.n_iter)
        return self

    def partial_fit(self, X, y=None):
        """Take one proximal step per row of ``X``, in order, from the current location."""
        self._validate_params()
        first = not hasattr(self, "location_")
        X = validate_data(self, X, dtype=np.float64, reset=first)
        if first:
            space = resolve_space(self.space, X.shape[1])
            X = space.check(X)
            self.space_ = space
            self.location_ = self._start(space, X).coords.copy()
            self.n_steps_ = 0
        else:
            X = self.space_.check(X)
        sched = self._schedule()
        x = self.location_
        for row in X:
            t = resolvent_fraction(float(self.alpha), float(sched.lam(self.n_steps_)))
            x = self.space_.geodesic(x, row, t)
            self.n_steps_ += 1
        self.location_ = x
        return self

    def transform(self, X):
        """Distance of each row to the fitted location, shape ``(n_samples, 1)``."""
        check_is_fitted(self, "location_")
        X = self.space_.check(validate_data(self, X, dtype=np.float64, reset=False))
        return self.space_.dist(X, np.broadcast_to(self.location_, X.shape))[:, None]

    def score(self, X, y=None, sample_weight=None):
        """Negative weighted mean of ``(alpha/2) d^2`` from the location to the rows."""
        d = self.transform(X)[:, 0]
        w = _check_sample_weight(sample_weight, d[:, None])
        return -float(np.average(0.5 * self.alpha * d**2, weights=w))
