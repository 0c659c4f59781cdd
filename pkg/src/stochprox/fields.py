"""Strongly monotone vector fields and their resolvents.

The shipped field is the subdifferential of ``f(x) = (alpha/2) d^2(x, z)``.
Its resolvent moves ``x`` along the geodesic toward the anchor ``z`` by the
fraction ``lambda*alpha / (1 + lambda*alpha)``; :func:`resolvent_oracle`
recovers the same point by brute-force minimization of the proximal objective.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .geometry import Point, Space, Tangent, g_inner, log_map, _same_space

TERNARY_ITERS = 60


class MonotoneField(ABC):
    """Contract for a strongly monotone field with a total resolvent."""

    @property
    @abstractmethod
    def modulus(self) -> float:
        ...

    @abstractmethod
    def subgradient(self, x: Point) -> Tangent:
        ...

    @abstractmethod
    def resolvent(self, lam: float, x: Point) -> Point:
        ...

    def yosida(self, lam: float, x: Point) -> Tangent:
        _check_lambda(lam)
        j = self.resolvent(lam, x)
        return log_map(j, x).scale(1.0 / lam)


def _check_lambda(lam):
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")


def resolvent_fraction(alpha, lam):
    """Fraction of the way toward the anchor travelled by the resolvent."""
    la = np.asarray(lam, dtype=float) * np.asarray(alpha, dtype=float)
    return la / (1.0 + la)


def subgradient_coords(space: Space, x, z, alpha):
    """Vectorized canonical subgradient: ``(direction, magnitude)`` at ``x``."""
    d, m = space.log(x, z)
    return space.reverse(x, d), np.asarray(alpha) * m


@dataclass(frozen=True)
class QuadraticField(MonotoneField):
    alpha: float
    anchor: Point

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    @property
    def modulus(self):
        return self.alpha

    @property
    def space(self) -> Space:
        return self.anchor.space

    def value(self, x: Point) -> float:
        space = _same_space(x, self.anchor)
        return 0.5 * self.alpha * float(space.dist(x.coords, self.anchor.coords)) ** 2

    def subgradient(self, x: Point) -> Tangent:
        space = _same_space(x, self.anchor)
        d, m = subgradient_coords(space, x.coords, self.anchor.coords, self.alpha)
        return Tangent(x, d, float(m))

    def resolvent(self, lam: float, x: Point) -> Point:
        _check_lambda(lam)
        space = _same_space(x, self.anchor)
        t = resolvent_fraction(self.alpha, lam)
        return Point(space, space.geodesic(x.coords, self.anchor.coords, t))

    def to_json(self):
        return {"alpha": self.alpha, "anchor": self.anchor.to_json()}

    @classmethod
    def from_json(cls, obj, space: Space) -> QuadraticField:
        return cls(float(obj["alpha"]), Point(space, space.point_from_json(obj["anchor"])))


def oracle_fraction(space: Space, x, z, alpha, lam, resolution=200):
    """Brute-force minimizer of ``f(y) + d^2(x, y)/(2 lam)`` along ``[x, z]``.

    Returns the geodesic parameter of the minimizer, vectorized over the
    leading axis. A grid search is followed by ternary refinement.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    x = np.asarray(x, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), x.shape[:1])
    lam = np.broadcast_to(np.asarray(lam, dtype=float), x.shape[:1])
    z = np.broadcast_to(z, x.shape)

    def objective(tau):
        y = space.geodesic(x, z, tau)
        return 0.5 * alpha * space.dist(y, z) ** 2 + space.dist(x, y) ** 2 / (2.0 * lam)

    grid = np.linspace(0.0, 1.0, resolution)
    values = np.stack([objective(np.full(x.shape[0], g)) for g in grid], axis=-1)
    best = np.argmin(values, axis=-1)
    lo = grid[np.maximum(best - 1, 0)]
    hi = grid[np.minimum(best + 1, resolution - 1)]
    for _ in range(TERNARY_ITERS):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        left = objective(m1) <= objective(m2)
        hi = np.where(left, m2, hi)
        lo = np.where(left, lo, m1)
    return 0.5 * (lo + hi)


def resolvent_oracle(field: QuadraticField, lam: float, x: Point, resolution: int = 200) -> Point:
    _check_lambda(lam)
    space = _same_space(x, field.anchor)
    tau = oracle_fraction(space, x.coords[None], field.anchor.coords[None], field.alpha, lam, resolution)
    return Point(space, space.geodesic(x.coords, field.anchor.coords, tau[0]))


def subgradient_residual(field: QuadraticField, u: Tangent, ys) -> float:
    """Smallest ``f(y) - f(x) - g_x(u, log_x y)`` over the probes ``ys``.

    ``u`` is a subgradient at its base point iff this is nonnegative for all
    ``y``; the value is vectorized over the probe coordinates.
    """
    space = field.space
    x = u.base.coords
    ys = np.asarray(ys, dtype=float)
    xb = np.broadcast_to(x, ys.shape)
    d, m = space.log(xb, ys)
    g = u.magnitude * m * space.cos_angle(xb, np.broadcast_to(u.direction, d.shape), d)
    fz = 0.5 * field.alpha * space.dist(ys, np.broadcast_to(field.anchor.coords, ys.shape)) ** 2
    return float(np.min(fz - field.value(u.base) - g))


def monotonicity_defect(field_s: QuadraticField, field_t: QuadraticField, x: Point, y: Point) -> float:
    """``g_x(u, log_x y) + g_y(v, log_y x) + alpha d^2(x, y)``; at most 0 for strongly monotone fields."""
    if field_s != field_t:
        raise ValueError("both evaluations must use the same scenario field")
    space = _same_space(x, y, field_s.anchor)
    u = field_s.subgradient(x)
    v = field_s.subgradient(y)
    d = float(space.dist(x.coords, y.coords))
    return g_inner(u, log_map(x, y)) + g_inner(v, log_map(y, x)) + field_s.alpha * d * d
