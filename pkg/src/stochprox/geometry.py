"""Concrete Hadamard spaces and their tangent-cone calculus.

Three models are shipped: flat :class:`Euclidean` space, the
:class:`Hyperboloid` model of hyperbolic space and the :class:`Spider`, a star
of half-lines glued at a common origin. Each model implements vectorized
primitives on raw coordinate arrays (leading axes are batch axes). The
:class:`Point` and :class:`Tangent` wrappers and the module-level functions
provide the single-element public API.

Direction data of tangent elements are model dependent:

* ``Euclidean``: a unit vector (or zeros for ``0_x``).
* ``Hyperboloid``: a Minkowski-unit vector orthogonal to the base point.
* ``Spider``: a scalar. At the origin it is a leg index; at an interior point
  it is ``+1`` (toward the leaf) or ``-1`` (toward the origin).
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any

import numpy as np

MODEL_TOL = 1e-10
INEQ_TOL = 1e-9


# ---------------------------------------------------------------------------
# Spaces
# ---------------------------------------------------------------------------


class Space(ABC):
    """A uniquely geodesic CAT(0) model with vectorized primitives."""

    kind: str = ""

    @property
    @abstractmethod
    def coord_shape(self) -> tuple[int, ...]:
        ...

    @property
    @abstractmethod
    def dir_shape(self) -> tuple[int, ...]:
        ...

    @property
    def flat_tangents(self) -> bool:
        return True

    @abstractmethod
    def check(self, coords) -> np.ndarray:
        """Validate and canonicalize coordinates, raising ``ValueError``."""

    @abstractmethod
    def dist(self, x, y) -> np.ndarray:
        ...

    @abstractmethod
    def geodesic(self, x, y, t) -> np.ndarray:
        ...

    @abstractmethod
    def log(self, x, a) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(direction, magnitude)`` of ``log_x a``."""

    @abstractmethod
    def cos_angle(self, x, d1, d2) -> np.ndarray:
        ...

    def tangent_dist(self, x, d1, m1, d2, m2) -> np.ndarray:
        """Cone metric ``d_x`` between ``m1 d1`` and ``m2 d2``."""
        c = self.cos_angle(x, d1, d2)
        return np.sqrt(np.maximum(m1 * m1 + m2 * m2 - 2.0 * m1 * m2 * c, 0.0))

    @abstractmethod
    def reverse(self, x, d) -> np.ndarray:
        """Direction opposite to ``d`` at ``x``."""

    @abstractmethod
    def frechet_mean(self, points, weights) -> np.ndarray:
        ...

    @abstractmethod
    def tangent_mean(self, x, dirs, mags, weights) -> tuple[np.ndarray, float]:
        """Barycenter of weighted tangent elements at a single base ``x``."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int, scale: float) -> np.ndarray:
        ...

    @abstractmethod
    def origin(self) -> np.ndarray:
        ...

    def zero_direction(self) -> np.ndarray:
        return np.zeros(self.dir_shape)

    def point(self, coords) -> Point:
        return Point(self, coords)

    # serialization -------------------------------------------------------

    @abstractmethod
    def to_json(self) -> dict[str, Any]:
        ...

    def point_to_json(self, coords) -> dict[str, Any]:
        return {"space": self.to_json(), "coords": [float(c) for c in np.ravel(coords)]}

    def point_from_json(self, obj) -> np.ndarray:
        if isinstance(obj, dict):
            if "coords" not in obj:
                raise ValueError(f"point object lacks 'coords': {obj!r}")
            obj = obj["coords"]
        return self.check(np.asarray(obj, dtype=float))


def _batch_dot(a, b):
    return np.sum(a * b, axis=-1)


@dataclass(frozen=True)
class Euclidean(Space):
    dim: int
    kind: str = field(default="euclidean", init=False, repr=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    @property
    def coord_shape(self):
        return (self.dim,)

    @property
    def dir_shape(self):
        return (self.dim,)

    def check(self, coords):
        x = np.asarray(coords, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("coordinates must be finite")
        return x

    def dist(self, x, y):
        return np.sqrt(_batch_dot(y - x, y - x))

    def geodesic(self, x, y, t):
        t = np.asarray(t, dtype=float)
        return x + t[..., None] * (y - x)

    def log(self, x, a):
        v = np.asarray(a, dtype=float) - x
        mag = np.sqrt(_batch_dot(v, v))
        safe = np.where(mag > 0, mag, 1.0)
        return v / safe[..., None], mag

    def cos_angle(self, x, d1, d2):
        return np.clip(_batch_dot(d1, d2), -1.0, 1.0)

    def tangent_dist(self, x, d1, m1, d2, m2):
        # difference of vectors; the cosine form cancels for nearly equal tangents
        v = np.asarray(m1)[..., None] * d1 - np.asarray(m2)[..., None] * d2
        return np.sqrt(_batch_dot(v, v))

    def reverse(self, x, d):
        return -np.asarray(d, dtype=float)

    def frechet_mean(self, points, weights):
        w = np.asarray(weights, dtype=float)
        return np.tensordot(w / w.sum(), np.asarray(points, dtype=float), axes=1)

    def tangent_mean(self, x, dirs, mags, weights):
        w = np.asarray(weights, dtype=float)
        v = np.tensordot(w / w.sum(), np.asarray(mags)[:, None] * dirs, axes=1)
        mag = float(np.sqrt(v @ v))
        return (v / mag if mag > 0 else np.zeros_like(v)), mag

    def sample(self, rng, n, scale):
        return rng.uniform(-scale, scale, size=(n, self.dim))

    def origin(self):
        return np.zeros(self.dim)

    def to_json(self):
        return {"kind": self.kind, "dim": self.dim}


def minkowski(a, b):
    """Minkowski product ``-a0 b0 + sum_i ai bi`` over the last axis."""
    return _batch_dot(a, b) - 2.0 * a[..., 0] * b[..., 0]


@dataclass(frozen=True)
class Hyperboloid(Space):
    """Upper sheet of ``<x, x>_L = -1`` in ``R^(dim+1)``."""

    dim: int
    kind: str = field(default="hyperboloid", init=False, repr=False)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")

    @property
    def coord_shape(self):
        return (self.dim + 1,)

    @property
    def dir_shape(self):
        return (self.dim + 1,)

    def check(self, coords):
        x = np.asarray(coords, dtype=float)
        if x.shape[-1:] != (self.dim + 1,):
            raise ValueError(f"expected trailing dimension {self.dim + 1}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("coordinates must be finite")
        if np.any(x[..., 0] <= 0):
            raise ValueError("hyperboloid points need x0 > 0")
        # absolute tolerance, scaled by x0^2 for far-out points
        defect = np.abs(minkowski(x, x) + 1.0)
        if np.any(defect > MODEL_TOL * np.maximum(1.0, x[..., 0] ** 2)):
            raise ValueError("point is not on the hyperboloid sheet")
        return x

    def normalize(self, x):
        return x / np.sqrt(-minkowski(x, x))[..., None]

    def dist(self, x, y):
        diff = y - x
        q = np.maximum(minkowski(diff, diff), 0.0)
        # equals arccosh(-<x,y>_L) on the sheet, without the cancellation near 1
        return 2.0 * np.arcsinh(np.sqrt(q) / 2.0)

    def log(self, x, a):
        a = np.asarray(a, dtype=float)
        diff = a - x
        v = diff + minkowski(x, diff)[..., None] * x
        v = v + minkowski(x, v)[..., None] * x
        n = np.sqrt(np.maximum(minkowski(v, v), 0.0))
        mag = self.dist(x, a)
        ok = (n > 0) & (mag > 0)
        safe = np.where(ok, n, 1.0)
        d = np.where(ok[..., None], v / safe[..., None], 0.0)
        return d, np.where(ok, mag, 0.0)

    def exp(self, x, d, mag):
        mag = np.asarray(mag, dtype=float)[..., None]
        return self.normalize(np.cosh(mag) * x + np.sinh(mag) * d)

    def geodesic(self, x, y, t):
        d, mag = self.log(x, y)
        return self.exp(x, d, np.asarray(t, dtype=float) * mag)

    def cos_angle(self, x, d1, d2):
        return np.clip(minkowski(d1, d2), -1.0, 1.0)

    def tangent_dist(self, x, d1, m1, d2, m2):
        v = np.asarray(m1)[..., None] * d1 - np.asarray(m2)[..., None] * d2
        return np.sqrt(np.maximum(minkowski(v, v), 0.0))

    def reverse(self, x, d):
        return -np.asarray(d, dtype=float)

    def frechet_mean(self, points, weights, tol=1e-13, max_iter=10_000):
        p = np.asarray(points, dtype=float)
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        # Lorentzian centroid as the starting point, then damped Karcher steps
        y = self.normalize(np.tensordot(w, p, axes=1))

        def objective(c):
            return float(w @ self.dist(c[None, :], p) ** 2)

        f = objective(y)
        for _ in range(max_iter):
            d, m = self.log(y[None, :], p)
            g = np.tensordot(w, m[:, None] * d, axes=1)
            gn = float(np.sqrt(max(minkowski(g, g), 0.0)))
            if gn <= tol:
                break
            # tangential Hessian of d^2/2 is bounded by d coth d
            curv = float(w @ np.where(m > 1e-8, m / np.tanh(np.maximum(m, 1e-8)), 1.0))
            step = 1.0 / curv
            while True:
                cand = self.exp(y, g / gn, step * gn)
                fc = objective(cand)
                if fc <= f or step < 1e-12:
                    break
                step /= 2.0
            if np.sqrt(max(minkowski(cand - y, cand - y), 0.0)) < 1e-16:
                y = cand
                break
            y, f = cand, fc
        return y

    def tangent_mean(self, x, dirs, mags, weights):
        w = np.asarray(weights, dtype=float)
        v = np.tensordot(w / w.sum(), np.asarray(mags)[:, None] * dirs, axes=1)
        v = v + minkowski(x, v) * x
        mag = float(np.sqrt(max(minkowski(v, v), 0.0)))
        return (v / mag if mag > 0 else np.zeros_like(v)), mag

    def lift(self, v):
        """Map ambient tangent coordinates at the origin onto the sheet."""
        v = np.asarray(v, dtype=float)
        r = np.sqrt(_batch_dot(v, v))
        o = np.broadcast_to(self.origin(), v.shape[:-1] + (self.dim + 1,))
        safe = np.where(r > 0, r, 1.0)
        d = np.concatenate([np.zeros(v.shape[:-1] + (1,)), v / safe[..., None]], axis=-1)
        return self.exp(o, d, r)

    def sample(self, rng, n, scale):
        u = rng.normal(size=(n, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = rng.uniform(0.0, scale, size=n)
        return self.lift(u * r[:, None])

    def origin(self):
        o = np.zeros(self.dim + 1)
        o[0] = 1.0
        return o

    def to_json(self):
        return {"kind": self.kind, "dim": self.dim}


@dataclass(frozen=True)
class Spider(Space):
    """``legs`` copies of ``[0, inf)`` glued at 0; coordinates are ``(leg, r)``."""

    legs: int
    kind: str = field(default="spider", init=False, repr=False)

    def __post_init__(self):
        if int(self.legs) != self.legs or self.legs < 3:
            raise ValueError(f"a spider needs at least 3 legs, got {self.legs}")

    @property
    def coord_shape(self):
        return (2,)

    @property
    def dir_shape(self):
        return ()

    @property
    def flat_tangents(self):
        return False

    def check(self, coords):
        x = np.array(coords, dtype=float)
        if x.shape[-1:] != (2,):
            raise ValueError(f"spider coordinates are (leg, r) pairs, got shape {x.shape}")
        leg, r = x[..., 0], x[..., 1]
        if not np.all(np.isfinite(x)):
            raise ValueError("coordinates must be finite")
        if np.any(leg != np.round(leg)) or np.any((leg < 0) | (leg >= self.legs)):
            raise ValueError(f"leg index must be an integer in [0, {self.legs})")
        if np.any(r < 0):
            raise ValueError("spider coordinate r must be nonnegative")
        x[..., 0] = np.where(r == 0, 0.0, leg)
        return x

    def make(self, leg, r):
        return self.check(np.stack(np.broadcast_arrays(np.asarray(leg, float), np.asarray(r, float)), axis=-1))

    @staticmethod
    def _same_ray(x, y):
        return (x[..., 0] == y[..., 0]) | (x[..., 1] == 0) | (y[..., 1] == 0)

    def dist(self, x, y):
        rx, ry = x[..., 1], y[..., 1]
        return np.where(x[..., 0] == y[..., 0], np.abs(rx - ry), rx + ry)

    def geodesic(self, x, y, t):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        t = np.asarray(t, dtype=float)
        rx, ry = x[..., 1], y[..., 1]
        lx, ly = x[..., 0], y[..., 0]
        same = self._same_ray(x, y)
        ray_leg = np.where(rx > 0, lx, ly)
        r_same = rx + t * (ry - rx)
        s = t * (rx + ry)
        r_cross = np.where(s <= rx, rx - s, s - rx)
        leg_cross = np.where(s <= rx, lx, ly)
        r = np.where(same, r_same, r_cross)
        leg = np.where(same, ray_leg, leg_cross)
        r = np.maximum(r, 0.0)
        return np.stack([np.where(r == 0, 0.0, leg), r], axis=-1)

    def log(self, x, a):
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        rx, ra = x[..., 1], a[..., 1]
        mag = self.dist(x, a)
        outward = (a[..., 0] == x[..., 0]) & (ra > rx)
        d = np.where(rx == 0, a[..., 0], np.where(outward, 1.0, -1.0))
        return d, mag

    def cos_angle(self, x, d1, d2):
        x = np.asarray(x, dtype=float)
        d1 = np.asarray(d1, dtype=float)
        d2 = np.asarray(d2, dtype=float)
        at_origin = x[..., 1] == 0
        return np.where(at_origin, np.where(d1 == d2, 1.0, -1.0), d1 * d2)

    def reverse(self, x, d):
        # the cone at the origin has no antipodes; any other leg is opposite
        x = np.asarray(x, dtype=float)
        d = np.asarray(d, dtype=float)
        return np.where(x[..., 1] == 0, (d + 1) % self.legs, -d)

    def frechet_mean(self, points, weights):
        p = np.asarray(points, dtype=float)
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        signed = w * p[:, 1]
        total = signed.sum()
        best_leg, best_r = 0, 0.0
        for k in range(self.legs):
            on = (p[:, 0] == k) & (p[:, 1] > 0)
            r = 2.0 * signed[on].sum() - total
            if r > best_r:
                best_leg, best_r = k, r
        return np.array([float(best_leg) if best_r > 0 else 0.0, best_r])

    def tangent_mean(self, x, dirs, mags, weights):
        x = np.asarray(x, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        mags = np.asarray(mags, dtype=float)
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        if x[1] == 0:
            # the cone at the origin is isometric to the spider itself
            c = self.frechet_mean(np.stack([np.where(mags > 0, dirs, 0.0), mags], axis=-1), w)
            return np.float64(c[0]), float(c[1])
        s = float(w @ (dirs * mags))
        return np.float64(1.0 if s >= 0 else -1.0), abs(s)

    def sample(self, rng, n, scale):
        leg = rng.integers(0, self.legs, size=n).astype(float)
        r = rng.uniform(0.0, scale, size=n)
        r[rng.random(n) < 0.1] = 0.0
        return self.make(leg, r)

    def origin(self):
        return np.zeros(2)

    def zero_direction(self):
        return np.float64(0.0)

    def to_json(self):
        return {"kind": self.kind, "legs": self.legs}

    def point_to_json(self, coords):
        return {"space": self.to_json(), "leg": int(coords[0]), "r": float(coords[1])}

    def point_from_json(self, obj):
        if isinstance(obj, dict) and "leg" in obj:
            return self.make(obj["leg"], obj["r"])
        return super().point_from_json(obj)


def space_from_json(obj) -> Space:
    """Build a space from ``{"kind": ..., "dim"/"legs": ...}``."""
    if isinstance(obj, Space):
        return obj
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError(f"space must be an object with a 'kind' key, got {obj!r}")
    kind = str(obj["kind"]).lower()
    try:
        if kind == "euclidean":
            return Euclidean(int(obj["dim"]))
        if kind == "hyperboloid":
            return Hyperboloid(int(obj["dim"]))
        if kind == "spider":
            return Spider(int(obj["legs"]))
    except KeyError as exc:
        raise ValueError(f"space {kind!r} lacks field {exc}") from None
    raise ValueError(f"unknown space kind {kind!r}")


# ---------------------------------------------------------------------------
# Single-element API
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Point:
    space: Space
    coords: np.ndarray

    def __post_init__(self):
        c = self.space.check(self.coords)
        if c.shape != self.space.coord_shape:
            raise ValueError(f"a point needs coordinates of shape {self.space.coord_shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def __eq__(self, other):
        return (
            isinstance(other, Point)
            and self.space == other.space
            and np.array_equal(self.coords, other.coords)
        )

    def __hash__(self):
        return hash((self.space, self.coords.tobytes()))

    def to_json(self):
        return self.space.point_to_json(self.coords)

    @classmethod
    def from_json(cls, obj, space: Space | None = None) -> Point:
        if space is None:
            if not isinstance(obj, dict) or "space" not in obj:
                raise ValueError("point JSON needs a 'space' entry")
            space = space_from_json(obj["space"])
        return cls(space, space.point_from_json(obj))


@dataclass(frozen=True, eq=False)
class Tangent:
    """Element ``magnitude * direction`` of the tangent cone at ``base``."""

    base: Point
    direction: Any
    magnitude: float

    def __post_init__(self):
        if not self.magnitude >= 0:
            raise ValueError(f"tangent magnitude must be >= 0, got {self.magnitude}")
        object.__setattr__(self, "magnitude", float(self.magnitude))
        object.__setattr__(self, "direction", np.asarray(self.direction, dtype=float))

    @property
    def space(self):
        return self.base.space

    def scale(self, c: float) -> Tangent:
        if c < 0:
            raise ValueError("tangent cones only admit nonnegative scaling")
        return Tangent(self.base, self.direction, c * self.magnitude)

    def is_zero(self) -> bool:
        return self.magnitude == 0.0


def _same_space(*points: Point) -> Space:
    space = points[0].space
    for p in points[1:]:
        if p.space != space:
            raise ValueError(f"points live in different spaces: {space} vs {p.space}")
    return space


def _same_base(u: Tangent, v: Tangent) -> Space:
    space = _same_space(u.base, v.base)
    if not np.allclose(u.base.coords, v.base.coords, rtol=0.0, atol=1e-12):
        raise ValueError("tangent elements are based at different points")
    return space


def distance(x: Point, y: Point) -> float:
    space = _same_space(x, y)
    return float(space.dist(x.coords, y.coords))


def geodesic_point(x: Point, y: Point, t: float) -> Point:
    """Point at fraction ``t`` of the way from ``x`` to ``y``."""
    space = _same_space(x, y)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    return Point(space, space.geodesic(x.coords, y.coords, t))


def log_map(x: Point, a: Point) -> Tangent:
    space = _same_space(x, a)
    d, mag = space.log(x.coords, a.coords)
    return Tangent(x, d, float(mag))


def zero_tangent(x: Point) -> Tangent:
    return Tangent(x, x.space.zero_direction(), 0.0)


def tangent_norm(u: Tangent) -> float:
    return u.magnitude


def _cos(u: Tangent, v: Tangent) -> float:
    space = _same_base(u, v)
    return float(space.cos_angle(u.base.coords, u.direction, v.direction))


def tangent_distance(u: Tangent, v: Tangent) -> float:
    space = _same_base(u, v)
    return float(space.tangent_dist(u.base.coords, u.direction, u.magnitude, v.direction, v.magnitude))


def g_inner(u: Tangent, v: Tangent) -> float:
    return u.magnitude * v.magnitude * _cos(u, v)


def quasi_inner(x: Point, y: Point, u: Point, v: Point) -> float:
    """Quasi-linearization of the pairs ``(x, y)`` and ``(u, v)``."""
    space = _same_space(x, y, u, v)
    d = space.dist
    xv, yu, xu, yv = (d(a.coords, b.coords) for a, b in ((x, v), (y, u), (x, u), (y, v)))
    return float(0.5 * (xv**2 + yu**2 - xu**2 - yv**2))
