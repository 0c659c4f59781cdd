"""Finite scenario spaces, random quadratic fields and exact expectations.

Every integral over the scenario space is a finite weighted sum, so the
conditional expectation of a function of the next draw given the past is
computed exactly by enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import QuadraticField, subgradient_coords
from .geometry import Point, Space, Tangent, space_from_json

PROB_TOL = 1e-12
BARYCENTER_TOL = 1e-8


class ModelError(RuntimeError):
    """The scenario set violates a standing assumption of the iteration."""


@dataclass(frozen=True)
class Scenario:
    id: int
    probability: float
    field: QuadraticField


class ScenarioDistribution:
    """A finite probability space of quadratic fields sharing one space."""

    def __init__(self, space: Space, probabilities, alphas, anchors):
        p = np.asarray(probabilities, dtype=float)
        a = np.asarray(alphas, dtype=float)
        z = space.check(np.asarray(anchors, dtype=float))
        if p.ndim != 1 or p.size == 0:
            raise ValueError("need a nonempty 1-d array of probabilities")
        if a.shape != p.shape or z.shape != p.shape + space.coord_shape:
            raise ValueError("probabilities, alphas and anchors disagree in length")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities must be positive and sum to 1 (sum={p.sum()!r})")
        if np.any(a <= 0) or np.any(a > 1):
            raise ValueError("every alpha must lie in (0, 1]")
        for arr in (p, a, z):
            arr.setflags(write=False)
        self.space = space
        self.probabilities = p
        self.alphas = a
        self.anchors = z

    @classmethod
    def from_fields(cls, probabilities, fields: Sequence[QuadraticField]):
        space = fields[0].space
        return cls(
            space,
            probabilities,
            [f.alpha for f in fields],
            np.stack([f.anchor.coords for f in fields]),
        )

    def __len__(self):
        return self.probabilities.size

    @property
    def fields(self) -> list[QuadraticField]:
        return [QuadraticField(float(a), Point(self.space, z)) for a, z in zip(self.alphas, self.anchors)]

    @property
    def scenarios(self) -> list[Scenario]:
        return [Scenario(i, float(p), f) for i, (p, f) in enumerate(zip(self.probabilities, self.fields))]

    def to_json(self):
        return {
            "space": self.space.to_json(),
            "scenarios": [
                {"p": float(p), "alpha": float(a), "anchor": self.space.point_to_json(z)}
                for p, a, z in zip(self.probabilities, self.alphas, self.anchors)
            ],
        }

    @classmethod
    def from_json(cls, obj) -> ScenarioDistribution:
        if not isinstance(obj, dict) or "space" not in obj or "scenarios" not in obj:
            raise ValueError("scenario config needs 'space' and 'scenarios'")
        space = space_from_json(obj["space"])
        rows = obj["scenarios"]
        if not isinstance(rows, list) or not rows:
            raise ValueError("'scenarios' must be a nonempty list")
        try:
            p = [float(r["p"]) for r in rows]
            a = [float(r["alpha"]) for r in rows]
            z = np.stack([space.point_from_json(r["anchor"]) for r in rows])
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed scenario entry: {exc}") from None
        return cls(space, p, a, z)


class RngStream:
    """Seeded source of i.i.d. uniforms; replications use ``split``."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def split(self, index: int) -> RngStream:
        return RngStream(self.seed ^ int(index))

    def uniform(self, size=None):
        return self.generator.random(size)


def sample_from_uniforms(dist: ScenarioDistribution, u):
    """Inverse-CDF transform of uniforms into scenario ids."""
    cdf = np.cumsum(dist.probabilities)
    ids = np.searchsorted(cdf, u, side="right")
    return np.minimum(ids, len(dist) - 1)


def sample_scenario(dist: ScenarioDistribution, rng: RngStream, size=None):
    ids = sample_from_uniforms(dist, rng.uniform(size))
    return int(ids) if size is None else ids


def mean_modulus(dist: ScenarioDistribution) -> float:
    return float(dist.probabilities @ dist.alphas)


def frechet_mean(space: Space, points: Sequence[Point] | np.ndarray, weights) -> Point:
    """Minimizer of ``sum_i w_i d^2(y, p_i)``."""
    if isinstance(points, np.ndarray):
        coords = space.check(points)
    else:
        if len(points) == 0:
            raise ValueError("need at least one point")
        if any(p.space != space for p in points):
            raise ValueError("all points must live in the given space")
        coords = np.stack([p.coords for p in points])
    w = np.asarray(weights, dtype=float)
    if coords.shape[0] == 0:
        raise ValueError("need at least one point")
    if w.shape != coords.shape[:1] or np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be nonnegative, one per point, with positive sum")
    return Point(space, space.frechet_mean(coords, w))


def frechet_objective(space: Space, y, coords, weights):
    """Vectorized ``sum_i w_i d^2(y, p_i)`` for candidate rows ``y``."""
    y = np.asarray(y, dtype=float)
    d = space.dist(y[..., None, :], coords)
    return (d**2) @ np.asarray(weights, dtype=float)


def first_order_residual(dist: ScenarioDistribution, x: Point) -> float:
    """Norm of the barycenter of ``alpha(s) log_x z(s)`` under ``p``."""
    space = dist.space
    xb = np.broadcast_to(x.coords, dist.anchors.shape)
    d, m = space.log(xb, dist.anchors)
    _, mag = space.tangent_mean(x.coords, d, dist.alphas * m, dist.probabilities)
    return mag


def zero_of_mean(dist: ScenarioDistribution) -> Point:
    """The unique zero of the mean field: a weighted Fréchet mean of the anchors."""
    w = dist.probabilities * dist.alphas / mean_modulus(dist)
    x = frechet_mean(dist.space, dist.anchors, w)
    res = first_order_residual(dist, x)
    if res > BARYCENTER_TOL:
        raise ModelError(f"mean field has no verified zero (first-order residual {res:.3e})")
    return x


@dataclass(frozen=True, eq=False)
class PhiStar:
    """Per-scenario subgradients at the zero, with barycenter ``0_x*``."""

    base: Point
    directions: np.ndarray
    magnitudes: np.ndarray

    def __getitem__(self, s: int) -> Tangent:
        return Tangent(self.base, self.directions[s], float(self.magnitudes[s]))

    def __len__(self):
        return self.magnitudes.size


def phi_star(dist: ScenarioDistribution, x_star: Point) -> PhiStar:
    space = dist.space
    xb = np.broadcast_to(x_star.coords, dist.anchors.shape)
    d, m = subgradient_coords(space, xb, dist.anchors, dist.alphas)
    _, res = space.tangent_mean(x_star.coords, d, m, dist.probabilities)
    if res > BARYCENTER_TOL:
        raise ModelError(f"selection at x* does not average to zero (residual {res:.3e})")
    return PhiStar(x_star, np.asarray(d, dtype=float), np.asarray(m, dtype=float))


def second_moment(phi: PhiStar, dist: ScenarioDistribution) -> float:
    if len(phi) != len(dist):
        raise ValueError("selection and distribution disagree in size")
    return float(dist.probabilities @ phi.magnitudes**2)


def conditional_expectation_next(dist: ScenarioDistribution, h: Callable[[int], float]) -> float:
    """Exact expectation of ``h(xi_{n+1})`` given the past."""
    return float(sum(p * float(h(i)) for i, p in enumerate(dist.probabilities)))
