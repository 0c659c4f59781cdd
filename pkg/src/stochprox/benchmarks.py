"""Shipped benchmark scenario sets with their starting points."""

from __future__ import annotations

import numpy as np

from .geometry import Euclidean, Hyperboloid, Point, Spider
from .stochastic import ScenarioDistribution


def euclidean_benchmark() -> tuple[ScenarioDistribution, Point]:
    """Anchors 0 and 2 on the line, equal weights, alpha = 1, start at 5."""
    space = Euclidean(1)
    dist = ScenarioDistribution(space, [0.5, 0.5], [1.0, 1.0], [[0.0], [2.0]])
    return dist, space.point([5.0])


def hyperboloid_benchmark() -> tuple[ScenarioDistribution, Point]:
    """Two anchors at distance 1 from the origin along orthogonal axes.

    The zero of the mean field is their geodesic midpoint; the start lies at
    distance 3 from the origin on the opposite side.
    """
    space = Hyperboloid(2)
    anchors = space.lift(np.array([[1.0, 0.0], [0.0, 1.0]]))
    dist = ScenarioDistribution(space, [0.5, 0.5], [1.0, 1.0], anchors)
    return dist, space.point(space.lift([-1.8, -2.4]))


def spider_benchmark() -> tuple[ScenarioDistribution, Point]:
    """Anchors at radius 1 on each leg of a 3-legged spider; start on leg 0 at radius 3."""
    space = Spider(3)
    anchors = space.make([0, 1, 2], [1.0, 1.0, 1.0])
    dist = ScenarioDistribution(space, [1 / 3, 1 / 3, 1 - 2 / 3], [1.0, 1.0, 1.0], anchors)
    return dist, space.point(space.make(0, 3.0))


BENCHMARKS = {
    "euclidean": euclidean_benchmark,
    "hyperboloid": hyperboloid_benchmark,
    "spider": spider_benchmark,
}
