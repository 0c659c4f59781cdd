"""Stochastic proximal point iteration on Hadamard spaces."""

from .estimator import StochasticProximalPoint, check_points
from .fields import MonotoneField, QuadraticField, resolvent_oracle
from .geometry import (
    Euclidean,
    Hyperboloid,
    Point,
    Space,
    Spider,
    Tangent,
    distance,
    g_inner,
    geodesic_point,
    log_map,
    quasi_inner,
    tangent_distance,
    tangent_norm,
)
from .sppa import (
    RateCertificate,
    RunStats,
    Schedule,
    certificate_for,
    fast_bound,
    make_certificate,
    monte_carlo,
    remark_bound,
    rho,
    rho_prime,
    run_trajectory,
    schedule_moduli,
)
from .stochastic import ModelError, ScenarioDistribution, phi_star, zero_of_mean

__version__ = "0.1.0"

__all__ = [
    "Euclidean", "Hyperboloid", "Spider", "Space", "Point", "Tangent",
    "distance", "geodesic_point", "log_map", "g_inner", "quasi_inner", "tangent_norm", "tangent_distance",
    "MonotoneField", "QuadraticField", "resolvent_oracle",
    "ScenarioDistribution", "ModelError", "zero_of_mean", "phi_star",
    "Schedule", "schedule_moduli", "RateCertificate", "make_certificate", "certificate_for",
    "rho", "rho_prime", "remark_bound", "fast_bound", "run_trajectory", "monte_carlo", "RunStats",
    "StochasticProximalPoint", "check_points",
]
