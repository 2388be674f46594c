"""Networked Cournot competition with a parameterized market maker."""

from .closed_form import HomogeneousInstance, welfare_comparison
from .design import DesignObjective, PolyProgram, ThetaEps, build_mpec, grid_search, theta_eps_contains
from .equilibrium import (
    EquilibriumResult,
    RegionNotCovered,
    SolveOptions,
    SolverError,
    best_response_dynamics,
    solve_potential,
    verify_nash,
)
from .model import (
    Allocation,
    DesignParams,
    GameInstance,
    TransportSet,
    game_from_dict,
    load_game,
    theta_preset,
    two_node_game,
    welfare,
)
from .regions import RegionReport, classify, gamma, region_map
from .sos import SosCertificate, check_certificate, sdp_solve, sos_bound, sos_relaxation
from .two_node import TwoNodeParams, analytic_equilibria, brute_force_equilibria, r_set

__version__ = "0.1.0"

__all__ = [
    "Allocation",
    "DesignObjective",
    "DesignParams",
    "EquilibriumResult",
    "GameInstance",
    "HomogeneousInstance",
    "PolyProgram",
    "RegionNotCovered",
    "RegionReport",
    "SolveOptions",
    "SolverError",
    "SosCertificate",
    "ThetaEps",
    "TransportSet",
    "TwoNodeParams",
    "analytic_equilibria",
    "best_response_dynamics",
    "brute_force_equilibria",
    "build_mpec",
    "check_certificate",
    "classify",
    "game_from_dict",
    "gamma",
    "grid_search",
    "load_game",
    "r_set",
    "region_map",
    "sdp_solve",
    "solve_potential",
    "sos_bound",
    "sos_relaxation",
    "theta_eps_contains",
    "theta_preset",
    "two_node_game",
    "verify_nash",
    "welfare",
    "welfare_comparison",
]
