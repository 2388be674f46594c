"""Closed-form equilibria for homogeneous markets with one linear-cost firm each.

Three settings are covered: markets joined by an unconstrained market maker,
isolated markets, and a single aggregated market. All formulas work for
Fractions as well as floats, so identities can be checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .model import Allocation, DesignParams, GameInstance, TransportSet, homogeneous_game, theta_preset


class PreconditionViolated(ValueError):
    """A hypothesis of a closed-form result fails; the message names it and its slack."""


@dataclass(frozen=True)
class HomogeneousInstance:
    marginal_costs: tuple
    alpha: Real
    beta: Real

    def __post_init__(self):
        object.__setattr__(self, "marginal_costs", tuple(self.marginal_costs))
        if not self.marginal_costs:
            raise ValueError("at least one firm is required")
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if any(c < 0 for c in self.marginal_costs):
            raise ValueError("marginal costs must be nonnegative")

    @property
    def n(self) -> int:
        return len(self.marginal_costs)

    @property
    def mean_cost(self):
        return sum(self.marginal_costs) / _exact_len(self)

    @property
    def cost_variance(self):
        """Population variance of the marginal costs."""
        cbar = self.mean_cost
        return sum((c - cbar) ** 2 for c in self.marginal_costs) / _exact_len(self)

    @property
    def cost_std(self) -> float:
        return float(self.cost_variance) ** 0.5

    def game(self, transport: TransportSet | None = None) -> GameInstance:
        return homogeneous_game(self.marginal_costs, self.alpha, self.beta, transport)


def _exact_len(inst: HomogeneousInstance):
    exact = all(isinstance(v, (int, Fraction)) for v in (*inst.marginal_costs, inst.alpha, inst.beta))
    return Fraction(inst.n) if exact else float(inst.n)


def _require(slack, what: str) -> None:
    if slack < 0:
        raise PreconditionViolated(f"{what} fails (slack {float(slack):.6g})")


def kappa(theta: DesignParams):
    """(theta_M + theta_P - theta_C) / (3 theta_M - theta_P - theta_C)."""
    tc, tp, tm = theta.as_tuple()
    den = 3 * tm - tp - tc
    if den == 0:
        raise ZeroDivisionError("3 theta_M - theta_P - theta_C is zero")
    num = tm + tp - tc
    if isinstance(num, int) and isinstance(den, int):
        return Fraction(num, den)
    return num / den


def _check_networked(inst: HomogeneousInstance, theta: DesignParams):
    s = theta.potential_weight
    t = theta.concavity
    _require(s, "theta_M + theta_P - theta_C > 0")
    if s == 0:
        raise PreconditionViolated("theta_M + theta_P - theta_C > 0 fails (slack 0)")
    gap = t - s / 2
    if gap <= 0:
        raise PreconditionViolated(
            f"2 theta_M - theta_C > (theta_M + theta_P - theta_C)/2 fails (slack {float(gap):.6g})"
        )
    k = kappa(theta)
    slack = inst.alpha - ((1 + k) * max(inst.marginal_costs) - k * inst.mean_cost)
    _require(slack, "alpha >= (1 + kappa) max C - kappa mean C")
    return k


def unconstrained_equilibrium(inst: HomogeneousInstance, theta: DesignParams) -> Allocation:
    k = _check_networked(inst, theta)
    a, b, cbar = inst.alpha, inst.beta, inst.mean_cost
    q = [(a - cbar - (1 + k) * (c - cbar)) / (2 * b) for c in inst.marginal_costs]
    r = [k * (c - cbar) / b for c in inst.marginal_costs]
    s = theta.potential_weight
    lam = s * (cbar - a) / 2 + theta.theta_m * a
    return Allocation(
        np.array([float(v) for v in q]),
        np.array([float(v) for v in r]),
        float(lam),
        np.zeros(inst.n),
        np.zeros(0),
    )


def unconstrained_equilibrium_exact(inst: HomogeneousInstance, theta: DesignParams):
    """Same as unconstrained_equilibrium but returns (q, r, lambda) as exact lists."""
    k = _check_networked(inst, theta)
    a, b, cbar = inst.alpha, inst.beta, inst.mean_cost
    q = [(a - cbar - (1 + k) * (c - cbar)) / (2 * b) for c in inst.marginal_costs]
    r = [k * (c - cbar) / b for c in inst.marginal_costs]
    lam = theta.potential_weight * (cbar - a) / 2 + theta.theta_m * a
    return q, r, lam


def unconstrained_welfare(inst: HomogeneousInstance, theta: DesignParams):
    k = _check_networked(inst, theta)
    a, b, cbar, var = inst.alpha, inst.beta, inst.mean_cost, inst.cost_variance
    return 3 * inst.n * ((a - cbar) ** 2 + var + k * (6 - k) * var / 3) / (8 * b)


def nonnetworked_equilibrium(inst: HomogeneousInstance):
    """Isolated markets: each firm is a monopolist. Returns (q, welfare)."""
    _require(inst.alpha - max(inst.marginal_costs), "alpha >= max C")
    a, b, cbar, var = inst.alpha, inst.beta, inst.mean_cost, inst.cost_variance
    q = [(a - c) / (2 * b) for c in inst.marginal_costs]
    return q, 3 * inst.n * ((a - cbar) ** 2 + var) / (8 * b)


def aggregated_equilibrium(inst: HomogeneousInstance):
    """All firms compete in one market with n-fold demand. Returns (q, welfare)."""
    n = _exact_len(inst)
    a, b, cbar, var = inst.alpha, inst.beta, inst.mean_cost, inst.cost_variance
    _require(a - ((1 + n) * max(inst.marginal_costs) - n * cbar), "alpha >= (1 + |F|) max C - |F| mean C")
    q = [n / ((1 + n) * b) * (a - cbar - (1 + n) * (c - cbar)) for c in inst.marginal_costs]
    w = n**2 * (2 + n) / (2 * (1 + n) ** 2 * b) * ((a - cbar) ** 2 + 2 * (1 + n) ** 2 / (2 + n) * var)
    return q, w


def total_production(inst: HomogeneousInstance):
    """|F| (alpha - mean C) / (2 beta); total output at the networked equilibrium for every valid theta."""
    return inst.n * (inst.alpha - inst.mean_cost) / (2 * inst.beta)


def welfare_comparison(inst: HomogeneousInstance, theta: DesignParams) -> dict:
    networked = unconstrained_welfare(inst, theta)
    sw_design = unconstrained_welfare(inst, theta_preset("SW"))
    q_nn, isolated = nonnetworked_equilibrium(inst)
    q_ag, aggregated = aggregated_equilibrium(inst)
    q, _, _ = unconstrained_equilibrium_exact(inst, theta)
    identity_gap = abs(sum(q) - total_production(inst))
    return {
        "networked": float(networked),
        "networked_sw_design": float(sw_design),
        "nonnetworked": float(isolated),
        "aggregated": float(aggregated),
        "ratio_to_sw_design": float(networked / sw_design) if sw_design else float("nan"),
        "ratio_networked_to_nonnetworked": float(networked / isolated) if isolated else float("nan"),
        "ratio_aggregated_to_networked": float(aggregated / networked) if networked else float("nan"),
        "total_production": float(sum(q)),
        "total_production_aggregated": float(sum(q_ag)),
        "total_production_identity_gap": float(identity_gap),
    }


def instance_from_dict(doc: dict, exact: bool = False) -> HomogeneousInstance:
    conv = (lambda v: Fraction(str(v))) if exact else float
    try:
        return HomogeneousInstance(
            tuple(conv(c) for c in doc["marginal_costs"]), conv(doc["alpha"]), conv(doc["beta"])
        )
    except KeyError as exc:
        raise ValueError(f"instance document is missing field {exc}") from None
