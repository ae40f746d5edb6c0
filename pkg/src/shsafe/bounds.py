"""Probabilistic safety bounds from composed certificate constants.

Given network constants (mu, beta, eta, gamma) with 0 < gamma < 1 and
beta > mu >= 0, the probability that the certificate value reaches the
beta level within T steps is bounded by a supermartingale inequality
whose form depends on how eta compares with beta * (1 - gamma).
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError

__all__ = ["SafetyBound", "finite_horizon_unsafe_bound", "infinite_horizon_unsafe_bound"]


@dataclass(frozen=True)
class SafetyBound:
    horizon: object          # int or "inf"
    unsafe_bound: float      # clamped to [0, 1]
    raw_value: float         # pre-clamp formula value
    branch: str              # eta_small | eta_large | infinite
    mu: float
    beta: float
    eta: float
    gamma: object            # float; None for the infinite-horizon branch

    @property
    def safety_lower_bound(self) -> float:
        return 1.0 - self.unsafe_bound

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "unsafe_bound": self.unsafe_bound,
            "safety_lower_bound": self.safety_lower_bound,
            "raw_value": self.raw_value,
            "branch": self.branch,
            "inputs": {"mu": self.mu, "beta": self.beta,
                       "eta": self.eta, "gamma": self.gamma},
        }


def _check_domain(mu, beta, eta, gamma):
    if not 0.0 < gamma < 1.0:
        raise InputError(f"gamma must be in (0, 1), got {gamma}")
    if not mu >= 0.0:
        raise InputError(f"mu must be >= 0, got {mu}")
    if not beta > mu:
        raise InputError(f"beta must exceed mu, got beta={beta}, mu={mu}")
    if not eta >= 0.0:
        raise InputError(f"eta must be >= 0, got {eta}")


def finite_horizon_unsafe_bound(mu: float, beta: float, eta: float,
                                gamma: float, horizon: int) -> SafetyBound:
    """Upper bound on the probability of reaching the unsafe level within
    `horizon` steps.

    When beta >= eta / (1 - gamma) the bound is
        1 - (1 - mu/beta) (1 - eta/beta)^T,
    otherwise
        (mu/beta) gamma^T + eta (1 - gamma^T) / ((1 - gamma) beta).
    The raw value can exceed 1 for large horizons; the reported
    probability is clamped to [0, 1] with the raw value retained.
    """
    _check_domain(mu, beta, eta, gamma)
    horizon = int(horizon)
    if horizon < 0:
        raise InputError(f"horizon must be >= 0, got {horizon}")
    if beta >= eta / (1.0 - gamma):
        branch = "eta_small"
        raw = 1.0 - (1.0 - mu / beta) * (1.0 - eta / beta) ** horizon
    else:
        branch = "eta_large"
        g_t = gamma ** horizon
        raw = (mu / beta) * g_t + (eta / ((1.0 - gamma) * beta)) * (1.0 - g_t)
    return SafetyBound(
        horizon=horizon, unsafe_bound=min(1.0, max(0.0, raw)), raw_value=raw,
        branch=branch, mu=mu, beta=beta, eta=eta, gamma=gamma,
    )


def infinite_horizon_unsafe_bound(mu: float, beta: float,
                                  eta: float = 0.0) -> SafetyBound:
    """Infinite-horizon bound mu / beta; valid only when the one-step
    inequality has no additive offset (eta = 0)."""
    if eta != 0.0:
        raise InputError(
            f"infinite-horizon bound requires eta = 0, got {eta}"
        )
    if not mu >= 0.0:
        raise InputError(f"mu must be >= 0, got {mu}")
    if not beta > mu:
        raise InputError(f"beta must exceed mu, got beta={beta}, mu={mu}")
    raw = mu / beta
    return SafetyBound(
        horizon="inf", unsafe_bound=min(1.0, max(0.0, raw)), raw_value=raw,
        branch="infinite", mu=mu, beta=beta, eta=0.0, gamma=None,
    )
