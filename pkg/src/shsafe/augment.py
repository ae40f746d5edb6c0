"""Lift a certified per-subsystem certificate to the counter-augmented
transition system.

The augmented system replaces continuous flow plus scheduled jumps by a
single one-step map on (x, theta), where the integer counter theta
records sampling periods since the last jump: flow steps are allowed
while theta <= eps2 - 1, jumps while eps1 <= theta <= eps2.  The
augmented certificate is varpi(theta) * B(x) for a case-dependent
weight varpi, and its one-step contraction constants are closed-form
maxima of the flow-period bound and the jump bound.

Three parameter regimes are supported, keyed by the signs of the flow
decay rate gamma1 and the jump contraction factor gamma2:

    CONTRACTIVE_BOTH   gamma1 > 0 and 0 < gamma2 < 1; varpi = 1
    EXPANSIVE_JUMP     gamma1 > 0 and gamma2 >= 1;    varpi grows with theta
    EXPANSIVE_FLOW     gamma1 <= 0 and 0 < gamma2 < 1; varpi shrinks with theta

The regime where both flow and jump expand admits no bound and is
rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .cbc import CertificateBundle
from .errors import InputError, ShsafeError

__all__ = [
    "CaseKind",
    "AugmentedConstants",
    "check_jump_spacing",
    "flow_bound_coefficients",
    "build_acsbc",
    "augment_subsystem",
]


class CaseKind(Enum):
    CONTRACTIVE_BOTH = "contractive_both"
    EXPANSIVE_JUMP = "expansive_jump"
    EXPANSIVE_FLOW = "expansive_flow"


class UnsupportedCaseError(ShsafeError):
    """gamma1 <= 0 together with gamma2 >= 1: neither phase contracts."""


class ConstructionError(ShsafeError):
    """The augmented contraction factor left (0, 1); reports the branch."""


def check_jump_spacing(gamma1: float, gamma2: float, tau: float,
                       eps1: int, eps2: int) -> bool:
    """True iff ln(gamma2) - gamma1 * tau * theta < 0 strictly for every
    admissible counter value theta in {eps1, ..., eps2}.

    The left side is monotone in theta, so only the endpoint selected by
    the sign of gamma1 binds; both are checked for clarity.
    """
    if tau <= 0:
        raise InputError(f"tau must be > 0, got {tau}")
    if gamma2 <= 0:
        raise InputError(f"gamma2 must be > 0, got {gamma2}")
    if eps1 > eps2 or eps1 < 1:
        raise InputError(f"need 1 <= eps1 <= eps2, got {eps1}, {eps2}")
    lg = math.log(gamma2)
    return lg - gamma1 * tau * eps1 < 0 and lg - gamma1 * tau * eps2 < 0


def flow_bound_coefficients(gamma1: float, tau: float, phi1_bar: float,
                            eta1_bar: float) -> tuple:
    """Coefficients (a, b, c) of the one-period flow bound
    E[B(x(tau-))] <= a*B(x) + b*sup|w|^2 + c."""
    if tau <= 0:
        raise InputError(f"tau must be > 0, got {tau}")
    a = math.exp(-gamma1 * tau)
    return a, a * tau * phi1_bar, a * tau * eta1_bar


@dataclass(frozen=True)
class AugmentedConstants:
    """One-step certificate constants on the augmented state space."""

    case: CaseKind
    gamma: float
    phi: float
    eta: float
    kappa: float
    mu: float
    beta: float
    alpha1: Optional[float] = None
    alpha2: Optional[float] = None
    # parameters needed to reproduce varpi(theta)
    gamma1: float = 0.0
    gamma2: float = 1.0
    tau: float = 0.0
    eps2: int = 0
    # both operands of the gamma max, for report transparency
    gamma_flow_branch: float = 0.0
    gamma_jump_branch: float = 0.0

    def varpi(self, theta: int) -> float:
        """Counter weight of the augmented certificate at counter theta."""
        if theta < 0 or theta > self.eps2:
            raise InputError(f"theta must lie in [0, {self.eps2}], got {theta}")
        if self.case is CaseKind.CONTRACTIVE_BOTH:
            return 1.0
        if self.case is CaseKind.EXPANSIVE_JUMP:
            return math.exp(self.gamma1 * self.tau * self.alpha1 * theta)
        return self.gamma2 ** (theta / self.alpha2)

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "gamma": self.gamma, "phi": self.phi, "eta": self.eta,
            "kappa": self.kappa, "mu": self.mu, "beta": self.beta,
            "alpha1": self.alpha1, "alpha2": self.alpha2,
            "gamma1": self.gamma1, "gamma2": self.gamma2,
            "tau": self.tau, "eps2": self.eps2,
            "gamma_flow_branch": self.gamma_flow_branch,
            "gamma_jump_branch": self.gamma_jump_branch,
        }

    @classmethod
    def from_dict(cls, d) -> "AugmentedConstants":
        d = dict(d)
        d["case"] = CaseKind(d["case"])
        return cls(**d)


def _select_case(gamma1: float, gamma2: float) -> CaseKind:
    if gamma1 > 0 and 0 < gamma2 < 1:
        return CaseKind.CONTRACTIVE_BOTH
    if gamma1 > 0 and gamma2 >= 1:
        return CaseKind.EXPANSIVE_JUMP
    if gamma1 <= 0 and 0 < gamma2 < 1:
        return CaseKind.EXPANSIVE_FLOW
    raise UnsupportedCaseError(
        f"gamma1 = {gamma1} <= 0 with gamma2 = {gamma2} >= 1: "
        "no augmented bound exists"
    )


def build_acsbc(cert: CertificateBundle, tau: float, eps1: int, eps2: int,
                alpha1: float = 0.1, alpha2: Optional[float] = None,
                w_sup: float = 0.0) -> AugmentedConstants:
    """Construct augmented one-step constants from a certified bundle.

    w_sup is the supremum of the disturbance norm over its box (enters
    the eta offset through the flow-period bound).  alpha2 defaults to
    eps2 + 1.  Raises if the jump-spacing condition fails, if the case
    is unsupported, or if the resulting contraction factor is not inside
    (0, 1).
    """
    g1, g2 = cert.gamma1, cert.gamma2
    p1, p2 = cert.phi1_bar, cert.phi2_bar
    e1, e2 = cert.eta1_bar, cert.eta2_bar
    if alpha2 is None:
        alpha2 = float(eps2 + 1)
    if not check_jump_spacing(g1, g2, tau, eps1, eps2):
        raise ConstructionError(
            "jump spacing condition fails: ln(gamma2) - gamma1*tau*theta "
            "must be < 0 on the admissible counter range"
        )
    case = _select_case(g1, g2)
    a, b, c = flow_bound_coefficients(g1, tau, p1, e1)

    if case is CaseKind.CONTRACTIVE_BOTH:
        gamma_flow, gamma_jump = a, g2
        phi = max(b, p2)
        eta = max(b * w_sup ** 2 + c, e2)
        varpi_min = 1.0
    elif case is CaseKind.EXPANSIVE_JUMP:
        if not 0 < alpha1 < 1:
            raise InputError(f"alpha1 must be in (0, 1), got {alpha1}")
        if math.log(g2) - g1 * tau * alpha1 * eps1 >= 0:
            raise ConstructionError(
                f"alpha1 = {alpha1} too small: ln(gamma2) - "
                "gamma1*tau*alpha1*eps1 must be < 0"
            )
        gamma_flow = math.exp(-g1 * tau * (1.0 - alpha1))
        gamma_jump = math.exp(-g1 * tau * alpha1 * eps1) * g2
        grow = math.exp(g1 * tau * alpha1 * eps2)
        phi = max(grow * b, p2)
        eta = max(grow * (b * w_sup ** 2 + c), e2)
        varpi_min = 1.0  # varpi increasing from varpi(0) = 1
    else:  # EXPANSIVE_FLOW
        if not alpha2 > eps2:
            raise InputError(f"alpha2 must exceed eps2 = {eps2}, got {alpha2}")
        shrink = g2 ** (1.0 / alpha2)
        gamma_flow = a * shrink
        gamma_jump = g2 ** ((alpha2 - eps2) / alpha2)
        phi = max(shrink * b, p2)
        eta = max(shrink * (b * w_sup ** 2 + c), e2)
        varpi_min = g2 ** (eps2 / alpha2)  # varpi decreasing in theta

    gamma = max(gamma_flow, gamma_jump)
    if not 0 < gamma < 1:
        branch = "flow" if gamma_flow >= gamma_jump else "jump"
        raise ConstructionError(
            f"augmented contraction factor {gamma} not in (0, 1); "
            f"binding branch: {branch}"
        )

    # the initial set fixes theta = 0 (varpi = 1); the state-space and
    # unsafe-set conditions must hold for every counter value, so they
    # take the least varpi over theta in {0, ..., eps2}
    return AugmentedConstants(
        case=case, gamma=gamma, phi=phi, eta=eta,
        kappa=varpi_min * cert.kappa_bar,
        mu=cert.mu_bar,
        beta=varpi_min * cert.beta_bar,
        alpha1=alpha1 if case is CaseKind.EXPANSIVE_JUMP else None,
        alpha2=alpha2 if case is CaseKind.EXPANSIVE_FLOW else None,
        gamma1=g1, gamma2=g2, tau=tau, eps2=eps2,
        gamma_flow_branch=gamma_flow, gamma_jump_branch=gamma_jump,
    )


def augment_subsystem(sub, cert: CertificateBundle, alpha1: float = 0.1,
                      alpha2: Optional[float] = None) -> AugmentedConstants:
    """Convenience wrapper pulling tau, the counter window, and the
    disturbance sup-norm from the subsystem model."""
    w_sup = math.sqrt(sub.W.sup_norm_sq()) if sub.dist_dim else 0.0
    return build_acsbc(cert, sub.tau, sub.eps1, sub.eps2,
                       alpha1=alpha1, alpha2=alpha2, w_sup=w_sup)
