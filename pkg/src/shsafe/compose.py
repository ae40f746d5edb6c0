"""Small-gain composition of per-node augmented certificates.

Each node i contributes a contraction margin theta_i = 1 - gamma_i and
cross gains psi_ij = phi_i / kappa_j on every topology edge (state of j
feeding the disturbance of i).  For a positive weight vector xi the
network certificate sum_i xi_i B_i contracts iff every component of the
row vector xi^T (-Theta + Psi) is negative; the components define
xi_i Gamma_i, and the composed contraction factor is 1 + max_i Gamma_i.

Composed level constants are the xi-weighted sums of the node level
constants.  Scaling xi by a positive constant rescales (mu, beta, eta)
together and leaves every downstream safety bound unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .augment import AugmentedConstants
from .errors import FeasibilityError, InputError

__all__ = [
    "GainNetwork",
    "SmallGainResult",
    "ComposedCertificate",
    "build_gain_matrices",
    "build_gain_network",
    "check_small_gain",
    "find_weights",
    "compose_acbc",
]


def build_gain_matrices(nodes: Sequence[AugmentedConstants],
                        neighbors: Sequence[Sequence[int]]):
    """Return (theta, psi): the contraction-margin vector and the sparse
    cross-gain matrix with psi[i, j] = phi_i / kappa_j exactly on edges
    j -> i."""
    n = len(nodes)
    if len(neighbors) != n:
        raise InputError("neighbors list length must match node count")
    theta = np.empty(n)
    for i, node in enumerate(nodes):
        if not 0 < node.gamma < 1:
            raise InputError(f"node {i}: gamma must be in (0, 1), got {node.gamma}")
        if not node.kappa > 0:
            raise InputError(f"node {i}: kappa must be > 0, got {node.kappa}")
        theta[i] = 1.0 - node.gamma
    rows, cols, vals = [], [], []
    for i, js in enumerate(neighbors):
        for j in js:
            if j == i:
                raise InputError(f"node {i}: self-edge not allowed")
            rows.append(i)
            cols.append(j)
            vals.append(nodes[i].phi / nodes[j].kappa)
    psi = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return theta, psi


@dataclass(frozen=True)
class GainNetwork:
    """Gain data plus a chosen weight vector."""

    theta: np.ndarray
    psi: sp.csr_matrix
    xi: np.ndarray
    nodes: tuple

    def __post_init__(self):
        if np.any(self.xi <= 0):
            raise InputError("all weights xi must be positive")
        n = self.theta.size
        if self.xi.size != n or self.psi.shape != (n, n):
            raise InputError("inconsistent gain network dimensions")

    def residual(self) -> np.ndarray:
        """Components of xi^T (-Theta + Psi); entry i equals xi_i Gamma_i."""
        return -(self.xi * self.theta) + self.psi.T.dot(self.xi)

    @property
    def Gamma(self) -> np.ndarray:
        return self.residual() / self.xi


def build_gain_network(nodes: Sequence[AugmentedConstants],
                       neighbors: Sequence[Sequence[int]],
                       xi: Optional[np.ndarray] = None) -> GainNetwork:
    theta, psi = build_gain_matrices(nodes, neighbors)
    if xi is None:
        xi = np.full(theta.size, 1.0 / theta.size)
    return GainNetwork(theta=theta, psi=psi, xi=np.asarray(xi, dtype=float),
                       nodes=tuple(nodes))


@dataclass(frozen=True)
class SmallGainResult:
    Gamma: np.ndarray
    pass_contraction: bool   # every component of xi^T(-Theta+Psi) < 0
    pass_separation: bool    # xi-weighted beta sum exceeds mu sum

    @property
    def ok(self) -> bool:
        return self.pass_contraction and self.pass_separation


def check_small_gain(gn: GainNetwork) -> SmallGainResult:
    res = gn.residual()
    mu = float(np.dot(gn.xi, [n.mu for n in gn.nodes]))
    beta = float(np.dot(gn.xi, [n.beta for n in gn.nodes]))
    return SmallGainResult(
        Gamma=res / gn.xi,
        pass_contraction=bool(np.all(res < 0.0)),
        pass_separation=beta > mu,
    )


def find_weights(theta: np.ndarray, psi: sp.csr_matrix,
                 strategy: str = "uniform", step: float = 0.5,
                 max_iters: int = 1000) -> np.ndarray:
    """Search for a positive weight vector satisfying the contraction
    condition.

    "uniform" returns xi = 1/N (positive scaling cannot change the signs
    for symmetric problems, so uniform either works immediately or the
    iterative search is needed).  "iterative" multiplicatively boosts the
    weights of violated components and renormalizes, returning the first
    passing vector; raises FeasibilityError with the best residual when
    the budget runs out.
    """
    n = theta.size
    xi = np.full(n, 1.0 / n)
    if strategy == "uniform":
        return xi
    if strategy != "iterative":
        raise InputError(f"unknown strategy {strategy!r}")
    best = np.inf
    for _ in range(max_iters):
        res = -(xi * theta) + psi.T.dot(xi)
        worst = float(res.max())
        if worst < 0.0:
            return xi
        best = min(best, worst)
        scale = np.maximum(xi * theta, 1e-300)
        xi = xi * (1.0 + step * np.maximum(res, 0.0) / scale)
        xi = xi / xi.sum()
    raise FeasibilityError("no feasible weight vector found", best)


@dataclass(frozen=True)
class ComposedCertificate:
    mu: float
    beta: float
    eta: float
    gamma: float
    Gamma: np.ndarray
    xi: np.ndarray
    nodes: tuple

    def to_dict(self) -> dict:
        return {
            "mu": self.mu, "beta": self.beta, "eta": self.eta,
            "gamma": self.gamma,
        }


def compose_acbc(gn: GainNetwork) -> ComposedCertificate:
    """Compose the network certificate constants; both small-gain checks
    must pass first."""
    sg = check_small_gain(gn)
    if not sg.pass_contraction:
        raise InputError(
            "contraction condition fails: xi^T(-Theta+Psi) has a "
            f"nonnegative component (max {float(np.max(sg.Gamma * gn.xi)):.3e})"
        )
    if not sg.pass_separation:
        raise InputError("level separation fails: weighted beta <= weighted mu")
    mu = float(np.dot(gn.xi, [n.mu for n in gn.nodes]))
    beta = float(np.dot(gn.xi, [n.beta for n in gn.nodes]))
    eta = float(np.dot(gn.xi, [n.eta for n in gn.nodes]))
    Gamma_max = float(np.max(sg.Gamma))
    gamma = 1.0 + Gamma_max
    if not 0.0 < gamma < 1.0:
        raise InputError(f"composed gamma = {gamma} not in (0, 1)")
    return ComposedCertificate(
        mu=mu, beta=beta, eta=eta, gamma=gamma,
        Gamma=sg.Gamma, xi=gn.xi, nodes=gn.nodes,
    )
