"""Per-subsystem barrier certificate conditions.

A candidate certificate for one subsystem is a nonnegative polynomial B
of the state together with flow/jump controllers and nine scalars.  The
five conditions checked (each as box nonnegativity of a slack
polynomial) are:

    lower_quadratic   B - kappa_bar * |x|^2  >= 0           on X
    initial_level     mu_bar - B             >= 0           on X0
    unsafe_level      B - beta_bar           >= 0           on Xu
    flow_decay        -L[B] - gamma1 * B + phi1_bar * |w|^2
                                            + eta1_bar >= 0 on X x W
    jump_decay        -E[B(f2)] + gamma2 * B + phi2_bar * |w|^2
                                            + eta2_bar >= 0 on X x W

where L is the jump-diffusion generator (drift gradient term, diffusion
Hessian trace, Poisson reset differences) and E[.] integrates the jump
noise by moment substitution.  Controller ranges are certified against
the input box as two extra conditions per controller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import certify
from .certify import CertResult, Verdict, global_extremum, prove_nonneg
from .errors import CalibrationError, CapabilityError, InputError
from .model import SubsystemModel
from .poly import Box, Polynomial

__all__ = [
    "CertificateBundle",
    "ConditionResult",
    "ConditionReport",
    "CalibrationConfig",
    "CONDITION_NAMES",
    "generator",
    "expected_jump",
    "check_cbc",
    "calibrate",
]

log = logging.getLogger(__name__)

CONDITION_NAMES = (
    "lower_quadratic",
    "initial_level",
    "unsafe_level",
    "flow_decay",
    "jump_decay",
)

CONSTANT_NAMES = (
    "kappa_bar", "mu_bar", "beta_bar",
    "gamma1", "gamma2",
    "phi1_bar", "phi2_bar",
    "eta1_bar", "eta2_bar",
)


@dataclass(frozen=True)
class CertificateBundle:
    """Candidate certificate: barrier polynomial, controllers, constants."""

    B: Polynomial
    nu_flow: tuple
    nu_jump: tuple
    kappa_bar: float = 0.0
    mu_bar: float = 0.0
    beta_bar: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 1.0
    phi1_bar: float = 0.0
    phi2_bar: float = 0.0
    eta1_bar: float = 0.0
    eta2_bar: float = 0.0

    def constants(self) -> dict:
        return {k: getattr(self, k) for k in CONSTANT_NAMES}

    def with_constants(self, **kw) -> "CertificateBundle":
        unknown = set(kw) - set(CONSTANT_NAMES)
        if unknown:
            raise InputError(f"unknown constants {sorted(unknown)}")
        return replace(self, **kw)

    def check_signs(self) -> list:
        """Sign constraints the constant tuple must satisfy."""
        bad = []
        if not self.kappa_bar > 0:
            bad.append("kappa_bar must be > 0")
        if not self.gamma2 > 0:
            bad.append("gamma2 must be > 0")
        for k in ("mu_bar", "beta_bar", "phi1_bar", "phi2_bar", "eta1_bar", "eta2_bar"):
            if getattr(self, k) < 0:
                bad.append(f"{k} must be >= 0")
        return bad

    def to_dict(self) -> dict:
        return {
            "B": self.B.to_dict(),
            "nu_flow": [p.to_dict() for p in self.nu_flow],
            "nu_jump": [p.to_dict() for p in self.nu_jump],
            "constants": self.constants(),
        }

    @classmethod
    def from_dict(cls, data) -> "CertificateBundle":
        B = Polynomial.from_dict(data["B"])
        nu_flow = tuple(Polynomial.from_dict(d) for d in data["nu_flow"])
        nu_jump = tuple(Polynomial.from_dict(d) for d in data["nu_jump"])
        consts = data.get("constants") or {}
        return cls(B=B, nu_flow=nu_flow, nu_jump=nu_jump,
                   **{k: float(consts[k]) for k in consts})


@dataclass(frozen=True)
class ConditionResult:
    name: str
    verdict: Verdict
    margin: float
    witness: Optional[tuple] = None
    boxes_explored: int = 0

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED


@dataclass(frozen=True)
class ConditionReport:
    conditions: tuple

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_certified(self) -> bool:
        return all(c.certified for c in self.conditions)

    def falsified(self) -> list:
        return [c for c in self.conditions if c.verdict is Verdict.FALSIFIED]

    def unknown(self) -> list:
        return [c for c in self.conditions if c.verdict is Verdict.UNKNOWN]

    def to_dict(self) -> dict:
        return {
            c.name: {
                "verdict": c.verdict.value,
                "margin": _json_safe(c.margin),
                "witness": list(c.witness) if c.witness is not None else None,
            }
            for c in self.conditions
        }


# -- generator and jump expectation -------------------------------------


def _inline_controller(polys: Sequence[Polynomial], sub: SubsystemModel,
                       controller: Sequence[Polynomial], out_vars) -> list:
    """Substitute v_j <- controller_j(x) and re-express over out_vars."""
    if len(controller) != sub.input_dim:
        raise InputError(
            f"controller has {len(controller)} components, expected {sub.input_dim}"
        )
    bindings = {}
    for j, nu in enumerate(controller):
        extra = set(nu.variables) - set(sub.x_vars())
        if extra:
            raise InputError(f"controller may only depend on state, uses {sorted(extra)}")
        bindings[f"v{j}"] = nu.with_variables(out_vars)
    return (
        [p.with_variables(out_vars).subst(bindings) for p in polys]
        if bindings else [p.with_variables(out_vars) for p in polys]
    )


def generator(sub: SubsystemModel, B: Polynomial,
              nu_flow: Sequence[Polynomial]) -> Polynomial:
    """Infinitesimal generator of the flow applied to B, with the flow
    controller inlined: gradient drift term + (1/2) Tr(sigma sigma^T H)
    + sum_j lambda_j (B(x + rho e_j) - B).  Result lives over (x, w)."""
    xw = sub.xw_vars()
    x_vars = sub.x_vars()
    if set(B.variables) - set(x_vars):
        raise InputError(f"B must be a polynomial in {x_vars}, got {B.variables}")
    Bx = B.with_variables(x_vars)

    f1 = _inline_controller(sub.f1, sub, nu_flow, xw)
    acc = Polynomial.zero(xw)
    for k, xk in enumerate(x_vars):
        acc = acc + Bx.diff(xk).with_variables(xw) * f1[k]

    # (1/2) Tr(sigma sigma^T Hessian)
    n, b = sub.state_dim, sub.brownian_dim
    for k in range(n):
        for m_ in range(n):
            a_km = Polynomial.zero(x_vars)
            for l in range(b):
                a_km = a_km + sub.sigma[k][l].with_variables(x_vars) * \
                    sub.sigma[m_][l].with_variables(x_vars)
            if a_km.is_zero():
                continue
            h = Bx.diff(x_vars[k]).diff(x_vars[m_])
            acc = acc + 0.5 * (a_km * h).with_variables(xw)

    # Poisson reset differences
    for j, lam in enumerate(sub.rates):
        bindings = {}
        shifted = False
        for k, xk in enumerate(x_vars):
            r_kj = sub.rho[k][j].with_variables(x_vars)
            if not r_kj.is_zero():
                shifted = True
            bindings[xk] = Polynomial.variable(xk, x_vars) + r_kj
        if not shifted:
            continue
        acc = acc + lam * (Bx.subst(bindings) - Bx).with_variables(xw)
    return acc


def moment_reduce(p: Polynomial, z_vars: Sequence[str], moments: Sequence[float]) -> Polynomial:
    """Replace each monomial z^k by the k-th raw moment (components are
    independent, so products factor)."""
    z_idx = [p.variables.index(z) for z in z_vars if z in p.variables]
    if not z_idx:
        return p
    keep = tuple(v for i, v in enumerate(p.variables) if i not in z_idx)
    terms = {}
    for exps, c in p.sorted_terms():
        w = c
        for i in z_idx:
            k = exps[i]
            if k >= len(moments):
                raise CapabilityError(
                    f"noise moments cover degree {len(moments) - 1}, "
                    f"need degree {k}"
                )
            w *= moments[k]
        if w == 0.0:
            continue
        key = tuple(e for i, e in enumerate(exps) if i not in z_idx)
        terms[key] = terms.get(key, 0.0) + w
    return Polynomial(keep, terms)


def expected_jump(sub: SubsystemModel, B: Polynomial,
                  nu_jump: Sequence[Polynomial]) -> Polynomial:
    """E[B(f2(x, v, w, z))] with the jump controller inlined and the jump
    noise integrated out by moment substitution.  Result over (x, w)."""
    x_vars = sub.x_vars()
    if set(B.variables) - set(x_vars):
        raise InputError(f"B must be a polynomial in {x_vars}, got {B.variables}")
    xwz = sub.xw_vars() + sub.z_vars()
    f2 = _inline_controller(sub.f2, sub, nu_jump, xwz)
    composed = B.with_variables(x_vars).subst(
        {xk: f2[k] for k, xk in enumerate(x_vars)}
    )
    reduced = moment_reduce(composed, sub.z_vars(), sub.noise_moments)
    return reduced.with_variables(sub.xw_vars())


def norm_sq(variables: Sequence[str], over: Sequence[str]) -> Polynomial:
    """Squared Euclidean norm of a variable block as a polynomial over a
    wider tuple."""
    acc = Polynomial.zero(tuple(over))
    for v in variables:
        acc = acc + Polynomial.variable(v, tuple(over)) ** 2
    return acc


# -- condition assembly --------------------------------------------------


def _slack_polynomials(sub: SubsystemModel, cert: CertificateBundle) -> dict:
    x_vars = sub.x_vars()
    xw = sub.xw_vars()
    Bx = cert.B.with_variables(x_vars)
    x_sq = norm_sq(x_vars, x_vars)
    w_sq = norm_sq(sub.w_vars(), xw)
    gen = generator(sub, cert.B, cert.nu_flow)
    ejump = expected_jump(sub, cert.B, cert.nu_jump)
    Bxw = Bx.with_variables(xw)
    return {
        "lower_quadratic": (Bx - cert.kappa_bar * x_sq, sub.X),
        "initial_level": (cert.mu_bar - Bx, sub.X0),
        "unsafe_level": (Bx - cert.beta_bar, sub.Xu),
        "flow_decay": (
            -gen - cert.gamma1 * Bxw + cert.phi1_bar * w_sq + cert.eta1_bar,
            sub.xw_box(),
        ),
        "jump_decay": (
            -ejump + cert.gamma2 * Bxw + cert.phi2_bar * w_sq + cert.eta2_bar,
            sub.xw_box(),
        ),
    }


def _range_conditions(sub: SubsystemModel, cert: CertificateBundle) -> dict:
    out = {}
    for tag, ctrl in (("flow", cert.nu_flow), ("jump", cert.nu_jump)):
        for j, nu in enumerate(ctrl):
            nu_x = nu.with_variables(sub.x_vars())
            lo, hi = sub.U.lower[j], sub.U.upper[j]
            out[f"{tag}_input_range[{j}]"] = (
                (nu_x - lo, sub.X),
                (Polynomial.constant(hi, sub.x_vars()) - nu_x, sub.X),
            )
    return out


def _check_one(name, slack, box, tol, max_depth) -> ConditionResult:
    try:
        res = prove_nonneg(slack, box, tol=tol, max_depth=max_depth)
    except CapabilityError:
        return ConditionResult(name, Verdict.UNKNOWN, float("-inf"))
    return ConditionResult(
        name, res.verdict, res.lower_bound, res.witness, res.boxes_explored
    )


def _json_safe(x):
    import math as _m
    return None if x is None or not _m.isfinite(x) else x


def check_cbc(sub: SubsystemModel, cert: CertificateBundle, tol: float = 1e-6,
              max_depth: int = 30) -> ConditionReport:
    """Certify the five certificate conditions plus controller ranges.

    Conditions are reported in a fixed order regardless of how they were
    evaluated; each carries a certified margin (lower bound of its slack
    polynomial over its region) or a falsifying witness.
    """
    results = []
    for name, (slack, box) in _slack_polynomials(sub, cert).items():
        results.append(_check_one(name, slack, box, tol, max_depth))
    for name, pair in _range_conditions(sub, cert).items():
        sub_res = [_check_one(name, slack, box, tol, max_depth) for slack, box in pair]
        worst = min(sub_res, key=lambda r: (r.certified, r.margin))
        results.append(ConditionResult(
            name, worst.verdict, worst.margin, worst.witness,
            sum(r.boxes_explored for r in sub_res),
        ))
    order = {n: i for i, n in enumerate(CONDITION_NAMES)}
    results.sort(key=lambda r: (order.get(r.name, len(order)), r.name))
    return ConditionReport(tuple(results))


# -- calibration ---------------------------------------------------------


@dataclass(frozen=True)
class CalibrationConfig:
    """Search configuration for constant calibration.

    tol is the absolute resolution per constant; feasibility_tol is the
    slack allowed by the nonnegativity oracle; the caps bound the search
    boxes for each scalar.
    """

    tol: float = 1e-4
    feasibility_tol: float = 1e-6
    max_depth: int = 30
    max_iters: int = 60
    gamma1_range: tuple = (-4.0, 4.0)
    gamma2_range: tuple = (1e-4, 4.0)
    phi1_max: float = 1e-3
    eta1_max: float = 0.05
    phi2_max: float = 1e-3
    eta2_max: float = 0.05
    kappa_max: float = 1e6


def _bisect_max(oracle, lo, hi, tol, max_iters):
    """Largest feasible value in [lo, hi] for a monotone oracle
    (feasible below, infeasible above).  Returns a value that the oracle
    has actually certified."""
    if not oracle(lo):
        return None
    if oracle(hi):
        return hi
    feasible = lo
    for _ in range(max_iters):
        if hi - feasible <= tol:
            break
        mid = 0.5 * (feasible + hi)
        if oracle(mid):
            feasible = mid
        else:
            hi = mid
    return feasible


def _bisect_min(oracle, lo, hi, tol, max_iters):
    """Smallest feasible value in [lo, hi] for a monotone oracle
    (infeasible below, feasible above)."""
    if not oracle(hi):
        return None
    if oracle(lo):
        return lo
    feasible = hi
    for _ in range(max_iters):
        if feasible - lo <= tol:
            break
        mid = 0.5 * (lo + feasible)
        if oracle(mid):
            feasible = mid
        else:
            lo = mid
    return feasible


def calibrate(sub: SubsystemModel, B: Polynomial, nu_flow: Sequence[Polynomial],
              nu_jump: Sequence[Polynomial],
              cfg: CalibrationConfig = CalibrationConfig()) -> CertificateBundle:
    """Compute the tightest admissible constant tuple for fixed B and
    controllers.

    kappa_bar is the largest kappa with B - kappa |x|^2 certified on X
    (bisection, no division by |x|^2); mu_bar / beta_bar are certified
    extrema of B on X0 / Xu; the decay constants are found
    lexicographically: gamma1 maximized (slack terms at their caps),
    then eta1_bar minimized, then phi1_bar; gamma2 minimized, then
    eta2_bar, then phi2_bar.  Every returned value is one the
    nonnegativity oracle certified.
    """
    x_vars = sub.x_vars()
    xw = sub.xw_vars()
    Bx = B.with_variables(x_vars)
    Bxw = Bx.with_variables(xw)
    x_sq = norm_sq(x_vars, x_vars)
    w_sq = norm_sq(sub.w_vars(), xw)
    xw_box = sub.xw_box()
    ftol = cfg.feasibility_tol

    def certified(slack, box):
        res = prove_nonneg(slack, box, tol=ftol, max_depth=cfg.max_depth)
        return res.verdict is Verdict.CERTIFIED

    # kappa_bar
    kappa = _bisect_max(
        lambda k: certified(Bx - k * x_sq, sub.X),
        0.0, cfg.kappa_max, cfg.tol, cfg.max_iters,
    )
    if kappa is None or kappa <= 0.0:
        raise CalibrationError(
            "lower_quadratic",
            "B is not certifiably above kappa |x|^2 for any kappa > 0 on X",
        )
    log.debug("calibrated kappa_bar = %g", kappa)

    # mu_bar: certified upper bound of B on X0 (safe side: >= true max)
    mu, _ = global_extremum(Bx, sub.X0, "max", tol=cfg.tol)
    # beta_bar: certified lower bound of B on Xu (safe side: <= true min)
    beta, _ = global_extremum(Bx, sub.Xu, "min", tol=cfg.tol)
    if beta < 0:
        raise CalibrationError("unsafe_level", "B has no positive level on Xu")
    log.debug("calibrated mu_bar = %g, beta_bar = %g", mu, beta)

    gen = generator(sub, B, nu_flow)
    ejump = expected_jump(sub, B, nu_jump)

    def flow_slack(g1, p1, e1):
        return -gen - g1 * Bxw + p1 * w_sq + e1

    def jump_slack(g2, p2, e2):
        return -ejump + g2 * Bxw + p2 * w_sq + e2

    # gamma1: larger is stronger flow decay; slack decreasing in gamma1
    g1 = _bisect_max(
        lambda g: certified(flow_slack(g, cfg.phi1_max, cfg.eta1_max), xw_box),
        cfg.gamma1_range[0], cfg.gamma1_range[1], cfg.tol, cfg.max_iters,
    )
    if g1 is None:
        raise CalibrationError("flow_decay", "flow decay infeasible at search bounds")
    e1 = _bisect_min(
        lambda e: certified(flow_slack(g1, cfg.phi1_max, e), xw_box),
        0.0, cfg.eta1_max, cfg.tol, cfg.max_iters,
    )
    if e1 is None:
        raise CalibrationError("flow_decay", "eta1 infeasible after fixing gamma1")
    p1 = _bisect_min(
        lambda p: certified(flow_slack(g1, p, e1), xw_box),
        0.0, cfg.phi1_max, cfg.tol * cfg.phi1_max, cfg.max_iters,
    )
    if p1 is None:
        p1 = cfg.phi1_max
    log.debug("calibrated gamma1 = %g, eta1_bar = %g, phi1_bar = %g", g1, e1, p1)

    # gamma2: smaller is stronger jump decay; slack increasing in gamma2
    g2 = _bisect_min(
        lambda g: certified(jump_slack(g, cfg.phi2_max, cfg.eta2_max), xw_box),
        cfg.gamma2_range[0], cfg.gamma2_range[1], cfg.tol, cfg.max_iters,
    )
    if g2 is None:
        raise CalibrationError("jump_decay", "jump decay infeasible at search bounds")
    e2 = _bisect_min(
        lambda e: certified(jump_slack(g2, cfg.phi2_max, e), xw_box),
        0.0, cfg.eta2_max, cfg.tol, cfg.max_iters,
    )
    if e2 is None:
        raise CalibrationError("jump_decay", "eta2 infeasible after fixing gamma2")
    p2 = _bisect_min(
        lambda p: certified(jump_slack(g2, p, e2), xw_box),
        0.0, cfg.phi2_max, cfg.tol * cfg.phi2_max, cfg.max_iters,
    )
    if p2 is None:
        p2 = cfg.phi2_max
    log.debug("calibrated gamma2 = %g, eta2_bar = %g, phi2_bar = %g", g2, e2, p2)

    return CertificateBundle(
        B=Bx, nu_flow=tuple(nu_flow), nu_jump=tuple(nu_jump),
        kappa_bar=kappa, mu_bar=mu, beta_bar=beta,
        gamma1=g1, gamma2=g2,
        phi1_bar=p1, phi2_bar=p2,
        eta1_bar=e1, eta2_bar=e2,
    )
