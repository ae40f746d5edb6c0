"""Certified polynomial range bounds over boxes.

The engine converts a polynomial to its Bernstein coefficients on a box
(after affine rescaling to the unit cube): the coefficient extremes
enclose the range, exactly at box vertices and degree one, and the
enclosure tightens quadratically under bisection.  Branch and bound on
that enclosure yields sound nonnegativity certificates and certified
global extrema without any external solver.

Floating-point soundness is handled by a uniform additive margin scaled
to the largest intermediate coefficient magnitude; the margin used is
recorded in every result.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import CapabilityError, ExtremumError, InputError
from .poly import Box, Polynomial

__all__ = [
    "Verdict",
    "CertResult",
    "bernstein_enclosure",
    "prove_nonneg",
    "global_extremum",
    "DEGREE_CAP",
    "EPS_REL",
]

DEGREE_CAP = 16
EPS_REL = 1e-9


class Verdict(Enum):
    CERTIFIED = "Certified"
    FALSIFIED = "Falsified"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class CertResult:
    verdict: Verdict
    lower_bound: float
    upper_bound: float
    boxes_explored: int
    max_depth_reached: bool
    witness: Optional[tuple] = None
    slack: float = 0.0
    fp_margin: float = 0.0

    @property
    def certified(self) -> bool:
        return self.verdict is Verdict.CERTIFIED


@lru_cache(maxsize=64)
def _bernstein_matrix(d: int) -> np.ndarray:
    """Power-to-Bernstein change of basis on [0,1]: b_j = sum_{i<=j} C(j,i)/C(d,i) a_i."""
    m = np.zeros((d + 1, d + 1))
    for j in range(d + 1):
        for i in range(j + 1):
            m[i, j] = math.comb(j, i) / math.comb(d, i)
    return m


@lru_cache(maxsize=64)
def _pascal(d: int) -> np.ndarray:
    m = np.zeros((d + 1, d + 1))
    for i in range(d + 1):
        for j in range(i + 1):
            m[i, j] = math.comb(i, j)
    return m


class _BoxProver:
    """Holds the dense coefficient tensor of one polynomial and produces
    Bernstein enclosures for arbitrary sub-boxes of its variable space."""

    def __init__(self, p: Polynomial, box: Box, eps_rel: float = EPS_REL,
                 degree_cap: int = DEGREE_CAP):
        if box.variables != p.variables:
            raise InputError(
                f"box variables {box.variables} do not match polynomial "
                f"variables {p.variables}"
            )
        if p.degree() > degree_cap:
            raise CapabilityError(
                f"total degree {p.degree()} exceeds cap {degree_cap}"
            )
        self.poly = p
        self.nvars = len(p.variables)
        self.eps_rel = eps_rel
        self.degrees = tuple(p.degree_in(v) for v in p.variables)
        shape = tuple(d + 1 for d in self.degrees)
        base = np.zeros(shape if shape else (1,))
        if shape:
            for exps, c in p.sorted_terms():
                base[exps] = c
        else:
            base[0] = p.evaluate(())
        self.base = base
        self._bern = [_bernstein_matrix(d) for d in self.degrees]
        self._pasc = [_pascal(d) for d in self.degrees]

    def enclosure(self, lower: np.ndarray, upper: np.ndarray):
        """Return (lo, hi, margin): lo - margin and hi + margin bound the
        range of the polynomial on the given sub-box."""
        t = self.base
        absmax = float(np.max(np.abs(t))) if t.size else 0.0
        for axis in range(self.nvars):
            d = self.degrees[axis]
            lo = lower[axis]
            w = upper[axis] - lower[axis]
            # x = lo + w*u followed by the Bernstein change of basis;
            # S[i, j] = C(i, j) * lo^(i-j) * w^j maps power coeffs in x
            # to power coeffs in u.
            pasc = self._pasc[axis]
            lo_pows = lo ** np.arange(d + 1)
            w_pows = w ** np.arange(d + 1)
            s = np.zeros((d + 1, d + 1))
            for i in range(d + 1):
                s[i, : i + 1] = pasc[i, : i + 1] * lo_pows[: i + 1][::-1] * w_pows[: i + 1]
            a = s @ self._bern[axis]
            # contract current axis 0, appending the transformed axis last;
            # after nvars rounds the axes are back in original order
            t = np.tensordot(t, a, axes=([0], [0]))
            m = float(np.max(np.abs(t))) if t.size else 0.0
            if m > absmax:
                absmax = m
        margin = self.eps_rel * absmax
        return float(t.min()), float(t.max()), margin

    def longest_axis(self, lower: np.ndarray, upper: np.ndarray,
                     scale: np.ndarray) -> int:
        """Longest edge relative to the root box widths; ties break to the
        lowest variable index."""
        rel = (upper - lower) / scale
        return int(np.argmax(rel))


def _sample_points(lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    mid = (lower + upper) / 2.0
    n = lower.size
    pts = np.empty((1 + (1 << n), n))
    pts[0] = mid
    for i in range(1 << n):
        for k in range(n):
            pts[1 + i, k] = upper[k] if (i >> k) & 1 else lower[k]
    return pts


def bernstein_enclosure(p: Polynomial, box: Box, *, eps_rel: float = EPS_REL,
                        degree_cap: int = DEGREE_CAP) -> tuple:
    """Certified range enclosure (lo, hi) of p over box.

    lo <= min p <= max p <= hi, with the floating-point margin already
    folded in.  Exact (up to the margin) for degree <= 1 and at vertices.
    """
    prover = _BoxProver(p, box, eps_rel=eps_rel, degree_cap=degree_cap)
    lo, hi, margin = prover.enclosure(np.array(box.lower), np.array(box.upper))
    return lo - margin, hi + margin


def prove_nonneg(p: Polynomial, box: Box, tol: float = 1e-9,
                 max_depth: int = 30, *, eps_rel: float = EPS_REL,
                 degree_cap: int = DEGREE_CAP,
                 max_boxes: int = 500_000) -> CertResult:
    """Decide p >= 0 on box by Bernstein branch and bound.

    A leaf certifies when its enclosure lower bound is >= -tol (tol is an
    explicit slack recorded in the result).  Falsification requires an
    actual point where p evaluates below the floating-point margin.
    Subdivision always bisects the longest (relative) edge, lowest axis
    on ties, so results are deterministic.
    """
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")
    if max_depth <= 0:
        raise InputError(f"max_depth must be positive, got {max_depth}")
    prover = _BoxProver(p, box, eps_rel=eps_rel, degree_cap=degree_cap)
    root_lo = np.array(box.lower)
    root_hi = np.array(box.upper)
    scale = np.maximum(root_hi - root_lo, 1e-300)

    _, _, root_margin = prover.enclosure(root_lo, root_hi)
    fals_threshold = -max(root_margin, eps_rel)

    generation = [(root_lo, root_hi)]
    explored = 0
    certified_min = math.inf
    best_sample = math.inf
    depth = 0
    while generation:
        nxt = []
        pending_min = math.inf
        budget_hit = depth >= max_depth or explored >= max_boxes
        for lo, hi in generation:
            explored += 1
            enc_lo, _, margin = prover.enclosure(lo, hi)
            enc_lo -= margin
            pts = _sample_points(lo, hi)
            vals = p.eval_grid(pts)
            idx = int(np.argmin(vals))
            if vals[idx] < best_sample:
                best_sample = float(vals[idx])
            if vals[idx] < fals_threshold and vals[idx] < 0.0:
                lower = min(certified_min, enc_lo, float(vals[idx]))
                return CertResult(
                    Verdict.FALSIFIED, lower, float(vals[idx]), explored, False,
                    witness=tuple(pts[idx]), slack=tol, fp_margin=root_margin,
                )
            if enc_lo >= -tol:
                if enc_lo < certified_min:
                    certified_min = enc_lo
                continue
            if budget_hit:
                pending_min = min(pending_min, enc_lo)
                continue
            axis = prover.longest_axis(lo, hi, scale)
            mid = (lo[axis] + hi[axis]) / 2.0
            hi1 = hi.copy(); hi1[axis] = mid
            lo2 = lo.copy(); lo2[axis] = mid
            nxt.append((lo, hi1))
            nxt.append((lo2, hi))
        if budget_hit and pending_min < math.inf:
            return CertResult(
                Verdict.UNKNOWN, min(certified_min, pending_min), best_sample,
                explored, True, slack=tol, fp_margin=root_margin,
            )
        generation = nxt
        depth += 1
    lower = certified_min if certified_min < math.inf else 0.0
    return CertResult(
        Verdict.CERTIFIED, lower, best_sample, explored, False,
        slack=tol, fp_margin=root_margin,
    )


def global_extremum(p: Polynomial, box: Box, mode: str, tol: float = 1e-6,
                    *, max_depth: int = 60, eps_rel: float = EPS_REL,
                    degree_cap: int = DEGREE_CAP,
                    max_boxes: int = 500_000) -> tuple:
    """Certified global extremum of p over box, within tol.

    mode "min": returns (bound, arg) with bound <= true min <= bound + tol;
    mode "max": returns (bound, arg) with bound - tol <= true max <= bound.
    The returned bound is therefore always on the safe (outer) side.
    """
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")
    if mode not in ("min", "max"):
        raise InputError(f"mode must be 'min' or 'max', got {mode!r}")
    sign = 1.0 if mode == "min" else -1.0
    q = p if mode == "min" else -p
    prover = _BoxProver(q, box, eps_rel=eps_rel, degree_cap=degree_cap)
    root_lo = np.array(box.lower)
    root_hi = np.array(box.upper)
    scale = np.maximum(root_hi - root_lo, 1e-300)

    best_val = math.inf
    best_arg = tuple(box.midpoint())

    def sample(lo, hi):
        nonlocal best_val, best_arg
        pts = _sample_points(lo, hi)
        vals = q.eval_grid(pts)
        idx = int(np.argmin(vals))
        if vals[idx] < best_val:
            best_val = float(vals[idx])
            best_arg = tuple(pts[idx])

    enc_lo, _, margin = prover.enclosure(root_lo, root_hi)
    sample(root_lo, root_hi)
    counter = 0
    heap = [(enc_lo - margin, counter, 0, root_lo, root_hi)]
    explored = 1
    # lbs of regions already proven to lie within tol of the incumbent
    completed_min = math.inf
    while heap:
        lb, _, depth, lo, hi = heapq.heappop(heap)
        # lb is the smallest pending lower bound (min-heap); completed
        # regions were certified above best_val - tol at the time, and
        # best_val only decreases, so min(lb, completed_min) bounds the
        # true extremum from below.
        if lb >= best_val - tol:
            certified = min(lb, completed_min, best_val)
            return (sign * certified, best_arg)
        if depth >= max_depth or explored >= max_boxes:
            lo_all = min(lb, completed_min)
            raise ExtremumError(
                f"extremum search exhausted (depth {depth}, {explored} boxes)",
                lower=-best_val if mode == "max" else lo_all,
                upper=-lo_all if mode == "max" else best_val,
            )
        axis = prover.longest_axis(lo, hi, scale)
        mid = (lo[axis] + hi[axis]) / 2.0
        hi1 = hi.copy(); hi1[axis] = mid
        lo2 = lo.copy(); lo2[axis] = mid
        for child_lo, child_hi in ((lo, hi1), (lo2, hi)):
            enc_lo, _, margin = prover.enclosure(child_lo, child_hi)
            sample(child_lo, child_hi)
            explored += 1
            child_lb = enc_lo - margin
            if child_lb >= best_val - tol:
                completed_min = min(completed_min, child_lb)
                continue
            counter += 1
            heapq.heappush(heap, (child_lb, counter, depth + 1, child_lo, child_hi))
    # every region certified within tol of the incumbent
    certified = min(completed_min, best_val)
    return (sign * certified, best_arg)
