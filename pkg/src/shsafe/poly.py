"""Dense multivariate polynomial arithmetic over named variables.

Coefficients are float64; exactness of downstream certification is
recovered by the range prover's floating-point margin, not by rational
arithmetic here.  Term maps are iterated in sorted exponent order so
every floating-point accumulation is reproducible.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "Polynomial",
    "Box",
    "combine",
    "differentiate",
    "substitute",
    "align",
]


def _as_clean_terms(variables, terms):
    n = len(variables)
    clean = {}
    for exps, coeff in terms.items():
        exps = tuple(int(e) for e in exps)
        if len(exps) != n:
            raise InputError(
                f"exponent tuple {exps} has length {len(exps)}, expected {n}"
            )
        if any(e < 0 for e in exps):
            raise InputError(f"negative exponent in {exps}")
        c = float(coeff)
        if c != 0.0:
            clean[exps] = clean.get(exps, 0.0) + c
    return {e: c for e, c in clean.items() if c != 0.0}


class Polynomial:
    """Immutable polynomial with real coefficients over an ordered
    tuple of variable names."""

    __slots__ = ("variables", "terms")
    __hash__ = None

    def __init__(self, variables: Sequence[str], terms: Mapping[tuple, float]):
        object.__setattr__(self, "variables", tuple(variables))
        if len(set(self.variables)) != len(self.variables):
            raise InputError(f"duplicate variable names in {self.variables}")
        object.__setattr__(self, "terms", _as_clean_terms(self.variables, terms))

    def __setattr__(self, name, value):
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------

    @classmethod
    def zero(cls, variables: Sequence[str]) -> "Polynomial":
        return cls(variables, {})

    @classmethod
    def constant(cls, value: float, variables: Sequence[str]) -> "Polynomial":
        zeros = (0,) * len(tuple(variables))
        return cls(variables, {zeros: float(value)})

    @classmethod
    def variable(cls, name: str, variables: Sequence[str]) -> "Polynomial":
        variables = tuple(variables)
        if name not in variables:
            raise InputError(f"variable {name!r} not in {variables}")
        exps = tuple(1 if v == name else 0 for v in variables)
        return cls(variables, {exps: 1.0})

    @classmethod
    def from_univariate(cls, coeffs: Iterable[float], name: str) -> "Polynomial":
        """Build a univariate polynomial from coefficients in ascending
        degree order (coeffs[k] multiplies name**k)."""
        return cls((name,), {(k,): c for k, c in enumerate(coeffs)})

    # -- bookkeeping ---------------------------------------------------

    def sorted_terms(self):
        return sorted(self.terms.items())

    def degree(self) -> int:
        """Total degree; zero polynomial has degree 0."""
        return max((sum(e) for e in self.terms), default=0)

    def degree_in(self, name: str) -> int:
        i = self._index(name)
        return max((e[i] for e in self.terms), default=0)

    def _index(self, name: str) -> int:
        try:
            return self.variables.index(name)
        except ValueError:
            raise InputError(f"variable {name!r} not in {self.variables}") from None

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.variables == other.variables and self.terms == other.terms

    def __repr__(self):
        if not self.terms:
            return "Polynomial<0>"
        bits = []
        for exps, c in self.sorted_terms():
            mono = "*".join(
                f"{v}^{e}" if e > 1 else v
                for v, e in zip(self.variables, exps)
                if e
            )
            bits.append(f"{c:g}*{mono}" if mono else f"{c:g}")
        return "Polynomial<" + " + ".join(bits) + ">"

    # -- evaluation ----------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> float:
        """Evaluate at a single point (same order as self.variables)."""
        point = tuple(point)
        if len(point) != len(self.variables):
            raise InputError(
                f"point has {len(point)} coordinates, expected {len(self.variables)}"
            )
        total = 0.0
        for exps, c in self.sorted_terms():
            v = c
            for x, e in zip(point, exps):
                if e:
                    v *= x ** e
            total += v
        return total

    def __call__(self, *point):
        if len(point) == 1 and isinstance(point[0], (tuple, list, np.ndarray)):
            point = tuple(point[0])
        return self.evaluate(point)

    def eval_env(self, env: Mapping[str, np.ndarray]):
        """Vectorized evaluation with one array (or scalar) per variable.

        Arrays must be mutually broadcastable; the result follows numpy
        broadcasting.  Variables with zero exponent everywhere may be
        omitted from env.
        """
        total = None
        for exps, c in self.sorted_terms():
            v = None
            for name, e in zip(self.variables, exps):
                if not e:
                    continue
                base = env[name]
                f = base if e == 1 else base ** e
                v = f if v is None else v * f
            v = c if v is None else c * v
            total = v if total is None else total + v
        return 0.0 if total is None else total

    def eval_grid(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at many points given as an (m, nvars) array."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != len(self.variables):
            raise InputError(
                f"expected (m, {len(self.variables)}) array, got {points.shape}"
            )
        env = {v: points[:, i] for i, v in enumerate(self.variables)}
        out = self.eval_env(env)
        if np.isscalar(out) or np.ndim(out) == 0:
            return np.full(points.shape[0], float(out))
        return out

    # -- ring operations -----------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Polynomial):
            if other.variables != self.variables:
                raise InputError(
                    f"variable lists differ: {self.variables} vs {other.variables};"
                    " align with with_variables() first"
                )
            return other
        if isinstance(other, numbers.Real):
            return Polynomial.constant(other, self.variables)
        return None

    def __add__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        terms = dict(self.terms)
        for e, c in other.sorted_terms():
            terms[e] = terms.get(e, 0.0) + c
        return Polynomial(self.variables, terms)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is None:
            return NotImplemented
        terms = {}
        for e1, c1 in self.sorted_terms():
            for e2, c2 in other.sorted_terms():
                key = tuple(a + b for a, b in zip(e1, e2))
                terms[key] = terms.get(key, 0.0) + c1 * c2
        return Polynomial(self.variables, terms)

    __rmul__ = __mul__

    def __pow__(self, k):
        if not isinstance(k, numbers.Integral) or k < 0:
            raise InputError(f"polynomial power must be a nonnegative integer, got {k}")
        out = Polynomial.constant(1.0, self.variables)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    # -- calculus and composition ---------------------------------------

    def diff(self, name: str) -> "Polynomial":
        """Formal partial derivative with respect to one variable."""
        i = self._index(name)
        terms = {}
        for exps, c in self.terms.items():
            e = exps[i]
            if e == 0:
                continue
            key = exps[:i] + (e - 1,) + exps[i + 1:]
            terms[key] = terms.get(key, 0.0) + c * e
        return Polynomial(self.variables, terms)

    def subst(self, bindings: Mapping[str, "Polynomial | float"]) -> "Polynomial":
        """Exact polynomial composition.

        All polynomial binding values must share one variable tuple, which
        becomes the output's variable tuple; unbound variables of self pass
        through and must exist there.  If every binding is a scalar the
        output keeps self's variables.
        """
        if not bindings:
            return self
        for name in bindings:
            self._index(name)
        out_vars = None
        for val in bindings.values():
            if isinstance(val, Polynomial):
                if out_vars is None:
                    out_vars = val.variables
                elif val.variables != out_vars:
                    raise InputError(
                        "all polynomial bindings must share one variable tuple"
                    )
        if out_vars is None:
            out_vars = self.variables
        resolved = {}
        for name in self.variables:
            if name in bindings:
                val = bindings[name]
                if not isinstance(val, Polynomial):
                    val = Polynomial.constant(val, out_vars)
                resolved[name] = val
            else:
                resolved[name] = Polynomial.variable(name, out_vars)

        # powers are cached per variable up to the highest exponent used
        pow_cache = {name: {0: Polynomial.constant(1.0, out_vars)} for name in self.variables}

        def power(name, e):
            cache = pow_cache[name]
            if e not in cache:
                cache[e] = power(name, e - 1) * resolved[name]
            return cache[e]

        acc = Polynomial.zero(out_vars)
        for exps, c in self.sorted_terms():
            term = Polynomial.constant(c, out_vars)
            for name, e in zip(self.variables, exps):
                if e:
                    term = term * power(name, e)
            acc = acc + term
        return acc

    def with_variables(self, variables: Sequence[str]) -> "Polynomial":
        """Re-express over a wider (or reordered) variable tuple; every
        current variable must appear in the new tuple."""
        variables = tuple(variables)
        pos = []
        for v in self.variables:
            if v not in variables:
                raise InputError(f"variable {v!r} missing from target tuple {variables}")
            pos.append(variables.index(v))
        n = len(variables)
        terms = {}
        for exps, c in self.terms.items():
            key = [0] * n
            for p, e in zip(pos, exps):
                key[p] = e
            terms[tuple(key)] = c
        return Polynomial(variables, terms)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "variables": list(self.variables),
            "terms": [
                {"exponents": list(e), "coeff": c} for e, c in self.sorted_terms()
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Polynomial":
        try:
            variables = data["variables"]
            raw = data["terms"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"polynomial document missing field: {exc}") from exc
        terms = {}
        for item in raw:
            exps = tuple(int(e) for e in item["exponents"])
            terms[exps] = terms.get(exps, 0.0) + float(item["coeff"])
        return cls(variables, terms)


def combine(p: Polynomial, q: Polynomial, op: str) -> Polynomial:
    """Ring operation on two polynomials over identical variable lists."""
    if op == "add":
        return p + q
    if op == "sub":
        return p - q
    if op == "mul":
        return p * q
    raise InputError(f"unknown op {op!r}, expected add/sub/mul")


def differentiate(p: Polynomial, name: str) -> Polynomial:
    return p.diff(name)


def substitute(p: Polynomial, bindings: Mapping[str, Polynomial]) -> Polynomial:
    return p.subst(bindings)


def align(*polys: Polynomial) -> list[Polynomial]:
    """Promote several polynomials to the union of their variables
    (order: first appearance)."""
    seen = []
    for p in polys:
        for v in p.variables:
            if v not in seen:
                seen.append(v)
    return [p.with_variables(tuple(seen)) for p in polys]


@dataclass(frozen=True)
class Box:
    """Axis-aligned closed box over named variables."""

    variables: tuple
    lower: tuple
    upper: tuple

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if not (len(self.variables) == len(self.lower) == len(self.upper)):
            raise InputError("box fields must have equal lengths")
        for v, lo, hi in zip(self.variables, self.lower, self.upper):
            if not lo <= hi:
                raise InputError(f"box has lo > hi on {v!r}: [{lo}, {hi}]")

    @classmethod
    def from_bounds(cls, variables, bounds) -> "Box":
        bounds = [tuple(b) for b in bounds]
        return cls(tuple(variables), tuple(b[0] for b in bounds), tuple(b[1] for b in bounds))

    @property
    def dim(self) -> int:
        return len(self.variables)

    def widths(self) -> np.ndarray:
        return np.array(self.upper) - np.array(self.lower)

    def midpoint(self) -> np.ndarray:
        return (np.array(self.upper) + np.array(self.lower)) / 2.0

    def corners(self) -> np.ndarray:
        """All 2^dim vertices, ordered by binary counting over axes."""
        n = self.dim
        out = np.empty((1 << n, n))
        for i in range(1 << n):
            for k in range(n):
                out[i, k] = self.upper[k] if (i >> k) & 1 else self.lower[k]
        return out

    def contains(self, point, tol: float = 0.0) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(
            np.all(point >= np.array(self.lower) - tol)
            and np.all(point <= np.array(self.upper) + tol)
        )

    def contains_box(self, other: "Box", tol: float = 0.0) -> bool:
        if other.variables != self.variables:
            raise InputError("boxes over different variables")
        return bool(
            np.all(np.array(other.lower) >= np.array(self.lower) - tol)
            and np.all(np.array(other.upper) <= np.array(self.upper) + tol)
        )

    def split(self, axis: int) -> tuple["Box", "Box"]:
        mid = (self.lower[axis] + self.upper[axis]) / 2.0
        lo1 = self.lower
        hi1 = self.upper[:axis] + (mid,) + self.upper[axis + 1:]
        lo2 = self.lower[:axis] + (mid,) + self.lower[axis + 1:]
        return Box(self.variables, lo1, hi1), Box(self.variables, lo2, self.upper)

    def product(self, other: "Box") -> "Box":
        overlap = set(self.variables) & set(other.variables)
        if overlap:
            raise InputError(f"cannot take product, shared variables {sorted(overlap)}")
        return Box(
            self.variables + other.variables,
            self.lower + other.lower,
            self.upper + other.upper,
        )

    def sup_norm_sq(self) -> float:
        """sup over the box of the squared Euclidean norm."""
        return float(sum(max(lo * lo, hi * hi) for lo, hi in zip(self.lower, self.upper)))

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        lo = np.array(self.lower)
        hi = np.array(self.upper)
        return lo + rng.random((m, self.dim)) * (hi - lo)

    def to_dict(self) -> list:
        return [[lo, hi] for lo, hi in zip(self.lower, self.upper)]

    @classmethod
    def from_dict(cls, variables, data) -> "Box":
        return cls.from_bounds(variables, data)
