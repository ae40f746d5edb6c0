"""Data model and JSON ingestion for subsystems and their interconnection.

A subsystem couples a controlled jump-diffusion flow with a scheduled
stochastic jump map.  Canonical variable names are positional:

    x0..x{n-1}   state
    v0..v{m-1}   control input
    w0..w{p-1}   disturbance (concatenated neighbour states)
    z0..z{q-1}   jump noise

Polynomials in a document may be written over any subset of the
variables legal for their slot; the loader aligns them to the full
canonical tuples so downstream code never re-aligns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import InputError, ModelError
from .poly import Box, Polynomial

__all__ = [
    "SubsystemModel",
    "Network",
    "load_network",
    "loads_network",
    "network_to_dict",
    "validate",
    "gaussian_moments",
]


def gaussian_moments(max_degree: int) -> tuple:
    """Raw moments 0..max_degree of a standard Gaussian (double factorial
    at even orders, zero at odd)."""
    out = [1.0, 0.0]
    for k in range(2, max_degree + 1):
        out.append(0.0 if k % 2 else out[k - 2] * (k - 1))
    return tuple(out[: max_degree + 1])


def _names(prefix: str, count: int) -> tuple:
    return tuple(f"{prefix}{i}" for i in range(count))


@dataclass(frozen=True)
class SubsystemModel:
    """One stochastic hybrid subsystem."""

    name: str
    state_dim: int
    input_dim: int
    dist_dim: int
    noise_dim: int
    f1: tuple                 # drift, length n, vars (x, v, w)
    sigma: tuple              # diffusion rows, n x b, vars (x)
    rho: tuple                # reset rows, n x r, vars (x)
    rates: tuple              # Poisson rates, length r
    f2: tuple                 # jump map, length n, vars (x, v, w, z)
    noise_moments: tuple      # raw moments of each z component, degree 0..K
    tau: float
    eps1: int
    eps2: int
    X: Box
    X0: Box
    Xu: Box
    U: Box
    W: Box

    @property
    def brownian_dim(self) -> int:
        return len(self.sigma[0]) if self.sigma else 0

    @property
    def poisson_dim(self) -> int:
        return len(self.rates)

    def x_vars(self) -> tuple:
        return _names("x", self.state_dim)

    def v_vars(self) -> tuple:
        return _names("v", self.input_dim)

    def w_vars(self) -> tuple:
        return _names("w", self.dist_dim)

    def z_vars(self) -> tuple:
        return _names("z", self.noise_dim)

    def flow_vars(self) -> tuple:
        return self.x_vars() + self.v_vars() + self.w_vars()

    def jump_vars(self) -> tuple:
        return self.x_vars() + self.v_vars() + self.w_vars() + self.z_vars()

    def xw_vars(self) -> tuple:
        return self.x_vars() + self.w_vars()

    def xw_box(self) -> Box:
        return self.X.product(self.W) if self.dist_dim else self.X


@dataclass(frozen=True)
class Network:
    """Interconnection of subsystems: neighbors[i] lists, in disturbance
    order, the indices j whose states feed w_i."""

    subsystems: tuple
    neighbors: tuple

    @property
    def n_nodes(self) -> int:
        return len(self.subsystems)

    def edges(self) -> list:
        out = []
        for i, js in enumerate(self.neighbors):
            for j in js:
                out.append({"from": j, "to": i})
        return out


# -- parsing -----------------------------------------------------------


def _req(mapping, key, path):
    if not isinstance(mapping, Mapping):
        raise ModelError("expected an object", path)
    if key not in mapping:
        raise ModelError(f"missing field {key!r}", path)
    return mapping[key]


def _poly(data, allowed, path) -> Polynomial:
    try:
        p = Polynomial.from_dict(data)
    except (InputError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed polynomial: {exc}", path) from exc
    extra = set(p.variables) - set(allowed)
    if extra:
        raise ModelError(
            f"polynomial uses variables {sorted(extra)} not allowed here "
            f"(allowed: {list(allowed)})", path,
        )
    return p.with_variables(allowed)


def _poly_vector(data, length, allowed, path) -> tuple:
    if not isinstance(data, Sequence) or len(data) != length:
        raise ModelError(f"expected a list of {length} polynomials", path)
    return tuple(_poly(item, allowed, f"{path}[{k}]") for k, item in enumerate(data))


def _poly_matrix(data, rows, allowed, path):
    if not isinstance(data, Sequence) or len(data) != rows:
        raise ModelError(f"expected {rows} rows", path)
    cols = None
    out = []
    for k, row in enumerate(data):
        if not isinstance(row, Sequence):
            raise ModelError("expected a list of polynomials", f"{path}[{k}]")
        if cols is None:
            cols = len(row)
        elif len(row) != cols:
            raise ModelError("ragged matrix rows", f"{path}[{k}]")
        out.append(tuple(_poly(item, allowed, f"{path}[{k}][{j}]")
                         for j, item in enumerate(row)))
    return tuple(out), (cols or 0)


def _box(data, variables, path) -> Box:
    try:
        if not isinstance(data, Sequence) or len(data) != len(variables):
            raise InputError(f"expected {len(variables)} [lo, hi] pairs")
        return Box.from_bounds(variables, data)
    except (InputError, TypeError, ValueError) as exc:
        raise ModelError(f"malformed box: {exc}", path) from exc


def _subsystem(data, path) -> SubsystemModel:
    name = str(data.get("name", path))
    n = int(_req(data, "state_dim", path))
    m = int(_req(data, "input_dim", path))
    p_dim = int(_req(data, "dist_dim", path))
    q = int(_req(data, "noise_dim", path))
    if min(n, m) < 1 or min(p_dim, q) < 0:
        raise ModelError("dimensions must be positive (state/input) or nonnegative", path)

    x = _names("x", n)
    v = _names("v", m)
    w = _names("w", p_dim)
    z = _names("z", q)

    f1 = _poly_vector(_req(data, "f1", path), n, x + v + w, f"{path}.f1")
    sigma, _b = _poly_matrix(_req(data, "sigma", path), n, x, f"{path}.sigma")
    rho, r = _poly_matrix(_req(data, "rho", path), n, x, f"{path}.rho")
    rates = _req(data, "lambda", path)
    if not isinstance(rates, Sequence) or len(rates) != r:
        raise ModelError(f"lambda must list {r} rates (one per reset column)",
                         f"{path}.lambda")
    rates = tuple(float(v_) for v_ in rates)
    f2 = _poly_vector(_req(data, "f2", path), n, x + v + w + z, f"{path}.f2")

    moments = _req(data, "noise_moments", path)
    if not isinstance(moments, Sequence) or not moments:
        raise ModelError("noise_moments must be a nonempty list", f"{path}.noise_moments")
    moments = tuple(float(v_) for v_ in moments)

    tau = float(_req(data, "tau", path))
    eps1 = int(_req(data, "eps1", path))
    eps2 = int(_req(data, "eps2", path))

    boxes = _req(data, "boxes", path)
    bx = _box(_req(boxes, "X", f"{path}.boxes"), x, f"{path}.boxes.X")
    bx0 = _box(_req(boxes, "X0", f"{path}.boxes"), x, f"{path}.boxes.X0")
    bxu = _box(_req(boxes, "Xu", f"{path}.boxes"), x, f"{path}.boxes.Xu")
    bu = _box(_req(boxes, "U", f"{path}.boxes"), v, f"{path}.boxes.U")
    bw = _box(_req(boxes, "W", f"{path}.boxes"), w, f"{path}.boxes.W")

    return SubsystemModel(
        name=name, state_dim=n, input_dim=m, dist_dim=p_dim, noise_dim=q,
        f1=f1, sigma=sigma, rho=rho, rates=rates, f2=f2,
        noise_moments=moments, tau=tau, eps1=eps1, eps2=eps2,
        X=bx, X0=bx0, Xu=bxu, U=bu, W=bw,
    )


def loads_network(document: Mapping) -> Network:
    """Materialize a Network from a parsed JSON document."""
    subs_data = _req(document, "subsystems", "$")
    if not isinstance(subs_data, Sequence) or not subs_data:
        raise ModelError("subsystems must be a nonempty array", "$.subsystems")
    subs = tuple(
        _subsystem(item, f"$.subsystems[{i}]") for i, item in enumerate(subs_data)
    )
    edges = document.get("edges", [])
    if not isinstance(edges, Sequence):
        raise ModelError("edges must be an array", "$.edges")
    neighbors = [[] for _ in subs]
    for k, e in enumerate(edges):
        src = int(_req(e, "from", f"$.edges[{k}]"))
        dst = int(_req(e, "to", f"$.edges[{k}]"))
        if not (0 <= src < len(subs)) or not (0 <= dst < len(subs)):
            raise ModelError(f"edge endpoints out of range: {src} -> {dst}",
                             f"$.edges[{k}]")
        if src == dst:
            raise ModelError("self-loop edges are not allowed", f"$.edges[{k}]")
        neighbors[dst].append(src)
    return Network(subsystems=subs, neighbors=tuple(tuple(js) for js in neighbors))


def load_network(path) -> Network:
    import json

    with open(path) as fh:
        try:
            document = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"invalid JSON: {exc}", str(path)) from exc
    return loads_network(document)


def subsystem_to_dict(sub: SubsystemModel) -> dict:
    return {
        "name": sub.name,
        "state_dim": sub.state_dim,
        "input_dim": sub.input_dim,
        "dist_dim": sub.dist_dim,
        "noise_dim": sub.noise_dim,
        "f1": [p.to_dict() for p in sub.f1],
        "sigma": [[p.to_dict() for p in row] for row in sub.sigma],
        "rho": [[p.to_dict() for p in row] for row in sub.rho],
        "lambda": list(sub.rates),
        "f2": [p.to_dict() for p in sub.f2],
        "noise_moments": list(sub.noise_moments),
        "tau": sub.tau,
        "eps1": sub.eps1,
        "eps2": sub.eps2,
        "boxes": {
            "X": sub.X.to_dict(),
            "X0": sub.X0.to_dict(),
            "Xu": sub.Xu.to_dict(),
            "U": sub.U.to_dict(),
            "W": sub.W.to_dict(),
        },
    }


def network_to_dict(net: Network) -> dict:
    return {
        "subsystems": [subsystem_to_dict(s) for s in net.subsystems],
        "edges": net.edges(),
    }


# -- validation --------------------------------------------------------


def validate(net: Network) -> list:
    """Check every semantic invariant; returns human-readable violations
    (empty list means the network is well formed)."""
    out = []
    for i, sub in enumerate(net.subsystems):
        who = f"subsystem[{i}] ({sub.name})"
        if sub.tau <= 0:
            out.append(f"{who}: tau must be > 0, got {sub.tau}")
        if sub.eps1 < 1 or sub.eps2 < 1:
            out.append(f"{who}: eps1/eps2 must be >= 1")
        if sub.eps1 > sub.eps2:
            out.append(f"{who}: eps1 <= eps2 violated ({sub.eps1} > {sub.eps2})")
        for j, lam in enumerate(sub.rates):
            if lam <= 0:
                out.append(f"{who}: Poisson rate lambda[{j}] must be > 0, got {lam}")
        if not sub.X.contains_box(sub.X0):
            out.append(f"{who}: X0 not contained in X")
        if not sub.X.contains_box(sub.Xu):
            out.append(f"{who}: Xu not contained in X")
        if sub.noise_dim and len(sub.noise_moments) < 1:
            out.append(f"{who}: noise_moments empty")
        if sub.noise_moments and sub.noise_moments[0] != 1.0:
            out.append(f"{who}: zeroth noise moment must be 1, got {sub.noise_moments[0]}")

    for i, js in enumerate(net.neighbors):
        sub = net.subsystems[i]
        who = f"subsystem[{i}] ({sub.name})"
        need = sum(net.subsystems[j].state_dim for j in js)
        if need != sub.dist_dim:
            out.append(
                f"{who}: disturbance dim {sub.dist_dim} != total neighbour "
                f"state dim {need}"
            )
            continue
        off = 0
        for j in js:
            nb = net.subsystems[j]
            block_vars = sub.w_vars()[off: off + nb.state_dim]
            w_block = Box(
                block_vars,
                sub.W.lower[off: off + nb.state_dim],
                sub.W.upper[off: off + nb.state_dim],
            )
            x_j = Box(block_vars, nb.X.lower, nb.X.upper)
            if not w_block.contains_box(x_j):
                out.append(
                    f"edge {j} -> {i}: neighbour state box X_{j} not contained "
                    f"in disturbance block W_{i}[{off}:{off + nb.state_dim}]"
                )
            off += nb.state_dim
    return out
