"""Seeded Monte Carlo simulation of interconnected stochastic hybrid
systems under given controllers.

One simulation step covers one sampling period: Euler-Maruyama substeps
integrate the controlled jump-diffusion flow (inputs held constant over
the period, Brownian increments of variance dt, Poisson reset
increments of mean rate*dt), then each node whose jump schedule fires
applies its stochastic jump map and resets its counter.  States are
recorded at sampling instants only, which is also where unsafe and
escape checks happen.

Reproducibility contract: every trial owns a Philox stream spawned from
the master seed by counter-based splitting, and draws from it in a
fixed order independent of batch size, thread count, and representation
(jump noise is drawn every period whether or not a node fires).  The
"original" and "augmented" representations differ only in how the jump
decision is bookkept (precomputed jump times vs an explicit counter),
so their trajectories must agree bitwise for the same stream.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import beta as _beta_dist

from .errors import CapabilityError, InputError
from .model import Network, SubsystemModel, subsystem_to_dict

__all__ = [
    "SimConfig",
    "TrialResult",
    "EstimateResult",
    "simulate_trajectory",
    "estimate_unsafe_probability",
    "equivalence_check",
    "clopper_pearson_upper",
    "write_trajectory_csv",
]

SCHEDULES = ("uniform_window", "at_eps2", "fixed")
REPRESENTATIONS = ("original", "augmented")


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    trials: int = 1
    seed: int = 0
    substeps: int = 20
    jump_schedule: str = "uniform_window"
    fixed_gap: Optional[int] = None
    representation: str = "augmented"
    synchronized: bool = False
    x0: Optional[tuple] = None      # fixed initial network state; else uniform on X0
    batch_size: int = 256
    threads: int = 1

    def __post_init__(self):
        if self.horizon < 0:
            raise InputError(f"horizon must be >= 0, got {self.horizon}")
        if self.substeps < 1:
            raise InputError(f"substeps must be >= 1, got {self.substeps}")
        if self.trials < 1:
            raise InputError(f"trials must be >= 1, got {self.trials}")
        if self.jump_schedule not in SCHEDULES:
            raise InputError(f"jump_schedule must be one of {SCHEDULES}")
        if self.representation not in REPRESENTATIONS:
            raise InputError(f"representation must be one of {REPRESENTATIONS}")
        if self.jump_schedule == "fixed" and self.fixed_gap is None:
            raise InputError("fixed schedule requires fixed_gap")


@dataclass(frozen=True)
class TrialResult:
    unsafe_hit: bool
    first_hit_step: Optional[int]
    escaped: bool
    first_escape_step: Optional[int]
    trajectory: Optional[np.ndarray] = None        # (T+1, D) states at t_k
    theta_trajectory: Optional[np.ndarray] = None  # (T+1, N) counters


@dataclass(frozen=True)
class EstimateResult:
    p_hat: float
    ci95_upper: float
    hits: int
    valid_trials: int
    escaped_trials: int
    trials: int

    def to_dict(self) -> dict:
        return {
            "p_hat": self.p_hat, "ci95_upper": self.ci95_upper,
            "hits": self.hits, "valid_trials": self.valid_trials,
            "escaped_trials": self.escaped_trials, "trials": self.trials,
        }


def clopper_pearson_upper(hits: int, n: int, alpha: float = 0.05) -> float:
    """Exact binomial upper confidence limit (two-sided 1-alpha interval)."""
    if n <= 0:
        raise InputError("need at least one valid trial")
    if hits >= n:
        return 1.0
    return float(_beta_dist.ppf(1.0 - alpha / 2.0, hits + 1, n - hits))


def _controller_pair(c):
    if hasattr(c, "nu_flow"):
        return tuple(c.nu_flow), tuple(c.nu_jump)
    flow, jump = c
    return tuple(flow), tuple(jump)


class _Group:
    """Nodes sharing identical dynamics and controllers, evaluated as one
    stacked batch."""

    def __init__(self, sub: SubsystemModel, controllers, members,
                 state_off, brown_off, poisson_off, noise_off, net: Network):
        self.sub = sub
        self.members = np.array(members)
        g = len(members)
        n, b, r, q = sub.state_dim, sub.brownian_dim, sub.poisson_dim, sub.noise_dim
        self.state_cols = np.array(
            [[state_off[i] + k for k in range(n)] for i in members]
        )
        self.w_cols = np.array(
            [
                [
                    state_off[j] + k
                    for j in net.neighbors[i]
                    for k in range(net.subsystems[j].state_dim)
                ]
                for i in members
            ]
        ).reshape(g, sub.dist_dim)
        self.brown_cols = np.array(
            [[brown_off[i] + l for l in range(b)] for i in members]
        ).reshape(g, b)
        self.poisson_cols = np.array(
            [[poisson_off[i] + j for j in range(r)] for i in members]
        ).reshape(g, r)
        self.noise_cols = np.array(
            [[noise_off[i] + j for j in range(q)] for i in members]
        ).reshape(g, q)
        self.nu_flow, self.nu_jump = controllers
        if len(self.nu_flow) != sub.input_dim or len(self.nu_jump) != sub.input_dim:
            raise InputError(
                f"{sub.name}: controllers must have {sub.input_dim} components"
            )
        self.u_lo = np.array(sub.U.lower)
        self.u_hi = np.array(sub.U.upper)

    def x_env(self, X):
        return {
            f"x{k}": X[:, self.state_cols[:, k]]
            for k in range(self.sub.state_dim)
        }

    def w_env(self, X):
        return {
            f"w{j}": X[:, self.w_cols[:, j]]
            for j in range(self.sub.dist_dim)
        }

    def held_inputs(self, X, controller):
        env = self.x_env(X)
        out = {}
        for j, nu in enumerate(controller):
            raw = nu.eval_env(env)
            raw = np.broadcast_to(np.asarray(raw, dtype=float), X[:, self.state_cols[:, 0]].shape)
            out[f"v{j}"] = np.clip(raw, self.u_lo[j], self.u_hi[j])
        return out


class _CompiledNetwork:
    def __init__(self, net: Network, controllers):
        if len(controllers) != net.n_nodes:
            raise InputError("need one controller pair per node")
        taus = {s.tau for s in net.subsystems}
        if len(taus) != 1:
            raise InputError(f"all subsystems must share one sampling period, got {taus}")
        self.net = net
        self.tau = net.subsystems[0].tau
        self.n_nodes = net.n_nodes

        state_off, brown_off, poisson_off, noise_off = [], [], [], []
        d = db = dr = dq = 0
        for s in net.subsystems:
            state_off.append(d); d += s.state_dim
            brown_off.append(db); db += s.brownian_dim
            poisson_off.append(dr); dr += s.poisson_dim
            noise_off.append(dq); dq += s.noise_dim
        self.D, self.Db, self.Dr, self.Dq = d, db, dr, dq
        self.state_off = state_off

        pairs = [_controller_pair(c) for c in controllers]
        sig_map = {}
        for i, (s, pair) in enumerate(zip(net.subsystems, pairs)):
            sig = json.dumps(
                {
                    "sub": {k: v for k, v in subsystem_to_dict(s).items() if k != "name"},
                    "ctl": [[p.to_dict() for p in vec] for vec in pair],
                    "nbr": [net.subsystems[j].state_dim for j in net.neighbors[i]],
                },
                sort_keys=True,
            )
            sig_map.setdefault(sig, []).append(i)
        self.groups = [
            _Group(net.subsystems[members[0]], pairs[members[0]], members,
                   state_off, brown_off, poisson_off, noise_off, net)
            for members in sig_map.values()
        ]

        self.rates = np.empty(dr)
        for i, s in enumerate(net.subsystems):
            for j, lam in enumerate(s.rates):
                self.rates[poisson_off[i] + j] = lam

        # per-column region bounds over the flat state layout
        self.x_lo = np.empty(d); self.x_hi = np.empty(d)
        self.x0_lo = np.empty(d); self.x0_hi = np.empty(d)
        self.xu_lo = np.empty(d); self.xu_hi = np.empty(d)
        for i, s in enumerate(net.subsystems):
            sl = slice(state_off[i], state_off[i] + s.state_dim)
            self.x_lo[sl], self.x_hi[sl] = s.X.lower, s.X.upper
            self.x0_lo[sl], self.x0_hi[sl] = s.X0.lower, s.X0.upper
            self.xu_lo[sl], self.xu_hi[sl] = s.Xu.lower, s.Xu.upper

        self.eps1 = np.array([s.eps1 for s in net.subsystems])
        self.eps2 = np.array([s.eps2 for s in net.subsystems])


def _draw_gaps(cfg: SimConfig, compiled: _CompiledNetwork, rng) -> np.ndarray:
    """Inter-jump gap sequence per node, shape (max_gaps, N).  Constant
    schedules consume no randomness so the stream layout is identical
    across schedule kinds only within a fixed schedule choice."""
    n = compiled.n_nodes
    max_gaps = cfg.horizon + 1
    if cfg.jump_schedule == "at_eps2":
        return np.tile(compiled.eps2, (max_gaps, 1))
    if cfg.jump_schedule == "fixed":
        g = int(cfg.fixed_gap)
        if np.any(g < compiled.eps1) or np.any(g > compiled.eps2):
            raise InputError(
                f"fixed_gap {g} outside some node's [eps1, eps2] window"
            )
        return np.full((max_gaps, n), g)
    if cfg.synchronized:
        e1, e2 = int(compiled.eps1[0]), int(compiled.eps2[0])
        if np.any(compiled.eps1 != e1) or np.any(compiled.eps2 != e2):
            raise InputError("synchronized schedule requires identical jump windows")
        col = rng.integers(e1, e2 + 1, size=max_gaps)
        return np.tile(col[:, None], (1, n))
    out = np.empty((max_gaps, n), dtype=np.int64)
    for i in range(n):
        out[:, i] = rng.integers(compiled.eps1[i], compiled.eps2[i] + 1, size=max_gaps)
    return out


class _AugmentedSchedule:
    """Counter bookkeeping: flow while theta <= eps2 - 1, fire when the
    counter reaches the drawn gap (within [eps1, eps2]), reset to 0."""

    def __init__(self, gaps_batch):
        self.gaps = gaps_batch            # (batch, max_gaps, N)
        batch, _, n = gaps_batch.shape
        self.theta = np.zeros((batch, n), dtype=np.int64)
        self.ptr = np.zeros((batch, n), dtype=np.int64)

    def current_gap(self):
        return np.take_along_axis(self.gaps, self.ptr[:, None, :], axis=1)[:, 0, :]

    def step(self, k):
        self.theta += 1
        fire = self.theta >= self.current_gap()
        self.ptr[fire] += 1
        self.theta[fire] = 0
        return fire


class _OriginalSchedule:
    """Jump instants precomputed as cumulative gap sums; no counter."""

    def __init__(self, gaps_batch):
        self.gaps = gaps_batch
        batch, _, n = gaps_batch.shape
        self.ptr = np.zeros((batch, n), dtype=np.int64)
        self.next_jump = gaps_batch[:, 0, :].copy()
        self.theta = None

    def step(self, k):
        fire = self.next_jump == k
        if np.any(fire):
            self.ptr[fire] += 1
            nxt = np.take_along_axis(self.gaps, self.ptr[:, None, :], axis=1)[:, 0, :]
            self.next_jump[fire] += nxt[fire]
        return fire


def _run_batch(compiled: _CompiledNetwork, cfg: SimConfig, seeds,
               record: bool = False, perturb=None):
    """Simulate one batch of trials.  seeds is a list of SeedSequence,
    one per trial; perturb = (period, substep, column, delta) adds delta
    to one Brownian draw (negative-control hook)."""
    batch = len(seeds)
    rngs = [np.random.Generator(np.random.Philox(s)) for s in seeds]
    d = compiled.D
    dt = compiled.tau / cfg.substeps
    sqrt_dt = np.sqrt(dt)
    lam_dt = compiled.rates * dt

    # fixed draw order per trial: initial state, gap schedule, then per
    # period: normals (S, Db), poisson (S, Dr), jump noise (Dq)
    X = np.empty((batch, d))
    for t, rng in enumerate(rngs):
        if cfg.x0 is not None:
            x0 = np.asarray(cfg.x0, dtype=float)
            if x0.shape != (d,):
                raise InputError(f"x0 must have shape ({d},), got {x0.shape}")
            X[t] = x0
        else:
            u = rng.random(d)
            X[t] = compiled.x0_lo + u * (compiled.x0_hi - compiled.x0_lo)
    gaps = np.stack([_draw_gaps(cfg, compiled, rng) for rng in rngs])

    sched_cls = _AugmentedSchedule if cfg.representation == "augmented" else _OriginalSchedule
    sched = sched_cls(gaps)

    first_hit = np.full(batch, -1, dtype=np.int64)
    first_escape = np.full(batch, -1, dtype=np.int64)
    active = np.ones(batch, dtype=bool)

    def check(k):
        inside_x = np.all((X >= compiled.x_lo) & (X <= compiled.x_hi), axis=1)
        unsafe = np.all((X >= compiled.xu_lo) & (X <= compiled.xu_hi), axis=1)
        hit_now = unsafe & (first_hit < 0) & active
        first_hit[hit_now] = k
        esc_now = ~inside_x & (first_escape < 0) & active
        first_escape[esc_now] = k
        active[esc_now] = False

    traj = theta_traj = None
    if record:
        traj = np.empty((batch, cfg.horizon + 1, d))
        traj[:, 0] = X
        if sched.theta is not None:
            theta_traj = np.zeros((batch, cfg.horizon + 1, compiled.n_nodes), dtype=np.int64)

    check(0)

    for k in range(1, cfg.horizon + 1):
        normals = np.stack([rng.standard_normal((cfg.substeps, compiled.Db))
                            for rng in rngs]) if compiled.Db else \
            np.zeros((batch, cfg.substeps, 0))
        if compiled.Dr:
            counts = np.stack([
                rng.poisson(lam_dt, size=(cfg.substeps, compiled.Dr)).astype(float)
                for rng in rngs
            ])
        else:
            counts = np.zeros((batch, cfg.substeps, 0))
        znoise = np.stack([rng.standard_normal(compiled.Dq) for rng in rngs]) \
            if compiled.Dq else np.zeros((batch, 0))
        if perturb is not None and perturb[0] == k:
            _, s_idx, col, delta = perturb
            normals[:, s_idx, col] += delta

        held = [g.held_inputs(X, g.nu_flow) for g in compiled.groups]

        with np.errstate(over="ignore", invalid="ignore"):
            for s in range(cfg.substeps):
                dW = sqrt_dt * normals[:, s, :]
                dN = counts[:, s, :]
                X_new = X.copy()
                for gi, grp in enumerate(compiled.groups):
                    env = {**grp.x_env(X), **grp.w_env(X), **held[gi]}
                    env_x = {k2: env[k2] for k2 in env if k2.startswith("x")}
                    for kk in range(grp.sub.state_dim):
                        incr = grp.sub.f1[kk].eval_env(env) * dt
                        for l in range(grp.sub.brownian_dim):
                            sig = grp.sub.sigma[kk][l].eval_env(env_x)
                            incr = incr + sig * dW[:, grp.brown_cols[:, l]]
                        for j in range(grp.sub.poisson_dim):
                            rr = grp.sub.rho[kk][j].eval_env(env_x)
                            incr = incr + rr * dN[:, grp.poisson_cols[:, j]]
                        cols = grp.state_cols[:, kk]
                        X_new[:, cols] = X[:, cols] + incr
                X = np.where(active[:, None], X_new, X)

            # period boundary: counters advance, scheduled nodes jump
            fire = sched.step(k)
            X_minus = X
            X_post = X.copy()
            for grp in compiled.groups:
                fire_g = fire[:, grp.members]
                if not np.any(fire_g):
                    continue
                env = {**grp.x_env(X_minus), **grp.w_env(X_minus),
                       **grp.held_inputs(X_minus, grp.nu_jump)}
                for j in range(grp.sub.noise_dim):
                    env[f"z{j}"] = znoise[:, grp.noise_cols[:, j]]
                for kk in range(grp.sub.state_dim):
                    val = grp.sub.f2[kk].eval_env(env)
                    val = np.broadcast_to(np.asarray(val, dtype=float),
                                          fire_g.shape)
                    cols = grp.state_cols[:, kk]
                    X_post[:, cols] = np.where(fire_g, val, X_minus[:, cols])
            X = np.where(active[:, None], X_post, X)

        check(k)
        if record:
            traj[:, k] = X
            if theta_traj is not None:
                theta_traj[:, k] = sched.theta

    return {
        "first_hit": first_hit,
        "first_escape": first_escape,
        "trajectory": traj,
        "theta_trajectory": theta_traj,
    }


def _trial_seeds(master_seed: int, start: int, count: int):
    return [np.random.SeedSequence(entropy=master_seed, spawn_key=(i,))
            for i in range(start, start + count)]


def simulate_trajectory(net: Network, controllers, cfg: SimConfig,
                        trial_seed: int = 0, *, _perturb=None) -> TrialResult:
    """Simulate one trajectory, recording states at every sampling
    instant.  trial_seed indexes the trial stream under cfg.seed."""
    compiled = _CompiledNetwork(net, controllers)
    seeds = _trial_seeds(cfg.seed, trial_seed, 1)
    out = _run_batch(compiled, cfg, seeds, record=True, perturb=_perturb)
    hit = int(out["first_hit"][0])
    esc = int(out["first_escape"][0])
    theta = out["theta_trajectory"]
    return TrialResult(
        unsafe_hit=hit >= 0,
        first_hit_step=hit if hit >= 0 else None,
        escaped=esc >= 0,
        first_escape_step=esc if esc >= 0 else None,
        trajectory=out["trajectory"][0],
        theta_trajectory=theta[0] if theta is not None else None,
    )


def estimate_unsafe_probability(net: Network, controllers,
                                cfg: SimConfig) -> EstimateResult:
    """Empirical unsafe probability over cfg.trials seeded trials, with
    an exact binomial (Clopper-Pearson) 95% upper confidence limit.

    Trials that leave the certified state region before hitting the
    unsafe set are excluded from the estimate and reported separately.
    """
    if cfg.trials < 100:
        raise InputError(
            f"need at least 100 trials for a meaningful interval, got {cfg.trials}"
        )
    compiled = _CompiledNetwork(net, controllers)
    batches = []
    start = 0
    while start < cfg.trials:
        count = min(cfg.batch_size, cfg.trials - start)
        batches.append((start, count))
        start += count

    def run(args):
        s, c = args
        return _run_batch(compiled, cfg, _trial_seeds(cfg.seed, s, c))

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]

    hits = 0
    escaped = 0
    for out in results:
        fh, fe = out["first_hit"], out["first_escape"]
        hit_mask = (fh >= 0) & ((fe < 0) | (fh <= fe))
        esc_mask = (fe >= 0) & ~hit_mask
        hits += int(hit_mask.sum())
        escaped += int(esc_mask.sum())
    valid = cfg.trials - escaped
    if valid == 0:
        raise CapabilityError(
            "all trials escaped the certified state region; no estimate"
        )
    p_hat = hits / valid
    return EstimateResult(
        p_hat=p_hat,
        ci95_upper=clopper_pearson_upper(hits, valid),
        hits=hits, valid_trials=valid, escaped_trials=escaped,
        trials=cfg.trials,
    )


def equivalence_check(net: Network, controllers, cfg: SimConfig, seed: int,
                      *, _perturb=None) -> bool:
    """True iff the original and augmented representations produce
    bitwise-identical state trajectories for the same noise stream.
    _perturb injects a single-draw discrepancy into the augmented run
    (negative control)."""
    base = replace(cfg, seed=seed, representation="original")
    aug = replace(cfg, seed=seed, representation="augmented")
    t1 = simulate_trajectory(net, controllers, base, 0)
    t2 = simulate_trajectory(net, controllers, aug, 0, _perturb=_perturb)
    return bool(np.array_equal(t1.trajectory, t2.trajectory))


def write_trajectory_csv(path, results: Sequence[TrialResult], net: Network):
    """Write recorded trajectories as rows trial,k,node,x[,theta]; nodes
    with several state components emit one row per component in order."""
    with_theta = any(r.theta_trajectory is not None for r in results)
    dims = [s.state_dim for s in net.subsystems]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "k", "node", "x"] + (["theta"] if with_theta else []))
        for t, r in enumerate(results):
            if r.trajectory is None:
                continue
            for k in range(r.trajectory.shape[0]):
                off = 0
                for node, nd in enumerate(dims):
                    for c in range(nd):
                        row = [t, k, node, repr(float(r.trajectory[k, off + c]))]
                        if with_theta:
                            th = r.theta_trajectory
                            row.append(int(th[k, node]) if th is not None else "")
                        w.writerow(row)
                    off += nd
