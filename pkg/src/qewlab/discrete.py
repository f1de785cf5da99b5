"""Discrete front model on a periodic lattice.

Integrates ``du_i/dt = (u_{i-1} + u_{i+1} - 2 u_i - ftilde_i(u_i) + F)^+`` with
forward Euler. The rhs is discontinuous in ``u`` (the obstacle term is
constant on unit rows), so higher-order schemes buy nothing, and the clamp
keeps every Euler step monotone.

Replicas are integrated together as a ``(replicas, L)`` array; each replica
owns an independent quenched field derived from the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, PreconditionError, SimulationError
from .field import (GEnvelopeParams, ObstacleLattice, StrengthDistribution, derive_seed,
                    g_table, nearest_row)

SOURCES = ("rounded", "g-envelope", "zero")


@dataclass
class DiscreteState:
    u: np.ndarray
    t: float = 0.0
    steps: int = 0

    @classmethod
    def zeros(cls, L: int, replicas: int | None = None) -> "DiscreteState":
        shape = (L,) if replicas is None else (replicas, L)
        return cls(np.zeros(shape))


class RowObstacles:
    """Obstacle strengths constant on height rows ``(j - 1/2, j + 1/2]``.

    ``values[..., i, j]`` is the obstacle felt by site ``i`` at row ``j``,
    for rows ``0..n_rows-1``. Leading axes (if any) index replicas.
    """

    def __init__(self, values: np.ndarray):
        self.values = np.asarray(values, dtype=np.float64)
        self.n_rows = self.values.shape[-1]
        self.max_strength = float(self.values.max()) if self.values.size else 0.0

    def __call__(self, u: np.ndarray) -> np.ndarray:
        rows = nearest_row(u)
        if rows.min() < 0 or rows.max() >= self.n_rows:
            raise SimulationError(
                f"height row out of table range [0, {self.n_rows}): "
                f"rows {rows.min()}..{rows.max()}"
            )
        vals = np.broadcast_to(self.values, u.shape + (self.n_rows,))
        return np.take_along_axis(vals, rows[..., None], axis=-1)[..., 0]

    @classmethod
    def constant(cls, c: float, L: int, n_rows: int = 1) -> "RowObstacles":
        return cls(np.full((L, n_rows), float(c)))

    @classmethod
    def zero(cls, L: int, n_rows: int = 1) -> "RowObstacles":
        return cls.constant(0.0, L, n_rows)


class _Unbounded(RowObstacles):
    # flat-in-height obstacles: any row maps to the single stored value
    def __call__(self, u):
        return np.broadcast_to(self.values[..., 0], u.shape).copy()


def rounded_obstacles(lattice: ObstacleLattice, L: int, n_rows: int) -> RowObstacles:
    """``ftilde_i(y) = f_{i, ceil(y - 1/2)}``; its row supremum ``fbar_ij`` is ``f_ij``."""
    i = np.arange(L)[:, None]
    j = np.arange(n_rows)[None, :]
    return RowObstacles(np.asarray(lattice.strength_at(i, j)))


def g_obstacles(lattice: ObstacleLattice, delta: float, L: int, n_rows: int,
                params: GEnvelopeParams = GEnvelopeParams()) -> RowObstacles:
    """``ftilde_i(y) = g_{i, ceil(y - 1/2)}``, the envelope used for the continuum reduction."""
    return RowObstacles(np.stack([g_table(lattice, delta, i, 0, n_rows - 1, params)
                                  for i in range(L)]))


def dt_max(max_strength: float, F: float) -> float:
    return 0.2 / (4.0 + max_strength + F)


def _laplacian(u: np.ndarray) -> np.ndarray:
    return np.roll(u, 1, axis=-1) + np.roll(u, -1, axis=-1) - 2.0 * u


def rhs(state: DiscreteState, obstacles: RowObstacles, F: float) -> np.ndarray:
    return np.maximum(_laplacian(state.u) - obstacles(state.u) + F, 0.0)


def step(state: DiscreteState, obstacles: RowObstacles, F: float, dt: float) -> DiscreteState:
    limit = dt_max(obstacles.max_strength, F)
    if dt > limit:
        raise ConfigError(f"dt={dt} exceeds stability limit {limit:.6g} = 0.2/(4 + max f + F)")
    n = state.steps + 1
    return DiscreteState(state.u + dt * rhs(state, obstacles, F), n * dt, n)


@dataclass(frozen=True)
class DiscreteSimConfig:
    L: int = 256
    F: float = 1.0
    dt: float = 1e-3
    t_end: float = 1.0
    seed: int = 0
    source: str = "rounded"
    dist: StrengthDistribution = field(default_factory=lambda: StrengthDistribution.exponential(1.0))
    delta: float = 0.25
    m_max: int = 64
    n_levels: int = 10

    def __post_init__(self):
        problems = []
        if self.L < 3:
            problems.append(f"L must be >= 3, got {self.L}")
        if self.F < 0:
            problems.append(f"F must be >= 0, got {self.F}")
        if not self.dt > 0:
            problems.append(f"dt must be > 0, got {self.dt}")
        if not self.t_end > 0:
            problems.append(f"t_end must be > 0, got {self.t_end}")
        if self.source not in SOURCES:
            problems.append(f"source must be one of {SOURCES}, got {self.source!r}")
        if problems:
            raise ConfigError(problems)

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt)))

    def replica_seed(self, r: int) -> int:
        return derive_seed(self.seed, r)

    def obstacles(self, replicas: int = 1) -> RowObstacles:
        """Obstacle tables for all replicas, covering every height reachable by ``F t_end``."""
        if self.source == "zero":
            return _Unbounded(np.zeros((self.L, 1)))
        n_rows = int(math.ceil(self.F * self.n_steps * self.dt)) + 2
        tables = []
        for r in range(replicas):
            lat = ObstacleLattice(self.replica_seed(r), self.dist)
            if self.source == "rounded":
                tables.append(rounded_obstacles(lat, self.L, n_rows).values)
            else:
                tables.append(g_obstacles(lat, self.delta, self.L, n_rows,
                                          GEnvelopeParams(self.m_max)).values)
        return RowObstacles(np.stack(tables))


def sample_steps(n_steps: int, n_levels: int = 10) -> list[int]:
    """Step indices at ``t_end / 2^k`` (k = n_levels..1) and ``t_end``."""
    steps = {n_steps}
    for k in range(1, n_levels + 1):
        s = int(round(n_steps / 2**k))
        if s >= 1:
            steps.add(s)
    return sorted(steps)


@dataclass
class VelocityStats:
    """Velocity samples per replica (rows) and sample time (columns)."""

    times: np.ndarray
    u0_over_t: np.ndarray
    mean_over_t: np.ndarray
    max_grad_over_t: np.ndarray
    min_h: np.ndarray
    max_u_over_t: np.ndarray
    seeds: list[int]
    F: float
    c1_est: float = float("nan")
    c2_est: float = float("nan")

    @property
    def replicas(self) -> int:
        return self.u0_over_t.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.u0_over_t[:, -1]

    @property
    def final_mean(self) -> float:
        return float(self.final.mean())

    @property
    def final_se(self) -> float:
        if self.replicas < 2:
            return float("nan")
        return float(self.final.std(ddof=1) / math.sqrt(self.replicas))

    def trace_rows(self):
        """Rows ``(replica, seed, t, u0/t, mean u/t, max |grad u|/t)``."""
        for r in range(self.replicas):
            for k, t in enumerate(self.times):
                yield (r, self.seeds[r], float(t), float(self.u0_over_t[r, k]),
                       float(self.mean_over_t[r, k]), float(self.max_grad_over_t[r, k]))


class DiscreteRun(NamedTuple):
    state: DiscreteState
    stats: VelocityStats
    snapshots: list[DiscreteState]


def run(config: DiscreteSimConfig, replicas: int = 1, keep_snapshots: bool = False) -> DiscreteRun:
    """Integrate all replicas from ``u = 0`` to ``t_end``.

    Deterministic for a given config: each replica's field is keyed by
    ``derive_seed(config.seed, replica)``.
    """
    obstacles = config.obstacles(replicas)
    limit = dt_max(obstacles.max_strength, config.F)
    if config.dt > limit:
        raise ConfigError(f"dt={config.dt} exceeds stability limit {limit:.6g} "
                          f"= 0.2/(4 + max f + F) for this field")
    dt, F = config.dt, config.F
    samples = sample_steps(config.n_steps, config.n_levels)
    u = np.zeros((replicas, config.L))
    rec = {k: np.zeros((replicas, len(samples))) for k in ("u0", "mean", "grad", "h", "umax")}
    snaps = []
    late_min, late_max = math.inf, -math.inf
    s_idx = 0
    for n in range(1, config.n_steps + 1):
        u += dt * np.maximum(_laplacian(u) - obstacles(u) + F, 0.0)
        if n != samples[s_idx]:
            continue
        if not np.all(np.isfinite(u)):
            bad = np.argwhere(~np.isfinite(u))[0]
            raise SimulationError(f"non-finite height at step {n}, replica {bad[0]}, site {bad[1]}")
        t = n * dt
        rec["u0"][:, s_idx] = u[:, 0] / t
        rec["mean"][:, s_idx] = u.mean(axis=1) / t
        rec["grad"][:, s_idx] = np.abs(np.roll(u, -1, axis=1) - u).max(axis=1) / t
        rec["h"][:, s_idx] = (_laplacian(u) + F).min(axis=1)
        rec["umax"][:, s_idx] = u.max(axis=1) / t
        if t >= 0.5 * config.t_end:
            late_min = min(late_min, float(u.min() / t))
            late_max = max(late_max, float(u.max() / t))
        if keep_snapshots:
            snaps.append(DiscreteState(u.copy(), t, n))
        s_idx += 1
    stats = VelocityStats(
        times=np.array(samples) * dt,
        u0_over_t=rec["u0"], mean_over_t=rec["mean"], max_grad_over_t=rec["grad"],
        min_h=rec["h"], max_u_over_t=rec["umax"],
        seeds=[config.replica_seed(r) for r in range(replicas)], F=F,
        c1_est=late_min, c2_est=late_max,
    )
    return DiscreteRun(DiscreteState(u, config.n_steps * dt, config.n_steps), stats, snaps)


class FlatnessResult(NamedTuple):
    passed: bool
    max_gradient: float
    t: float


def flatness_check(state: DiscreteState, F: float, Gamma: float) -> FlatnessResult:
    """``max_i |u_{i+1} - u_i| / t <= Gamma``, valid once ``t > 2 F^2 / Gamma^2``."""
    t_min = 2.0 * F**2 / Gamma**2
    if not state.t > t_min:
        raise PreconditionError(f"flatness only guaranteed for t > 2F^2/Gamma^2 = {t_min:g}; t={state.t:g}")
    g = float(np.abs(np.roll(state.u, -1, axis=-1) - state.u).max() / state.t)
    return FlatnessResult(g <= Gamma, g, state.t)


class BoundCheck(NamedTuple):
    passed: bool
    mean: float
    se: float
    lower: float
    bound: float
    margin: float


def bound_check(stats: VelocityStats, W_value: float) -> BoundCheck:
    """One-sided test: mean final velocity minus two standard errors vs ``W_value``."""
    if stats.replicas < 2:
        raise PreconditionError("bound_check needs at least 2 replicas")
    mean, se = stats.final_mean, stats.final_se
    lower = mean - 2.0 * se
    return BoundCheck(lower >= W_value, mean, se, lower, W_value, lower - W_value)
