"""Explicit finite differences for the continuum interface equation.

Solves ``u_t = u_xx - f(x, u) + F`` (or ``F chi_A(x)`` for the modified
problem, where the drive is switched off on the obstacle columns
``|x - i| < delta``) on a periodic domain ``[0, L_int)``.

Grid layout
-----------
Nodes are cell centred, ``x_k = (k + 1/2) dx``, so the cell of node ``k`` is
``[k dx, (k + 1) dx]``. When ``delta / dx`` is an integer the column edges
``i +/- delta`` are cell faces. Slopes are centred differences at faces
(``(u_{k+1} - u_k) / dx`` sits at face ``k + 1``) and are linearly
interpolated elsewhere; integrals of nodal fields use the cell-average rule.
With these choices ``u_x(b) - u_x(a)`` equals the cell sum of the discrete
``u_xx`` over ``[a, b]`` exactly, which keeps the snapshot inequalities free of
spurious O(dx) errors at the kinks of ``chi_A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from dataclasses import field as dc_field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, PreconditionError, SimulationError
from .field import ObstacleField


@dataclass(frozen=True)
class Grid1D:
    n_cells: int = 32
    L_int: int = 32

    def __post_init__(self):
        problems = []
        if self.n_cells < 8:
            problems.append(f"n_cells must be >= 8, got {self.n_cells}")
        if self.L_int < 3:
            problems.append(f"L_int must be >= 3, got {self.L_int}")
        if problems:
            raise ConfigError(problems)

    @property
    def dx(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n(self) -> int:
        return self.n_cells * self.L_int

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    def check_resolves(self, delta: float) -> None:
        if 2.0 * delta * self.n_cells < 4.0 - 1e-9:
            raise ConfigError(f"obstacle columns of width 2*delta={2 * delta} need >= 4 cells; "
                              f"n_cells={self.n_cells} gives {2 * delta * self.n_cells:g}")


@dataclass
class ContinuumState:
    u: np.ndarray
    grid: Grid1D
    t: float = 0.0
    steps: int = 0

    @classmethod
    def zeros(cls, grid: Grid1D) -> "ContinuumState":
        return cls(np.zeros(grid.n), grid)


@dataclass(frozen=True)
class ContinuumConfig:
    F: float
    field: ObstacleField
    grid: Grid1D = dc_field(default_factory=Grid1D)
    t_end: float = 1.0
    dt: float | None = None
    modified: bool = True

    def __post_init__(self):
        problems = []
        if self.F < 0:
            problems.append(f"F must be >= 0, got {self.F}")
        if not self.t_end > 0:
            problems.append(f"t_end must be > 0, got {self.t_end}")
        limit = cfl_limit(self.grid)
        if self.dt is not None and not 0 < self.dt <= limit:
            problems.append(f"dt={self.dt} violates the CFL limit dx^2/2 = {limit:.6g}")
        try:
            self.grid.check_resolves(self.field.delta)
        except ConfigError as e:
            problems.extend(e.violations)
        if problems:
            raise ConfigError(problems)

    @property
    def time_step(self) -> float:
        return self.dt if self.dt is not None else 0.4 * self.grid.dx**2

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_end / self.time_step)))


def cfl_limit(grid: Grid1D) -> float:
    return 0.5 * grid.dx**2


def drive_mask(grid: Grid1D, delta: float) -> np.ndarray:
    """``chi_A`` at the nodes: 0 on obstacle columns ``dist(x, Z) < delta``, else 1."""
    x = grid.x
    return (np.abs(x - np.rint(x)) >= delta).astype(np.float64)


def _lap(u: np.ndarray, dx: float) -> np.ndarray:
    return (np.roll(u, 1) + np.roll(u, -1) - 2.0 * u) / dx**2


def pde_rhs(state: ContinuumState, field: ObstacleField, F: float, modified: bool) -> np.ndarray:
    """``u_xx - f(x, u) + F`` (``F chi_A`` when ``modified``) at the nodes."""
    g = state.grid
    force = F * drive_mask(g, field.delta) if modified else F
    return _lap(state.u, g.dx) - field(g.x, state.u) + force


def step_ftcs(state: ContinuumState, config: ContinuumConfig) -> ContinuumState:
    dt = config.time_step
    if dt > cfl_limit(state.grid):
        raise ConfigError(f"dt={dt} violates the CFL limit {cfl_limit(state.grid):.6g}")
    ut = pde_rhs(state, config.field, config.F, config.modified)
    n = state.steps + 1
    return ContinuumState(state.u + dt * ut, state.grid, n * dt, n)


def averaged_height(state: ContinuumState) -> float:
    """``int_0^1 u dx`` over the cells of the first unit interval (midpoint rule)."""
    g = state.grid
    return float(state.u[: g.n_cells].sum() * g.dx)


class ContinuumRun(NamedTuple):
    config: ContinuumConfig
    snapshots: list[ContinuumState]
    final: ContinuumState
    min_ut: float
    min_increment: float


def run_continuum(config: ContinuumConfig, n_snapshots: int = 20, snapshot_times=None) -> ContinuumRun:
    """Integrate from ``u = 0`` to ``t_end`` recording snapshots.

    Snapshots default to ``n_snapshots`` evenly spaced times ending at
    ``t_end``. ``min_ut`` / ``min_increment`` track the smallest nodal rate and
    Euler increment over every step.
    """
    dt = config.time_step
    n_steps = config.n_steps
    if snapshot_times is None:
        snap_steps = {int(round(n_steps * (k + 1) / n_snapshots)) for k in range(n_snapshots)}
    else:
        snap_steps = {max(1, int(round(t / dt))) for t in snapshot_times}
    snap_steps = sorted(s for s in snap_steps if 1 <= s <= n_steps)

    grid, fld, F = config.grid, config.field, config.F
    force = F * drive_mask(grid, fld.delta) if config.modified else F
    x = grid.x
    u = np.zeros(grid.n)
    min_ut = math.inf
    snaps = []
    k = 0
    for n in range(1, n_steps + 1):
        ut = _lap(u, grid.dx) - fld(x, u) + force
        min_ut = min(min_ut, float(ut.min()))
        u = u + dt * ut
        if k < len(snap_steps) and n == snap_steps[k]:
            if not np.all(np.isfinite(u)):
                raise SimulationError(f"non-finite height at step {n} (t={n * dt:g})")
            snaps.append(ContinuumState(u.copy(), grid, n * dt, n))
            k += 1
    final = ContinuumState(u, grid, n_steps * dt, n_steps)
    return ContinuumRun(config, snaps, final, min_ut, min_ut * dt)


# ----------------------------------------------------------------------------
# Off-node evaluation on the periodic grid
# ----------------------------------------------------------------------------


def _interp_periodic(values: np.ndarray, pos0: float, h: float, xq, period: float) -> np.ndarray:
    # values[k] lives at pos0 + k h, periodic with period n h
    n = len(values)
    s = (np.asarray(xq, dtype=np.float64) - pos0) / h
    k0 = np.floor(s + 1e-9)  # snap points sitting on a node to that node
    w = np.clip(s - k0, 0.0, 1.0)
    k0 = k0.astype(np.int64)
    return (1.0 - w) * values[k0 % n] + w * values[(k0 + 1) % n]


def value_at(state: ContinuumState, xq) -> np.ndarray:
    g = state.grid
    return _interp_periodic(state.u, 0.5 * g.dx, g.dx, xq, g.L_int)


def face_slopes(state: ContinuumState) -> np.ndarray:
    """Slopes at faces ``k dx``: ``(u_k - u_{k-1}) / dx``."""
    return (state.u - np.roll(state.u, 1)) / state.grid.dx


def slope_at(state: ContinuumState, xq) -> np.ndarray:
    g = state.grid
    return _interp_periodic(face_slopes(state), 0.0, g.dx, xq, g.L_int)


def cell_integral(values: np.ndarray, grid: Grid1D, a, b) -> np.ndarray:
    """Cell-average quadrature of a nodal field over ``[a, b]`` (periodic, ``a <= b``)."""
    dx, n, L = grid.dx, grid.n, grid.L_int
    csum = np.concatenate([[0.0], np.cumsum(values) * dx])
    total = csum[-1]

    def antideriv(x):
        x = np.asarray(x, dtype=np.float64)
        wraps = np.floor(x / L)
        xr = x - wraps * L
        k = np.minimum(np.floor(xr / dx + 1e-9).astype(np.int64), n - 1)
        frac = np.clip(xr - k * dx, 0.0, dx)
        return wraps * total + csum[k] + values[k] * frac

    return antideriv(b) - antideriv(a)


# ----------------------------------------------------------------------------
# Hat discretisation and the snapshot inequalities
# ----------------------------------------------------------------------------


@dataclass
class HatDiscretization:
    """Lattice view of a continuum snapshot.

    ``hat[i] = u(i - delta) + 2 delta u_x(i - delta)``; ``slope_minus`` and
    ``slope_plus`` are ``u_x(i -/+ delta)``; ``int_column`` and ``int_window``
    integrate ``u_t`` over ``[i - delta, i + delta]`` and
    ``[i - 1 - delta, i + 1 - delta]``.
    """

    sites: np.ndarray
    hat: np.ndarray
    slope_minus: np.ndarray
    slope_plus: np.ndarray
    delta: float
    t: float
    int_column: np.ndarray | None = None
    int_window: np.ndarray | None = None

    def laplacian(self) -> np.ndarray:
        return np.roll(self.hat, 1) + np.roll(self.hat, -1) - 2.0 * self.hat

    def _need_ut(self):
        if self.int_column is None:
            raise PreconditionError("u_t integrals missing; pass ut to hat_discretize")


def hat_discretize(state: ContinuumState, delta: float, ut: np.ndarray | None = None) -> HatDiscretization:
    g = state.grid
    i = np.arange(g.L_int)
    left = i - delta
    s_minus = slope_at(state, left)
    s_plus = slope_at(state, i + delta)
    hat = value_at(state, left) + 2.0 * delta * s_minus
    hd = HatDiscretization(i, hat, s_minus, s_plus, delta, state.t)
    if ut is not None:
        hd.int_column = cell_integral(ut, g, left, i + delta)
        hd.int_window = cell_integral(ut, g, i - 1 - delta, i + 1 - delta)
    return hd


def snapshot_hat(state: ContinuumState, config: ContinuumConfig) -> tuple[HatDiscretization, np.ndarray]:
    """Hat discretisation with ``u_t`` taken from the rhs at the snapshot."""
    ut = pde_rhs(state, config.field, config.F, config.modified)
    return hat_discretize(state, config.field.delta, ut), ut


def hat_lower_margin(hat: HatDiscretization, F: float) -> np.ndarray:
    """``hat_i + 2 delta (1 + t) F``; nonnegative for the modified problem."""
    return hat.hat + 2.0 * hat.delta * (1.0 + hat.t) * F


class UtReport(NamedTuple):
    min_ut: float
    min_increment: float
    tolerance: float
    passed: bool


def check_ut_nonneg(run: ContinuumRun, tol_scale: float = 1.0) -> UtReport:
    """Smallest nodal ``u_t`` over a modified-problem trajectory vs ``-(dx^2 + dt)``."""
    if not run.config.modified:
        raise PreconditionError("u_t >= 0 is only claimed for the modified problem")
    eps = tol_scale * (run.config.grid.dx**2 + run.config.time_step)
    return UtReport(run.min_ut, run.min_increment, eps, run.min_ut >= -eps)


def laplacian_margin(hat: HatDiscretization, F: float) -> np.ndarray:
    """RHS minus LHS of the discrete-Laplacian estimate, per site.

    ``lap(hat)_i <= (1 + 2d)[u_x(i+d) - u_x(i-d) - int_col u_t] - (1 - 2d) F
    + 2 (1 + d) int_win u_t``.
    """
    hat._need_ut()
    d = hat.delta
    jump = hat.slope_plus - hat.slope_minus - hat.int_column
    bound = (1 + 2 * d) * jump - (1 - 2 * d) * F + 2 * (1 + d) * hat.int_window
    return bound - hat.laplacian()


def corollary_margin(hat: HatDiscretization, F: float) -> np.ndarray:
    """``2(1+d) int_win u_t - (lap(hat) - (1+2d)[...] + (1-2d) F)^+`` per site."""
    hat._need_ut()
    d = hat.delta
    jump = hat.slope_plus - hat.slope_minus - hat.int_column
    inner = hat.laplacian() - (1 + 2 * d) * jump + (1 - 2 * d) * F
    return 2 * (1 + d) * hat.int_window - np.maximum(inner, 0.0)


class ObstacleReport(NamedTuple):
    """Per-site obstacle estimate.

    ``margins`` uses ``k(i) = u_x(i - d) - u_x(i + d)`` as printed;
    ``jump_margins`` uses the opposite orientation ``u_x(i + d) - u_x(i - d)``,
    the slope gain across a convex column. Skipped sites hold NaN.
    """

    k: np.ndarray
    bound: np.ndarray
    margins: np.ndarray
    jump_margins: np.ndarray
    skipped: int


def check_obstacle_estimate(hat: HatDiscretization, field: ObstacleField,
                            m_floor: float = 1e-6) -> ObstacleReport:
    hat._need_ut()
    d = hat.delta
    M = np.maximum(np.abs(hat.slope_minus), np.abs(hat.slope_plus))
    k = hat.slope_minus - hat.slope_plus
    n = len(hat.sites)
    bound = np.full(n, np.nan)
    active = M > m_floor
    for s in np.flatnonzero(active):
        lo = math.ceil(hat.hat[s] - 4 * d * M[s] - 1e-12)
        hi = math.floor(hat.hat[s] + 4 * d * M[s] + 1e-12)
        total = field.lattice.column(int(hat.sites[s]), lo, hi).sum() if hi >= lo else 0.0
        bound[s] = 18.0 * d / M[s] * total + hat.int_column[s]
    margins = np.where(active, bound - k, np.nan)
    jump_margins = np.where(active, bound + k, np.nan)
    return ObstacleReport(k, bound, margins, jump_margins, int((~active).sum()))


class ComparisonReport(NamedTuple):
    min_difference: float
    passed: bool


def comparison_check(run_u: ContinuumRun, run_mod: ContinuumRun, eps: float | None = None) -> ComparisonReport:
    """``u >= u_modified`` nodewise at every shared snapshot."""
    a, b = run_u.config, run_mod.config
    if a.grid != b.grid or a.field != b.field or a.F != b.F or a.time_step != b.time_step:
        raise PreconditionError("comparison needs identical grid, field, F and dt")
    if eps is None:
        eps = a.grid.dx**2 + a.time_step
    diffs = [float((su.u - sm.u).min()) for su, sm in zip(run_u.snapshots, run_mod.snapshots)]
    diffs.append(float((run_u.final.u - run_mod.final.u).min()))
    m = min(diffs)
    return ComparisonReport(m, m >= -eps)


def oscillation_over_t(state: ContinuumState) -> float:
    """``max_{x1, x2} |u(x2) - u(x1)| / t`` over the periodic domain."""
    return float((state.u.max() - state.u.min()) / state.t)


class SnapshotReport(NamedTuple):
    t: float
    U: float
    min_ut: float
    laplacian: float
    obstacle: float
    obstacle_jump: float
    corollary: float
    hat_lower: float
    skipped: int


def snapshot_report(state: ContinuumState, config: ContinuumConfig, m_floor: float = 1e-6) -> SnapshotReport:
    """Worst margins of every snapshot inequality (nan-aware for skipped sites)."""
    hat, ut = snapshot_hat(state, config)
    obs = check_obstacle_estimate(hat, config.field, m_floor)
    nanmin = lambda a: float(np.nanmin(a)) if np.any(np.isfinite(a)) else math.inf
    return SnapshotReport(
        t=state.t, U=averaged_height(state), min_ut=float(ut.min()),
        laplacian=float(laplacian_margin(hat, config.F).min()),
        obstacle=nanmin(obs.margins), obstacle_jump=nanmin(obs.jump_margins),
        corollary=float(corollary_margin(hat, config.F).min()),
        hat_lower=float(hat_lower_margin(hat, config.F).min()),
        skipped=obs.skipped,
    )
