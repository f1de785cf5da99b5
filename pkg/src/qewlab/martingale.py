"""Path-ensemble partition sums and their supermartingale property.

A path is an integer sequence ``w_{-1}, w_0, ..., w_n`` with prescribed first
two entries. Each path carries the weight ``exp(lam v_n - mu s_n)`` where
``v_n = w_n - w_{n-1}`` and

    s_n = sum_{i<n} (w_{i-1} + w_{i+1} - 2 w_i - fbar_i(w_i) + F)^+.

``Y_n`` sums the weights over all paths. It is computed by dynamic
programming over the state ``(w_{i-1}, w_i)`` with positions confined to a
window; the mass that leaves the window is tracked and propagated with the
one-step bound ``sum_j e^{lam j - mu (j - c)^+} <= p(lam, mu) e^{lam c}`` to
give a tail bound on the truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .bounds import beta_tilde_generic, gamma, p
from .errors import DomainError, WindowTooNarrowError
from .field import ObstacleLattice, StrengthDistribution, derive_seed, exp_moment


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    lam: float
    mu: float
    F: float
    w_min: int = -10
    w_max: int = 10
    w_start: tuple[int, int] = (0, 0)
    eps_tail: float = 1e-8

    def __post_init__(self):
        if self.n < 0:
            raise DomainError(f"n must be >= 0, got {self.n}")
        if not self.mu > self.lam > 0:
            raise DomainError(f"need mu > lam > 0, got lam={self.lam}, mu={self.mu}")
        if not self.w_min <= min(self.w_start) <= max(self.w_start) <= self.w_max:
            raise DomainError(f"window [{self.w_min}, {self.w_max}] must contain w_start={self.w_start}")
        if not self.eps_tail > 0:
            raise DomainError("eps_tail must be > 0")

    @property
    def positions(self) -> np.ndarray:
        return np.arange(self.w_min, self.w_max + 1)

    @property
    def gamma_factor(self) -> float:
        """``p(lam, mu) e^{-lam F}``; multiply by ``beta`` for gamma."""
        return p(self.lam, self.mu) * math.exp(-self.lam * self.F)

    def widened(self, extra: int) -> "EnsembleConfig":
        return EnsembleConfig(self.n, self.lam, self.mu, self.F, self.w_min - extra,
                              self.w_max + extra, self.w_start, self.eps_tail)


class FieldRealization:
    """Row obstacles ``fbar_i(w)`` for rows ``i`` and heights ``w_lo..w_lo+P-1``.

    ``values`` has shape ``(..., rows, P)``; leading axes index independent
    realisations. Heights outside the table are treated as carrying at most
    the table maximum of their row (``row_cap``), which is what the tail bound
    assumes.
    """

    def __init__(self, values, w_lo: int):
        self.values = np.asarray(values, dtype=np.float64)
        self.w_lo = int(w_lo)

    @property
    def w_hi(self) -> int:
        return self.w_lo + self.values.shape[-1] - 1

    @property
    def rows(self) -> int:
        return self.values.shape[-2]

    def __call__(self, i: int, w: int) -> float:
        if not self.w_lo <= w <= self.w_hi:
            raise IndexError(f"height {w} outside realization table [{self.w_lo}, {self.w_hi}]")
        return float(self.values[..., i, w - self.w_lo])

    def window(self, w_min: int, w_max: int) -> np.ndarray:
        if w_min < self.w_lo or w_max > self.w_hi:
            raise IndexError(f"window [{w_min}, {w_max}] outside table [{self.w_lo}, {self.w_hi}]")
        return self.values[..., w_min - self.w_lo: w_max - self.w_lo + 1]

    def row_cap(self) -> np.ndarray:
        return self.values.max(axis=-1)

    @classmethod
    def constant(cls, c: float, rows: int, w_lo: int, w_hi: int) -> "FieldRealization":
        return cls(np.full((rows, w_hi - w_lo + 1), float(c)), w_lo)

    @classmethod
    def from_lattice(cls, lattice: ObstacleLattice, rows: int, w_lo: int, w_hi: int,
                     row_offset: int = 0) -> "FieldRealization":
        i = np.arange(row_offset, row_offset + rows)[:, None]
        w = np.arange(w_lo, w_hi + 1)[None, :]
        return cls(np.asarray(lattice.strength_at(i, w), dtype=np.float64).reshape(rows, -1), w_lo)

    @classmethod
    def sample(cls, dist: StrengthDistribution, seed: int, replicas: int, rows: int,
               w_lo: int, w_hi: int) -> "FieldRealization":
        """``replicas`` independent realisations; replica ``r`` uses ``derive_seed(seed, r)``."""
        vals = [cls.from_lattice(ObstacleLattice(derive_seed(seed, r), dist), rows, w_lo, w_hi).values
                for r in range(replicas)]
        return cls(np.stack(vals), w_lo)


def path_functionals(w, field, F: float) -> tuple[int, float]:
    """``(v_n, s_n)`` for a path given as ``[w_{-1}, w_0, ..., w_n]``.

    ``field(i, w)`` returns ``fbar_i(w)``.
    """
    w = [int(x) for x in w]
    n = len(w) - 2
    if n < 0:
        raise DomainError("a path needs at least w_{-1} and w_0")
    s = 0.0
    for i in range(n):
        prev, cur, nxt = w[i], w[i + 1], w[i + 2]
        s += max(prev + nxt - 2 * cur - field(i, cur) + F, 0.0)
    return w[-1] - w[-2], s


# ----------------------------------------------------------------------------
# Closed-form sums over one increment
# ----------------------------------------------------------------------------


def _increment_sums(c: np.ndarray, lam: float, mu: float, j_lo=None, j_hi=None) -> np.ndarray:
    """``sum_j e^{lam j - mu (j - c)^+}`` over all ``j`` outside ``[j_lo, j_hi]``.

    With ``j_lo = j_hi = None`` the sum runs over all of Z (the conditional
    expectation step). The split point is ``m = ceil(c)``: below it the weight
    is ``e^{lam j}``, from it on ``e^{(lam - mu) j + mu c}``.
    """
    c = np.asarray(c, dtype=np.float64)
    m = np.ceil(c)
    a_left = 1.0 / -math.expm1(-lam)  # sum_{k>=0} e^{-lam k}
    a_right = 1.0 / -math.expm1(lam - mu)  # sum_{k>=0} e^{(lam - mu) k}
    if j_lo is None:
        return np.exp((lam - mu) * m + mu * c) * a_right + np.exp(lam * (m - 1)) * a_left
    j_lo = np.asarray(j_lo, dtype=np.float64)
    j_hi = np.asarray(j_hi, dtype=np.float64)
    # j <= j_lo - 1
    top = j_lo - 1
    left = np.exp(lam * np.minimum(top, m - 1)) * a_left
    left += np.where(top >= m,
                     np.exp(mu * c + (lam - mu) * m) * -np.expm1((lam - mu) * (top - m + 1)) * a_right,
                     0.0)
    # j >= j_hi + 1
    bot = j_hi + 1
    right = np.exp(mu * c + (lam - mu) * np.maximum(bot, m)) * a_right
    right += np.where(bot < m,
                      np.exp(lam * bot) * -np.expm1(lam * (m - bot)) / -math.expm1(lam),
                      0.0)
    # the -expm1(lam x)/-expm1(lam) form equals sum_{k<x} e^{lam k}
    return left + right


class PathWeights(NamedTuple):
    """DP table over ``(w_{n-1}, w_n)`` (up to the factor ``exp(log_scale)``)."""

    table: np.ndarray
    log_scale: np.ndarray
    log_Y: np.ndarray
    tail_bound: np.ndarray
    positions: np.ndarray

    @property
    def Y(self) -> np.ndarray:
        return np.exp(self.log_Y)


def _kernel(x: np.ndarray, fb: np.ndarray, F: float, mu: float) -> np.ndarray:
    # K[r, a, b, c] = exp(-mu (x_a + x_c - 2 x_b - f_b + F)^+)
    arg = (x[None, :, None, None] + x[None, None, None, :] - 2.0 * x[None, None, :, None]
           - fb[:, None, :, None] + F)
    return np.exp(-mu * np.maximum(arg, 0.0))


def ensemble_weights(config: EnsembleConfig, field: FieldRealization, n: int | None = None,
                     history: bool = False):
    """Window-truncated DP for ``Y_n`` over a batch of realisations.

    Returns a :class:`PathWeights` with leading axis over realisations (a
    single realisation gets a leading axis of length 1). With ``history=True``
    returns a list with the weights after every step ``0..n``.
    """
    n = config.n if n is None else n
    lam, mu, F = config.lam, config.mu, config.F
    x = config.positions.astype(np.float64)
    P = len(x)
    fw = field.window(config.w_min, config.w_max)
    if fw.ndim == 2:
        fw = fw[None]
    caps = field.row_cap()
    if caps.ndim == 1:
        caps = caps[None]
    R = fw.shape[0]
    if fw.shape[1] < n:
        raise DomainError(f"realization has {fw.shape[1]} rows, need {n}")

    a0, b0 = config.w_start[0] - config.w_min, config.w_start[1] - config.w_min
    T = np.zeros((R, P, P))
    T[:, a0, b0] = 1.0
    log_scale = np.zeros(R)
    tail = np.zeros(R)  # bound on the missing part of Y, in units of exp(log_scale)
    v = x[None, :] - x[:, None]  # v[a, b] = x_b - x_a
    lam_v = np.exp(lam * v)

    def snapshot():
        y = np.einsum("rab,ab->r", T, lam_v)
        with np.errstate(divide="ignore"):
            log_y = np.log(y) + log_scale
        return PathWeights(T.copy(), log_scale.copy(), log_y, tail * np.exp(log_scale), config.positions)

    out = [snapshot()] if history else None
    for i in range(n):
        fb = fw[:, i, :]
        # exit mass: increments j = c - b that land outside the window
        c = v[None] + fb[:, None, :] - F
        j_lo = (config.w_min - x)[None, None, :]
        j_hi = (config.w_max - x)[None, None, :]
        exit_mass = np.einsum("rab,rab->r", T, _increment_sums(c, lam, mu, j_lo, j_hi))
        rho = p(lam, mu) * np.exp(lam * (caps[:, i] - F))
        tail = (tail * rho) + exit_mass  # everything missing so far, propagated one step
        T = np.einsum("rab,rabc->rbc", T, _kernel(x, fb, F, mu))
        s = T.sum(axis=(1, 2))
        s = np.where(s > 0, s, 1.0)
        T /= s[:, None, None]
        tail /= s
        log_scale += np.log(s)
        if history:
            out.append(snapshot())
    return out if history else snapshot()


def Y_n_exact(config: EnsembleConfig, field: FieldRealization, check_tail: bool = True) -> tuple[float, float]:
    """``(Y_n, tail_bound)`` for a single realisation.

    The true (unbounded) sum lies in ``[Y_n, Y_n + tail_bound]``. With
    ``check_tail`` a tail above ``eps_tail * Y_n`` raises
    :class:`WindowTooNarrowError` carrying a suggested half-width.
    """
    pw = ensemble_weights(config, field)
    Y, tail = float(pw.Y[0]), float(pw.tail_bound[0])
    if check_tail and tail > config.eps_tail * Y:
        half = max(config.w_max - config.w_start[1], config.w_start[1] - config.w_min)
        raise WindowTooNarrowError(
            f"tail bound {tail:.3g} exceeds eps_tail * Y_n = {config.eps_tail * Y:.3g}; "
            f"try half-width {2 * half}", 2 * half)
    return Y, tail


# ----------------------------------------------------------------------------
# Checks
# ----------------------------------------------------------------------------


class SupermartingaleReport(NamedTuple):
    """Ratios ``E(Y_{n+1} | F_n) / Y_n`` per realisation against gamma.

    For deterministic strengths ``ratio_se`` is zero and ``passed`` means every
    ratio is ``<= gamma``. Otherwise each ratio is an inner Monte Carlo
    average; ``passed`` compares the 95% upper confidence bound of their mean
    with ``tolerance * gamma``, and ``n_exceed_99`` counts realisations whose
    one-sided 99% lower bound already exceeds gamma.
    """

    ratios: np.ndarray
    ratio_se: np.ndarray
    gamma: float
    mean: float
    se: float
    ucb95: float
    max_ratio: float
    n_exceed_99: int
    passed: bool


def conditional_ratios(config: EnsembleConfig, field: FieldRealization, next_row: np.ndarray):
    """``E(Y_{n+1} | F_n) / Y_n`` with row ``n`` replaced by samples ``next_row``.

    ``next_row`` has shape ``(R, K, P)``: ``K`` draws of the fresh row per
    realisation. Returns per-draw ratios of shape ``(R, K)``; averaging over
    ``K`` estimates the conditional expectation.
    """
    pw = ensemble_weights(config, field)
    x = config.positions.astype(np.float64)
    v = x[None, :] - x[:, None]
    T = pw.table  # (R, P, P) over (a, b)
    Yn = np.einsum("rab,ab->r", T, np.exp(config.lam * v))
    c = v[None, None] + next_row[:, :, None, :] - config.F  # (R, K, a, b)
    total = _increment_sums(c, config.lam, config.mu)
    num = np.einsum("rab,rkab->rk", T, total)
    return num / Yn[:, None]


def supermartingale_check(config: EnsembleConfig, dist: StrengthDistribution, replicas: int,
                          seed: int = 0, inner_samples: int = 32, tolerance: float = 1.01,
                          chunk: int = 500, rtol_exact: float = 1e-12) -> SupermartingaleReport:
    """Compare conditional ratios with ``gamma = beta e^{-lam F} p(lam, mu)``.

    ``beta = E exp(lam fbar)`` is computed from ``dist`` at the ensemble's
    ``lam``. Exact ratios pass if they are at most ``gamma (1 + rtol_exact)``. Rows ``0..n-1`` come from the realisation seeds; the fresh row
    ``n`` uses a separate key per realisation.
    """
    if replicas < 1:
        raise DomainError("replicas must be >= 1")
    beta = exp_moment(dist, config.lam)
    g = gamma(config.lam, config.mu, beta, config.F)
    exact = dist.family == "deterministic"
    K = 1 if exact else inner_samples
    P = config.w_max - config.w_min + 1
    ratios, ses = [], []
    for start in range(0, replicas, chunk):
        stop = min(start + chunk, replicas)
        rows = []
        nxt = []
        for r in range(start, stop):
            lat = ObstacleLattice(derive_seed(seed, r), dist)
            rows.append(FieldRealization.from_lattice(lat, max(config.n, 1), config.w_min, config.w_max).values)
            inner = ObstacleLattice(derive_seed(seed, r, 1), dist)
            k = np.arange(K)[:, None]
            w = np.arange(config.w_min, config.w_max + 1)[None, :]
            nxt.append(np.asarray(inner.strength_at(k, w)).reshape(K, P))
        fr = FieldRealization(np.stack(rows), config.w_min)
        rk = conditional_ratios(config, fr, np.stack(nxt))
        ratios.append(rk.mean(axis=1))
        ses.append(rk.std(axis=1, ddof=1) / math.sqrt(K) if K > 1 else np.zeros(stop - start))
    ratios = np.concatenate(ratios)
    ses = np.concatenate(ses)
    mean = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(len(ratios))) if len(ratios) > 1 else 0.0
    ucb = mean + 1.6448536269514722 * se
    if exact:
        # the row-sum bound is strict, so rtol_exact only absorbs rounding
        exceed = int(np.sum(ratios > g * (1.0 + rtol_exact)))
        passed = exceed == 0
    else:
        exceed = int(np.sum(ratios - 2.3263478740408408 * ses > g))
        passed = bool(ucb <= tolerance * g)
    return SupermartingaleReport(ratios, ses, g, mean, se, ucb, float(ratios.max()), exceed, passed)


class GrowthRow(NamedTuple):
    """``rate`` uses the window sum; ``rate_upper`` adds the tail bound."""

    replica: int
    n: int
    rate: float
    rate_upper: float
    limit: float
    flagged: bool


def growth_rate_check(config: EnsembleConfig, dist: StrengthDistribution, n_list, replicas: int = 1,
                      seed: int = 0, slack: float = 5.0):
    """Tabulate ``(1/n) log Y_n`` against ``log gamma + slack / n``.

    Returns ``(rows, Z)`` where ``Z[r, n] = Y_n / gamma^n`` along the whole
    path ``n = 0..max(n_list)`` for each realisation.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise DomainError("n_list must be strictly increasing positive integers")
    n_max = n_list[-1]
    beta = exp_moment(dist, config.lam)
    log_g = math.log(gamma(config.lam, config.mu, beta, config.F))
    fr = FieldRealization.sample(dist, seed, replicas, n_max, config.w_min, config.w_max)
    hist = ensemble_weights(config, fr, n=n_max, history=True)
    log_Y = np.stack([h.log_Y for h in hist], axis=1)  # (R, n_max + 1)
    tails = np.stack([h.tail_bound for h in hist], axis=1)
    log_upper = np.log(np.exp(log_Y) + tails)
    rows = []
    for r in range(replicas):
        for n in n_list:
            rate = float(log_Y[r, n] / n)
            limit = log_g + slack / n
            rows.append(GrowthRow(r, n, rate, float(log_upper[r, n] / n), limit, rate > limit))
    Z = np.exp(log_Y - np.arange(n_max + 1)[None, :] * log_g)
    return rows, Z


class MomentReport(NamedTuple):
    estimate: float
    se: float
    bound: float
    passed: bool


def sup_avg_moment_check(dist: StrengthDistribution, lam: float, lam_tilde: float, N_max: int,
                         samples: int, seed: int = 0, chunk: int = 4096) -> MomentReport:
    """Monte Carlo ``E exp(lam_tilde max_{N <= N_max} mean(X_1..X_N))`` vs ``beta_tilde``.

    Sample ``s`` uses the strengths ``f_{s, 1..N_max}`` of a keyed lattice, so
    changing ``N_max`` or ``samples`` reuses the same variates.
    """
    if not 0 < lam_tilde < lam:
        raise DomainError(f"need 0 < lam_tilde < lam, got {lam_tilde}, {lam}")
    if N_max < 1:
        raise DomainError("N_max must be >= 1")
    beta = exp_moment(dist, lam)
    bound = beta_tilde_generic(lam, beta, lam_tilde).value
    if dist.family == "deterministic":
        # every running average equals the constant
        est = math.exp(lam_tilde * dist.param)
        return MomentReport(est, 0.0, bound, est <= bound)
    lat = ObstacleLattice(seed, dist)
    counts = np.arange(1, N_max + 1)
    vals = []
    for start in range(0, samples, chunk):
        s = np.arange(start, min(start + chunk, samples))[:, None]
        X = np.asarray(lat.strength_at(s, counts[None, :]), dtype=np.float64).reshape(len(s), N_max)
        S = (np.cumsum(X, axis=1) / counts).max(axis=1)
        vals.append(np.exp(lam_tilde * S))
    vals = np.concatenate(vals)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return MomentReport(est, se, bound, est + 3.0 * se <= bound)
