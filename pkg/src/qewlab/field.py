"""Quenched obstacle fields.

Obstacle strengths ``f_ij`` live on the integer lattice and are generated by a
counter-style keyed hash of ``(seed, i, j)``, so a field is a pure function of
its seed and never has to be stored. Obstacle ``(i, j)`` is centred at
``(i, j + 1/2)`` and has support ``[-delta, delta]^2`` around its centre.

The module also builds the derived row envelopes used when the continuum
problem is reduced to the lattice one: the window-average envelope ``g_ij``
and its row-wise forms ``ftilde`` and ``fbar``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DomainError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53

FAMILIES = ("deterministic", "exponential", "uniform")


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser; uint64 arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64).view(np.uint64)


def keyed_hash(seed: int, *counters) -> np.ndarray:
    """64-bit hash of ``seed`` and integer counters (broadcast over arrays)."""
    with np.errstate(over="ignore"):
        h = _mix64(np.asarray(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) + _GOLDEN)
        for k, c in enumerate(counters, start=1):
            h = _mix64(h ^ _mix64(_as_u64(c) + _GOLDEN * np.uint64(k)))
    return h


def keyed_uniform(seed: int, *counters) -> np.ndarray:
    """Uniform variates in the open interval (0, 1) keyed by ``(seed, *counters)``."""
    h = keyed_hash(seed, *counters)
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def derive_seed(master: int, *counters) -> int:
    """Child seed for replica/cell ``counters``; same scheme as the field itself."""
    return int(keyed_hash(master, *counters))


@dataclass(frozen=True)
class StrengthDistribution:
    """Law of a single obstacle strength.

    ``param`` is the value ``a`` for ``deterministic``, the rate ``r`` for
    ``exponential`` and the upper end ``a`` for ``uniform``. ``lam`` is the
    exponential-moment parameter the law is paired with.
    """

    family: str
    param: float
    lam: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.param < 0 or (self.family == "exponential" and self.param <= 0):
            raise DomainError(f"{self.family} parameter must be positive, got {self.param}")
        if not self.lam > 0:
            raise DomainError(f"lam must be > 0, got {self.lam}")
        if self.family == "exponential" and self.lam >= self.param:
            raise DomainError(
                f"exponential moment infinite: lam={self.lam} must be < rate={self.param}"
            )

    @classmethod
    def deterministic(cls, a: float, lam: float = 1.0) -> "StrengthDistribution":
        return cls("deterministic", a, lam)

    @classmethod
    def exponential(cls, rate: float, lam: float = 0.5) -> "StrengthDistribution":
        return cls("exponential", rate, lam)

    @classmethod
    def uniform(cls, a: float, lam: float = 1.0) -> "StrengthDistribution":
        return cls("uniform", a, lam)

    @property
    def beta(self) -> float:
        return exp_moment(self, self.lam)

    @property
    def mean(self) -> float:
        if self.family == "exponential":
            return 1.0 / self.param
        if self.family == "uniform":
            return self.param / 2.0
        return self.param

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Inverse-CDF transform of uniforms in (0, 1)."""
        u = np.asarray(u, dtype=np.float64)
        if self.family == "exponential":
            return -np.log(u) / self.param
        if self.family == "uniform":
            return self.param * u
        return np.full_like(u, float(self.param))


def exp_moment(dist: StrengthDistribution, lam: float) -> float:
    """Closed-form ``E exp(lam * X)`` for ``X ~ dist``."""
    a = dist.param
    if dist.family == "deterministic":
        return math.exp(lam * a)
    if dist.family == "exponential":
        if lam >= a:
            raise DomainError(f"E exp(lam X) infinite for Exponential({a}) at lam={lam}")
        return a / (a - lam)
    # uniform(0, a)
    x = lam * a
    if x == 0.0:
        return 1.0
    return math.expm1(x) / x


@dataclass(frozen=True)
class ObstacleLattice:
    """Seeded iid strengths ``f_ij`` on Z^2."""

    seed: int
    dist: StrengthDistribution

    def strength_at(self, i, j):
        """Strength of obstacle ``(i, j)``; broadcasts over integer arrays."""
        if self.dist.family == "deterministic":
            out = np.full(np.broadcast(np.asarray(i), np.asarray(j)).shape, float(self.dist.param))
        else:
            out = self.dist.from_uniform(keyed_uniform(self.seed, i, j))
        return out if out.ndim else float(out)

    def column(self, i: int, j_lo: int, j_hi: int) -> np.ndarray:
        """Strengths ``f_{i, j_lo..j_hi}`` (inclusive)."""
        return np.asarray(self.strength_at(i, np.arange(j_lo, j_hi + 1)), dtype=np.float64)


def cos2_bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    return np.where(np.abs(s) <= 1.0, np.cos(0.5 * np.pi * s) ** 2, 0.0)


@dataclass(frozen=True)
class BumpProfile:
    """Obstacle shape ``phi(x, y) = shape(x / delta, y / delta)``.

    ``shape`` maps the unit square into [0, 1], peaks at 1 at the origin and
    vanishes with its gradient on the boundary. The default is the product of
    squared-cosine half bumps.
    """

    delta: float = 0.25
    shape: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.delta < 0.5:
            raise DomainError(f"delta must satisfy 0 < delta < 1/2, got {self.delta}")

    def __call__(self, x, y) -> np.ndarray:
        sx = np.asarray(x, dtype=np.float64) / self.delta
        sy = np.asarray(y, dtype=np.float64) / self.delta
        inside = (np.abs(sx) <= 1.0) & (np.abs(sy) <= 1.0)
        if self.shape is None:
            val = cos2_bump(sx) * cos2_bump(sy)
        else:
            val = np.asarray(self.shape(np.clip(sx, -1, 1), np.clip(sy, -1, 1)), dtype=np.float64)
        return np.where(inside, val, 0.0)


def field_eval(lattice: ObstacleLattice, profile: BumpProfile, x, y):
    """Continuum field ``f(x, y) = sum_ij f_ij phi(x - i, y - j - 1/2)``.

    Since ``delta < 1/2`` the support boxes are disjoint, so at most one
    obstacle contributes at any point: the one with ``i`` nearest to ``x`` and
    ``j + 1/2`` nearest to ``y``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x, y = np.broadcast_arrays(x, y)
    i = np.rint(x)
    j = np.floor(y)
    dx = x - i
    dy = y - j - 0.5
    d = profile.delta
    inside = (np.abs(dx) <= d) & (np.abs(dy) <= d)
    out = np.zeros(x.shape)
    if np.any(inside):
        ii = i[inside].astype(np.int64)
        jj = j[inside].astype(np.int64)
        out[inside] = np.asarray(lattice.strength_at(ii, jj)) * profile(dx[inside], dy[inside])
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ObstacleField:
    """A lattice and a bump shape bundled as the continuum field ``f(x, y)``."""

    lattice: ObstacleLattice
    profile: BumpProfile

    @property
    def delta(self) -> float:
        return self.profile.delta

    def __call__(self, x, y):
        return field_eval(self.lattice, self.profile, x, y)


@dataclass(frozen=True)
class GEnvelopeParams:
    """Truncation of the supremum over window scales ``M``."""

    m_max: int = 64

    def __post_init__(self):
        if self.m_max < 1:
            raise DomainError(f"m_max must be >= 1, got {self.m_max}")


class GStrength(NamedTuple):
    value: float
    m_star: int
    interior: bool
    envelope: float


def _half_widths(delta: float, m_max: int) -> np.ndarray:
    m = np.arange(1, m_max + 1)
    # l ranges over integers with |l - j| <= 4 delta M
    return np.floor(4.0 * delta * m + 1e-12).astype(np.int64)


def g_table(lattice: ObstacleLattice, delta: float, i: int, j_lo: int, j_hi: int,
            params: GEnvelopeParams = GEnvelopeParams(), detail: bool = False):
    """Vectorised ``g_ij`` for rows ``j_lo..j_hi`` of column ``i``.

    ``g_ij = 1 + (1 + 2 delta) max_{1<=M<=m_max} (36 delta / M) sum_{|l-j|<=4 delta M} f_il``.
    With ``detail=True`` also returns the maximising ``M`` per row and the
    dominating envelope ``1 + 180 max_N avg_{|k-j|<=N} f_ik``.
    """
    widths = _half_widths(delta, params.m_max)
    pad = int(widths[-1])
    f = lattice.column(i, j_lo - pad, j_hi + pad)
    csum = np.concatenate([[0.0], np.cumsum(f)])
    rows = np.arange(j_hi - j_lo + 1) + pad  # index of row j in f
    m = np.arange(1, params.m_max + 1)
    sums = csum[rows[:, None] + widths[None, :] + 1] - csum[rows[:, None] - widths[None, :]]
    scaled = (36.0 * delta / m)[None, :] * sums
    k = np.argmax(scaled, axis=1)
    best = scaled[np.arange(len(rows)), k]
    g = 1.0 + (1.0 + 2.0 * delta) * best
    if not detail:
        return g
    n = np.arange(pad + 1)
    avgs = (csum[rows[:, None] + n[None, :] + 1] - csum[rows[:, None] - n[None, :]]) / (2 * n + 1)
    envelope = 1.0 + 180.0 * avgs.max(axis=1)
    return g, k + 1, envelope


def g_strength(lattice: ObstacleLattice, profile: BumpProfile, i: int, j: int,
               params: GEnvelopeParams = GEnvelopeParams()) -> GStrength:
    """Envelope ``g_ij`` dominating the slope jump an interface can pick up in column ``i``.

    ``interior`` is False when the maximising window scale sits at ``m_max``,
    i.e. the truncated supremum may not have stabilised.
    """
    g, m_star, env = g_table(lattice, profile.delta, i, j, j, params, detail=True)
    m_star = int(m_star[0])
    return GStrength(float(g[0]), m_star, m_star < params.m_max, float(env[0]))


def nearest_row(y):
    """Row index ``ceil(y - 1/2)``: nearest integer to ``y``, ties rounded up."""
    r = np.ceil(np.asarray(y, dtype=np.float64) - 0.5).astype(np.int64)
    return r if r.ndim else int(r)


def ftilde(lattice: ObstacleLattice, profile: BumpProfile, i: int, y: float,
           params: GEnvelopeParams = GEnvelopeParams()) -> float:
    return g_strength(lattice, profile, i, nearest_row(y), params).value


def fbar(lattice: ObstacleLattice, profile: BumpProfile, i: int, j: int,
         params: GEnvelopeParams = GEnvelopeParams()) -> float:
    """Supremum of ``ftilde(i, .)`` over the row ``(j - 1/2, j + 1/2]``.

    ``ftilde`` is constant on each such row, so this is ``g_ij``.
    """
    return g_strength(lattice, profile, i, j, params).value
