"""Closed-form velocity lower bounds and their ingredients.

All rate functions here share one shape: a supremum over ``mu > lam`` of
``(lam * X - log p(lam, mu) - log beta) / mu``. ``maximize_over_mu`` does the
optimisation (log-spaced grid scan, then golden-section refinement around the
best grid point) and the public functions wrap it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, optimize

from .errors import DivergenceError, DomainError


@dataclass(frozen=True)
class RateParams:
    lam: float
    beta: float
    delta: float | None = None
    F: float | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError(f"lam must be > 0, got {self.lam}")
        if not self.beta >= 1:
            raise DomainError(f"beta must be >= 1, got {self.beta}")
        if self.delta is not None and not 0 < self.delta < 0.5:
            raise DomainError(f"delta must satisfy 0 < delta < 1/2, got {self.delta}")


@dataclass(frozen=True)
class OptimizerConfig:
    """Knobs for the mu-supremum, the c-infimum and the tail quadrature.

    mu_lo/mu_hi are offsets above lam; c_hi is a multiple of the c-threshold.
    """

    mu_lo: float = 1e-6
    mu_hi: float = 1e3
    mu_points: int = 200
    rel_tol: float = 1e-8
    c_points: int = 200
    c_hi: float = 1e3
    c_refine: bool = True
    quad_tol: float = 1e-10

    def __post_init__(self):
        if not 0 < self.mu_lo < self.mu_hi:
            raise DomainError("mu grid must satisfy 0 < mu_lo < mu_hi (offsets above lam)")
        if self.mu_points < 3 or self.c_points < 3:
            raise DomainError("grids need at least 3 points")
        if not self.quad_tol > 0:
            raise DomainError("quad_tol must be > 0")


DEFAULT_OPT = OptimizerConfig()


class RateSup(NamedTuple):
    """Result of a clamped supremum over mu.

    ``raw`` is the unclamped supremum estimate and ``value = max(raw, 0)``.
    ``mu`` is the maximiser, or None when the value is clamped to zero.
    ``interior`` is False when the best grid point sits on a grid edge.
    """

    value: float
    mu: float | None
    raw: float
    grid_max: float
    interior: bool


def p(l: float, m: float) -> float:
    """``1 / (1 - e^{-l}) + 1 / (1 - e^{l - m})`` for ``0 < l < m``."""
    if not l > 0:
        raise DomainError(f"p(l, m) needs l > 0, got l={l}")
    if not m > l:
        raise DomainError(f"p(l, m) needs m > l, got l={l}, m={m}")
    return -1.0 / math.expm1(-l) - 1.0 / math.expm1(l - m)


def gamma(lam: float, mu: float, beta: float, F: float) -> float:
    """Per-step contraction factor ``beta e^{-lam F} p(lam, mu)``."""
    if beta < 1:
        raise DomainError(f"beta must be >= 1, got {beta}")
    return beta * math.exp(-lam * F) * p(lam, mu)


def maximize_over_mu(objective: Callable[[float], float], lam: float,
                     opt: OptimizerConfig = DEFAULT_OPT) -> RateSup:
    """Supremum of ``objective(mu)`` over ``mu > lam``, clamped at zero."""
    mus = lam + np.geomspace(opt.mu_lo, opt.mu_hi, opt.mu_points)
    vals = np.array([objective(m) for m in mus])
    k = int(np.argmax(vals))
    grid_max = float(vals[k])
    interior = 0 < k < len(mus) - 1
    best_mu, best = float(mus[k]), grid_max
    neg = lambda m: -objective(m)
    if interior:
        res = optimize.minimize_scalar(neg, bracket=(mus[k - 1], mus[k], mus[k + 1]),
                                       method="golden", tol=opt.rel_tol)
        if -res.fun > best and mus[k - 1] < res.x < mus[k + 1]:
            best_mu, best = float(res.x), float(-res.fun)
    else:
        lo, hi = (mus[0] - 0.5 * (mus[0] - lam), mus[1]) if k == 0 else (mus[-2], mus[-1])
        res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                       options={"xatol": opt.rel_tol * hi})
        if -res.fun > best:
            best_mu, best = float(res.x), float(-res.fun)
    if best > 0:
        return RateSup(best, best_mu, best, grid_max, interior)
    return RateSup(0.0, None, best, grid_max, interior)


def _rate_objective(lam: float, drive: float, beta: float):
    log_beta = math.log(beta)

    def obj(mu: float) -> float:
        return (lam * drive - math.log(p(lam, mu)) - log_beta) / mu

    return obj


def wbar(F: float, lam: float, beta: float, opt: OptimizerConfig = DEFAULT_OPT) -> RateSup:
    """Lattice-path velocity bound ``sup_mu (lam F - log p - log beta) / mu``, clamped at 0."""
    RateParams(lam, beta)
    return maximize_over_mu(_rate_objective(lam, F, beta), lam, opt)


def w_bound(F: float, lam: float, beta: float, opt: OptimizerConfig = DEFAULT_OPT) -> RateSup:
    """Discrete-model bound ``W(F) = Wbar(F - 2)``; the shift pays for rounding heights."""
    return wbar(F - 2.0, lam, beta, opt)


def v_bound(F: float, lam_tilde: float, beta_tilde: float, delta: float,
            opt: OptimizerConfig = DEFAULT_OPT) -> RateSup:
    """Continuum bound ``V(F)``, evaluated directly from its own supremum.

    Equals ``W((1 - 2 delta) F) / (4 (1 + delta))`` with ``(lam_tilde, beta_tilde)``.
    The returned ``raw``/``grid_max`` are on the same 1/(4(1+delta)) scale.
    """
    RateParams(lam_tilde, beta_tilde, delta)
    scale = 4.0 * (1.0 + delta)
    drive = (1.0 - 2.0 * delta) * F - 2.0
    inner = _rate_objective(lam_tilde, drive, beta_tilde)
    r = maximize_over_mu(inner, lam_tilde, opt)
    return RateSup(r.value / scale, r.mu, r.raw / scale, r.grid_max / scale, r.interior)


def positivity_threshold(lam: float, beta: float) -> float:
    """Drive above which ``Wbar`` is strictly positive (the mu -> infinity argument)."""
    RateParams(lam, beta)
    return (math.log(beta) + math.log(1.0 - 1.0 / math.expm1(-lam))) / lam


# ----------------------------------------------------------------------------
# Exponential moment of the running-average supremum
# ----------------------------------------------------------------------------


def _tail_integrand(a: float, beta: float):
    log_beta = math.log(beta)

    def g(x: float) -> float:
        z = log_beta - a * math.log(x)  # log(beta x^-a)
        return math.exp(z) / -math.expm1(z)

    return g


def tail_integral(c: float, a: float, beta: float, tol: float = 1e-10) -> tuple[float, float]:
    """``int_c^inf beta x^-a / (1 - beta x^-a) dx`` for ``a > 1`` and ``beta c^-a < 1``.

    Adaptive quadrature covers ``[c, X]`` where ``beta X^-a <= 1/2``; beyond ``X``
    the integrand is expanded as a geometric series and integrated term by
    term, ``sum_k beta^k X^{1 - a k} / (a k - 1)``. Returns ``(value, error)``.
    """
    if not a > 1:
        raise DivergenceError(f"tail integral diverges for exponent a={a} <= 1")
    if beta * c ** (-a) >= 1:
        raise DomainError(f"c={c} is at or below the threshold beta^(1/a)={beta ** (1 / a)}")
    x_cut = max(c, (2.0 * beta) ** (1.0 / a))
    head, head_err = 0.0, 0.0
    if x_cut > c:
        head, head_err = integrate.quad(_tail_integrand(a, beta), c, x_cut,
                                        epsabs=tol / 2, epsrel=1e-13, limit=200)
    q = beta * x_cut ** (-a)
    tail, k, term = 0.0, 1, math.inf
    while True:
        term = x_cut * q**k / (a * k - 1.0)
        tail += term
        if term * q / (1.0 - q) < tol * 1e-3 or k > 2000:
            break
        k += 1
    return head + tail, head_err + term * q / (1.0 - q)


class BetaTilde(NamedTuple):
    value: float
    c_star: float
    threshold: float


def _beta_tilde_core(a: float, beta: float, opt: OptimizerConfig) -> BetaTilde:
    c0 = beta ** (1.0 / a)
    J = lambda c: c + tail_integral(c, a, beta, opt.quad_tol)[0]
    cs = c0 * np.geomspace(1.0 + 1e-6, opt.c_hi, opt.c_points)
    vals = np.array([J(c) for c in cs])
    k = int(np.argmin(vals))
    c_star, best = float(cs[k]), float(vals[k])
    if opt.c_refine:
        lo, hi = cs[max(k - 1, 0)], cs[min(k + 1, len(cs) - 1)]
        res = optimize.minimize_scalar(J, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12 * hi})
        if res.fun < best:
            c_star, best = float(res.x), float(res.fun)
    return BetaTilde(best, c_star, c0)


def beta_tilde_generic(lam: float, beta: float, lam_tilde: float,
                       opt: OptimizerConfig = DEFAULT_OPT) -> BetaTilde:
    """Bound on ``E exp(lam_tilde sup_N mean(X_1..X_N))`` given ``E exp(lam X) = beta``.

    ``inf_{c > beta^(lam_tilde/lam)} c + int_c^inf beta x^-a / (1 - beta x^-a) dx``
    with ``a = lam / lam_tilde``.
    """
    if not 0 < lam_tilde < lam:
        raise DivergenceError(f"need 0 < lam_tilde < lam, got lam_tilde={lam_tilde}, lam={lam}")
    if beta < 1:
        raise DomainError(f"beta must be >= 1, got {beta}")
    return _beta_tilde_core(lam / lam_tilde, beta, opt)


def beta_tilde_180(lam: float, beta: float, lam_tilde: float,
                   opt: OptimizerConfig = DEFAULT_OPT) -> BetaTilde:
    """Moment bound for the g-envelope obstacles (counting constant 180).

    The tail integrand decays like ``x^{-lam / (180 lam_tilde)}`` and is only
    integrable when ``lam_tilde < lam / 180``.
    """
    if not lam_tilde > 0:
        raise DomainError(f"lam_tilde must be > 0, got {lam_tilde}")
    if lam_tilde >= lam / 180.0:
        raise DivergenceError(
            f"integral diverges: need lam_tilde < lam/180 = {lam / 180.0:.6g}, got {lam_tilde}"
        )
    if beta < 1:
        raise DomainError(f"beta must be >= 1, got {beta}")
    core = _beta_tilde_core(lam / (180.0 * lam_tilde), beta, opt)
    scale = math.exp(lam_tilde)
    return BetaTilde(scale * core.value, core.c_star, core.threshold)


# ----------------------------------------------------------------------------
# Large-F behaviour
# ----------------------------------------------------------------------------


class GapRow(NamedTuple):
    F: float
    wbar: float
    gap: float
    log_scale: float
    ratio: float
    wbar_at_hint: float


def asymptotic_gap_check(lam: float, beta: float, F_list, c_asym: float = 5.0,
                         opt: OptimizerConfig = DEFAULT_OPT):
    """Tabulate ``F - Wbar(F)`` against ``log(F) / lam``.

    ``wbar_at_hint`` is the objective at ``mu = lam + 1/F``, which already
    achieves the logarithmic gap. Returns ``(rows, flagged)`` where
    ``flagged`` is True if the ratio at the largest F exceeds ``c_asym``.
    """
    F_list = [float(F) for F in F_list]
    if any(b <= a for a, b in zip(F_list, F_list[1:])):
        raise DomainError("F_list must be strictly increasing")
    if F_list[0] <= 1:
        raise DomainError(f"F values must exceed 1 for the log F scale, got {F_list[0]}")
    rows = []
    for F in F_list:
        w = wbar(F, lam, beta, opt).value
        hint = _rate_objective(lam, F, beta)(lam + 1.0 / F)
        scale = math.log(F) / lam
        rows.append(GapRow(F, w, F - w, scale, (F - w) / scale, hint))
    return rows, rows[-1].ratio > c_asym
