"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (also collected in
the terminal summary) and then asserts. Tolerances and parameters are fixed
here; they are not tuned to make a check pass.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qewlab import bounds as bd
from qewlab import continuum as ct
from qewlab import discrete as ds
from qewlab import martingale as mg
from qewlab.errors import DivergenceError
from qewlab.field import BumpProfile, ObstacleField, ObstacleLattice, StrengthDistribution


def report(n: int, checks: dict, elapsed: float, budget: float, detail: str = ""):
    """Print and record one line; return (all passed, failed names)."""
    checks = dict(checks, runtime=elapsed < budget)
    failed = [k for k, ok in checks.items() if not ok]
    status = "PASS" if not failed else "FAIL"
    line = f"criterion {n}: {status} ({elapsed:.2f}s / {budget:g}s) {detail}".rstrip()
    if failed:
        line += f" failed={failed}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return not failed, failed


def dense_sup(lam, drive, beta, n=400_001):
    mu = lam + np.geomspace(1e-7, 200.0, n)
    pv = 1 / (1 - np.exp(-lam)) + 1 / (1 - np.exp(lam - mu))
    return max(float(np.max((lam * drive - np.log(pv) - math.log(beta)) / mu)), 0.0)


def test_criterion_01_spot_values():
    t0 = time.perf_counter()
    pv = bd.p(1, 2)
    Fs = bd.positivity_threshold(1, 1)
    w = bd.wbar(3, 1, 1)
    elapsed = time.perf_counter() - t0
    oracle = dense_sup(1, 3, 1)
    checks = {
        "p(1,2)": abs(pv - 3.163953414) <= 1e-9,
        "F*(1,1)": abs(Fs - 0.948723) <= 1e-6,
        "Wbar>=0.924066": w.value >= 0.924066,
        "Wbar>=grid_max": w.value >= w.grid_max,
        "Wbar~dense": abs(w.value - oracle) <= 1e-6,
    }
    ok, failed = report(1, checks, elapsed, 1.0,
                        f"p={pv:.10f} F*={Fs:.7f} Wbar={w.value:.7f} grid_max={w.grid_max:.7f}")
    assert ok, failed


def test_criterion_02_identities():
    rng = np.random.default_rng(20240601)
    t0 = time.perf_counter()
    worst_w = worst_v = 0.0
    for _ in range(100):
        lam, beta, F = rng.uniform(0.2, 3), rng.uniform(1, 5), rng.uniform(0, 40)
        direct = bd.wbar(F, lam, beta).value
        via = bd.maximize_over_mu(lambda mu: -math.log(bd.gamma(lam, mu, beta, F)) / mu, lam).value
        worst_w = max(worst_w, abs(direct - via) / max(1.0, abs(direct)))
        lt, bt, d = rng.uniform(0.2, 3), rng.uniform(1, 5), rng.uniform(0.01, 0.49)
        lhs = bd.v_bound(F, lt, bt, d).value * 4 * (1 + d)
        rhs = bd.wbar((1 - 2 * d) * F - 2, lt, bt).value
        worst_v = max(worst_v, abs(lhs - rhs) / max(1.0, abs(rhs)))
    elapsed = time.perf_counter() - t0
    ok, failed = report(2, {"wbar=sup(-log gamma)/mu": worst_w <= 1e-12, "V identity": worst_v <= 1e-12},
                        elapsed, 1.0, f"worst={max(worst_w, worst_v):.2e}")
    assert ok, failed


def test_criterion_03_zero_obstacles():
    t0 = time.perf_counter()
    F = 3.0
    res = ds.run(ds.DiscreteSimConfig(L=32, F=F, dt=1e-3, t_end=10.0, source="zero"), replicas=2)
    d_err = float(np.abs(res.state.u / (F * res.state.t) - 1).max())

    zero = ObstacleField(ObstacleLattice(0, StrengthDistribution.deterministic(0.0)), BumpProfile(0.25))
    g = ct.Grid1D(32, 4)
    dt = 0.5 * g.dx**2
    cfg = ct.ContinuumConfig(F, zero, g, t_end=1e4 * dt, dt=dt, modified=False)
    run = ct.run_continuum(cfg, 1)
    c_err = float(np.abs(run.final.u - F * run.final.t).max())
    elapsed = time.perf_counter() - t0
    ok, failed = report(3, {"discrete": d_err <= 1e-12, "continuum": c_err <= 1e-8,
                            "steps": run.final.steps == 10_000},
                        elapsed, 10.0, f"discrete rel={d_err:.1e} continuum abs={c_err:.1e}")
    assert ok, failed


def _brute_Y(cfg, field):
    import itertools
    total = 0.0
    for tail in itertools.product(range(cfg.w_min, cfg.w_max + 1), repeat=cfg.n):
        v, s = mg.path_functionals(cfg.w_start + tail, field, cfg.F)
        total += math.exp(cfg.lam * v - cfg.mu * s)
    return total


def test_criterion_04_dp_vs_brute_force():
    t0 = time.perf_counter()
    dist = StrengthDistribution.exponential(1.0, 0.5)
    worst = 0.0
    for seed in range(20):
        n = 1 + seed % 3
        cfg = mg.EnsembleConfig(n, 0.8, 1.9, 2.0, w_start=(0, seed % 3 - 1), w_min=-3, w_max=3)
        fr = mg.FieldRealization.from_lattice(ObstacleLattice(seed, dist), n, -3, 3)
        Y, _ = mg.Y_n_exact(cfg, fr, check_tail=False)
        ref = _brute_Y(cfg, fr)
        worst = max(worst, abs(Y - ref) / ref)
    elapsed = time.perf_counter() - t0
    ok, failed = report(4, {"rel err": worst <= 1e-12}, elapsed, 5.0, f"worst rel={worst:.1e}")
    assert ok, failed


def test_criterion_05_supermartingale():
    t0 = time.perf_counter()
    det_ok, worst_det = True, 0.0
    for lam in (0.5, 1.0, 2.0):
        for gap in (0.5, 1.0, 3.0):
            for F in (0.0, 1.5, 4.0):
                dist = StrengthDistribution.deterministic(0.0, lam)
                for n in range(6):
                    cfg = mg.EnsembleConfig(n, lam, lam + gap, F, w_min=-8, w_max=8)
                    rep = mg.supermartingale_check(cfg, dist, 1)
                    det_ok &= rep.passed
                    worst_det = max(worst_det, rep.max_ratio / rep.gamma)
    cfg = mg.EnsembleConfig(3, 1.0, 2.0, 4.0, w_min=-5, w_max=5)
    rep = mg.supermartingale_check(cfg, StrengthDistribution.exponential(2.0, 1.0), 10_000, seed=5)
    elapsed = time.perf_counter() - t0
    ok, failed = report(5, {"deterministic": det_ok, "exponential": rep.ucb95 <= 1.01 * rep.gamma},
                        elapsed, 60.0,
                        f"det max ratio/gamma={worst_det:.4f} exp ucb95/gamma={rep.ucb95 / rep.gamma:.4f}")
    assert ok, failed


@pytest.fixture(scope="module")
def velocity_runs():
    dist = StrengthDistribution.exponential(1.0)
    t0 = time.perf_counter()
    main = ds.run(ds.DiscreteSimConfig(L=256, F=30.0, dt=1e-3, t_end=20.0, seed=606, dist=dist), 50)
    flat = ds.run(ds.DiscreteSimConfig(L=256, F=10.0, dt=1e-3, t_end=20.0, seed=707, dist=dist), 50)
    return main, flat, time.perf_counter() - t0


def test_criterion_06_discrete_velocity(velocity_runs):
    main, _, elapsed = velocity_runs
    wb = bd.wbar(30.0, 0.5, 2.0).value
    hand = 15 - math.log(bd.p(0.5, 1.0)) - math.log(2.0)
    bc = ds.bound_check(main.stats, wb)
    ok, failed = report(6, {"mean-2SE>=Wbar": bc.passed, "Wbar>=12.68": wb >= 12.68, "hand": wb >= hand},
                        elapsed, 600.0,
                        f"mean={bc.mean:.4f} se={bc.se:.4f} lower={bc.lower:.4f} Wbar={wb:.4f}")
    assert ok, failed


def test_criterion_07_flatness(velocity_runs):
    _, flat, elapsed = velocity_runs
    st = flat.stats
    late = st.times > 2.0 * 10.0**2 / 5.0**2
    worst = float(st.max_grad_over_t[:, late].max())
    ok, failed = report(7, {"sampled": bool(late.any()), "max grad/t<=5": worst <= 5.0},
                        elapsed, 600.0, f"t={[float(t) for t in st.times[late]]} max grad/t={worst:.4f}")
    assert ok, failed


def test_criterion_08_continuum_inequalities():
    t0 = time.perf_counter()
    fld = ObstacleField(ObstacleLattice(808, StrengthDistribution.exponential(1.0)), BumpProfile(0.25))
    g = ct.Grid1D(32, 32)
    mod_cfg = ct.ContinuumConfig(20.0, fld, g, t_end=1.0, modified=True)
    mod = ct.run_continuum(mod_cfg, 20)
    unm = ct.run_continuum(ct.ContinuumConfig(20.0, fld, g, t_end=1.0, modified=False), 20)
    tol = 10 * (g.dx**2 + mod_cfg.time_step)
    reps = [ct.snapshot_report(s, mod_cfg) for s in mod.snapshots]
    worst = {k: min(getattr(r, k) for r in reps)
             for k in ("laplacian", "obstacle", "obstacle_jump", "corollary")}
    comp = ct.comparison_check(unm, mod)
    checks = {"snapshots": len(reps) == 20, "u_t": mod.min_ut >= -tol, "comparison": comp.passed}
    checks.update({k: v >= -tol for k, v in worst.items()})
    detail = f"min u_t={mod.min_ut:.2e} comp={comp.min_difference:.2e} " + \
             " ".join(f"{k}={v:.2e}" for k, v in worst.items())
    ok, failed = report(8, checks, time.perf_counter() - t0, 300.0, detail)
    assert ok, failed


def test_criterion_09_moment_bound():
    t0 = time.perf_counter()
    det = mg.sup_avg_moment_check(StrengthDistribution.deterministic(2.0, 0.5), 0.5, 0.25, 256, 10)
    exp = mg.sup_avg_moment_check(StrengthDistribution.exponential(1.0, 0.5), 0.5, 0.25, 256, 100_000, seed=9)
    checks = {"deterministic": det.estimate == pytest.approx(math.exp(0.5), rel=1e-14) and det.passed,
              "exponential": exp.estimate + 3 * exp.se <= exp.bound}
    ok, failed = report(9, checks, time.perf_counter() - t0, 120.0,
                        f"det={det.estimate:.6f}<= {det.bound:.4f} exp={exp.estimate:.4f}+3*{exp.se:.4f}"
                        f" <= {exp.bound:.4f}")
    assert ok, failed


def test_criterion_10_beta_tilde_180():
    t0 = time.perf_counter()
    guard = []
    for lt in (1 / 180, 1 / 100, 0.5):
        try:
            bd.beta_tilde_180(1.0, 2.0, lt)
            guard.append(False)
        except DivergenceError:
            guard.append(True)
    bt = bd.beta_tilde_180(360, 1, 1)
    exact = math.e * (math.sqrt(2) + math.asinh(1))
    c = bt.c_star
    val, _ = bd.tail_integral(c, 2.0, 1.0)
    anti = 0.5 * math.log((c + 1) / (c - 1))
    checks = {"guard": all(guard), "tail antiderivative": abs(val - anti) <= 1e-8,
              "closed-form inf": abs(bt.value - exact) <= 1e-8}
    ok, failed = report(10, checks, time.perf_counter() - t0, 1.0,
                        f"beta_tilde={bt.value:.10f} exact={exact:.10f}")
    assert ok, failed


def test_criterion_11_asymptotic_gap():
    t0 = time.perf_counter()
    rows, flagged = bd.asymptotic_gap_check(1.0, 2.0, [1e2, 1e3, 1e4])
    ratios = [r.ratio for r in rows]
    checks = {"ratio<=5": not flagged and max(ratios) <= 5.0,
              "nonincreasing": all(b <= a for a, b in zip(ratios, ratios[1:]))}
    ok, failed = report(11, checks, time.perf_counter() - t0, 1.0,
                        "ratios=" + ", ".join(f"{r:.4f}" for r in ratios))
    assert ok, failed
