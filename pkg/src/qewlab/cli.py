"""Command-line driver.

Usage::

    qewlab bounds --config run.ini --out results/
    qewlab simulate-discrete --config run.ini --replicas 50 --seed 3
    qewlab verify --check supermartingale --n 3 --window 5 --replicas 1000
    qewlab sweep --config sweep.ini
    qewlab sweep --config results/manifest.json   # replay a previous run

The simulate and verify commands use a single force: ``F``, or the first
entry of ``F_grid`` when only a grid is given.

Every run writes one or more CSV files and ``manifest.json`` into ``--out``.
CSV floats use ``%.17g`` so replays can be compared byte for byte. Headers:

``bounds.csv``
    F, wbar, wbar_mu, W, V
``trace.csv`` (simulate-discrete)
    replica, seed, t, u0_over_t, mean_over_t, max_grad_over_t
``snapshots.csv`` (simulate-continuum)
    replica, seed, t, U_over_t, oscillation_over_t, min_ut, laplacian_margin,
    obstacle_margin, obstacle_jump_margin, corollary_margin, hat_lower_margin, skipped
``verify_<check>.csv``
    depends on the check; see ``VERIFY_HEADERS``
``sweep.csv``
    F, cell_seed, replicas, mean_velocity, se, bound, bound_mu, passed, error
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import bounds as bd
from . import continuum as ct
from . import discrete as ds
from . import martingale as mg
from .config import CHECKS, ExperimentConfig, load_config, parse_config
from .errors import (ConfigError, DivergenceError, DomainError, PreconditionError,
                     SimulationError, WindowTooNarrowError)
from .field import BumpProfile, ObstacleField, ObstacleLattice, derive_seed

HEADERS = {
    "bounds": ("F", "wbar", "wbar_mu", "W", "V"),
    "trace": ("replica", "seed", "t", "u0_over_t", "mean_over_t", "max_grad_over_t"),
    "snapshots": ("replica", "seed", "t", "U_over_t", "oscillation_over_t", "min_ut",
                  "laplacian_margin", "obstacle_margin", "obstacle_jump_margin",
                  "corollary_margin", "hat_lower_margin", "skipped"),
    "sweep": ("F", "cell_seed", "replicas", "mean_velocity", "se", "bound", "bound_mu",
              "passed", "error"),
}

VERIFY_HEADERS = {
    "dp": ("replica", "seed", "Y_n", "tail_bound", "Y_brute", "rel_err"),
    "supermartingale": ("replica", "seed", "ratio", "ratio_se", "gamma"),
    "growth": ("replica", "seed", "n", "rate", "rate_upper", "limit", "flagged"),
    "moment": ("N_max", "samples", "estimate", "se", "bound", "passed"),
    "gap": ("F", "wbar", "gap", "log_scale", "ratio", "wbar_at_hint"),
}


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


# ----------------------------------------------------------------------------
# Shared builders
# ----------------------------------------------------------------------------


def _discrete_config(cfg: ExperimentConfig, F: float, seed: int) -> ds.DiscreteSimConfig:
    return ds.DiscreteSimConfig(L=cfg.L, F=F, dt=cfg.discrete_dt, t_end=cfg.t_end, seed=seed,
                                source=cfg.source, dist=cfg.dist, delta=cfg.delta, m_max=cfg.m_max)


def _continuum_config(cfg: ExperimentConfig, F: float, seed: int) -> ct.ContinuumConfig:
    field = ObstacleField(ObstacleLattice(seed, cfg.dist), BumpProfile(cfg.delta))
    return ct.ContinuumConfig(F, field, ct.Grid1D(cfg.n_cells, cfg.L_int), cfg.t_end, cfg.dt,
                              cfg.modified)


def _lam_tilde(cfg: ExperimentConfig) -> float:
    return cfg.lam_tilde if cfg.lam_tilde is not None else cfg.lam / 360.0


def _v_bound(cfg: ExperimentConfig, F: float) -> bd.RateSup:
    """Continuum bound with the g-envelope moment constant."""
    lt = _lam_tilde(cfg)
    bt = bd.beta_tilde_180(cfg.lam, cfg.beta_value, lt).value
    return bd.v_bound(F, lt, bt, cfg.delta)


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return float(x.mean()), se


# ----------------------------------------------------------------------------
# Subcommands; each returns (outputs {name: (header, rows)}, seeds, summary)
# ----------------------------------------------------------------------------


def cmd_bounds(cfg: ExperimentConfig):
    beta = cfg.beta_value
    rows, notes = [], []
    for F in cfg.F_values:
        w = bd.wbar(F, cfg.lam, beta)
        W = bd.w_bound(F, cfg.lam, beta)
        V = None
        if cfg.lam_tilde is not None:
            try:
                V = _v_bound(cfg, F).value
            except DivergenceError as e:
                notes.append(str(e))
        rows.append((F, w.value, w.mu, W.value, V))
    summary = {"lam": cfg.lam, "beta": beta,
               "F_star": bd.positivity_threshold(cfg.lam, beta)}
    if notes:
        summary["V_error"] = notes[0]
    return {"bounds.csv": (HEADERS["bounds"], rows)}, [], summary


def cmd_simulate_discrete(cfg: ExperimentConfig):
    F = cfg.F_values[0]
    dc = _discrete_config(cfg, F, cfg.seed)
    result = ds.run(dc, cfg.replicas)
    st = result.stats
    W = bd.w_bound(F, cfg.lam, cfg.beta_value)
    summary = {"F": F, "t_end": dc.n_steps * dc.dt, "final_mean": st.final_mean,
               "final_se": _finite(st.final_se), "W": W.value,
               "c1_est": st.c1_est, "c2_est": st.c2_est}
    if cfg.replicas >= 2:
        bc = ds.bound_check(st, W.value)
        summary.update(bound_lower=bc.lower, bound_passed=bc.passed)
    if cfg.Gamma is not None:
        late = st.times > 2.0 * F**2 / cfg.Gamma**2
        worst = float(st.max_grad_over_t[:, late].max()) if late.any() else None
        summary.update(Gamma=cfg.Gamma, flat_max_gradient=worst,
                       flat_passed=None if worst is None else worst <= cfg.Gamma)
    return {"trace.csv": (HEADERS["trace"], list(st.trace_rows()))}, st.seeds, summary


def cmd_simulate_continuum(cfg: ExperimentConfig):
    F = cfg.F_values[0]
    rows, seeds, finals, worst = [], [], [], {}
    for r in range(cfg.replicas):
        seed = derive_seed(cfg.seed, r)
        cc = _continuum_config(cfg, F, seed)
        run = ct.run_continuum(cc, cfg.n_snapshots)
        seeds.append(seed)
        for s in run.snapshots:
            rep = ct.snapshot_report(s, cc)
            rows.append((r, seed, s.t, rep.U / s.t, ct.oscillation_over_t(s), rep.min_ut,
                         rep.laplacian, rep.obstacle, rep.obstacle_jump, rep.corollary,
                         rep.hat_lower, rep.skipped))
            for k in ("min_ut", "laplacian", "obstacle", "obstacle_jump", "corollary", "hat_lower"):
                worst[k] = min(worst.get(k, math.inf), getattr(rep, k))
        finals.append(ct.averaged_height(run.final) / run.final.t)
    mean, se = _mean_se(finals)
    summary = {"F": F, "modified": cfg.modified, "final_mean": mean, "final_se": se,
               "worst_margins": {k: _finite(v) for k, v in worst.items()}}
    if cfg.lam_tilde is not None:
        try:
            summary["V"] = _v_bound(cfg, F).value
        except DivergenceError as e:
            summary["V_error"] = str(e)
    return {"snapshots.csv": (HEADERS["snapshots"], rows)}, seeds, summary


def _brute_force_Y(config: mg.EnsembleConfig, field: mg.FieldRealization) -> float:
    total = 0.0
    for tail in itertools.product(range(config.w_min, config.w_max + 1), repeat=config.n):
        v, s = mg.path_functionals(config.w_start + tail, field, config.F)
        total += math.exp(config.lam * v - config.mu * s)
    return total


def cmd_verify(cfg: ExperimentConfig):
    check = cfg.check
    F = cfg.F_values[0]
    ens = mg.EnsembleConfig(cfg.n, cfg.lam, cfg.mu_value, F, -cfg.window, cfg.window,
                            eps_tail=cfg.eps_tail)
    dist = cfg.dist if check != "gap" else None
    name = f"verify_{check}.csv"
    header = VERIFY_HEADERS[check]
    seeds = [derive_seed(cfg.seed, r) for r in range(cfg.replicas)]
    if check == "dp":
        rows = []
        brute_ok = (2 * cfg.window + 1) ** cfg.n <= 10**6
        for r, seed in enumerate(seeds):
            fr = mg.FieldRealization.from_lattice(ObstacleLattice(seed, dist), max(cfg.n, 1),
                                                  -cfg.window, cfg.window)
            Y, tail = mg.Y_n_exact(ens, fr, check_tail=False)
            Yb = _brute_force_Y(ens, fr) if brute_ok else None
            rows.append((r, seed, Y, tail, Yb, None if Yb is None else abs(Y - Yb) / Yb))
        errs = [row[5] for row in rows if row[5] is not None]
        worst = max(errs) if errs else None
        passed = worst is not None and worst <= 1e-12
        summary = {"max_rel_err": worst, "brute_force": brute_ok}
    elif check == "supermartingale":
        rep = mg.supermartingale_check(ens, dist, cfg.replicas, cfg.seed, cfg.inner_samples)
        rows = [(r, seeds[r], float(rep.ratios[r]), float(rep.ratio_se[r]), rep.gamma)
                for r in range(cfg.replicas)]
        passed = rep.passed
        summary = {"gamma": rep.gamma, "mean": rep.mean, "se": rep.se, "ucb95": rep.ucb95,
                   "max_ratio": rep.max_ratio, "n_exceed_99": rep.n_exceed_99}
    elif check == "growth":
        gr, Z = mg.growth_rate_check(ens, dist, cfg.n_list, cfg.replicas, cfg.seed)
        rows = [(g.replica, seeds[g.replica], g.n, g.rate, g.rate_upper, g.limit, g.flagged)
                for g in gr]
        passed = not any(g.flagged for g in gr)
        summary = {"log_gamma": math.log(bd.gamma(cfg.lam, cfg.mu_value, cfg.beta_value, F)),
                   "max_Z": float(Z.max())}
    elif check == "moment":
        lt = cfg.lam_tilde if cfg.lam_tilde is not None else cfg.lam / 2.0
        rep = mg.sup_avg_moment_check(dist, cfg.lam, lt, cfg.N_max, cfg.samples, cfg.seed)
        rows = [(cfg.N_max, cfg.samples, rep.estimate, rep.se, rep.bound, rep.passed)]
        passed = rep.passed
        summary = {"lam_tilde": lt}
        seeds = [cfg.seed]
    else:  # gap
        F_list = cfg.F_grid if cfg.F_grid is not None else (1e2, 1e3, 1e4)
        gr, flagged = bd.asymptotic_gap_check(cfg.lam, cfg.beta_value, F_list)
        rows = [tuple(g) for g in gr]
        ratios = [g.ratio for g in gr]
        passed = not flagged and all(b <= a for a, b in zip(ratios, ratios[1:]))
        summary = {}
        seeds = []
    summary = {"check": check, "passed": bool(passed), **summary}
    return {name: (header, rows)}, seeds, summary


def _sweep_cell(cfg: ExperimentConfig, F: float, cell_seed: int):
    if cfg.kind == "discrete":
        dc = _discrete_config(cfg, F, cell_seed)
        st = ds.run(dc, cfg.replicas).stats
        vel = st.final
        bound = bd.w_bound(F, cfg.lam, cfg.beta_value)
    else:
        vel = []
        for r in range(cfg.replicas):
            run = ct.run_continuum(_continuum_config(cfg, F, derive_seed(cell_seed, r)), 1)
            vel.append(ct.averaged_height(run.final) / run.final.t)
        bound = _v_bound(cfg, F)
    mean, se = _mean_se(vel)
    return mean, se, bound.value, bound.mu, mean - 2.0 * se >= bound.value


def cmd_sweep(cfg: ExperimentConfig):
    rows, seeds = [], []
    failures = 0
    for c, F in enumerate(cfg.F_values):
        cell_seed = derive_seed(cfg.seed, c)
        seeds.append(cell_seed)
        try:
            mean, se, b, mu, ok = _sweep_cell(cfg, F, cell_seed)
            rows.append((F, cell_seed, cfg.replicas, mean, se, b, mu, ok, None))
        except Exception as e:  # record and move on to the next cell
            failures += 1
            rows.append((F, cell_seed, cfg.replicas, None, None, None, None, None,
                         f"{type(e).__name__}: {e}"))
    summary = {"kind": cfg.kind, "cells": len(rows), "failed_cells": failures,
               "F_star": bd.positivity_threshold(cfg.lam, cfg.beta_value),
               "passed": failures == 0 and all(r[7] for r in rows)}
    return {"sweep.csv": (HEADERS["sweep"], rows)}, seeds, summary


COMMANDS = {
    "bounds": cmd_bounds,
    "simulate-discrete": cmd_simulate_discrete,
    "simulate-continuum": cmd_simulate_continuum,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def execute(cfg: ExperimentConfig, out_dir: str | None = None) -> dict:
    """Run ``cfg``, write its CSVs and manifest, and return the manifest."""
    out_dir = out_dir or cfg.out
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    outputs, seeds, summary = COMMANDS[cfg.mode](cfg)
    wall = time.perf_counter() - t0
    for name, (header, rows) in outputs.items():
        write_csv(os.path.join(out_dir, name), header, rows)
    manifest = {
        "tool": "qewlab",
        "version": __version__,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "replica_seeds": seeds,
        "config": cfg.to_dict(),
        "config_text": cfg.to_text(),
        "outputs": sorted(outputs),
        "wall_clock_s": wall,
        "summary": summary,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qewlab",
                                     description="Driven interfaces in quenched obstacle fields: "
                                                 "simulations and velocity lower bounds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in COMMANDS:
        p = sub.add_parser(mode, help=f"run the {mode} workflow")
        p.add_argument("--config", metavar="PATH", help="INI config or a manifest.json to replay")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--replicas", type=int, help="independent field realisations")
        if mode == "verify":
            p.add_argument("--check", choices=CHECKS, help="which check to run")
            p.add_argument("--n", type=int, help="path length")
            p.add_argument("--window", type=int, help="position window half-width")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k, None) for k in ("seed", "replicas", "out", "check", "n", "window")}
    overrides["mode"] = args.mode
    try:
        cfg = load_config(args.config, overrides) if args.config else parse_config("", overrides)
    except ConfigError as e:
        for v in e.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        manifest = execute(cfg)
    except (DomainError, PreconditionError, SimulationError, WindowTooNarrowError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    summary = manifest["summary"]
    status = summary.get("passed")
    tag = "" if status is None else (" PASS" if status else " FAIL")
    print(f"{cfg.mode}:{tag} {json.dumps(summary)}")
    return 0 if status in (None, True) else 1


if __name__ == "__main__":
    sys.exit(main())
