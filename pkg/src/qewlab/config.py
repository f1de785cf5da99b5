"""Experiment configuration files.

A config is an INI file with sections ``[run]``, ``[model]``, ``[field]``,
``[rates]`` and ``[verify]``. Every key is optional; unknown sections and
keys are errors. Parsing collects all violations before raising, so a bad
file is reported in one go::

    [run]
    mode = sweep
    seed = 7
    replicas = 8

    [model]
    kind = discrete
    F_grid = 0, 5, 10, 20
    L = 128
    t_end = 5

    [field]
    family = exponential
    param = 1.0

    [rates]
    lam = 0.5
"""

from __future__ import annotations

import ast
import configparser
import json
import math
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError, DomainError
from .field import FAMILIES, StrengthDistribution, exp_moment

MODES = ("simulate-discrete", "simulate-continuum", "bounds", "verify", "sweep")
KINDS = ("discrete", "continuum")
CHECKS = ("dp", "supermartingale", "growth", "moment", "gap")


def _floats(text: str) -> tuple[float, ...]:
    parts = [s for s in text.replace(",", " ").split() if s]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(s) for s in parts)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


# section -> key -> parser; the dataclass below carries the defaults
SCHEMA = {
    "run": {"mode": str, "seed": int, "replicas": int, "out": str},
    "model": {"kind": str, "F": float, "F_grid": _floats, "L": int, "dt": _opt_float,
              "t_end": float, "source": str, "n_cells": int, "L_int": int, "modified": _bool,
              "n_snapshots": int, "Gamma": _opt_float},
    "field": {"family": str, "param": float, "delta": float, "m_max": int},
    "rates": {"lam": float, "beta": _opt_float, "lam_tilde": _opt_float, "mu": _opt_float},
    "verify": {"check": str, "n": int, "window": int, "inner_samples": int, "N_max": int,
               "samples": int, "n_list": _ints, "eps_tail": float},
}


@dataclass(frozen=True)
class ExperimentConfig:
    # [run]
    mode: str = "bounds"
    seed: int = 0
    replicas: int = 1
    out: str = "qewlab_out"
    # [model]
    kind: str = "discrete"
    F: float = 10.0
    F_grid: tuple[float, ...] | None = None
    L: int = 256
    dt: float | None = None
    t_end: float = 1.0
    source: str = "rounded"
    n_cells: int = 32
    L_int: int = 32
    modified: bool = True
    n_snapshots: int = 20
    Gamma: float | None = None
    # [field]
    family: str = "exponential"
    param: float = 1.0
    delta: float = 0.25
    m_max: int = 64
    # [rates]
    lam: float = 0.5
    beta: float | None = None
    lam_tilde: float | None = None
    mu: float | None = None
    # [verify]
    check: str = "supermartingale"
    n: int = 3
    window: int = 5
    inner_samples: int = 32
    N_max: int = 256
    samples: int = 1000
    n_list: tuple[int, ...] = (1, 2, 4, 8)
    eps_tail: float = 1e-8

    @property
    def F_values(self) -> tuple[float, ...]:
        return self.F_grid if self.F_grid is not None else (self.F,)

    @property
    def dist(self) -> StrengthDistribution:
        return StrengthDistribution(self.family, self.param, self.lam)

    @property
    def beta_value(self) -> float:
        """``beta`` as given, else the exact moment ``E exp(lam f)`` of the strength law."""
        return self.beta if self.beta is not None else exp_moment(self.dist, self.lam)

    @property
    def mu_value(self) -> float:
        return self.mu if self.mu is not None else 2.0 * self.lam

    @property
    def discrete_dt(self) -> float:
        return self.dt if self.dt is not None else 1e-3

    def to_text(self) -> str:
        """Canonical INI text; parsing it gives back an equal config."""
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_format(getattr(self, key))}")
            lines.append("")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _cfl_dx2_half(n_cells: int) -> float:
    return 0.5 / n_cells**2


def _samples_field(cfg: ExperimentConfig) -> bool:
    return cfg.mode not in ("bounds", "verify") or (cfg.mode == "verify" and cfg.check != "gap")


def validate(cfg: ExperimentConfig) -> list[str]:
    """Every semantic violation in ``cfg``, named by field."""
    out = []
    if cfg.mode not in MODES:
        out.append(f"mode: must be one of {MODES}, got {cfg.mode!r}")
    if cfg.kind not in KINDS:
        out.append(f"kind: must be one of {KINDS}, got {cfg.kind!r}")
    if cfg.check not in CHECKS:
        out.append(f"check: must be one of {CHECKS}, got {cfg.check!r}")
    if cfg.source not in ("rounded", "g-envelope", "zero"):
        out.append(f"source: must be rounded, g-envelope or zero, got {cfg.source!r}")
    if cfg.replicas < 1:
        out.append(f"replicas: must be >= 1, got {cfg.replicas}")
    if any(F < 0 or not math.isfinite(F) for F in cfg.F_values):
        out.append(f"F: driving force must be finite and >= 0, got {cfg.F_values}")
    if cfg.L < 3:
        out.append(f"L: must be >= 3, got {cfg.L}")
    if not cfg.t_end > 0:
        out.append(f"t_end: must be > 0, got {cfg.t_end}")
    if cfg.n_snapshots < 1:
        out.append(f"n_snapshots: must be >= 1, got {cfg.n_snapshots}")
    if cfg.Gamma is not None and not cfg.Gamma > 0:
        out.append(f"Gamma: must be > 0, got {cfg.Gamma}")
    if not 0 < cfg.delta < 0.5:
        out.append(f"delta: obstacle half-width must satisfy 0 < delta < 1/2, got {cfg.delta}")
    if cfg.m_max < 1:
        out.append(f"m_max: must be >= 1, got {cfg.m_max}")
    if cfg.n_cells < 8:
        out.append(f"n_cells: must be >= 8, got {cfg.n_cells}")
    elif 0 < cfg.delta < 0.5 and 2 * cfg.delta * cfg.n_cells < 4 - 1e-9:
        out.append(f"n_cells: obstacle columns need >= 4 cells, 2*delta*n_cells = {2 * cfg.delta * cfg.n_cells:g}")
    if cfg.L_int < 3:
        out.append(f"L_int: must be >= 3, got {cfg.L_int}")
    if cfg.family not in FAMILIES:
        out.append(f"family: must be one of {FAMILIES}, got {cfg.family!r}")
    if not cfg.lam > 0:
        out.append(f"lam: must be > 0, got {cfg.lam}")
    elif cfg.family in FAMILIES and (cfg.beta is None or _samples_field(cfg)):
        # the strength law only matters when it is sampled or supplies beta
        try:
            StrengthDistribution(cfg.family, cfg.param, cfg.lam)
        except DomainError as e:
            out.append(f"param: {e}")
    if cfg.beta is not None and not cfg.beta >= 1:
        out.append(f"beta: must be >= 1, got {cfg.beta}")
    if cfg.lam_tilde is not None and not 0 < cfg.lam_tilde < cfg.lam:
        out.append(f"lam_tilde: must satisfy 0 < lam_tilde < lam, got {cfg.lam_tilde}")
    if cfg.mu is not None and not cfg.mu > cfg.lam:
        out.append(f"mu: must be > lam = {cfg.lam}, got {cfg.mu}")
    if cfg.dt is not None:
        if not cfg.dt > 0:
            out.append(f"dt: must be > 0, got {cfg.dt}")
        elif cfg.mode == "simulate-continuum" or (cfg.mode == "sweep" and cfg.kind == "continuum"):
            limit = _cfl_dx2_half(cfg.n_cells)
            if cfg.dt > limit:
                out.append(f"dt: {cfg.dt} exceeds the CFL limit dx^2/2 = {limit:.6g} for n_cells={cfg.n_cells}")
        else:
            # obstacles only lower the limit; the field-dependent part is checked at run time
            f_top = cfg.param if cfg.family in ("deterministic", "uniform") else 0.0
            limit = 0.2 / (4.0 + f_top + max(cfg.F_values))
            if cfg.dt > limit:
                out.append(f"dt: {cfg.dt} exceeds the stability limit 0.2/(4 + max f + F) = {limit:.6g}")
    if cfg.n < 0:
        out.append(f"n: must be >= 0, got {cfg.n}")
    if cfg.window < 1:
        out.append(f"window: half-width must be >= 1, got {cfg.window}")
    if cfg.inner_samples < 2:
        out.append(f"inner_samples: must be >= 2, got {cfg.inner_samples}")
    if cfg.N_max < 1:
        out.append(f"N_max: must be >= 1, got {cfg.N_max}")
    if cfg.samples < 2:
        out.append(f"samples: must be >= 2, got {cfg.samples}")
    if not cfg.n_list or any(b <= a for a, b in zip(cfg.n_list, cfg.n_list[1:])) or cfg.n_list[0] < 1:
        out.append(f"n_list: must be strictly increasing positive integers, got {cfg.n_list}")
    if not cfg.eps_tail > 0:
        out.append(f"eps_tail: must be > 0, got {cfg.eps_tail}")
    return out


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate INI text.

    ``overrides`` (e.g. from command-line flags) replace parsed values before
    validation. Raises :class:`ConfigError` with every violation found.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case sensitive (F, L, N_max)
    try:
        parser.read_string(text)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError(f"line {e.lineno}: expected a [section] header, got {e.line.strip()!r}") from e
    except configparser.ParsingError as e:
        raise ConfigError([f"line {ln}: expected 'key = value', got {ast.literal_eval(line).strip()!r}"
                           for ln, line in e.errors]) from e
    except configparser.Error as e:
        lineno = getattr(e, "lineno", None)
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{where}{e.message}") from e

    problems = []
    values = {}
    for section in parser.sections():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]; expected one of {list(SCHEMA)}")
            continue
        for key, raw in parser.items(section):
            conv = SCHEMA[section].get(key)
            if conv is None:
                problems.append(f"unknown key {key!r} in [{section}]")
                continue
            try:
                values[key] = conv(raw)
            except ValueError as e:
                problems.append(f"{key}: cannot parse {raw!r} ({e})")
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(**values)
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI config, or a run manifest (JSON) to replay its run."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        try:
            text = json.loads(text)["config_text"]
        except (ValueError, KeyError) as e:
            raise ConfigError(f"{path}: not a run manifest ({e})") from e
    return parse_config(text, overrides)


CONFIG_FIELDS = tuple(f.name for f in fields(ExperimentConfig))
