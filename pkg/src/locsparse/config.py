"""Run configuration stored as an INI file (one section per concern)."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

from .admm import SolverParams
from .model import ContractError


class ConfigError(ContractError):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    m1: int = 64
    m2: int = 64
    operator: str = "conv2d"  # conv2d or dense
    kernel_size: int = 0  # 0 picks the size scaled from the reference resolution
    kernel_sigma: float = 0.0  # 0 picks size / 4
    operator_path: str = ""  # dense matrix file (LSPM or CSV)
    data_path: str = ""  # measured W; empty means synthesize from the phantom
    phantom_value: float = 0.2
    sigma: float = 0.0


@dataclass(frozen=True)
class DictionaryConfig:
    n_atoms: int = 8
    n_samples: int = 32
    t_end: float = 4.0
    decay_low: float = 0.2
    decay_high: float = 2.0
    peak_time: float = 0.5
    normalization: str = "l2"


@dataclass(frozen=True)
class SolverConfig:
    v_cap: float = 1e-2
    beta: float = 0.1
    lambda0: float = 0.5
    mu0: float = 0.1
    eps_abs: float = 1e-6
    eps_rel: float = 1e-4
    eta1: float = 10.0
    eta2: float = 10.0
    tau_incr: float = 2.0
    tau_decr: float = 2.0
    max_iter: int = 5000
    adapt_freeze_iter: int = 100
    penalty_range: float = 100.0
    two_pass: bool = False
    support_tol: float = 1e-3

    def params(self) -> SolverParams:
        names = {f.name for f in fields(SolverParams)}
        return SolverParams(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})


@dataclass(frozen=True)
class SweepConfig:
    v_list: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)
    rel_tol: float = 1e-3


@dataclass(frozen=True)
class RunSection:
    seed: int = 0
    out_dir: str = "out"


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    dictionary: DictionaryConfig = field(default_factory=DictionaryConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    run: RunSection = field(default_factory=RunSection)

    def validate(self):
        p, d, s = self.problem, self.dictionary, self.solver
        if p.m1 < 1 or p.m2 < 1:
            raise ConfigError("m1 and m2 must be positive")
        if p.operator not in ("conv2d", "dense"):
            raise ConfigError(f"unknown operator {p.operator!r}")
        if p.operator == "dense" and not p.operator_path:
            raise ConfigError("dense operator needs operator_path")
        if p.kernel_size < 0 or p.kernel_sigma < 0:
            raise ConfigError("kernel size and sigma must be nonnegative")
        if p.sigma < 0 or p.phantom_value <= 0:
            raise ConfigError("sigma must be >= 0 and phantom_value > 0")
        if d.n_atoms < 1 or d.n_samples < 2 or d.t_end <= 0:
            raise ConfigError("dictionary sizes must be positive")
        if not 0 <= d.decay_low < d.decay_high:
            raise ConfigError("need 0 <= decay_low < decay_high")
        if d.peak_time <= 0:
            raise ConfigError("peak_time must be positive")
        if d.normalization not in ("l2", "l1"):
            raise ConfigError("normalization must be l2 or l1")
        if not 0 < s.support_tol < 1:
            raise ConfigError("support_tol must lie in (0, 1)")
        try:
            s.params()
        except ContractError as exc:
            raise ConfigError(str(exc)) from exc
        v = list(self.sweep.v_list)
        if not v or any(x <= 0 for x in v) or any(b >= a for a, b in zip(v, v[1:])):
            raise ConfigError("v_list must be nonempty, positive and strictly decreasing")
        if not 0 < self.sweep.rel_tol < 1:
            raise ConfigError("rel_tol must lie in (0, 1)")
        if self.run.seed < 0 or self.run.seed >= 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return self


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(x)) for x in value)
    return str(value)


def _parse(raw, kind, key):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(float(x) for x in raw.split(",") if x.strip())
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def serialize(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser()
    for sec in fields(RunConfig):
        part = getattr(cfg, sec.name)
        parser[sec.name] = {f.name: _format(getattr(part, f.name)) for f in fields(part)}
    out = []
    for name in parser.sections():
        out.append(f"[{name}]")
        out.extend(f"{k} = {v}" for k, v in parser[name].items())
        out.append("")
    return "\n".join(out)


def parse(text: str) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    hints = get_type_hints(RunConfig)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    parts = {}
    for sec in fields(RunConfig):
        cls = hints[sec.name]
        types = get_type_hints(cls)
        values = {}
        if parser.has_section(sec.name):
            for key, raw in parser[sec.name].items():
                if key not in types:
                    raise ConfigError(f"unknown key {sec.name}.{key}")
                values[key] = _parse(raw, types[key], f"{sec.name}.{key}")
        parts[sec.name] = cls(**values)
    return RunConfig(**parts).validate()


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text)
