"""Experiment configuration files (TOML).

Schema (every table and key; ``difflab reference-config`` prints a complete
example with all defaults spelled out)::

    [schedule]
    family = "VP_LINEAR"          # any built-in family name
    T = 1.0                       # horizon
    [schedule.params]             # family parameters by name
    beta_min = 0.1
    beta_max = 20.0

    [data]
    kind = "gaussian"             # "gaussian" or "log_concave"
    d = 8
    sigma0_sq = 0.64              # gaussian only
    # log_concave only: m0, L0, x_star_norm, optional x0_l2

    [sampler]                     # needed by sample / bound / check-stepsize
    K = 1000
    chains = 10000
    seed = 0
    score_mode = "EXACT_GAUSSIAN" # or "PERTURBED"
    M = 0.0                       # perturbation level for PERTURBED
    block_size = 4096
    keep_states = false

    [bound]
    M = 0.0
    M1 = 0.0

CUSTOM schedules cannot be expressed in a config file (they are Python
callables); use the library API for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import tomli
import tomli_w

from .bounds import BoundContext
from .errors import ConfigError, DomainError
from .gaussian_oracle import GaussianModel
from .sampler import DEFAULT_BLOCK, SamplerConfig, ScoreMode
from .schedule import PARAM_NAMES, Family, ScheduleSpec

FORMAT_VERSION = 1

SAMPLER_DEFAULTS = {
    "chains": 10000,
    "seed": 0,
    "score_mode": ScoreMode.EXACT_GAUSSIAN.value,
    "M": 0.0,
    "block_size": DEFAULT_BLOCK,
    "keep_states": False,
}
BOUND_DEFAULTS = {"M": 0.0, "M1": 0.0}
LOG_CONCAVE_DEFAULTS = {"x_star_norm": 0.0}


def _table(raw: dict, name: str, required: bool = True) -> dict:
    if name not in raw:
        if required:
            raise ConfigError("missing table", field=name)
        return {}
    value = raw[name]
    if not isinstance(value, dict):
        raise ConfigError("must be a table", field=name)
    return value


def _get(table: dict, prefix: str, key: str, kind, default=None, required=True):
    path = f"{prefix}.{key}"
    if key not in table:
        if default is None and required:
            raise ConfigError("missing required field", field=path)
        return default
    value = table[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", field=path)
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError("must be finite", field=path)
    elif kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", field=path)
    elif kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true/false, got {value!r}", field=path)
    elif kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", field=path)
    return value


def _no_extra(table: dict, prefix: str, allowed: set[str]) -> None:
    extra = sorted(set(table) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) {extra}", field=f"{prefix}.{extra[0]}")


@dataclass
class ExperimentConfig:
    """Validated configuration; ``resolved`` is the fully defaulted dict."""

    resolved: dict[str, Any]

    @property
    def spec(self) -> ScheduleSpec:
        s = self.resolved["schedule"]
        return ScheduleSpec.build(s["family"], s["T"], **s["params"])

    @property
    def d(self) -> int:
        return self.resolved["data"]["d"]

    @property
    def is_gaussian(self) -> bool:
        return self.resolved["data"]["kind"] == "gaussian"

    def model(self) -> GaussianModel:
        if not self.is_gaussian:
            raise ConfigError("this command needs gaussian data", field="data.kind")
        data = self.resolved["data"]
        return GaussianModel(data["sigma0_sq"], data["d"])

    def has_sampler(self) -> bool:
        return "sampler" in self.resolved

    def sampler_config(self, threads: int = 1) -> SamplerConfig:
        if not self.has_sampler():
            raise ConfigError("missing table", field="sampler")
        s = self.resolved["sampler"]
        return SamplerConfig(
            d=self.d,
            K=s["K"],
            eta=self.resolved["schedule"]["T"] / s["K"],
            seed=s["seed"],
            chains=s["chains"],
            score_mode=s["score_mode"],
            M=s["M"],
            threads=threads,
            block_size=s["block_size"],
            keep_states=s["keep_states"],
        )

    def bound_context(self, M: float | None = None) -> BoundContext:
        if not self.has_sampler():
            raise ConfigError("missing table (K is needed for the bound)", field="sampler")
        K = self.resolved["sampler"]["K"]
        b = self.resolved["bound"]
        M = b["M"] if M is None else M
        spec = self.spec
        if self.is_gaussian:
            return BoundContext.for_gaussian(self.model(), spec, K, M=M, M1=b["M1"])
        data = self.resolved["data"]
        return BoundContext(
            spec=spec,
            d=data["d"],
            K=K,
            eta=spec.horizon_T / K,
            m0=data["m0"],
            L0=data["L0"],
            M=M,
            M1=b["M1"],
            x_star_norm=data["x_star_norm"],
            x0_l2=data.get("x0_l2"),
        )

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None or not self.has_sampler():
            return self
        resolved = {k: dict(v) for k, v in self.resolved.items()}
        resolved["sampler"]["seed"] = seed
        return ExperimentConfig(resolved)


def parse_config(raw: dict) -> ExperimentConfig:
    _no_extra(raw, "config", {"schedule", "data", "sampler", "bound"})
    sched = _table(raw, "schedule")
    _no_extra(sched, "schedule", {"family", "T", "params"})
    family_name = _get(sched, "schedule", "family", str)
    try:
        family = Family(family_name)
    except ValueError:
        raise ConfigError(f"unknown family {family_name!r}", field="schedule.family") from None
    if family is Family.CUSTOM:
        raise ConfigError("CUSTOM schedules are only available through the Python API", field="schedule.family")
    T = _get(sched, "schedule", "T", float)
    if "params" not in sched and PARAM_NAMES[family]:
        raise ConfigError("missing table", field="schedule.params")
    params_raw = sched.get("params", {})
    if not isinstance(params_raw, dict):
        raise ConfigError("must be a table", field="schedule.params")
    _no_extra(params_raw, "schedule.params", set(PARAM_NAMES[family]))
    params = {k: _get(params_raw, "schedule.params", k, float) for k in PARAM_NAMES[family]}
    try:
        ScheduleSpec.build(family, T, **params)
    except DomainError as exc:
        raise ConfigError(str(exc), field="schedule") from None
    resolved: dict[str, Any] = {"schedule": {"family": family.value, "T": T, "params": params}}

    data = _table(raw, "data")
    kind = _get(data, "data", "kind", str)
    d = _get(data, "data", "d", int)
    if d < 1:
        raise ConfigError("must be >= 1", field="data.d")
    if kind == "gaussian":
        _no_extra(data, "data", {"kind", "d", "sigma0_sq"})
        s0 = _get(data, "data", "sigma0_sq", float)
        if s0 <= 0:
            raise ConfigError("must be positive", field="data.sigma0_sq")
        resolved["data"] = {"kind": kind, "d": d, "sigma0_sq": s0}
    elif kind == "log_concave":
        _no_extra(data, "data", {"kind", "d", "m0", "L0", "x_star_norm", "x0_l2"})
        m0 = _get(data, "data", "m0", float)
        L0 = _get(data, "data", "L0", float)
        if not 0 < m0 <= L0:
            raise ConfigError("need 0 < m0 <= L0", field="data.m0")
        xs = _get(data, "data", "x_star_norm", float, LOG_CONCAVE_DEFAULTS["x_star_norm"])
        resolved["data"] = {"kind": kind, "d": d, "m0": m0, "L0": L0, "x_star_norm": xs}
        if "x0_l2" in data:
            resolved["data"]["x0_l2"] = _get(data, "data", "x0_l2", float)
    else:
        raise ConfigError(f"unknown data kind {kind!r}", field="data.kind")

    if "sampler" in raw:
        s = _table(raw, "sampler")
        _no_extra(s, "sampler", {"K"} | set(SAMPLER_DEFAULTS))
        out = {"K": _get(s, "sampler", "K", int)}
        kinds = {"chains": int, "seed": int, "score_mode": str, "M": float, "block_size": int, "keep_states": bool}
        for key, default in SAMPLER_DEFAULTS.items():
            out[key] = _get(s, "sampler", key, kinds[key], default)
        if out["K"] < 1:
            raise ConfigError("must be >= 1", field="sampler.K")
        if out["chains"] < 1:
            raise ConfigError("must be >= 1", field="sampler.chains")
        if not 0 <= out["seed"] < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", field="sampler.seed")
        if out["score_mode"] not in (ScoreMode.EXACT_GAUSSIAN.value, ScoreMode.PERTURBED.value):
            raise ConfigError("must be EXACT_GAUSSIAN or PERTURBED", field="sampler.score_mode")
        if out["M"] < 0:
            raise ConfigError("must be nonnegative", field="sampler.M")
        if out["block_size"] < 1:
            raise ConfigError("must be >= 1", field="sampler.block_size")
        resolved["sampler"] = out

    b = _table(raw, "bound", required=False)
    _no_extra(b, "bound", set(BOUND_DEFAULTS))
    bound = {k: _get(b, "bound", k, float, v) for k, v in BOUND_DEFAULTS.items()}
    if bound["M"] < 0 or bound["M1"] < 0:
        raise ConfigError("must be nonnegative", field="bound")
    resolved["bound"] = bound
    return ExperimentConfig(resolved)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="--config") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse TOML: {exc}", field="--config") from None
    return parse_config(raw)


def reference_config() -> str:
    """A complete config with every default written out."""
    doc = {
        "schedule": {"family": "VP_LINEAR", "T": 1.0, "params": {"beta_min": 0.1, "beta_max": 20.0}},
        "data": {"kind": "gaussian", "d": 8, "sigma0_sq": 0.64},
        "sampler": {"K": 1000, **SAMPLER_DEFAULTS},
        "bound": dict(BOUND_DEFAULTS),
    }
    return tomli_w.dumps(doc)
