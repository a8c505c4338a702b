"""Flat experiment configuration: `section.key = value` lines, a canonical
normalized form with a stable hash, and builders from config to objects.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from .kernels import Kernel, MicroKernel, builtin_kernel, dilution, make_positions
from .models import InitialLaw, ModelSpec, builtin_model, initial_law


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    if "," in raw:
        return [_parse_value(v) for v in raw.split(",") if v.strip()]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw.strip("\"'")


def _format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        return ", ".join(_format_value(u) for u in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class ExperimentConfig:
    """Parsed flat configuration with dotted keys."""

    values: dict = field(default_factory=dict)

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"line {lineno}", "expected 'key = value'")
            key, raw = body.split("=", 1)
            key = key.strip()
            if not re.fullmatch(r"[A-Za-z0-9_.\-]+", key):
                raise ConfigError(key or f"line {lineno}", "malformed key")
            values[key] = _parse_value(raw)
        return cls(values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.parse(fh.read())

    def normalized(self) -> str:
        lines = [f"{k} = {_format_value(self.values[k])}"
                 for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.normalized().encode()).hexdigest()[:16]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    def require(self, key: str):
        if key not in self.values:
            raise ConfigError(key, "required key missing")
        return self.values[key]

    def section(self, prefix: str) -> dict:
        pre = prefix + "."
        return {k[len(pre):]: v for k, v in self.values.items()
                if k.startswith(pre)}

    def int_list(self, key: str, default=None) -> list:
        v = self.values.get(key, default)
        if v is None:
            return []
        if not isinstance(v, list):
            v = [v]
        return [int(u) for u in v]


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

_KERNEL_PARAM_KEYS = ("p", "c", "alpha", "R", "scale")


def _kernel_from_section(sec: dict, path: str) -> Kernel:
    if "name" not in sec:
        raise ConfigError(f"{path}.name", "kernel name missing")
    params = {k: v for k, v in sec.items() if k in _KERNEL_PARAM_KEYS}
    try:
        base = builtin_kernel(str(sec["name"]), **params)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{path}.name", str(exc)) from exc
    if sec.get("normalized", False):
        base = builtin_kernel("normalized", base=base)
    return base


def build_generator(cfg: ExperimentConfig) -> Kernel:
    return _kernel_from_section(cfg.section("kernel"), "kernel")


def build_macro_kernel(cfg: ExperimentConfig, generator: Kernel) -> Kernel:
    """Macroscopic kernel: explicit `macro.*` section, else derived from the
    dilution rule (degree-normalized renormalizes the generator's rows)."""
    sec = cfg.section("macro")
    if sec:
        return _kernel_from_section(sec, "macro")
    if cfg.get("dilution.kind", "uniform") == "degree-normalized":
        return builtin_kernel("normalized", base=generator)
    return generator


def parse_rho(rule, n: int, path: str = "micro.rho") -> float:
    """Dilution rate: a constant in (0, 1] or a rule 'n^-delta'."""
    if isinstance(rule, (int, float)):
        rho = float(rule)
    else:
        m = re.fullmatch(r"n\^-([0-9.]+)", str(rule).replace(" ", ""))
        if not m:
            raise ConfigError(path, f"cannot parse dilution rate {rule!r}")
        delta = float(m.group(1))
        if not 0.0 < delta < 0.5:
            raise ConfigError(path, "rate exponent must lie in (0, 1/2)")
        rho = float(n) ** -delta
    if not 0.0 < rho <= 1.0:
        raise ConfigError(path, "dilution rate must lie in (0, 1]")
    return rho


def build_micro(cfg: ExperimentConfig, generator: Kernel, n: int) -> MicroKernel:
    return MicroKernel(generator, parse_rho(cfg.get("micro.rho", 1.0), n))


def build_grid(cfg: ExperimentConfig, n: int, seed: Optional[int] = None):
    scheme = cfg.get("positions.scheme", "deterministic")
    law = cfg.get("positions.law", "uniform")
    p = int(cfg.get("positions.p", 1))
    try:
        return make_positions(scheme, n, p=p,
                              seed=seed if scheme == "iid" else None, law=law)
    except ValueError as exc:
        raise ConfigError("positions", str(exc)) from exc


def build_model(cfg: ExperimentConfig) -> ModelSpec:
    sec = cfg.section("model")
    if "name" not in sec:
        raise ConfigError("model.name", "model name missing")
    name = str(sec.pop("name"))
    try:
        return builtin_model(name, **sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from exc


def build_init(cfg: ExperimentConfig, d: int) -> InitialLaw:
    sec = cfg.section("init")
    name = str(sec.pop("name", "uniform-circle"))
    params = {}
    if name == "point":
        params["profile"] = sec.get("profile", "linear")
        params["profile_params"] = {k.split(".")[-1]: v for k, v in sec.items()
                                    if k.startswith("profile.")}
    elif name == "gaussian":
        params["std"] = float(sec.get("std", 1.0))
        if "mean" in sec:
            params["mu"] = float(sec["mean"])
    try:
        return initial_law(name, d=d, **params)
    except ValueError as exc:
        raise ConfigError("init", str(exc)) from exc


def numerics(cfg: ExperimentConfig) -> dict:
    out = {"T": float(cfg.get("numerics.T", 1.0)),
           "h": float(cfg.get("numerics.h", 0.01)),
           "Q": int(cfg.get("numerics.Q", 16)),
           "M": int(cfg.get("numerics.M", 200)),
           "tol": float(cfg.get("numerics.tol", 1e-8)),
           "max_iter": int(cfg.get("numerics.max_iter", 25)),
           "window": float(cfg.get("numerics.window", 1.0))}
    if out["h"] <= 0 or out["T"] <= 0:
        raise ConfigError("numerics", "T and h must be positive")
    return out
