"""YAML run configuration: parsing, validation and conversion to library configs.

Every section is optional except where a command needs it. Unknown keys and
bad values raise :class:`ConfigError` naming the dotted field path.

Example::

    model:
      p: 30
      mu: 0.5
      structure: block        # block | chain, or give B: path/to/B.csv
      weight: 0.3
    kernel: {kind: restricted_linear, support: 1.0}
    link: {kind: arctan}
    simulation: {T: 200, burn_in: 5, seed: 1}
    fit: {M: 2000, lambda: cv, weight_mode: naive}
    cv: {K: 5, n_lambdas: 30, ratio: 0.001, fold_scheme: random_bins, seed: 0}
    roc: {n_lambdas: 30, ratio: 0.001}
    bootstrap: {n_replicates: 50, target_sparsity: 0.05, keep_fraction: 0.5}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from tppg.bootstrap import BootstrapConfig
from tppg.core import KernelSpec, LinkSpec, ModelSpec
from tppg.design import choose_M
from tppg.estimate import WEIGHT_MODES, FitConfig
from tppg.metrics import make_structure
from tppg.selection import FOLD_SCHEMES, CVConfig

KERNEL_KINDS = ("restricted_linear", "exponential", "indicator")
LINK_KINDS = ("arctan", "sigmoid", "scaled_arctan")

SCHEMA: dict[str, dict[str, Any]] = {
    "model": {"p": None, "mu": 0.5, "structure": None, "weight": 0.3, "B": None, "setting": None},
    "kernel": {"kind": "restricted_linear", "support": None, "rate": 1.0},
    "link": {"kind": "arctan", "offset": None, "scale": None, "rate": None},
    "simulation": {"T": None, "burn_in": 0.0, "seed": 0},
    "data": {"T": None, "p": None},
    "fit": {"M": None, "M_multiplier": 10, "lambda": "cv", "weight_mode": "naive", "max_outer": 5,
            "max_inner": 2000, "tol": 1e-8, "penalize_mu": True},
    "cv": {"K": 5, "lambdas": None, "n_lambdas": 30, "ratio": 1e-3, "fold_scheme": "random_bins",
           "seed": 0, "rule": "min"},
    "roc": {"lambdas": None, "n_lambdas": 30, "ratio": 1e-3},
    "bootstrap": {"n_replicates": 50, "n_bins_sampled": None, "target_sparsity": 0.05,
                  "keep_fraction": 0.5, "seed": 0, "retune_lambda": True},
}

# Settings of the simulation study: link and kernel presets.
SETTINGS = {
    1: {"kernel": {"kind": "restricted_linear"}, "link": {"kind": "arctan"}},
    2: {"kernel": {"kind": "exponential"}, "link": {"kind": "sigmoid"}},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is the dotted path of the offending key."""

    def __init__(self, field: str, message: str, line: Optional[int] = None):
        self.field, self.line = field, line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}{where}: {message}")


@dataclass
class RunConfig:
    sections: dict = field(default_factory=dict)
    base_dir: Path = Path(".")

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def snapshot(self) -> dict:
        return {s: dict(v) for s, v in self.sections.items()}


def _number(path, v, *, integer=False, positive=False, nonneg=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, f"must be positive, got {v!r}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be nonnegative, got {v!r}")
    return int(v) if integer else float(v)


def _choice(path, v, options):
    if v not in options:
        raise ConfigError(path, f"must be one of {list(options)}, got {v!r}")
    return v


def _bool(path, v):
    if not isinstance(v, bool):
        raise ConfigError(path, f"expected true or false, got {v!r}")
    return v


def _lambdas(path, v):
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a nonempty list of penalties")
    lam = [_number(f"{path}[{i}]", x, positive=True) for i, x in enumerate(v)]
    if any(b > a for a, b in zip(lam, lam[1:])):
        raise ConfigError(path, "penalties must be in descending order")
    return lam


def _validate(sec: dict) -> None:
    m, k, ln = sec["model"], sec["kernel"], sec["link"]
    m["p"] = _number("model.p", m["p"], integer=True, positive=True, allow_none=True)
    m["mu"] = _number("model.mu", m["mu"])
    m["weight"] = _number("model.weight", m["weight"])
    if m["structure"] is not None:
        _choice("model.structure", m["structure"], ("block", "chain"))
    if m["B"] is not None and not isinstance(m["B"], (str, list)):
        raise ConfigError("model.B", "expected a file path or a nested list")
    if m["setting"] is not None:
        _choice("model.setting", m["setting"], tuple(SETTINGS))
    _choice("kernel.kind", k["kind"], KERNEL_KINDS)
    k["support"] = _number("kernel.support", k["support"], positive=True, allow_none=True)
    k["rate"] = _number("kernel.rate", k["rate"], positive=True)
    _choice("link.kind", ln["kind"], LINK_KINDS)
    for key in ("offset", "scale"):
        ln[key] = _number(f"link.{key}", ln[key], allow_none=True)
    if ln["rate"] is not None and ln["rate"] != "adaptive":
        ln["rate"] = _number("link.rate", ln["rate"], positive=True)
    s = sec["simulation"]
    s["T"] = _number("simulation.T", s["T"], positive=True, allow_none=True)
    s["burn_in"] = _number("simulation.burn_in", s["burn_in"], nonneg=True)
    s["seed"] = _number("simulation.seed", s["seed"], integer=True, nonneg=True)
    d = sec["data"]
    d["T"] = _number("data.T", d["T"], positive=True, allow_none=True)
    d["p"] = _number("data.p", d["p"], integer=True, positive=True, allow_none=True)
    f = sec["fit"]
    f["M"] = _number("fit.M", f["M"], integer=True, positive=True, allow_none=True)
    f["M_multiplier"] = _number("fit.M_multiplier", f["M_multiplier"], integer=True, positive=True)
    if f["lambda"] != "cv":
        f["lambda"] = _number("fit.lambda", f["lambda"], nonneg=True)
    _choice("fit.weight_mode", f["weight_mode"], WEIGHT_MODES)
    f["max_outer"] = _number("fit.max_outer", f["max_outer"], integer=True, positive=True)
    f["max_inner"] = _number("fit.max_inner", f["max_inner"], integer=True, positive=True)
    f["tol"] = _number("fit.tol", f["tol"], positive=True)
    _bool("fit.penalize_mu", f["penalize_mu"])
    c = sec["cv"]
    c["K"] = _number("cv.K", c["K"], integer=True)
    if c["K"] < 2:
        raise ConfigError("cv.K", "must be at least 2")
    c["lambdas"] = _lambdas("cv.lambdas", c["lambdas"])
    c["n_lambdas"] = _number("cv.n_lambdas", c["n_lambdas"], integer=True, positive=True)
    c["ratio"] = _number("cv.ratio", c["ratio"], positive=True)
    if c["ratio"] >= 1:
        raise ConfigError("cv.ratio", "must be below 1")
    _choice("cv.fold_scheme", c["fold_scheme"], FOLD_SCHEMES)
    c["seed"] = _number("cv.seed", c["seed"], integer=True, nonneg=True)
    _choice("cv.rule", c["rule"], ("min", "1se"))
    r = sec["roc"]
    r["lambdas"] = _lambdas("roc.lambdas", r["lambdas"])
    r["n_lambdas"] = _number("roc.n_lambdas", r["n_lambdas"], integer=True, positive=True)
    r["ratio"] = _number("roc.ratio", r["ratio"], positive=True)
    if r["ratio"] >= 1:
        raise ConfigError("roc.ratio", "must be below 1")
    b = sec["bootstrap"]
    b["n_replicates"] = _number("bootstrap.n_replicates", b["n_replicates"], integer=True, positive=True)
    b["n_bins_sampled"] = _number("bootstrap.n_bins_sampled", b["n_bins_sampled"], integer=True,
                                  positive=True, allow_none=True)
    b["target_sparsity"] = _number("bootstrap.target_sparsity", b["target_sparsity"], positive=True)
    if b["target_sparsity"] > 1:
        raise ConfigError("bootstrap.target_sparsity", "must be at most 1")
    b["keep_fraction"] = _number("bootstrap.keep_fraction", b["keep_fraction"], positive=True)
    b["seed"] = _number("bootstrap.seed", b["seed"], integer=True, nonneg=True)
    _bool("bootstrap.retune_lambda", b["retune_lambda"])


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Parse and validate YAML text; missing keys take their defaults."""
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise ConfigError("<yaml>", str(exc.problem), mark.line + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ConfigError("<yaml>", str(exc)) from None
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a mapping of sections")
    for name, body in raw.items():
        if name not in SCHEMA:
            raise ConfigError(str(name), f"unknown section; expected one of {sorted(SCHEMA)}")
        if body is not None and not isinstance(body, dict):
            raise ConfigError(name, "section must be a mapping")
        for key in body or {}:
            if key not in SCHEMA[name]:
                raise ConfigError(f"{name}.{key}", "unknown key")
    setting = (raw.get("model") or {}).get("setting")
    sections = {}
    for name, defaults in SCHEMA.items():
        preset = SETTINGS.get(setting, {}).get(name, {}) if isinstance(setting, int) else {}
        sections[name] = {**defaults, **preset, **(raw.get(name) or {})}
    _validate(sections)
    return RunConfig(sections, Path(base_dir))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


# conversion ---------------------------------------------------------------

def kernel_spec(cfg: RunConfig) -> KernelSpec:
    k = cfg.sections["kernel"]
    if k["kind"] == "restricted_linear":
        return KernelSpec.restricted_linear(k["support"] or 1.0)
    if k["kind"] == "exponential":
        return KernelSpec.exponential(rate=k["rate"], support=k["support"] or 5.0)
    return KernelSpec.indicator(k["support"] or 0.25)


def link_spec(cfg: RunConfig, data=None):
    """Single link, or one per node for ``scaled_arctan`` with ``rate: adaptive``."""
    ln = cfg.sections["link"]
    if ln["kind"] == "arctan":
        base = LinkSpec.arctan()
    elif ln["kind"] == "sigmoid":
        base = LinkSpec.sigmoid()
    else:
        if ln["rate"] == "adaptive" or ln["rate"] is None:
            if data is None:
                raise ConfigError("link.rate", "adaptive rate needs event data")
            rates = data.counts() / data.horizon
            if np.any(rates <= 0):
                raise ConfigError("link.rate", "adaptive rate needs at least one event per node")
            return [LinkSpec.scaled_arctan(float(r)) for r in rates]
        return LinkSpec.scaled_arctan(ln["rate"])
    overrides = {k: ln[k] for k in ("offset", "scale") if ln[k] is not None}
    if overrides:
        base = LinkSpec(base.kind, **{**{"offset": base.offset, "scale": base.scale, "rate": base.rate},
                                      **overrides})
    return base


def transfer_matrix(cfg: RunConfig) -> np.ndarray:
    m = cfg.sections["model"]
    if m["B"] is not None:
        if isinstance(m["B"], list):
            try:
                B = np.array(m["B"], dtype=float)
            except ValueError:
                raise ConfigError("model.B", "rows have unequal length") from None
        else:
            from tppg.io import DataFormatError, read_matrix
            try:
                B = read_matrix(cfg.base_dir / m["B"])
            except (OSError, DataFormatError) as exc:
                raise ConfigError("model.B", str(exc)) from None
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ConfigError("model.B", f"must be square, got shape {B.shape}")
        if m["p"] is not None and B.shape[0] != m["p"]:
            raise ConfigError("model.B", f"shape {B.shape} does not match model.p={m['p']}")
        return B
    if m["structure"] is None or m["p"] is None:
        raise ConfigError("model", "need model.structure and model.p, or model.B")
    try:
        return make_structure(m["structure"], m["p"], m["weight"])
    except ValueError as exc:
        raise ConfigError("model.p", str(exc)) from None


def model_spec(cfg: RunConfig) -> ModelSpec:
    B = transfer_matrix(cfg)
    link = link_spec(cfg)
    return ModelSpec(cfg.sections["model"]["mu"], B, kernel_spec(cfg), link)


def horizon(cfg: RunConfig) -> float:
    T = cfg.sections["data"]["T"] or cfg.sections["simulation"]["T"]
    if T is None:
        raise ConfigError("simulation.T", "observation length is required")
    return T


def node_count(cfg: RunConfig) -> Optional[int]:
    m = cfg.sections["model"]
    if cfg.sections["data"]["p"] is not None:
        return cfg.sections["data"]["p"]
    if m["p"] is not None:
        return m["p"]
    if m["B"] is not None:
        return transfer_matrix(cfg).shape[0]
    return None


def n_bins(cfg: RunConfig, T: float) -> int:
    f = cfg.sections["fit"]
    return f["M"] if f["M"] is not None else choose_M(T, f["M_multiplier"])


def fit_config(cfg: RunConfig, lam: float = 0.0) -> FitConfig:
    f = cfg.sections["fit"]
    return FitConfig(lam=lam, weight_mode=f["weight_mode"], max_outer=f["max_outer"],
                     max_inner=f["max_inner"], tol=f["tol"], penalize_mu=f["penalize_mu"])


def cv_config(cfg: RunConfig, seed: Optional[int] = None) -> CVConfig:
    c = cfg.sections["cv"]
    return CVConfig(K=c["K"], lambdas=c["lambdas"], n_lambdas=c["n_lambdas"], ratio=c["ratio"],
                    fold_scheme=c["fold_scheme"], seed=c["seed"] if seed is None else seed, rule=c["rule"])


def bootstrap_config(cfg: RunConfig, seed: Optional[int] = None) -> BootstrapConfig:
    b = dict(cfg.sections["bootstrap"])
    if seed is not None:
        b["seed"] = seed
    return BootstrapConfig(**b)
