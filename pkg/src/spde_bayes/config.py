"""Study configuration: dataclasses, JSON parsing with key checking, round-trip to dict."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .simulate import DEFAULT_DT, DEFAULT_SEED

STUDY_KINDS = ("simulate", "posterior", "contraction", "ergodicity", "bvm", "concentration", "figure")
M_RULES = ("fixed", "lambda_power")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``where`` names the line or field."""

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass(frozen=True)
class BasisRule:
    """Wavelet family plus the rule choosing the cut-off M from lambda.

    ``lambda_power`` sets M = ceil(log2(multiplier * lambda**exponent)), at least 1.
    """

    family: str = "haar"
    rule: str = "fixed"
    M: int = 7
    exponent: float = 1.0 / 3.0
    multiplier: float = 1.0
    beta0: float = 0.5
    p: int = 3
    xi: tuple = (-3.5, 3.5)

    def M_for(self, lam: float) -> int:
        if self.rule == "fixed":
            return self.M
        return max(1, math.ceil(math.log2(self.multiplier * lam**self.exponent) - 1e-12))

    def build(self, lam: float):
        from .wavelets import build_daubechies, build_haar

        M = self.M_for(lam)
        if self.family == "haar":
            return build_haar(tuple(self.xi), M)
        return build_daubechies(tuple(self.xi), M, self.p)

    def validate(self):
        if self.family not in ("haar", "daubechies"):
            raise ConfigError(f"unknown wavelet family {self.family!r}", "basis.family")
        if self.rule not in M_RULES:
            raise ConfigError(f"M rule must be one of {M_RULES}, got {self.rule!r}", "basis.rule")
        if self.rule == "fixed" and self.M < 0:
            raise ConfigError("M must be >= 0", "basis.M")
        if self.rule == "lambda_power" and not (self.exponent > 0 and self.multiplier > 0):
            raise ConfigError("exponent and multiplier must be positive", "basis.exponent")
        if self.beta0 < 0:
            raise ConfigError("beta0 must be >= 0", "basis.beta0")
        if len(self.xi) != 2 or not self.xi[1] > self.xi[0]:
            raise ConfigError("xi must be an interval [a, b] with a < b", "basis.xi")


@dataclass(frozen=True)
class StudyConfig:
    kind: str
    lambdas: tuple = (50.0,)
    replicates: int = 1
    T: float = 1.0
    dt: float = DEFAULT_DT
    points_per_unit: int = 16
    basis: BasisRule = field(default_factory=BasisRule)
    model: dict = field(default_factory=lambda: {"kind": "allen_cahn"})
    initial: float = 0.0
    g: dict = field(default_factory=lambda: {"kind": "bump", "center": "0", "radius": "1/2", "height": "1"})
    gamma: dict = field(default_factory=lambda: {"kind": "bump", "center": "0", "radius": "2", "height": "1"})
    seed: int = DEFAULT_SEED
    out_dir: str = "out"
    proxy_lambda: float = 64.0
    proxy_replicates: int = 200
    level: float = 0.9
    posterior_draws: int = 2000

    def validate(self):
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"study kind must be one of {STUDY_KINDS}, got {self.kind!r}", "kind")
        lams = list(self.lambdas)
        if not lams or any(not (x >= 1) for x in lams):
            raise ConfigError("lambda ladder must be non-empty with entries >= 1", "lambdas")
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ConfigError("lambda ladder must be strictly increasing", "lambdas")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1", "replicates")
        if not (self.T > 0 and self.dt > 0) or abs(round(self.T / self.dt) * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError("dt must be positive and divide T", "dt")
        if self.points_per_unit < 2:
            raise ConfigError("points_per_unit must be >= 2", "points_per_unit")
        if not 0 < self.level < 1:
            raise ConfigError("level must lie in (0, 1)", "level")
        if self.proxy_replicates < 2 or self.proxy_lambda < 16:
            raise ConfigError("proxy needs >= 2 replicates and lambda >= 16", "proxy_lambda")
        if not 0 <= self.seed < 2**128:
            raise ConfigError("seed must be a non-negative 128-bit integer", "seed")
        self.basis.validate()
        from .reaction import reaction_from_config

        for name in ("model", "g", "gamma"):
            try:
                reaction_from_config(getattr(self, name))
            except KeyError as e:
                raise ConfigError(f"missing key {e.args[0]!r}", name) from None
            except (TypeError, ValueError) as e:
                raise ConfigError(str(e), name) from None
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


# Per-study defaults used when a key is absent from the file.
STUDY_DEFAULTS = {
    "simulate": {"lambdas": (50.0,)},
    "posterior": {"lambdas": (50.0,)},
    "figure": {"lambdas": (50.0,), "basis": {"family": "haar", "rule": "fixed", "M": 7, "beta0": 0.5}},
    "contraction": {
        "lambdas": (12.5, 25.0, 50.0, 100.0),
        "replicates": 20,
        "basis": {"family": "haar", "rule": "lambda_power", "exponent": 1.0 / 3.0, "multiplier": 1.0, "beta0": 0.5},
    },
    "ergodicity": {
        "lambdas": (16.0, 32.0, 64.0, 128.0),
        "replicates": 200,
        "model": {"kind": "zero"},
        "g": {"kind": "bump", "center": "0", "radius": "5/2", "height": "1"},
        "proxy_replicates": 2000,
    },
    "concentration": {"lambdas": (64.0, 128.0), "replicates": 500},
    "bvm": {
        "lambdas": (100.0,),
        "replicates": 200,
        "basis": {"family": "haar", "rule": "lambda_power", "exponent": 1.0 / 4.2, "multiplier": 1.0, "beta0": 1.6},
        "gamma": {"kind": "bump", "center": "0", "radius": "1", "height": "1"},
    },
}


def config_from_dict(d: dict, where_prefix: str = "") -> StudyConfig:
    if not isinstance(d, dict):
        raise ConfigError("top level must be an object")
    known = {f.name for f in fields(StudyConfig)}
    for k in d:
        if k not in known:
            raise ConfigError(f"unknown key {k!r}", where_prefix + k)
    if "kind" not in d:
        raise ConfigError("missing required key 'kind'", "kind")
    kind = d["kind"]
    if kind not in STUDY_KINDS:
        raise ConfigError(f"study kind must be one of {STUDY_KINDS}, got {kind!r}", "kind")
    merged = {**STUDY_DEFAULTS.get(kind, {}), **d}
    basis_d = {**STUDY_DEFAULTS.get(kind, {}).get("basis", {}), **(d.get("basis") or {})}
    bknown = {f.name for f in fields(BasisRule)}
    for k in basis_d:
        if k not in bknown:
            raise ConfigError(f"unknown key {k!r}", "basis." + k)
    try:
        if "xi" in basis_d:
            basis_d["xi"] = tuple(float(v) for v in basis_d["xi"])
        basis = BasisRule(**basis_d)
        merged["basis"] = basis
        merged["lambdas"] = tuple(float(x) for x in merged.get("lambdas", (50.0,)))
        for key, typ in (("replicates", int), ("points_per_unit", int), ("seed", int), ("proxy_replicates", int), ("posterior_draws", int)):
            if key in merged and not isinstance(merged[key], int):
                raise ConfigError(f"expected an integer, got {merged[key]!r}", key)
        for key in ("T", "dt", "initial", "proxy_lambda", "level"):
            if key in merged:
                merged[key] = float(merged[key])
        cfg = StudyConfig(**merged)
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from None
    return cfg.validate()


def config_to_dict(cfg: StudyConfig) -> dict:
    d = asdict(cfg)
    d["lambdas"] = list(cfg.lambdas)
    d["basis"]["xi"] = list(cfg.basis.xi)
    return d


def parse_config(path) -> StudyConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, f"{path}:{e.lineno}:{e.colno}") from None
    return config_from_dict(raw)


def dump_config(cfg: StudyConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def config_hash(cfg: StudyConfig) -> str:
    """Hash of everything that can change a result; the output directory cannot."""
    d = config_to_dict(cfg)
    d.pop("out_dir")
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def with_overrides(cfg: StudyConfig, **kw) -> StudyConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw).validate() if kw else cfg
