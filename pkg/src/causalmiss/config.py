"""Flat key-value run configuration with repeatable formula keys.

The format is deliberately simple: `key = value` lines, `#` comments, and two
repeatable keys (`imputation_model`, `ps_model`) whose values are kept
verbatim so reports echo exactly what was specified. Command-line flags
override file values. A master seed is required: results must be a pure
function of (config, data), never of the wall clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ConfigError

REPEATABLE = ("imputation_model", "ps_model")

_DEFAULTS = {
    "outcome_kind": "binary",
    "method": "ipw",
    "m": 20,
    "splits": 10,
    "B": 2000,
    "workers": 1,
    "eps": 0.01,
    "ci_level": 0.95,
    "tie_method": "mid",
    "out": "results",
    "n": 500,
    "replications": 1000,
}


@dataclass
class RunConfig:
    """Everything a subcommand needs, merged from file and flags."""

    values: dict = field(default_factory=dict)
    imputation_models: list = field(default_factory=list)
    ps_models: list = field(default_factory=list)

    def get(self, key, default=None):
        if key in self.values:
            return self.values[key]
        if default is not None:
            return default
        return _DEFAULTS.get(key)

    def require(self, key):
        value = self.get(key)
        if value is None:
            raise ConfigError(f"missing required configuration key {key!r}")
        return value

    def get_int(self, key, minimum=None):
        value = self.get(key)
        try:
            value = int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {value!r}") from None
        if minimum is not None and value < minimum:
            raise ConfigError(f"{key} must be >= {minimum}, got {value}")
        return value

    def get_float(self, key, lo=None, hi=None):
        value = self.get(key)
        if value is None:
            return None
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be a number, got {value!r}") from None
        if lo is not None and not (lo < value < hi):
            raise ConfigError(f"{key} must lie in ({lo}, {hi}), got {value}")
        return value

    def get_list(self, key):
        value = self.get(key)
        if value is None:
            return []
        if isinstance(value, (list, tuple)):
            return list(value)
        return [tok.strip() for tok in str(value).split(",") if tok.strip()]

    def seed(self) -> int:
        value = self.get("seed")
        if value is None:
            raise ConfigError(
                "a master seed is required (set `seed = ...` or pass --seed); "
                "runs must be reproducible"
            )
        return int(value)


def parse_config_file(path) -> RunConfig:
    config = RunConfig()
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key or not value:
                raise ConfigError(f"{path}:{lineno}: empty key or value")
            if key == "imputation_model":
                config.imputation_models.append(value)
            elif key == "ps_model":
                config.ps_models.append(value)
            elif key in config.values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            else:
                config.values[key] = value
    return config


def merge_cli(config: RunConfig, args) -> RunConfig:
    """Overlay parsed argparse values; flags win over file values."""
    mapping = {
        "data": args.data,
        "exposure": args.exposure,
        "outcome": args.outcome,
        "covariates": args.covariates,
        "outcome_kind": args.outcome_kind,
        "missing_token": args.missing_token,
        "method": args.method,
        "estimand": args.estimand,
        "m": args.m,
        "q": args.q,
        "splits": args.splits,
        "B": args.B,
        "seed": args.seed,
        "out": args.out,
        "workers": args.workers,
        "tie_method": args.tie_method,
        "strategy": getattr(args, "strategy", None),
    }
    for key, value in mapping.items():
        if value is not None:
            config.values[key] = value
    for name, bucket in (("imputation", config.imputation_models),
                         ("ps", config.ps_models)):
        extra = getattr(args, name, None)
        if extra:
            bucket.extend(extra)
    for key in ("n", "replications"):
        value = getattr(args, key, None)
        if value is not None:
            config.values[key] = value
    return config
