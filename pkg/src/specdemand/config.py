"""Run configuration: JSON file, dotted overrides, validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field

from .benchreport import ItuBenchmarks
from .quality import CleansePolicy
from .schema import ConfigError
from .synthgen import CouplingSpec, RegionProfile, builtin_couplings, get_profile
from .transfer import TransferConfig

CONFIG_ENV = "SPECDEMAND_CONFIG"

# fields that never change results; keys starting with "_" are comments
_NON_SEMANTIC = ("out", "jobs")
_KNOWN = ("seed", "out", "jobs", "regions", "coupling", "windows", "cleanse", "lags", "models",
          "transfer", "benchmarks")


def default_config():
    return {
        "seed": 0,
        "out": "out",
        "jobs": 1,
        "regions": ["ottawa-like", "toronto-like"],
        "coupling": "default",
        "windows": {"span_months": 3, "stride_months": 3},
        "cleanse": {"max_short_gap": 1, "ma_window": 3, "iqr_k": 1.5, "z_thresh": 3.0,
                    "winsor_limits": [5.0, 95.0], "max_passes": 200},
        "lags": [0, 1, 2],
        "models": {
            "n_test_windows": 4,
            "lasso": {"lam": 0.5},
            "random_forest": {"n_trees": 100, "max_depth": 8, "min_leaf": 3,
                              "feature_frac": 0.3333333333333333},
            "gradient_boosted": {"n_rounds": 100, "learning_rate": 0.1, "max_depth": 3,
                                 "min_leaf": 5},
        },
        "transfer": {"source_region": "toronto-like", "target_region": "ottawa-like",
                     "target_fraction": 0.25, "repeats": 10},
        "benchmarks": {"vanilla_high": 240.0, "vanilla_low": 200.0,
                       "modernized_high": 180.0, "modernized_low": 150.0,
                       "reference_year": 2023},
    }


def _merge(base, upd, path=""):
    for k, v in upd.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v, f"{path}{k}.")
        else:
            base[k] = copy.deepcopy(v)
    return base


def parse_override(text):
    """``a.b.c=value`` to (["a", "b", "c"], value); the value is JSON when it parses."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(text, "empty override key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def apply_override(cfg, parts, value):
    node = cfg
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError(".".join(parts), f"{p!r} is not a section")
        node = nxt
    node[parts[-1]] = value
    return cfg


def load_config(path=None, overrides=()):
    """Defaults, then the JSON file (or ``$SPECDEMAND_CONFIG``), then overrides."""
    cfg = default_config()
    path = path or os.environ.get(CONFIG_ENV)
    if path:
        try:
            with open(path, encoding="utf-8") as f:
                user = json.load(f)
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"{path} is not valid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("--config", "top level must be an object")
        _merge(cfg, user)
    for text in overrides:
        apply_override(cfg, *parse_override(text))
    return RunConfig.from_dict(cfg)


@dataclass
class RunConfig:
    raw: dict
    seed: int
    out: str
    jobs: int
    profiles: list
    coupling: CouplingSpec
    span_months: int
    stride_months: int
    cleanse: CleansePolicy
    lags: tuple
    models: dict
    transfer: TransferConfig
    repeats: int
    benchmarks: ItuBenchmarks
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        d = copy.deepcopy(d)
        unknown = sorted(k for k in d if k not in _KNOWN and not k.startswith("_"))
        if unknown:
            raise ConfigError(unknown[0], f"unknown config field; known: {', '.join(_KNOWN)}")
        try:
            seed = int(d["seed"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError("seed", "an integer seed is required") from None
        if seed < 0:
            raise ConfigError("seed", "must be >= 0")
        jobs = d.get("jobs", 1)
        if not isinstance(jobs, int) or jobs < 1:
            raise ConfigError("jobs", "must be a positive integer")

        profiles = []
        for r in d.get("regions") or []:
            profiles.append(get_profile(r) if isinstance(r, str) else RegionProfile.from_dict(r))
        if not profiles:
            raise ConfigError("regions", "at least one region required")
        names = [p.name for p in profiles]
        if len(set(names)) != len(names):
            raise ConfigError("regions", "region names must be unique")

        c = d.get("coupling", "default")
        if isinstance(c, str):
            presets = builtin_couplings()
            if c not in presets:
                raise ConfigError("coupling", f"unknown preset {c!r}; have {sorted(presets)}")
            coupling = presets[c]
        elif isinstance(c, dict):
            coupling = CouplingSpec.from_dict(c)
        else:
            raise ConfigError("coupling", "must be a preset name or an object")

        w = d.get("windows") or {}
        span, stride = int(w.get("span_months", 3)), int(w.get("stride_months", 3))
        if span < 1 or stride < 1 or stride > span or 12 % stride:
            raise ConfigError("windows", "need 1 <= stride_months <= span_months, "
                                         "with stride_months dividing 12")

        try:
            cleanse = CleansePolicy(**(d.get("cleanse") or {}))
        except TypeError as exc:
            raise ConfigError("cleanse", str(exc)) from None

        lags = tuple(int(x) for x in d.get("lags", [0, 1, 2]))
        if not lags or min(lags) < 0 or len(set(lags)) != len(lags):
            raise ConfigError("lags", "need distinct non-negative lags")

        models = d.get("models") or {}
        if int(models.get("n_test_windows", 4)) < 1:
            raise ConfigError("models.n_test_windows", "must be >= 1")
        lasso = models.get("lasso") or {}
        if not float(lasso.get("lam", 0.5)) >= 0:
            raise ConfigError("models.lasso.lam", "must be >= 0")

        t = dict(d.get("transfer") or {})
        repeats = int(t.pop("repeats", 10))
        if repeats < 1:
            raise ConfigError("transfer.repeats", "must be >= 1")
        t.setdefault("lam", float(lasso.get("lam", 0.5)))
        t.setdefault("n_test_windows", int(models.get("n_test_windows", 4)))
        transfer = TransferConfig.from_dict(t)
        for role in ("source_region", "target_region"):
            if getattr(transfer, role) not in names:
                raise ConfigError(f"transfer.{role}",
                                  f"{getattr(transfer, role)!r} is not among regions {names}")

        benchmarks = ItuBenchmarks.from_dict(d.get("benchmarks") or {})
        return cls(d, seed, str(d.get("out", "out")), jobs, profiles, coupling, span, stride,
                   cleanse, lags, models, transfer, repeats, benchmarks)

    def profile(self, name):
        for p in self.profiles:
            if p.name == name:
                return p
        raise ConfigError("regions", f"no region named {name!r}")

    def resolved(self):
        """Fully expanded config: presets replaced by their values."""
        d = copy.deepcopy(self.raw)
        d["regions"] = [p.to_dict() for p in self.profiles]
        d["coupling"] = self.coupling.to_dict()
        d["cleanse"] = {k: (list(v) if isinstance(v, tuple) else v)
                        for k, v in self.cleanse.__dict__.items()}
        d["transfer"] = dict(self.transfer.to_dict(), repeats=self.repeats)
        d["benchmarks"] = self.benchmarks.to_dict()
        d["lags"] = list(self.lags)
        d["windows"] = {"span_months": self.span_months, "stride_months": self.stride_months}
        return d

    def hash(self):
        d = {k: v for k, v in self.resolved().items()
             if k not in _NON_SEMANTIC and not k.startswith("_")}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()
