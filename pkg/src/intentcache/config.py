"""Configuration: policy profiles plus backend, cache and NL client settings."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from .nl.heuristics import DEFAULT_SPATIAL_TERMS


@dataclass(frozen=True)
class PolicyConfig:
    confidence_threshold: float | None = 0.5
    heuristic_set: str = "TimeAndSpatial"
    derivations_enabled: bool = True
    sql_seeded_only: bool = False
    verify_nl_hits: bool = False
    spatial_terms: tuple[str, ...] = DEFAULT_SPATIAL_TERMS
    # a failed validation is never stored; not configurable on purpose
    store_on_validation_failure: bool = field(default=False, init=False)

    def with_overrides(self, **kw: Any) -> "PolicyConfig":
        kw = {k: v for k, v in kw.items() if v is not None or k == "confidence_threshold"}
        return replace(self, **kw)


PROFILES = {
    "conservative": PolicyConfig(confidence_threshold=0.7, heuristic_set="All"),
    "balanced": PolicyConfig(confidence_threshold=0.5, heuristic_set="TimeAndSpatial"),
    "aggressive": PolicyConfig(confidence_threshold=None, heuristic_set="None"),
}


def profile(name: str) -> PolicyConfig:
    try:
        return PROFILES[name.lower()]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None


@dataclass
class Config:
    schema: str | None = None  # None: packaged retail schema
    data_dir: str | None = None  # None: generate the synthetic data set
    backend: str = "reference"  # reference | sqlite
    sqlite_path: str | None = None
    cache_dir: str | None = "cache"
    capacity_bytes: int | None = None
    capacity_entries: int | None = None
    result_format: str = "parquet"
    policy: PolicyConfig = field(default_factory=lambda: PROFILES["balanced"])
    nl_client: str = "fixture"  # fixture | http
    nl_fixtures: list[str] = field(default_factory=list)  # extra fixture files; packaged ones always load
    nl_url: str | None = None
    nl_model: str | None = None
    nl_api_key_env: str = "INTENTCACHE_NL_API_KEY"
    nl_memo_path: str | None = None
    seed: int = 7
    fact_rows: int = 50_000
    repetitions: int = 3
    variants: int = 21
    report_dir: str = "runs"
    base_dir: Path = field(default_factory=Path.cwd, repr=False)

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p


def _policy_from(doc: dict[str, Any]) -> PolicyConfig:
    base = profile(doc.get("profile", "balanced"))
    allowed = {f.name for f in fields(PolicyConfig) if f.init}
    extra = {k: v for k, v in doc.items() if k in allowed}
    if "spatial_terms" in extra:
        extra["spatial_terms"] = tuple(extra["spatial_terms"])
    unknown = set(doc) - allowed - {"profile", "store_on_validation_failure"}
    if unknown:
        raise ValueError(f"unknown policy keys {sorted(unknown)}")
    if doc.get("store_on_validation_failure"):
        raise ValueError("store_on_validation_failure is fixed to false")
    return replace(base, **extra)


def load_config(path: str | Path | None = None) -> Config:
    """Read a YAML config; relative paths resolve against the file's directory."""
    if path is None:
        text = resources.files("intentcache.data").joinpath("default_config.yaml").read_text(encoding="utf-8")
        base = Path.cwd()
    else:
        text = Path(path).read_text(encoding="utf-8")
        base = Path(path).resolve().parent
    doc = yaml.safe_load(text) or {}
    if not isinstance(doc, dict):
        raise ValueError("config must be a mapping")
    cfg = Config(base_dir=base)
    sections = {
        "backend": {"kind": "backend", "sqlite_path": "sqlite_path"},
        "cache": {
            "dir": "cache_dir",
            "capacity_bytes": "capacity_bytes",
            "capacity_entries": "capacity_entries",
            "format": "result_format",
        },
        "nl": {
            "client": "nl_client",
            "fixtures": "nl_fixtures",
            "url": "nl_url",
            "model": "nl_model",
            "api_key_env": "nl_api_key_env",
            "memo_path": "nl_memo_path",
        },
        "harness": {"seed": "seed", "fact_rows": "fact_rows", "repetitions": "repetitions", "variants": "variants", "report_dir": "report_dir"},
    }
    for key in ("schema", "data_dir"):
        if key in doc:
            setattr(cfg, key, doc[key])
    for section, mapping in sections.items():
        sub = doc.get(section) or {}
        unknown = set(sub) - set(mapping)
        if unknown:
            raise ValueError(f"unknown keys in {section!r}: {sorted(unknown)}")
        for k, attr in mapping.items():
            if k in sub:
                setattr(cfg, attr, sub[k])
    if "policy" in doc:
        cfg.policy = _policy_from(doc["policy"] or {})
    unknown = set(doc) - {"schema", "data_dir", "policy", *sections}
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    if cfg.backend not in ("reference", "sqlite"):
        raise ValueError(f"unknown backend {cfg.backend!r}")
    return cfg
