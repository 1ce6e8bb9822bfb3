"""Per-method metrics and the run report written by the benchmark drivers."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .baselines import BYPASSED, DERIVED, HIT, MISSED, Outcome
from .workload import WorkItem


class FalseHit(AssertionError):
    """A served hit whose result differs from direct execution."""


@dataclass
class MethodReport:
    method: str
    total: int = 0
    exact_hits: int = 0
    derived_hits: int = 0
    misses: int = 0
    bypasses: int = 0
    false_hits: int = 0
    executions: int = 0
    distinct_keys: int = 0
    keyed: int = 0  # requests that produced a key
    keys_per_intent: dict[str, int] = field(default_factory=dict)
    latency_p50_ms: float = 0.0
    latency_p95_ms: float = 0.0

    @property
    def hits(self) -> int:
        return self.exact_hits + self.derived_hits

    @property
    def hit_rate(self) -> float:
        return 100.0 * self.hits / self.total if self.total else 0.0

    @property
    def reduction(self) -> float:
        """Requests keyed per distinct key, over the method's eligible requests."""
        return self.keyed / self.distinct_keys if self.distinct_keys else 0.0

    @property
    def executions_saved(self) -> int:
        return self.hits

    def as_dict(self, timings: bool = True) -> dict[str, Any]:
        d = asdict(self)
        d.update(hits=self.hits, hit_rate=round(self.hit_rate, 4), reduction=round(self.reduction, 4), executions_saved=self.executions_saved)
        if not timings:
            d.pop("latency_p50_ms")
            d.pop("latency_p95_ms")
        return d


class Tally:
    """Accumulates outcomes for one method; ``finish`` produces the report."""

    def __init__(self, method: str):
        self.report = MethodReport(method)
        self._keys: dict[str, set[str]] = {}
        self._lat: list[float] = []

    def add(self, item: WorkItem, out: Outcome, false_hit: bool = False) -> None:
        r = self.report
        r.total += 1
        if out.kind == HIT:
            r.exact_hits += 1
        elif out.kind == DERIVED:
            r.derived_hits += 1
        elif out.kind == MISSED:
            r.misses += 1
        elif out.kind == BYPASSED:
            r.bypasses += 1
        else:
            raise ValueError(f"unknown outcome {out.kind!r}")
        r.false_hits += int(false_hit)
        r.executions += int(out.executed)
        if out.key is not None and out.kind != BYPASSED:
            r.keyed += 1
            self._keys.setdefault(item.intent_id, set()).add(out.key)
        self._lat.append(out.latency_ms)

    def finish(self) -> MethodReport:
        r = self.report
        assert r.exact_hits + r.derived_hits + r.misses + r.bypasses == r.total
        r.keys_per_intent = {k: len(v) for k, v in sorted(self._keys.items())}
        r.distinct_keys = len(set().union(*self._keys.values())) if self._keys else 0
        if self._lat:
            r.latency_p50_ms = float(np.percentile(self._lat, 50))
            r.latency_p95_ms = float(np.percentile(self._lat, 95))
        return r


@dataclass
class RunReport:
    workload: dict[str, Any]
    methods: list[MethodReport]

    def by_method(self, name: str) -> MethodReport:
        for m in self.methods:
            if m.method == name:
                return m
        raise KeyError(name)

    def as_dict(self, timings: bool = True) -> dict[str, Any]:
        return {"workload": self.workload, "methods": [m.as_dict(timings) for m in self.methods]}

    def to_json(self, timings: bool = True) -> str:
        return json.dumps(self.as_dict(timings), indent=2, sort_keys=True)

    def save(self, path: str | Path, timings: bool = True) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.to_json(timings) + "\n", encoding="utf-8")
        return p

    def table(self) -> str:
        head = f"{'method':<12} {'hit %':>7} {'reduction':>9} {'hits':>6} {'derived':>7} {'miss':>6} {'bypass':>6} {'false':>5} {'p50 ms':>7} {'p95 ms':>7} {'saved':>6}"
        lines = [head, "-" * len(head)]
        for m in self.methods:
            lines.append(
                f"{m.method:<12} {m.hit_rate:7.1f} {m.reduction:8.1f}x {m.exact_hits:6d} {m.derived_hits:7d} "
                f"{m.misses:6d} {m.bypasses:6d} {m.false_hits:5d} {m.latency_p50_ms:7.2f} {m.latency_p95_ms:7.2f} {m.executions_saved:6d}"
            )
        return "\n".join(lines)
