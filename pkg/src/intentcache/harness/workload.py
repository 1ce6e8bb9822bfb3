"""Workloads: SQL variants and NL paraphrases of the intents, in a chosen order."""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from ..nl.clients import FixtureRecord
from ..schema import SchemaModel
from .intents import Intent
from .variants import Variant, generate_variants

ORDERINGS = ("sequential", "random", "interleaved", "zipf")


@dataclass(frozen=True)
class WorkItem:
    kind: str  # SQL | NL
    payload: str
    intent_id: str
    anchor_date: str | None = None
    variant: int | None = None  # index into the intent's variants (SQL) or paraphrases (NL)

    def to_json(self) -> str:
        doc = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(doc, sort_keys=True)


@dataclass
class Workload:
    items: list[WorkItem]
    ordering: str = "sequential"
    seed: int = 0

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def intents(self) -> list[str]:
        return sorted({w.intent_id for w in self.items})

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(w.to_json() + "\n" for w in self.items), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Workload":
        items = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            doc = json.loads(line)
            try:
                items.append(WorkItem(doc["kind"], doc["payload"], doc["intent_id"], doc.get("anchor_date"), doc.get("variant")))
            except KeyError as exc:
                raise ValueError(f"{path}:{n}: workload line lacks {exc}") from None
        return cls(items, ordering="file")


def intent_variants(
    intents: list[Intent],
    schema: SchemaModel,
    n: int = 21,
    seed: int = 0,
    backend: Any = None,
) -> dict[str, list[Variant]]:
    """Variants per intent; verified against gold when the intents carry one and a backend is given."""
    out = {}
    for k, it in enumerate(intents):
        gold = it.gold if backend is not None else None
        out[it.id] = generate_variants(it.signature, schema, n=n, seed=seed + k, gold=gold, backend=backend)
    return out


def base_items(
    intents: list[Intent],
    variants: dict[str, list[Variant]],
    paraphrases: dict[str, list[FixtureRecord]] | None = None,
    repetitions: int = 3,
    nl_per_intent: int = 10,
) -> dict[str, list[WorkItem]]:
    """Per-intent request lists: every variant and paraphrase, ``repetitions`` times."""
    out: dict[str, list[WorkItem]] = {}
    for it in intents:
        once = [WorkItem("SQL", v.text, it.id, variant=k) for k, v in enumerate(variants[it.id])]
        if paraphrases:
            recs = paraphrases.get(it.id, [])[:nl_per_intent]
            once += [WorkItem("NL", r.question, it.id, r.anchor_date, variant=k) for k, r in enumerate(recs)]
        out[it.id] = once * repetitions
    return out


def order(per_intent: dict[str, list[WorkItem]], ordering: str, seed: int = 0, s: float = 1.0) -> Workload:
    """Arrange per-intent requests.

    sequential: intent by intent, so each key's repeats are adjacent.
    random: a seeded shuffle of the same multiset.
    interleaved: round-robin over intents, one request from each in turn.
    zipf: as many requests as the others, intents drawn with P(rank r) ~ 1/r**s
    under a seeded rank assignment, each draw taking a random request of that intent.
    """
    ordering = ordering.lower()
    ids = sorted(per_intent)
    if ordering == "sequential":
        items = [w for i in ids for w in per_intent[i]]
    elif ordering == "random":
        items = [w for i in ids for w in per_intent[i]]
        random.Random(seed).shuffle(items)
    elif ordering == "interleaved":
        items = []
        longest = max((len(v) for v in per_intent.values()), default=0)
        for k in range(longest):
            items += [per_intent[i][k] for i in ids if k < len(per_intent[i])]
    elif ordering == "zipf":
        rng = np.random.default_rng(seed)
        total = sum(len(v) for v in per_intent.values())
        ranked = [ids[j] for j in rng.permutation(len(ids))]
        weights = 1.0 / np.arange(1, len(ranked) + 1) ** s
        draws = rng.choice(len(ranked), size=total, p=weights / weights.sum())
        items = []
        for d in draws:
            pool = per_intent[ranked[d]]
            items.append(pool[int(rng.integers(len(pool)))])
    else:
        raise ValueError(f"unknown ordering {ordering!r}; choose from {ORDERINGS}")
    return Workload(items, ordering, seed)


def build_workload(
    intents: list[Intent],
    schema: SchemaModel,
    paraphrases: dict[str, list[FixtureRecord]] | None = None,
    ordering: str = "sequential",
    seed: int = 7,
    n_variants: int = 21,
    repetitions: int = 3,
    backend: Any = None,
    s: float = 1.0,
) -> Workload:
    variants = intent_variants(intents, schema, n_variants, seed, backend)
    return order(base_items(intents, variants, paraphrases, repetitions), ordering, seed, s)


def sql_only(items: Iterable[WorkItem]) -> list[WorkItem]:
    return [w for w in items if w.kind == "SQL"]
