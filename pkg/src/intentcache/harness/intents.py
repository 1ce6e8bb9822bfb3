"""Benchmark intents, their gold results, and the packaged NL fixtures."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Any

import yaml

from ..errors import MissingFixture
from ..nl.clients import FixtureRecord, load_fixture_records
from ..schema import SchemaModel
from ..signature import IntentSignature, from_document, signature_key
from ..sqlcanon import sql_to_signature
from ..table import ResultTable

PARAPHRASES = "nl_paraphrases.yaml"
ADVERSARIAL = "nl_adversarial.yaml"


@dataclass
class Intent:
    id: str
    title: str
    sql: str
    signature: IntentSignature
    gold: ResultTable | None = field(default=None, repr=False)

    @property
    def key(self) -> str:
        return signature_key(self.signature)


def _data_text(name: str) -> str:
    return resources.files("intentcache.data").joinpath(name).read_text(encoding="utf-8")


def load_intents(schema: SchemaModel, text: str | None = None) -> list[Intent]:
    doc = yaml.safe_load(text if text is not None else _data_text("intents.yaml"))
    out = []
    for item in doc["intents"]:
        sig = sql_to_signature(item["sql"], schema)
        out.append(Intent(item["id"], item.get("title", ""), item["sql"].strip(), sig))
    keys = [i.key for i in out]
    if len(set(keys)) != len(keys):
        raise ValueError("two intents share a signature key")
    return out


def attach_gold(intents: list[Intent], backend: Any) -> list[Intent]:
    """Compute each gold result once, on the reference executor."""
    for it in intents:
        it.gold = backend.execute_signature(it.signature)
    return intents


def load_paraphrases(text: str | None = None) -> dict[str, list[FixtureRecord]]:
    doc = yaml.safe_load(text if text is not None else _data_text(PARAPHRASES))
    out: dict[str, list[FixtureRecord]] = {}
    for rec in load_fixture_records(doc["records"]):
        out.setdefault(rec.intent_id, []).append(rec)
    return out


def generate_nl_fixtures(intent: Intent | str, n: int, pool: dict[str, list[FixtureRecord]] | None = None) -> list[tuple[str, FixtureRecord]]:
    """The first ``n`` hand-written paraphrases of ``intent``.

    Raises MissingFixture for an unknown intent or when fewer than ``n`` exist.
    """
    pool = pool if pool is not None else load_paraphrases()
    iid = intent if isinstance(intent, str) else intent.id
    if iid not in pool:
        raise MissingFixture(f"no NL fixtures for intent {iid!r}")
    recs = pool[iid]
    if n > len(recs):
        raise MissingFixture(f"intent {iid!r} has {len(recs)} paraphrases, {n} requested")
    return [(r.question, r) for r in recs[: max(n, 0)]]


@dataclass
class AdversarialRecord:
    record: FixtureRecord
    gold: IntentSignature | None  # None when the question has no expressible answer
    id: str


def load_adversarial(text: str | None = None) -> tuple[list[AdversarialRecord], str]:
    """Labeled corpus plus the date the unanchored questions were asked on."""
    doc = yaml.safe_load(text if text is not None else _data_text(ADVERSARIAL))
    recs = load_fixture_records(doc["records"])
    out = []
    for raw, rec in zip(doc["records"], recs):
        gold = from_document(raw["gold"]) if raw.get("gold") else None
        out.append(AdversarialRecord(rec, gold, raw["id"]))
    return out, str(doc.get("asked_on", ""))
