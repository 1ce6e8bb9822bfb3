"""NL question -> candidate signature through a constrained-output client."""

from __future__ import annotations

import datetime as dt
import hashlib
import json
import sqlite3
import threading
from concurrent.futures import Future
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

from ..errors import Bypass, BypassCode, ClientError, MalformedComponent, MalformedResponse
from ..schema import SchemaModel
from ..signature import IntentSignature, from_document, parse_document_text
from .document import DocumentValidator

PROMPT_ASSET = "prompt_v1.txt"


@dataclass(frozen=True)
class NlRequest:
    question: str
    anchor_date: dt.date | None = None
    scope: str | None = None

    def __post_init__(self) -> None:
        if not self.question or not self.question.strip():
            raise ValueError("empty question")
        if isinstance(self.anchor_date, str):
            object.__setattr__(self, "anchor_date", dt.date.fromisoformat(self.anchor_date))


@dataclass(frozen=True)
class NlOutcome:
    signature: IntentSignature
    confidence: float
    raw_response: str
    memoized: bool = False


def load_prompt_template(path: str | Path | None = None) -> str:
    if path is not None:
        return Path(path).read_text(encoding="utf-8")
    return resources.files("intentcache.nl").joinpath(PROMPT_ASSET).read_text(encoding="utf-8")


def prompt_hash(template: str) -> str:
    return hashlib.sha256(template.encode("utf-8")).hexdigest()[:16]


def describe_schema(schema: SchemaModel) -> str:
    lines = []
    for f in schema.fact_tables:
        cols = ", ".join(f"{c} {t}" for c, t in f.columns.items())
        tc = f" (event date: {f.time_column})" if f.time_column else ""
        lines.append(f"fact {f.name}{tc}: {cols}")
    for d in schema.dimensions:
        cols = ", ".join(f"{c} {t}" for c, t in d.attributes)
        lines.append(f"dimension {d.name} (key {d.key}): {cols}")
    for k in schema.foreign_keys:
        lines.append(f"join {k.table}.{k.column} -> {k.references}.{k.key}")
    for h in schema.hierarchies:
        lines.append(f"hierarchy {h.dimension}: " + " > ".join(lv.column for lv in h.levels))
    return "\n".join(lines)


def describe_vocabulary(schema: SchemaModel, samples: dict[str, list[str]] | None = None) -> str:
    samples = samples or {}
    lines = []
    for col in sorted(schema.all_columns()):
        extra = f" e.g. {', '.join(samples[col][:6])}" if samples.get(col) else ""
        lines.append(f"{col} ({schema.column_type(col)}){extra}")
    return "\n".join(lines)


class NlMemo:
    """Outcome memo keyed on (question, anchor date, scope, prompt hash).

    Concurrent identical lookups are single-flight: one caller computes, the
    rest wait for its result. Successful and malformed outcomes are memoized;
    transport errors are not, since a retry may succeed. With ``path`` the
    memo also persists to sqlite.
    """

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._mem: dict[tuple, Any] = {}
        self._inflight: dict[tuple, Future] = {}
        self._db = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._db = sqlite3.connect(str(path), check_same_thread=False)
            self._db.execute("CREATE TABLE IF NOT EXISTS memo (k TEXT PRIMARY KEY, v TEXT NOT NULL)")
            self._db.commit()

    @staticmethod
    def key(req: NlRequest, phash: str) -> tuple:
        return (req.question, req.anchor_date.isoformat() if req.anchor_date else None, req.scope, phash)

    def _persisted(self, key: tuple) -> Any:
        if self._db is None:
            return None
        row = self._db.execute("SELECT v FROM memo WHERE k = ?", (json.dumps(key),)).fetchone()
        return json.loads(row[0]) if row else None

    def get_or_compute(self, key: tuple, compute) -> tuple[Any, bool]:
        """Return (value, memoized). ``compute`` returns a JSON-able value or raises."""
        with self._lock:
            if key in self._mem:
                return self._mem[key], True
            stored = self._persisted(key)
            if stored is not None:
                self._mem[key] = stored
                return stored, True
            fut = self._inflight.get(key)
            owner = fut is None
            if owner:
                fut = Future()
                self._inflight[key] = fut
        if not owner:
            return fut.result(), True
        try:
            value = compute()
        except BaseException as exc:
            with self._lock:
                self._inflight.pop(key, None)
            fut.set_exception(exc)
            raise
        with self._lock:
            self._mem[key] = value
            self._inflight.pop(key, None)
            if self._db is not None:
                self._db.execute("INSERT OR REPLACE INTO memo VALUES (?, ?)", (json.dumps(key), json.dumps(value)))
                self._db.commit()
        fut.set_result(value)
        return value, False

    def __len__(self) -> int:
        return len(self._mem)

    def clear(self) -> None:
        with self._lock:
            self._mem.clear()
            if self._db is not None:
                self._db.execute("DELETE FROM memo")
                self._db.commit()


class NlCanonicalizer:
    def __init__(
        self,
        schema: SchemaModel,
        client: Any,
        memo: NlMemo | None = None,
        template: str | None = None,
        samples: dict[str, list[str]] | None = None,
    ):
        self.schema = schema
        self.client = client
        self.memo = memo if memo is not None else NlMemo()
        self.template = template if template is not None else load_prompt_template()
        self.prompt_hash = prompt_hash(self.template)
        self.validator = DocumentValidator(schema)
        self._schema_text = describe_schema(schema)
        self._vocab_text = describe_vocabulary(schema, samples)
        self._parsed: dict[tuple, IntentSignature] = {}

    def build_prompt(self, req: NlRequest) -> str:
        return (
            self.template.replace("{schema}", self._schema_text)
            .replace("{vocabulary}", self._vocab_text)
            .replace("{document_schema}", self.validator.text)
            .replace("{anchor_date}", req.anchor_date.isoformat() if req.anchor_date else "none")
            .replace("{question}", req.question)
        )

    def _call(self, req: NlRequest) -> dict:
        text, confidence = self.client.complete(self.build_prompt(req), self.validator.text, req)
        try:
            self.parse(text, confidence, req.scope)
        except MalformedResponse as exc:
            return {"malformed": str(exc), "raw": text}
        return {"document": text, "confidence": confidence}

    def parse(self, text: str, confidence: Any, scope: str | None) -> IntentSignature:
        try:
            conf = float(confidence)
        except (TypeError, ValueError) as exc:
            raise MalformedResponse(f"confidence {confidence!r} is not a number") from exc
        if not 0.0 <= conf <= 1.0:
            raise MalformedResponse(f"confidence {conf} outside [0, 1]")
        try:
            doc = parse_document_text(text)
        except ValueError as exc:
            raise MalformedResponse(f"response is not JSON: {exc}") from exc
        self.validator.check(doc)
        try:
            sig = from_document(doc)
        except MalformedComponent as exc:
            raise MalformedResponse(str(exc)) from exc
        return sig.with_scope(scope) if scope is not None else sig

    def canonicalize(self, req: NlRequest) -> NlOutcome:
        """Raise Bypass(ClientError | MalformedResponse) on failure."""
        key = NlMemo.key(req, self.prompt_hash)
        try:
            value, memoized = self.memo.get_or_compute(key, lambda: self._call(req))
        except ClientError as exc:
            raise Bypass(BypassCode.CLIENT_ERROR, str(exc)) from exc
        if "malformed" in value:
            raise Bypass(BypassCode.MALFORMED_RESPONSE, value["malformed"])
        sig = self._parsed.get(key)
        if sig is None:
            sig = self._parsed[key] = self.parse(value["document"], value["confidence"], req.scope)
        return NlOutcome(sig, float(value["confidence"]), value["document"], memoized)


def canonicalize_nl(req: NlRequest, schema: SchemaModel, client: Any, memo: NlMemo | None = None) -> NlOutcome:
    return NlCanonicalizer(schema, client, memo).canonicalize(req)
