"""NL clients: an HTTP endpoint emitting constrained JSON, and a fixture replayer."""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Protocol

import httpx
import yaml

from ..errors import ClientError

log = logging.getLogger(__name__)


class NlClient(Protocol):
    def complete(self, prompt: str, document_schema: str, context: Any = None) -> tuple[str, float]:
        """Return (document text, confidence). ``context`` carries the originating request."""
        ...


@dataclass
class FixtureRecord:
    question: str
    document: Any  # object, or raw text for deliberately malformed records
    confidence: float
    anchor_date: str | None = None
    gold_label: str = "correct"  # correct | wrong | invalid
    category: str | None = None
    intent_id: str | None = None
    sql: str | None = None

    @property
    def document_text(self) -> str:
        if isinstance(self.document, str):
            return self.document
        return json.dumps(self.document, sort_keys=True)


def _fixture_key(question: str, anchor_date: Any) -> tuple[str, str | None]:
    return (" ".join(question.split()), None if anchor_date is None else str(anchor_date))


def load_fixture_records(source: str | Path | Iterable[Mapping[str, Any]]) -> list[FixtureRecord]:
    """Records from a YAML/JSON file (a list, or ``{records: [...]}``) or from mappings."""
    if isinstance(source, (str, Path)):
        doc = yaml.safe_load(Path(source).read_text(encoding="utf-8"))
        items = doc.get("records", []) if isinstance(doc, Mapping) else doc
    else:
        items = list(source)
    out = []
    for item in items or []:
        out.append(
            FixtureRecord(
                question=item["question"],
                document=item["document"],
                confidence=float(item["confidence"]),
                anchor_date=str(item["anchor_date"]) if item.get("anchor_date") else None,
                gold_label=item.get("gold_label", "correct"),
                category=item.get("category"),
                intent_id=item.get("intent_id"),
                sql=item.get("sql"),
            )
        )
    return out


class FixtureClient:
    """Replays recorded (question, anchor date) -> (document, confidence) pairs."""

    def __init__(self, records: Iterable[FixtureRecord] = ()):
        self._records: dict[tuple[str, str | None], FixtureRecord] = {}
        self._lock = threading.Lock()
        self.calls = 0
        for r in records:
            self.add(r)

    def add(self, record: FixtureRecord) -> None:
        self._records[_fixture_key(record.question, record.anchor_date)] = record

    @classmethod
    def from_file(cls, path: str | Path) -> "FixtureClient":
        return cls(load_fixture_records(path))

    def record_for(self, question: str, anchor_date: Any = None) -> FixtureRecord | None:
        return self._records.get(_fixture_key(question, anchor_date))

    def complete(self, prompt: str, document_schema: str, context: Any = None) -> tuple[str, float]:
        with self._lock:
            self.calls += 1
        if context is None:
            raise ClientError("NoFixture: fixture client needs the originating request")
        rec = self.record_for(context.question, context.anchor_date)
        if rec is None:
            raise ClientError(f"NoFixture: {context.question!r}")
        return rec.document_text, rec.confidence


class HttpClient:
    """POSTs ``{model, prompt, response_schema, temperature: 0}``; expects ``{document, confidence}``.

    Transport failures are retried twice with exponential backoff.
    """

    def __init__(
        self,
        url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        backoff: float = 0.5,
        transport: httpx.BaseTransport | None = None,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("INTENTCACHE_NL_API_KEY")
        self.retries = retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.calls = 0

    def complete(self, prompt: str, document_schema: str, context: Any = None) -> tuple[str, float]:
        body = {
            "model": self.model,
            "prompt": prompt,
            "response_schema": json.loads(document_schema),
            "temperature": 0,
        }
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            self.calls += 1
            try:
                resp = self._http.post(self.url, json=body)
                resp.raise_for_status()
                payload = resp.json()
                doc = payload["document"]
                conf = float(payload["confidence"])
                return (doc if isinstance(doc, str) else json.dumps(doc)), conf
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last = exc
                if attempt < self.retries:
                    delay = self.backoff * (2**attempt)
                    log.info("NL endpoint failed (%s); retrying in %.2fs", exc, delay)
                    time.sleep(delay)
            except (ValueError, KeyError, TypeError) as exc:
                raise ClientError(f"endpoint response is not {{document, confidence}}: {exc}") from exc
        raise ClientError(f"NL endpoint unreachable after {self.retries + 1} attempts: {last}")

    def close(self) -> None:
        self._http.close()
