"""Request pipeline: canonicalize, validate, look up, derive, execute, populate."""

from __future__ import annotations

import datetime as dt
import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any

from .config import PolicyConfig
from .derivation import can_filterdown, can_rollup, try_derive
from .errors import Bypass, BypassCode, BypassReason
from .executor.backend import execute_signature
from .nl.canonicalizer import NlCanonicalizer, NlRequest
from .nl.heuristics import TimeWindowCheck, apply_heuristics, gate_confidence, heuristic_set
from .schema import SchemaModel
from .signature import IntentSignature, canonical_serialize, signature_key
from .sqlcanon import canonicalize_sql, parse_sql, render_sql, scope_check
from .store import CacheStore
from .table import ResultTable
from .validator import validate_signature, validation_verdict

log = logging.getLogger(__name__)

EXACT_HIT = "ExactHit"
DERIVED_HIT = "DerivedHit"
MISS = "Miss"
BYPASS = "Bypass"


@dataclass(frozen=True)
class Request:
    kind: str  # "SQL" | "NL"
    payload: str
    anchor_date: dt.date | None = None
    scope: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("SQL", "NL"):
            raise ValueError(f"request kind must be SQL or NL, not {self.kind!r}")
        if isinstance(self.anchor_date, str):
            object.__setattr__(self, "anchor_date", dt.date.fromisoformat(self.anchor_date))

    @classmethod
    def sql(cls, text: str, scope: str | None = None) -> "Request":
        return cls("SQL", text, scope=scope)

    @classmethod
    def nl(cls, question: str, anchor_date: dt.date | str | None = None, scope: str | None = None) -> "Request":
        return cls("NL", question, anchor_date, scope)


@dataclass
class Provenance:
    kind: str  # ExactHit | DerivedHit | Miss | Bypass
    origin: str | None = None  # surface that populated the entry served
    cross_surface: bool = False
    derivation: dict | None = None
    source_key: str | None = None
    reason: BypassReason | None = None


@dataclass
class Response:
    result: ResultTable | None  # None only for NL bypasses without a usable candidate
    provenance: Provenance
    key: str | None = None
    signature: IntentSignature | None = None
    confidence: float | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def hit(self) -> bool:
        return self.provenance.kind in (EXACT_HIT, DERIVED_HIT)


class _Clock:
    def __init__(self) -> None:
        self.t0 = time.perf_counter()
        self.spans: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        try:
            yield
        finally:
            self.spans[name] = self.spans.get(name, 0.0) + (time.perf_counter() - t) * 1000

    def done(self) -> dict[str, float]:
        self.spans["total"] = (time.perf_counter() - self.t0) * 1000
        return self.spans


class LevelMapper:
    """Memoized child -> parent value pairs from the backend's dimension data."""

    def __init__(self, backend: Any):
        self.backend = backend
        self._memo: dict[tuple[str, str, str], list] = {}
        self._lock = threading.Lock()
        self.lookups = 0

    def __call__(self, child: str, parent: str) -> list[tuple[Any, Any]]:
        key = (self.backend.snapshot_id(), child, parent)
        with self._lock:
            hit = self._memo.get(key)
        if hit is not None:
            return hit
        pairs = self.backend.level_pairs(child, parent)
        with self._lock:
            self.lookups += 1
            self._memo[key] = pairs
        return pairs


class Pipeline:
    """One entry point for SQL and NL requests over a shared cache.

    Lookup happens only after a signature passes canonicalization, gating and
    validation, so a request that fails any of them never sees a cached
    result. Bypassed requests still execute (the raw SQL, or the rendered NL
    candidate when one validated) and are never stored.
    """

    def __init__(
        self,
        schema: SchemaModel,
        backend: Any,
        store: CacheStore | None = None,
        policy: PolicyConfig | None = None,
        nl: NlCanonicalizer | None = None,
        mapper: Any = None,
    ):
        self.schema = schema
        self.backend = backend
        self.store = store if store is not None else CacheStore()
        self.policy = policy if policy is not None else PolicyConfig()
        self.nl = nl
        self.mapper = mapper if mapper is not None else (LevelMapper(backend) if hasattr(backend, "level_pairs") else None)
        self.rules = heuristic_set(self.policy.heuristic_set, self.policy.spatial_terms)
        self.verifier = TimeWindowCheck() if self.policy.verify_nl_hits else None
        self._flight_lock = threading.Lock()
        self._flights: dict[str, threading.Lock] = {}

    # -- front ends ---------------------------------------------------------------

    def handle(self, req: Request) -> Response:
        clock = _Clock()
        if req.kind == "SQL":
            return self._handle_sql(req, clock)
        return self._handle_nl(req, clock)

    def _handle_sql(self, req: Request, clock: _Clock) -> Response:
        try:
            with clock.stage("canonicalize"):
                sig = self.sql_signature(req.payload, req.scope)
            with clock.stage("validate"):
                validate_signature(sig, self.schema)
        except Bypass as b:
            return self._bypass_sql(req.payload, b, clock)
        return self._serve(sig, "SQL", clock, populate=True)

    def _handle_nl(self, req: Request, clock: _Clock) -> Response:
        if self.nl is None:
            raise RuntimeError("pipeline has no NL canonicalizer")
        nreq = NlRequest(req.payload, req.anchor_date, req.scope)
        outcome = None
        try:
            with clock.stage("canonicalize"):
                outcome = self.nl.canonicalize(nreq)
            with clock.stage("gate"):
                apply_heuristics(nreq, outcome, self.rules)
                gate_confidence(outcome, self.policy.confidence_threshold)
            with clock.stage("validate"):
                validate_signature(outcome.signature, self.schema)
        except Bypass as b:
            return self._bypass_nl(outcome, b, clock)
        verify = (lambda sig: self.verifier.verify(req.payload, sig)) if self.verifier else None
        resp = self._serve(
            outcome.signature, "NL", clock, populate=not self.policy.sql_seeded_only, verify=verify
        )
        resp.confidence = outcome.confidence
        return resp

    def sql_signature(self, text: str, scope: str | None = None) -> IntentSignature:
        ast = parse_sql(text)
        scope_check(ast)
        return canonicalize_sql(ast, self.schema, scope=scope)

    # -- bypass -------------------------------------------------------------------

    def _bypass_sql(self, text: str, b: Bypass, clock: _Clock) -> Response:
        with clock.stage("execute"):
            result = self.backend.execute(text)
        return Response(result, Provenance(BYPASS, reason=b.reason), timings=clock.done())

    def _bypass_nl(self, outcome: Any, b: Bypass, clock: _Clock) -> Response:
        result = None
        sig = outcome.signature if outcome is not None else None
        if sig is not None and validation_verdict(sig, self.schema) is None:
            with clock.stage("execute"):
                result = self._execute(sig)
        conf = outcome.confidence if outcome is not None else None
        return Response(result, Provenance(BYPASS, reason=b.reason), signature=sig, confidence=conf, timings=clock.done())

    # -- cache path ---------------------------------------------------------------

    def _execute(self, sig: IntentSignature) -> ResultTable:
        direct = getattr(self.backend, "execute_signature", None)
        if direct is not None:
            return direct(sig)
        return execute_signature(sig, self.backend, self.schema)

    def _flight(self, key: str) -> threading.Lock:
        with self._flight_lock:
            return self._flights.setdefault(key, threading.Lock())

    def _exact(self, key: str, sig: IntentSignature, origin: str, verify, clock: _Clock) -> Response | None:
        with clock.stage("lookup"):
            entry = self.store.get_exact(key)
        if entry is None:
            return None
        if verify is not None:
            problem = verify(sig)
            if problem:
                b = Bypass(BypassCode.POLICY_REJECT, f"hit verification failed: {problem}")
                with clock.stage("execute"):
                    result = self._execute(sig)
                return Response(result, Provenance(BYPASS, reason=b.reason), key=key, signature=sig, timings=clock.done())
        prov = Provenance(EXACT_HIT, origin=entry.origin, cross_surface=entry.origin != origin, source_key=key)
        return Response(entry.result, prov, key=key, signature=sig, timings=clock.done())

    def _serve(self, sig: IntentSignature, origin: str, clock: _Clock, populate: bool, verify=None) -> Response:
        key = signature_key(sig)
        resp = self._exact(key, sig, origin, verify, clock)
        if resp is not None:
            return resp
        with self._flight(key):
            # a concurrent request with the same key may have populated meanwhile
            if self.store.contains(key):
                resp = self._exact(key, sig, origin, verify, clock)
                if resp is not None:
                    return resp
            if self.policy.derivations_enabled and verify is None:
                with clock.stage("derive"):
                    derived = try_derive(sig, self.store, self.schema, self.mapper)
                if derived is not None:
                    if populate:
                        with clock.stage("populate"):
                            self.store.put(
                                sig,
                                derived.result,
                                origin=origin,
                                snapshot_id=self.backend.snapshot_id(),
                                derived_from=derived.plan.source.key,
                            )
                    prov = Provenance(
                        DERIVED_HIT,
                        origin=origin,
                        derivation=derived.plan.describe(),
                        source_key=derived.plan.source.key,
                    )
                    return Response(derived.result, prov, key=key, signature=sig, timings=clock.done())
            with clock.stage("execute"):
                result = self._execute(sig)
            if populate:
                with clock.stage("populate"):
                    self.store.put(sig, result, origin=origin, snapshot_id=self.backend.snapshot_id())
        return Response(result, Provenance(MISS, origin=origin), key=key, signature=sig, timings=clock.done())

    # -- introspection ------------------------------------------------------------

    def explain(self, req: Request) -> dict[str, Any]:
        """Trace what handle() would do, without executing or touching the cache."""
        out: dict[str, Any] = {"kind": req.kind, "payload": req.payload}
        try:
            if req.kind == "SQL":
                sig = self.sql_signature(req.payload, req.scope)
            else:
                if self.nl is None:
                    raise RuntimeError("pipeline has no NL canonicalizer")
                nreq = NlRequest(req.payload, req.anchor_date, req.scope)
                outcome = self.nl.canonicalize(nreq)
                out["confidence"] = outcome.confidence
                out["signature"] = outcome.signature.to_doc()
                apply_heuristics(nreq, outcome, self.rules)
                gate_confidence(outcome, self.policy.confidence_threshold)
                sig = outcome.signature
            out["signature"] = sig.to_doc()
            out["serialization"] = canonical_serialize(sig)
            out["key"] = key = signature_key(sig)
            validate_signature(sig, self.schema)
        except Bypass as b:
            out["decision"] = BYPASS
            out["reason"] = {"code": b.reason.code.value, "detail": b.reason.detail}
            return out
        out["validation"] = "ok"
        out["sql"] = render_sql(sig, self.schema)
        if self.store.contains(key):
            entry = self.store.load_entry(key)
            out["decision"] = EXACT_HIT
            out["origin"] = entry.origin if entry else None
            return out
        attempts = []
        if self.policy.derivations_enabled:
            for kind, metas in (
                ("FilterDown", self.store.find_filterdown_candidates(sig)),
                ("RollUp", self.store.find_rollup_candidates(sig, self.schema)),
            ):
                for meta in metas:
                    entry = self.store.load_entry(meta.key)
                    if entry is None:
                        continue
                    plan = can_filterdown(sig, entry) if kind == "FilterDown" else can_rollup(sig, entry, self.schema, self.mapper)
                    if plan:
                        attempts.append({"kind": kind, "source": entry.key, "plan": plan.describe()})
                    else:
                        attempts.append({"kind": kind, "source": entry.key, "reject": plan.reason.value, "detail": plan.detail})
        out["candidates"] = attempts
        accepted = [a for a in attempts if "plan" in a]
        out["decision"] = DERIVED_HIT if accepted else MISS
        return out
