from .canonicalizer import NlCanonicalizer, NlMemo, NlOutcome, NlRequest, canonicalize_nl, load_prompt_template, prompt_hash
from .clients import FixtureClient, FixtureRecord, HttpClient, NlClient, load_fixture_records
from .document import DocumentValidator, document_schema
from .heuristics import (
    HeuristicRule,
    TimeWindowCheck,
    apply_heuristics,
    gate_confidence,
    heuristic_set,
    spatial_rule,
    time_mentions,
)

__all__ = [
    "DocumentValidator",
    "FixtureClient",
    "FixtureRecord",
    "HeuristicRule",
    "HttpClient",
    "NlCanonicalizer",
    "NlClient",
    "NlMemo",
    "NlOutcome",
    "NlRequest",
    "TimeWindowCheck",
    "apply_heuristics",
    "canonicalize_nl",
    "document_schema",
    "gate_confidence",
    "heuristic_set",
    "load_fixture_records",
    "load_prompt_template",
    "prompt_hash",
    "spatial_rule",
    "time_mentions",
]
