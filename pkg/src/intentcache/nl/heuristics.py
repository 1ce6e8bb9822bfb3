"""Safety layers for NL outcomes: ambiguity heuristics, confidence gating, hit verification."""

from __future__ import annotations

import datetime as dt
import re
from collections.abc import Callable, Sequence
from dataclasses import dataclass

from ..errors import Bypass, BypassCode
from ..signature import IntentSignature
from .canonicalizer import NlOutcome, NlRequest

DEFAULT_SPATIAL_TERMS = ("area", "nearby", "near", "around", "local", "vicinity", "zone", "neighborhood")

_RELATIVE_TIME = re.compile(
    r"\b(last|latest|recent|recently|past|previous|prior|current|today|yesterday|"
    r"this\s+(?:day|week|month|quarter|year|season)|year[- ]to[- ]date|ytd|so\s+far)\b",
    re.I,
)
_AVG = re.compile(r"\b(average|avg|mean)\b", re.I)
_COUNT = re.compile(r"\b(how\s+many|number\s+of|count)\b", re.I)
_TOTAL = re.compile(r"\btotal\b(?!\s+(?:number|count)\b)", re.I)


@dataclass(frozen=True)
class HeuristicRule:
    id: str
    check: Callable[[NlRequest, NlOutcome], str | None]  # returns a reason when the rule fires


def _relative_time(req: NlRequest, outcome: NlOutcome) -> str | None:
    if req.anchor_date is not None:
        return None
    m = _RELATIVE_TIME.search(req.question)
    return f"relative time {m.group(0)!r} without an anchor date" if m else None


def _aggregation_mismatch(req: NlRequest, outcome: NlOutcome) -> str | None:
    aggs = {m.agg for m in outcome.signature.measures}
    q = req.question
    if _AVG.search(q) and "AVG" not in aggs:
        return f"question asks for an average, signature has {sorted(aggs)}"
    if _COUNT.search(q) and not aggs & {"COUNT", "COUNT_DISTINCT"}:
        return f"question asks for a count, signature has {sorted(aggs)}"
    if _TOTAL.search(q) and "SUM" not in aggs and not _COUNT.search(q):
        return f"question asks for a total, signature has {sorted(aggs)}"
    return None


def spatial_rule(terms: Sequence[str] = DEFAULT_SPATIAL_TERMS) -> HeuristicRule:
    rx = re.compile(r"\b(" + "|".join(re.escape(t) for t in terms) + r")\b", re.I) if terms else None

    def check(req: NlRequest, outcome: NlOutcome) -> str | None:
        if rx is None:
            return None
        m = rx.search(req.question)
        return f"underspecified spatial term {m.group(0)!r}" if m else None

    return HeuristicRule("spatial-ambiguity", check)


RELATIVE_TIME = HeuristicRule("relative-time", _relative_time)
AGGREGATION_MISMATCH = HeuristicRule("aggregation-mismatch", _aggregation_mismatch)


def heuristic_set(name: str, spatial_terms: Sequence[str] = DEFAULT_SPATIAL_TERMS) -> list[HeuristicRule]:
    name = name.replace("_", "").replace("-", "").lower()
    if name == "all":
        return [RELATIVE_TIME, AGGREGATION_MISMATCH, spatial_rule(spatial_terms)]
    if name == "timeandspatial":
        return [RELATIVE_TIME, spatial_rule(spatial_terms)]
    if name == "none":
        return []
    raise ValueError(f"unknown heuristic set {name!r}")


def apply_heuristics(req: NlRequest, outcome: NlOutcome, rules: Sequence[HeuristicRule]) -> None:
    """First matching rule raises Bypass(HeuristicReject)."""
    for rule in rules:
        reason = rule.check(req, outcome)
        if reason:
            raise Bypass(BypassCode.HEURISTIC_REJECT, f"{rule.id}: {reason}")


def gate_confidence(outcome: NlOutcome, threshold: float | None) -> None:
    """Raise Bypass(LowConfidence) when confidence < threshold; None disables gating."""
    if threshold is None:
        return
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    if outcome.confidence < threshold:
        raise Bypass(BypassCode.LOW_CONFIDENCE, f"confidence {outcome.confidence:.2f} < {threshold:.2f}")


# -- optional verification of NL-originated hits -----------------------------------

_MONTH_NAMES = ["january", "february", "march", "april", "may", "june", "july", "august", "september", "october", "november", "december"]
_MONTHS = {m: i + 1 for i, m in enumerate(_MONTH_NAMES)}
_MONTHS.update({m[:3]: i + 1 for i, m in enumerate(_MONTH_NAMES)})
_MONTHS["sept"] = 9
_ORD = {"first": 1, "second": 2, "third": 3, "fourth": 4, "1st": 1, "2nd": 2, "3rd": 3, "4th": 4}
_Y = r"((?:19|20)\d{2})"
_ISO_DAY = re.compile(_Y + r"-(\d{2})-(\d{2})\b")
_ISO_MONTH = re.compile(_Y + r"-(\d{2})\b(?!-\d)")
_Q = re.compile(r"\bq([1-4])\s*(?:of\s+)?" + _Y + r"\b", re.I)
_Q_AFTER = re.compile(r"\b" + _Y + r"[\s-]*q([1-4])\b", re.I)
_Q_WORDS = re.compile(r"\b(first|second|third|fourth|1st|2nd|3rd|4th)\s+quarter\s+(?:of\s+)?" + _Y + r"\b", re.I)
_H = re.compile(r"\b(?:h([12])|(first|second)\s+half)(?:\s+of)?\s+" + _Y + r"\b", re.I)
_MONTH_WORD = re.compile(r"\b(" + "|".join(sorted(_MONTHS, key=len, reverse=True)) + r")\b\.?", re.I)
_YEAR = re.compile(r"\b" + _Y + r"\b")


def _month_start(y: int, m: int) -> dt.date:
    return dt.date(y + (m - 1) // 12, (m - 1) % 12 + 1, 1)


def time_mentions(question: str) -> list[tuple[dt.date, dt.date]]:
    """Explicit calendar periods named in the question, as half-open ranges.

    Month names without their own year take the next year mentioned after
    them ("April, May and June 2024"). Bare years count only when no other
    pattern consumed them.
    """
    spans: list[tuple[dt.date, dt.date]] = []
    consumed: list[tuple[int, int]] = []

    def free(a: int, b: int) -> bool:
        return not any(a < y and x < b for x, y in consumed)

    def take(m: re.Match, start: dt.date, end: dt.date) -> None:
        if free(*m.span()):
            spans.append((start, end))
            consumed.append(m.span())

    for m in _ISO_DAY.finditer(question):
        try:
            d = dt.date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
        except ValueError:
            continue
        take(m, d, d + dt.timedelta(days=1))
    for m in _ISO_MONTH.finditer(question):
        y, mo = int(m.group(1)), int(m.group(2))
        if 1 <= mo <= 12:
            take(m, _month_start(y, mo), _month_start(y, mo + 1))
    for rx, qg, yg in ((_Q, 1, 2), (_Q_AFTER, 2, 1)):
        for m in rx.finditer(question):
            q, y = int(m.group(qg)), int(m.group(yg))
            take(m, _month_start(y, 3 * q - 2), _month_start(y, 3 * q + 1))
    for m in _Q_WORDS.finditer(question):
        q, y = _ORD[m.group(1).lower()], int(m.group(2))
        take(m, _month_start(y, 3 * q - 2), _month_start(y, 3 * q + 1))
    for m in _H.finditer(question):
        h = int(m.group(1)) if m.group(1) else (1 if m.group(2).lower() == "first" else 2)
        y = int(m.group(3))
        take(m, _month_start(y, 6 * h - 5), _month_start(y, 6 * h + 1))
    years = [(m.start(), int(m.group(1))) for m in _YEAR.finditer(question)]
    for m in _MONTH_WORD.finditer(question):
        word = m.group(1)
        if word.lower() == "may" and word != "May":
            continue  # the modal verb
        after = [y for pos, y in years if pos > m.start()]
        if not after or not free(*m.span()):
            continue
        mo = _MONTHS[word.lower()]
        take(m, _month_start(after[0], mo), _month_start(after[0], mo + 1))
        # the year a month name borrows is not a period of its own
        for ym in _YEAR.finditer(question, m.end()):
            if int(ym.group(1)) == after[0]:
                consumed.append(ym.span())
                break
    for m in _YEAR.finditer(question):
        if free(*m.span()):
            y = int(m.group(1))
            spans.append((dt.date(y, 1, 1), dt.date(y + 1, 1, 1)))
    return spans


class TimeWindowCheck:
    """Re-extracts explicit periods from the question and compares them to the window.

    Passes when the question names no explicit period. Otherwise the
    signature's window must equal the hull of the named periods.
    """

    id = "time-window-check"

    def verify(self, question: str, sig: IntentSignature) -> str | None:
        spans = time_mentions(question)
        if not spans:
            return None
        start, end = min(s for s, _ in spans), max(e for _, e in spans)
        w = sig.time_window
        if w is None:
            return f"question names {start}..{end} but the signature has no time window"
        if (w.start, w.end) != (start, end):
            return f"question names [{start}, {end}) but the signature window is [{w.start}, {w.end})"
        return None
