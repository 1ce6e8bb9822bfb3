"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class BypassCode(str, Enum):
    UNSUPPORTED_CONSTRUCT = "UnsupportedConstruct"
    AMBIGUOUS_JOIN_PATH = "AmbiguousJoinPath"
    UNKNOWN_COLUMN = "UnknownColumn"
    TYPE_MISMATCH = "TypeMismatch"
    UNRESOLVED_TIME_WINDOW = "UnresolvedTimeWindow"
    MULTIPLE_FACT_TABLES = "MultipleFactTables"
    PARSE_FAILURE = "ParseFailure"
    CLIENT_ERROR = "ClientError"
    MALFORMED_RESPONSE = "MalformedResponse"
    LOW_CONFIDENCE = "LowConfidence"
    HEURISTIC_REJECT = "HeuristicReject"
    POLICY_REJECT = "PolicyReject"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class BypassReason:
    """Why a request skipped the cache. The request still executes on the backend."""

    code: BypassCode
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.code.value}: {self.detail}" if self.detail else self.code.value


class Bypass(Exception):
    """Raised by canonicalization/validation stages; carries a BypassReason."""

    def __init__(self, code: BypassCode, detail: str = ""):
        super().__init__(f"{code.value}: {detail}" if detail else code.value)
        self.reason = BypassReason(code, detail)

    @property
    def code(self) -> BypassCode:
        return self.reason.code


class SchemaError(Exception):
    pass


class ParseError(SchemaError):
    """Malformed schema document."""


class IntegrityError(SchemaError):
    """Schema document is well-formed but violates a model invariant."""


class JoinPathError(Exception):
    pass


class AmbiguousJoinPath(JoinPathError):
    pass


class UnreachableColumn(JoinPathError):
    pass


class UnknownLevel(KeyError):
    pass


class MalformedComponent(ValueError):
    """A signature component cannot be normalized (e.g. DISTINCT on SUM)."""


class DataError(Exception):
    """Star data files do not conform to the schema."""


class BackendError(Exception):
    pass


class StorageError(Exception):
    pass


class ClientError(Exception):
    """Transport-level failure of an NL client (or a fixture miss)."""


class MalformedResponse(Exception):
    """NL client returned a document that violates the signature document schema."""


class VerificationFailure(AssertionError):
    """A generated SQL variant did not reproduce the gold result."""


class MissingFixture(KeyError):
    pass
