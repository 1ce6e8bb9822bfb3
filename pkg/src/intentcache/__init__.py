"""Semantic result cache for star-schema OLAP keyed by intent signatures."""

from .errors import Bypass, BypassCode, BypassReason
from .schema import SchemaModel, load_schema
from .signature import IntentSignature, canonical_serialize, make_signature, normalize, signature_key
from .table import Column, ResultTable

__version__ = "0.1.0"

__all__ = [
    "Bypass",
    "BypassCode",
    "BypassReason",
    "Column",
    "IntentSignature",
    "ResultTable",
    "SchemaModel",
    "canonical_serialize",
    "load_schema",
    "make_signature",
    "normalize",
    "signature_key",
]
