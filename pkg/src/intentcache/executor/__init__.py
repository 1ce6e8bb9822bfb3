from .backend import Backend, conform, execute_signature
from .reference import ReferenceBackend, dimension_pairs, output_columns, reference_execute
from .sqlbackend import SqlBackend
from .star import ColumnData, StarData, TableData, load_star_data, write_star_data

__all__ = [
    "Backend",
    "ColumnData",
    "ReferenceBackend",
    "SqlBackend",
    "StarData",
    "TableData",
    "conform",
    "dimension_pairs",
    "execute_signature",
    "load_star_data",
    "output_columns",
    "reference_execute",
    "write_star_data",
]
