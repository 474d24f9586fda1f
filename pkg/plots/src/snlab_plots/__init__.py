"""Figure rendering for the lab CLI's CSV outputs.

This package never imports the simulation library: it consumes only the
CLI's documented CSV files (column names are the schema contract, ``#``
header lines carry the producing run's parameters).
"""

from .render import FigureSpec, SchemaError, Table, read_table, render

__all__ = ["FigureSpec", "SchemaError", "Table", "read_table", "render"]
__version__ = "0.1.0"
