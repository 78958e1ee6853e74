"""Dynamic pricing under competition with sticky market situations."""

__version__ = "0.1.0"
