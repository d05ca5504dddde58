"""Module entry point: python -m gesched ..."""

from .cli import entry

entry()
