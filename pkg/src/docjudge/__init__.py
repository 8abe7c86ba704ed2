"""Reference-free, multi-judge evaluation of discourse-level translation."""

__version__ = "0.1.0"
