"""Joint extraction of event triggers and arguments over syntactic graphs."""

__version__ = "0.1.0"
