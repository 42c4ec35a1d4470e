"""Context-aware architectural adaptation simulator for group-communication applications."""

__version__ = "0.1.0"
