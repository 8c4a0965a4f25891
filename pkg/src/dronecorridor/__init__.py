"""Ground control tooling for multi-lane aerial drone corridors."""

__version__ = "0.1.0"
