"""Memory verification and realignment for agents in drifting environments."""

__version__ = "0.1.0"
