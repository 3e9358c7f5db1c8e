"""Count the solutions of parameterized polynomial systems with monodromy loops."""

__version__ = "0.1.0"
