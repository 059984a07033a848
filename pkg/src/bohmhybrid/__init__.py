"""Mixed quantum-classical dynamics with Bohmian back-reaction, plus diagnostics."""

__version__ = "0.1.0"
