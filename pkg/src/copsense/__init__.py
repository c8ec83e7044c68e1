"""Copositive duality and sensitivity bounds for mixed-binary quadratic programs."""
__version__ = "0.1.0"
