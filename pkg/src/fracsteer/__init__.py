"""Approximate controllability of nonlocal fractional evolution inclusions.

Numerical companion for Riemann-Liouville systems ``D^alpha x = A x + B u + f``
with ``f`` a selection of a Clarke subdifferential and a nonlocal initial
condition ``I^(1-alpha) x|_0 = sum_k c_k x(t_k)``, solved in a truncated
eigenbasis of ``A``.
"""

__version__ = "0.1.0"

from .errors import FracSteerError, NumericError, ValidationError  # noqa: E402

__all__ = ["__version__", "FracSteerError", "NumericError", "ValidationError"]
