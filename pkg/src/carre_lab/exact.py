"""Exact rational arithmetic on numpy object arrays.

The static operations (square-field operators, energies, ``G_n``) are written
against plain ``@``, ``*`` and ``+``, so they run unchanged on object arrays of
:class:`fractions.Fraction`. These helpers move data in and out of that mode.
"""
from fractions import Fraction

import numpy as np


def to_fraction(x):
    """Convert a scalar to :class:`Fraction` without rounding.

    Floats are converted to their exact binary value, so ``0.5`` becomes
    ``1/2`` but ``0.1`` does not become ``1/10``. Strings such as ``"1/3"``
    are parsed.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (np.integer, int)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"cannot represent {x} as a rational")
    return Fraction(x)


def to_exact(a):
    """Return an object array of Fractions with the shape of ``a``."""
    arr = np.asarray(a, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx in np.ndindex(arr.shape):
        out[idx] = to_fraction(arr[idx])
    return out


def is_exact(a):
    return isinstance(a, np.ndarray) and a.dtype == object


def to_float(a):
    return np.asarray(a, dtype=float)


def as_array(a, exact=None):
    """Coerce ``a`` to an array, keeping object dtype when it is already exact."""
    if exact is None:
        exact = is_exact(a)
    return to_exact(a) if exact else np.asarray(a, dtype=float)
