"""Shared strategies and independent oracles.

The oracles deliberately avoid the package: symbolic recursions in sympy and
arbitrary-precision exponentials in mpmath.
"""
import sys
from fractions import Fraction

import mpmath
import numpy as np
import pytest
import sympy as sp
from hypothesis import strategies as st

from carre_lab.generator import random_generator


def _rational(x):
    x = Fraction(x) if not isinstance(x, Fraction) else x
    return sp.Rational(x.numerator, x.denominator)


def sym_matrix(q):
    """Exact binary values of the off-diagonal rates; the diagonal is rebuilt exactly."""
    q = np.asarray(q, dtype=object)
    m = q.shape[0]
    Q = sp.Matrix(m, m, lambda i, j: _rational(q[i, j]) if i != j else 0)
    for i in range(m):
        Q[i, i] = -sum(Q[i, :])
    return Q


def sym_vector(v):
    return sp.Matrix([_rational(x) for x in v])


def oracle_gamma(q, n, f, g):
    """Naive (non-memoised) recursion on sympy matrices."""
    Q = sym_matrix(q)
    F, G = sym_vector(f), sym_vector(g)

    def rec(k, f_, g_):
        if k == 0:
            return f_.multiply_elementwise(g_)
        return Q * rec(k - 1, f_, g_) - rec(k - 1, Q * f_, g_) - rec(k - 1, f_, Q * g_)

    return rec(n, F, G)


def oracle_stationary(q):
    """Left null vector of Q, normalised to mass one."""
    ns = sym_matrix(q).T.nullspace()
    assert len(ns) == 1
    v = ns[0]
    return v / sum(v)


def oracle_energy(q, mu, n, g):
    """``<Gamma_n(g,g), mu>`` for n >= 1; mass-corrected variance for n = 0."""
    M = sym_vector(mu)
    G = sym_vector(g)
    if n == 0:
        ones = sp.ones(len(g), 1)
        mass = (ones.T * M)[0]
        return (G.multiply_elementwise(G).T * M)[0] - (G.T * M)[0] ** 2 / mass
    return (oracle_gamma(q, n, g, g).T * M)[0]


def oracle_expm(q, t, dps=40):
    with mpmath.workdps(dps):
        m = mpmath.matrix(np.asarray(q, dtype=float).tolist())
        e = mpmath.expm(m * mpmath.mpf(t))
        return np.array(e.tolist(), dtype=float)


def frac(*xs):
    return np.array([Fraction(x) for x in xs], dtype=object)


@st.composite
def random_instances(draw, dims=(2, 6)):
    m = draw(st.integers(*dims))
    seed = draw(st.integers(0, 10**6))
    density = draw(st.floats(0.2, 1.0))
    A = random_generator(m, seed, density)
    g = np.random.default_rng(seed + 1).normal(size=m)
    return A, g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
