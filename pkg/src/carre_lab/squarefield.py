"""Iterated square-field operators and their Markov-operator interpolants.

Operator lists follow the outermost-first convention: ``[M_n, ..., M_1]``,
so ``G_{n+1}(M_{n+1}, ..., M_1) = M_{n+1} G_n(...) - G_n(..., M_{n+1} f, M_{n+1} g)``
peels off ``ops[0]``.

Every function here works on float arrays and, unchanged, on object arrays
of Fractions (exact mode).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonCommuting, PreconditionError
from .exact import is_exact, to_exact
from .generator import Generator
from .semigroup import MarkovOperator, expm


def _matrix(x):
    if isinstance(x, Generator):
        return x.q
    if isinstance(x, MarkovOperator):
        return x.p
    return x if is_exact(x) else np.asarray(x, dtype=float)


def _coerce(mats, vecs):
    """Bring matrices and vectors to a common arithmetic (float or exact)."""
    exact = any(is_exact(a) for a in (*mats, *vecs))
    conv = to_exact if exact else (lambda a: np.asarray(a, dtype=float))
    mats = [conv(a) for a in mats]
    vecs = [conv(v) for v in vecs]
    m = mats[0].shape[0] if mats else vecs[0].shape[0]
    for a in mats:
        if a.shape != (m, m):
            raise DimensionMismatch(f"operator of shape {a.shape} does not match dim {m}")
    for v in vecs:
        if v.shape != (m,):
            raise DimensionMismatch(f"observable of shape {v.shape} does not match dim {m}")
    return mats, vecs


def sup_norm(v) -> float:
    return float(np.max(np.abs(np.asarray(v, dtype=float)), initial=0.0))


def positivity_scale(A: Generator, n: int, g) -> float:
    """``||g||^2 ||A||^n``, the size Gamma_n(g) can reach."""
    return sup_norm(g) ** 2 * float(A.norm) ** n


def gamma_n(A: Generator, n: int, f, g):
    """``Gamma_n(f, g)`` by the defining recursion.

    ``Gamma_0(f, g) = f g`` and
    ``Gamma_{n+1}(f, g) = A Gamma_n(f, g) - Gamma_n(Af, g) - Gamma_n(f, Ag)``.

    The recursion only ever evaluates ``Gamma_k(A^a f, A^b g)``, so values
    are memoised on ``(k, a, b)``; this turns the ``3^n`` call tree into
    ``O(n^3)`` evaluations. The two subtracted terms are added first, which
    makes the result exactly symmetric under ``f <-> g``.
    """
    if n < 0:
        raise PreconditionError("order must be nonnegative")
    (q,), (f, g) = _coerce([_matrix(A)], [f, g])
    fp, gp = [f], [g]
    memo = {}

    def power(seq, k):
        while len(seq) <= k:
            seq.append(q @ seq[-1])
        return seq[k]

    def rec(k, a, b):
        key = (k, a, b)
        if key not in memo:
            if k == 0:
                memo[key] = power(fp, a) * power(gp, b)
            else:
                memo[key] = q @ rec(k - 1, a, b) - (rec(k - 1, a + 1, b) + rec(k - 1, a, b + 1))
        return memo[key]

    return rec(n, 0, 0)


def gamma_n_explicit(A: Generator, n: int, f, g):
    """``Gamma_n(f, g)`` from the closed multinomial form.

    ``sum_{a+b+c=n} n!/(a! b! c!) (-1)^(b+c) A^a (A^b f * A^c g)``.
    The outer powers are applied by Horner's scheme, so only ``O(n)``
    matrix-vector products with ``A`` are needed beyond the powers of
    ``f`` and ``g``.
    """
    if n < 0:
        raise PreconditionError("order must be nonnegative")
    (q,), (f, g) = _coerce([_matrix(A)], [f, g])
    fp, gp = [f], [g]
    for _ in range(n):
        fp.append(q @ fp[-1])
        gp.append(q @ gp[-1])

    def inner(k):
        acc = fp[0] * gp[k] * 0
        for b in range(k + 1):
            acc = acc + comb(k, b) * (fp[b] * gp[k - b])
        return acc if k % 2 == 0 else -acc

    r = inner(0) * comb(n, n)
    for a in range(n - 1, -1, -1):
        r = q @ r + comb(n, a) * inner(n - a)
    return r


def big_g(ops, f, g):
    """``G_n(M_n, ..., M_1, f, g)`` with ``ops = [M_n, ..., M_1]``.

    An empty list gives ``f * g``.
    """
    mats = [_matrix(o) for o in ops]
    mats, (f, g) = _coerce(mats, [f, g])
    return _big_g(mats, f, g)


def _big_g(mats, f, g):
    def rec(i, f, g):
        if i == len(mats):
            return f * g
        m = mats[i]
        return m @ rec(i + 1, f, g) - rec(i + 1, m @ f, m @ g)

    return rec(0, f, g)


def commutator_norm(a, b) -> float:
    """Induced sup-norm of ``ab - ba``."""
    c = a @ b - b @ a
    return np.abs(c).sum(axis=1).max() if c.size else 0.0


def big_g_interp(A: Generator, ops, n: int, k: int, f, g,
                 comm_tol: float | None = None, check_commute: bool = True):
    """``G_n^k(M_{n-k}, ..., M_1, f, g)``, interpolating ``G_n`` (k=0) and ``Gamma_n`` (k=n).

    ``G_n^k = A G_{n-1}^{k-1} - G_{n-1}^{k-1}(Af, g) - G_{n-1}^{k-1}(f, Ag)``
    with the same operator list throughout.

    Each operator must commute with ``A`` to within ``comm_tol`` (default
    ``1e-10 ||A|| ||M||``; zero in exact mode), otherwise ``NonCommuting``.
    """
    if not 0 <= k <= n:
        raise PreconditionError(f"need 0 <= k <= n, got n={n}, k={k}")
    if len(ops) != n - k:
        raise DimensionMismatch(f"G_{n}^{k} takes {n - k} operators, got {len(ops)}")
    mats, (f, g) = _coerce([_matrix(A)] + [_matrix(o) for o in ops], [f, g])
    q, mats = mats[0], mats[1:]
    if check_commute:
        qn = np.abs(q).sum(axis=1).max() if q.size else 0
        for i, m in enumerate(mats):
            d = commutator_norm(q, m)
            if comm_tol is not None:
                tol = comm_tol
            elif is_exact(q):
                tol = 0
            else:
                tol = 1e-10 * float(qn) * float(np.abs(m).sum(axis=1).max())
            if d > tol:
                raise NonCommuting(i, float(d), float(tol))

    fp, gp = [f], [g]
    memo = {}

    def power(seq, j):
        while len(seq) <= j:
            seq.append(q @ seq[-1])
        return seq[j]

    def rec(level, a, b):
        key = (level, a, b)
        if key not in memo:
            if level == k:
                memo[key] = _big_g(mats, power(fp, a), power(gp, b))
            else:
                memo[key] = q @ rec(level + 1, a, b) - (
                    rec(level + 1, a + 1, b) + rec(level + 1, a, b + 1)
                )
        return memo[key]

    return rec(0, 0, 0)


def check_parallelogram(ops, f, g) -> float:
    """Sup-norm defect of ``G(f) + G(g) = 2 G((f+g)/2) + 2 G((f-g)/2)``.

    ``G(x)`` is ``G_n`` on the diagonal. Returns an exact zero Fraction in
    exact mode when the identity holds.
    """
    mats = [_matrix(o) for o in ops]
    mats, (f, g) = _coerce(mats, [f, g])
    G = lambda x: _big_g(mats, x, x)  # noqa: E731
    half_sum, half_diff = (f + g) / 2, (f - g) / 2
    d = G(f) + G(g) - 2 * G(half_sum) - 2 * G(half_diff)
    return np.abs(d).max() if is_exact(d) else sup_norm(d)


def convexity_gap(ops, f, g):
    """Pointwise ``(G(f) + G(g))/2 - G((f+g)/2)``.

    By the parallelogram identity this equals ``G((f-g)/2)``, so it is
    nonnegative exactly where ``G_n`` is pointwise positive, which fails for
    some generators once ``n >= 2``.
    """
    mats = [_matrix(o) for o in ops]
    mats, (f, g) = _coerce(mats, [f, g])
    G = lambda x: _big_g(mats, x, x)  # noqa: E731
    return (G(f) + G(g)) / 2 - G((f + g) / 2)


@dataclass(frozen=True)
class ConvergenceReport:
    """Errors of ``(1/t) G_n^k(T(t), ...)`` against ``G_n^{k+1}(...)``.

    ``order`` is the least-squares slope of ``log error`` against ``log t``;
    it is NaN when every error is at roundoff level (nothing to fit).
    """

    n: int
    k: int
    times: tuple
    errors: tuple
    order: float
    scale: float

    @property
    def vanishing(self) -> bool:
        return bool(max(self.errors) <= 1e-12 * max(self.scale, 1e-300))

    def passed(self, min_order: float = 0.9) -> bool:
        return self.vanishing or (np.isfinite(self.order) and self.order >= min_order)


def check_rescaled_limit(A: Generator, ops, n: int, k: int, f, g, t_sequence) -> ConvergenceReport:
    """Measure the rescaled limit that turns ``G_n^k`` into ``G_n^{k+1}``.

    ``T(t)`` is prepended to ``ops`` (which has ``n - k - 1`` entries) and
    ``(1/t) G_n^k(T(t), ops, f, g)`` is compared to ``G_n^{k+1}(ops, f, g)``.
    First-order convergence is expected.
    """
    if not 0 <= k < n:
        raise PreconditionError(f"need 0 <= k < n, got n={n}, k={k}")
    ts = [float(t) for t in t_sequence]
    if not ts or min(ts) <= 0:
        raise PreconditionError("t_sequence must contain positive times")
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    target = big_g_interp(A, ops, n, k + 1, f, g)
    errors = []
    for t in ts:
        T = expm(A, t)
        approx = big_g_interp(A, [T] + list(ops), n, k, f, g) / t
        errors.append(sup_norm(approx - target))
    scale = max(sup_norm(target), positivity_scale(A, n, f) ** 0.5 * positivity_scale(A, n, g) ** 0.5)
    errs = np.array(errors)
    good = errs > 1e-14 * max(scale, 1e-300)
    if good.sum() >= 2:
        order = float(np.polyfit(np.log(np.array(ts)[good]), np.log(errs[good]), 1)[0])
    else:
        order = float("nan")
    return ConvergenceReport(n, k, tuple(ts), tuple(errors), order, scale)


def product_rule_defect(A: Generator, n: int, f, g, h: float = 1e-4) -> float:
    """Finite-difference check of ``d/dt Gamma_n(T(t)f, T(t)g)|_0 = A Gamma_n - Gamma_{n+1}``.

    Central differences with ``exp(+-hA)``; returns the sup-norm defect
    relative to the size of the right-hand side. Diagnostic only.
    """
    q = np.asarray(A.q, dtype=float)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    ep, em = scipy.linalg.expm(h * q), scipy.linalg.expm(-h * q)
    lhs = (gamma_n(A, n, ep @ f, ep @ g) - gamma_n(A, n, em @ f, em @ g)) / (2 * h)
    rhs = q @ gamma_n(A, n, f, g) - gamma_n(A, n + 1, f, g)
    return sup_norm(lhs - rhs) / max(sup_norm(rhs), positivity_scale(A, n + 1, f), 1e-300)
