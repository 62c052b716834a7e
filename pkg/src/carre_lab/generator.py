"""Finite-state Markov generators (Q-matrices) and their stationary measures."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    BadDimension,
    NegativeRate,
    NonPositiveRate,
    NotIrreducible,
    NotSquare,
    NumericalFailure,
    RowSumViolation,
    SpecParseError,
)
from .exact import is_exact, to_exact, to_fraction


@dataclass(frozen=True, eq=False)
class Generator:
    """A validated Q-matrix: nonnegative off-diagonal rates, zero row sums.

    ``q`` is either a float array or, in exact mode, an object array of
    Fractions. Instances are only created through :func:`validate_generator`
    (or the constructors built on it), which guarantees ``q @ 1 == 0``.
    """

    q: np.ndarray

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @property
    def exact(self) -> bool:
        return is_exact(self.q)

    @property
    def norm(self):
        """Induced sup-norm, i.e. twice the largest exit rate."""
        if self.dim == 0:
            return 0.0
        return np.abs(self.q).sum(axis=1).max()

    def to_exact(self) -> "Generator":
        # already validated; the diagonal is rebuilt exactly from the binary rates
        return self if self.exact else _repair(to_exact(self.q))

    def to_float(self) -> "Generator":
        if not self.exact:
            return self
        return validate_generator(np.asarray(self.q, dtype=float), tol=0)

    def __repr__(self):
        return f"Generator(dim={self.dim}, exact={self.exact})"


@dataclass(frozen=True, eq=False)
class ProbabilityMeasure:
    """Nonnegative weights on the states.

    ``normalized`` is False for the proportional ("raw") gauge, in which the
    weights are only defined up to a positive factor.
    """

    weights: np.ndarray
    normalized: bool = True

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def mass(self):
        return self.weights.sum()

    def normalize(self) -> "ProbabilityMeasure":
        return _measure(self.weights / self.mass, True)


def _measure(weights, normalized):
    w = weights.copy()
    w.setflags(write=False)
    return ProbabilityMeasure(w, normalized)


def validate_generator(q, tol: float = 1e-10) -> Generator:
    """Check the Q-matrix axioms and return a :class:`Generator`.

    Off-diagonal entries in ``[-tol, 0)`` are clamped to zero. The diagonal
    is always rebuilt as the negative off-diagonal row sum, so the returned
    matrix annihilates constants exactly (in floating point up to the
    rounding of that one sum).

    Raises
    ------
    NotSquare, NegativeRate, RowSumViolation
    """
    exact = is_exact(q) or (
        isinstance(q, (list, tuple)) and _contains_fraction(q)
    )
    a = to_exact(q) if exact else np.array(q, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSquare(f"generator must be square, got shape {a.shape}")
    if a.shape[0] < 1:
        raise BadDimension("generator must have at least one state")
    if not exact and not np.all(np.isfinite(a)):
        raise SpecParseError("generator entries must be finite")
    m = a.shape[0]
    off = ~np.eye(m, dtype=bool)
    for i, j in zip(*np.nonzero(off)):
        if a[i, j] < -tol:
            raise NegativeRate(int(i), int(j), a[i, j])
    sums = a.sum(axis=1)
    for i in range(m):
        if abs(sums[i]) > tol:
            raise RowSumViolation(i, sums[i])
    return _repair(a)


def _repair(a) -> Generator:
    # clamp roundoff-negative rates and rebuild the diagonal from the rows
    zero = Fraction(0) if is_exact(a) else 0.0
    off = ~np.eye(a.shape[0], dtype=bool)
    a[off & np.array(a < 0, dtype=bool)] = zero
    np.fill_diagonal(a, zero)
    np.fill_diagonal(a, zero - a.sum(axis=1))
    a.setflags(write=False)
    return Generator(a)


def _from_rates(q) -> Generator:
    """Generator from a nonnegative off-diagonal rate pattern; the diagonal is ignored."""
    return _repair(np.array(q, dtype=float))


def _contains_fraction(rows):
    return any(isinstance(x, Fraction) for row in rows for x in row)


def loop_chain(a, b, c, exact: bool = False) -> Generator:
    """Three states exchanging mass around the loop 0 -> 1 -> 2 -> 0.

    ``exact=True`` (or any Fraction rate) gives a rational generator.
    """
    rates = (a, b, c)
    for r in rates:
        if not r > 0:
            raise NonPositiveRate(f"loop rates must be positive, got {rates}")
    exact = exact or any(isinstance(r, Fraction) for r in rates)
    if exact:
        a, b, c = (to_fraction(r) for r in rates)
        z = Fraction(0)
    else:
        a, b, c = (float(r) for r in rates)
        z = 0.0
    q = [[-a, a, z], [z, -b, b], [c, z, -c]]
    return validate_generator(to_exact(q) if exact else np.array(q), tol=0)


def cycle_laplacian(m: int, diffusivity) -> Generator:
    """``(D/2)`` times the second-difference operator on a ring of ``m`` states.

    For ``m == 2`` both neighbours of a state coincide, so the single
    off-diagonal rate is ``D``.
    """
    if m < 2:
        raise BadDimension(f"cycle needs at least 2 states, got {m}")
    if not diffusivity > 0:
        raise NonPositiveRate(f"diffusivity must be positive, got {diffusivity}")
    half = float(diffusivity) / 2.0
    q = np.zeros((m, m))
    for i in range(m):
        q[i, (i + 1) % m] += half
        q[i, (i - 1) % m] += half
    return _from_rates(q)


def _clamp_ensemble_args(m, density):
    m = max(2, int(m))
    density = min(1.0, max(float(density), 1e-3))
    return m, density


def random_generator(m: int, seed: int, density: float = 1.0) -> Generator:
    """Seeded irreducible generator with rates in ``[0.1, 1)``.

    A random directed Hamiltonian cycle is always present; every other
    off-diagonal entry is switched on with probability ``density``.
    Out-of-range arguments are clamped rather than rejected.
    """
    m, density = _clamp_ensemble_args(m, density)
    rng = np.random.default_rng(seed)
    q = np.zeros((m, m))
    mask = rng.random((m, m)) < density
    rates = rng.uniform(0.1, 1.0, size=(m, m))
    q[mask] = rates[mask]
    perm = rng.permutation(m)
    for i in range(m):
        src, dst = perm[i], perm[(i + 1) % m]
        if q[src, dst] == 0.0:
            q[src, dst] = rates[src, dst]
    return _from_rates(q)


def random_reversible_generator(m: int, seed: int, density: float = 1.0) -> Generator:
    """Seeded generator in detailed balance with a random positive measure.

    Built from symmetric conductances ``k_ij`` as ``q_ij = k_ij / mu_i``.
    """
    m, density = _clamp_ensemble_args(m, density)
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.2, 1.0, size=m)
    k = np.triu(rng.uniform(0.1, 1.0, size=(m, m)), 1)
    k[np.triu(rng.random((m, m)) >= density, 1)] = 0.0
    for i in range(m - 1):
        k[i, i + 1] = max(k[i, i + 1], 0.1)
    k = k + k.T
    q = k / mu[:, None]
    return _from_rates(q)


def random_circulant_generator(m: int, seed: int) -> Generator:
    """Seeded circulant generator: normal for the uniform measure.

    The rate to the next state is kept positive, which makes the chain
    irreducible. Circulants commute with their transposes, so these are
    normal but in general not in detailed balance.
    """
    m = max(2, int(m))
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.0, 1.0, size=m)
    c[0] = 0.0
    c[1] = max(c[1], 0.1)
    q = np.array([[c[(j - i) % m] for j in range(m)] for i in range(m)])
    return _from_rates(q)


def block_diagonal(*gens: Generator) -> Generator:
    """Disjoint union of chains; reducible whenever more than one block is given."""
    from scipy.linalg import block_diag

    return validate_generator(block_diag(*[np.asarray(g.q, dtype=float) for g in gens]))


def is_irreducible(A: Generator) -> bool:
    """True iff the directed graph of positive off-diagonal rates is strongly connected."""
    if A.dim == 1:
        return True
    adj = np.array(A.q != 0, dtype=bool)
    np.fill_diagonal(adj, False)
    n, _ = connected_components(adj, directed=True, connection="strong")
    return n == 1


def stationary_measure(
    A: Generator,
    tol: float = 1e-10,
    normalize: bool = True,
    gauge: float | None = None,
) -> ProbabilityMeasure:
    """Unique stationary measure ``mu`` with ``A^T mu = 0``.

    Parameters
    ----------
    A : Generator
        Must be irreducible.
    tol : float
        Acceptance threshold for ``max|A^T mu| / max|A|`` (float mode).
    normalize : bool
        If False the weights are returned in a proportional gauge instead of
        summing to one. With ``gauge=None`` that gauge is the unit-flux one,
        ``sum_i mu_i * exit_rate_i == dim``, which gives ``(1/a, 1/b, 1/c)``
        for :func:`loop_chain`. A float ``gauge`` instead fixes the smallest
        positive weight.

    Raises
    ------
    NotIrreducible, NumericalFailure
    """
    if not is_irreducible(A):
        raise NotIrreducible("stationary measure is not unique for a reducible generator")
    w = _stationary_exact(A) if A.exact else _stationary_float(A, tol)
    if normalize:
        return _measure(w / w.sum(), True)
    exits = -np.diag(A.q)
    flux = (w * exits).sum()
    if gauge is None and flux > 0:
        w = w * (A.dim / flux)
    else:
        target = 1 if gauge is None else gauge
        if A.exact:
            target = to_fraction(target)
        w = w * (target / w[w > 0].min())
    return _measure(w, False)


def _stationary_exact(A):
    import sympy as sp

    m = A.dim
    mat = sp.Matrix(m, m, lambda i, j: sp.Rational(A.q[j, i].numerator, A.q[j, i].denominator))
    mat[m - 1, :] = sp.ones(1, m)
    rhs = sp.zeros(m, 1)
    rhs[m - 1] = 1
    sol = mat.LUsolve(rhs)
    return np.array([Fraction(int(sp.numer(x)), int(sp.denom(x))) for x in sol], dtype=object)


def _stationary_float(A, tol):
    q = np.asarray(A.q, dtype=float)
    m = A.dim
    if m == 1:
        return np.ones(1)
    scale = max(np.abs(q).max(), np.finfo(float).tiny)

    def ok(w):
        return np.all(np.isfinite(w)) and np.abs(q.T @ w).max() <= tol * scale

    # deflated solve: last balance equation replaced by the normalisation
    mat = q.T.copy()
    mat[-1, :] = 1.0
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        w = np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        w = np.full(m, np.nan)
    w = _clean(w)
    if ok(w):
        return w
    _, s, vh = np.linalg.svd(q.T)
    w = vh[-1]
    w = _clean(w * np.sign(w.sum()) / abs(w.sum()))
    if ok(w):
        return w
    raise NumericalFailure(
        f"stationary solve did not converge (smallest singular values {s[-2:]})"
    )


def _clean(w):
    # roundoff-level negative weights
    w = np.where((w < 0) & (w > -1e-13 * np.abs(w).max(initial=0.0)), 0.0, w)
    s = w.sum()
    return w / s if s != 0 else w


# ---------------------------------------------------------------------------
# JSON generator specs


def _reject_constant(name):
    raise SpecParseError(f"non-finite number {name!r} in generator spec")


def parse_generator_spec(text: str) -> dict:
    """Parse a generator spec document, rejecting NaN and Infinity."""
    try:
        spec = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SpecParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SpecParseError('generator spec must be an object with a "kind" field')
    return spec


def generator_from_spec(spec: dict) -> Generator:
    """Build a generator from ``{"kind": ..., "params": {...}, "matrix": [[...]]}``."""
    kind = spec.get("kind")
    params = spec.get("params") or {}
    try:
        if kind == "loop":
            return loop_chain(params["a"], params["b"], params["c"])
        if kind == "cycle":
            return cycle_laplacian(int(params["m"]), params.get("diffusivity", 1.0))
        if kind == "random":
            return random_generator(
                int(params["m"]), int(params.get("seed", 0)), float(params.get("density", 1.0))
            )
        if kind == "explicit":
            return validate_generator(_finite_matrix(spec.get("matrix")))
    except KeyError as exc:
        raise SpecParseError(f"{kind} spec is missing parameter {exc}") from None
    raise SpecParseError(f"unknown generator kind {kind!r}")


def _finite_matrix(rows):
    if not isinstance(rows, list) or not all(isinstance(r, list) for r in rows):
        raise SpecParseError('"matrix" must be a list of rows')
    for r in rows:
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                raise SpecParseError(f"matrix entry {x!r} is not a finite number")
    return rows


def load_generator_spec(path) -> Generator:
    return generator_from_spec(parse_generator_spec(Path(path).read_text()))
