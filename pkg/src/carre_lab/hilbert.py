"""The generator as an operator on ``L^2(mu)``: adjoint, normality, ``C`` and ``B``."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    EigenFailure,
    NonStationaryMeasure,
    NotIrreducible,
    NotPSD,
    ZeroWeight,
)
from .exact import is_exact
from .generator import Generator, ProbabilityMeasure, is_irreducible

DEFAULT_TOL = 1e-9


def _inf_norm(a):
    return np.abs(a).sum(axis=1).max() if a.size else 0


@dataclass(frozen=True, eq=False)
class MuGeometry:
    """``L^2(mu)`` inner product ``(f, g)_mu = sum_i f_i g_i mu_i``."""

    mu: ProbabilityMeasure

    @property
    def q_mu(self):
        w = self.mu.weights
        out = np.zeros((w.size, w.size), dtype=w.dtype)
        np.fill_diagonal(out, w)
        return out

    @property
    def invertible(self) -> bool:
        return bool(np.all(self.mu.weights > 0))

    def inner(self, f, g):
        return (f * g * self.mu.weights).sum()

    def norm2(self, g):
        return self.inner(g, g)


def _check_measure(A: Generator, mu: ProbabilityMeasure, tol: float):
    w = mu.weights
    if w.shape != (A.dim,):
        raise DimensionMismatch(f"measure has {w.shape[0]} weights, generator has dim {A.dim}")
    for i, x in enumerate(w):
        if not x > 0:
            raise ZeroWeight(i)
    residual = _abs_max(A.q.T @ w)
    bound = 0 if (A.exact and is_exact(w)) else tol * float(A.norm) * float(np.abs(w).max())
    if residual > bound:
        raise NonStationaryMeasure(
            f"measure is not stationary: max|A^T mu| = {float(residual):.3e} > {float(bound):.3e}"
        )
    return w


def _abs_max(v):
    return np.abs(v).max() if v.size else 0


def mu_adjoint(A: Generator, mu: ProbabilityMeasure, tol: float = 1e-10):
    """``A* = Q_mu^{-1} A^T Q_mu``, entrywise ``A*_ij = A_ji mu_j / mu_i``.

    ``mu`` must be positive and stationary for ``A``; the result is then a
    generator again (the time-reversed chain). Works in exact mode.

    Raises
    ------
    ZeroWeight, NonStationaryMeasure, DimensionMismatch
    """
    w = _check_measure(A, mu, tol)
    return (A.q.T * w[None, :]) / w[:, None]


class Classification(str, enum.Enum):
    DETAILED_BALANCE = "DetailedBalance"
    NORMAL = "Normal"
    NON_NORMAL = "NonNormal"


@dataclass(frozen=True)
class NormalityReport:
    classification: Classification
    commutator_norm: float
    symmetry_defect: float
    tolerance: float

    @property
    def is_normal(self) -> bool:
        return self.classification is not Classification.NON_NORMAL

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "commutator_norm": self.commutator_norm,
            "symmetry_defect": self.symmetry_defect,
            "tolerance": self.tolerance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def classify(A: Generator, mu: ProbabilityMeasure, tol: float = DEFAULT_TOL) -> NormalityReport:
    """Decide detailed balance / normality from the defects ``||A - A*||`` and ``||[A, A*]||``.

    Both tolerances are relative: ``tol * ||A||`` and ``tol * ||A||^2``
    (induced sup-norm). In exact mode a zero defect is required.
    """
    star = mu_adjoint(A, mu)
    q = A.q
    sym = _inf_norm(q - star)
    comm = _inf_norm(q @ star - star @ q)
    norm = A.norm
    if A.exact:
        db, nm = sym == 0, comm == 0
    else:
        db, nm = sym <= tol * norm, comm <= tol * norm**2
    if db:
        cls = Classification.DETAILED_BALANCE
    elif nm:
        cls = Classification.NORMAL
    else:
        cls = Classification.NON_NORMAL
    return NormalityReport(cls, float(comm), float(sym), float(tol))


def c_matrix(A: Generator, mu: ProbabilityMeasure):
    """``C = -(A + A*)``, in the arithmetic of ``A``."""
    return -(A.q + mu_adjoint(A, mu))


@dataclass(frozen=True, eq=False)
class COperator:
    """``C = -(A + A*)`` with its ``mu``-self-adjoint positive square root ``B``.

    ``eigenvalues`` are those of ``C`` in ascending order; ``vectors`` are the
    corresponding ``mu``-orthonormal eigenvectors.
    """

    c: np.ndarray
    b: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    weights: np.ndarray

    def power(self, n: int) -> np.ndarray:
        """``C^n`` from the spectral decomposition."""
        return (self.vectors * self.eigenvalues**n) @ (self.vectors.T * self.weights[None, :])


def c_operator(A: Generator, mu: ProbabilityMeasure) -> COperator:
    """Build ``C`` and ``B = C^{1/2}`` through the symmetrisation ``S = Q^{1/2} C Q^{-1/2}``.

    Eigenvalues of ``S`` down to ``-1e-10 ||C||`` are treated as roundoff and
    clamped to zero; anything more negative raises ``NotPSD``.
    """
    c = np.asarray(c_matrix(A, mu), dtype=float)
    w = np.asarray(mu.weights, dtype=float)
    d = np.sqrt(w)
    s = d[:, None] * c / d[None, :]
    s = (s + s.T) / 2
    lam, u = np.linalg.eigh(s)
    cn = float(_inf_norm(c))
    if lam.size and lam[0] < -1e-10 * cn:
        raise NotPSD(f"C has eigenvalue {lam[0]:.3e} < -1e-10 ||C||")
    lam = np.clip(lam, 0.0, None)
    root = (u * np.sqrt(lam)) @ u.T
    b = root * d[None, :] / d[:, None]
    vectors = u / d[:, None]
    return COperator(c, b, lam, vectors, w)


def _complement_basis(v):
    """Orthonormal basis of the Euclidean complement of ``v``."""
    return scipy.linalg.null_space(np.asarray(v, dtype=float)[None, :])


def spectral_gap(A: Generator) -> float:
    """``min -Re(lambda)`` over the eigenvalues of ``A`` other than the constant mode.

    The constant eigenfunction is removed by restricting ``A`` to the
    invariant subspace ``mu^perp`` (``mu`` stationary), which is exact
    rather than a tolerance-based filter on near-zero eigenvalues.

    Raises
    ------
    NotIrreducible, EigenFailure
    """
    from .generator import stationary_measure

    if not is_irreducible(A):
        raise NotIrreducible("spectral gap is undefined for a reducible generator")
    if A.dim < 2:
        raise EigenFailure("a one-state chain has no nontrivial eigenvalue")
    q = np.asarray(A.q, dtype=float)
    w = np.asarray(stationary_measure(A.to_float()).weights, dtype=float)
    basis = _complement_basis(w)
    try:
        lam = np.linalg.eigvals(basis.T @ q @ basis)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise EigenFailure("non-finite eigenvalues")
    return float(np.min(-lam.real))


@dataclass(frozen=True)
class PoincareResult:
    """Best constant ``c`` with ``E_{n+1}(g) >= c E_n(g)``.

    For normal generators one constant serves every order. Otherwise
    ``order_specific`` is True and ``c`` is only the ``n = 1`` constant.
    ``certificate_slack`` is the smallest ``(E_{n+1} - c E_n) / scale`` seen
    over the random spot checks.
    """

    constant: float
    order_specific: bool
    classification: Classification
    certificate_slack: float
    samples: int

    @property
    def certified(self) -> bool:
        return self.certificate_slack >= -1e-9

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "order_specific": self.order_specific,
            "classification": self.classification.value,
            "certificate_slack": self.certificate_slack,
            "samples": self.samples,
            "certified": self.certified,
        }


def poincare_constant(A: Generator, mu: ProbabilityMeasure, tol: float = DEFAULT_TOL,
                      samples: int = 100, seed: int = 0, max_order: int = 3) -> PoincareResult:
    """Poincaré constant from the spectrum of ``C`` (normal) or a generalized eigenproblem.

    Normal case: the smallest eigenvalue of ``C`` on the complement of the
    constants. Non-normal case: ``min E_2(g)/E_1(g)`` over nonconstant ``g``,
    i.e. the smallest eigenvalue of the pencil ``(K_2, K_1)`` with
    ``K_1 = -(A^T D + D A)`` and ``K_2 = A^T A^T D + 2 A^T D A + D A A``.
    """
    from .energies import energy_explicit

    if not is_irreducible(A):
        raise NotIrreducible("Poincaré constant needs an irreducible generator")
    if A.dim < 2:
        raise EigenFailure("a one-state chain has no nonconstant observable")
    report = classify(A, mu, tol)
    q = np.asarray(A.q, dtype=float)
    w = np.asarray(mu.weights, dtype=float)
    w = w / w.sum()
    if report.is_normal:
        c_op = c_operator(A, mu)
        d = np.sqrt(w)
        s = d[:, None] * c_op.c / d[None, :]
        basis = _complement_basis(d)
        const = float(np.linalg.eigvalsh(basis.T @ ((s + s.T) / 2) @ basis)[0])
        orders = range(0, max_order + 1)
    else:
        D = np.diag(w)
        k1 = -(q.T @ D + D @ q)
        k2 = q.T @ q.T @ D + 2 * q.T @ D @ q + D @ q @ q
        basis = _complement_basis(w)
        try:
            lam = scipy.linalg.eigh(basis.T @ k2 @ basis, basis.T @ k1 @ basis, eigvals_only=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigenFailure(f"generalized eigenproblem failed: {exc}") from exc
        const = float(lam[0])
        orders = [1]

    mu_n = ProbabilityMeasure(w)
    rng = np.random.default_rng(seed)
    slack = np.inf
    for _ in range(samples):
        g = rng.normal(size=A.dim)
        for n in orders:
            en = energy_explicit(A, mu_n, n, g, g)
            en1 = energy_explicit(A, mu_n, n + 1, g, g)
            scale = float(np.abs(g).max()) ** 2 * float(A.norm) ** (n + 1)
            slack = min(slack, (en1 - const * en) / scale)
    return PoincareResult(const, not report.is_normal, report.classification, float(slack), samples)
