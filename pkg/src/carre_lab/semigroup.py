"""The Markov semigroup ``T(t) = exp(tA)`` and Markov-operator certification."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    ExponentialFailure,
    NegativeTime,
    PreconditionError,
)
from .exact import is_exact, to_exact
from .generator import Generator

EIG_COND_LIMIT = 1e8
CERTIFY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class MarkovOperator:
    """Row-stochastic matrix: positive and fixes constants."""

    p: np.ndarray

    @property
    def dim(self) -> int:
        return self.p.shape[0]

    def __matmul__(self, other):
        return self.p @ other


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing, nonnegative sample times."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise PreconditionError("time grid must be a nonempty 1-d sequence")
        if pts[0] < 0 or not np.all(np.isfinite(pts)):
            raise PreconditionError("time grid points must be finite and nonnegative")
        if np.any(np.diff(pts) <= 0):
            raise PreconditionError("time grid must be strictly increasing")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points)

    @classmethod
    def linear(cls, t0: float, t_max: float, count: int) -> "TimeGrid":
        return cls(np.linspace(t0, t_max, int(count)))

    @classmethod
    def geometric(cls, t0: float, t_max: float, count: int) -> "TimeGrid":
        """``t = 0`` followed by ``count - 1`` log-spaced points from ``t0`` to ``t_max``."""
        if not 0 < t0 < t_max or count < 2:
            raise PreconditionError("geometric grid needs 0 < t0 < t_max and count >= 2")
        return cls(np.concatenate([[0.0], np.geomspace(t0, t_max, int(count) - 1)]))

    @classmethod
    def parse(cls, text: str) -> "TimeGrid":
        """Parse ``geo:T0:TMAX:COUNT`` or ``lin:T0:TMAX:COUNT``."""
        try:
            kind, t0, t_max, count = text.split(":")
            t0, t_max, count = float(t0), float(t_max), int(count)
        except ValueError:
            raise PreconditionError(f"bad grid spec {text!r}; expected geo:T0:TMAX:COUNT") from None
        if kind in ("geo", "geometric"):
            return cls.geometric(t0, t_max, count)
        if kind in ("lin", "linear"):
            return cls.linear(t0, t_max, count)
        raise PreconditionError(f"unknown grid kind {kind!r}")


@dataclass(frozen=True)
class CertificationReport:
    min_entry: float
    row_sum_defect: float
    tol: float
    passed: bool


def check_markov(M, tol: float = CERTIFY_TOL) -> CertificationReport:
    """Report how far a square matrix is from being row-stochastic."""
    p = np.asarray(_matrix(M), dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {p.shape}")
    min_entry = float(p.min()) if p.size else 0.0
    defect = float(np.abs(p.sum(axis=1) - 1.0).max()) if p.size else 0.0
    return CertificationReport(min_entry, defect, tol, min_entry >= -tol and defect <= tol)


def certify(p, tol: float = CERTIFY_TOL) -> MarkovOperator:
    """Clamp roundoff-negative entries, renormalise rows and wrap.

    Raises ``ExponentialFailure`` if ``p`` is not Markov within ``tol``.
    """
    report = check_markov(p, tol)
    if not report.passed:
        raise ExponentialFailure(
            f"not a Markov operator: min entry {report.min_entry:.3e}, "
            f"row-sum defect {report.row_sum_defect:.3e}"
        )
    p = np.where(p < 0, 0.0, p)
    p = p / p.sum(axis=1, keepdims=True)
    p.setflags(write=False)
    return MarkovOperator(p)


def _matrix(x):
    if isinstance(x, MarkovOperator):
        return x.p
    if isinstance(x, Generator):
        return x.q
    return np.asarray(x) if not is_exact(x) else x


class Propagator:
    """``t -> exp(t a)`` for a fixed square matrix, decomposed once.

    Uses the eigendecomposition when the eigenvector matrix has condition
    number at most ``EIG_COND_LIMIT`` and scaling-and-squaring Padé
    (``scipy.linalg.expm``) otherwise.
    """

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        self.route = "pade"
        self.cond = np.inf
        if self.a.size == 0:
            self.route = "eig"
            return
        try:
            w, v = np.linalg.eig(self.a)
            cond = np.linalg.cond(v)
        except np.linalg.LinAlgError:
            return
        if np.isfinite(cond) and cond <= EIG_COND_LIMIT:
            self.route, self.cond = "eig", cond
            self._w, self._v, self._vinv = w, v, np.linalg.inv(v)

    def __call__(self, t: float, route: str | None = None) -> np.ndarray:
        route = route or self.route
        if self.a.size == 0:
            return self.a.copy()
        if t == 0:
            return np.eye(self.a.shape[0])
        if route == "eig" and self.route == "eig":
            out = (self._v * np.exp(t * self._w)) @ self._vinv
            return out.real
        return scipy.linalg.expm(t * self.a)


def expm(A: Generator, t: float, certify_tol: float = CERTIFY_TOL,
         propagator: Propagator | None = None) -> MarkovOperator:
    """``exp(tA)`` as a certified Markov operator.

    The eigendecomposition route is tried first (when well conditioned);
    if its result fails certification the Padé route is used instead.

    Raises
    ------
    NegativeTime, ExponentialFailure
    """
    if t < 0:
        raise NegativeTime(f"semigroup is only defined for t >= 0, got {t}")
    if t == 0:
        return MarkovOperator(_frozen(np.eye(A.dim)))
    prop = propagator or Propagator(A.q)
    routes = ["eig", "pade"] if prop.route == "eig" else ["pade"]
    last = None
    for route in routes:
        p = prop(t, route)
        if np.all(np.isfinite(p)):
            try:
                return certify(p, certify_tol)
            except ExponentialFailure as exc:
                last = exc
    raise ExponentialFailure(f"both exponential routes failed at t={t}: {last}")


def _frozen(a):
    a.setflags(write=False)
    return a


def evolve(A: Generator, g0, grid: TimeGrid) -> np.ndarray:
    """Solutions ``g(t_j) = T(t_j) g0``, one row per grid point."""
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != (A.dim,):
        raise DimensionMismatch(f"observable has shape {g0.shape}, generator has dim {A.dim}")
    prop = Propagator(A.q)
    return np.array([expm(A, t, propagator=prop).p @ g0 for t in grid.points])


def jensen_check(M, g) -> float:
    """Pointwise minimum of ``M g^2 - (M g)^2``; nonnegative for Markov ``M``."""
    p = _matrix(M)
    g = np.asarray(g) if not is_exact(g) else g
    if g.shape != (p.shape[0],):
        raise DimensionMismatch(f"observable has shape {g.shape}, operator has dim {p.shape[0]}")
    return (p @ (g * g) - (p @ g) ** 2).min()


def uniformized(A: Generator, rate=None) -> MarkovOperator:
    """``I + A / rate`` with ``rate`` at least the largest exit rate.

    The result is Markov, commutes with ``A`` and stays rational when ``A``
    is exact, which makes it the natural operator for exact-mode checks.
    """
    exits = -np.diag(A.q)
    if rate is None:
        rate = max(exits.max(), 1) if A.dim else 1
        if A.exact:
            rate = Fraction(rate)
    if rate < exits.max():
        raise PreconditionError("uniformization rate must dominate every exit rate")
    eye = to_exact(np.eye(A.dim)) if A.exact else np.eye(A.dim)
    return MarkovOperator(eye + A.q / rate)


def write_trajectory_csv(path, grid: TimeGrid, values: np.ndarray) -> None:
    """CSV with header ``t,state_0,...`` and 17 significant digits."""
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"state_{i}" for i in range(values.shape[1])])
        for t, row in zip(grid.points, values):
            w.writerow([format(t, ".17g")] + [format(x, ".17g") for x in row])
