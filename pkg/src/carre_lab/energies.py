"""Energy hierarchy ``E_n`` and trajectory energies ``e_n(t) = E_n(T(t) g0)``.

``E_n`` is linear in the measure, so it is evaluated with whatever weights
are supplied: normalized, or a proportional ("raw") gauge. ``E_0`` is the
mass-corrected variance ``<fg, mu> - <f, mu><g, mu>/<1, mu>``, which is the
ordinary variance for a probability measure.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

import numpy as np
import scipy.integrate
import scipy.linalg

from .errors import (
    DegenerateE0,
    DimensionMismatch,
    GridTooCoarse,
    NonPositiveEnergy,
    NotNormal,
    PreconditionError,
    PreconditionViolated,
    TailTooHeavy,
)
from .exact import is_exact, to_exact
from .generator import Generator, ProbabilityMeasure, is_irreducible, stationary_measure
from .hilbert import NormalityReport, c_matrix, classify, spectral_gap
from .semigroup import Propagator, TimeGrid
from .squarefield import gamma_n

N_MAX = 8
ROUTES = ("explicit", "gamma", "c_power")


def _prepare(A: Generator, mu: ProbabilityMeasure, vecs):
    w = mu.weights
    if w.shape != (A.dim,):
        raise DimensionMismatch(f"measure has {w.shape[0]} weights, generator has dim {A.dim}")
    exact = A.exact or is_exact(w) or any(is_exact(v) for v in vecs)
    conv = to_exact if exact else (lambda a: np.asarray(a, dtype=float))
    q, w = conv(A.q), conv(w)
    out = []
    for v in vecs:
        v = conv(v)
        if v.shape != (A.dim,):
            raise DimensionMismatch(f"observable of shape {v.shape} does not match dim {A.dim}")
        out.append(v)
    return q, w, out


def _powers(q, v, n):
    seq = [v]
    for _ in range(n):
        seq.append(q @ seq[-1])
    return seq


def _explicit_from_powers(fp, gp, w, n):
    if n == 0:
        f, g = fp[0], gp[0]
        return (f * g * w).sum() - (f * w).sum() * (g * w).sum() / w.sum()
    acc = sum(comb(n, j) * (fp[n - j] * gp[j] * w).sum() for j in range(n + 1))
    return acc if n % 2 == 0 else -acc


def energy_explicit(A: Generator, mu: ProbabilityMeasure, n: int, f, g):
    """``E_n(f, g) = (-1)^n sum_j C(n, j) <A^{n-j} f * A^j g, mu>`` for ``n >= 1``.

    Returns a Fraction in exact mode (exact generator, weights or inputs).
    """
    if n < 0:
        raise PreconditionError("order must be nonnegative")
    q, w, (f, g) = _prepare(A, mu, [f, g])
    return _explicit_from_powers(_powers(q, f, n), _powers(q, g, n), w, n)


def energy_via_gamma(A: Generator, mu: ProbabilityMeasure, n: int, g, f=None):
    """``<Gamma_n(f, g), mu>`` (``f`` defaults to ``g``); only meaningful for ``n >= 1``."""
    if n < 1:
        raise PreconditionError("the square-field route needs n >= 1")
    f = g if f is None else f
    q, w, (f, g) = _prepare(A, mu, [f, g])
    return (gamma_n(q, n, f, g) * w).sum()


def energy_via_c(A: Generator, mu: ProbabilityMeasure, n: int, g, f=None,
                 tol: float = 1e-9, normality: NormalityReport | None = None):
    """``(f, C^n g)_mu``; equal to ``E_n`` only when ``A`` is normal.

    Raises
    ------
    NotNormal
        If ``A`` is not normal in ``L^2(mu)``.
    """
    if n < 1:
        raise PreconditionError("the C-power route needs n >= 1")
    normality = normality or classify(A, mu, tol)
    if not normality.is_normal:
        raise NotNormal(
            f"(g, C^n g) equals E_n only for normal generators "
            f"(commutator norm {normality.commutator_norm:.3e})"
        )
    f = g if f is None else f
    q, w, (f, g) = _prepare(A, mu, [f, g])
    c = c_matrix(Generator(q), ProbabilityMeasure(w, mu.normalized))
    v = g
    for _ in range(n):
        v = c @ v
    return (f * v * w).sum()


def energy_scale(A: Generator, n: int, g) -> float:
    """``||g||^2 ||A||^n``."""
    return float(np.max(np.abs(np.asarray(g, dtype=float)), initial=0.0)) ** 2 * float(A.norm) ** n


@dataclass(frozen=True)
class EnergyVector:
    """``E_0 .. E_N`` of one observable, with the routes evaluated per order."""

    values: tuple
    routes: tuple
    route_defect: float

    def __len__(self):
        return len(self.values)

    def __getitem__(self, n):
        return self.values[n]


def energy_vector(A: Generator, mu: ProbabilityMeasure, g, N: int,
                  routes=ROUTES, tol: float = 1e-9) -> EnergyVector:
    """Energies up to order ``N`` with cross-route agreement.

    ``explicit`` always provides the value. ``gamma`` and ``c_power``
    (normal generators only) are compared against it, and the largest
    relative disagreement ``|diff| / scale_n`` is recorded.
    """
    normality = classify(A, mu, tol) if "c_power" in routes else None
    q, w, (g,) = _prepare(A, mu, [g])
    gp = _powers(q, g, N)
    values, used, worst = [], [], 0.0
    for n in range(N + 1):
        val = _explicit_from_powers(gp, gp, w, n)
        here = ["explicit"]
        scale = max(energy_scale(A, n, g), np.finfo(float).tiny)
        if n >= 1 and "gamma" in routes:
            other = energy_via_gamma(A, mu, n, g)
            worst = max(worst, abs(float(other - val)) / scale)
            here.append("gamma")
        if n >= 1 and normality is not None and normality.is_normal:
            other = energy_via_c(A, mu, n, g, normality=normality)
            worst = max(worst, abs(float(other - val)) / scale)
            here.append("c_power")
        values.append(val)
        used.append(tuple(here))
    return EnergyVector(tuple(values), tuple(used), worst)


@dataclass(frozen=True, eq=False)
class EnergyTrajectory:
    """``e_n(t_j)`` for ``n = 0..N`` (rows) and grid points ``t_j`` (columns)."""

    generator: Generator
    mu: ProbabilityMeasure
    grid: TimeGrid
    table: np.ndarray
    g0: np.ndarray
    N: int
    normality: NormalityReport | None
    route_defect: float = 0.0

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def row(self, n: int) -> np.ndarray:
        return self.table[n]


def _centered_evolution(q, w, g0):
    """Map ``t -> T(t) g0 - const`` computed inside the invariant subspace ``mu^perp``.

    The constant part of ``g0`` is stationary and carries no energy, so it is
    removed first; the remainder decays and is propagated by the generator
    restricted to ``mu^perp``. This keeps relative accuracy when ``g(t)``
    is nearly constant at large ``t``.
    """
    m = q.shape[0]
    centered = g0 - (g0 @ w) / w.sum()
    if m == 1:
        return lambda t: np.zeros(1)
    basis = scipy.linalg.null_space(w[None, :])
    prop = Propagator(basis.T @ q @ basis)
    coords = basis.T @ centered
    return lambda t: basis @ (prop(t) @ coords)


def energy_trajectory(A: Generator, mu: ProbabilityMeasure | None, g0, grid: TimeGrid,
                      N: int = 4, n_max: int = N_MAX, sample_fraction: float = 0.1,
                      seed: int = 0, tol: float = 1e-9) -> EnergyTrajectory:
    """Tabulate ``e_n(t) = E_n(T(t) g0)`` on ``grid``.

    ``mu`` defaults to the normalized stationary measure. A fraction of the
    cells is recomputed through the square-field (and, for normal ``A``, the
    ``C``-power) route; the worst disagreement is stored as ``route_defect``.
    """
    if N < 0 or N > n_max:
        raise PreconditionError(f"order N={N} outside 0..{n_max} (float-mode limit)")
    A = A.to_float()
    if mu is None:
        mu = stationary_measure(A)
    q = A.q
    w = np.asarray(mu.weights, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != (A.dim,):
        raise DimensionMismatch(f"observable has shape {g0.shape}, generator has dim {A.dim}")
    if not np.all(np.isfinite(g0)):
        raise PreconditionError("initial observable must be finite")
    normality = classify(A, mu, tol) if np.all(w > 0) else None
    flow = _centered_evolution(q, w, g0)
    times = grid.points
    table = np.empty((N + 1, times.size))
    states = []
    for j, t in enumerate(times):
        g = flow(t)
        states.append(g)
        gp = _powers(q, g, N)
        for n in range(N + 1):
            table[n, j] = _explicit_from_powers(gp, gp, w, n)

    rng = np.random.default_rng(seed)
    cells = [(n, j) for n in range(1, N + 1) for j in range(times.size)]
    k = int(np.ceil(sample_fraction * len(cells))) if cells else 0
    worst = 0.0
    fmu = ProbabilityMeasure(w, mu.normalized)
    for idx in rng.choice(len(cells), size=k, replace=False) if k else []:
        n, j = cells[idx]
        g = states[j]
        scale = max(energy_scale(A, n, g), np.finfo(float).tiny)
        worst = max(worst, abs(energy_via_gamma(A, fmu, n, g) - table[n, j]) / scale)
        if normality is not None and normality.is_normal:
            alt = energy_via_c(A, fmu, n, g, normality=normality)
            worst = max(worst, abs(alt - table[n, j]) / scale)
    table.setflags(write=False)
    return EnergyTrajectory(A, mu, grid, table, g0, N, normality, float(worst))


def trajectory_energies(A: Generator, mu: ProbabilityMeasure, g0, t: float, N: int) -> np.ndarray:
    """``e_0(t) .. e_N(t)`` at a single time, through the same evolution as the table."""
    A = A.to_float()
    w = np.asarray(mu.weights, dtype=float)
    g = _centered_evolution(A.q, w, np.asarray(g0, dtype=float))(t)
    gp = _powers(A.q, g, N)
    return np.array([_explicit_from_powers(gp, gp, w, n) for n in range(N + 1)])


# ---------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    """One theorem check.

    ``status`` is ``pass``, ``fail``, ``witness`` (a theorem outside its
    hypotheses produced counterexamples, reported not asserted),
    ``precondition-unmet`` (hypotheses do not hold; nothing asserted) or
    ``error`` (the input cannot support the check, e.g. a grid too coarse).
    """

    check: str
    status: str
    worst_defect: float
    tolerance: float
    location: tuple | None = None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status in ("pass", "witness", "precondition-unmet")

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "status": self.status,
            "pass": self.passed,
            "worst_defect": _json_float(self.worst_defect),
            "tolerance": self.tolerance,
            "location": list(self.location) if self.location is not None else None,
            "details": _jsonable(self.details),
        }


def _json_float(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(obj)
    if hasattr(obj, "numerator") and hasattr(obj, "denominator"):
        return _json_float(obj)
    return obj


@dataclass
class DecayReport:
    """All checks of one verification run plus the fitted rate and bound margin."""

    checks: list
    fitted_rate: float | None = None
    polynomial_margin: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_records(self) -> list:
        return [c.to_dict() for c in self.checks]

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_records(), **kw)


def _stencil(t, y, j, k):
    """Three-point derivative at ``t[j]`` from ``t[j-k], t[j], t[j+k]`` (nonuniform)."""
    h1, h2 = t[j] - t[j - k], t[j + k] - t[j]
    return (-h2 / (h1 * (h1 + h2)) * y[j - k]
            + (h2 - h1) / (h1 * h2) * y[j]
            + h1 / (h2 * (h1 + h2)) * y[j + k])


def check_derivative_identity(traj: EnergyTrajectory, tol: float = 1e-8,
                              min_order: float = 1.5, max_order: float = 3.0) -> CheckResult:
    """``d/dt e_n = -e_{n+1}`` on the grid by three-point differences.

    Defects are measured relative to ``e_{n+1}(0)``. The convergence order
    is estimated by comparing the stencil over neighbours ``j +- 1`` with the
    stencil over ``j +- 2``. An order in ``[min_order, max_order]`` means the
    stencil is in its asymptotic regime and the check passes; so does a
    defect already below ``tol``. Otherwise the grid cannot resolve the
    identity and ``GridTooCoarse`` is raised. (Steps far beyond the decay
    time make the coarse error explode, which shows up as a large order.)
    """
    t, tab = traj.times, traj.table
    if traj.N < 1 or t.size < 5:
        raise GridTooCoarse("derivative check needs N >= 1 and at least 5 grid points")
    worst, where, orders = 0.0, None, {}
    for n in range(traj.N):
        y, target = tab[n], -tab[n + 1]
        scale = max(abs(tab[n + 1, 0]), abs(tab[n, 0]), np.finfo(float).tiny)
        fine, coarse = [], []
        for j in range(2, t.size - 2):
            fine.append(abs(_stencil(t, y, j, 1) - target[j]) / scale)
            coarse.append(abs(_stencil(t, y, j, 2) - target[j]) / scale)
        fine, coarse = np.array(fine), np.array(coarse)
        j_worst = int(np.argmax(fine))
        if fine[j_worst] > worst:
            worst, where = float(fine[j_worst]), (n, float(t[j_worst + 2]))
        if fine.sum() > 0 and coarse.sum() > 0:
            orders[n] = float(np.log2(coarse.sum() / fine.sum()))
        else:
            orders[n] = float("nan")
    ok = all(not (o < min_order or o > max_order) for o in orders.values())
    if not ok and worst > tol:
        raise GridTooCoarse(
            f"finite-difference defect {worst:.3e} is truncation dominated "
            f"(estimated orders {orders})"
        )
    return CheckResult("derivative_identity", "pass", worst, tol, where,
                       {"estimated_order": orders})


def derivative_defect(A: Generator, mu: ProbabilityMeasure, g0, t: float, n: int, h: float) -> float:
    """Relative defect of the central difference ``(e_n(t+h) - e_n(t-h)) / 2h`` against ``-e_{n+1}(t)``."""
    if h <= 0 or t - h < 0:
        raise PreconditionError("need h > 0 and t - h >= 0")
    plus = trajectory_energies(A, mu, g0, t + h, n + 1)
    minus = trajectory_energies(A, mu, g0, t - h, n + 1)
    here = trajectory_energies(A, mu, g0, t, n + 1)
    d = (plus[n] - minus[n]) / (2 * h)
    return abs(d + here[n + 1]) / max(abs(here[n + 1]), np.finfo(float).tiny)


def derivative_order(A: Generator, mu: ProbabilityMeasure, g0, t: float, n: int, hs) -> float:
    """Fitted slope of ``log defect`` against ``log h``; about 2 for central differences."""
    hs = np.asarray(hs, dtype=float)
    d = np.array([derivative_defect(A, mu, g0, t, n, h) for h in hs])
    return float(np.polyfit(np.log(hs), np.log(d), 1)[0])


def check_integral_identity(traj: EnergyTrajectory, tol: float = 1e-4,
                            reach: float = 1e-8) -> CheckResult:
    """``int_0^tmax e_{n+1} dt = e_n(0) - e_n(tmax)`` by composite Simpson quadrature.

    The grid must reach the decayed regime, ``e_n(tmax) <= reach * e_n(0)``,
    unless ``e_{n+1}`` vanishes identically (frozen dynamics); otherwise
    ``TailTooHeavy``. The trapezoid defect is reported alongside.
    """
    t, tab = traj.times, traj.table
    if traj.N < 1 or t.size < 3:
        raise PreconditionError("integral check needs N >= 1 and at least 3 grid points")
    worst, where, trap = 0.0, None, {}
    for n in range(traj.N):
        e0, et, nxt = tab[n, 0], tab[n, -1], tab[n + 1]
        frozen = not np.any(nxt)
        if not frozen and et > reach * abs(e0):
            raise TailTooHeavy(
                f"e_{n}(t_max) = {et:.3e} exceeds {reach:g} * e_{n}(0); extend the grid"
            )
        scale = max(abs(e0), np.finfo(float).tiny)
        simpson = scipy.integrate.simpson(nxt, x=t)
        trapz = scipy.integrate.trapezoid(nxt, x=t)
        target = e0 - et
        d = abs(simpson - target) / scale
        trap[n] = abs(trapz - target) / scale
        if d > worst:
            worst, where = float(d), (n, float(t[-1]))
    status = "pass" if worst <= tol else "fail"
    return CheckResult("integral_identity", status, worst, tol, where, {"trapezoid_defect": trap})


def check_log_convex_in_n(A: Generator, mu: ProbabilityMeasure, g, N: int, tol: float = 1e-9,
                          require_normal: bool = False,
                          normality: NormalityReport | None = None) -> CheckResult:
    """Log-convexity ``E_{n+1} E_{n-1} >= E_n^2`` and the chain ``(E_n/E_0)^{1/n}`` increasing.

    Asserted for normal generators. For non-normal ones the check runs as a
    witness: every strict violation is reported and the status is
    ``witness``, unless ``require_normal`` turns that into ``fail``.

    Raises
    ------
    DegenerateE0
        If ``E_0(g) <= tol * scale_0``.
    """
    if N < 2:
        raise PreconditionError("log-convexity in n needs N >= 2")
    normality = normality or classify(A, mu, tol)
    ev = energy_vector(A, mu, g, N, routes=("explicit",))
    E = list(ev.values)
    exact = isinstance(E[0], Fraction)
    s0 = energy_scale(A, 0, g)
    if E[0] <= tol * s0:
        raise DegenerateE0(f"E_0(g) = {float(E[0]):.3e} is not positive")
    gaps, violations, worst, where = [], [], 0.0, None
    for n in range(1, N):
        gap = E[n + 1] * E[n - 1] - E[n] ** 2
        scale = energy_scale(A, n + 1, g) * energy_scale(A, n - 1, g)
        rel = -float(gap) / max(scale, np.finfo(float).tiny)
        gaps.append(gap)
        if rel > worst:
            worst, where = rel, (n,)
        strict = gap < 0 if exact else rel > tol
        if strict:
            violations.append({"n": n, "gap": float(gap), "exact_gap": str(gap) if exact else None})
    chain = []
    Ef = [max(float(x), 0.0) for x in E]
    for n in range(1, N + 1):
        chain.append((Ef[n] / Ef[0]) ** (1.0 / n))
    chain_bad = [n + 1 for n in range(len(chain) - 1)
                 if chain[n + 1] < chain[n] * (1 - tol) - tol]
    if not violations and chain_bad:
        violations.extend({"n": n, "chain": True} for n in chain_bad)
    details = {
        "energies": [float(x) for x in E],
        "gaps": [float(x) for x in gaps],
        "root_chain": chain,
        "classification": normality.classification.value,
        "violations": violations,
    }
    if exact:
        details["exact_gaps"] = [str(x) for x in gaps]
    if normality.is_normal:
        status = "fail" if violations else "pass"
    else:
        status = "fail" if require_normal else "witness"
    return CheckResult("log_convex_in_n", status, max(worst, 0.0), tol, where, details)


def polynomial_bound(e_n0: float, e_00: float, n: int, t):
    """``(e_n(0)^{-1/n} + (t/n) e_0(0)^{-1/n})^{-n}``, written to be exact at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    return e_n0 * (1.0 + (t / n) * (e_n0 / e_00) ** (1.0 / n)) ** (-n)


def check_polynomial_bound(traj: EnergyTrajectory, normality: NormalityReport | None = None,
                           slack: float = 1e-9) -> CheckResult:
    """``e_n(t) <= (e_n(0)^{-1/n} + (t/n) e_0(0)^{-1/n})^{-n}`` at every grid point.

    ``margin = bound / value - 1`` is reported (its minimum is 0, attained
    at ``t = 0``).

    Raises
    ------
    PreconditionViolated
        Non-normal generator, or a nonpositive initial energy.
    """
    normality = normality or traj.normality
    if normality is None or not normality.is_normal:
        raise PreconditionViolated("polynomial decay bound needs a normal generator")
    tab, t = traj.table, traj.times
    e00 = tab[0, 0]
    if traj.N < 1 or not e00 > 0:
        raise PreconditionViolated("polynomial decay bound needs e_0(0) > 0 and N >= 1")
    worst, where, margin = 0.0, None, np.inf
    for n in range(1, traj.N + 1):
        en0 = tab[n, 0]
        if not en0 > 0:
            raise PreconditionViolated(f"polynomial decay bound needs e_{n}(0) > 0")
        bound = polynomial_bound(en0, e00, n, t)
        val = tab[n]
        excess = (val - bound) / bound
        j = int(np.argmax(excess))
        if excess[j] > worst:
            worst, where = float(excess[j]), (n, float(t[j]))
        pos = val > 0
        if pos.any():
            margin = min(margin, float(np.min(bound[pos] / val[pos] - 1)))
    status = "pass" if worst <= slack else "fail"
    return CheckResult("polynomial_bound", status, worst, slack, where, {"min_margin": margin})


def _interpolation_defects(t, y):
    """``y_j - [(h2 y_{j-1} + h1 y_{j+1}) / (h1 + h2)]`` at interior points; <= 0 for convex ``y``."""
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return y[1:-1] - (h2 * y[:-2] + h1 * y[2:]) / (h1 + h2)


def check_log_convex_in_time(traj: EnergyTrajectory, tol: float = 1e-9,
                             require_normal: bool = False) -> CheckResult:
    """``log e_n`` convex on the grid and ``(e_n(t)/e_n(0))^{1/t}`` nondecreasing, at most 1.

    The empirical limit ``-log`` of the last ratio is reported next to the
    spectral gap; no relation between them is asserted.

    Raises
    ------
    NonPositiveEnergy
        If some ``e_n(t_j) <= 0``.
    """
    t, tab = traj.times, traj.table
    worst, where, lam_hat = 0.0, None, {}
    violations = []
    for n in range(traj.N + 1):
        row = tab[n]
        if not np.all(row > 0):
            j = int(np.argmin(row))
            raise NonPositiveEnergy(f"e_{n}({t[j]:g}) = {row[j]:.3e} is not positive")
        L = np.log(row)
        if t.size >= 3:
            d = _interpolation_defects(t, L) / np.maximum(1.0, np.abs(L[1:-1]))
            j = int(np.argmax(d))
            if d[j] > worst:
                worst, where = float(d[j]), (n, float(t[j + 1]))
            if d[j] > tol:
                violations.append({"n": n, "t": float(t[j + 1]), "kind": "log_convexity"})
        pos = t > 0
        ratio = np.exp((L[pos] - L[0]) / t[pos])
        if ratio.size:
            drops = (ratio[:-1] - ratio[1:]) / np.maximum(ratio[:-1], np.finfo(float).tiny)
            over = ratio.max() - 1.0
            if drops.size and drops.max() > tol:
                violations.append({"n": n, "kind": "ratio_decrease", "amount": float(drops.max())})
            if over > 1e-12:
                violations.append({"n": n, "kind": "ratio_above_one", "amount": float(over)})
            worst = max(worst, float(drops.max()) if drops.size else 0.0, over)
            lam_hat[n] = float(-np.log(ratio[-1]))
    try:
        gap = spectral_gap(traj.generator) if is_irreducible(traj.generator) else None
    except PreconditionError:
        gap = None
    except Exception:  # noqa: BLE001  # eigen failure on degenerate input
        gap = None
    details = {"lambda_hat": lam_hat, "spectral_gap": gap, "violations": violations}
    normal = traj.normality is not None and traj.normality.is_normal
    if normal:
        status = "fail" if violations else "pass"
    else:
        status = "fail" if require_normal else "witness"
    return CheckResult("log_convex_in_time", status, worst, tol, where, details)


def _row_scale(row):
    # e_n(0) for decaying rows; the row maximum when a non-normal row grows from 0
    return max(abs(row[0]), np.abs(row).max(), np.finfo(float).tiny)


def check_monotone(traj: EnergyTrajectory, tol: float = 1e-10) -> CheckResult:
    """``e_n(t_{j+1}) <= e_n(t_j) + tol * e_n(0)`` for every row (``max |e_n|`` if larger)."""
    worst, where = 0.0, None
    for n in range(traj.N + 1):
        row = traj.table[n]
        if row.size < 2:
            continue
        scale = _row_scale(row)
        inc = np.diff(row) / scale
        j = int(np.argmax(inc))
        if inc[j] > worst:
            worst, where = float(inc[j]), (n, float(traj.times[j + 1]))
    return CheckResult("monotone_decay", "pass" if worst <= tol else "fail", worst, tol, where)


def check_convex(traj: EnergyTrajectory, tol: float = 1e-10) -> CheckResult:
    """Each row lies below its chords on the grid, within ``tol * e_n(0)``."""
    worst, where = 0.0, None
    for n in range(traj.N + 1):
        row = traj.table[n]
        if row.size < 3:
            continue
        d = _interpolation_defects(traj.times, row) / _row_scale(row)
        j = int(np.argmax(d))
        if d[j] > worst:
            worst, where = float(d[j]), (n, float(traj.times[j + 1]))
    return CheckResult("convex_in_time", "pass" if worst <= tol else "fail", worst, tol, where)


def fit_decay_rate(traj: EnergyTrajectory, n: int, t_min: float = 0.0,
                   t_max: float = np.inf) -> float:
    """Least-squares slope of ``-log e_n(t)`` over ``t_min <= t <= t_max``."""
    t = traj.times
    mask = (t >= t_min) & (t <= t_max)
    if mask.sum() < 2:
        raise PreconditionError("decay-rate window needs at least two grid points")
    row = traj.table[n][mask]
    if not np.all(row > 0):
        raise NonPositiveEnergy(f"e_{n} is not positive on the fitting window")
    return float(-np.polyfit(t[mask], np.log(row), 1)[0])


def write_energy_csv(path, traj: EnergyTrajectory) -> None:
    """CSV with header ``t,e0,...,eN`` and 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t"] + [f"e{n}" for n in range(traj.N + 1)])
        for j, t in enumerate(traj.times):
            w.writerow([format(t, ".17g")] + [format(x, ".17g") for x in traj.table[:, j]])
