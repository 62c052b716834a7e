"""Run the whole theorem suite on one generator and observable."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from .energies import (
    CheckResult,
    DecayReport,
    check_convex,
    check_derivative_identity,
    check_integral_identity,
    check_log_convex_in_n,
    check_log_convex_in_time,
    check_monotone,
    check_polynomial_bound,
    energy_scale,
    energy_trajectory,
    energy_vector,
    fit_decay_rate,
)
from .errors import GridTooCoarse, NumericalFailure, PreconditionError, TailTooHeavy
from .generator import Generator, ProbabilityMeasure, is_irreducible
from .hilbert import poincare_constant
from .semigroup import TimeGrid, expm, uniformized
from .squarefield import check_parallelogram, check_rescaled_limit, gamma_n, sup_norm

RESCALED_TIMES = tuple(2.0**-k for k in range(3, 13))


def _guard(name: str, fn) -> CheckResult:
    """Run one check, turning precondition failures into a status instead of an exception."""
    try:
        return fn()
    except (GridTooCoarse, TailTooHeavy, NumericalFailure) as exc:
        return CheckResult(name, "error", float("nan"), float("nan"), None, {"reason": str(exc)})
    except PreconditionError as exc:
        return CheckResult(name, "precondition-unmet", float("nan"), float("nan"), None,
                           {"reason": f"{type(exc).__name__}: {exc}"})


def check_gamma_positivity(A: Generator, g, N: int, tol: float, samples: int = 20,
                           seed: int = 0) -> CheckResult:
    """``min Gamma_n(h, h) >= -tol ||h||^2 ||A||^n`` for ``h = g`` and random observables."""
    rng = np.random.default_rng(seed)
    exact = A.exact
    obs = [g] + ([] if exact else [rng.normal(size=A.dim) for _ in range(samples)])
    worst, where = 0.0, None
    for i, h in enumerate(obs):
        for n in range(1, N + 1):
            val = gamma_n(A, n, h, h).min()
            rel = -float(val) / max(energy_scale(A, n, h), np.finfo(float).tiny)
            if exact and val < 0:
                rel = max(rel, np.finfo(float).tiny)
            if rel > worst:
                worst, where = rel, (n, i)
    threshold = 0.0 if exact else tol
    status = "pass" if worst <= threshold else "fail"
    return CheckResult("gamma_positivity", status, worst, threshold, where,
                       {"observables": len(obs), "exact": exact})


def _operator_list(A: Generator, depth: int, rng):
    if A.exact:
        u = uniformized(A)
        return [u] * depth
    return [expm(A, float(t)) for t in rng.uniform(0.05, 2.0, size=depth)]


def check_parallelogram_suite(A: Generator, N: int, samples: int = 10, seed: int = 0,
                              tol: float = 1e-12) -> CheckResult:
    """Parallelogram identity of ``G_n`` for random commuting Markov operators, depth <= 4."""
    rng = np.random.default_rng(seed)
    worst, where = 0.0, None
    for depth in range(1, min(N, 4) + 1):
        for i in range(samples):
            ops = _operator_list(A, depth, rng)
            f, g = rng.normal(size=A.dim), rng.normal(size=A.dim)
            if A.exact:
                f = np.array([Fraction(int(x * 8), 8) for x in f], dtype=object)
                g = np.array([Fraction(int(x * 8), 8) for x in g], dtype=object)
            scale = 2.0**depth * max(sup_norm(f), sup_norm(g), 1e-300) ** 2
            d = float(check_parallelogram(ops, f, g)) / scale
            if d > worst:
                worst, where = d, (depth, i)
    threshold = 0.0 if A.exact else tol
    return CheckResult("parallelogram", "pass" if worst <= threshold else "fail", worst, threshold,
                       where, {"exact": A.exact})


def check_rescaled_limit_suite(A: Generator, g, N: int, seed: int = 0,
                               min_order: float = 0.9) -> CheckResult:
    """``(1/t) G_n^k(T(t), ...) -> G_n^{k+1}(...)`` at first order, ``n <= 3``, ``k < n``."""
    A = A.to_float()
    rng = np.random.default_rng(seed)
    g = np.asarray(g, dtype=float)
    f = rng.normal(size=A.dim)
    orders, worst, where, ok = {}, 0.0, None, True
    for n in range(1, min(N, 3) + 1):
        for k in range(n):
            ops = [expm(A, float(s)) for s in rng.uniform(0.1, 1.0, size=n - k - 1)]
            rep = check_rescaled_limit(A, ops, n, k, f, g, RESCALED_TIMES)
            orders[f"{n},{k}"] = rep.order
            ok = ok and rep.passed(min_order)
            err = max(rep.errors) / max(rep.scale, 1e-300)
            if err > worst:
                worst, where = err, (n, k)
    return CheckResult("rescaled_limit", "pass" if ok else "fail", worst, min_order, where,
                       {"orders": orders})


def check_route_agreement(A: Generator, mu: ProbabilityMeasure, g, N: int, tol: float,
                          sampled: float = 0.0) -> CheckResult:
    """Static routes agree exactly (rational ``A``) or to ``tol``; the float trajectory always to ``tol``."""
    ev = energy_vector(A, mu, g, N)
    limit = 0.0 if A.exact else tol
    ok = ev.route_defect <= limit and sampled <= tol
    worst = max(float(ev.route_defect), sampled)
    return CheckResult("route_agreement", "pass" if ok else "fail", worst, limit, None,
                       {"routes": [list(r) for r in ev.routes], "static_defect": float(ev.route_defect),
                        "trajectory_sampled": sampled, "trajectory_tolerance": tol})


def check_decay_rate(traj, A: Generator, mu: ProbabilityMeasure, seed: int = 0) -> tuple:
    """Fitted rate of ``e_1`` against the Poincaré constant (at least 95% of it for normal ``A``)."""
    if traj.N < 1:
        raise PreconditionError("decay-rate fit needs N >= 1")
    row, t = traj.table[1], traj.times
    usable = (t > 0) & (row > 1e-200 * max(row[0], 1e-300))
    if usable.sum() < 4:
        raise PreconditionError("e_1 vanishes on the grid; no decay rate to fit")
    tt = t[usable]
    lo = tt[len(tt) // 2]
    rate = fit_decay_rate(traj, 1, lo, tt[-1])
    if not is_irreducible(A):
        raise PreconditionError("Poincaré constant needs an irreducible generator")
    pc = poincare_constant(A.to_float(), mu, seed=seed)
    details = {"fitted_rate": rate, "window": [float(lo), float(tt[-1])], **pc.to_dict()}
    if pc.order_specific:
        return CheckResult("decay_rate", "precondition-unmet", float("nan"), 0.05, None,
                           {"reason": "non-normal generator: exponential rate not guaranteed",
                            **details}), rate
    shortfall = max(0.0, 1.0 - rate / pc.constant) if pc.constant > 0 else 0.0
    status = "pass" if shortfall <= 0.05 and pc.certified else "fail"
    return CheckResult("decay_rate", status, shortfall, 0.05, None, details), rate


def run_verification(A: Generator, mu: ProbabilityMeasure, g0, grid: TimeGrid, N: int = 4,
                     tol: float = 1e-9, require_normal: bool = False, seed: int = 0,
                     traj=None) -> DecayReport:
    """Every check on one instance; preconditions that fail become statuses, not exceptions.

    ``A`` may be exact, in which case positivity, the parallelogram identity,
    route agreement and log-convexity in ``n`` are decided in rational
    arithmetic; the trajectory checks always run in floating point.
    """
    fmu = ProbabilityMeasure(np.asarray(mu.weights, dtype=float), mu.normalized)
    g_float = np.asarray(g0, dtype=float)
    if traj is None:
        traj = energy_trajectory(A, fmu, g_float, grid, N=N, seed=seed, tol=tol)
    static_n = min(N, 6)
    checks = [
        _guard("gamma_positivity", lambda: check_gamma_positivity(A, g0, static_n, tol, samples=0)),
        _guard("parallelogram", lambda: check_parallelogram_suite(A, N, seed=seed)),
        _guard("rescaled_limit", lambda: check_rescaled_limit_suite(A, g_float, N, seed=seed)),
        _guard("route_agreement",
               lambda: check_route_agreement(A, mu, g0, static_n, tol, traj.route_defect)),
        _guard("derivative_identity", lambda: check_derivative_identity(traj)),
        _guard("integral_identity", lambda: check_integral_identity(traj)),
        _guard("monotone_decay", lambda: check_monotone(traj)),
        _guard("convex_in_time", lambda: check_convex(traj)),
        _guard("log_convex_in_n",
               lambda: check_log_convex_in_n(A, mu, g0, max(N, 2), tol, require_normal)),
        _guard("log_convex_in_time", lambda: check_log_convex_in_time(traj, tol, require_normal)),
        _guard("polynomial_bound", lambda: check_polynomial_bound(traj)),
    ]
    fitted = []

    def decay():
        res, rate = check_decay_rate(traj, A, fmu, seed)
        fitted.append(rate)
        return res

    checks.append(_guard("decay_rate", decay))
    margin = None
    for c in checks:
        if c.check == "polynomial_bound" and "min_margin" in c.details:
            margin = c.details["min_margin"]
    return DecayReport(checks, fitted[0] if fitted else None, margin)


def exit_code(report: DecayReport) -> int:
    if any(c.status == "error" for c in report.checks):
        return 2
    return 0 if report.passed else 1

