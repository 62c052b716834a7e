"""Command-line front end: ``carre-lab <analyze|evolve|verify|sweep|example>``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .energies import (
    N_MAX,
    energy_explicit,
    energy_trajectory,
    fit_decay_rate,
    write_energy_csv,
)
from .errors import CarreLabError, PreconditionError, SpecParseError
from .exact import to_exact, to_fraction
from .generator import (
    Generator,
    ProbabilityMeasure,
    cycle_laplacian,
    load_generator_spec,
    loop_chain,
    random_generator,
    stationary_measure,
    validate_generator,
)
from .hilbert import classify, poincare_constant, spectral_gap
from .semigroup import TimeGrid, evolve, write_trajectory_csv
from .squarefield import gamma_n, positivity_scale
from .verify import exit_code, run_verification

SCHEMA_VERSION = 1
DEFAULT_TOL = 1e-9
DEFAULT_GRID = "geo:1e-3:20:200"


@dataclass
class RunConfig:
    generator: Generator
    g0: np.ndarray
    grid: TimeGrid
    order: int
    gauge: str
    tol: float
    out: Path | None
    seed: int
    exact: bool
    require_normal: bool
    plots: bool

    @property
    def mu(self) -> ProbabilityMeasure:
        return stationary_measure(self.generator, normalize=self.gauge == "normalized")


def default_tolerance() -> float:
    raw = os.environ.get("CARRE_LAB_TOL")
    if raw is None:
        return DEFAULT_TOL
    try:
        tol = float(raw)
    except ValueError:
        raise PreconditionError(f"CARRE_LAB_TOL={raw!r} is not a number") from None
    if not (tol > 0 and np.isfinite(tol)):
        raise PreconditionError("CARRE_LAB_TOL must be a positive finite number")
    return tol


def _number(text: str, exact: bool):
    try:
        return to_fraction(text) if exact else float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise PreconditionError(f"{text!r} is not a number") from None


def builtin_generator(words, exact: bool = False) -> Generator:
    """``loop A B C``, ``cycle M D``, ``random M SEED [DENSITY]`` or ``zero M``."""
    kind, *params = words
    try:
        if kind == "loop" and len(params) == 3:
            return loop_chain(*(_number(p, exact) for p in params), exact=exact)
        if kind == "cycle" and len(params) == 2:
            return cycle_laplacian(int(params[0]), _number(params[1], exact))
        if kind == "random" and len(params) in (2, 3):
            density = float(params[2]) if len(params) == 3 else 1.0
            return random_generator(int(params[0]), int(params[1]), density)
        if kind == "zero" and len(params) == 1:
            m = int(params[0])
            return validate_generator(to_exact(np.zeros((m, m))) if exact else np.zeros((m, m)))
    except ValueError as exc:
        raise PreconditionError(f"bad builtin parameters {params}: {exc}") from None
    raise PreconditionError(f"unknown builtin {' '.join(words)!r}")


def parse_observable(text: str, m: int, exact: bool = False):
    """``1,0,0`` | ``basis:I`` | ``random:SEED`` | ``alpha:X`` (the vector ``(1, 2X, 4X)``)."""
    kind, _, arg = text.partition(":")
    if kind == "basis" and arg:
        i = int(arg)
        if not 0 <= i < m:
            raise PreconditionError(f"basis index {i} outside 0..{m - 1}")
        g = np.zeros(m)
        g[i] = 1.0
        return to_exact(g) if exact else g
    if kind == "random" and arg:
        g = np.random.default_rng(int(arg)).normal(size=m)
        return to_exact(g) if exact else g
    if kind == "alpha" and arg:
        if m != 3:
            raise PreconditionError("alpha observables are defined on three states")
        a = _number(arg, exact)
        vals = [1, 2 * a, 4 * a]
        return np.array(vals, dtype=object) if exact else np.array(vals, dtype=float)
    vals = [_number(x.strip(), exact) for x in text.split(",")]
    if len(vals) != m:
        raise PreconditionError(f"observable has {len(vals)} entries, generator has dim {m}")
    return np.array(vals, dtype=object if exact else float)


def build_config(args) -> RunConfig:
    tol = args.tol if args.tol is not None else default_tolerance()
    if args.spec and args.builtin:
        raise PreconditionError("give either --spec or --builtin, not both")
    if args.spec:
        A = load_generator_spec(args.spec)
    elif args.builtin:
        A = builtin_generator(args.builtin, args.exact)
    else:
        raise PreconditionError("a generator is required (--spec FILE or --builtin KIND ...)")
    if args.exact:
        A = A.to_exact()
    if not 0 <= args.order <= N_MAX:
        raise PreconditionError(f"--order must lie in 0..{N_MAX}, got {args.order}")
    g0 = parse_observable(args.g0, A.dim, args.exact)
    return RunConfig(A, g0, TimeGrid.parse(args.grid), args.order, args.gauge, tol,
                     Path(args.out) if args.out else None, args.seed, args.exact,
                     args.require_normal, not args.no_plots)


def _emit(payload: dict, out: Path | None, name: str) -> None:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **payload}, indent=2)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")


def analyze_payload(A: Generator, mu: ProbabilityMeasure, tol: float, seed: int = 0) -> dict:
    report = classify(A, mu, tol)
    payload = {"dim": A.dim, **report.to_dict(),
               "stationary_measure": [float(x) for x in mu.weights]}
    try:
        payload["spectral_gap"] = spectral_gap(A.to_float())
    except CarreLabError as exc:
        payload["spectral_gap"] = None
        payload["spectral_gap_error"] = str(exc)
    try:
        pc = poincare_constant(A.to_float(), mu, tol, seed=seed)
        payload["poincare"] = pc.constant
        payload["poincare_order_specific"] = pc.order_specific
        payload["poincare_certified"] = pc.certified
    except CarreLabError as exc:
        payload["poincare"] = None
        payload["poincare_error"] = str(exc)
    return payload


def cmd_analyze(cfg: RunConfig) -> int:
    _emit(analyze_payload(cfg.generator, cfg.mu, cfg.tol, cfg.seed), cfg.out, "analysis.json")
    return 0


def cmd_evolve(cfg: RunConfig) -> int:
    out = cfg.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    A = cfg.generator.to_float()
    mu = cfg.mu
    fmu = ProbabilityMeasure(np.asarray(mu.weights, dtype=float), mu.normalized)
    g0 = np.asarray(cfg.g0, dtype=float)
    states = evolve(A, g0, cfg.grid)
    traj = energy_trajectory(A, fmu, g0, cfg.grid, N=cfg.order, seed=cfg.seed, tol=cfg.tol)
    write_trajectory_csv(out / "trajectory.csv", cfg.grid, states)
    write_energy_csv(out / "energies.csv", traj)
    if cfg.plots:
        from .plotting import plot_energies, plot_trajectory

        plot_energies(traj, out / "energies.png")
        plot_trajectory(cfg.grid.points, states, out / "trajectory.png")
    rate = None
    if traj.N >= 1:
        try:
            rate = fit_decay_rate(traj, 1, traj.times[-1] / 10, traj.times[-1])
        except CarreLabError:
            rate = None
    summary = {
        "e0_initial": float(traj.table[0, 0]),
        f"e{traj.N}_final": float(traj.table[traj.N, -1]),
        "fitted_rate": rate,
        "rows": len(cfg.grid),
        "route_defect": traj.route_defect,
    }
    _emit(summary, out, "summary.json")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    report = run_verification(cfg.generator, cfg.mu, cfg.g0, cfg.grid, N=cfg.order, tol=cfg.tol,
                              require_normal=cfg.require_normal, seed=cfg.seed)
    code = exit_code(report)
    payload = {"exit_code": code, "fitted_rate": report.fitted_rate,
               "polynomial_margin": report.polynomial_margin, "checks": report.to_records()}
    _emit(payload, cfg.out, "report.json")
    if cfg.out is not None:
        (cfg.out / "checks.json").write_text(report.to_json(indent=2) + "\n")
        if cfg.plots:
            from .plotting import plot_energies

            fmu = ProbabilityMeasure(np.asarray(cfg.mu.weights, dtype=float), cfg.mu.normalized)
            traj = energy_trajectory(cfg.generator, fmu, np.asarray(cfg.g0, dtype=float),
                                     cfg.grid, N=cfg.order, seed=cfg.seed, tol=cfg.tol)
            plot_energies(traj, cfg.out / "energies.png")
    return code


def _parse_range(text: str) -> list[int]:
    """``A:B`` (half-open) or a comma list."""
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi)))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise PreconditionError(f"bad range {text!r}") from None


SWEEP_FIELDS = ["seed", "m", "a", "classification", "min_gamma", "worst_log_convex_gap",
                "polynomial_margin"]


def sweep_row(A: Generator, g, N: int, tol: float, grid: TimeGrid, seed: int, m: int, a=None):
    mu = stationary_measure(A)
    report = classify(A, mu, tol)
    min_gamma = min(float(gamma_n(A, n, g, g).min()) / max(positivity_scale(A, n, g), 1e-300)
                    for n in range(1, N + 1))
    E = [float(energy_explicit(A, mu, n, g, g)) for n in range(N + 1)]
    from .energies import energy_scale

    gaps = [(E[n + 1] * E[n - 1] - E[n] ** 2)
            / max(energy_scale(A, n + 1, g) * energy_scale(A, n - 1, g), 1e-300)
            for n in range(1, N)]
    margin = None
    if report.is_normal and E[0] > 0:
        from .energies import check_polynomial_bound

        try:
            traj = energy_trajectory(A, mu, g, grid, N=N, tol=tol, sample_fraction=0.0)
            margin = check_polynomial_bound(traj, report).details["min_margin"]
        except CarreLabError:
            margin = None
    return {"seed": seed, "m": m, "a": a, "classification": report.classification.value,
            "min_gamma": min_gamma, "worst_log_convex_gap": min(gaps) if gaps else None,
            "polynomial_margin": margin}


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def cmd_sweep(args, tol: float) -> int:
    grid = TimeGrid.parse(args.grid)
    if not 1 <= args.order <= N_MAX:
        raise PreconditionError(f"--order must be within 1..{N_MAX}")
    jobs = []
    if args.loop_a:
        values = [v for v in args.loop_a.split(",") if v.strip()]
        if not values:
            raise PreconditionError("empty loop parameter range")
        for v in values:
            a = _number(v, False)
            g = np.random.default_rng(args.seed).normal(size=3)
            jobs.append((loop_chain(a, 1.0, 1.0), g, args.seed, 3, a))
    else:
        seeds, dims = _parse_range(args.seeds), _parse_range(args.dims)
        if not seeds or not dims:
            raise PreconditionError("empty seed or dimension range")
        for m in dims:
            for s in seeds:
                A = random_generator(m, s, args.density)
                g = np.random.default_rng(s + 7919 * m).normal(size=m)
                jobs.append((A, g, s, m, None))
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(lambda j: sweep_row(j[0], j[1], args.order, tol, grid, j[2], j[3], j[4]),
                             jobs))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in SWEEP_FIELDS])
    text = buf.getvalue()
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_example(args, tol: float) -> int:
    out = Path(args.out) if args.out else None
    grid = TimeGrid.parse(args.grid)
    if args.name == "loop-normal":
        A = loop_chain(1, 1, 1)
        mu = stationary_measure(A)
        g0 = np.array([1.0, 0.0, 0.0])
        report = run_verification(A, mu, g0, grid, N=4, tol=tol, require_normal=args.require_normal)
        payload = {"example": "loop-normal", **analyze_payload(A, mu, tol),
                   "checks": report.to_records(), "exit_code": exit_code(report)}
        _emit(payload, out, "example.json")
        return exit_code(report)
    A = loop_chain(4, 1, 1, exact=True)
    raw = stationary_measure(A, normalize=False)
    norm = stationary_measure(A)
    table = []
    for alpha in ["-1", "0", "1/6", "1/3", "1/2", "1"]:
        a = Fraction(alpha)
        g = np.array([Fraction(1), 2 * a, 4 * a], dtype=object)
        row = {"alpha": alpha}
        for name, mu, coeff in (("raw", raw, Fraction(8, 3)), ("normalized", norm, Fraction(128, 243))):
            E = [energy_explicit(A, mu, n, g, g) for n in range(3)]
            gap = E[2] * E[0] - E[1] ** 2
            row[f"{name}_gap"] = str(gap)
            row[f"{name}_polynomial"] = str(coeff * (1 - 3 * a) * a)
            row[f"{name}_match"] = gap == coeff * (1 - 3 * a) * a
        table.append(row)
    from .energies import check_log_convex_in_n

    witness = check_log_convex_in_n(A, raw, np.array([Fraction(1), Fraction(1), Fraction(2)],
                                                     dtype=object), 2, tol,
                                    require_normal=args.require_normal)
    payload = {"example": "loop-counter", "classification": classify(A, raw).classification.value,
               "raw_measure": [str(x) for x in raw.weights], "table": table,
               "witness": witness.to_dict()}
    _emit(payload, out, "example.json")
    ok = all(r["raw_match"] and r["normalized_match"] for r in table) and witness.passed
    return 0 if ok else 1


def _common(p: argparse.ArgumentParser) -> None:
    src = p.add_argument_group("generator")
    src.add_argument("--spec", help="JSON generator spec file")
    src.add_argument("--builtin", nargs="+", metavar="WORD",
                     help="loop A B C | cycle M D | random M SEED [DENSITY] | zero M")
    p.add_argument("--g0", default="basis:0",
                   help="initial observable: 1,0,0 | basis:I | random:SEED | alpha:X")
    p.add_argument("--grid", default=DEFAULT_GRID, help="geo:T0:TMAX:COUNT or lin:T0:TMAX:COUNT")
    p.add_argument("--order", type=int, default=4, help="highest energy order N")
    p.add_argument("--gauge", choices=["normalized", "raw"], default="normalized")
    p.add_argument("--tol", type=float, default=None, help="relative tolerance (default from CARRE_LAB_TOL or 1e-9)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--exact", action="store_true", help="rational arithmetic for static checks")
    p.add_argument("--require-normal", action="store_true",
                   help="treat log-convexity witnesses on non-normal generators as failures")
    p.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carre-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("analyze", "normality, spectral gap and Poincaré constant"),
                        ("evolve", "trajectory and energy CSVs"),
                        ("verify", "run every theorem check; exit 0/1/2")):
        _common(sub.add_parser(name, help=help_))
    sw = sub.add_parser("sweep", help="ensemble over random generators or loop chains")
    sw.add_argument("--seeds", default="0:100", help="A:B or comma list")
    sw.add_argument("--dims", default="4", help="A:B or comma list")
    sw.add_argument("--density", type=float, default=0.6)
    sw.add_argument("--loop-a", help="comma list of a for loop(a,1,1); replaces --seeds/--dims")
    sw.add_argument("--order", type=int, default=4)
    sw.add_argument("--grid", default=DEFAULT_GRID)
    sw.add_argument("--tol", type=float, default=None)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out")
    ex = sub.add_parser("example", help="built-in loop-chain reproductions")
    ex.add_argument("name", choices=["loop-normal", "loop-counter"])
    ex.add_argument("--grid", default=DEFAULT_GRID)
    ex.add_argument("--tol", type=float, default=None)
    ex.add_argument("--require-normal", action="store_true")
    ex.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "sweep":
            return cmd_sweep(args, args.tol if args.tol is not None else default_tolerance())
        if args.command == "example":
            return cmd_example(args, args.tol if args.tol is not None else default_tolerance())
        cfg = build_config(args)
        return {"analyze": cmd_analyze, "evolve": cmd_evolve, "verify": cmd_verify}[args.command](cfg)
    except SpecParseError as exc:
        print(f"carre-lab: spec error: {exc}", file=sys.stderr)
        return 2
    except (CarreLabError, OSError) as exc:
        print(f"carre-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
