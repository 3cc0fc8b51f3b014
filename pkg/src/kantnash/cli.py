"""Command-line front end: ``kantnash solve | verify | list-scenarios``.

Settings come from a flat ``key=value`` config file, then positional
``key=value`` overrides, then explicit flags (highest precedence).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import plots
from .continuum import pontryagin_residual, solve_continuum, uniform_scenario
from .core import (
    ConvergenceError,
    GroupMeasure,
    InputError,
    KantNashError,
    UnsupportedError,
    as_beta,
    population_costs,
)
from .finite import (
    SolverConfig,
    fixed_point_solve,
    hrkn_system,
    monotonicity_probe,
    quadratic_hrkn_direct,
    quadratic_rkn_direct,
    rkn_system,
    vi_residual,
)
from .oracle import brute_force_fixed_point, brute_force_group_min, discretized_continuum_crosscheck
from .scenarios import SCENARIOS, altruistic_action, get_scenario, kantian_action, symmetric_cost

log = logging.getLogger("kantnash")

EXIT_OK, EXIT_VERIFY_FAILED, EXIT_USAGE, EXIT_NONCONVERGED = 0, 1, 2, 3
COLUMNS = ("scenario", "alpha", "type_or_x", "action", "cost", "solver", "residual", "iterations")
FORMATS = ("csv", "svg")
KEYS = ("scenario", "alpha", "sweep", "n", "grid_n", "xi", "beta", "seed", "out", "format",
        "tol", "samples", "n_types")
DEFAULT_SWEEP = "0:1:0.1"
DEFAULT_VERIFY_ALPHAS = (0.0, 0.5, 1.0)
FINITE_RESIDUAL_TOL = 1e-8
CONTINUUM_RESIDUAL_TOL = 1e-5


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    scenario: str
    alphas: tuple[float, ...]
    n: int = 201
    xi: str = "const"
    beta: float = 0.0
    out: Path = Path("out")
    formats: tuple[str, ...] = ("csv",)
    seed: int = 0
    tol: float = 1e-10
    samples: int = 1000
    n_types: int = 51
    sweep: str | None = None
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise UsageError(f"unknown scenario {self.scenario!r}; available: {', '.join(SCENARIOS)}")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise UsageError(f"unknown output format(s) {bad}; choose from {FORMATS}")
        if self.n < 2 or self.n_types < 2 or self.samples < 1:
            raise UsageError("grid sizes must be >= 2 and samples >= 1")
        if not self.tol > 0:
            raise UsageError("tol must be positive")


def parse_sweep(text: str) -> tuple[float, ...]:
    """``start:stop:step`` with the stop value included when it lies on the lattice."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise UsageError(f"sweep must look like start:stop:step, got {text!r}") from None
    if not step > 0:
        raise UsageError("sweep step must be positive")
    if stop < start:
        raise UsageError("sweep stop must not be below start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 12) for i in range(count))


def load_config(path: Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kantnash", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("solve", "solve a scenario and write tables and plots"),
                            ("verify", "cross-check a scenario against the oracles")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("overrides", nargs="*", metavar="key=value")
        p.add_argument("--config", type=Path)
        p.add_argument("--out", type=Path)
        p.add_argument("--format")
        p.add_argument("--alpha", type=float)
        p.add_argument("--grid-n", type=int)
        p.add_argument("--sweep")
        p.add_argument("--seed", type=int)
    sub.add_parser("list-scenarios", help="print the available scenario names")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw = load_config(args.config) if args.config else {}
    raw.update(_parse_overrides(args.overrides))
    flags = {"out": args.out, "format": args.format, "alpha": args.alpha, "n": args.grid_n,
             "sweep": args.sweep, "seed": args.seed}
    raw.update({k: str(v) for k, v in flags.items() if v is not None})
    if "grid_n" in raw:
        raw.setdefault("n", raw.pop("grid_n"))
    unknown = sorted(set(raw) - set(KEYS))
    if unknown:
        raise UsageError(f"unknown setting(s): {', '.join(unknown)}")
    if "scenario" not in raw:
        raise UsageError("no scenario given (use scenario=<name>)")
    try:
        if "alpha" in raw and "sweep" in raw:
            raise UsageError("give either alpha or sweep, not both")
        if "alpha" in raw:
            alphas = (float(raw["alpha"]),)
        elif "sweep" in raw:
            alphas = parse_sweep(raw["sweep"])
        else:
            alphas = parse_sweep(DEFAULT_SWEEP) if args.command == "solve" else DEFAULT_VERIFY_ALPHAS
        if any(not 0 <= a <= 1 for a in alphas):
            raise UsageError("alpha values must lie in [0, 1]")
        formats = tuple(f.strip() for f in raw.get("format", "csv").split(",") if f.strip())
        return RunConfig(
            scenario=raw["scenario"], alphas=alphas, n=int(raw.get("n", 201)),
            xi=raw.get("xi", "const"), beta=as_beta(raw.get("beta", "0")),
            out=Path(raw.get("out", "out")), formats=formats, seed=int(raw.get("seed", 0)),
            tol=float(raw.get("tol", 1e-10)), samples=int(raw.get("samples", 1000)),
            n_types=int(raw.get("n_types", 51)), sweep=raw.get("sweep"), raw=raw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _num(v) -> str:
    return "%.12g" % v


@dataclass
class Row:
    scenario: str
    alpha: float
    type_or_x: str
    action: float
    cost: float
    solver: str
    residual: float
    iterations: int

    def cells(self) -> list[str]:
        return [self.scenario, _num(self.alpha), self.type_or_x, _num(self.action), _num(self.cost),
                self.solver, _num(self.residual), str(self.iterations)]


@dataclass
class Outcome:
    rows: list[Row] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(tol=cfg.tol)


def _solve_finite(game, scfg: SolverConfig):
    """Kantian fixed point; infinite risk factors use grid best responses."""
    if math.isinf(game.beta):
        profile, report = brute_force_fixed_point(game, SolverConfig(tol=1e-6, max_outer=500))
        return profile, report, report.final_residual
    profile, report = fixed_point_solve(game, scfg)
    return profile, report, vi_residual(game, profile.group_actions, profile.star_actions)


def _symmetric_rows(cfg: RunConfig, alpha: float, out: Outcome) -> None:
    scen = get_scenario("symmetric_fishing", alpha=alpha)
    game = scen.build().with_(beta=cfg.beta)
    scfg = _solver_config(cfg)
    for curve, g in (("kantian", game), ("nash", game.with_(measure=GroupMeasure([[0.0]])))):
        profile, report, res = _solve_finite(g, scfg)
        u = float(profile.star_actions[0])
        out.rows.append(Row(scen.name, alpha, curve, u, float(symmetric_cost(u)), report.solver,
                            res, report.iterations))
        if not report.converged or res > max(FINITE_RESIDUAL_TOL, 10 * cfg.tol):
            out.failures.append(f"{curve} alpha={alpha}: residual {res:.3e}")
    u = float(altruistic_action(alpha))
    out.rows.append(Row(scen.name, alpha, "altruistic", u, float(symmetric_cost(u)), "closed_form", 0.0, 0))


def _type_label(descriptor) -> str:
    return "(" + ";".join(f"{v:g}" for v in descriptor) + ")"


def _four_type_rows(cfg: RunConfig, alpha: float, out: Outcome) -> None:
    scen = get_scenario("four_type", alpha=alpha)
    game = scen.build().with_(beta=cfg.beta)
    space, model = game.space, game.model
    labels = [_type_label(d) for d in space.individual_types]
    if cfg.beta == 0.0:
        A, rhs = rkn_system(space, model, alpha)
        u = quadratic_rkn_direct(space, model, alpha)
        rkn = (u, float(np.max(np.abs(A @ u - rhs))), "rkn_direct", 0)
    else:
        profile, report, res = _solve_finite(game, _solver_config(cfg))
        if not report.converged:
            out.failures.append(f"r-KN alpha={alpha}: residual {res:.3e}")
        rkn = (profile.star_actions, res, report.solver, report.iterations)
    u, res, solver, iters = rkn
    for lab, uk, ck in zip(labels, u, population_costs(game, u)):
        out.rows.append(Row(scen.name, alpha, lab, float(uk), float(ck), solver, res, iters))
    if res > FINITE_RESIDUAL_TOL:
        out.failures.append(f"r-KN alpha={alpha}: residual {res:.3e}")
    if cfg.beta != 0.0:
        log.warning("h,r rows need beta = 0; skipped")
        return
    A, rhs, _, _ = hrkn_system(space, model, alpha)
    u_kn, profiles = quadratic_hrkn_direct(space, model, alpha)
    res = float(np.max(np.abs(A @ np.concatenate([*profiles, u_kn]) - rhs)))
    for lab, uk, ck in zip(labels, u_kn, population_costs(game, u_kn)):
        out.rows.append(Row(scen.name, alpha, lab, float(uk), float(ck), "hrkn_direct", res, 0))
    if res > FINITE_RESIDUAL_TOL:
        out.failures.append(f"h,r-KN alpha={alpha}: residual {res:.3e}")


def _continuum_rows(cfg: RunConfig, alpha: float, out: Outcome) -> None:
    if cfg.beta != 0.0:
        raise UsageError("continuum scenarios support beta = 0 only")
    scen = get_scenario(cfg.scenario, alpha=alpha, xi=cfg.xi, n=cfg.n)
    spec = scen.build()
    sol = solve_continuum(spec)
    res = pontryagin_residual(spec, sol.candidate())
    for x, u, c in zip(spec.grid, sol.action, sol.cost):
        out.rows.append(Row(scen.name, alpha, _num(x), float(u), float(c), "nystrom", res, 0))
    if res > CONTINUUM_RESIDUAL_TOL:
        out.failures.append(f"alpha={alpha}: optimality-condition residual {res:.3e}")


_SOLVERS = {
    "symmetric_fishing": _symmetric_rows,
    "four_type": _four_type_rows,
    "continuum_uniform": _continuum_rows,
    "continuum_windowed": _continuum_rows,
}


def compute(cfg: RunConfig) -> Outcome:
    out = Outcome()
    for alpha in cfg.alphas:
        start = time.perf_counter()
        _SOLVERS[cfg.scenario](cfg, alpha, out)
        out.timings[_num(alpha)] = time.perf_counter() - start
    return out


def write_csv(path: Path, rows: list[Row]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        writer.writerows(r.cells() for r in rows)


def _series(rows, key_fn, x_fn, y_fn):
    series: dict[str, tuple[list, list]] = {}
    for r in rows:
        xs, ys = series.setdefault(key_fn(r), ([], []))
        xs.append(x_fn(r))
        ys.append(y_fn(r))
    return series


def emit_plots(cfg: RunConfig, rows: list[Row]) -> list[Path]:
    """One SVG chart per scenario; returns the files written."""
    written = []
    if cfg.scenario == "symmetric_fishing":
        panels = [plots.Panel("Action", "alpha", "u"), plots.Panel("Cost", "alpha", "J")]
        for name, (xs, ys) in _series(rows, lambda r: r.type_or_x, lambda r: r.alpha,
                                      lambda r: r.action).items():
            panels[0].add(name, xs, ys)
        for name, (xs, ys) in _series(rows, lambda r: r.type_or_x, lambda r: r.alpha,
                                      lambda r: r.cost).items():
            panels[1].add(name, xs, ys)
        written.append(plots.write_chart(cfg.out / "symmetric_fishing.svg", panels,
                                         "Kantian vs altruistic vs Nash"))
    elif cfg.scenario == "four_type":
        panels = []
        for solver, title in (("rkn_direct", "r-Kant-Nash"), ("hrkn_direct", "h,r-Kant-Nash"),
                              ("fixed_point", "r-Kant-Nash")):
            sel = [r for r in rows if r.solver == solver]
            if not sel:
                continue
            panel = plots.Panel(title, "alpha", "u")
            for name, (xs, ys) in _series(sel, lambda r: r.type_or_x, lambda r: r.alpha,
                                          lambda r: r.action).items():
                panel.add(f"type {name}", xs, ys)
            panels.append(panel)
        written.append(plots.write_chart(cfg.out / "four_type.svg", panels, "Actions per type"))
    else:
        panels = [plots.Panel("Action", "x", "u"), plots.Panel("Cost", "x", "J")]
        for attr, panel in (("action", panels[0]), ("cost", panels[1])):
            for name, (xs, ys) in _series(rows, lambda r: f"alpha={_num(r.alpha)}",
                                          lambda r: float(r.type_or_x),
                                          lambda r, a=attr: getattr(r, a)).items():
                panel.add(name, xs, ys)
        written.append(plots.write_chart(cfg.out / f"{cfg.scenario}.svg", panels,
                                         f"{cfg.scenario} (xi={cfg.xi})"))
    return [p for p in written if p is not None]


def _versions() -> dict[str, str]:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"python": platform.python_version(), "numpy": np.__version__, "kantnash": pkg}


def _prepare_out(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {path} is not writable: {exc}") from exc


def run_solve(cfg: RunConfig) -> int:
    _prepare_out(cfg.out)
    start = time.perf_counter()
    outcome = compute(cfg)
    files = []
    if "csv" in cfg.formats:
        write_csv(cfg.out / "equilibrium.csv", outcome.rows)
        files.append("equilibrium.csv")
    if "svg" in cfg.formats:
        files.extend(p.name for p in emit_plots(cfg, outcome.rows))
    status = "ok" if not outcome.failures else "nonconverged"
    record = {
        "command": "solve",
        "scenario": cfg.scenario,
        "status": status,
        "failures": outcome.failures,
        "alphas": list(cfg.alphas),
        "sweep": cfg.sweep,
        "settings": {k: cfg.raw[k] for k in sorted(cfg.raw)},
        "solver": asdict(_solver_config(cfg)),
        "residual_tolerance": {"finite": FINITE_RESIDUAL_TOL, "continuum": CONTINUUM_RESIDUAL_TOL},
        "versions": _versions(),
        "timings_s": {"total": time.perf_counter() - start, "per_alpha": outcome.timings},
        "files": files,
    }
    (cfg.out / "metadata.json").write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")
    print(f"{cfg.scenario}: {len(outcome.rows)} rows written to {cfg.out} ({status})")
    for msg in outcome.failures:
        print(f"  not converged: {msg}", file=sys.stderr)
    return EXIT_OK if not outcome.failures else EXIT_NONCONVERGED


@dataclass
class Check:
    name: str
    value: float
    tol: float
    lower_bound: bool = False

    @property
    def passed(self) -> bool:
        return self.value > self.tol if self.lower_bound else self.value < self.tol

    def line(self) -> str:
        rel = ">" if self.lower_bound else "<"
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} {rel} {self.tol:.0e}"


def verify_checks(cfg: RunConfig) -> list[Check]:
    checks = []
    scfg = _solver_config(cfg)
    for alpha in cfg.alphas:
        tag = f"alpha={_num(alpha)}"
        scen = get_scenario(cfg.scenario, alpha=alpha) if cfg.scenario in ("symmetric_fishing", "four_type") \
            else get_scenario(cfg.scenario, alpha=alpha, xi=cfg.xi, n=cfg.n)
        if cfg.scenario == "symmetric_fishing":
            game = scen.build()
            profile, report = fixed_point_solve(game, scfg)
            if not report.converged:
                raise ConvergenceError(f"fixed point did not converge at {tag}")
            star = profile.star_actions
            checks.append(Check(f"{tag} kantian vs 1/(3+alpha)", abs(star[0] - kantian_action(alpha)), 1e-8))
            checks.append(Check(f"{tag} VI residual", vi_residual(game, profile.group_actions, star), 1e-8))
            oracle = brute_force_group_min(game, 0, star)
            checks.append(Check(f"{tag} grid oracle best response", abs(oracle[0] - star[0]), 1e-4))
        elif cfg.scenario == "four_type":
            game = scen.build()
            space, model = game.space, game.model
            A, rhs = rkn_system(space, model, alpha)
            u = quadratic_rkn_direct(space, model, alpha)
            checks.append(Check(f"{tag} r-KN linear residual", float(np.max(np.abs(A @ u - rhs))), 1e-12))
            H, hrhs, _, class_of = hrkn_system(space, model, alpha)
            u_kn, profiles = quadratic_hrkn_direct(space, model, alpha)
            checks.append(Check(f"{tag} h,r-KN linear residual",
                                float(np.max(np.abs(H @ np.concatenate([*profiles, u_kn]) - hrhs))), 1e-12))
            cons = max(abs(u_kn[k] - profiles[c][k]) for k, c in enumerate(class_of))
            checks.append(Check(f"{tag} h,r-KN consistency", cons, 1e-12))
            profile, report = fixed_point_solve(game, scfg)
            if not report.converged:
                raise ConvergenceError(f"fixed point did not converge at {tag}")
            checks.append(Check(f"{tag} fixed point vs direct solve",
                                float(np.max(np.abs(profile.star_actions - u))), 1e-6))
            low, _ = monotonicity_probe(game, cfg.samples, cfg.seed)
            checks.append(Check(f"{tag} monotonicity probe minimum", low, 0.0, lower_bound=True))
        else:
            spec = scen.build()
            sol = solve_continuum(spec)
            checks.append(Check(f"{tag} optimality-condition residual",
                                pontryagin_residual(spec, sol.candidate()), CONTINUUM_RESIDUAL_TOL))
            refs = scen.references()
            if "action" in refs:
                checks.append(Check(f"{tag} closed-form action",
                                    float(np.max(np.abs(sol.action - refs["action"]))), 1e-5))
            if alpha == 0.0 and cfg.scenario == "continuum_windowed":
                base = solve_continuum(uniform_scenario(0.0, cfg.xi, spec.n))
                checks.append(Check(f"{tag} degenerates to the empty-group case",
                                    float(np.max(np.abs(sol.action - base.action))), 1e-12))
            try:
                dev = discretized_continuum_crosscheck(spec, cfg.n_types)
            except UnsupportedError as exc:
                print(f"SKIP {tag} finite cross-check: {exc}")
            else:
                checks.append(Check(f"{tag} finite cross-check (n_types={cfg.n_types})", dev, 1e-3))
    return checks


def run_verify(cfg: RunConfig) -> int:
    checks = verify_checks(cfg)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{cfg.scenario}: {len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY_FAILED


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        # key=value overrides may follow options, which plain nargs="*" positionals reject
        args, extra = parser.parse_known_args(argv)
        stray = [e for e in extra if e.startswith("-") or "=" not in e or not hasattr(args, "overrides")]
        if stray:
            parser.error(f"unrecognized arguments: {' '.join(stray)}")
        if extra:
            args.overrides = list(args.overrides) + extra
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-scenarios":
        for name, factory in SCENARIOS.items():
            print(f"{name:20s} {factory.__doc__.splitlines()[0] if factory.__doc__ else ''}".rstrip())
        return EXIT_OK
    try:
        cfg = resolve_config(args)
        return run_solve(cfg) if args.command == "solve" else run_verify(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError,) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InputError, UnsupportedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KantNashError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
