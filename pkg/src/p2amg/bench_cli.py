"""Config-driven benchmark runner.

Reads a JSON experiment description, assembles each requested problem
at each mesh level, runs the solver matrix (stand-alone multigrid,
multigrid-preconditioned CG, or multigrid-preconditioned GMRES) and
emits one table row per (level, solver) cell as CSV and/or Markdown.
Published iteration counts for the matching configurations are carried
along in a reference column.

Config schema (all keys except ``problem`` and ``solvers`` optional)::

    {
      "problem": "vector_laplace" | "elasticity_displacement"
                 | "elasticity_mixed" | "stokes",
      "levels": [4, 8, 16],          # subdivisions per axis
      "mu": 1.0, "lambda": 1.0,      # material parameters
      "coarsening": "separated" | "monolithic",
      "coarse_size_cap": 500,
      "tolerance": 1e-11,            # default 1e-11 elliptic, 1e-9 saddle
      "seed": 0,
      "solvers": [
        {"method": "amg",   "cycle": "V", "smoother": "GS-2-2"},
        {"method": "pcg",   "cycle": "V", "smoother": "GS-2-2"},
        {"method": "gmres", "cycle": "V", "smoother": "Braess-Sarazin-1-1",
         "precond": "2 V-cycles"}
      ]
    }

Per-solver keys ``tolerance`` and ``maxit`` override the experiment
defaults (200 cycles for stand-alone runs, 500 Krylov iterations).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, replace

import numpy as np

from .assembly import ProblemKind, ProblemSpec, assemble
from .coarsening import MONOLITHIC, SEPARATED, build_hierarchy
from .errors import DivergenceDetected, InvalidParameter, SolverError
from .krylov import KrylovConfig, gmres, pcg
from .mesh import generate_channel_mesh, generate_unit_cube_mesh, tag_boundary
from .multigrid import CycleConfig, Preconditioner, solve_amg
from .smoothers import parse_smoother

__all__ = [
    "SolverEntry",
    "ExperimentConfig",
    "load_config",
    "build_case",
    "run_experiment",
    "emit_tables",
    "main",
]

CSV_COLUMNS = [
    "problem",
    "level",
    "n",
    "dof",
    "solver",
    "cycle",
    "smoother",
    "iterations",
    "converged",
    "final_rel_residual",
    "op_complexity",
    "wall_ms",
    "paper_ref_value",
]

DEFAULT_LEVELS = [4, 8, 16]
LARGE_LEVEL = 32
_EPS = 1e-12

CHANNEL_LENGTHS = (2.0, 1.0, 1.0)

#: Published iteration counts for matching configurations, indexed by
#: (problem, method, cycle, smoother, precond_cycles, coarsening) and
#: refinement level L1..L4 (our n = 4, 8, 16, 32).  None marks a run
#: reported as failed.
REFERENCE_ITERATIONS = {
    ("vector_laplace", "amg", "V", "JA-1-1-0.5", 1, SEPARATED): (129, 125, 124, 128),
    ("vector_laplace", "amg", "V", "JA-2-2-0.5", 1, SEPARATED): (65, 65, 65, 66),
    ("vector_laplace", "amg", "V", "GS-1-1", 1, SEPARATED): (43, 46, 47, 47),
    ("vector_laplace", "amg", "V", "GS-2-2", 1, SEPARATED): (23, 24, 24, 24),
    ("vector_laplace", "amg", "W", "JA-1-1-0.5", 1, SEPARATED): (128, 124, 121, 123),
    ("vector_laplace", "amg", "W", "JA-2-2-0.5", 1, SEPARATED): (65, 64, 63, 64),
    ("vector_laplace", "amg", "W", "GS-1-1", 1, SEPARATED): (43, 46, 47, 47),
    ("vector_laplace", "amg", "W", "GS-2-2", 1, SEPARATED): (23, 24, 24, 24),
    ("vector_laplace", "pcg", "V", "JA-1-1-0.5", 1, SEPARATED): (30, 30, 30, 30),
    ("vector_laplace", "pcg", "V", "JA-2-2-0.5", 1, SEPARATED): (21, 22, 22, 22),
    ("vector_laplace", "pcg", "V", "GS-1-1", 1, SEPARATED): (26, 29, 29, 30),
    ("vector_laplace", "pcg", "V", "GS-2-2", 1, SEPARATED): (17, 19, 19, 19),
    ("vector_laplace", "pcg", "W", "JA-1-1-0.5", 1, SEPARATED): (30, 30, 30, 29),
    ("vector_laplace", "pcg", "W", "JA-2-2-0.5", 1, SEPARATED): (21, 21, 21, 21),
    ("vector_laplace", "pcg", "W", "GS-1-1", 1, SEPARATED): (26, 29, 29, 29),
    ("vector_laplace", "pcg", "W", "GS-2-2", 1, SEPARATED): (17, 18, 18, 18),
    # non-separating comparison runs (2 W-cycles, one pre/post sweep)
    ("vector_laplace", "amg", "W", "GS-1-1", 1, MONOLITHIC): (90, 158, None, None),
    ("vector_laplace", "pcg", "W", "GS-1-1", 1, MONOLITHIC): (22, 25, 36, 64),
    ("elasticity_displacement", "amg", "V", "JA-1-1-0.5", 1, SEPARATED): (None,) * 4,
    ("elasticity_displacement", "amg", "V", "JA-2-2-0.5", 1, SEPARATED): (None,) * 4,
    ("elasticity_displacement", "amg", "V", "GS-1-1", 1, SEPARATED): (80, 78, 76, 75),
    ("elasticity_displacement", "amg", "V", "GS-2-2", 1, SEPARATED): (44, 40, 39, 39),
    ("elasticity_displacement", "amg", "W", "GS-1-1", 1, SEPARATED): (80, 78, 75, 73),
    ("elasticity_displacement", "amg", "W", "GS-2-2", 1, SEPARATED): (44, 40, 39, 44),
    ("elasticity_displacement", "pcg", "V", "JA-1-1-0.5", 1, SEPARATED): (50, 81, None, None),
    ("elasticity_displacement", "pcg", "V", "JA-2-2-0.5", 1, SEPARATED): (32, 63, None, None),
    ("elasticity_displacement", "pcg", "V", "GS-1-1", 1, SEPARATED): (40, 43, 43, 42),
    ("elasticity_displacement", "pcg", "V", "GS-2-2", 1, SEPARATED): (28, 27, 27, 27),
    ("elasticity_displacement", "pcg", "W", "JA-1-1-0.5", 1, SEPARATED): (47, 80, None, None),
    ("elasticity_displacement", "pcg", "W", "JA-2-2-0.5", 1, SEPARATED): (32, 62, None, None),
    ("elasticity_displacement", "pcg", "W", "GS-1-1", 1, SEPARATED): (39, 44, 42, 41),
    ("elasticity_displacement", "pcg", "W", "GS-2-2", 1, SEPARATED): (28, 27, 27, 26),
    ("elasticity_mixed", "amg", "V", "Braess-Sarazin-1-1", 1, SEPARATED): (135, 133, 125, 117),
    ("elasticity_mixed", "amg", "V", "Braess-Sarazin-2-2", 1, SEPARATED): (71, 70, 66, 62),
    ("elasticity_mixed", "amg", "V", "sGS-1-1", 1, SEPARATED): (107, 104, 99, 93),
    ("elasticity_mixed", "amg", "V", "sGS-2-2", 1, SEPARATED): (54, 53, 53, 59),
    ("elasticity_mixed", "gmres", "V", "Vanka-1-1", 1, SEPARATED): (60, 45, 49, 69),
    ("elasticity_mixed", "gmres", "V", "Vanka-1-1", 2, SEPARATED): (42, 30, 32, 45),
    ("elasticity_mixed", "gmres", "V", "Braess-Sarazin-1-1", 1, SEPARATED): (27, 27, 27, 27),
    ("elasticity_mixed", "gmres", "V", "Braess-Sarazin-1-1", 2, SEPARATED): (18, 19, 19, 19),
    ("elasticity_mixed", "gmres", "V", "sGS-1-1", 1, SEPARATED): (14, 18, 19, 21),
    ("elasticity_mixed", "gmres", "V", "sGS-1-1", 2, SEPARATED): (12, 15, 15, 15),
    ("stokes", "gmres", "V", "Braess-Sarazin-1-1", 1, SEPARATED): (25, 42, 38, 39),
    ("stokes", "gmres", "V", "Braess-Sarazin-1-1", 2, SEPARATED): (16, 17, 18, 21),
}


@dataclass(frozen=True)
class SolverEntry:
    """One cell family of the benchmark matrix."""

    method: str  # amg | pcg | gmres
    smoother: str
    cycle: str = "V"
    precond_cycles: int = 1
    tolerance: float | None = None
    maxit: int | None = None

    @property
    def label(self) -> str:
        if self.method == "amg":
            return f"AMG-{self.cycle}"
        cyc = f"{self.precond_cycles} {self.cycle}-cycle" + (
            "s" if self.precond_cycles > 1 else ""
        )
        return f"{self.method.upper()} ({cyc})"


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    solvers: tuple[SolverEntry, ...]
    levels: tuple[int, ...] = tuple(DEFAULT_LEVELS)
    mu: float = 1.0
    lam: float = 1.0
    coarsening: str = SEPARATED
    coarse_size_cap: int = 500
    tolerance: float | None = None
    seed: int = 0

    @property
    def kind(self) -> ProblemKind:
        return ProblemKind(self.problem)

    @property
    def is_saddle(self) -> bool:
        return self.kind in (ProblemKind.ELASTICITY_MIXED, ProblemKind.STOKES)

    @property
    def default_tolerance(self) -> float:
        if self.tolerance is not None:
            return self.tolerance
        return 1e-9 if self.is_saddle else 1e-11

    @property
    def is_ablation(self) -> bool:
        return self.coarsening == MONOLITHIC


def _parse_precond(value) -> int:
    if isinstance(value, int):
        cycles = value
    elif isinstance(value, str):
        head = value.strip().split()[0]
        try:
            cycles = int(head)
        except ValueError as exc:
            raise InvalidParameter(
                f"cannot parse preconditioner cycle count from {value!r}"
            ) from exc
    else:
        raise InvalidParameter(f"bad precond field {value!r}")
    if cycles < 1:
        raise InvalidParameter("preconditioner cycle count must be >= 1")
    return cycles


def load_config(source) -> ExperimentConfig:
    """Parse an experiment config from a path, file object or dict."""
    if isinstance(source, dict):
        raw = source
    elif hasattr(source, "read"):
        raw = json.load(source)
    else:
        with open(source) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidParameter(
                    f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
                ) from exc

    try:
        problem = raw["problem"]
    except KeyError:
        raise InvalidParameter("config is missing the 'problem' key")
    try:
        ProblemKind(problem)
    except ValueError:
        raise InvalidParameter(f"unknown problem kind {problem!r}")

    entries = []
    for i, item in enumerate(raw.get("solvers", [])):
        try:
            method = item["method"]
            if method not in ("amg", "pcg", "gmres"):
                raise InvalidParameter(f"unknown method {method!r}")
            smoother = parse_smoother(item["smoother"]).name
            entries.append(
                SolverEntry(
                    method=method,
                    smoother=smoother,
                    cycle=item.get("cycle", "V"),
                    precond_cycles=_parse_precond(item.get("precond", 1)),
                    tolerance=item.get("tolerance"),
                    maxit=item.get("maxit"),
                )
            )
        except (KeyError, InvalidParameter) as exc:
            raise InvalidParameter(f"solvers[{i}]: {exc}") from exc

    coarsening = raw.get("coarsening", SEPARATED)
    if coarsening not in (SEPARATED, MONOLITHIC):
        raise InvalidParameter(f"unknown coarsening mode {coarsening!r}")

    return ExperimentConfig(
        problem=problem,
        solvers=tuple(entries),
        levels=tuple(raw.get("levels", DEFAULT_LEVELS)),
        mu=float(raw.get("mu", 1.0)),
        lam=float(raw.get("lambda", raw.get("lam", 1.0))),
        coarsening=coarsening,
        coarse_size_cap=int(raw.get("coarse_size_cap", 500)),
        tolerance=raw.get("tolerance"),
        seed=int(raw.get("seed", 0)),
    )


# ---------------------------------------------------------------------------
# problem setup


def _cube_dirichlet(v) -> bool:
    return v[2] < _EPS or v[2] > 1.0 - _EPS


def _cube_data(v) -> np.ndarray:
    # clamped at the bottom, unit z-displacement prescribed on top
    return np.array([0.0, 0.0, 1.0 if v[2] > 0.5 else 0.0])


def _channel_wall(v) -> bool:
    _, ly, lz = CHANNEL_LENGTHS
    return v[1] < _EPS or v[1] > ly - _EPS or v[2] < _EPS or v[2] > lz - _EPS


def _channel_dirichlet(v) -> bool:
    # inflow and walls; the outflow facet x = lx stays traction-free
    return v[0] < _EPS or _channel_wall(v)


def _channel_data(v) -> np.ndarray:
    if v[0] < _EPS and not _channel_wall(v):
        return np.array([1.0, 0.0, 0.0])
    return np.zeros(3)


def build_case(problem: str, n: int, mu: float = 1.0, lam: float = 1.0):
    """Tagged mesh and problem spec for one benchmark cell."""
    kind = ProblemKind(problem)
    if kind is ProblemKind.STOKES:
        lx, ly, lz = CHANNEL_LENGTHS
        mesh = tag_boundary(
            generate_channel_mesh(2 * n, n, n, lx, ly, lz), _channel_dirichlet
        )
        spec = ProblemSpec(kind=kind, mu=mu, g_dirichlet=_channel_data)
    else:
        mesh = tag_boundary(generate_unit_cube_mesh(n), _cube_dirichlet)
        spec = ProblemSpec(kind=kind, mu=mu, lam=lam, g_dirichlet=_cube_data)
    return mesh, spec


def _cycle_config(entry: SolverEntry) -> CycleConfig:
    return CycleConfig(
        smoother=parse_smoother(entry.smoother),
        nu=1 if entry.cycle == "V" else 2,
        cycles_per_application=entry.precond_cycles if entry.method != "amg" else 1,
    )


_REFERENCE_LEVELS = {4: 0, 8: 1, 16: 2, 32: 3}


def _reference_value(config: ExperimentConfig, entry: SolverEntry, n: int):
    key = (
        config.problem,
        entry.method,
        entry.cycle,
        entry.smoother,
        entry.precond_cycles,
        config.coarsening,
    )
    values = REFERENCE_ITERATIONS.get(key)
    pos = _REFERENCE_LEVELS.get(n)
    if values is None or pos is None:
        return ""
    return "-" if values[pos] is None else values[pos]


def run_experiment(config: ExperimentConfig) -> list[dict]:
    """Run every (level, solver) cell; one result row per cell.

    Mesh, assembly and hierarchy are shared across the solver entries
    of a level.  Rows appear in config order (levels outer, solvers
    inner).
    """
    rows = []
    for pos, n in enumerate(config.levels):
        mesh, spec = build_case(config.problem, n, config.mu, config.lam)
        system = assemble(mesh, spec)
        operator = system.monolithic()
        rhs = system.rhs()
        hierarchy = build_hierarchy(
            system, mode=config.coarsening, coarse_size_cap=config.coarse_size_cap
        )
        for entry in config.solvers:
            cycle_cfg = _cycle_config(entry)
            tol = entry.tolerance or config.default_tolerance
            status = ""
            try:
                if entry.method == "amg":
                    maxit = entry.maxit or 200
                    _, report = solve_amg(hierarchy, rhs, cycle_cfg, tol, maxit)
                else:
                    maxit = entry.maxit or 500
                    precond = Preconditioner(hierarchy, cycle_cfg)
                    kcfg = KrylovConfig(
                        method="cg" if entry.method == "pcg" else "gmres",
                        tol=tol,
                        maxit=maxit,
                    )
                    if entry.method == "pcg":
                        _, report = pcg(operator, rhs, precond, kcfg)
                    else:
                        _, report = gmres(operator, rhs, precond, kcfg)
                iterations = report.iterations if report.converged else f">{maxit}"
                converged = report.converged
                final = report.final_residual
                opc = report.operator_complexity
                wall = report.wall_time
            except DivergenceDetected:
                iterations, converged, final, opc, wall = "DIVERGED", False, "", "", ""
            rows.append(
                {
                    "problem": config.problem,
                    "level": pos + 1,
                    "n": n,
                    "dof": operator.shape[0],
                    "solver": entry.label,
                    "cycle": cycle_cfg.cycle_name,
                    "smoother": entry.smoother,
                    "iterations": iterations,
                    "converged": converged,
                    "final_rel_residual": final,
                    "op_complexity": opc,
                    "wall_ms": "" if wall == "" else round(1e3 * wall, 3),
                    "paper_ref_value": _reference_value(config, entry, n),
                }
            )
    return rows


# ---------------------------------------------------------------------------
# table output


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def emit_tables(rows: list[dict], fmt: str, out_dir: str = ".") -> list[str]:
    """Write ``results.csv`` and/or ``results.md``; returns the paths."""
    import os

    paths = []
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, "results.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: _format_cell(row[k]) for k in CSV_COLUMNS})
        paths.append(path)
    if fmt in ("md", "both"):
        path = os.path.join(out_dir, "results.md")
        with open(path, "w") as fh:
            fh.write(render_markdown(rows))
        paths.append(path)
    return paths


def read_results_csv(path: str) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def render_markdown(rows: list[dict]) -> str:
    """Iterations table: one row per solver entry, one column per level."""
    if not rows:
        return "(no results)\n"
    levels = sorted({(r["level"], r["n"]) for r in rows})
    solvers = []
    for r in rows:
        key = (r["solver"], r["cycle"], r["smoother"])
        if key not in solvers:
            solvers.append(key)
    cells = {
        (r["solver"], r["cycle"], r["smoother"], r["level"]): r["iterations"]
        for r in rows
    }
    ref = {
        (r["solver"], r["cycle"], r["smoother"], r["level"]): r["paper_ref_value"]
        for r in rows
    }
    out = [f"### {rows[0]['problem']}", ""]
    header = ["solver", "cycle", "smoother"] + [f"L{lv} (n={n})" for lv, n in levels]
    out.append("| " + " | ".join(header) + " |")
    out.append("|" + "---|" * len(header))
    for solver, cycle, smoother in solvers:
        cols = [solver, cycle, smoother]
        for lv, _ in levels:
            it = cells.get((solver, cycle, smoother, lv), "")
            rv = ref.get((solver, cycle, smoother, lv), "")
            cols.append(f"{it} (ref {rv})" if rv != "" else f"{it}")
        out.append("| " + " | ".join(str(c) for c in cols) + " |")
    out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# CLI


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="p2amg-bench", description="Run the solver benchmark matrix."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a benchmark config")
    run.add_argument("config", help="path to the JSON experiment config")
    run.add_argument("--format", choices=("csv", "md", "both"), default="csv")
    run.add_argument("--out", default=".", help="output directory")
    run.add_argument(
        "--large",
        action="store_true",
        help=f"append the n={LARGE_LEVEL} refinement level",
    )
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except (OSError, InvalidParameter) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.large and LARGE_LEVEL not in config.levels:
        config = replace(config, levels=config.levels + (LARGE_LEVEL,))

    try:
        rows = run_experiment(config)
    except SolverError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    paths = emit_tables(rows, args.format, args.out)
    for path in paths:
        print(f"wrote {path}")
    for row in rows:
        print(
            f"  {row['problem']} n={row['n']} {row['solver']} {row['smoother']}: "
            f"{row['iterations']} iterations"
        )
    if config.is_ablation:
        return 0
    return 0 if all(row["converged"] is True for row in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
