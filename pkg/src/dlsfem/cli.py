"""Command-line front end: ``dls study``, ``dls mesh-info`` and ``dls dump-matrix``.

Study configuration files are INI-style ``key = value`` text with the
sections ``[problem]``, ``[study]`` and ``[solver]``::

    [problem]
    name = plane_wave_2d
    k = 1

    [study]
    kind = uniform_convergence
    degree = 1
    n = 5
    levels = 4

Unknown keys are rejected.  Exit codes: 0 success, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import mesh as meshmod
from .analysis import DEFAULT_LAMBDA, adaptive_solve, compute_errors, convergence_orders
from .assembly import DofLayout, assemble, fields_at, map_to_reference, write_matrix
from .problems import PROBLEMS, ProblemError, ProblemSpec, make_problem
from .solver import SolverConfig, SolverError, solve

log = logging.getLogger(__name__)

STUDY_KINDS = ("uniform_convergence", "adaptive", "k2h", "single_solve")
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

CONVERGENCE_COLUMNS = (
    "level", "h", "n_elements", "n_dofs", "energy_error", "l2_u", "l2_p",
    "order_energy", "order_l2u", "order_l2p", "solver_iterations", "residual", "wall_time_s",
)
K2H_COLUMNS = ("k", "n", "h", "n_elements", "n_dofs", "energy_error", "relative_energy_error",
               "solver_iterations", "residual", "wall_time_s")
ADAPTIVE_COLUMNS = ("step", "n_elements", "n_dofs", "energy_error", "l2_u", "l2_p",
                    "eta_total", "functional_value", "n_marked", "solver_iterations", "residual",
                    "wall_time_s")

# problem keys that are forwarded to make_problem, with their types
PROBLEM_PARAMS = {
    "alpha": float, "a": float, "mode": int, "segments": int,
    "theta": float, "phi": float, "poly_degree": int, "dim": int,
}
_PARAM_RENAME = {"mode": "n", "poly_degree": "m"}


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    problem: str
    k: float = 1.0
    problem_params: dict = field(default_factory=dict)
    kind: str = "uniform_convergence"
    degree: int = 1
    n: int = 5
    levels: int = 4
    k_values: tuple = (3.0, 5.0, 8.0, 10.0)
    fraction: float = DEFAULT_LAMBDA
    max_dofs: int = 50_000
    max_steps: int | None = None
    grid_points: int = 41
    output: str = "results"
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: unknown name {self.problem!r}; choose from {', '.join(PROBLEMS)}")
        if not self.k > 0:
            raise ConfigError("k must be positive")
        if self.kind not in STUDY_KINDS:
            raise ConfigError(f"kind: unknown study {self.kind!r}; choose from {', '.join(STUDY_KINDS)}")
        if not 1 <= self.degree <= 4:
            raise ConfigError("degree must lie in [1, 4]")
        if self.levels < 1:
            raise ConfigError("levels must be at least 1")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if not 0 < self.fraction < 1:
            raise ConfigError("lambda out of (0,1)")
        if not self.k_values or any(not kv > 0 for kv in self.k_values):
            raise ConfigError("k_values must be a non-empty list of positive numbers")
        if self.grid_points < 2:
            raise ConfigError("grid_points must be at least 2")

    def build_problem(self, k: float | None = None) -> ProblemSpec:
        params = {_PARAM_RENAME.get(key, key): val for key, val in self.problem_params.items()}
        return make_problem(self.problem, k=self.k if k is None else k, **params)


# ---------------------------------------------------------------------------
# configuration parsing
# ---------------------------------------------------------------------------
def _convert(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"[{section}] {key}: expected {kind.__name__}, got {raw!r}") from None


def _optional_int(section, key, raw):
    return None if raw.strip().lower() in ("", "none") else _convert(section, key, raw, int)


STUDY_KEYS = {
    "kind": str, "degree": int, "n": int, "levels": int, "k_values": None,
    "lambda": float, "max_dofs": int, "max_steps": None, "grid_points": int, "output": str,
}
SOLVER_KEYS = {"method": str, "preconditioner": str, "rel_tolerance": float, "max_iterations": None}


def parse_config_text(text: str, source: str = "<string>") -> StudyConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    unknown_sections = set(parser.sections()) - {"problem", "study", "solver"}
    if unknown_sections:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown_sections))}")
    if not parser.has_section("problem") or "name" not in parser["problem"]:
        raise ConfigError("[problem] name: required key missing")

    prob = parser["problem"]
    kwargs: dict = {"problem": prob["name"].strip()}
    params = {}
    for key, raw in prob.items():
        if key == "name":
            continue
        if key == "k":
            kwargs["k"] = _convert("problem", key, raw, float)
        elif key in PROBLEM_PARAMS:
            params[key] = _convert("problem", key, raw, PROBLEM_PARAMS[key])
        else:
            raise ConfigError(f"[problem] {key}: unknown key")
    kwargs["problem_params"] = params

    if parser.has_section("study"):
        for key, raw in parser["study"].items():
            if key not in STUDY_KEYS:
                raise ConfigError(f"[study] {key}: unknown key")
            if key == "k_values":
                kwargs["k_values"] = tuple(
                    _convert("study", key, part, float) for part in raw.replace(",", " ").split()
                )
            elif key == "max_steps":
                kwargs["max_steps"] = _optional_int("study", key, raw)
            elif key == "lambda":
                kwargs["fraction"] = _convert("study", key, raw, float)
            else:
                kwargs[key] = _convert("study", key, raw, STUDY_KEYS[key])

    solver_kwargs = {}
    if parser.has_section("solver"):
        for key, raw in parser["solver"].items():
            if key not in SOLVER_KEYS:
                raise ConfigError(f"[solver] {key}: unknown key")
            if key == "max_iterations":
                solver_kwargs[key] = _optional_int("solver", key, raw)
            else:
                solver_kwargs[key] = _convert("solver", key, raw, SOLVER_KEYS[key])
    try:
        kwargs["solver"] = SolverConfig(**solver_kwargs)
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None
    config = StudyConfig(**kwargs)
    try:
        config.build_problem()
    except (ProblemError, TypeError) as exc:
        raise ConfigError(f"[problem] {exc}") from None
    return config


def parse_config(path) -> StudyConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def emit_config(config: StudyConfig) -> str:
    """INI text that parses back to an equal configuration."""
    out = io.StringIO()
    out.write("[problem]\n")
    out.write(f"name = {config.problem}\n")
    out.write(f"k = {config.k!r}\n")
    for key, val in sorted(config.problem_params.items()):
        out.write(f"{key} = {val!r}\n")
    out.write("\n[study]\n")
    out.write(f"kind = {config.kind}\n")
    out.write(f"degree = {config.degree}\n")
    out.write(f"n = {config.n}\n")
    out.write(f"levels = {config.levels}\n")
    out.write("k_values = " + ", ".join(repr(float(v)) for v in config.k_values) + "\n")
    out.write(f"lambda = {config.fraction!r}\n")
    out.write(f"max_dofs = {config.max_dofs}\n")
    out.write(f"max_steps = {config.max_steps if config.max_steps is not None else 'none'}\n")
    out.write(f"grid_points = {config.grid_points}\n")
    out.write(f"output = {config.output}\n")
    s = config.solver
    out.write("\n[solver]\n")
    out.write(f"method = {s.method}\n")
    out.write(f"preconditioner = {s.preconditioner}\n")
    out.write(f"rel_tolerance = {s.rel_tolerance!r}\n")
    out.write(f"max_iterations = {s.max_iterations if s.max_iterations is not None else 'none'}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------
@dataclass
class StudyResult:
    kind: str
    columns: tuple
    rows: list[dict]
    failed: bool = False


def level_mesh(problem: ProblemSpec, n: int, level: int) -> meshmod.SimplicialMesh:
    """Mesh of a convergence level: the structured mesh with n * 2**level cells per unit."""
    scale = 2**level
    if problem.domain == "annulus":
        params = dict(problem.domain_params)
        params["segments"] = params.get("segments", 64) * scale
        return meshmod.annulus(n_layers=n * scale, **params)
    return problem.mesh(n * scale)


def _solve_level(problem, mesh, degree, solver_config):
    start = time.perf_counter()
    system = assemble(mesh, degree, problem)
    coeffs, report = solve(system, solver_config)
    errors = compute_errors(mesh, degree, coeffs, problem)
    return coeffs, report, errors, time.perf_counter() - start


def _uniform(config: StudyConfig) -> StudyResult:
    problem = config.build_problem()
    rows = []
    failed = False
    for level in range(config.levels):
        mesh = level_mesh(problem, config.n, level)
        _, report, errors, wall = _solve_level(problem, mesh, config.degree, config.solver)
        failed |= not report.converged
        rows.append({
            "level": level, "h": mesh.h, "n_elements": mesh.n_elements, "n_dofs": errors.n_dofs,
            "energy_error": errors.energy_error, "l2_u": errors.l2_u, "l2_p": errors.l2_p,
            "solver_iterations": report.iterations, "residual": report.relative_residual,
            "wall_time_s": wall, "converged": report.converged,
        })
        log.info("level %d: h=%.4g energy=%.4e", level, mesh.h, errors.energy_error)
    for key, col in (("energy_error", "order_energy"), ("l2_u", "order_l2u"), ("l2_p", "order_l2p")):
        orders = convergence_orders([r[key] for r in rows])
        for row, order in zip(rows, orders):
            row[col] = order
    return StudyResult(config.kind, CONVERGENCE_COLUMNS, rows, failed)


def _k2h(config: StudyConfig) -> StudyResult:
    rows = []
    failed = False
    for k in config.k_values:
        problem = config.build_problem(k)
        n = math.ceil(k * k)
        mesh = problem.mesh(n)
        _, report, errors, wall = _solve_level(problem, mesh, config.degree, config.solver)
        failed |= not report.converged
        rows.append({
            "k": k, "n": n, "h": 1.0 / n, "n_elements": mesh.n_elements, "n_dofs": errors.n_dofs,
            "energy_error": errors.energy_error,
            "relative_energy_error": errors.relative_energy_error,
            "solver_iterations": report.iterations, "residual": report.relative_residual,
            "wall_time_s": wall, "converged": report.converged,
        })
    return StudyResult(config.kind, K2H_COLUMNS, rows, failed)


def _adaptive(config: StudyConfig) -> StudyResult:
    problem = config.build_problem()
    start = time.perf_counter()
    history = adaptive_solve(problem, config.degree, config.fraction, initial_n=config.n,
                             max_dofs=config.max_dofs, max_iterations=config.max_steps,
                             solver_config=config.solver)
    wall = time.perf_counter() - start
    rows = []
    for step, rec in enumerate(history):
        err = rec.errors
        rows.append({
            "step": step, "n_elements": rec.mesh.n_elements,
            "n_dofs": DofLayout(rec.mesh.n_elements, rec.mesh.dim, config.degree).size,
            "energy_error": err.energy_error if err else None,
            "l2_u": err.l2_u if err else None, "l2_p": err.l2_p if err else None,
            "eta_total": float(np.sqrt(np.sum(rec.indicators.eta**2))),
            "functional_value": rec.indicators.functional_value,
            "n_marked": len(rec.marks.marked) if rec.marks is not None else 0,
            "solver_iterations": rec.iterations, "residual": rec.residual,
            "wall_time_s": wall if step == len(history) - 1 else None,
            "converged": rec.converged,
        })
    return StudyResult(config.kind, ADAPTIVE_COLUMNS, rows, not all(r.converged for r in history))


def locate_points(mesh: meshmod.SimplicialMesh, points: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Index of an element containing each point, or -1 when outside the mesh."""
    found = np.full(len(points), -1)
    elems = np.arange(mesh.n_elements)
    for start in range(0, len(points), 256):
        chunk = points[start : start + 256]
        xi = map_to_reference(mesh, elems, np.broadcast_to(chunk, (mesh.n_elements,) + chunk.shape))
        bary_min = np.minimum(1.0 - xi.sum(axis=-1), xi.min(axis=-1))  # (n_elements, n_points)
        inside = bary_min >= -tol
        hit = inside.any(axis=0)
        found[start : start + len(chunk)] = np.where(hit, inside.argmax(axis=0), -1)
    return found


def _single(config: StudyConfig) -> StudyResult:
    problem = config.build_problem()
    mesh = level_mesh(problem, config.n, 0)
    system = assemble(mesh, config.degree, problem)
    coeffs, report = solve(system, config.solver)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    axes = [np.linspace(lo[j], hi[j], config.grid_points) for j in range(mesh.dim)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, mesh.dim)
    owner = locate_points(mesh, grid)
    keep = owner >= 0
    grid, owner = grid[keep], owner[keep]
    fl = fields_at(mesh, config.degree, coeffs, owner, grid[:, None, :])
    names = ("x", "y", "z")[: mesh.dim]
    rows = []
    for pt, val in zip(grid, fl.u[:, 0]):
        row = {name: float(c) for name, c in zip(names, pt)}
        row["re_u"], row["im_u"] = float(val.real), float(val.imag)
        rows.append(row)
    return StudyResult(config.kind, names + ("re_u", "im_u"), rows, not report.converged)


def run_study(config: StudyConfig) -> StudyResult:
    runners = {"uniform_convergence": _uniform, "k2h": _k2h, "adaptive": _adaptive, "single_solve": _single}
    return runners[config.kind](config)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------
def format_value(val) -> str:
    if val is None:
        return ""
    if isinstance(val, (bool, np.bool_)):
        return str(int(val))
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    return f"{float(val):.10e}"


def write_csv(result: StudyResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(result.columns)
        for row in result.rows:
            writer.writerow([format_value(row.get(col)) for col in result.columns])


def pretty_table(result: StudyResult) -> str:
    def short(val):
        if val is None:
            return "-"
        if isinstance(val, (int, np.integer)):
            return str(int(val))
        return f"{float(val):.3e}" if not isinstance(val, str) else val

    cols = [c for c in result.columns if c != "wall_time_s"] if result.kind != "single_solve" else result.columns
    cells = [[short(row.get(c)) + ("*" if c == "residual" and not row.get("converged", True) else "")
              for c in cols] for row in result.rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
    if any(not row.get("converged", True) for row in result.rows):
        lines.append("* solver did not reach the tolerance")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------
def _cmd_study(args) -> int:
    config = parse_config(args.config)
    out_dir = Path(args.output or config.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.config).stem
    with threadpool_limits(limits=args.threads):
        try:
            result = run_study(config)
        except SolverError as exc:
            log.error("solver failure: %s", exc)
            return EXIT_SOLVER
    csv_path = out_dir / f"{stem}.csv"
    write_csv(result, csv_path)
    if result.kind != "single_solve":
        table = pretty_table(result)
        (out_dir / f"{stem}.txt").write_text(table)
        print(table, end="")
    print(f"wrote {csv_path}")
    return EXIT_SOLVER if result.failed else EXIT_OK


def _cmd_mesh_info(args) -> int:
    try:
        mesh = meshmod.read_mesh(args.mesh)
    except (OSError, meshmod.MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for key, val in mesh.info().items():
        print(f"{key}: {val}")
    return EXIT_OK


def _cmd_dump_matrix(args) -> int:
    config = parse_config(args.config)
    problem = config.build_problem()
    system = assemble(level_mesh(problem, config.n, 0), config.degree, problem)
    write_matrix(system, args.out)
    print(f"wrote {system.matrix.nnz} entries of a {system.size}x{system.size} matrix to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dls", description="Discontinuous least-squares Helmholtz solver")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    st = sub.add_parser("study", help="run a convergence, k2h, adaptive or single-solve study")
    st.add_argument("config")
    st.add_argument("--output", help="output directory (overrides the config)")
    st.add_argument("--threads", type=int, default=None, help="BLAS thread limit")
    st.set_defaults(func=_cmd_study)
    mi = sub.add_parser("mesh-info", help="summarise a mesh file")
    mi.add_argument("mesh")
    mi.set_defaults(func=_cmd_mesh_info)
    dm = sub.add_parser("dump-matrix", help="write the first-level matrix in coordinate format")
    dm.add_argument("config")
    dm.add_argument("out")
    dm.set_defaults(func=_cmd_dump_matrix)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
