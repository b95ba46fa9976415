"""Command line driver: single solves, convergence studies, viscosity sweeps, lattice vortex."""

import argparse
import configparser
import csv
import io
import logging
import sys as _sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .analysis import (
    compute_errors,
    convergence_table,
    max_velocity_magnitude,
    relative_velocity_errors,
    sparsity_stats,
)
from .assembly import DEFAULT_C_E, DEFAULT_C_HAT, SlabAssembler, StabParams
from .fe_spaces import FeSystem, interpolate_velocity
from .mesh import MeshError, barycentric_refine, benchmark_mesh, generate_uniform, load_mesh
from .problems import PROBLEM_NAMES, get_problem
from .slab_solver import SolveConfig, SolverError, TimeGrid, march
from .vtk import write_vtk

log = logging.getLogger("svdg")

ERROR_FIELDS = ("level", "h", "tau", "nu", "mode", "errU_L2", "errU_H1", "errP_L2", "div_norm", "rateU_L2", "rateU_H1", "rateP_L2")
NU_GRID = (1.0, 1e-3, 1e-5, 1e-7, 1e-9, 1e-11)
LEVEL_TAU = {1: 0.5, 2: 0.125, 3: 0.03125, 4: 0.0078125}


class ConfigError(ValueError):
    pass


def _floats(text):
    return tuple(float(s) for s in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    """Every run parameter; the INI section of each key is given in ``SECTIONS``."""

    problem: str = "convergence"
    nu: float = 0.0  # 0 selects the benchmark's own viscosity
    T: float = 0.0  # 0 selects the benchmark's own final time
    mode: str = "stab"
    c_E: float = DEFAULT_C_E
    c_hat: float = DEFAULT_C_HAT
    level: int = 2
    n: int = 0  # uniform subdivisions; 0 means use ``level``
    mesh_file: str = ""
    tau: float = 0.0  # 0 means the level's step
    slabs: int = 0
    picard_tol: float = 1e-9
    max_iter: int = 100
    linear_tol: float = 1e-11
    relaxation: float = 1.0
    initial: str = "interpolation"
    out: str = "out"
    vtk_times: tuple = ()
    levels: int = 3
    nus: tuple = NU_GRID
    sweep_level: int = 3
    lattice_n: int = 17
    lattice_tau: float = 0.01
    lattice_desk_T: float = 2.5
    lattice_full_T: float = 10.0
    snapshot_times: tuple = (2.5, 5.0, 10.0)

    SECTIONS = {
        "problem": ("problem", "nu", "T"),
        "stabilization": ("mode", "c_E", "c_hat"),
        "mesh": ("level", "n", "mesh_file"),
        "time": ("tau", "slabs", "initial"),
        "solver": ("picard_tol", "max_iter", "linear_tol", "relaxation"),
        "output": ("out", "vtk_times"),
        "convergence": ("levels",),
        "sweep": ("nus", "sweep_level"),
        "lattice": ("lattice_n", "lattice_tau", "lattice_desk_T", "lattice_full_T", "snapshot_times"),
    }

    def validate(self):
        if self.problem not in PROBLEM_NAMES:
            raise ConfigError(f"unknown problem {self.problem!r}; valid names: {', '.join(PROBLEM_NAMES)}")
        if self.mode not in ("stab", "no-stab"):
            raise ConfigError(f"mode must be 'stab' or 'no-stab', got {self.mode!r}")
        if self.initial != "interpolation":
            raise ConfigError("only nodal interpolation of the initial velocity is implemented")
        for name in ("picard_tol", "linear_tol", "lattice_tau", "lattice_desk_T", "lattice_full_T"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("nu", "T", "tau", "c_E", "c_hat"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 1 <= self.level <= 4 or not 1 <= self.sweep_level <= 4:
            raise ConfigError("mesh levels must lie in 1-4")
        if not 2 <= self.levels <= 4:
            raise ConfigError("convergence studies need 2-4 levels")
        if self.max_iter < 1 or self.n < 0 or self.slabs < 0:
            raise ConfigError("max_iter must be >= 1; n and slabs must be >= 0")
        if not 0 < self.relaxation <= 1:
            raise ConfigError("relaxation must lie in (0, 1]")
        if any(v <= 0 for v in self.nus):
            raise ConfigError("viscosities must be positive")
        return self

    # -- text round trip

    def to_text(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section, keys in self.SECTIONS.items():
            cp[section] = {k: _format(getattr(self, k)) for k in keys}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text, source="<config>"):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for section in cp.sections():
            if section not in cls.SECTIONS:
                raise ConfigError(f"{source}: unknown section [{section}]")
            for key, raw in cp[section].items():
                if key not in cls.SECTIONS[section]:
                    raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
                values[key] = _parse(types[key], raw, key)
        return replace(cls(), **values).validate()

    @classmethod
    def from_file(cls, path):
        return cls.from_text(Path(path).read_text(), str(path))


def _format(v):
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def _parse(typ, raw, key):
    raw = raw.strip()
    try:
        if typ in ("tuple", tuple):
            return _floats(raw)
        if typ in ("float", float):
            return float(raw)
        if typ in ("int", int):
            return int(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


# ---------------------------------------------------------------- runs


@dataclass
class Run:
    cfg: RunConfig
    problem: object
    sys: FeSystem
    grid: TimeGrid
    solve_cfg: SolveConfig
    params: StabParams
    level: object

    @property
    def h(self):
        return self.sys.mesh.h


def _mesh(cfg):
    if cfg.mesh_file:
        return load_mesh(cfg.mesh_file)
    if cfg.n:
        return barycentric_refine(generate_uniform(cfg.n))
    return benchmark_mesh(cfg.level)


def setup_run(cfg, mode=None, nu=None, level=None):
    mode = cfg.mode if mode is None else mode
    nu = (cfg.nu or None) if nu is None else nu
    if level is not None:
        cfg = replace(cfg, level=level, n=0, mesh_file="", tau=0.0, slabs=0)
    problem = get_problem(cfg.problem, nu)
    T = cfg.T or problem.T
    problem.T = T
    if cfg.slabs:
        grid = TimeGrid.from_slabs(T, cfg.slabs)
    else:
        grid = TimeGrid(T, cfg.tau or LEVEL_TAU[cfg.level])
    stabilized = mode == "stab"
    solve_cfg = SolveConfig(cfg.picard_tol, cfg.max_iter, cfg.linear_tol, cfg.relaxation, stabilized)
    sys = FeSystem(_mesh(cfg))
    tag = "" if (cfg.mesh_file or cfg.n) else cfg.level
    return Run(cfg, problem, sys, grid, solve_cfg, StabParams(problem.nu, cfg.c_E, cfg.c_hat), tag)


def first_system(run, assembler):
    """Slab system of the first fixed-point iteration of the first slab."""
    U0 = interpolate_velocity(run.problem.initial_velocity, run.sys)
    t0, t1 = run.grid.interval(0)
    bc_a = interpolate_velocity(run.problem.dirichlet, run.sys, t0)
    bc_b = interpolate_velocity(run.problem.dirichlet, run.sys, t1)
    return assembler.assemble(U0, U0, U0, t0, bc_a, bc_b)


def execute(run, callback=None, keep_states=False):
    assembler = SlabAssembler(run.sys, run.params, run.grid.tau, stabilized=run.solve_cfg.stabilized)
    result = march(run.grid, run.problem, run.solve_cfg, run.sys, run.params, keep_states, callback, assembler)
    return result, assembler


def error_row(run, result):
    rep = compute_errors(result.U, result.P, run.problem, run.sys, run.grid.T)
    div = max(max(r.div_a, r.div_b) for r in result.records)
    return {
        "level": run.level,
        "h": run.h,
        "tau": run.grid.tau,
        "nu": run.params.nu,
        "mode": run.solve_cfg.mode,
        "errU_L2": rep.errU_L2,
        "errU_H1": rep.errU_H1,
        "errP_L2": rep.errP_L2,
        "div_norm": div,
        "rateU_L2": None,
        "rateU_H1": None,
        "rateP_L2": None,
    }


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10e}"
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c] if isinstance(row, dict) else getattr(row, c)) for c in columns])


def write_slabs(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(records[0].FIELDS if records else ())
        for r in records:
            w.writerow([r.index, _cell(r.t0), _cell(r.t1), r.iterations, _cell(r.increment), _cell(r.residual), _cell(r.div_a), _cell(r.div_b), f"{r.wall_time:.3f}"])


def add_rates(rows):
    if len(rows) < 2:
        return rows
    rates = convergence_table(rows)
    for row, r in zip(rows, rates):
        row["rateU_L2"], row["rateU_H1"], row["rateP_L2"] = r["errU_L2"], r["errU_H1"], r["errP_L2"]
    return rows


def _modes(cfg, args):
    return ("no-stab",) if getattr(args, "no_stab", False) else ("stab", "no-stab")


def _vtk_name(t):
    return f"fields_t{t:g}.vtk"


# ---------------------------------------------------------------- commands


def cmd_solve(cfg, out):
    run = setup_run(cfg)
    times = sorted(t for t in cfg.vtk_times if 0 < t <= run.grid.T + 1e-12)

    def snap(state):
        for t in times:
            if abs(state.t1 - t) <= 1e-9 * max(1.0, t):
                write_vtk(out / _vtk_name(t), run.sys, state.U_b, state.P_b)

    result, asm = execute(run, callback=snap)
    write_csv(out / "errors.csv", [error_row(run, result)], ERROR_FIELDS)
    write_slabs(out / "slabs.csv", result.records)
    (out / "sparsity.txt").write_text(sparsity_stats(first_system(run, asm)).as_text())
    return result


def cmd_convergence(cfg, out, modes):
    rows = []
    for mode in modes:
        block = []
        for level in range(1, cfg.levels + 1):
            run = setup_run(cfg, mode=mode, level=level)
            log.info("convergence: %s level %d", mode, level)
            result, _ = execute(run)
            block.append(error_row(run, result))
        rows += add_rates(block)
    write_csv(out / "errors.csv", rows, ERROR_FIELDS)
    return rows


def cmd_nu_sweep(cfg, out, modes):
    rows = []
    for mode in modes:
        for nu in cfg.nus:
            run = setup_run(cfg, mode=mode, nu=nu, level=cfg.sweep_level)
            log.info("nu-sweep: %s nu=%g", mode, nu)
            result, _ = execute(run)
            rows.append(error_row(run, result))
    write_csv(out / "errors.csv", rows, ERROR_FIELDS)
    return rows


LATTICE_FIELDS = ("mode", "t", "relU_L2", "relU_H1", "max_speed")


def cmd_lattice(cfg, out, modes, full=False):
    T = cfg.lattice_full_T if full else cfg.lattice_desk_T
    base = replace(cfg, problem="lattice", n=cfg.lattice_n if not cfg.mesh_file else 0, tau=cfg.lattice_tau, slabs=0, T=T)
    series, snapshots, errors, sparsity = [], [], [], []
    times = sorted(t for t in cfg.snapshot_times if 0 < t <= T + 1e-12)
    for mode in modes:
        run = setup_run(base, mode=mode)
        sub = out / mode
        sub.mkdir(parents=True, exist_ok=True)

        def observe(state, run=run, mode=mode, sub=sub):
            l2, h1 = relative_velocity_errors(state.U_b, run.problem, run.sys, state.t1)
            speed = max_velocity_magnitude(state.U_b, run.sys)
            series.append({"mode": mode, "t": state.t1, "relU_L2": l2, "relU_H1": h1, "max_speed": speed})
            for t in times:
                if abs(state.t1 - t) <= 1e-9 * max(1.0, t):
                    write_vtk(sub / _vtk_name(t), run.sys, state.U_b, state.P_b)
                    snapshots.append({"mode": mode, "t": t, "relU_L2": l2, "relU_H1": h1, "max_speed": speed})

        log.info("lattice: %s, T=%g", mode, T)
        result, asm = execute(run, callback=observe)
        write_slabs(sub / "slabs.csv", result.records)
        errors.append(error_row(run, result))
        stats = sparsity_stats(first_system(run, asm))
        sparsity.append(f"[{mode}]\n{stats.as_text()}")
    write_csv(out / "lattice.csv", series, LATTICE_FIELDS)
    write_csv(out / "snapshots.csv", snapshots, LATTICE_FIELDS)
    write_csv(out / "errors.csv", errors, ERROR_FIELDS)
    (out / "sparsity.txt").write_text("\n".join(sparsity))
    return series, snapshots


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="svdg", description="Divergence-free space-time finite elements for incompressible flow.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [section] key = value entries")
    common.add_argument("--no-stab", action="store_true", help="drop the stabilizing forms")
    common.add_argument("--mesh-file", help="ASCII mesh replacing the built-in mesh")
    common.add_argument("--levels", type=int, help="number of refinement levels")
    common.add_argument("--out", help="output directory")
    common.add_argument("--full", action="store_true", help="lattice vortex up to the full final time")
    common.add_argument("--problem", help=f"one of {', '.join(PROBLEM_NAMES)}")
    common.add_argument("--nu", type=float, help="viscosity")
    common.add_argument("--level", type=int, help="built-in mesh level 1-4")
    common.add_argument("--tau", type=float, help="time step")
    common.add_argument("-v", "--verbose", action="store_true")
    for name in ("solve", "convergence", "nu-sweep", "lattice"):
        sub.add_parser(name, parents=[common])
    return p


def config_from_args(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    over = {}
    for key in ("problem", "nu", "level", "tau", "levels", "out", "mesh_file"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    if args.no_stab:
        over["mode"] = "no-stab"
    return replace(cfg, **over).validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
    except (ConfigError, OSError) as exc:
        print(f"svdg: error: {exc}", file=_sys.stderr)
        return 2
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo").write_text(cfg.to_text())
        modes = _modes(cfg, args)
        if args.command == "solve":
            cmd_solve(cfg, out)
        elif args.command == "convergence":
            cmd_convergence(cfg, out, modes)
        elif args.command == "nu-sweep":
            cmd_nu_sweep(cfg, out, modes)
        else:
            cmd_lattice(cfg, out, modes, full=args.full)
    except (MeshError, SolverError, ValueError, OSError) as exc:
        print(f"svdg: error: {exc}", file=_sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    _sys.exit(main())
