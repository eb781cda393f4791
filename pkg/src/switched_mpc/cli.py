"""Command-line experiment runner.

Subcommands run the two built-in examples, compute terminal sets, round a
relaxed plan, check the exhaustive oracle and sweep dwell lengths.  Every
run writes its results below an output root (``--out``, the
``SWITCHED_MPC_OUTPUT`` environment variable, or ``./out``).

Exit codes: 0 success, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .integrator import GridSpec, IntegrationDiverged
from .invariants import Polytope, SwitchedLinearSystem, compute_srci, verify_srci
from .model import ModelError, SwitchedModel, get_builtin
from .mpc import ClosedLoopTrace, SolverFailure, run_closed_loop, verify_dwell
from .ocp import SolverOptions, build, solve_fixed, solve_relaxed
from .oracle import best_plan
from .plan import ModePlan, block_layout
from .rounding import error_bound, max_integration_gap, sur_round

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "main", "run"]

log = logging.getLogger(__name__)

OUTPUT_ENV = "SWITCHED_MPC_OUTPUT"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 2, 3

_DEFAULTS = {
    "example1": {"N": 20, "dt": 0.1, "steps": 50, "x0": (-1.0, 1.0)},
    "example2": {"N": 40, "dt": 0.1, "steps": 80, "x0": (0.0,) * 6},
}


class ConfigError(ModelError):
    """Bad configuration; the message carries file and line when known."""


@dataclass
class SrciConfig:
    l: Optional[int] = None
    max_iter: int = 200
    samples: int = 1000
    lb: Optional[tuple] = None
    ub: Optional[tuple] = None
    matrices: tuple = ()
    continuous: bool = True


@dataclass
class OracleConfig:
    samples: int = 10


@dataclass
class SweepConfig:
    l_values: tuple = (2, 4, 5)
    workers: int = 1


@dataclass
class ExperimentConfig:
    model: str = "example1"
    N: int = 20
    dt: float = 0.1
    l: int = 1
    steps: int = 50
    x0: Optional[tuple] = None
    terminal_set: str = "off"
    seed: int = 0
    output_dir: Optional[str] = None
    solver: SolverOptions = field(default_factory=lambda: SolverOptions(soften=True))
    srci: SrciConfig = field(default_factory=SrciConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self):
        if self.model not in _DEFAULTS:
            raise ConfigError(f"unknown model {self.model!r}; choose from {sorted(_DEFAULTS)}")
        if self.l < 1:
            raise ConfigError(f"l must be >= 1, got {self.l}")
        if self.N < 1 or not self.dt > 0 or self.steps < 1:
            raise ConfigError("N, dt and steps must be positive")
        try:
            block_layout(self.N, self.l)
        except ModelError as exc:
            raise ConfigError(str(exc)) from None
        if self.terminal_set not in ("off", "srci"):
            raise ConfigError(f"terminal_set must be 'off' or 'srci', got {self.terminal_set!r}")
        return self


# ---------------------------------------------------------------------------
# configuration files

def _floats(text: str) -> tuple:
    return tuple(float(t) for t in re.split(r"[,\s]+", text.strip()) if t)


def _matrix(text: str) -> np.ndarray:
    rows = [r for r in text.split(";") if r.strip()]
    M = np.array([_floats(r) for r in rows])
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square, rows separated by ';'")
    return M


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_SCHEMA = {
    "experiment": {"model": str, "N": int, "dt": float, "l": int, "steps": int, "x0": _floats,
                   "terminal_set": str, "seed": int, "output_dir": str},
    "solver": {"tol_kkt": float, "tol_feas": float, "max_iter": int, "rho": float, "soften": _bool,
               "substeps": int, "hessian": str, "cold_restart": _bool, "dual_seed": _bool},
    "srci": {"l": int, "max_iter": int, "samples": int, "lb": _floats, "ub": _floats,
             "continuous": _bool},
    "oracle": {"samples": int},
    "sweep": {"l_values": lambda s: tuple(int(v) for v in _floats(s)), "workers": int},
}
_MATRIX_KEY = re.compile(r"^a\d+$")


def _line_of(lines: List[str], section: str, key: Optional[str] = None) -> int:
    cur = None
    for no, raw in enumerate(lines, 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return no
        elif key is not None and cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s, re.I):
            return no
    return 0


def load_config(path) -> ExperimentConfig:
    """Parse a sectioned ``key = value`` file into an :class:`ExperimentConfig`.

    Sections: ``experiment``, ``solver``, ``srci``, ``oracle``, ``sweep``.
    Unknown sections or keys are errors.  Model defaults (horizon, step,
    samples, initial state) fill in whatever the file leaves out.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    lines = text.splitlines()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None

    values = {}
    for section in parser.sections():
        where = f"{path}:{_line_of(lines, section)}"
        if section not in _SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"{path}:{_line_of(lines, section, key)}"
            if section == "srci" and _MATRIX_KEY.match(key.lower()):
                try:
                    values.setdefault(("srci", "matrices"), []).append((int(key[1:]), _matrix(raw)))
                except ValueError as exc:
                    raise ConfigError(f"{where}: [{section}] {key}: {exc}") from None
                continue
            conv = _SCHEMA[section].get(key)
            if conv is None:
                raise ConfigError(f"{where}: unknown key '{key}' in [{section}]")
            try:
                values[(section, key)] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{where}: [{section}] {key}: {exc}") from None

    model = values.get(("experiment", "model"), "example1")
    if model not in _DEFAULTS:
        raise ConfigError(f"{path}:{_line_of(lines, 'experiment', 'model')}: unknown model {model!r}")
    d = _DEFAULTS[model]
    ex = {k: v for (s, k), v in values.items() if s == "experiment"}
    cfg = ExperimentConfig(
        model=model,
        N=ex.get("N", d["N"]),
        dt=ex.get("dt", d["dt"]),
        l=ex.get("l", 1),
        steps=ex.get("steps", d["steps"]),
        x0=ex.get("x0", d["x0"]),
        terminal_set=ex.get("terminal_set", "off"),
        seed=ex.get("seed", 0),
        output_dir=ex.get("output_dir"),
    )
    solver = {k: v for (s, k), v in values.items() if s == "solver"}
    try:
        cfg.solver = replace(cfg.solver, **solver)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: [solver] {exc}") from None
    if cfg.solver.hessian not in ("gauss-newton", "bfgs"):
        raise ConfigError(f"{path}:{_line_of(lines, 'solver', 'hessian')}: "
                          f"hessian must be 'gauss-newton' or 'bfgs'")
    mats = sorted(values.pop(("srci", "matrices"), []))
    srci = {k: v for (s, k), v in values.items() if s == "srci"}
    cfg.srci = SrciConfig(**srci, matrices=tuple(m for _, m in mats))
    cfg.oracle = OracleConfig(**{k: v for (s, k), v in values.items() if s == "oracle"})
    cfg.sweep = SweepConfig(**{k: v for (s, k), v in values.items() if s == "sweep"})
    try:
        return cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# outputs

_PLOT_TRACE = '''"""Plot closed-loop traces written by switched-mpc.

usage: python plot_trace.py trace.csv [more.csv ...]
"""
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

OBSTACLES = {obstacles}
RADIUS = {radius}
TARGET = {target}


def load(path):
    with open(path) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    head, body = rows[0], rows[1:]
    col = {{c: j for j, c in enumerate(head)}}
    t = np.array([float(r[col["t"]]) for r in body])
    X = np.array([[float(r[j]) for c, j in col.items() if c.startswith("x")] for r in body])
    full = [r for r in body if r[col["mode_index"]] != ""]
    U = np.array([[float(r[j]) for c, j in col.items() if c.startswith("u")] for r in full])
    modes = np.array([int(r[col["mode_index"]]) for r in full])
    return t, X, U, modes


def main(paths):
    fig, ax = plt.subplots(3, 1, sharex=True, figsize=(7, 7))
    for path in paths:
        t, X, U, modes = load(path)
        for j in range(X.shape[1]):
            ax[0].plot(t, X[:, j], label=f"{{path}}: x{{j + 1}}")
        for j in range(U.shape[1] if U.ndim == 2 else 0):
            ax[1].step(t[:-1], U[:, j], where="post", label=f"u{{j + 1}}")
        ax[2].step(t[:-1], modes + 1, where="post", label=path)
    ax[0].set_ylabel("state")
    ax[1].set_ylabel("input")
    ax[2].set_ylabel("mode")
    ax[2].set_xlabel("t [s]")
    for a in ax:
        if a.lines:
            a.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig("trace.png", dpi=150)

    t, X, U, modes = load(paths[0])
    if X.shape[1] == 2:
        fig2, a2 = plt.subplots(figsize=(5, 5))
        a2.plot(X[:, 0], X[:, 1], "o-", ms=3)
        a2.set_xlabel("x1")
        a2.set_ylabel("x2")
        fig2.savefig("phase.png", dpi=150)
    elif X.shape[1] == 6:
        fig2 = plt.figure(figsize=(6, 6))
        a2 = fig2.add_subplot(projection="3d")
        a2.plot(X[:, 0], X[:, 1], X[:, 2])
        if TARGET is not None:
            a2.scatter(*TARGET[:3], color="k")
        u, v = np.mgrid[0:2 * np.pi:24j, 0:np.pi:12j]
        for c in OBSTACLES:
            a2.plot_wireframe(c[0] + RADIUS * np.cos(u) * np.sin(v), c[1] + RADIUS * np.sin(u) * np.sin(v),
                              c[2] + RADIUS * np.cos(v), color="grey", linewidth=0.3)
        fig2.savefig("position.png", dpi=150)
    plt.show()


if __name__ == "__main__":
    main(sys.argv[1:] or ["trace.csv"])
'''

_PLOT_SRCI = '''"""Plot a 2-D polytope written by switched-mpc srci (rows ``c1, c2, d``).

usage: python plot_srci.py srci.csv
"""
import sys

import matplotlib.pyplot as plt
import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection


def main(path, box={box}):
    H = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    C, d = H[:, :-1], H[:, -1]
    # Chebyshev centre as the interior point
    norms = np.linalg.norm(C, axis=1)
    lp = linprog([0, 0, -1], A_ub=np.hstack([C, norms[:, None]]), b_ub=d,
                 bounds=[(None, None), (None, None), (0, None)], method="highs")
    pts = HalfspaceIntersection(np.hstack([C, -d[:, None]]), lp.x[:2]).intersections
    hull = ConvexHull(pts)
    fig, ax = plt.subplots(figsize=(5, 5))
    ring = pts[np.append(hull.vertices, hull.vertices[0])]
    ax.fill(ring[:, 0], ring[:, 1], alpha=0.4, label="terminal set")
    (a, b), (c, e) = box
    ax.plot([a, c, c, a, a], [b, b, e, e, b], "k--", label="state box")
    ax.legend()
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    fig.savefig("srci.png", dpi=150)
    plt.show()


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "srci.csv")
'''


def _out_root(cli_value: Optional[str], cfg: Optional[ExperimentConfig] = None) -> Path:
    if cli_value:
        return Path(cli_value)
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ENV, "out"))


def _plot_script(model: SwitchedModel) -> str:
    if model.name == "example2":
        from .model import EX2_OBSTACLES, EX2_RADIUS
        obstacles, radius = repr(EX2_OBSTACLES.tolist()), repr(EX2_RADIUS)
    else:
        obstacles, radius = "[]", "0.0"
    target = "None" if model.target is None else f"np.array({model.target.tolist()!r})"
    return _PLOT_TRACE.format(obstacles=obstacles, radius=radius, target=target)


def metrics_line(trace: ClosedLoopTrace, l: int) -> str:
    return (f"E={trace.E:.6g} res={trace.res:.6g} "
            f"mean_nlp1_ms={1e3 * np.mean(trace.nlp1_time):.3f} "
            f"mean_nlp2_ms={1e3 * np.mean(trace.nlp2_time):.3f} "
            f"mean_round_ms={1e3 * np.mean(trace.round_time):.4f} "
            f"flagged={int(np.sum(trace.flagged))} dwell_ok={verify_dwell(trace.modes, l)}")


def _write_run(outdir: Path, trace: ClosedLoopTrace, model: SwitchedModel, l: int) -> str:
    outdir.mkdir(parents=True, exist_ok=True)
    trace.to_csv(outdir / "trace.csv")
    line = metrics_line(trace, l)
    (outdir / "metrics.txt").write_text(line + "\n")
    (outdir / "plot_trace.py").write_text(_plot_script(model))
    return line


# ---------------------------------------------------------------------------
# commands

def _terminal_set(model: SwitchedModel, cfg: ExperimentConfig):
    if cfg.terminal_set == "off":
        return None
    if model.linear_modes is None:
        raise ConfigError(f"model {model.name} has no linear modes; cannot build an l-SRCI terminal set")
    sys_ = SwitchedLinearSystem.from_continuous(model.linear_modes, cfg.dt, cfg.solver.substeps)
    res = compute_srci(Polytope.box(model.state_lb, model.state_ub), sys_, cfg.l)
    if not res.converged or res.empty:
        raise SolverFailure(f"no usable l-SRCI terminal set for l={cfg.l} "
                            f"(converged={res.converged}, empty={res.empty})")
    return res.polytope


def run_experiment(cfg: ExperimentConfig, outdir: Path) -> str:
    """Closed-loop run of ``cfg``; writes trace, metrics and plot script into ``outdir``."""
    model = get_builtin(cfg.model)
    grid = GridSpec(cfg.N, cfg.dt, cfg.solver.substeps)
    Xf = _terminal_set(model, cfg)
    try:
        trace = run_closed_loop(model, grid, cfg.l, np.array(cfg.x0), cfg.steps, cfg.solver, Xf)
    except SolverFailure as exc:
        if exc.trace is not None and exc.trace.n_steps:
            outdir.mkdir(parents=True, exist_ok=True)
            exc.trace.to_csv(outdir / "trace.partial.csv")
        raise
    return _write_run(outdir, trace, model, cfg.l)


def _cmd_example(args, name: str) -> int:
    if args.config:
        cfg = load_config(args.config)
        if cfg.model != name:
            raise ConfigError(f"{args.config}: model is {cfg.model!r}, expected {name!r}")
    else:
        d = _DEFAULTS[name]
        cfg = ExperimentConfig(model=name, N=d["N"], dt=d["dt"], steps=d["steps"], x0=d["x0"])
    if args.l is not None:
        cfg.l = args.l
    if name == "example1":
        if args.steps is not None:
            cfg.steps = args.steps
        if args.terminal_set is not None:
            cfg.terminal_set = "srci" if args.terminal_set == "on" else "off"
    elif args.horizon_seconds is not None:
        if not args.horizon_seconds > 0:
            raise ConfigError("--horizon-seconds must be positive")
        cfg.steps = max(1, int(round(args.horizon_seconds / cfg.dt)))
    cfg.validate()
    outdir = _out_root(args.out, cfg) / f"{name}_l{cfg.l}"
    line = run_experiment(cfg, outdir)
    print(line)
    print(f"wrote {outdir}")
    return EXIT_OK


def _cmd_srci(args) -> int:
    cfg = load_config(args.config)
    sc = cfg.srci
    l = sc.l if sc.l is not None else cfg.l
    if l < 1:
        raise ConfigError("srci needs l >= 1")
    if sc.matrices:
        n = sc.matrices[0].shape[0]
        if any(m.shape != (n, n) for m in sc.matrices):
            raise ConfigError("srci matrices must share one size")
        sys_ = (SwitchedLinearSystem.from_continuous(sc.matrices, cfg.dt, cfg.solver.substeps)
                if sc.continuous else SwitchedLinearSystem(sc.matrices))
        if sc.lb is None or sc.ub is None:
            raise ConfigError("srci with explicit matrices needs lb and ub")
        lb, ub = np.array(sc.lb), np.array(sc.ub)
    else:
        model = get_builtin(cfg.model)
        if model.linear_modes is None:
            raise ConfigError(f"model {cfg.model} has no linear modes")
        sys_ = SwitchedLinearSystem.from_continuous(model.linear_modes, cfg.dt, cfg.solver.substeps)
        lb = np.array(sc.lb) if sc.lb is not None else model.state_lb
        ub = np.array(sc.ub) if sc.ub is not None else model.state_ub
    if lb.size != sys_.n or ub.size != sys_.n or np.any(lb > ub):
        raise ConfigError("srci box bounds do not match the system dimension")
    res = compute_srci(Polytope.box(lb, ub), sys_, l, sc.max_iter)
    ok = (not res.empty) and verify_srci(res.polytope, sys_, l, sc.samples, cfg.seed)
    outdir = _out_root(args.out, cfg) / f"srci_l{l}"
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "srci.csv", "w") as fh:
        fh.write(f"# l={l} converged={res.converged} iterations={res.iterations} empty={res.empty}\n")
        for c, d in zip(res.polytope.C, res.polytope.d):
            fh.write(",".join(repr(float(v)) for v in c) + f",{float(d)!r}\n")
    if sys_.n == 2:
        (outdir / "plot_srci.py").write_text(_PLOT_SRCI.format(box=repr((tuple(lb), tuple(ub)))))
    print(f"converged={res.converged} iterations={res.iterations} rows={res.polytope.n_rows} "
          f"empty={res.empty} verified={ok}")
    print(f"wrote {outdir}")
    return EXIT_OK


def read_plan_csv(path, l: int, dt: float, Q: int, h: Optional[int] = None) -> ModePlan:
    """Rows are blocks, columns mode weights; ``#`` lines are comments."""
    try:
        B = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if B.shape[1] != Q:
        raise ConfigError(f"{path}: plan has {B.shape[1]} columns, --Q is {Q}")
    return ModePlan(B, l, l if h is None else h, dt)


def _fmt(v: float) -> str:
    return "%d" % v if float(v).is_integer() else repr(float(v))


def _cmd_round(args) -> int:
    if args.l < 1 or not args.dt > 0 or args.Q < 2:
        raise ConfigError("round needs --l >= 1, --dt > 0 and --Q >= 2")
    plan = read_plan_csv(args.input, args.l, args.dt, args.Q, args.h)
    binary = sur_round(plan)
    gap = max_integration_gap(plan, binary)
    text = "".join(",".join(_fmt(v) for v in row) + "\n" for row in binary.blocks)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(f"gap={gap!r} bound={error_bound(args.l, args.Q, args.dt)!r}", file=sys.stderr)
    return EXIT_OK


def _random_states(model: SwitchedModel, n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(model.state_lb, model.state_ub, size=(n, model.n_x))


def sandwich(model: SwitchedModel, grid: GridSpec, l: int, x0, opts: SolverOptions):
    """``(relaxed, oracle, pipeline)`` objectives for one initial state.

    The relaxed problem is nonconvex (mode weights multiply the state), so a
    cold SQP solve can stop at a local minimum above the best binary plan.
    The relaxed value is therefore the better of the cold solve and a solve
    seeded with the oracle's winning plan.
    """
    ocp = build(model, grid, l, x0=x0)
    rel = solve_relaxed(ocp, None, opts)
    ora = best_plan(model, grid, l, x0, opts)
    if ora.plan is not None:
        alt = solve_relaxed(ocp, solve_fixed(ocp, ora.plan, None, opts), opts)
        if alt.usable and (not rel.usable or alt.objective < rel.objective):
            rel = alt
    pipe = solve_fixed(ocp, sur_round(rel.mode_blocks), None, opts)
    return rel.objective, ora.objective, pipe.objective


def _cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    model = get_builtin(cfg.model)
    if cfg.model != "example1":
        raise ConfigError("oracle runs on example1 (random states drawn from its state box)")
    grid = GridSpec(cfg.N, cfg.dt, cfg.solver.substeps)
    outdir = _out_root(args.out, cfg) / f"oracle_N{cfg.N}_l{cfg.l}"
    outdir.mkdir(parents=True, exist_ok=True)
    ok_all = True
    with open(outdir / "oracle.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample"] + [f"x{j + 1}" for j in range(model.n_x)] + ["relaxed", "oracle", "pipeline", "ok"])
        for k, x0 in enumerate(_random_states(model, cfg.oracle.samples, cfg.seed)):
            r, o, p = sandwich(model, grid, cfg.l, x0, cfg.solver)
            tol = 1e-6 * max(1.0, abs(o))
            ok = r <= o + tol and o <= p + tol
            ok_all &= ok
            w.writerow([k] + [repr(float(v)) for v in x0] + [repr(r), repr(o), repr(p), ok])
            print(f"sample {k}: relaxed={r:.8g} oracle={o:.8g} pipeline={p:.8g} {'ok' if ok else 'VIOLATED'}")
    print(f"sandwich holds on all samples: {ok_all}")
    print(f"wrote {outdir}")
    return EXIT_OK


def _sweep_cell(cfg: ExperimentConfig, outdir: str):
    try:
        return cfg.l, run_experiment(cfg, Path(outdir)), None
    except (SolverFailure, ArithmeticError) as exc:
        return cfg.l, None, str(exc)


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    root = _out_root(args.out, cfg) / f"sweep_{cfg.model}"
    cells = []
    for l in cfg.sweep.l_values:
        c = replace(cfg, l=l)
        c.validate()
        cells.append((c, str(root / f"l{l}")))
    if cfg.sweep.workers > 1:
        with ProcessPoolExecutor(cfg.sweep.workers) as pool:
            results = list(pool.map(_sweep_cell, *zip(*cells)))
    else:
        results = [_sweep_cell(c, d) for c, d in cells]
    root.mkdir(parents=True, exist_ok=True)
    failed = False
    with open(root / "summary.txt", "w") as fh:
        for l, line, err in results:
            out = f"l={l} " + (line if line is not None else f"FAILED {err}")
            failed |= line is None
            fh.write(out + "\n")
            print(out)
    print(f"wrote {root}")
    return EXIT_SOLVER if failed else EXIT_OK


# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="switched-mpc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./out)")

    e1 = sub.add_parser("example1", help="two-mode linear regulator")
    e1.add_argument("--l", type=int, help="minimum dwell length in samples")
    e1.add_argument("--steps", type=int, help="closed-loop samples (default 50)")
    e1.add_argument("--terminal-set", choices=["on", "off"], help="enforce the l-SRCI terminal set")
    e1.add_argument("--config")
    common(e1)

    e2 = sub.add_parser("example2", help="bevel-tip needle steering")
    e2.add_argument("--l", type=int, help="minimum dwell length in samples")
    e2.add_argument("--horizon-seconds", type=float, help="closed-loop duration (default 8 s)")
    e2.add_argument("--config")
    common(e2)

    for name, helptext in (("srci", "compute an l-SRCI set"), ("oracle", "exhaustive-plan sandwich check"),
                           ("sweep", "run a grid of dwell lengths")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True)
        common(sp)

    r = sub.add_parser("round", help="sum-up rounding of a relaxed plan CSV")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--l", type=int, required=True)
    r.add_argument("--dt", type=float, required=True)
    r.add_argument("--Q", type=int, required=True)
    r.add_argument("--h", type=int, help="first-block length (default l)")
    r.add_argument("--out", dest="output", help="write the rounded plan here instead of stdout")
    return p


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"example1": lambda: _cmd_example(args, "example1"),
                "example2": lambda: _cmd_example(args, "example2"),
                "srci": lambda: _cmd_srci(args), "round": lambda: _cmd_round(args),
                "oracle": lambda: _cmd_oracle(args), "sweep": lambda: _cmd_sweep(args)}
    try:
        return handlers[args.command]()
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, IntegrationDiverged, ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
