"""Convergence studies over mesh/step sweeps, with CSV and figure output.

A study solves the manufactured problem on a grid of (h, dt) pairs and
reports errors at the final time.  Meshes are labelled by the inverse
cell count (h-list entry m means an m-by-m grid, written as h = 1/m),
steps by the inverse count (dt-list entry m means dt = T/m).

Emitted rates are always recomputed from the errors exactly as printed,
so every rate in a CSV can be reproduced from that CSV alone.
"""

from __future__ import annotations

import math
import subprocess
import time
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .fem import FeSpace, error_norms
from .manufactured import ManufacturedCase, example1, example2
from .mesh import build_unit_square, write_text
from .linalg import CgError
from .solver import ProblemSetup, SeparableForce, SolveRecord, SolverError, run

MODES = ("table", "rates", "diagonal", "single")
EXAMPLES = ("example1", "example2")
NORMS = ("l2", "h1", "energy")


class ConfigError(ValueError):
    """Invalid study configuration."""


@dataclass
class StudyConfig:
    example: str = "example1"
    alpha: float = 0.5
    t_final: float = 1.0
    degree: int = 1
    h_list: tuple = (2, 4, 8, 16, 32, 64)
    dt_list: tuple = (8, 16, 32, 64, 128, 256, 512)
    rho: float = 1.0
    lambda_hat: float = 0.0
    mu_hat: float = 0.5
    cg_tol: float = 1e-10
    cg_max_iter: int = 5000
    jacobi: bool = False
    mode: str = "table"
    out: str = "study"
    precision: int = 4
    plot: bool = True
    check: bool = False
    dump_steps: str | None = None
    dump_mesh: str | None = None

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ConfigError(f"unknown example {self.example!r}; choose from {EXAMPLES}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.t_final <= 0.0:
            raise ConfigError(f"T must be positive, got {self.t_final}")
        if self.degree not in (1, 2):
            raise ConfigError(f"degree must be 1 or 2, got {self.degree}")
        for name, lst in (("h-list", self.h_list), ("dt-list", self.dt_list)):
            vals = tuple(lst)
            if not vals:
                raise ConfigError(f"{name} must not be empty")
            if any(int(v) != v or v < 1 for v in vals):
                raise ConfigError(f"{name} entries must be positive integers, got {vals}")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError(f"{name} must be strictly increasing, got {vals}")
        self.h_list = tuple(int(v) for v in self.h_list)
        self.dt_list = tuple(int(v) for v in self.dt_list)
        if self.rho <= 0.0:
            raise ConfigError(f"rho must be positive, got {self.rho}")
        if self.mu_hat <= 0.0:
            raise ConfigError(f"mu-hat must be positive, got {self.mu_hat}")
        if self.lambda_hat < 0.0:
            raise ConfigError(f"lambda-hat must be nonnegative, got {self.lambda_hat}")
        if self.cg_tol <= 0.0:
            raise ConfigError(f"cg-tol must be positive, got {self.cg_tol}")
        if self.cg_max_iter < 1:
            raise ConfigError(f"cg-maxiter must be at least 1, got {self.cg_max_iter}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.precision < 2 or self.precision > 17:
            raise ConfigError(f"precision must lie in 2..17, got {self.precision}")
        if self.mode == "rates" and len(self.dt_list) != 1:
            raise ConfigError("rates mode needs exactly one dt-list entry")
        if self.mode == "diagonal":
            for m in self.h_list:
                n = self.t_final * m
                if abs(n - round(n)) > 1e-9 or round(n) < 1:
                    raise ConfigError(
                        f"diagonal mode needs T*m to be a positive integer; "
                        f"T={self.t_final}, m={m}")
        if self.dump_steps is not None and self.mode != "single":
            raise ConfigError("--dump-steps only applies to single mode")

    def case(self) -> ManufacturedCase:
        maker = example1 if self.example == "example1" else example2
        return maker(alpha=self.alpha, rho=self.rho,
                     lambda_hat=self.lambda_hat, mu_hat=self.mu_hat)

    def summary(self) -> str:
        parts = []
        for f in fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)}")
        return " ".join(parts)


@dataclass
class CellResult:
    n_cells: int
    n_steps: int
    h: float
    dt: float
    l2: float
    h1: float
    energy: float
    cg_iters: int
    seconds: float


@dataclass
class StudyResult:
    config: StudyConfig
    cells: list = field(default_factory=list)
    files: list = field(default_factory=list)
    check_ok: bool = True
    check_messages: list = field(default_factory=list)


def _code_version() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=here, capture_output=True, text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"fracvisco-{__version__}"


class StudyRunner:
    """Runs cells of a sweep, caching spaces across step counts."""

    def __init__(self, config: StudyConfig):
        self.config = config
        self.case = config.case()
        self._spaces: dict = {}

    def space(self, n_cells: int) -> FeSpace:
        if n_cells not in self._spaces:
            mesh = build_unit_square(n_cells)
            self._spaces[n_cells] = FeSpace(mesh, self.config.degree)
        return self._spaces[n_cells]

    def solve_cell(self, n_cells: int, n_steps: int,
                   keep_record: bool = False) -> CellResult | tuple:
        cfg = self.config
        space = self.space(n_cells)
        setup = ProblemSetup(
            space=space, material=self.case.material, t_final=cfg.t_final,
            n_steps=n_steps, body_force=SeparableForce(tuple(self.case.force_terms())),
            cg_tol=cfg.cg_tol, cg_max_iter=cfg.cg_max_iter, jacobi=cfg.jacobi)
        t0 = time.perf_counter()
        record = run(setup)
        seconds = time.perf_counter() - t0
        T = cfg.t_final

        def exact(x, y):
            return self.case.velocity(x, y, T)

        def exact_grad(x, y):
            return self.case.velocity_gradient(x, y, T)

        l2, h1, en = error_norms(space, record.final, exact, exact_grad,
                                 self.case.material)
        iters = max((r.iterations for r in record.cg_reports), default=0)
        cell = CellResult(n_cells=n_cells, n_steps=n_steps,
                          h=1.0 / n_cells, dt=T / n_steps,
                          l2=l2, h1=h1, energy=en, cg_iters=iters, seconds=seconds)
        return (cell, record) if keep_record else cell


def _fmt(value: float, precision: int) -> str:
    return f"{value:.{precision - 1}e}"


def _printed(value: float, precision: int) -> float:
    return float(_fmt(value, precision))


def rate(e_coarse: float, e_fine: float, h_coarse: float, h_fine: float) -> float:
    """Observed order between two refinements."""
    return (math.log(e_coarse) - math.log(e_fine)) / (math.log(h_coarse) - math.log(h_fine))


def _header_lines(config: StudyConfig, title: str) -> list:
    return [
        f"# fracvisco {title}",
        f"# config: {config.summary()}",
        f"# code_version: {_code_version()}",
        "# rates are computed from the errors as printed above this precision",
        f"# generated: {datetime.now(timezone.utc).isoformat()}",
    ]


def _write_lines(path, lines) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _rate_column(cells, errs_printed) -> list:
    out = [""]
    for i in range(1, len(cells)):
        r = rate(errs_printed[i - 1], errs_printed[i], cells[i - 1].h, cells[i].h)
        out.append(f"{r:.2f}")
    return out


def _rows_with_rates(cells, precision, include_dt) -> list:
    printed = {norm: [_printed(getattr(c, norm), precision) for c in cells]
               for norm in NORMS}
    rates = {norm: _rate_column(cells, printed[norm]) for norm in NORMS}
    rows = []
    for i, c in enumerate(cells):
        row = [repr(c.h)]
        if include_dt:
            row.append(repr(c.dt))
        for norm in NORMS:
            row.append(_fmt(getattr(c, norm), precision))
            row.append(rates[norm][i])
        row.append(str(c.cg_iters))
        row.append(f"{c.seconds:.3f}")
        rows.append(",".join(row))
    return rows


def _fit_slope(hs, errs) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def _render_figure(config: StudyConfig, cells, path, title: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    hs = np.array([c.h for c in cells])
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    markers = {"l2": "o", "h1": "s", "energy": "^"}
    labels = {"l2": "L2", "h1": "H1", "energy": "energy"}
    for norm in NORMS:
        errs = np.array([getattr(c, norm) for c in cells])
        slope = _fit_slope(hs, errs) if len(cells) > 1 else float("nan")
        ax.loglog(hs, errs, marker=markers[norm],
                  label=f"{labels[norm]} (slope {slope:.2f})")
    k = config.degree
    anchor = np.array([getattr(c, "l2") for c in cells])[-1]
    for order, style in ((k, ":"), (k + 1, "--")):
        ref = anchor * (hs / hs[-1]) ** order
        ax.loglog(hs, ref, style, color="gray", linewidth=1.0,
                  label=f"order {order}")
    ax.set_xlabel("h")
    ax.set_ylabel("error at t = T")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _maybe_dump_mesh(config: StudyConfig, runner: StudyRunner, result: StudyResult) -> None:
    if config.dump_mesh is not None:
        write_text(runner.space(config.h_list[0]).mesh, config.dump_mesh)
        result.files.append(config.dump_mesh)


def run_table(config: StudyConfig) -> StudyResult:
    """Full (h, dt) sweep; one CSV per norm, rows h, columns dt."""
    runner = StudyRunner(config)
    result = StudyResult(config=config)
    T = config.t_final
    grid = {}
    for m in config.h_list:
        for n in config.dt_list:
            try:
                cell = runner.solve_cell(m, n)
            except (SolverError, CgError) as exc:
                raise SolverError(f"cell h=1/{m} dt={T}/{n} failed: {exc}",
                                  step=getattr(exc, "step", None)) from exc
            grid[(m, n)] = cell
            result.cells.append(cell)

    for norm in NORMS:
        lines = _header_lines(config, f"table study ({norm} errors at t = {T})")
        cols = ["h"] + [repr(T / n) for n in config.dt_list]
        lines.append(",".join(cols))
        for m in config.h_list:
            row = [repr(1.0 / m)]
            for n in config.dt_list:
                row.append(_fmt(getattr(grid[(m, n)], norm), config.precision))
            lines.append(",".join(row))
        path = f"{config.out}_table_{norm}.csv"
        _write_lines(path, lines)
        result.files.append(path)

    _maybe_dump_mesh(config, runner, result)
    return result


def run_spatial_rates(config: StudyConfig) -> StudyResult:
    """Refine in space at one fixed dt; emit errors with observed orders."""
    runner = StudyRunner(config)
    result = StudyResult(config=config)
    n = config.dt_list[0]
    cells = []
    for m in config.h_list:
        try:
            cells.append(runner.solve_cell(m, n))
        except (SolverError, CgError) as exc:
            raise SolverError(f"cell h=1/{m} dt={config.t_final}/{n} failed: {exc}",
                              step=getattr(exc, "step", None)) from exc
    result.cells = cells

    lines = _header_lines(config, f"spatial rate study (dt = {config.t_final}/{n})")
    lines.append("h,l2,l2_rate,h1,h1_rate,energy,energy_rate,cg_iters,runtime_s")
    lines.extend(_rows_with_rates(cells, config.precision, include_dt=False))
    path = f"{config.out}_rates.csv"
    _write_lines(path, lines)
    result.files.append(path)

    if config.plot:
        fig_path = f"{config.out}_rates.png"
        _render_figure(config, cells, fig_path,
                       f"{config.example}, degree {config.degree}, "
                       f"dt = {config.t_final}/{n}")
        result.files.append(fig_path)

    if config.check:
        _check_rates(config, cells, result)
    _maybe_dump_mesh(config, runner, result)
    return result


def run_diagonal(config: StudyConfig) -> StudyResult:
    """Refine h and dt together (dt = h); emit errors, rates and .dat files."""
    runner = StudyRunner(config)
    result = StudyResult(config=config)
    cells = []
    for m in config.h_list:
        n = int(round(config.t_final * m))
        try:
            cells.append(runner.solve_cell(m, n))
        except (SolverError, CgError) as exc:
            raise SolverError(f"cell h=dt=1/{m} failed: {exc}",
                              step=getattr(exc, "step", None)) from exc
    result.cells = cells

    lines = _header_lines(config, "diagonal study (dt = h)")
    lines.append("h,dt,l2,l2_rate,h1,h1_rate,energy,energy_rate,cg_iters,runtime_s")
    lines.extend(_rows_with_rates(cells, config.precision, include_dt=True))
    path = f"{config.out}_diagonal.csv"
    _write_lines(path, lines)
    result.files.append(path)

    for norm in NORMS:
        dat = _header_lines(config, f"diagonal study log-log data ({norm})")
        dat.append("# log10(h) log10(error)")
        for c in cells:
            dat.append(f"{math.log10(c.h)!r} {math.log10(getattr(c, norm))!r}")
        dat_path = f"{config.out}_diagonal_{norm}.dat"
        _write_lines(dat_path, dat)
        result.files.append(dat_path)

    if config.plot:
        fig_path = f"{config.out}_diagonal.png"
        _render_figure(config, cells, fig_path,
                       f"{config.example}, degree {config.degree}, dt = h")
        result.files.append(fig_path)

    if config.check:
        _check_diagonal(config, cells, result)
    _maybe_dump_mesh(config, runner, result)
    return result


def run_single(config: StudyConfig) -> StudyResult:
    """One solve at the first (h, dt) pair; optional trajectory dump."""
    runner = StudyRunner(config)
    result = StudyResult(config=config)
    m = config.h_list[0]
    n = config.dt_list[0]
    cell, record = runner.solve_cell(m, n, keep_record=True)
    result.cells = [cell]

    lines = _header_lines(config, "single solve")
    lines.append("h,dt,l2,h1,energy,cg_iters,runtime_s")
    lines.append(",".join([repr(cell.h), repr(cell.dt),
                           _fmt(cell.l2, config.precision),
                           _fmt(cell.h1, config.precision),
                           _fmt(cell.energy, config.precision),
                           str(cell.cg_iters), f"{cell.seconds:.3f}"]))
    path = f"{config.out}_single.csv"
    _write_lines(path, lines)
    result.files.append(path)

    if config.dump_steps is not None:
        _dump_steps(config, record, cell.dt)
        result.files.append(config.dump_steps)
    _maybe_dump_mesh(config, runner, result)
    return result


def _dump_steps(config: StudyConfig, record: SolveRecord, dt: float) -> None:
    lines = ["# step t dof values (one step per line)"]
    n_steps, m = record.steps.shape
    lines.append(f"# {n_steps} lines, {m} dofs")
    for i in range(n_steps):
        vals = " ".join(repr(float(v)) for v in record.steps[i])
        lines.append(f"{i} {i * dt!r} {vals}")
    _write_lines(config.dump_steps, lines)


def _final_rate(cells, norm, precision) -> float:
    printed = [_printed(getattr(c, norm), precision) for c in cells]
    return rate(printed[-2], printed[-1], cells[-2].h, cells[-1].h)


def _check_rates(config: StudyConfig, cells, result: StudyResult) -> None:
    if len(cells) < 2:
        result.check_ok = False
        result.check_messages.append("check needs at least two refinements")
        return
    k = config.degree
    r_l2 = _final_rate(cells, "l2", config.precision)
    r_h1 = _final_rate(cells, "h1", config.precision)
    ok_l2 = abs(r_l2 - (k + 1)) <= 0.15
    ok_h1 = abs(r_h1 - k) <= 0.10
    result.check_messages.append(
        f"finest L2 rate {r_l2:.2f} (target {k + 1} +- 0.15): "
        f"{'ok' if ok_l2 else 'FAIL'}")
    result.check_messages.append(
        f"finest H1 rate {r_h1:.2f} (target {k} +- 0.10): "
        f"{'ok' if ok_h1 else 'FAIL'}")
    result.check_ok = ok_l2 and ok_h1


def _check_diagonal(config: StudyConfig, cells, result: StudyResult) -> None:
    if len(cells) < 2:
        result.check_ok = False
        result.check_messages.append("check needs at least two refinements")
        return
    case = config.case()
    r_l2 = _final_rate(cells, "l2", config.precision)
    if case.optimal_time_order:
        lo, hi = 1.8, 2.2
        note = "second order (smooth time factor)"
    else:
        # dominated by the reduced time order near the finest levels
        lo, hi = 1.5, 2.0 - config.alpha + 0.4
        note = "reduced order (limited time regularity)"
    ok = lo <= r_l2 <= hi
    result.check_messages.append(
        f"final diagonal L2 rate {r_l2:.2f} in [{lo:.2f}, {hi:.2f}] ({note}): "
        f"{'ok' if ok else 'FAIL'}")
    result.check_ok = ok


def run_study(config: StudyConfig) -> StudyResult:
    if config.mode == "table":
        return run_table(config)
    if config.mode == "rates":
        return run_spatial_rates(config)
    if config.mode == "diagonal":
        return run_diagonal(config)
    return run_single(config)
