"""Fully discrete time stepping for the fractional viscoelastic system.

The semidiscrete system  M_rho dW/dt + K q(W) = F(t)  (q the product
quadrature approximation of the order 1-alpha integral) is advanced by a
trapezoidal step

    (1/dt) M_rho (W^{n+1} - W^n) + (1/2) K (q_{n+1}(W) + q_n(W))
        = (1/2) (F^{n+1} + F^n)

whose step operator A = (1/dt) M_rho + (scale/2) K is constant in time
because the newest quadrature weight is exactly one.  Homogeneous
Dirichlet conditions are imposed by symmetric elimination.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .fem import (FeSpace, Material, assemble_load, assemble_mass,
                  assemble_stiffness, elliptic_project)
from .fracquad import FracWeights
from .linalg import CgReport, SparseMatrix, cg_solve, eliminate_dirichlet


class SolverError(RuntimeError):
    """A time step failed; carries the step index in .step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class SeparableForce:
    """Body force sum_k s_k(t) * f_k(x, y) given as (s_k, f_k) pairs.

    The spatial parts are assembled once, so evaluating the load at a new
    time costs one small linear combination.
    """

    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __call__(self, x, y, t):
        parts = [np.asarray(s(t)) * np.asarray(f(x, y)) for s, f in self.terms]
        return sum(parts)


@dataclass
class ProblemSetup:
    """Everything one transient solve needs.

    body_force is None, a callable (x, y, t) -> (..., 2), or a
    SeparableForce.  traction is None or a callable (x, y, t) -> (..., 2)
    integrated over the non-Dirichlet sides.  w0_grad (analytic gradient
    of the initial velocity) feeds the energy projection of the initial
    datum; both w0 fields None means starting from rest.
    """

    space: FeSpace
    material: Material
    t_final: float
    n_steps: int
    body_force: object = None
    traction: object = None
    w0_value: object = None
    w0_grad: object = None
    cg_tol: float = 1e-10
    cg_max_iter: int = 5000
    jacobi: bool = False

    def __post_init__(self):
        if self.t_final <= 0.0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be at least 1, got {self.n_steps}")
        if len(self.space.dirichlet_dofs) == 0:
            raise ValueError("the Dirichlet boundary must be nonempty")
        if (self.w0_value is None) != (self.w0_grad is None):
            raise ValueError("provide both w0_value and w0_grad, or neither")

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps


@dataclass
class SolveRecord:
    """Trajectory and diagnostics of one transient solve."""

    steps: np.ndarray                     # (n_steps + 1, n_dofs)
    cg_reports: list = field(default_factory=list)
    wall_times: dict = field(default_factory=dict)
    max_residual: float = 0.0             # from sampled step re-verification

    @property
    def final(self) -> np.ndarray:
        return self.steps[-1]


def _rhs_core(mass: SparseMatrix, stiffness: SparseMatrix, weights: FracWeights,
              history: np.ndarray, f_n: np.ndarray, f_np1: np.ndarray,
              dirichlet: np.ndarray) -> np.ndarray:
    """Right-hand side of the step from t_n to t_{n+1}.

    history holds rows W^0 .. W^n.  The stiffness acts on the combined
    weight sum of q_{n+1} (old rows only) and q_n, exploiting linearity to
    apply K once.
    """
    hist = np.asarray(history, dtype=np.float64)
    n = hist.shape[0] - 1
    coeff = weights.row(n + 1)[: n + 1].copy()
    if n >= 1:
        coeff += weights.row(n)
    s = coeff @ hist
    b = (mass @ hist[n]) / weights.dt \
        - 0.5 * weights.scale * (stiffness @ s) \
        + 0.5 * (f_n + f_np1)
    if dirichlet.size:
        b[dirichlet] = 0.0
    return b


class TimeStepper:
    """Advances the discrete system given assembled operators.

    Independent of the finite element layer: any SPD mass/stiffness pair
    works, which is handy for reduced test problems.  loads maps a step
    index n to the load vector F(t_n); None means no load.
    """

    def __init__(self, mass: SparseMatrix, stiffness: SparseMatrix,
                 weights: FracWeights, dirichlet=None, loads=None,
                 cg_tol: float = 1e-10, cg_max_iter: int = 5000,
                 jacobi: bool = False):
        if mass.nrows != stiffness.nrows:
            raise ValueError("mass and stiffness sizes differ")
        self.mass = mass
        self.stiffness = stiffness
        self.weights = weights
        self.dirichlet = (np.asarray(dirichlet, dtype=np.int64)
                          if dirichlet is not None else np.zeros(0, dtype=np.int64))
        self.loads = loads
        self.cg_tol = cg_tol
        self.cg_max_iter = cg_max_iter
        self.jacobi = jacobi
        A_raw = (1.0 / weights.dt) * mass + (0.5 * weights.scale) * stiffness
        constrained = [(int(i), 0.0) for i in self.dirichlet]
        self.matrix, _ = eliminate_dirichlet(A_raw, np.zeros(mass.nrows), constrained)

    def load_at(self, n: int) -> np.ndarray:
        if self.loads is None:
            return np.zeros(self.mass.nrows)
        return self.loads(n)

    def rhs(self, n: int, history, f_n=None, f_np1=None) -> np.ndarray:
        if f_n is None:
            f_n = self.load_at(n)
        if f_np1 is None:
            f_np1 = self.load_at(n + 1)
        return _rhs_core(self.mass, self.stiffness, self.weights,
                         history, f_n, f_np1, self.dirichlet)

    def advance(self, w0: np.ndarray) -> tuple[np.ndarray, list]:
        """Run all n_steps steps from W^0 = w0; returns (history, cg reports)."""
        N = self.weights.n_steps
        m = self.mass.nrows
        hist = np.zeros((N + 1, m))
        hist[0] = w0
        if self.dirichlet.size:
            hist[0, self.dirichlet] = 0.0
        reports = []
        f_n = self.load_at(0)
        for n in range(N):
            f_np1 = self.load_at(n + 1)
            b = _rhs_core(self.mass, self.stiffness, self.weights,
                          hist[: n + 1], f_n, f_np1, self.dirichlet)
            x, rep = cg_solve(self.matrix, b, tol=self.cg_tol,
                              max_iter=self.cg_max_iter, x0=hist[n],
                              jacobi=self.jacobi)
            reports.append(rep)
            if not rep.converged:
                raise SolverError(
                    f"CG stalled at step {n}: residual "
                    f"{rep.final_relative_residual:g} after {rep.iterations} iterations",
                    step=n)
            hist[n + 1] = x
            f_n = f_np1
        return hist, reports

    def residual(self, n: int, history) -> float:
        """Relative residual of step n recomputed from scratch."""
        b = self.rhs(n, history[: n + 1])
        r = self.matrix @ history[n + 1] - b
        denom = max(float(np.linalg.norm(b)), 1e-300)
        return float(np.linalg.norm(r)) / denom


def _build_stepper(setup: ProblemSetup) -> tuple[TimeStepper, dict]:
    times = {}
    t0 = time.perf_counter()
    mass = assemble_mass(setup.space, setup.material.rho)
    stiffness = assemble_stiffness(setup.space, setup.material)
    times["assembly"] = time.perf_counter() - t0

    weights = FracWeights(alpha=setup.material.alpha, n_steps=setup.n_steps,
                          dt=setup.dt)
    dt = setup.dt
    space = setup.space

    t0 = time.perf_counter()
    if setup.body_force is None and setup.traction is None:
        loads = None
    elif isinstance(setup.body_force, SeparableForce) and setup.traction is None:
        vecs = [assemble_load(space, f=f_k) for _s, f_k in setup.body_force.terms]
        factors = [s_k for s_k, _f in setup.body_force.terms]

        def loads(n, _vecs=vecs, _factors=factors, _dt=dt):
            t = n * _dt
            out = np.zeros(space.n_dofs)
            for s_k, v_k in zip(_factors, _vecs):
                out += float(s_k(t)) * v_k
            return out
    else:
        def loads(n, _dt=dt):
            t = n * _dt
            f_t = None
            if setup.body_force is not None:
                def f_t(x, y, _t=t):
                    return setup.body_force(x, y, _t)
            g_t = None
            if setup.traction is not None:
                def g_t(x, y, _t=t):
                    return setup.traction(x, y, _t)
            return assemble_load(space, f=f_t, gN=g_t)
    times["load_setup"] = time.perf_counter() - t0

    stepper = TimeStepper(mass, stiffness, weights,
                          dirichlet=space.dirichlet_dofs, loads=loads,
                          cg_tol=setup.cg_tol, cg_max_iter=setup.cg_max_iter,
                          jacobi=setup.jacobi)
    return stepper, times


def step_matrix(setup: ProblemSetup) -> SparseMatrix:
    """Constant step operator (1/dt) M_rho + (scale/2) K, constraints applied."""
    stepper, _times = _build_stepper(setup)
    return stepper.matrix


def step_rhs(setup: ProblemSetup, weights: FracWeights, history,
             f_n: np.ndarray, f_np1: np.ndarray) -> np.ndarray:
    """Right-hand side for the step leaving t_n, from explicit load vectors."""
    mass = assemble_mass(setup.space, setup.material.rho)
    stiffness = assemble_stiffness(setup.space, setup.material)
    return _rhs_core(mass, stiffness, weights, history, f_n, f_np1,
                     setup.space.dirichlet_dofs)


def run(setup: ProblemSetup) -> SolveRecord:
    """Project the initial datum, march all steps, spot-check residuals."""
    stepper, times = _build_stepper(setup)

    t0 = time.perf_counter()
    if setup.w0_grad is not None:
        w0 = elliptic_project(setup.space, setup.material, setup.w0_grad)
    else:
        w0 = np.zeros(setup.space.n_dofs)
    times["projection"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    hist, reports = stepper.advance(w0)
    times["stepping"] = time.perf_counter() - t0

    if not np.isfinite(hist).all():
        raise SolverError("non-finite values in the computed trajectory")

    rng = np.random.default_rng(setup.n_steps)
    sample = rng.choice(setup.n_steps, size=min(3, setup.n_steps), replace=False)
    max_res = max(stepper.residual(int(n), hist) for n in sample)

    hist.setflags(write=False)
    return SolveRecord(steps=hist, cg_reports=reports, wall_times=times,
                       max_residual=max_res)


def verify_record(setup: ProblemSetup, record: SolveRecord, steps=None) -> float:
    """Max relative residual of the recorded trajectory at chosen steps.

    steps defaults to every step (intended for small problems).
    """
    stepper, _times = _build_stepper(setup)
    if steps is None:
        steps = range(setup.n_steps)
    worst = 0.0
    for n in steps:
        worst = max(worst, stepper.residual(int(n), record.steps))
    return worst
