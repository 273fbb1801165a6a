"""Product quadrature for the Riemann-Liouville integral of order 1 - alpha.

The integral (I^{1-a} f)(t) = 1/Gamma(1-a) int_0^t (t-s)^(-a) f(s) ds is
approximated at grid points t_n = n dt by integrating the kernel exactly
against the piecewise linear interpolant of f.  This yields

    q_n(f) = dt^(1-a) / Gamma(3-a) * sum_{i=0}^{n} B[n, i] f(t_i)

with convolution-style weights B.  The approximation is second order in dt
for twice continuously differentiable f, and q_0 = 0 by definition (the
integral over an empty interval).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gamma

import numpy as np


@dataclass(frozen=True)
class FracWeights:
    """Weight table for the product quadrature on a uniform grid.

    Weights satisfy B[n, n] = 1 exactly, 0 < B[n, i] < 2, and interior
    weights depend only on the lag n - i, which is what row() exploits.

    Parameters
    ----------
    alpha : fractional order in (0, 1); the integral order is 1 - alpha.
    n_steps : number of time steps N (rows are valid for 0 <= n <= N).
    dt : step size, positive.
    """

    alpha: float
    n_steps: int
    dt: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be at least 1, got {self.n_steps}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        # powers j^(2 - alpha) for j = 0..N+1, and the interior kernel
        # c[m] = (m-1)^(2-a) + (m+1)^(2-a) - 2 m^(2-a) so B[n, i] = c[n - i]
        p = np.arange(self.n_steps + 2, dtype=np.float64) ** (2.0 - self.alpha)
        c = np.empty(self.n_steps + 1)
        c[0] = np.nan  # lag 0 is the B[n, n] = 1 case, never read from c
        c[1:] = p[:-2] + p[2:] - 2.0 * p[1:-1]
        object.__setattr__(self, "_pow", p)
        object.__setattr__(self, "_kernel", c)

    @property
    def scale(self) -> float:
        """Common prefactor dt^(1 - alpha) / Gamma(3 - alpha)."""
        return self.dt ** (1.0 - self.alpha) / gamma(3.0 - self.alpha)

    def weight(self, n: int, i: int) -> float:
        """Single weight B[n, i] from the closed form."""
        if not 1 <= n <= self.n_steps:
            raise ValueError(f"row index {n} outside 1..{self.n_steps}")
        if not 0 <= i <= n:
            raise ValueError(f"weight index {i} outside 0..{n}")
        a = self.alpha
        if i == n:
            return 1.0
        if i == 0:
            return n ** (1.0 - a) * (2.0 - a - n) + (n - 1) ** (2.0 - a)
        m = n - i
        return float((m - 1) ** (2.0 - a) + (m + 1) ** (2.0 - a) - 2.0 * m ** (2.0 - a))

    def row(self, n: int) -> np.ndarray:
        """All weights B[n, 0..n] of one row, using the cached kernel."""
        if not 1 <= n <= self.n_steps:
            raise ValueError(f"row index {n} outside 1..{self.n_steps}")
        out = np.empty(n + 1)
        out[0] = n ** (1.0 - self.alpha) * (2.0 - self.alpha - n) \
            + self._pow[n - 1]
        if n >= 2:
            out[1:n] = self._kernel[n - 1:0:-1]
        out[n] = 1.0
        return out


def qn_apply(weights: FracWeights, history) -> np.ndarray:
    """Evaluate q_n on a history of vectors (rows f(t_0) .. f(t_n)).

    Returns scale * sum_i B[n, i] history[i]; for a single row (n = 0)
    this is the zero vector, matching q_0 = 0.
    """
    hist = np.asarray(history, dtype=np.float64)
    squeeze = hist.ndim == 1
    if squeeze:
        hist = hist[:, None]
    if hist.ndim != 2 or hist.shape[0] < 1:
        raise ValueError(f"history must be (n+1, m), got shape {hist.shape}")
    n = hist.shape[0] - 1
    if n == 0:
        out = np.zeros(hist.shape[1])
    else:
        out = weights.scale * (weights.row(n) @ hist)
    return float(out[0]) if squeeze else out


def rl_integral_power(alpha: float, p: float, t: float) -> float:
    """Closed form of (I^{1-alpha} s^p)(t) = Gamma(p+1)/Gamma(p+2-alpha) t^(p+1-alpha)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if p <= -1.0:
        raise ValueError(f"exponent must exceed -1, got {p}")
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if t == 0.0:
        return 0.0
    return gamma(p + 1.0) / gamma(p + 2.0 - alpha) * t ** (p + 1.0 - alpha)


def rl_integral_oracle(alpha: float, f, t: float) -> float:
    """Adaptive-quadrature reference for (I^{1-alpha} f)(t) (slow, for tests)."""
    from scipy.integrate import quad

    if t == 0.0:
        return 0.0
    val, _err = quad(f, 0.0, t, weight="alg", wvar=(0.0, -alpha))
    return val / gamma(1.0 - alpha)


def quadrature_error_order(alpha: float, test_fn, T: float, n_sweep,
                           oracle=None) -> float:
    """Fitted convergence order of max_n |q_n(f) - (I^{1-alpha}f)(t_n)|.

    Runs the product quadrature for each step count in n_sweep and fits a
    line to the log-log error curve.  `oracle` is an exact evaluator
    t -> (I^{1-alpha}f)(t); by default an adaptive quadrature is used.
    Returns inf when every error sits at rounding level.
    """
    n_sweep = sorted(int(n) for n in n_sweep)
    if len(n_sweep) < 2:
        raise ValueError("need at least two step counts to fit an order")
    if oracle is None:
        def oracle(t, _f=test_fn, _a=alpha):
            return rl_integral_oracle(_a, _f, t)

    errs = []
    ref = max(abs(oracle(T)), 1.0)
    for N in n_sweep:
        dt = T / N
        w = FracWeights(alpha=alpha, n_steps=N, dt=dt)
        fvals = np.array([test_fn(i * dt) for i in range(N + 1)], dtype=np.float64)
        worst = 0.0
        for n in range(1, N + 1):
            qn = w.scale * float(w.row(n) @ fvals[:n + 1])
            worst = max(worst, abs(qn - oracle(n * dt)))
        errs.append(worst)
    errs = np.asarray(errs)
    if (errs < 1e-13 * ref).all():
        return float("inf")
    dts = T / np.asarray(n_sweep, dtype=np.float64)
    slope, _ = np.polyfit(np.log(dts), np.log(errs), 1)
    return float(slope)
