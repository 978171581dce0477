"""Limited-memory quasi-Newton minimization with a strong-Wolfe line search.

The per-frame problems are small (tens of variables), so the solver is
implemented here rather than pulled in as a dependency: two-loop recursion
for the implicit inverse Hessian, cubic-interpolation line search enforcing
the strong Wolfe conditions, and optional box bounds handled by projected
backtracking. Accepted steps never increase the objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

REASON_GRADIENT = "gradient"
REASON_COST_DELTA = "cost-delta"
REASON_ITERATION_CAP = "iteration-cap"
REASON_STALLED = "stalled"


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 100
    gradient_tolerance: float = 1e-6
    cost_tolerance: float = 1e-9      # relative change of f between iterates
    history_size: int = 10
    bounds: tuple | None = None       # (lower, upper) arrays, broadcastable to x
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        for name in ("gradient_tolerance", "cost_tolerance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.wolfe_c1 < self.wolfe_c2 < 1):
            raise ValueError("need 0 < c1 < c2 < 1")


@dataclass
class SolveReport:
    initial_cost: float
    final_cost: float
    iterations: int
    n_evaluations: int
    reason: str
    warm_start: str | None = None         # "previous-frame" | "world-landmarks"
    breakdown: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)


def _cubic_min(a, fa, dfa, b, fb, dfb):
    """Minimizer of the cubic through (a, fa, dfa), (b, fb, dfb); None if ill-posed."""
    d1 = dfa + dfb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - dfa * dfb
    if disc < 0:
        return None
    d2 = math.sqrt(disc)
    if b < a:
        d2 = -d2
    denom = dfb - dfa + 2.0 * d2
    if abs(denom) < 1e-18:
        return None
    t = b - (b - a) * (dfb + d2 - d1) / denom
    return t if math.isfinite(t) else None


class _LineSearchFailed(Exception):
    pass


def _wolfe_line_search(fg, x, p, f0, g0, alpha0, c1, c2, max_evals=30):
    """Strong Wolfe search along p from x.

    Returns (alpha, x_new, f_new, g_new, n_evals). Non-finite trial values
    are treated as infinitely bad so the bracket shrinks away from them.
    """
    dphi0 = float(np.dot(g0, p))
    if dphi0 >= 0:
        raise _LineSearchFailed("not a descent direction")
    evals = 0

    def phi(alpha):
        nonlocal evals
        xt = x + alpha * p
        f, g = fg(xt)
        evals += 1
        d = float(np.dot(g, p)) if np.all(np.isfinite(g)) else math.inf
        f = f if math.isfinite(f) else math.inf
        return xt, f, g, d

    def zoom(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi):
        for _ in range(max_evals):
            if abs(a_hi - a_lo) < 1e-16 * max(1.0, abs(a_lo)):
                break
            a = None
            if math.isfinite(f_hi) and math.isfinite(d_hi):
                a = _cubic_min(a_lo, f_lo, d_lo, a_hi, f_hi, d_hi)
            span = abs(a_hi - a_lo)
            lo_, hi_ = min(a_lo, a_hi), max(a_lo, a_hi)
            if a is None or not (lo_ + 0.05 * span <= a <= hi_ - 0.05 * span):
                a = 0.5 * (a_lo + a_hi)
            xt, f, g, d = phi(a)
            if f > f0 + c1 * a * dphi0 or f >= f_lo:
                a_hi, f_hi, d_hi = a, f, d
            else:
                if abs(d) <= -c2 * dphi0:
                    return a, xt, f, g
                if d * (a_hi - a_lo) >= 0:
                    a_hi, f_hi, d_hi = a_lo, f_lo, d_lo
                a_lo, f_lo, d_lo = a, f, d
        if f_lo < f0 and a_lo > 0:
            xt, f, g, _ = phi(a_lo)
            return a_lo, xt, f, g
        raise _LineSearchFailed("zoom exhausted")

    a_prev, f_prev, d_prev = 0.0, f0, dphi0
    alpha = alpha0
    for i in range(max_evals):
        xt, f, g, d = phi(alpha)
        if f > f0 + c1 * alpha * dphi0 or (i > 0 and f >= f_prev):
            result = zoom(a_prev, f_prev, d_prev, alpha, f, d)
            return (*result, evals)
        if abs(d) <= -c2 * dphi0:
            return alpha, xt, f, g, evals
        if d >= 0:
            result = zoom(alpha, f, d, a_prev, f_prev, d_prev)
            return (*result, evals)
        a_prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
    raise _LineSearchFailed("bracket exhausted")


def _projected_backtrack(fg, x, p, f0, g0, bounds, c1, max_halvings=30):
    """Armijo backtracking with iterates clipped into the box."""
    lo, hi = bounds
    alpha = 1.0
    evals = 0
    for _ in range(max_halvings):
        xt = np.clip(x + alpha * p, lo, hi)
        d = xt - x
        if not np.any(d):
            break
        f, g = fg(xt)
        evals += 1
        if math.isfinite(f) and f <= f0 + c1 * float(np.dot(g0, d)):
            return alpha, xt, f, g, evals
        alpha *= 0.5
    raise _LineSearchFailed("projected backtracking exhausted")


def minimize(fg, x0: np.ndarray, settings: SolverSettings | None = None):
    """Minimize fg(x) -> (value, gradient) starting from x0.

    Returns (x_best, SolveReport). The report's final cost never exceeds the
    initial cost; convergence reasons are "gradient", "cost-delta",
    "iteration-cap", or "stalled" (line search hit numerical resolution).
    """
    cfg = settings or SolverSettings()
    x = np.asarray(x0, dtype=np.float64).copy()
    if cfg.bounds is not None:
        lo, hi = cfg.bounds
        x = np.clip(x, lo, hi)

    f, g = fg(x)
    if not math.isfinite(f):
        raise ValueError("objective is non-finite at the initial point")
    n_evals = 1
    f_initial = f

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    def first_order_norm() -> float:
        if cfg.bounds is None:
            return float(np.max(np.abs(g)))
        lo, hi = cfg.bounds
        return float(np.max(np.abs(x - np.clip(x - g, lo, hi))))

    reason = REASON_ITERATION_CAP
    iterations = 0
    for k in range(cfg.max_iterations):
        if first_order_norm() <= cfg.gradient_tolerance:
            reason = REASON_GRADIENT
            break
        iterations = k + 1

        # Two-loop recursion for p = -H g.
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * float(np.dot(s, q))
            q -= a * y
            alphas.append(a)
        if s_hist:
            gamma = float(np.dot(s_hist[-1], y_hist[-1]) / np.dot(y_hist[-1], y_hist[-1]))
            q *= gamma
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * float(np.dot(y, q))
            q += s * (a - b)
        p = -q
        if float(np.dot(p, g)) >= 0:
            p = -g  # safeguard: fall back to steepest descent

        alpha0 = 1.0 if s_hist else min(1.0, 1.0 / max(1e-12, float(np.max(np.abs(g)))))
        def search(direction):
            if cfg.bounds is not None:
                return _projected_backtrack(fg, x, direction, f, g, cfg.bounds, cfg.wolfe_c1)
            return _wolfe_line_search(fg, x, direction, f, g, alpha0,
                                      cfg.wolfe_c1, cfg.wolfe_c2)

        try:
            _, x_new, f_new, g_new, evals = search(p)
        except _LineSearchFailed:
            if np.array_equal(p, -g):
                reason = REASON_STALLED
                break
            try:
                _, x_new, f_new, g_new, evals = search(-g)
            except _LineSearchFailed:
                reason = REASON_STALLED
                break
        n_evals += evals

        s = x_new - x
        y = g_new - g
        sy = float(np.dot(s, y))
        if sy > 1e-10 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.history_size:
                s_hist.pop(0)
                y_hist.pop(0)
                rho_hist.pop(0)

        f_delta = f - f_new
        x, f, g = x_new, f_new, g_new
        if f_delta <= cfg.cost_tolerance * max(1.0, abs(f)):
            reason = REASON_COST_DELTA
            break

    report = SolveReport(
        initial_cost=f_initial,
        final_cost=f,
        iterations=iterations,
        n_evaluations=n_evals,
        reason=reason,
    )
    return x, report
