"""Box-constrained L-BFGS-B with finite-difference gradients.

Each iteration follows the usual L-BFGS-B outline:

1. generalized Cauchy point: the first local minimizer of the quadratic model
   along the projected steepest-descent path ``P(x - t g)``, with the model
   Hessian held in compact limited-memory form;
2. subspace step: a quasi-Newton step on the variables still free at the
   Cauchy point, computed with the two-loop recursion;
3. backtracking line search along the projected path ``P(x + a d)`` until the
   sufficient-decrease condition holds.

Gradients come from central differences because the objective is a black box.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .vnnlib import Box

__all__ = [
    "Objective",
    "OptConfig",
    "OptStatus",
    "OptResult",
    "fd_gradient",
    "projected_gradient",
    "minimize",
]


class Objective:
    """Scalar objective with an evaluation counter.

    If ``box`` is given every evaluation asserts that the point lies inside it.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], box: Box | None = None):
        self.fn = fn
        self.box = box
        self.evaluations = 0

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=np.float64)
        if self.box is not None:
            assert np.all(x >= np.asarray(self.box.lo)) and np.all(x <= np.asarray(self.box.hi)), \
                f"objective evaluated outside the box at {x}"
        self.evaluations += 1
        return float(self.fn(x))


@dataclass(frozen=True)
class OptConfig:
    memory: int = 10
    max_iterations: int = 200
    grad_tolerance: float = 1e-5
    f_tolerance: float = 1e-9
    fd_step: float = 1e-6

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if not (self.grad_tolerance > 0 and self.f_tolerance > 0 and self.fd_step > 0):
            raise ValueError("tolerances and fd_step must be positive")

    def fingerprint(self) -> str:
        return (f"m={self.memory};it={self.max_iterations};gtol={self.grad_tolerance!r};"
                f"ftol={self.f_tolerance!r};h={self.fd_step!r}")


class OptStatus(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


@dataclass
class OptResult:
    x_best: np.ndarray
    f_best: float
    iterations: int
    status: OptStatus
    history: list[float] = field(default_factory=list)


def fd_gradient(f, x, box: Box, h_rel: float = 1e-6, f0: float | None = None) -> np.ndarray:
    """Central differences, one-sided where the stencil would leave the box."""
    x = np.asarray(x, dtype=np.float64)
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    g = np.zeros_like(x)
    for i in range(x.size):
        if hi[i] <= lo[i]:
            continue
        h = h_rel * max(1.0, abs(x[i]))
        up, down = x[i] + h, x[i] - h
        if up <= hi[i] and down >= lo[i]:
            xp, xm = x.copy(), x.copy()
            xp[i], xm[i] = up, down
            g[i] = (f(xp) - f(xm)) / (up - down)
            continue
        if f0 is None:
            f0 = f(x)
        # second-order one-sided stencil (-3 f0 + 4 f1 - f2) / 2h when it fits
        sign = 1.0 if x[i] + 2 * h <= hi[i] else -1.0 if x[i] - 2 * h >= lo[i] else 0.0
        if sign:
            x1, x2 = x.copy(), x.copy()
            x1[i] = x[i] + sign * h
            x2[i] = x[i] + 2 * sign * h
            g[i] = (-3.0 * f0 + 4.0 * f(x1) - f(x2)) / (2.0 * (x1[i] - x[i]))
            continue
        xs = x.copy()
        if up <= hi[i]:
            xs[i] = up
        elif down >= lo[i]:
            xs[i] = down
        else:
            # box narrower than the step: use the farther face
            xs[i] = hi[i] if hi[i] - x[i] >= x[i] - lo[i] else lo[i]
        g[i] = (f(xs) - f0) / (xs[i] - x[i])
    return g


def projected_gradient(x, g, box: Box) -> np.ndarray:
    lo = np.asarray(box.lo)
    hi = np.asarray(box.hi)
    return np.clip(x - g, lo, hi) - x


class _Memory:
    """Last ``m`` curvature pairs plus the compact form of the BFGS matrix."""

    def __init__(self, m: int):
        self.m = m
        self.s: list[np.ndarray] = []
        self.y: list[np.ndarray] = []
        self.theta = 1.0

    def __len__(self):
        return len(self.s)

    def clear(self):
        self.s.clear()
        self.y.clear()
        self.theta = 1.0

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        sy = float(s @ y)
        if sy <= 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            return False
        self.s.append(s)
        self.y.append(y)
        if len(self.s) > self.m:
            self.s.pop(0)
            self.y.pop(0)
        self.theta = float(y @ y) / sy
        return True

    def compact(self):
        """Return ``(W, Minv)`` with ``B = theta I - W inv(Minv) W^T``."""
        S = np.column_stack(self.s)
        Y = np.column_stack(self.y)
        SY = S.T @ Y
        D = np.diag(np.diag(SY))
        L = np.tril(SY, -1)
        W = np.hstack([Y, self.theta * S])
        Minv = np.block([[-D, L.T], [L, self.theta * (S.T @ S)]])
        return W, Minv

    def two_loop(self, q: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Apply the inverse L-BFGS matrix built from pairs restricted to ``mask``."""
        pairs = []
        for s, y in zip(self.s, self.y):
            s_f, y_f = s[mask], y[mask]
            sy = float(s_f @ y_f)
            if sy > 1e-10 * np.linalg.norm(s_f) * np.linalg.norm(y_f):
                pairs.append((s_f, y_f, 1.0 / sy))
        q = q.copy()
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * float(s @ q)
            alphas.append(a)
            q -= a * y
        if pairs:
            s, y, _ = pairs[-1]
            q *= float(s @ y) / float(y @ y)
        else:
            q /= self.theta
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * float(y @ q)
            q += (a - b) * s
        return q


def _cauchy_point(x, g, lo, hi, free, mem: _Memory) -> np.ndarray:
    """First local minimizer of the quadratic model along ``P(x - t g)``."""
    n = x.size
    t_break = np.full(n, np.inf)
    neg = (g < 0) & free
    pos = (g > 0) & free
    t_break[neg] = (x[neg] - hi[neg]) / g[neg]
    t_break[pos] = (x[pos] - lo[pos]) / g[pos]

    if len(mem):
        W, Minv = mem.compact()
        try:
            Minv_solve = np.linalg.inv(Minv)
        except np.linalg.LinAlgError:
            W = None
    else:
        W = None

    def B(v):
        out = mem.theta * v
        if W is not None:
            out -= W @ (Minv_solve @ (W.T @ v))
        return out

    d = np.where(free & (t_break > 0), -g, 0.0)
    z = np.zeros(n)
    t_prev = 0.0
    for t in np.unique(t_break[np.isfinite(t_break) & (t_break > 0)].tolist() + [np.inf]):
        if not d.any():
            break
        Bd = B(d)
        f1 = float(g @ d + z @ Bd)
        f2 = float(d @ Bd)
        if f1 >= 0:
            break
        dt = t - t_prev
        dt_star = -f1 / f2 if f2 > 0 else np.inf
        if dt_star < dt:
            z = z + dt_star * d
            break
        if not np.isfinite(dt):
            break  # unbounded direction with no curvature; stay at last breakpoint
        z = z + dt * d
        hit = (t_break <= t) & (d != 0)
        d[hit] = 0.0
        t_prev = t
    return np.clip(x + z, lo, hi)


def minimize(f, x0, box: Box, cfg: OptConfig | None = None) -> OptResult:
    """Minimize ``f`` over ``box`` starting from ``x0``.

    Never raises on numerical trouble; a failed line search returns the best
    point so far with status ``LINE_SEARCH_FAILURE``.
    """
    cfg = cfg or OptConfig()
    lo = np.asarray(box.lo, dtype=np.float64)
    hi = np.asarray(box.hi, dtype=np.float64)
    x = np.clip(np.asarray(x0, dtype=np.float64).reshape(-1), lo, hi)
    free = hi > lo  # degenerate dimensions stay frozen
    h = cfg.fd_step

    fx = f(x)
    history = [fx]
    mem = _Memory(cfg.memory)
    if not free.any():
        return OptResult(x, fx, 0, OptStatus.CONVERGED, history)
    g = fd_gradient(f, x, box, h, fx)

    status = OptStatus.MAX_ITERATIONS
    it = 0
    while it < cfg.max_iterations:
        pg = projected_gradient(x, g, box)
        if np.max(np.abs(pg)) <= cfg.grad_tolerance:
            status = OptStatus.CONVERGED
            break
        it += 1

        xc = _cauchy_point(x, g, lo, hi, free, mem)
        at_bound = (xc <= lo) | (xc >= hi)
        sub = free & ~at_bound
        target = xc.copy()
        if sub.any() and len(mem):
            # reduced model gradient at the Cauchy point on the free variables
            W, Minv = mem.compact()
            try:
                r = g + mem.theta * (xc - x) - W @ np.linalg.solve(Minv, W.T @ (xc - x))
            except np.linalg.LinAlgError:
                r = g
            target[sub] = xc[sub] - mem.two_loop(r[sub], sub)
        direction = np.clip(target, lo, hi) - x

        slope = float(g @ direction)
        if not slope < 0:
            mem.clear()
            direction = projected_gradient(x, g, box)
            slope = float(g @ direction)

        step = _line_search(f, x, fx, g, direction, lo, hi)
        if step is None and len(mem):
            mem.clear()
            direction = projected_gradient(x, g, box)
            step = _line_search(f, x, fx, g, direction, lo, hi)
        if step is None:
            status = OptStatus.LINE_SEARCH_FAILURE
            break

        x_new, f_new = step
        g_new = fd_gradient(f, x_new, box, h, f_new)
        mem.push(x_new - x, g_new - g)
        decrease = (fx - f_new) / max(abs(fx), abs(f_new), 1.0)
        x, fx, g = x_new, f_new, g_new
        history.append(fx)
        if decrease <= cfg.f_tolerance:
            status = OptStatus.CONVERGED
            break
    return OptResult(x, fx, it, status, history)


def _line_search(f, x, fx, g, d, lo, hi, c1=1e-4, shrink=0.5, max_steps=40):
    alpha = 1.0
    for _ in range(max_steps):
        x_try = np.clip(x + alpha * d, lo, hi)
        step = x_try - x
        if not step.any():
            return None
        f_try = f(x_try)
        if np.isfinite(f_try) and f_try <= fx + c1 * float(g @ step) and f_try <= fx:
            return x_try, f_try
        alpha *= shrink
    return None
