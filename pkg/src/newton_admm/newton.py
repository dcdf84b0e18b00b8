"""Inexact Newton method with truncated CG and Armijo backtracking.

An objective is any object with ``value(x)``, ``gradient(x)`` and
``hvp(x, v)``. ``value_and_gradient`` and ``hessian_operator`` are used when
present so implementations can share work between calls.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SolverError

logger = logging.getLogger(__name__)


@dataclass
class NewtonConfig:
    """Parameters of the inexact Newton solver.

    The CG budget (10 iterations, tolerance 1e-4) and the 10-step line search
    are the Newton-ADMM defaults; ``armijo_beta`` and ``backtrack_gamma`` are
    the usual textbook values.
    """

    cg_tol: float = 1e-4
    cg_max_iters: int = 10
    armijo_beta: float = 1e-4
    backtrack_gamma: float = 0.5
    ls_max_iters: int = 10
    grad_tol: float = 1e-8
    newton_max_iters: int = 100

    def __post_init__(self):
        if not 0.0 < self.cg_tol < 1.0:
            raise ConfigError(f"cg_tol must be in (0, 1), got {self.cg_tol}")
        if not 0.0 < self.armijo_beta < 1.0:
            raise ConfigError(f"armijo_beta must be in (0, 1), got {self.armijo_beta}")
        if not 0.0 < self.backtrack_gamma < 1.0:
            raise ConfigError(f"backtrack_gamma must be in (0, 1), got {self.backtrack_gamma}")
        if self.cg_max_iters < 1:
            raise ConfigError("cg_max_iters must be >= 1")
        if self.ls_max_iters < 0:
            raise ConfigError("ls_max_iters must be >= 0")
        if self.newton_max_iters < 0:
            raise ConfigError("newton_max_iters must be >= 0")
        if self.grad_tol < 0:
            raise ConfigError("grad_tol must be >= 0")


def value_and_gradient(obj, x):
    if hasattr(obj, "value_and_gradient"):
        return obj.value_and_gradient(x)
    return obj.value(x), obj.gradient(x)


def hessian_operator(obj, x):
    if hasattr(obj, "hessian_operator"):
        return obj.hessian_operator(x)
    return lambda v: obj.hvp(x, v)


class QuadraticObjective:
    """``f(x) = 1/2 x'Hx + b'x`` with a dense symmetric ``H``."""

    def __init__(self, H, b=None):
        self.H = np.asarray(H, dtype=np.float64)
        self.b = np.zeros(self.H.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
        self.dim = self.H.shape[0]

    def value(self, x):
        return 0.5 * float(x @ (self.H @ x)) + float(self.b @ x)

    def gradient(self, x):
        return self.H @ x + self.b

    def hvp(self, x, v):
        return self.H @ v


class AugmentedObjective:
    """ADMM local subproblem ``base(x) + rho/2 ||z - x + y/rho||^2``."""

    def __init__(self, base, rho, z, y):
        if rho <= 0:
            raise ConfigError(f"penalty must be positive, got {rho}")
        self.base = base
        self.rho = float(rho)
        self.z = np.asarray(z, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        # z + y/rho is the point the proximal term pulls toward
        self._center = self.z + self.y / self.rho
        self.dim = self.z.shape[0]

    def _gap(self, x):
        return self._center - x

    def value(self, x):
        gap = self._gap(x)
        return self.base.value(x) + 0.5 * self.rho * float(gap @ gap)

    def gradient(self, x):
        return self.base.gradient(x) - self.rho * self._gap(x)

    def value_and_gradient(self, x):
        f, g = value_and_gradient(self.base, x)
        gap = self._gap(x)
        return f + 0.5 * self.rho * float(gap @ gap), g - self.rho * gap

    def hvp(self, x, v):
        return self.base.hvp(x, v) + self.rho * v

    def hessian_operator(self, x):
        inner = hessian_operator(self.base, x)
        rho = self.rho
        return lambda v: inner(v) + rho * v


@dataclass
class CGResult:
    p: np.ndarray
    iters: int
    residual: float
    status: str  # "converged", "max_iters" or "negative_curvature"


def cg_solve(apply_H, g, theta, max_iters):
    """Approximately solve ``H p = -g`` by CG started at ``p = 0``.

    Stops once ``||H p + g|| <= theta ||g||`` (tracked by the recurrence) or
    after ``max_iters`` iterations. The reported residual is recomputed with
    one extra product so it is a certificate, not the drifting recurrence
    value. A non-positive curvature ``d'Hd`` ends the solve with the current
    iterate (``-g`` if it happens on the first iteration).
    """
    g = np.asarray(g, dtype=np.float64)
    g_norm = float(np.linalg.norm(g))
    p = np.zeros_like(g)
    if g_norm == 0.0:
        return CGResult(p, 0, 0.0, "converged")
    target = theta * g_norm
    r = -g
    d = r.copy()
    rr = float(r @ r)
    iters = 0
    status = "max_iters"
    while True:
        if math.sqrt(rr) <= target:
            status = "converged"
            break
        if iters >= max_iters:
            break
        Hd = apply_H(d)
        curvature = float(d @ Hd)
        if not math.isfinite(curvature):
            raise SolverError(f"non-finite curvature in CG at iteration {iters}")
        if curvature <= 0.0:
            if iters == 0:
                p = -g
            status = "negative_curvature"
            break
        step = rr / curvature
        p = p + step * d
        r = r - step * Hd
        rr_next = float(r @ r)
        if not math.isfinite(rr_next):
            raise SolverError(f"non-finite residual in CG at iteration {iters}")
        d = r + (rr_next / rr) * d
        rr = rr_next
        iters += 1
    residual = float(np.linalg.norm(apply_H(p) + g))
    return CGResult(p, iters, residual, status)


@dataclass
class LineSearchResult:
    alpha: float
    evals: int
    warned: bool
    value: float


def line_search(obj, x, p, g, cfg, f0=None):
    """Backtracking search for ``F(x + a p) <= F(x) + a beta p'g``.

    Tries ``a = 1, gamma, gamma^2, ...``. After ``ls_max_iters`` reductions
    without success the last tried step is returned with ``warned`` set.
    """
    slope = float(p @ g)
    if not slope < 0.0:
        raise SolverError(f"not a descent direction (p'g = {slope})")
    if f0 is None:
        f0 = obj.value(x)
    alpha = 1.0
    evals = 0
    reductions = 0
    while True:
        f_new = obj.value(x + alpha * p)
        evals += 1
        if f_new <= f0 + alpha * cfg.armijo_beta * slope:
            return LineSearchResult(alpha, evals, False, f_new)
        if reductions >= cfg.ls_max_iters:
            logger.warning("line search hit its cap of %d reductions (alpha=%g)",
                           cfg.ls_max_iters, alpha)
            return LineSearchResult(alpha, evals, True, f_new)
        reductions += 1
        alpha *= cfg.backtrack_gamma


@dataclass
class NewtonIterate:
    iteration: int
    objective_before: float
    grad_norm: float
    alpha: float
    cg_iters: int
    cg_residual: float
    objective: float
    ls_warning: bool
    steepest_descent: bool
    ls_evals: int = 0


@dataclass
class NewtonResult:
    x: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False
    grad_norm: float = math.nan

    @property
    def cg_iters(self):
        return sum(it.cg_iters for it in self.trace)


def newton_solve(obj, x0, cfg):
    """Run inexact Newton iterations from ``x0``.

    Stops when ``||g|| < cfg.grad_tol`` (checked before each step) or after
    ``cfg.newton_max_iters`` steps. ``grad_norm`` on the result is the last
    gradient norm evaluated, which is at the final point only when the
    solver converged.
    """
    x = np.array(x0, dtype=np.float64)
    result = NewtonResult(x)
    for k in range(cfg.newton_max_iters):
        f, g = value_and_gradient(obj, x)
        if not math.isfinite(f):
            raise SolverError(f"non-finite objective {f} at Newton iteration {k}")
        g_norm = float(np.linalg.norm(g))
        result.grad_norm = g_norm
        if g_norm < cfg.grad_tol:
            result.converged = True
            break
        fallback = False
        try:
            cg = cg_solve(hessian_operator(obj, x), g, cfg.cg_tol, cfg.cg_max_iters)
            p = cg.p
        except SolverError as exc:
            logger.warning("CG failed (%s); using steepest descent", exc)
            cg = CGResult(-g, 0, math.nan, "failed")
            p = -g
            fallback = True
        if not float(p @ g) < 0.0:
            logger.warning("CG direction is not a descent direction; using -g")
            p = -g
            fallback = True
        ls = line_search(obj, x, p, g, cfg, f0=f)
        if not math.isfinite(ls.value):
            raise SolverError(f"non-finite objective after line search at iteration {k}")
        x = x + ls.alpha * p
        result.trace.append(NewtonIterate(k, f, g_norm, ls.alpha, cg.iters, cg.residual,
                                          ls.value, ls.warned, fallback, ls.evals))
    result.x = x
    return result
