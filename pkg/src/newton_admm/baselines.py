"""Comparison solvers: L-BFGS (as an ADMM inner solver) and synchronous SGD."""
import logging
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import line_search as wolfe_line_search

try:
    from scipy.optimize import LineSearchWarning
except ImportError:  # not re-exported by recent scipy
    from scipy.optimize._linesearch import LineSearchWarning

from .comm import Envelope, sgd_steps_per_epoch
from .errors import ConfigError, DivergenceError
from .newton import value_and_gradient

logger = logging.getLogger(__name__)

FALLBACK_STEP = 1e-3


@dataclass
class LbfgsConfig:
    history: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_iters: int = 10
    ls_max_iters: int = 20
    grad_tol: float = 1e-8

    def __post_init__(self):
        if self.history < 1:
            raise ConfigError("L-BFGS history must be >= 1")
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ConfigError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_iters < 0 or self.ls_max_iters < 1:
            raise ConfigError("max_iters must be >= 0 and ls_max_iters >= 1")


def two_loop_direction(g, s_hist, y_hist):
    """``-H g`` for the L-BFGS inverse-Hessian approximation.

    With no stored pairs this is ``-g``. The initial matrix is scaled by
    ``s'y / y'y`` of the newest pair.
    """
    q = np.array(g, dtype=np.float64)
    if not s_hist:
        return -q
    rhos = [1.0 / float(y @ s) for s, y in zip(s_hist, y_hist)]
    alphas = []
    for s, y, r in zip(reversed(s_hist), reversed(y_hist), reversed(rhos)):
        a = r * float(s @ q)
        q -= a * y
        alphas.append(a)
    s, y = s_hist[-1], y_hist[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, r), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = r * float(y @ q)
        q += (a - b) * s
    return -q


@dataclass
class LbfgsMemory:
    """Curvature pairs that can outlive one ``lbfgs_solve`` call.

    ADMM subproblems at a fixed penalty differ only in a linear term, so
    pairs from earlier outer iterations stay exact. ``shift_penalty`` adds
    ``(rho_new - rho_old) s`` to every ``y`` when the penalty moves.
    """

    s: list = field(default_factory=list)
    y: list = field(default_factory=list)

    def shift_penalty(self, delta):
        if delta:
            self.y = [yv + delta * sv for sv, yv in zip(self.s, self.y)]

    def clear(self):
        self.s.clear()
        self.y.clear()


@dataclass
class LbfgsIterate:
    iteration: int
    objective: float
    grad_norm: float
    slope: float
    alpha: float
    evals: int
    wolfe_ok: bool
    fallback: bool
    pair_skipped: bool


@dataclass
class LbfgsResult:
    x: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False


class _Cached:
    """Memoizes value_and_gradient at the last point for the line search."""

    def __init__(self, obj):
        self.obj = obj
        self.key = None
        self.evals = 0

    def _eval(self, x):
        key = x.tobytes()
        if key != self.key:
            self.f, self.g = value_and_gradient(self.obj, x)
            self.key = key
            self.evals += 1
        return self.f, self.g

    def value(self, x):
        return self._eval(x)[0]

    def gradient(self, x):
        return self._eval(x)[1]


def lbfgs_solve(obj, x0, cfg, memory=None):
    """L-BFGS with a strong-Wolfe line search.

    Pairs with ``s'y <= 1e-10 ||s|| ||y||`` are dropped. If the line search
    fails, a plain gradient step of length ``FALLBACK_STEP`` is taken.
    Passing a ``LbfgsMemory`` starts from its pairs and leaves the updated
    pairs in it.
    """
    cached = _Cached(obj)
    x = np.array(x0, dtype=np.float64)
    f, g = cached._eval(x)
    old_old_f = f + float(np.linalg.norm(g)) / 2.0
    memory = memory if memory is not None else LbfgsMemory()
    s_hist, y_hist = memory.s, memory.y
    result = LbfgsResult(x)
    for k in range(cfg.max_iters):
        g_norm = float(np.linalg.norm(g))
        if g_norm < cfg.grad_tol:
            result.converged = True
            break
        p = two_loop_direction(g, s_hist, y_hist)
        slope = float(p @ g)
        if not slope < 0.0:
            memory.clear()
            p = -g
            slope = -g_norm ** 2
        before = cached.evals
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LineSearchWarning)
            alpha, *_ = wolfe_line_search(cached.value, cached.gradient, x, p, gfk=g, old_fval=f,
                                          old_old_fval=old_old_f, c1=cfg.c1, c2=cfg.c2,
                                          maxiter=cfg.ls_max_iters)
        wolfe_ok = alpha is not None and math.isfinite(alpha)
        if wolfe_ok:
            # scipy returns its last trial step when it runs out of iterations
            x_new = x + alpha * p
            f_new, g_new = cached._eval(x_new)
            wolfe_ok = (f_new <= f + cfg.c1 * alpha * slope
                        and abs(float(g_new @ p)) <= cfg.c2 * abs(slope))
        fallback = not wolfe_ok
        if fallback:
            logger.warning("strong-Wolfe search failed at L-BFGS iteration %d; gradient step", k)
            x_new = x - FALLBACK_STEP * g
            alpha = math.nan
            f_new, g_new = cached._eval(x_new)
        s, yv = x_new - x, g_new - g
        sy = float(s @ yv)
        skipped = not sy > 1e-10 * float(np.linalg.norm(s)) * float(np.linalg.norm(yv))
        if not skipped:
            s_hist.append(s)
            y_hist.append(yv)
            if len(s_hist) > cfg.history:
                s_hist.pop(0)
                y_hist.pop(0)
        result.trace.append(LbfgsIterate(k, f_new, g_norm, slope, alpha,
                                         cached.evals - before, wolfe_ok, fallback, skipped))
        old_old_f, f, g, x = f, f_new, g_new, x_new
    result.x = x
    return result


@dataclass
class SgdConfig:
    step_size: float = 1.0
    batch_size: int = 100
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0:
            raise ConfigError("step size must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")


SGD_STEP_SIZES = tuple(10.0 ** e for e in range(-4, 5))


@dataclass
class SgdEpoch:
    epoch: int
    objective: float
    seconds: float
    steps: int


@dataclass
class SgdResult:
    x: np.ndarray
    history: list = field(default_factory=list)
    stopped_by_callback: bool = False


def sync_sgd(transport, x0, cfg, n_total, lam=0.0, objective=None, callback=None):
    """Synchronous data-parallel SGD over ``transport``.

    Each step broadcasts ``x``, gathers one mean mini-batch gradient per
    worker, averages them in worker order and applies
    ``x <- x - eta (g_mean + lam/n_total x)``, a stochastic gradient of
    ``F / n_total``. An epoch is ``ceil(n_total / (batch_size N))`` steps.
    ``objective`` (full training objective) is evaluated after every epoch
    for divergence checks and ``callback(x, epoch_info)``.
    """
    N = transport.n_workers
    steps = sgd_steps_per_epoch(n_total, cfg.batch_size, N)
    x = np.array(x0, dtype=np.float64)
    f0 = objective.value(x) if objective is not None else None
    result = SgdResult(x)
    t = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        for _ in range(steps):
            transport.scatter([Envelope.scatter(t, i, x, np.empty(0), 0.0) for i in range(N)])
            grads = [env.x for env in transport.gather(t)]
            g = grads[0].copy()
            for extra in grads[1:]:
                g += extra
            g /= N
            if lam:
                g += (lam / n_total) * x
            x = x - cfg.step_size * g
            t += 1
            if not np.all(np.isfinite(x)):
                raise DivergenceError(f"SGD iterate became non-finite at step {t} (eta={cfg.step_size})")
        seconds = time.perf_counter() - t0
        value = math.nan
        if objective is not None:
            value = objective.value(x)
            if not math.isfinite(value) or value > 1e3 * f0:
                raise DivergenceError(
                    f"SGD diverged at epoch {epoch + 1}: objective {value:.6g} vs initial {f0:.6g}"
                    f" (eta={cfg.step_size})")
        info = SgdEpoch(epoch + 1, value, seconds, steps)
        result.history.append(info)
        result.x = x
        if callback is not None and callback(x, info):
            result.stopped_by_callback = True
            break
    result.x = x
    return result
