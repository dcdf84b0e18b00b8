"""Global-consensus ADMM with per-worker penalties.

Each outer iteration scatters ``(z, y_i, rho_i)`` to the workers, gathers
their new local iterates ``x_i``, then updates

    z = sum_i (rho_i x_i - y_i) / (lam + sum_i rho_i)
    y_i = y_i + rho_i (z - x_i)

and optionally adapts ``rho_i`` with spectral (secant) curvature estimates.
Worker sums are always reduced in ascending worker id with a fixed pairwise
tree, so results are bitwise reproducible.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .comm import Envelope

logger = logging.getLogger(__name__)


@dataclass
class FixedPenalty:
    rho0: float = 1.0

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ConfigError(f"rho0 must be positive, got {self.rho0}")


@dataclass
class SpectralPenalty:
    """Spectral penalty selection with a correlation safeguard.

    Every ``period`` iterations each worker's penalty is re-estimated from
    secant pairs since the last estimate; ``eps_cor`` is the minimum
    normalized correlation a pair needs to be trusted.
    """

    rho0: float = 1.0
    period: int = 2
    eps_cor: float = 0.2
    rho_min: float = 1e-6
    rho_max: float = 1e6

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ConfigError(f"rho0 must be positive, got {self.rho0}")
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")
        if not 0.0 < self.eps_cor < 1.0:
            raise ConfigError(f"eps_cor must be in (0, 1), got {self.eps_cor}")
        if not 0 < self.rho_min <= self.rho0 <= self.rho_max:
            raise ConfigError("need 0 < rho_min <= rho0 <= rho_max")


@dataclass
class StoppingConfig:
    """Residual tolerances and iteration cap.

    With ``standard_norms`` off, tolerances use squared norms inside the max
    terms; with it on, plain Euclidean norms.
    """

    eps_abs: float = 1e-3
    eps_rel: float = 1e-3
    max_outer_iters: int = 300
    standard_norms: bool = False

    def __post_init__(self):
        if not (self.eps_abs >= 0 and self.eps_rel >= 0):
            raise ConfigError("tolerances must be non-negative")
        if self.max_outer_iters < 0:
            raise ConfigError("max_outer_iters must be >= 0")


@dataclass
class SpectralSnapshot:
    k: int
    x: np.ndarray
    y_hat: np.ndarray
    z: np.ndarray
    y: np.ndarray


@dataclass
class AdmmState:
    """Coordinator-side iterates; row i of ``x``, ``y`` belongs to worker i."""

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    rho: np.ndarray
    k: int = 0
    z_prev: np.ndarray = None
    y_hat: np.ndarray = None
    snapshot: SpectralSnapshot = None

    @classmethod
    def initial(cls, n_workers, dim, rho0=1.0, x0=None):
        x = np.zeros((n_workers, dim)) if x0 is None else np.tile(np.asarray(x0, float), (n_workers, 1))
        return cls(z=np.zeros(dim), x=x, y=np.zeros((n_workers, dim)),
                   rho=np.full(n_workers, float(rho0)))

    @property
    def n_workers(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.z.shape[0]


def tree_sum(rows):
    """Pairwise sum of the rows of a 2-D array in a fixed order."""
    parts = [rows[i] for i in range(rows.shape[0])]
    if not parts:
        raise ConfigError("cannot sum zero workers")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0].copy()


def z_update(state, lam):
    """Closed-form consensus update for an l2 regularizer ``lam/2 ||z||^2``."""
    denom = lam + float(tree_sum(state.rho[:, None])[0])
    if not denom > 0:
        raise ConfigError(f"lam + sum(rho) must be positive, got {denom}")
    return tree_sum(state.rho[:, None] * state.x - state.y) / denom


def y_update(state):
    """Dual ascent step; ``state.z`` must already be the new consensus."""
    return state.y + state.rho[:, None] * (state.z[None, :] - state.x)


@dataclass
class Residuals:
    primal: np.ndarray
    dual: np.ndarray

    @property
    def primal_norm(self):
        return float(np.sqrt(np.sum(self.primal ** 2)))

    @property
    def dual_norm(self):
        return float(np.sqrt(np.sum(self.dual ** 2)))


def residuals(state):
    """Per-worker norms of ``r_i = z - x_i`` and ``d_i = -rho_i (z - z_prev)``."""
    primal = np.linalg.norm(state.z[None, :] - state.x, axis=1)
    if state.z_prev is None:
        dual = np.full(state.n_workers, np.nan)
    else:
        dual = state.rho * float(np.linalg.norm(state.z - state.z_prev))
    return Residuals(primal, dual)


_warned_squared = False


def tolerances(state, cfg):
    """Return ``(eps_pri, eps_dual)``.

    eps_pri  = sqrt(N) eps_abs + eps_rel * max(sum_i ||x_i||^2, N ||z||^2)
    eps_dual = sqrt(d) eps_abs + eps_rel * max_i ||y_i||^2

    Standard ADMM uses norms rather than squared norms here; pass
    ``standard_norms=True`` for that variant.
    """
    global _warned_squared
    N, d = state.n_workers, state.dim
    x_sq = float(np.sum(state.x ** 2))
    z_sq = N * float(state.z @ state.z)
    y_sq = np.sum(state.y ** 2, axis=1)
    if cfg.standard_norms:
        pri_scale = max(math.sqrt(x_sq), math.sqrt(z_sq))
        dual_scale = math.sqrt(float(np.sum(y_sq)))
    else:
        if not _warned_squared:
            logger.info("ADMM tolerances use squared norms (standard_norms=False)")
            _warned_squared = True
        pri_scale = max(x_sq, z_sq)
        dual_scale = float(np.max(y_sq))
    eps_pri = math.sqrt(N) * cfg.eps_abs + cfg.eps_rel * pri_scale
    eps_dual = math.sqrt(d) * cfg.eps_abs + cfg.eps_rel * dual_scale
    return eps_pri, eps_dual


def has_converged(state, cfg, res=None):
    if state.k < 1 or state.z_prev is None:
        return False
    res = residuals(state) if res is None else res
    eps_pri, eps_dual = tolerances(state, cfg)
    return bool(np.all(res.primal <= eps_pri) and np.all(res.dual <= eps_dual))


def _secant_curvature(ds, dg, eps_cor):
    """Hybrid steepest-descent / minimum-gradient curvature from one secant pair.

    Returns ``(estimate, trusted)``.
    """
    sg = float(ds @ dg)
    ss = float(ds @ ds)
    gg = float(dg @ dg)
    if ss == 0.0 or gg == 0.0 or sg <= 0.0:
        return math.nan, False
    sd = gg / sg
    mg = sg / ss
    estimate = mg if 2.0 * mg > sd else sd - 0.5 * mg
    correlation = sg / math.sqrt(ss * gg)
    return estimate, correlation > eps_cor


def _take_snapshot(state):
    state.snapshot = SpectralSnapshot(state.k, state.x.copy(), state.y_hat.copy(),
                                      state.z.copy(), state.y.copy())


def spectral_update(state, policy):
    """New per-worker penalties; also refreshes the secant snapshot.

    For worker i the x-side pair is ``(dx_i, dy_hat_i)`` and the z-side pair
    ``(-dz, dy_i)``, both measured since the last snapshot. When both
    estimates pass the correlation test the penalty becomes their geometric
    mean, when one passes it becomes that estimate, otherwise it is kept.
    """
    if isinstance(policy, FixedPenalty):
        return np.full(state.n_workers, policy.rho0)
    rho = state.rho.copy()
    if state.y_hat is None:
        return rho
    snap = state.snapshot
    if snap is None:
        _take_snapshot(state)
        return rho
    if state.k - snap.k < policy.period:
        return rho
    dz = -(state.z - snap.z)
    for i in range(state.n_workers):
        a_hat, a_ok = _secant_curvature(state.x[i] - snap.x[i], state.y_hat[i] - snap.y_hat[i],
                                        policy.eps_cor)
        b_hat, b_ok = _secant_curvature(dz, state.y[i] - snap.y[i], policy.eps_cor)
        if a_ok and b_ok:
            new = math.sqrt(a_hat * b_hat)
        elif a_ok:
            new = a_hat
        elif b_ok:
            new = b_hat
        else:
            continue
        rho[i] = min(max(new, policy.rho_min), policy.rho_max)
    _take_snapshot(state)
    return rho


@dataclass
class AdmmIteration:
    """Per-iteration diagnostics reported by the coordinator."""

    k: int
    primal: np.ndarray
    dual: np.ndarray
    primal_norm: float
    dual_norm: float
    eps_pri: float
    eps_dual: float
    rho: np.ndarray
    inner_iters: int
    inner_stats: list
    converged: bool
    seconds: float


@dataclass
class AdmmResult:
    z: np.ndarray
    state: AdmmState
    history: list = field(default_factory=list)
    converged: bool = False
    stopped_by_callback: bool = False


class AdmmCoordinator:
    """Drives the outer loop over a transport that owns the workers."""

    def __init__(self, transport, dim, lam, policy=None, stopping=None):
        if lam < 0:
            raise ConfigError(f"lam must be non-negative, got {lam}")
        self.transport = transport
        self.dim = dim
        self.lam = float(lam)
        self.policy = policy or FixedPenalty()
        self.stopping = stopping or StoppingConfig()

    def run(self, callback=None):
        """Iterate until convergence, the iteration cap, or ``callback`` returns True.

        ``callback(state, info)`` is called after every iteration; time spent
        inside it is excluded from ``info.seconds``.
        """
        N = self.transport.n_workers
        state = AdmmState.initial(N, self.dim, self.policy.rho0)
        result = AdmmResult(state.z, state)
        for _ in range(self.stopping.max_outer_iters):
            t0 = time.perf_counter()
            k = state.k
            self.transport.scatter([Envelope.scatter(k, i, state.z, state.y[i], state.rho[i])
                                    for i in range(N)])
            replies = self.transport.gather(k)
            x_new = np.stack([env.x for env in replies])
            stats = [env.stats for env in replies]
            state.y_hat = state.y + state.rho[:, None] * (state.z[None, :] - x_new)
            state.x = x_new
            state.z_prev = state.z
            state.z = z_update(state, self.lam)
            state.y = y_update(state)
            state.k = k + 1
            res = residuals(state)
            eps_pri, eps_dual = tolerances(state, self.stopping)
            converged = has_converged(state, self.stopping, res)
            rho_used = state.rho.copy()
            state.rho = spectral_update(state, self.policy)
            info = AdmmIteration(
                k=state.k, primal=res.primal, dual=res.dual, primal_norm=res.primal_norm,
                dual_norm=res.dual_norm, eps_pri=eps_pri, eps_dual=eps_dual, rho=rho_used,
                inner_iters=int(sum(s[0] for s in stats)), inner_stats=stats,
                converged=converged, seconds=time.perf_counter() - t0)
            result.history.append(info)
            result.z = state.z
            if callback is not None and callback(state, info):
                result.stopped_by_callback = True
                break
            if converged:
                result.converged = True
                break
        return result
