"""Worker-side message handlers.

A handler turns one scatter envelope into one gather envelope. The same
handler objects serve the in-process and the TCP transports.
"""
import numpy as np

from .comm import SCATTER, Envelope
from .errors import ProtocolError
from .newton import AugmentedObjective, NewtonConfig, newton_solve
from .softmax import SoftmaxObjective, gradient


class AdmmWorker:
    """Solves the local augmented subproblem, warm-started at its last iterate.

    ``inner`` is ``"newton"`` or ``"lbfgs"``; the L-BFGS variant keeps its
    curvature pairs between outer iterations. Gather stats are
    ``[inner iterations, Hessian/gradient products, line-search evaluations]``.
    """

    def __init__(self, worker_id, data, inner="newton", newton_cfg=None, lbfgs_cfg=None):
        self.worker_id = worker_id
        self.data = data
        self.objective = SoftmaxObjective(data, 0.0)
        self.inner = inner
        self.newton_cfg = newton_cfg or NewtonConfig(newton_max_iters=1)
        if inner == "lbfgs":
            from .baselines import LbfgsConfig, LbfgsMemory
            self.lbfgs_cfg = lbfgs_cfg or LbfgsConfig()
            self.memory = LbfgsMemory()
            self._rho = None
        elif inner != "newton":
            raise ValueError(f"unknown inner solver {inner!r}")
        self.x = np.zeros(data.d)

    def handle(self, env):
        if env.kind != SCATTER:
            raise ProtocolError(f"worker {self.worker_id} expected scatter, got {env.kind_name}")
        sub = AugmentedObjective(self.objective, env.rho, env.z, env.y)
        if self.inner == "newton":
            res = newton_solve(sub, self.x, self.newton_cfg)
            stats = [len(res.trace), res.cg_iters, sum(t.ls_evals for t in res.trace)]
        else:
            from .baselines import lbfgs_solve
            if self._rho is not None:
                self.memory.shift_penalty(env.rho - self._rho)
            self._rho = env.rho
            res = lbfgs_solve(sub, self.x, self.lbfgs_cfg, self.memory)
            stats = [len(res.trace), sum(t.evals for t in res.trace), sum(t.evals for t in res.trace)]
        self.x = res.x
        return Envelope.gather(env.iteration, self.worker_id, self.x, stats)


class SoftmaxShard:
    """Mean mini-batch gradient of the data term on one shard."""

    def __init__(self, data):
        self.data = data
        self.n = data.n

    def batch_gradient(self, x, rows):
        rows = np.sort(rows)
        return gradient(self.data.subset(rows), x, 0.0) / rows.size


class SgdWorker:
    """Computes mini-batch gradients at the broadcast point.

    The scatter's iteration tag is the global step index ``t``; epoch
    ``t // steps_per_epoch`` selects a fresh shuffle seeded by
    ``(seed, worker_id, epoch)``. Batches wrap around the shard when it
    holds fewer than ``steps_per_epoch * batch_size`` rows.
    """

    def __init__(self, worker_id, shard, batch_size, steps_per_epoch, seed=0):
        if not 1 <= batch_size <= shard.n:
            raise ValueError(f"batch size {batch_size} outside 1..{shard.n}")
        self.worker_id = worker_id
        self.shard = shard
        self.batch_size = batch_size
        self.steps_per_epoch = steps_per_epoch
        self.seed = seed
        self._epoch = None
        self._perm = None

    def batch_rows(self, step):
        epoch, s = divmod(step, self.steps_per_epoch)
        if epoch != self._epoch:
            rng = np.random.default_rng([self.seed, self.worker_id, epoch])
            self._perm = rng.permutation(self.shard.n)
            self._epoch = epoch
        start = s * self.batch_size
        idx = np.arange(start, start + self.batch_size) % self.shard.n
        return np.unique(self._perm[idx])

    def handle(self, env):
        if env.kind != SCATTER:
            raise ProtocolError(f"worker {self.worker_id} expected scatter, got {env.kind_name}")
        g = self.shard.batch_gradient(env.z, self.batch_rows(env.iteration))
        return Envelope.gather(env.iteration, self.worker_id, g, [1, 1, 0])
