"""Experiment driver: reference optima, solver runs, metrics, scaling sweeps.

Metrics are written as JSON lines. Every row has ``"type": "iteration"``
except the last, which has ``"type": "summary"``. ``METRICS_SCHEMA`` is the
published JSON schema for both row types.
"""
import hashlib
import json
import logging
import math
import os
import statistics
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import data as datamod
from .admm import AdmmCoordinator, FixedPenalty, SpectralPenalty, StoppingConfig
from .baselines import SGD_STEP_SIZES, LbfgsConfig, SgdConfig, sync_sgd
from .comm import InProcessTransport, sgd_steps_per_epoch, tcp_loopback
from .errors import ConfigError, DivergenceError, SolverError
from .newton import NewtonConfig, newton_solve
from .softmax import SoftmaxObjective, accuracy, loss, predict
from .workers import AdmmWorker, SgdWorker, SoftmaxShard

logger = logging.getLogger(__name__)

SOLVERS = ("newton-admm", "lbfgs-admm", "sync-sgd", "newton-single")
FORMATS = ("synthetic", "libsvm", "csv", "idx")
TRANSPORTS = ("inprocess", "tcp-loopback")
THETA_TARGET = 0.05
# fields that legitimately differ between otherwise identical runs
WALL_CLOCK_FIELDS = ("wall_seconds", "iteration_seconds", "total_seconds",
                     "mean_iteration_seconds", "stdev_iteration_seconds")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    With ``format="synthetic"`` the ``synth_*`` fields and ``seed`` define
    the data; otherwise ``data`` (and ``test_data``) name files. For IDX,
    ``data``/``test_data`` are image files and ``labels``/``test_labels``
    the matching label files.
    """

    solver: str = "newton-admm"
    format: str = "synthetic"
    data: str = None
    labels: str = None
    test_data: str = None
    test_labels: str = None
    limit: int = None
    normalize: bool = False
    partition: str = "contiguous"
    synth_n: int = 10000
    synth_p: int = 10
    synth_classes: int = 4
    synth_separation: float = 5.0
    synth_noise: float = 1.0
    seed: int = 0
    n_workers: int = 4
    transport: str = "inprocess"
    lam: float = 1e-5
    # Newton-CG
    cg_tol: float = 1e-4
    cg_max_iters: int = 10
    armijo_beta: float = 1e-4
    backtrack_gamma: float = 0.5
    ls_max_iters: int = 10
    grad_tol: float = 1e-8
    newton_max_iters: int = 100
    inner_newton_steps: int = 1
    # ADMM
    penalty_policy: str = "fixed"
    rho0: float = 1.0
    t_f: int = 2
    eps_cor: float = 0.2
    eps_abs: float = 1e-3
    eps_rel: float = 1e-3
    max_outer_iters: int = 300
    standard_norms: bool = False
    # baselines
    lbfgs_history: int = 10
    lbfgs_inner_iters: int = 1
    lbfgs_c1: float = 1e-4
    lbfgs_c2: float = 0.9
    sgd_eta: float = 1.0
    sgd_batch: int = 100
    sgd_epochs: int = 50
    sweep: bool = False
    # driver
    output: str = None
    reference: str = None
    stop_at_theta: float = None
    time_budget: float = None

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {', '.join(SOLVERS)}")
        if self.format not in FORMATS:
            raise ConfigError(f"unknown format {self.format!r}; choose from {', '.join(FORMATS)}")
        if self.transport not in TRANSPORTS:
            raise ConfigError(f"unknown transport {self.transport!r}")
        if self.penalty_policy not in ("fixed", "spectral"):
            raise ConfigError(f"unknown penalty policy {self.penalty_policy!r}")
        if self.format != "synthetic" and not self.data:
            raise ConfigError(f"format {self.format!r} needs a data file")
        if self.format == "idx" and not self.labels:
            raise ConfigError("IDX data needs a labels file")
        if self.n_workers < 1:
            raise ConfigError("n_workers must be >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        if self.inner_newton_steps < 1 or self.lbfgs_inner_iters < 1:
            raise ConfigError("inner iteration budgets must be >= 1")
        if self.time_budget is not None and not self.time_budget > 0:
            raise ConfigError("time budget must be positive")
        # build the component configs once so their own checks run here
        self.newton_config(self.newton_max_iters)
        self.penalty()
        self.stopping()
        self.lbfgs_config()
        SgdConfig(self.sgd_eta, self.sgd_batch, self.sgd_epochs, self.seed)

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    def to_dict(self):
        return asdict(self)

    def newton_config(self, max_iters):
        return NewtonConfig(cg_tol=self.cg_tol, cg_max_iters=self.cg_max_iters,
                            armijo_beta=self.armijo_beta, backtrack_gamma=self.backtrack_gamma,
                            ls_max_iters=self.ls_max_iters, grad_tol=self.grad_tol,
                            newton_max_iters=max_iters)

    def lbfgs_config(self):
        return LbfgsConfig(history=self.lbfgs_history, c1=self.lbfgs_c1, c2=self.lbfgs_c2,
                           max_iters=self.lbfgs_inner_iters, grad_tol=self.grad_tol)

    def penalty(self):
        if self.penalty_policy == "fixed":
            return FixedPenalty(self.rho0)
        return SpectralPenalty(rho0=self.rho0, period=self.t_f, eps_cor=self.eps_cor)

    def stopping(self):
        return StoppingConfig(eps_abs=self.eps_abs, eps_rel=self.eps_rel,
                              max_outer_iters=self.max_outer_iters,
                              standard_norms=self.standard_norms)


_NUM = {"type": ["number", "null"]}
_INT = {"type": "integer", "minimum": 0}

METRICS_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "newton-admm metrics row",
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "iteration"},
                "solver": {"enum": list(SOLVERS)},
                "iteration": _INT,
                "wall_seconds": {"type": "number", "minimum": 0},
                "iteration_seconds": {"type": "number", "minimum": 0},
                "objective": {"type": "number"},
                "test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
                "primal_norm": _NUM,
                "dual_norm": _NUM,
                "eps_pri": _NUM,
                "eps_dual": _NUM,
                "rho": {"type": "array", "items": {"type": "number"}},
                "messages": _INT,
                "inner_iterations": _INT,
                "theta": _NUM,
            },
            "required": ["type", "solver", "iteration", "wall_seconds", "iteration_seconds",
                         "objective", "test_accuracy", "primal_norm", "dual_norm", "eps_pri",
                         "eps_dual", "rho", "messages", "inner_iterations", "theta"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "summary"},
                "solver": {"enum": list(SOLVERS)},
                "iterations": _INT,
                "total_seconds": {"type": "number", "minimum": 0},
                "final_objective": _NUM,
                "final_accuracy": _NUM,
                "converged": {"type": "boolean"},
                "stopped": {"type": "string"},
                "iterations_to_theta": {"type": ["integer", "null"]},
                "reference_objective": _NUM,
                "normalized": {"type": "boolean"},
                "n_workers": {"type": "integer", "minimum": 1},
                "n_train": {"type": "integer", "minimum": 1},
                "messages": _INT,
                "sgd_eta": _NUM,
                "sweep": {"type": "array"},
            },
            "required": ["type", "solver", "iterations", "total_seconds", "final_objective",
                         "final_accuracy", "converged", "stopped", "iterations_to_theta",
                         "reference_objective", "normalized", "n_workers", "n_train", "messages"],
            "additionalProperties": False,
        },
    ],
}


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


@dataclass
class MetricsRecord:
    """One row per outer iteration (ADMM, single-node Newton) or epoch (SGD)."""

    solver: str
    iteration: int
    wall_seconds: float
    iteration_seconds: float
    objective: float
    test_accuracy: float
    primal_norm: float = None
    dual_norm: float = None
    eps_pri: float = None
    eps_dual: float = None
    rho: list = field(default_factory=list)
    messages: int = 0
    inner_iterations: int = 0
    theta: float = None

    def to_json(self):
        row = {"type": "iteration"}
        for key, value in asdict(self).items():
            if key == "rho":
                value = [float(r) for r in value]
            elif isinstance(value, float):
                value = _num(value)
            row[key] = value
        return row


def theta(F_k, F_star):
    """Relative suboptimality ``(F_k - F*) / F*``."""
    if not F_star > 0:
        raise ConfigError(f"reference objective must be positive, got {F_star}")
    return (F_k - F_star) / F_star


# ---------------------------------------------------------------- reference

@dataclass
class Reference:
    x: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    cg_iters: int
    fingerprint: str
    lam: float


def fingerprint(data):
    """SHA-256 over the canonical bytes of a dataset."""
    h = hashlib.sha256()
    h.update(np.array([data.n, data.p, data.num_classes], dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(data.labels, dtype=np.int64).tobytes())
    if data.is_sparse:
        A = data.features
        for part in (A.indptr, A.indices, A.data):
            h.update(np.ascontiguousarray(part).tobytes())
    else:
        h.update(np.ascontiguousarray(data.features, dtype=np.float64).tobytes())
    return h.hexdigest()


def reference_config(max_iters=200):
    return NewtonConfig(cg_tol=1e-10, cg_max_iters=200, grad_tol=1e-10, newton_max_iters=max_iters)


def compute_reference(data, lam, cfg=None):
    """High-precision single-node optimum of the regularized objective."""
    cfg = cfg or reference_config()
    obj = SoftmaxObjective(data, lam)
    res = newton_solve(obj, np.zeros(data.d), cfg)
    if not res.converged:
        raise SolverError(
            f"reference solve stopped after {len(res.trace)} Newton iterations with "
            f"||g|| = {res.grad_norm:.3e} > {cfg.grad_tol:g}; raise newton_max_iters "
            f"(now {cfg.newton_max_iters}) or cg_max_iters (now {cfg.cg_max_iters})")
    return Reference(res.x, obj.value(res.x), res.grad_norm, len(res.trace), res.cg_iters,
                     fingerprint(data), float(lam))


def save_reference(path, ref):
    with open(path, "wb") as fh:
        np.savez(fh, x=ref.x, objective=ref.objective, grad_norm=ref.grad_norm,
                 iterations=ref.iterations, cg_iters=ref.cg_iters,
                 fingerprint=ref.fingerprint, lam=ref.lam)


def load_reference(path, data=None, lam=None):
    """Load a saved reference, checking it belongs to ``data`` and ``lam``."""
    if not os.path.exists(path):
        raise ConfigError(f"reference file not found: {path}")
    with np.load(path) as z:
        ref = Reference(z["x"].copy(), float(z["objective"]), float(z["grad_norm"]),
                        int(z["iterations"]), int(z["cg_iters"]), str(z["fingerprint"]),
                        float(z["lam"]))
    if data is not None and ref.fingerprint != fingerprint(data):
        raise ConfigError(f"reference {path} was computed on different data")
    if lam is not None and ref.lam != float(lam):
        raise ConfigError(f"reference {path} uses lambda={ref.lam}, run uses {lam}")
    return ref


# --------------------------------------------------------------------- data

def _require(path, what):
    if not path or not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")


def load_data(cfg):
    """Return ``(train, test)``; ``test`` falls back to ``train``."""
    if cfg.format == "synthetic":
        spec = datamod.SyntheticSpec(n=cfg.synth_n, p=cfg.synth_p, num_classes=cfg.synth_classes,
                                     separation=cfg.synth_separation, noise=cfg.synth_noise,
                                     seed=cfg.seed)
        train, test = datamod.generate_synthetic(spec)
    else:
        _require(cfg.data, "data file")
        if cfg.test_data:
            _require(cfg.test_data, "test data file")
        if cfg.format == "idx":
            _require(cfg.labels, "labels file")
            train = datamod.load_idx(cfg.data, cfg.labels, limit=cfg.limit)
            test = None
            if cfg.test_data:
                _require(cfg.test_labels, "test labels file")
                test = datamod.load_idx(cfg.test_data, cfg.test_labels)
        elif cfg.format == "libsvm":
            train = datamod.load_libsvm(cfg.data)
            test = None
            if cfg.test_data:
                test = datamod.load_libsvm(cfg.test_data, n_features=train.p,
                                           num_classes=train.num_classes)
        else:
            train = datamod.load_csv(cfg.data)
            test = datamod.load_csv(cfg.test_data, num_classes=train.num_classes) if cfg.test_data else None
        if cfg.limit is not None and cfg.format != "idx":
            train = train.subset(slice(0, min(cfg.limit, train.n)))
    if cfg.normalize:
        if test is None:
            train = datamod.normalize_maxabs(train)
        else:
            train, test = datamod.normalize_maxabs(train, test)
    return train, (test if test is not None else train)


@contextmanager
def make_transport(kind, handlers):
    transport = InProcessTransport(handlers) if kind == "inprocess" else tcp_loopback(handlers)
    try:
        yield transport
    finally:
        transport.close()


# ------------------------------------------------------------------ running

@dataclass
class ExperimentResult:
    records: list
    summary: dict
    x: np.ndarray

    def rows(self):
        return [r.to_json() for r in self.records] + [self.summary]


class _Sink:
    """Writes rows as they are produced so partial runs leave metrics behind."""

    def __init__(self, path):
        self.fh = open(path, "w") if path else None

    def write(self, row):
        if self.fh:
            self.fh.write(json.dumps(row, sort_keys=True) + "\n")
            self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


class _Monitor:
    """Evaluates an iterate outside the timed region and decides on early stops."""

    def __init__(self, cfg, train, test, reference, sink):
        self.cfg = cfg
        self.train = train
        self.test = test
        self.reference = reference
        self.sink = sink
        self.records = []
        self.wall = 0.0
        self.stop_reason = None

    def record(self, x, seconds, **extra):
        self.wall += seconds
        F = loss(self.train, x, self.cfg.lam)
        th = theta(F, self.reference.objective) if self.reference is not None else None
        rec = MetricsRecord(solver=self.cfg.solver, iteration=len(self.records) + 1,
                            wall_seconds=self.wall, iteration_seconds=seconds, objective=F,
                            test_accuracy=accuracy(predict(self.test, x), self.test.labels),
                            theta=th, **extra)
        self.records.append(rec)
        self.sink.write(rec.to_json())
        if self.cfg.stop_at_theta is not None and th is not None and th <= self.cfg.stop_at_theta:
            self.stop_reason = "theta"
        elif self.cfg.time_budget is not None and self.wall >= self.cfg.time_budget:
            self.stop_reason = "time_budget"
        return self.stop_reason is not None


def _run_admm(cfg, parts, monitor):
    inner = "newton" if cfg.solver == "newton-admm" else "lbfgs"
    workers = [AdmmWorker(i, part, inner=inner,
                          newton_cfg=cfg.newton_config(cfg.inner_newton_steps),
                          lbfgs_cfg=cfg.lbfgs_config())
               for i, part in enumerate(parts)]
    d = parts[0].d
    with make_transport(cfg.transport, workers) as transport:
        coord = AdmmCoordinator(transport, d, cfg.lam, cfg.penalty(), cfg.stopping())

        def callback(state, info):
            return monitor.record(
                state.z, info.seconds, primal_norm=info.primal_norm, dual_norm=info.dual_norm,
                eps_pri=info.eps_pri, eps_dual=info.eps_dual, rho=list(info.rho),
                messages=transport.stats.messages_sent, inner_iterations=info.inner_iters)

        result = coord.run(callback)
        messages = transport.stats.messages_sent
    if result.converged:
        stopped = "converged"
    elif monitor.stop_reason:
        stopped = monitor.stop_reason
    else:
        stopped = "max_outer_iters"
    return result.z, result.converged, stopped, messages


def _run_sgd(cfg, parts, n_total, eta, monitor):
    steps = sgd_steps_per_epoch(n_total, cfg.sgd_batch, len(parts))
    if any(cfg.sgd_batch > part.n for part in parts):
        raise ConfigError(f"sgd batch {cfg.sgd_batch} exceeds the smallest shard "
                          f"({min(part.n for part in parts)} rows)")
    workers = [SgdWorker(i, SoftmaxShard(part), cfg.sgd_batch, steps, seed=cfg.seed)
               for i, part in enumerate(parts)]
    sgd_cfg = SgdConfig(eta, cfg.sgd_batch, cfg.sgd_epochs, cfg.seed)
    objective = SoftmaxObjective(monitor.train, cfg.lam)
    d = parts[0].d
    with make_transport(cfg.transport, workers) as transport:

        def callback(x, info):
            return monitor.record(x, info.seconds, messages=transport.stats.messages_sent,
                                  inner_iterations=info.steps)

        result = sync_sgd(transport, np.zeros(d), sgd_cfg, n_total, cfg.lam, objective, callback)
        messages = transport.stats.messages_sent
    return result.x, False, monitor.stop_reason or "epochs", messages


def _run_single(cfg, train, monitor):
    obj = SoftmaxObjective(train, cfg.lam)
    step_cfg = cfg.newton_config(1)
    x = np.zeros(train.d)
    for _ in range(cfg.newton_max_iters):
        t0 = time.perf_counter()
        res = newton_solve(obj, x, step_cfg)
        seconds = time.perf_counter() - t0
        if res.converged:
            return x, True, "converged", 0
        x = res.x
        it = res.trace[0]
        if monitor.record(x, seconds, inner_iterations=it.cg_iters):
            return x, False, monitor.stop_reason, 0
    return x, False, "newton_max_iters", 0


def _iterations_to_theta(records, target=THETA_TARGET):
    for rec in records:
        if rec.theta is not None and rec.theta <= target:
            return rec.iteration
    return None


def run_experiment(cfg, data=None, reference=None):
    """Run one solver end to end and return its metrics.

    ``data`` may be a preloaded ``(train, test)`` pair and ``reference`` a
    ``Reference``; otherwise they come from ``cfg``. When ``cfg.output`` is
    set, rows are streamed there (partial rows survive a failure).
    """
    train, test = data if data is not None else load_data(cfg)
    if reference is None and cfg.reference:
        reference = load_reference(cfg.reference, train, cfg.lam)
    if train.n < cfg.n_workers:
        raise ConfigError(f"{train.n} training rows cannot feed {cfg.n_workers} workers")
    parts = datamod.partition(train, datamod.PartitionPlan(cfg.n_workers, cfg.partition))
    if cfg.solver == "sync-sgd":
        # validate before any output file is created
        SgdConfig(cfg.sgd_eta, cfg.sgd_batch, cfg.sgd_epochs, cfg.seed)
    sink = _Sink(cfg.output)
    try:
        sweep_rows = None
        eta = None
        if cfg.solver in ("newton-admm", "lbfgs-admm"):
            monitor = _Monitor(cfg, train, test, reference, sink)
            x, converged, stopped, messages = _run_admm(cfg, parts, monitor)
        elif cfg.solver == "newton-single":
            monitor = _Monitor(cfg, train, test, reference, sink)
            x, converged, stopped, messages = _run_single(cfg, train, monitor)
        else:
            if cfg.sweep:
                best, sweep_rows = sgd_sweep(cfg, parts, train, test, reference)
                eta = best
            else:
                eta = cfg.sgd_eta
            monitor = _Monitor(cfg, train, test, reference, sink)
            x, converged, stopped, messages = _run_sgd(cfg, parts, train.n, eta, monitor)
        records = monitor.records
        last = records[-1] if records else None
        summary = {
            "type": "summary",
            "solver": cfg.solver,
            "iterations": len(records),
            "total_seconds": monitor.wall,
            "final_objective": _num(last.objective) if last else _num(loss(train, x, cfg.lam)),
            "final_accuracy": _num(last.test_accuracy) if last else None,
            "converged": bool(converged),
            "stopped": stopped,
            "iterations_to_theta": _iterations_to_theta(records),
            "reference_objective": _num(reference.objective) if reference else None,
            "normalized": bool(cfg.normalize),
            "n_workers": cfg.n_workers,
            "n_train": train.n,
            "messages": int(messages),
        }
        if cfg.solver == "sync-sgd":
            summary["sgd_eta"] = eta
            if sweep_rows is not None:
                summary["sweep"] = sweep_rows
        sink.write(summary)
    finally:
        sink.close()
    return ExperimentResult(records, summary, x)


def sgd_sweep(cfg, parts, train, test, reference, step_sizes=SGD_STEP_SIZES):
    """Try every step size; return the best one and a per-eta table.

    With a reference the best run is the one reaching theta <= 0.05 in the
    fewest epochs (ties and misses broken by final objective); without one it
    is the lowest final objective. Diverging step sizes are recorded and skipped.
    """
    table = []
    for eta in step_sizes:
        monitor = _Monitor(replace(cfg, output=None), train, test, reference, _Sink(None))
        try:
            _run_sgd(cfg, parts, train.n, eta, monitor)
        except DivergenceError as exc:
            logger.info("eta=%g diverged: %s", eta, exc)
            table.append({"eta": eta, "diverged": True, "final_objective": None,
                          "iterations_to_theta": None})
            continue
        table.append({"eta": eta, "diverged": False,
                      "final_objective": _num(monitor.records[-1].objective) if monitor.records else None,
                      "iterations_to_theta": _iterations_to_theta(monitor.records)})
    ok = [row for row in table if not row["diverged"] and row["final_objective"] is not None]
    if not ok:
        raise DivergenceError("every SGD step size in the sweep diverged")

    def key(row):
        hit = row["iterations_to_theta"]
        return (hit is None, hit if hit is not None else 0, row["final_objective"])

    return min(ok, key=key)["eta"], table


def strip_wall_clock(rows):
    """Copies of metrics rows without the timing fields."""
    out = []
    for row in rows:
        row = {k: v for k, v in row.items() if k not in WALL_CLOCK_FIELDS}
        if "sweep" in row:
            row["sweep"] = [dict(r) for r in row["sweep"]]
        out.append(row)
    return out


def read_metrics(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ------------------------------------------------------------------ scaling

def scaling_sweep(base_cfg, worker_counts, mode="strong", data=None, with_reference=True):
    """Run ``base_cfg`` for each worker count.

    ``strong`` keeps the full training set for every N. ``weak`` keeps
    ``n // max(worker_counts)`` rows per worker, taking the first
    ``rows_per_worker * N`` rows. A reference is computed per distinct
    training set when ``with_reference`` is set.
    """
    if mode not in ("strong", "weak"):
        raise ConfigError(f"scaling mode must be 'strong' or 'weak', got {mode!r}")
    worker_counts = list(worker_counts)
    if not worker_counts or min(worker_counts) < 1:
        raise ConfigError("worker counts must be positive")
    train, test = data if data is not None else load_data(base_cfg)
    per_worker = train.n // max(worker_counts)
    if per_worker < 1:
        raise ConfigError(f"{train.n} rows are too few for {max(worker_counts)} workers")
    table = []
    refs = {}
    for N in worker_counts:
        subset = train if mode == "strong" else train.subset(slice(0, per_worker * N))
        ref = None
        if with_reference:
            if subset.n not in refs:
                refs[subset.n] = compute_reference(subset, base_cfg.lam)
            ref = refs[subset.n]
        cfg = replace(base_cfg, n_workers=N, output=None)
        result = run_experiment(cfg, data=(subset, test), reference=ref)
        sizes = [len(r) for r in datamod.PartitionPlan(N, cfg.partition).ranges(subset.n)]
        times = [r.iteration_seconds for r in result.records]
        table.append({
            "mode": mode,
            "n_workers": N,
            "rows_total": subset.n,
            "rows_per_worker": sizes,
            "iterations": len(result.records),
            "mean_iteration_seconds": statistics.fmean(times) if times else None,
            "stdev_iteration_seconds": statistics.stdev(times) if len(times) > 1 else 0.0,
            "iterations_to_theta": result.summary["iterations_to_theta"],
            "final_objective": result.summary["final_objective"],
        })
    return table
