"""Distributed Newton-ADMM for multiclass softmax classification."""
from .errors import (ConfigError, DivergenceError, InputError, NewtonAdmmError, ProtocolError,
                     SolverError, TransportError)
from .softmax import Dataset, SoftmaxObjective, accuracy, gradient, hessian_vec, loss, predict
from .newton import AugmentedObjective, NewtonConfig, cg_solve, line_search, newton_solve
from .admm import AdmmCoordinator, FixedPenalty, SpectralPenalty, StoppingConfig
from .baselines import LbfgsConfig, SgdConfig, lbfgs_solve, sync_sgd
from .comm import Envelope, InProcessTransport, TcpTransport, tcp_loopback
from .workers import AdmmWorker, SgdWorker, SoftmaxShard
from .data import PartitionPlan, SyntheticSpec, generate_synthetic, load_idx, load_libsvm, partition
from . import kernels

__version__ = "0.1.0"
