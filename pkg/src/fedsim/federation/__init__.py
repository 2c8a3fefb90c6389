"""Round-based protocol engine: local training, FedAvg, FedKD, FedKDF and baselines."""

from .config import ArchConfig, RoundConfig, RunSettings
from .experiment import (
    METHOD_ORDER,
    ExperimentResult,
    Method,
    RoundReport,
    run_experiment,
    write_round_csv,
)
from .rounds import (
    ClientState,
    distill_loss,
    fedavg_round,
    fedkd_round,
    fedkdf_round,
    generator_objective,
    local_train,
    weighted_average,
)

__all__ = [
    "METHOD_ORDER",
    "ArchConfig",
    "ClientState",
    "ExperimentResult",
    "Method",
    "RoundConfig",
    "RoundReport",
    "RunSettings",
    "distill_loss",
    "fedavg_round",
    "fedkd_round",
    "fedkdf_round",
    "generator_objective",
    "local_train",
    "run_experiment",
    "weighted_average",
    "write_round_csv",
]
