"""Maximum-entropy inverse reinforcement learning for sequence generation."""
from .config import RunConfig, load_config
from .numerics import RngStream
from .oracle import OracleModel, generate_dataset, make_oracle, nll_oracle
from .policy import BOS, EOS, GenDims, GeneratorParams, init_generator, sample_batch
from .reward import RewardDims, RewardParams, init_reward
from .trainer import TrainConfig, TrainReport, run_irl

__version__ = "0.1.0"

__all__ = [
    "BOS", "EOS", "GenDims", "GeneratorParams", "OracleModel", "RewardDims", "RewardParams",
    "RngStream", "RunConfig", "TrainConfig", "TrainReport", "generate_dataset", "init_generator",
    "init_reward", "load_config", "make_oracle", "nll_oracle", "run_irl", "sample_batch",
]
