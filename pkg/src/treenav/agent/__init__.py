from .her import RelabeledEpisode, her_relabel
from .network import (
    DESK_PROFILE,
    PAPER_PROFILE,
    PROFILES,
    DuelingQNetwork,
    GreedyPolicy,
    NetworkProfile,
    select_action,
)
from .replay import BufferTooSmall, ReplayBuffer, SumTree, Transition
from .trainer import AgentTrainer, TrainerConfig, TrainingResult, epsilon_at, munchausen_targets

__all__ = [
    "AgentTrainer",
    "BufferTooSmall",
    "DESK_PROFILE",
    "DuelingQNetwork",
    "GreedyPolicy",
    "NetworkProfile",
    "PAPER_PROFILE",
    "PROFILES",
    "RelabeledEpisode",
    "ReplayBuffer",
    "SumTree",
    "TrainerConfig",
    "TrainingResult",
    "Transition",
    "epsilon_at",
    "her_relabel",
    "munchausen_targets",
    "select_action",
]
