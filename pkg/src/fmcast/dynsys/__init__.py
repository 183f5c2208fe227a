from .dataset import Dataset, DatasetError, Normalizer, TransitionPairs, split_train_test
from .fields import CONDITIONING, PHYSICAL, RHO_MIN, Field, Role, Trajectory, augment
from .generators import GeneratorSpec, UnstableStepError, generate
from .rollout import DeterministicSampler, FlowSampler, OneStepSampler, RolloutError, rollout

__all__ = [
    "CONDITIONING",
    "PHYSICAL",
    "RHO_MIN",
    "Dataset",
    "DatasetError",
    "DeterministicSampler",
    "Field",
    "FlowSampler",
    "GeneratorSpec",
    "Normalizer",
    "OneStepSampler",
    "Role",
    "RolloutError",
    "Trajectory",
    "TransitionPairs",
    "UnstableStepError",
    "augment",
    "generate",
    "rollout",
    "split_train_test",
]
