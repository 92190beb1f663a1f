from .base import SimulatorHandle, child_seed, synthetic_handle
from .fish import FishConfig, fish_handle, fish_simulate
from .ocean import OceanConfig, ocean_handle, ocean_simulate, ocean_truth
from .synthetic import FieldConfig, TruthRecord, make_synthetic_field

__all__ = [
    "SimulatorHandle", "child_seed", "synthetic_handle",
    "FishConfig", "fish_handle", "fish_simulate",
    "OceanConfig", "ocean_handle", "ocean_simulate", "ocean_truth",
    "FieldConfig", "TruthRecord", "make_synthetic_field",
]
