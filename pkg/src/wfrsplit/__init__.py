"""Wasserstein-Fisher-Rao operator splitting for reaction-diffusion equations."""

from .energy import EnergySpec, Nonlinearity, energy_value, pressure, prox_internal
from .frstep import ReactionSpec, fisher_rao_step, fr_distance, fr_step_nutrient_c
from .grid import Grid, read_snapshot_csv, write_pgm, write_snapshot_csv
from .models import (ModelConfig, Trajectory, run_heleshaw, run_model, run_nutrient,
                     run_prey_predator, run_scalar)
from .wstep import ALG2Config, dynamic_w2, wasserstein_jko_step

__version__ = "0.1.0"

__all__ = [
    "ALG2Config",
    "EnergySpec",
    "Grid",
    "ModelConfig",
    "Nonlinearity",
    "ReactionSpec",
    "Trajectory",
    "dynamic_w2",
    "energy_value",
    "fisher_rao_step",
    "fr_distance",
    "fr_step_nutrient_c",
    "pressure",
    "prox_internal",
    "read_snapshot_csv",
    "run_heleshaw",
    "run_model",
    "run_nutrient",
    "run_prey_predator",
    "run_scalar",
    "wasserstein_jko_step",
    "write_pgm",
    "write_snapshot_csv",
]
