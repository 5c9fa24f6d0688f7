"""Particle simulation of a Vlasov-Poisson plasma confined in a cylinder by a
singular magnetic mirror, with the diagnostics used to study its confinement."""

from .convergence import ConvergenceGauge, run_pair, velocity_growth_check
from .coulomb import FieldConfig, field_all, field_at, quasi_lipschitz_ratio
from .diagnostics import (covering_check, decay_fit, density_histogram,
                          field_scaling_report, local_energy, lp53_check,
                          mollifier_deriv, mollifier_eval, q_of_r, slab_masses,
                          time_averaged_field)
from .dynamics import (ConfinementLoss, SimulationError, StepConfig, Trajectory,
                       confinement_residual, rotate_velocity, run, step,
                       work_energy_residual)
from .geometry import DomainError, Geometry, eval_B, eval_H, eval_h
from .initial_data import (Ensemble, InitialDataParams, Particle, restrict_to_cutoff,
                           sample_ensemble, slab_mass)

__version__ = "0.1.0"
