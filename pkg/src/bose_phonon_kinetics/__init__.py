"""Radial phonon kinetics coupled to a Bose-Einstein condensate at low temperature."""

from .collision import (CollisionOutput, CollisionTables, apply_pair, apply_strong,
                        collision_bracket, entropy_dissipation, gain, kernel,
                        loss_frequency, weak_pairing)
from .dynamics import (PhysicalParams, SimState, StepControl, adaptive_dt, coupled_rhs,
                       integrate, nc_closed_form, stability_threshold, step,
                       threshold_check)
from .grid import (RadialFunction, RadialGrid, bose_einstein, full_moment, gaussian_bump,
                   line_moment, weighted_sup)

__version__ = "0.1.0"
