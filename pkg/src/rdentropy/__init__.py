"""Entropy methods for reaction-diffusion systems with spatially varying rates."""

from .entropy import (
    DecayFit,
    Dissipation,
    ckp_ratio,
    entropy_dissipation,
    fit_decay_rate,
    h_p,
    psi,
    psi_array,
    relative_entropy,
)
from .equilibrium import EquilibriumError, EquilibriumResult, complex_balance_residual, find_cbe, special_equilibrium
from .network import (
    Complex,
    NetworkError,
    NetworkSyntaxError,
    Reaction,
    ReactionNetwork,
    check_assumption_A,
    conservation_basis,
    conserved_totals,
    linkage_decompose,
    mass_action_rates,
    parse_network,
)
from .probes import eed_ratio_probe, omega_sweep, sample_compatible_state
from .scenario import Scenario, ScenarioError
from .simulate import SimConfig, State, Trajectory, epsilon_regularized_run, simulate, step
from .spatial import Fields, Grid, make_grid, poincare_constant

__all__ = [name for name in dir() if not name.startswith("_")]
