"""Absorption thermal machine driven by a single out-of-equilibrium field.

Two atoms (a three-level machine and a two-level body) sit near a slab held
at temperature ``T_S`` inside walls at ``T_W``.  The package builds the
Markovian master equation for the pair, solves for its stationary state and
derives heat currents, effective temperatures, efficiency and Carnot bounds.

Natural units throughout: hbar = k_B = 1, frequencies in units of the slab
resonance ``omega_S`` and temperatures as ``k_B T / (hbar omega_S)``.
"""

from .atoms import (
    BodySpec,
    Geometry,
    MachineSpec,
    SystemSpec,
    TransitionSpec,
    hamiltonian_body,
    hamiltonian_interaction,
    hamiltonian_machine,
    lowering_operator,
)
from .environment import (
    EnvironmentModel,
    EquilibriumBlackbody,
    LambdaRule,
    NonlocalRule,
    RateSet,
    Tabulated,
    ToyLorentzianSlab,
    TwoTemperatureFlat,
    environmental_temperature,
    photon_occupation,
    rates,
    vacuum_rate,
)
from .dynamics import Liouvillian, StationaryState, assemble, steady_state, time_evolve
from .thermo import FluxReport, flux_report
from .analysis import (
    TaskClass,
    carnot_bound,
    classify,
    efficiency_refrigeration,
    evaluate,
    maximize_power,
    sample_machines,
    scan_phase_diagram,
)

__version__ = "0.1.0"
