"""Conversions between natural units and SI/Kelvin for reporting."""

from scipy import constants

#: First resonance of the slab material used as the frequency unit (rad/s).
OMEGA_S = 0.81e14

#: hbar * omega_S / k_B in Kelvin; one natural temperature unit.
KELVIN_PER_UNIT = constants.hbar * OMEGA_S / constants.k


def to_kelvin(t):
    return t * KELVIN_PER_UNIT


def from_kelvin(t_kelvin):
    return t_kelvin / KELVIN_PER_UNIT
