"""Hilbert space, ladder operators and Hamiltonians of the body + machine pair.

The composite basis is frozen as body (outer) x machine (inner)::

    index  0    1    2    3    4    5
    state  g0   g1   g2   e0   e1   e2

so ``index = 3 * b + m`` with ``b`` in {g: 0, e: 1} and machine level ``m``.
Machine level energies are (0, omega_1, omega_3); transition 1 links levels
0-1, transition 2 links 1-2 and transition 3 links 0-2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolation, DomainError

DIM = 6
BASIS_LABELS = ("g0", "g1", "g2", "e0", "e1", "e2")

# (lower, upper) machine levels of each transition
TRANSITION_LEVELS = {1: (0, 1), 2: (1, 2), 3: (0, 2)}

# relative tolerance for the ladder and resonance constraints; values within
# it are snapped to the exact sum so commutators vanish identically
_SNAP_RTOL = 1e-12


def index(body: int, level: int) -> int:
    """Position of |b, m> in the composite basis (b: 0 = g, 1 = e)."""
    return 3 * body + level


@dataclass(frozen=True)
class TransitionSpec:
    frequency: float
    dipole_scale: float = 1.0

    def __post_init__(self):
        if not (self.frequency > 0 and math.isfinite(self.frequency)):
            raise DomainError(f"transition frequency must be > 0, got {self.frequency}")
        if not (self.dipole_scale >= 0 and math.isfinite(self.dipole_scale)):
            raise DomainError(f"dipole_scale must be >= 0, got {self.dipole_scale}")


@dataclass(frozen=True)
class BodySpec:
    transition: TransitionSpec

    @property
    def omega(self) -> float:
        return self.transition.frequency


@dataclass(frozen=True)
class MachineSpec:
    """Three-level machine.  ``transitions`` are ordered (1, 2, 3)."""

    transitions: tuple
    resonant_index: int = 2

    def __post_init__(self):
        if len(self.transitions) != 3:
            raise ConstraintViolation("a machine has exactly three transitions")
        if self.resonant_index not in (1, 2, 3):
            raise ConstraintViolation(f"resonant_index must be 1, 2 or 3, got {self.resonant_index}")
        w1, w2, w3 = (t.frequency for t in self.transitions)
        if abs(w3 - (w1 + w2)) > _SNAP_RTOL * w3:
            raise ConstraintViolation(f"ladder rule violated: omega_3={w3} != omega_1 + omega_2 = {w1 + w2}")
        if w3 != w1 + w2:
            t3 = TransitionSpec(w1 + w2, self.transitions[2].dipole_scale)
            object.__setattr__(self, "transitions", (self.transitions[0], self.transitions[1], t3))

    @classmethod
    def from_frequencies(cls, omega1, omega2, resonant_index=2, dipole_scales=(1.0, 1.0, 1.0)):
        ts = (
            TransitionSpec(omega1, dipole_scales[0]),
            TransitionSpec(omega2, dipole_scales[1]),
            TransitionSpec(omega1 + omega2, dipole_scales[2]),
        )
        return cls(ts, resonant_index)

    def transition(self, n: int) -> TransitionSpec:
        return self.transitions[n - 1]

    def omega(self, n: int) -> float:
        return self.transitions[n - 1].frequency

    @property
    def level_energies(self):
        return (0.0, self.omega(1), self.omega(3))

    @property
    def resonant_omega(self) -> float:
        return self.omega(self.resonant_index)


@dataclass(frozen=True)
class Geometry:
    """Atom-slab distance ``z`` and interatomic distance ``r``, both in micrometres."""

    z: float
    r: float = 1.0

    def __post_init__(self):
        if not (self.z > 0 and self.r > 0):
            raise DomainError(f"geometry needs z > 0 and r > 0, got z={self.z}, r={self.r}")


@dataclass(frozen=True)
class SystemSpec:
    machine: MachineSpec
    body: BodySpec
    geometry: Geometry = field(default_factory=lambda: Geometry(1.0, 1.0))

    def __post_init__(self):
        wr = self.machine.resonant_omega
        wb = self.body.omega
        if abs(wb - wr) > _SNAP_RTOL * wr:
            raise ConstraintViolation(
                f"body frequency {wb} is not resonant with machine transition "
                f"{self.machine.resonant_index} ({wr})"
            )
        if wb != wr:
            body = BodySpec(TransitionSpec(wr, self.body.transition.dipole_scale))
            object.__setattr__(self, "body", body)

    @classmethod
    def build(cls, omega1, omega2, resonant_index=2, z=1.0, r=1.0,
              dipole_scales=(1.0, 1.0, 1.0), body_dipole_scale=1.0):
        machine = MachineSpec.from_frequencies(omega1, omega2, resonant_index, dipole_scales)
        body = BodySpec(TransitionSpec(machine.resonant_omega, body_dipole_scale))
        return cls(machine, body, Geometry(z, r))

    @property
    def resonant_index(self) -> int:
        return self.machine.resonant_index

    @property
    def omega_b(self) -> float:
        return self.body.omega

    def with_geometry(self, z=None, r=None) -> "SystemSpec":
        g = Geometry(self.geometry.z if z is None else z, self.geometry.r if r is None else r)
        return SystemSpec(self.machine, self.body, g)

    def resonant_pair(self):
        """Indices of the degenerate pair (|e, lower_r>, |g, upper_r>)."""
        lo, up = TRANSITION_LEVELS[self.resonant_index]
        return index(1, lo), index(0, up)


def _ket_bra(n, i, j):
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


def lowering_operator(which) -> np.ndarray:
    """Composite-space lowering operator.

    ``which`` is ``"body"`` or a machine transition given as 1, 2, 3 or
    ``"machine-1"`` etc.  sigma = |g><e| x I3, kappa_n = I2 x |lower><upper|.
    """
    if which == "body":
        return np.kron(_ket_bra(2, 0, 1), np.eye(3))
    if isinstance(which, str) and which.startswith("machine-"):
        which = int(which.split("-", 1)[1])
    if which not in TRANSITION_LEVELS:
        raise DomainError(f"unknown ladder operator {which!r}")
    lo, up = TRANSITION_LEVELS[which]
    return np.kron(np.eye(2), _ket_bra(3, lo, up))


def hamiltonian_body(spec: BodySpec) -> np.ndarray:
    s = lowering_operator("body")
    return spec.omega * (s.T @ s)


def hamiltonian_machine(spec: MachineSpec) -> np.ndarray:
    w1, w2, w3 = (t.frequency for t in spec.transitions)
    if w3 != w1 + w2:
        # MachineSpec snaps at construction; this only trips on hand-built objects
        raise ConstraintViolation(f"ladder rule violated: {w3} != {w1} + {w2}")
    k1 = lowering_operator(1)
    k3 = lowering_operator(3)
    return w1 * (k1.T @ k1) + w3 * (k3.T @ k3)


def hamiltonian_interaction(coupling: float, resonant_index: int) -> np.ndarray:
    """Field-mediated exchange coupling Lambda (sigma^dag kappa_r + sigma kappa_r^dag)."""
    s = lowering_operator("body")
    k = lowering_operator(resonant_index)
    return coupling * (s.T @ k + s @ k.T)


def free_hamiltonian(system: SystemSpec) -> np.ndarray:
    return hamiltonian_body(system.body) + hamiltonian_machine(system.machine)
