"""Liouvillian assembly, stationary state and RK4 time evolution.

Superoperators act on column-stacked density matrices:
``vec(rho) = rho.reshape(-1, order="F")`` so that
``vec(A rho B) = kron(B.T, A) @ vec(rho)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import atoms
from .atoms import DIM, SystemSpec
from .environment import RateSet
from .errors import DegenerateSteadyState, SolverFailure, StepTooLarge

_EYE = np.eye(DIM)

NULLSPACE_RTOL = 1e-10
CLIP_EIG = 1e-10

# permutation with vec(M^T) = SWAP @ vec(M)
SWAP = np.zeros((DIM * DIM, DIM * DIM))
for _i in range(DIM):
    for _j in range(DIM):
        SWAP[_i + DIM * _j, _j + DIM * _i] = 1.0


def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v):
    return np.asarray(v).reshape(DIM, DIM, order="F")


def spre(a):
    return np.kron(_EYE, a)


def spost(a):
    return np.kron(a.T, _EYE)


def sprepost(a, b):
    """Superoperator of rho -> a rho b."""
    return np.kron(b.T, a)


def commutator_super(h):
    return -1j * (spre(h) - spost(h))


def hermitian_conjugate_super(s):
    """Superoperator of rho -> S(rho^dag)^dag."""
    return SWAP @ s.conj() @ SWAP


def _lindblad_term(rate, a, b):
    """rate * (a rho b^dag - 1/2 {b^dag a, rho})."""
    bd = b.conj().T
    return rate * (sprepost(a, bd) - 0.5 * spre(bd @ a) - 0.5 * spost(bd @ a))


def local_dissipator(gamma_plus, gamma_minus, ladder):
    """Local Lindblad dissipator; G+ goes with the lowering jump."""
    return _lindblad_term(gamma_plus, ladder, ladder) + _lindblad_term(gamma_minus, ladder.conj().T, ladder.conj().T)


def nonlocal_dissipator(gamma_d_plus, gamma_d_minus, sigma, kappa_r):
    """Cross dissipator between the body and the resonant machine transition.

    G_d+ (k rho s^dag - 1/2 {s^dag k, rho}) + G_d- (k^dag rho s - 1/2 {s k^dag, rho}) + h.c.
    """
    part = _lindblad_term(gamma_d_plus, kappa_r, sigma) + _lindblad_term(
        gamma_d_minus, kappa_r.conj().T, sigma.conj().T
    )
    return part + hermitian_conjugate_super(part)


@lru_cache(maxsize=None)
def _unit_local(which):
    a = atoms.lowering_operator(which)
    return _frozen(_lindblad_term(1.0, a, a), _lindblad_term(1.0, a.T, a.T))


@lru_cache(maxsize=None)
def _unit_nonlocal(resonant_index):
    s = atoms.lowering_operator("body")
    k = atoms.lowering_operator(resonant_index)
    plus, minus = _lindblad_term(1.0, k, s), _lindblad_term(1.0, k.T, s.T)
    return _frozen(plus, minus, hermitian_conjugate_super(plus), hermitian_conjugate_super(minus))


def _frozen(*arrays):
    for a in arrays:
        a.setflags(write=False)
    return arrays


def _assembled_nonlocal(gdp, gdm, resonant_index):
    """Same superoperator as nonlocal_dissipator, from cached unit pieces."""
    plus, minus, plus_hc, minus_hc = _unit_nonlocal(resonant_index)
    gdp, gdm = complex(gdp), complex(gdm)
    out = gdp * plus + gdm * minus + gdp.conjugate() * plus_hc + gdm.conjugate() * minus_hc
    return out.real if gdp.imag == 0 and gdm.imag == 0 else out


@dataclass(frozen=True)
class Liouvillian:
    matrix: np.ndarray
    parts: dict
    system: SystemSpec
    rates: RateSet
    h_body: np.ndarray
    h_machine: np.ndarray
    h_interaction: np.ndarray

    @property
    def h_total(self):
        return self.h_body + self.h_machine + self.h_interaction

    def apply(self, rho, part=None):
        m = self.matrix if part is None else self.parts[part]
        return unvec(m @ vec(rho))


def assemble(system: SystemSpec, rates: RateSet) -> Liouvillian:
    hb = atoms.hamiltonian_body(system.body)
    hm = atoms.hamiltonian_machine(system.machine)
    hmb = atoms.hamiltonian_interaction(rates.coupling, system.resonant_index)
    gp, gm = rates.gamma_plus, rates.gamma_minus
    parts = {"hamiltonian": commutator_super(hb + hm + hmb)}
    for ch, which in (("B", "body"), ("1", 1), ("2", 2), ("3", 3)):
        emit, absorb = _unit_local(which)
        parts[ch] = gp[ch] * emit + gm[ch] * absorb
    parts["d"] = _assembled_nonlocal(gp["d"], gm["d"], system.resonant_index)
    total = sum(parts.values())
    return Liouvillian(total, parts, system, rates, hb, hm, hmb)


@dataclass(frozen=True)
class StationaryState:
    rho: np.ndarray
    c_r: complex
    residual: float
    system: SystemSpec = field(repr=False, default=None)

    @property
    def populations(self):
        return self.rho.diagonal().real.copy()

    def body_marginal(self):
        return np.einsum("ambm->ab", self.rho.reshape(2, 3, 2, 3))

    def machine_marginal(self):
        return np.einsum("aman->mn", self.rho.reshape(2, 3, 2, 3))

    def off_resonant_coherence(self) -> float:
        """Largest off-diagonal magnitude outside the resonant pair."""
        i, j = self.system.resonant_pair()
        mask = ~np.eye(DIM, dtype=bool)
        mask[i, j] = mask[j, i] = False
        return float(np.abs(self.rho[mask]).max())


def resonant_coherence(rho, system: SystemSpec) -> complex:
    """c_r = <e, lower_r| rho |g, upper_r>, equal to <sigma kappa_r^dag>."""
    i, j = system.resonant_pair()
    return complex(rho[i, j])


def steady_state(liouvillian: Liouvillian) -> StationaryState:
    lmat = liouvillian.matrix
    sv = np.linalg.svd(lmat, compute_uv=False)
    if sv[-2] < NULLSPACE_RTOL * sv[0]:
        raise DegenerateSteadyState(
            f"numerical nullspace dimension > 1 (second smallest singular value {sv[-2]:.3e}, largest {sv[0]:.3e})"
        )
    a = lmat.copy()
    a[0, :] = vec(_EYE)  # d rho_00/dt row replaced by the trace constraint
    b = np.zeros(DIM * DIM, dtype=complex)
    b[0] = 1.0
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SolverFailure("non-finite stationary state")
    rho = unvec(x)
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w[0] < -CLIP_EIG:
        raise SolverFailure(f"stationary state has eigenvalue {w[0]:.3e} < -{CLIP_EIG}")
    if w[0] < 0:
        w = np.clip(w, 0.0, None)
        rho = (v * w) @ v.conj().T
    rho = rho / np.trace(rho).real
    residual = float(np.abs(lmat @ vec(rho)).max())
    return StationaryState(rho, resonant_coherence(rho, liouvillian.system), residual, liouvillian.system)


def operator_norm(liouvillian: Liouvillian) -> float:
    return float(np.linalg.norm(liouvillian.matrix, 2))


def rk4_propagator(lmat, dt):
    """One fixed RK4 step for the linear flow d vec(rho)/dt = L vec(rho)."""
    hl = dt * lmat
    eye = np.eye(lmat.shape[0])
    hl2 = hl @ hl
    return _keep_trace(eye + hl + hl2 / 2 + hl2 @ hl / 6 + hl2 @ hl2 / 24)


def _keep_trace(prop):
    """Reset the trace row of a propagator to vec(I)^T.

    tr(L x) = 0 makes this row exact for every RK4 step and every power of
    it; only round-off is removed.
    """
    d = int(round(math.sqrt(prop.shape[0])))
    tr = vec(np.eye(d))
    return prop - np.outer(tr, tr @ prop - tr) / d


def propagator_power(prop, n):
    """prop**n by binary exponentiation, trace row kept exact at every product."""
    result = np.eye(prop.shape[0], dtype=prop.dtype)
    base = prop
    while n > 0:
        if n & 1:
            result = _keep_trace(result @ base)
        n >>= 1
        if n:
            base = _keep_trace(base @ base)
    return result


def default_t_final(liouvillian: Liouvillian) -> float:
    return 50.0 / liouvillian.rates.min_nonzero_rate()


def default_dt(liouvillian: Liouvillian) -> float:
    norm = operator_norm(liouvillian)
    return 0.05 / norm if norm > 0 else 1.0


def _plan(liouvillian, t_final, dt):
    norm = operator_norm(liouvillian)
    if dt is None:
        dt = default_dt(liouvillian)
    if norm > 0 and not dt < 0.1 / norm:
        raise StepTooLarge(f"dt={dt} violates dt < 0.1/||L|| = {0.1 / norm}")
    if not t_final >= 0:
        raise ValueError("t_final must be >= 0")
    steps = max(1, math.ceil(t_final / dt)) if t_final > 0 else 0
    return steps, (t_final / steps if steps else dt)


def time_evolve(liouvillian: Liouvillian, rho0, t_final=None, dt=None):
    """Fixed-step RK4 integration of d rho/dt = L(rho) from ``rho0``.

    The ``steps`` identical RK4 updates are applied as powers of the
    one-step propagator (binary exponentiation), which gives the same
    iterates as the step-by-step loop at logarithmic cost.
    """
    if t_final is None:
        t_final = default_t_final(liouvillian)
    steps, h = _plan(liouvillian, t_final, dt)
    if steps == 0:
        return np.array(rho0, dtype=complex)
    prop = propagator_power(rk4_propagator(liouvillian.matrix, h), steps)
    return unvec(prop @ vec(np.asarray(rho0, dtype=complex)))


def evolve_trajectory(liouvillian: Liouvillian, rho0, t_final, dt=None, samples=10):
    """RK4 states at ``samples`` equally spaced checkpoints (plus t=0)."""
    steps, h = _plan(liouvillian, t_final, dt)
    samples = max(1, min(samples, steps))
    per = steps // samples
    one = rk4_propagator(liouvillian.matrix, h)
    chunk = propagator_power(one, per)
    tail = propagator_power(one, steps - per * samples)
    v = vec(np.asarray(rho0, dtype=complex))
    out = [(0.0, unvec(v))]
    for k in range(1, samples + 1):
        v = chunk @ v
        if k == samples:
            v = tail @ v
        out.append((h * (per * k if k < samples else steps), unvec(v)))
    return out


def gibbs_state(h, t):
    """exp(-h/t)/Z for a Hermitian ``h`` (diagonalised, shifted for stability)."""
    w, v = np.linalg.eigh(h)
    p = np.exp(-(w - w.min()) / t)
    p /= p.sum()
    return (v * p) @ v.conj().T


def trace_distance(a, b) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())


def density_matrix_to_json(rho) -> dict:
    return {
        "basis": list(atoms.BASIS_LABELS),
        "basis_order": "body (g, e) outer x machine levels (0, 1, 2) inner",
        "layout": "row-major, entries as [re, im]",
        "data": [[[float(x.real), float(x.imag)] for x in row] for row in np.asarray(rho)],
    }


def density_matrix_from_json(payload) -> np.ndarray:
    if list(payload.get("basis", [])) != list(atoms.BASIS_LABELS):
        raise ValueError("density matrix JSON has an unexpected basis")
    data = np.array(payload["data"], dtype=float)
    if data.shape != (DIM, DIM, 2):
        raise ValueError(f"density matrix JSON has shape {data.shape}, expected (6, 6, 2)")
    return data[..., 0] + 1j * data[..., 1]
