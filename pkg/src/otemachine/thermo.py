"""Heat currents, temperatures and the first/second-law diagnostics.

Sign convention: a heat current is positive when it is absorbed by the atoms.

Heat through dissipator ``D_k`` is ``Tr[H_at D_k(rho)]`` with ``H_at = H_M``
for the machine channels, ``H_B`` for the body and both for the non-local
channel.  The non-local dissipator changes the energy of *both* atoms by the
same amount ``q_d``, so stationary energy balance reads

    q_B + q_1 + q_2 + q_3 + 2 q_d = 0

and the same doubled weight appears in the entropy balance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .atoms import TRANSITION_LEVELS
from .dynamics import Liouvillian, StationaryState, gibbs_state
from .environment import RateSet
from .errors import AuditFailure, DomainError, FormMismatch, KernelUnavailable

EPS = np.finfo(float).eps
POP_NEG_TOL = 1e-10

SIGN_CONVENTION = "positive = absorbed by atoms"


def roundoff_scale(liouvillian: Liouvillian) -> float:
    """Gross one-way energy flow scale of a configuration.

    Net heat currents are differences of one-way flows of this size, so
    their floating-point noise is a few ulp of it.
    """
    r = liouvillian.rates
    s = liouvillian.system
    omegas = {"1": s.machine.omega(1), "2": s.machine.omega(2), "3": s.machine.omega(3), "B": s.omega_b, "d": s.omega_b}
    gross = sum(omegas[c] * (abs(r.gamma_plus[c]) + abs(r.gamma_minus[c])) for c in omegas)
    return gross + s.omega_b * abs(r.coupling)


def roundoff_floor(liouvillian: Liouvillian) -> float:
    return 64 * EPS * roundoff_scale(liouvillian)


def heat_flux_local(h_at, part, rho) -> float:
    """Tr[h_at D(rho)] for a dissipator superoperator ``part``."""
    rho = rho.rho if isinstance(rho, StationaryState) else rho
    d = (part @ rho.reshape(-1, order="F")).reshape(rho.shape, order="F")
    return float(np.trace(h_at @ d).real)


def heat_flux_resonant(state: StationaryState, coupling: float, omega_b: float) -> float:
    """Heat absorbed by the machine through the exchange coupling, 2 w_B Lambda Im(c_r)."""
    return 2.0 * omega_b * coupling * state.c_r.imag


def heat_flux_resonant_commutator(h_machine, h_interaction, rho) -> float:
    """Same current as -i Tr(H_M [H_MB, rho])."""
    rho = rho.rho if isinstance(rho, StationaryState) else rho
    comm = h_interaction @ rho - rho @ h_interaction
    return float((-1j * np.trace(h_machine @ comm)).real)


def nonlocal_closed_form(c_r: complex, rates: RateSet, omega_b: float) -> float:
    """-w_B Re{conj(c_r) [G_d+ - conj(G_d-)]}.

    For real G_d the conjugation of c_r is immaterial; for complex G_d it is
    the form that matches the trace evaluation of the dissipator.
    """
    gp, gm = complex(rates.gamma_plus["d"]), complex(rates.gamma_minus["d"])
    return -omega_b * (np.conj(c_r) * (gp - np.conj(gm))).real


def heat_flux_nonlocal(state: StationaryState, liouvillian: Liouvillian, side="machine") -> float:
    """Non-local heat current into one atom, cross-checked against its closed form."""
    h = liouvillian.h_machine if side == "machine" else liouvillian.h_body
    if side not in ("machine", "body"):
        raise ValueError(f"side must be 'machine' or 'body', got {side!r}")
    traced = heat_flux_local(h, liouvillian.parts["d"], state.rho)
    closed = nonlocal_closed_form(state.c_r, liouvillian.rates, liouvillian.system.omega_b)
    floor = roundoff_floor(liouvillian)
    if abs(traced - closed) > 1e-10 * max(abs(traced), abs(closed)) + floor:
        raise FormMismatch(f"non-local heat ({side}): trace form {traced!r} vs closed form {closed!r}")
    return traced


@dataclass(frozen=True)
class ExtendedTemperature:
    """Temperature on the extended line with its continuous coordinate -1/theta."""

    theta: float
    minus_inverse: float

    @property
    def inverted(self) -> bool:
        return self.minus_inverse > 0


def population_temperature(p_lower: float, p_upper: float, omega: float) -> ExtendedTemperature:
    """omega / ln(p_lower / p_upper); +inf at equal populations, negative under inversion."""
    if p_lower < -POP_NEG_TOL or p_upper < -POP_NEG_TOL:
        raise DomainError(f"negative population ({p_lower}, {p_upper})")
    p_lower, p_upper = max(p_lower, 0.0), max(p_upper, 0.0)
    if p_lower == 0 and p_upper == 0:
        raise DomainError("both populations vanish")
    if p_upper == 0:
        return ExtendedTemperature(0.0, -math.inf)
    if p_lower == 0:
        return ExtendedTemperature(-0.0, math.inf)
    log_ratio = math.log(p_lower / p_upper)
    mi = -log_ratio / omega
    theta = math.inf if log_ratio == 0 else omega / log_ratio
    return ExtendedTemperature(theta, mi)


def flux_temperature_slope(gamma_plus, gamma_minus, omega, rel=0.01, points=21) -> float:
    """Slope of a local current against (T - theta) for theta within T(1 +- rel).

    Populations of the two levels sum to one; the returned slope is the
    least-squares linear coefficient near detailed balance.
    """
    t = omega / math.log(gamma_plus / gamma_minus)
    thetas = t * (1 + np.linspace(-rel, rel, points))
    ratio = np.exp(-omega / thetas)  # p_upper / p_lower
    p_lower = 1 / (1 + ratio)
    q = omega * (gamma_minus * p_lower - gamma_plus * ratio * p_lower)
    slope, _ = np.polyfit(t - thetas, q, 1)
    return float(slope)


@dataclass(frozen=True)
class EntropyProduction:
    flux_form: float
    kernel_form: float
    scale: float
    lawful: bool


def _kernels(liouvillian: Liouvillian):
    rates = liouvillian.rates
    hm, hb = liouvillian.h_machine, liouvillian.h_body
    out = {}
    for ch in ("1", "2", "3"):
        out[ch] = (hm, rates.env_temps[ch])
    out["B"] = (hb, rates.env_temps["B"])
    if rates.nonlocal_active:
        if not rates.nonlocal_real or rates.env_temps["d"] is None:
            raise KernelUnavailable("non-local rates are not real; the non-local dissipator has no Gibbs kernel")
        out["d"] = (hm + hb, rates.env_temps["d"])
    return out


def _logm_hermitian(rho):
    w, v = np.linalg.eigh(rho)
    return (v * np.log(w)) @ v.conj().T


def entropy_production(state: StationaryState, liouvillian: Liouvillian, tol_rel=1e-12) -> EntropyProduction:
    """Stationary entropy balance, in flux form and in kernel form.

    flux form:   sum_k Q_k / T_k over channels, the non-local current entering
                 through both atoms (2 q_d / T_d); lawful when <= 0.
    kernel form: sum_k Tr[D_k(rho) ln rho_k] with rho_k the Gibbs kernel of
                 channel k; equals minus the flux form.
    """
    flux = kernel = scale = 0.0
    for ch, (h, t) in _kernels(liouvillian).items():
        part = liouvillian.parts[ch]
        q = heat_flux_local(h, part, state.rho)
        flux += q / t
        scale += abs(q / t)
        d = (part @ state.rho.reshape(-1, order="F")).reshape(6, 6, order="F")
        kernel += float(np.trace(d @ _logm_hermitian(gibbs_state(h, t))).real)
    floor = roundoff_floor(liouvillian) / min(t for _, t in _kernels(liouvillian).values())
    return EntropyProduction(flux, kernel, scale, flux <= tol_rel * scale + floor)


@dataclass(frozen=True)
class BalanceRelation:
    predicted_ratio: float
    measured_ratio: float
    delta_term: float

    @property
    def relative_error(self) -> float:
        return abs(self.predicted_ratio - self.measured_ratio) / abs(self.measured_ratio)


def balance_relation(state: StationaryState, rates: RateSet, omega_b: float = None) -> BalanceRelation:
    """Body population ratio predicted from the coherence c_r and the rates.

    p_e / p_g = (G_B- - Delta) / (G_B+ + Delta), with
    Delta = 2 Lambda Im(c_r) + Re{conj(c_r) [G_d+ - conj(G_d-)]}.
    """
    c = state.c_r
    gp, gm = complex(rates.gamma_plus["d"]), complex(rates.gamma_minus["d"])
    delta = 2 * rates.coupling * c.imag + (np.conj(c) * (gp - np.conj(gm))).real
    rho_b = state.body_marginal()
    pg, pe = rho_b[0, 0].real, rho_b[1, 1].real
    predicted = (rates.gamma_minus["B"] - delta) / (rates.gamma_plus["B"] + delta)
    return BalanceRelation(float(predicted), float(pe / pg), float(delta))


@dataclass(frozen=True)
class ExchangeAudit:
    q_m: float
    w_m: float
    h_eff_norm: float
    q_r: float


def resonant_exchange_audit(state: StationaryState, liouvillian: Liouvillian, check=True) -> ExchangeAudit:
    """Split the machine-body exchange into heat and work.

    The body marginal dresses the machine with H_eff = Tr_B[H_MB (rho_B x I)];
    the part of H_eff commuting with H_M (H1) renormalises the machine
    energy, the rest (H2) can do work.  Heat is Tr_M[(H_M + H1) D_MB] with
    D_MB = -i Tr_B[H_MB, rho - rho_B x rho_M]; work is -i Tr_M([H_M + H1, H2] rho_M)
    (the dH1/dt term vanishes at stationarity).
    """
    rho = state.rho
    hmb = liouvillian.h_interaction
    h_m = np.diag(np.diag(liouvillian.h_machine)[:3]).astype(complex)
    rho_b = state.body_marginal()
    rho_m = state.machine_marginal()

    h_eff = np.einsum("aman->mn", (hmb @ np.kron(rho_b, np.eye(3))).reshape(2, 3, 2, 3))
    energies = np.diag(h_m).real
    commuting = np.abs(energies[:, None] - energies[None, :]) < 1e-12 * max(1.0, energies.max())
    h1 = np.where(commuting, h_eff, 0)
    h2 = h_eff - h1

    corr = rho - np.kron(rho_b, rho_m)
    comm = hmb @ corr - corr @ hmb
    d_mb = -1j * np.einsum("aman->mn", comm.reshape(2, 3, 2, 3))
    q_m = float(np.trace((h_m + h1) @ d_mb).real)
    hh = h_m + h1
    w_m = float((-1j * np.trace((hh @ h2 - h2 @ hh) @ rho_m)).real)
    q_r = heat_flux_resonant(state, liouvillian.rates.coupling, liouvillian.system.omega_b)
    norm = float(np.abs(h_eff).max())
    audit = ExchangeAudit(q_m, w_m, norm, q_r)
    if check:
        if abs(w_m) > 1e-10 * abs(q_r):
            raise AuditFailure(f"work rate {w_m!r} is not negligible against the resonant heat {q_r!r}")
        if norm > 1e-10 * abs(liouvillian.rates.coupling):
            raise AuditFailure(f"effective machine Hamiltonian norm {norm!r} exceeds 1e-10 Lambda")
    return audit


@dataclass(frozen=True)
class FluxReport:
    q_b: float
    q_1: float
    q_2: float
    q_3: float
    q_d: float
    q_d_body: float
    q_r: float
    first_law_residual: float
    entropy_production: float | None
    entropy_production_kernel: float | None
    entropy_scale: float | None
    second_law_status: str
    theta: dict
    minus_inverse_theta: dict
    env_temps: dict
    c_r: complex
    discord_proxy: float
    p_e: float
    p_g: float
    omegas: dict
    resonant_index: int
    roundoff_floor: float = field(default=0.0)

    def local_fluxes(self) -> dict:
        return {"1": self.q_1, "2": self.q_2, "3": self.q_3, "B": self.q_b}

    @property
    def max_abs_flux(self) -> float:
        return max(abs(v) for v in (self.q_b, self.q_1, self.q_2, self.q_3, self.q_d, self.q_r))

    def to_json(self) -> dict:
        d = asdict(self)
        d["c_r"] = [self.c_r.real, self.c_r.imag]
        d["sign_convention"] = SIGN_CONVENTION
        d["first_law"] = "q_b + q_1 + q_2 + q_3 + q_d + q_d_body"
        return _json_safe(d)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, (np.floating, np.integer)):
        return _json_safe(obj.item())
    return obj


def machine_populations(state: StationaryState):
    return np.diag(state.machine_marginal()).real


def flux_report(state: StationaryState, liouvillian: Liouvillian) -> FluxReport:
    sys_ = liouvillian.system
    rates = liouvillian.rates
    hm, hb = liouvillian.h_machine, liouvillian.h_body
    q = {ch: heat_flux_local(hm, liouvillian.parts[ch], state.rho) for ch in ("1", "2", "3")}
    q["B"] = heat_flux_local(hb, liouvillian.parts["B"], state.rho)
    q_d = heat_flux_nonlocal(state, liouvillian, "machine")
    q_d_body = heat_flux_nonlocal(state, liouvillian, "body")
    q_r = heat_flux_resonant(state, rates.coupling, sys_.omega_b)

    pm = machine_populations(state)
    rho_b = state.body_marginal()
    pg, pe = float(rho_b[0, 0].real), float(rho_b[1, 1].real)
    omegas = {str(n): sys_.machine.omega(n) for n in (1, 2, 3)}
    omegas["B"] = sys_.omega_b
    theta, mi = {}, {}
    for n in (1, 2, 3):
        lo, up = TRANSITION_LEVELS[n]
        et = population_temperature(pm[lo], pm[up], omegas[str(n)])
        theta[str(n)], mi[str(n)] = et.theta, et.minus_inverse
    et = population_temperature(pg, pe, omegas["B"])
    theta["B"], mi["B"] = et.theta, et.minus_inverse

    try:
        ep = entropy_production(state, liouvillian)
        sp, spk, scale = ep.flux_form, ep.kernel_form, ep.scale
        status = "lawful" if ep.lawful else "violated"
    except KernelUnavailable:
        sp = spk = scale = None
        status = "skipped: KernelUnavailable"

    residual = abs(q["B"] + q["1"] + q["2"] + q["3"] + q_d + q_d_body)
    return FluxReport(
        q_b=q["B"], q_1=q["1"], q_2=q["2"], q_3=q["3"], q_d=q_d, q_d_body=q_d_body, q_r=q_r,
        first_law_residual=residual,
        entropy_production=sp, entropy_production_kernel=spk, entropy_scale=scale,
        second_law_status=status,
        theta=theta, minus_inverse_theta=mi, env_temps=dict(rates.env_temps),
        c_r=state.c_r, discord_proxy=abs(state.c_r), p_e=pe, p_g=pg,
        omegas=omegas, resonant_index=sys_.resonant_index,
        roundoff_floor=roundoff_floor(liouvillian),
    )


def total_transition_flux(report: FluxReport, n: int, resonant_index: int = None) -> float:
    """Total heat entering machine transition ``n``; the resonant one also carries q_r + q_d."""
    r = report.resonant_index if resonant_index is None else resonant_index
    base = {1: report.q_1, 2: report.q_2, 3: report.q_3}[n]
    return base + report.q_r + report.q_d if n == r else base
