"""Dissipative rates, exchange coupling and effective temperatures of the field.

Each transition ``i`` with vacuum rate ``G0_i`` sees emission/absorption rates

    G+_i = G0_i [(1 + n(w, T_W)) aW_i + (1 + n(w, T_S)) aS_i]
    G-_i = G0_i [n(w, T_W) conj(aW_i) + n(w, T_S) conj(aS_i)]

where ``aW``/``aS`` are the wall and slab responses supplied by a provider.
Channels are named "1", "2", "3" (machine), "B" (body) and "d" (non-local,
evaluated at the body frequency).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .atoms import SystemSpec, TransitionSpec
from .errors import DomainError, UnphysicalAlpha

LOCAL_CHANNELS = ("1", "2", "3", "B")
CHANNELS = LOCAL_CHANNELS + ("d",)

ALPHA_TOL = 1e-12
IMAG_RTOL = 1e-10


def photon_occupation(omega: float, t: float) -> float:
    """Bose-Einstein occupation 1 / (exp(omega / t) - 1)."""
    if not omega > 0 or not t > 0:
        raise DomainError(f"photon_occupation needs omega > 0 and t > 0, got {omega}, {t}")
    return 1.0 / math.expm1(omega / t) if omega / t < 700 else 0.0


def vacuum_rate(spec: TransitionSpec) -> float:
    """Spontaneous emission rate; material constants live in ``dipole_scale``."""
    return spec.dipole_scale * spec.frequency**3


def environmental_temperature(gamma_plus: float, gamma_minus: float, omega: float) -> float:
    """Temperature of the bath a transition feels, omega / ln(G+ / G-)."""
    if gamma_minus == 0 and gamma_plus > 0:
        return 0.0
    if not (gamma_plus > gamma_minus > 0):
        raise DomainError(
            f"environmental temperature needs G+ > G- > 0, got G+={gamma_plus}, G-={gamma_minus}"
        )
    return omega / math.log(gamma_plus / gamma_minus)


@dataclass(frozen=True)
class AlphaResponse:
    alpha_w: complex
    alpha_s: complex


def toy_slab_alpha(omega, z, amplitude=10.0, width=0.02, decay_length=5.0,
                   background=0.0, floor=1e-6) -> AlphaResponse:
    """Lorentzian slab resonance at omega = 1 decaying away from the surface.

    aS = exp(-z / decay_length) * (amplitude * L(omega) + background) with L a
    unit-height Lorentzian of half width ``width``; the wall share shrinks as
    aW = 1 - min(aS, 1) (1 - floor).  ``background`` adds a flat emissivity.
    """
    lorentz = width**2 / ((omega - 1.0) ** 2 + width**2)
    a_s = math.exp(-z / decay_length) * (amplitude * lorentz + background)
    a_w = 1.0 - min(a_s, 1.0) * (1.0 - floor)
    return AlphaResponse(a_w, a_s)


@dataclass(frozen=True)
class EquilibriumBlackbody:
    """Free blackbody field of the walls: the slab is absent."""

    def alpha(self, channel, omega, z):
        return AlphaResponse(1.0, 0.0)

    def nonlocal_alpha(self, omega, z):
        return None


@dataclass(frozen=True)
class TwoTemperatureFlat:
    """Frequency-independent responses, optionally overridden per channel."""

    alpha_w: float = 0.5
    alpha_s: float = 0.5
    per_channel: tuple = ()  # ((channel, alpha_w, alpha_s), ...)

    def alpha(self, channel, omega, z):
        for ch, aw, as_ in self.per_channel:
            if ch == channel:
                return AlphaResponse(aw, as_)
        return AlphaResponse(self.alpha_w, self.alpha_s)

    def nonlocal_alpha(self, omega, z):
        return None


@dataclass(frozen=True)
class ToyLorentzianSlab:
    amplitude: float = 10.0
    width: float = 0.02
    decay_length: float = 5.0
    background: float = 0.0
    floor: float = 1e-6

    def __post_init__(self):
        if not (self.amplitude > 0 and self.width > 0 and self.decay_length > 0):
            raise DomainError("toy slab parameters must be positive")
        if self.background < 0:
            raise DomainError("toy slab background must be >= 0")

    def alpha(self, channel, omega, z):
        return toy_slab_alpha(omega, z, self.amplitude, self.width, self.decay_length,
                              self.background, self.floor)

    def nonlocal_alpha(self, omega, z):
        return None


TABULATED_HEADER = ("channel", "omega", "z", "alpha_w_re", "alpha_w_im", "alpha_s_re", "alpha_s_im")


class Tabulated:
    """Per-channel (omega, z) tables with bilinear interpolation.

    File format: UTF-8 CSV with header ``channel,omega,z,alpha_w_re,
    alpha_w_im,alpha_s_re,alpha_s_im``.  Each channel must cover a full
    rectangular (omega, z) grid.  Channels ``1``, ``2``, ``3``, ``B`` are
    local; optional ``d`` rows give the non-local response and optional
    ``lambda`` rows carry the exchange coupling in units of G0_d in
    ``alpha_w_re``.  Local channels missing from the file fall back to the
    ``*`` channel when present.  Queries outside a grid raise DomainError.
    """

    def __init__(self, rows, source=None):
        self.source = source
        grouped = {}
        for row in rows:
            grouped.setdefault(row[0], []).append(tuple(float(v) for v in row[1:]))
        if not grouped:
            raise DomainError("tabulated alpha file has no rows")
        self._tables = {ch: self._build(ch, np.array(vals)) for ch, vals in grouped.items()}

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = tuple(h.strip() for h in next(reader))
            if header != TABULATED_HEADER:
                raise DomainError(f"{path}: expected header {','.join(TABULATED_HEADER)}")
            rows = [r for r in reader if r]
        return cls(rows, source=str(path))

    @staticmethod
    def _build(channel, vals):
        omegas = np.unique(vals[:, 0])
        zs = np.unique(vals[:, 1])
        if len(omegas) < 2 or len(zs) < 2:
            raise DomainError(f"channel {channel!r}: need at least 2 omega and 2 z grid points")
        if len(vals) != len(omegas) * len(zs):
            raise DomainError(f"channel {channel!r}: (omega, z) grid is not rectangular")
        grid = np.full((len(omegas), len(zs), 4), np.nan)
        iw = np.searchsorted(omegas, vals[:, 0])
        iz = np.searchsorted(zs, vals[:, 1])
        grid[iw, iz] = vals[:, 2:]
        if np.isnan(grid).any():
            raise DomainError(f"channel {channel!r}: duplicated grid points")
        return RegularGridInterpolator((omegas, zs), grid, method="linear", bounds_error=True)

    def channels(self):
        return tuple(self._tables)

    def _lookup(self, channel, omega, z):
        table = self._tables.get(channel)
        if table is None:
            table = self._tables.get("*")
        if table is None:
            raise DomainError(f"tabulated alpha has no channel {channel!r}")
        try:
            v = table([[omega, z]])[0]
        except ValueError as exc:
            raise DomainError(f"channel {channel!r}: (omega={omega}, z={z}) outside table") from exc
        return v

    def alpha(self, channel, omega, z):
        v = self._lookup(channel, omega, z)
        return AlphaResponse(complex(v[0], v[1]), complex(v[2], v[3]))

    def nonlocal_alpha(self, omega, z):
        if "d" not in self._tables:
            return None
        return self.alpha("d", omega, z)

    def coupling_multiplier(self, omega, z):
        if "lambda" not in self._tables:
            return None
        return float(self._lookup("lambda", omega, z)[0])


@dataclass(frozen=True)
class LambdaRule:
    """Exchange coupling Lambda(omega_B).

    ``inverse_cube``: prefactor * G0_d * (r0 / r)**3; ``constant``: value;
    ``provider``: tabulated multiplier of G0_d.  The sign is passed through.
    """

    kind: str = "inverse_cube"
    prefactor: float = 100.0
    r0: float = 1.0
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("inverse_cube", "constant", "provider"):
            raise DomainError(f"unknown lambda rule {self.kind!r}")


@dataclass(frozen=True)
class NonlocalRule:
    """Non-local rates G_d.

    ``coherence``: G_d+- = exp(-r / coherence_length) sqrt(G_B+- G_r+-),
    with an optional phase exp(+-i phase) mimicking a complex response.
    ``provider``: take the provider's ``d`` response.  ``none``: G_d = 0.
    """

    kind: str = "coherence"
    coherence_length: float = 10.0
    phase: float = 0.0

    def __post_init__(self):
        if self.kind not in ("coherence", "provider", "none"):
            raise DomainError(f"unknown non-local rule {self.kind!r}")
        if self.kind == "coherence" and not self.coherence_length >= 0:
            raise DomainError("coherence_length must be >= 0")

    def factor(self, r):
        if self.coherence_length == 0:
            return 0.0
        return math.exp(-r / self.coherence_length)


@dataclass(frozen=True)
class EnvironmentModel:
    t_w: float
    t_s: float
    provider: object = field(default_factory=ToyLorentzianSlab)
    lambda_rule: LambdaRule = field(default_factory=LambdaRule)
    nonlocal_rule: NonlocalRule = field(default_factory=NonlocalRule)

    def __post_init__(self):
        if not (self.t_w > 0 and self.t_s > 0):
            raise DomainError(f"temperatures must be positive, got T_W={self.t_w}, T_S={self.t_s}")

    def with_temperatures(self, t_w=None, t_s=None) -> "EnvironmentModel":
        return EnvironmentModel(
            self.t_w if t_w is None else t_w,
            self.t_s if t_s is None else t_s,
            self.provider, self.lambda_rule, self.nonlocal_rule,
        )


@dataclass(frozen=True)
class RateSet:
    gamma0: dict
    gamma_plus: dict
    gamma_minus: dict
    coupling: float
    env_temps: dict
    nonlocal_real: bool = True

    @property
    def nonlocal_active(self) -> bool:
        return abs(self.gamma_plus["d"]) > 0 or abs(self.gamma_minus["d"]) > 0

    def min_nonzero_rate(self) -> float:
        vals = [abs(self.gamma_plus[c]) for c in CHANNELS] + [abs(self.gamma_minus[c]) for c in CHANNELS]
        vals = [v for v in vals if v > 0]
        return min(vals)


def _check_local_alpha(channel, a: AlphaResponse):
    for name, v in (("alpha_w", a.alpha_w), ("alpha_s", a.alpha_s)):
        v = complex(v)
        if abs(v.imag) > ALPHA_TOL or v.real < -ALPHA_TOL:
            raise UnphysicalAlpha(f"channel {channel}: {name}={v} must be real and >= 0")
    return max(complex(a.alpha_w).real, 0.0), max(complex(a.alpha_s).real, 0.0)


def _field_rates(g0, omega, t_w, t_s, a_w, a_s):
    n_w = photon_occupation(omega, t_w)
    n_s = photon_occupation(omega, t_s)
    gp = g0 * ((1 + n_w) * a_w + (1 + n_s) * a_s)
    gm = g0 * (n_w * np.conj(a_w) + n_s * np.conj(a_s))
    return gp, gm


def rates(model: EnvironmentModel, system: SystemSpec) -> RateSet:
    z, r = system.geometry.z, system.geometry.r
    omegas = {
        "1": system.machine.omega(1),
        "2": system.machine.omega(2),
        "3": system.machine.omega(3),
        "B": system.omega_b,
    }
    gamma0 = {str(n): vacuum_rate(system.machine.transition(n)) for n in (1, 2, 3)}
    gamma0["B"] = vacuum_rate(system.body.transition)
    rchan = str(system.resonant_index)
    gamma0["d"] = math.sqrt(gamma0["B"] * gamma0[rchan])

    gp, gm, temps = {}, {}, {}
    for ch in LOCAL_CHANNELS:
        a_w, a_s = _check_local_alpha(ch, model.provider.alpha(ch, omegas[ch], z))
        gp[ch], gm[ch] = (float(v) for v in _field_rates(gamma0[ch], omegas[ch], model.t_w, model.t_s, a_w, a_s))
        temps[ch] = environmental_temperature(gp[ch], gm[ch], omegas[ch]) if gamma0[ch] > 0 else None

    wb = omegas["B"]
    rule = model.nonlocal_rule
    if rule.kind == "none":
        gdp = gdm = 0.0
    elif rule.kind == "coherence":
        f = rule.factor(r)
        gdp = f * math.sqrt(gp["B"] * gp[rchan])
        gdm = f * math.sqrt(gm["B"] * gm[rchan])
        if rule.phase:
            gdp = gdp * complex(math.cos(rule.phase), math.sin(rule.phase))
            gdm = gdm * complex(math.cos(rule.phase), -math.sin(rule.phase))
    else:
        a = model.provider.nonlocal_alpha(wb, z)
        if a is None:
            raise UnphysicalAlpha("non-local rule 'provider' but the provider has no 'd' response")
        gdp, gdm = _field_rates(gamma0["d"], wb, model.t_w, model.t_s, complex(a.alpha_w), complex(a.alpha_s))
        for g, bound in ((gdp, gp["B"] * gp[rchan]), (gdm, gm["B"] * gm[rchan])):
            if abs(g) ** 2 > bound * (1 + 1e-9):
                raise UnphysicalAlpha(
                    f"non-local rate |{g}| exceeds the geometric mean {math.sqrt(bound)} of the local rates"
                )
    gdp, gdm = complex(gdp), complex(gdm)
    nonlocal_real = (abs(gdp.imag) <= IMAG_RTOL * abs(gdp)) and (abs(gdm.imag) <= IMAG_RTOL * abs(gdm))
    if nonlocal_real:
        gdp, gdm = gdp.real, gdm.real
    gp["d"], gm["d"] = gdp, gdm
    if nonlocal_real and gdp > gdm > 0 and rule.kind == "coherence":
        # ln(G_d+/G_d-) is the mean of the two local log ratios; evaluating it
        # that way keeps T_d == T_B == T_r bitwise when those coincide
        log_ratio = 0.5 * (math.log(gp["B"] / gm["B"]) + math.log(gp[rchan] / gm[rchan]))
        temps["d"] = wb / log_ratio
    elif nonlocal_real and gdp > gdm > 0:
        temps["d"] = environmental_temperature(gdp, gdm, wb)
    else:
        temps["d"] = None

    if model.lambda_rule.kind == "constant":
        coupling = model.lambda_rule.value
    elif model.lambda_rule.kind == "inverse_cube":
        coupling = model.lambda_rule.prefactor * gamma0["d"] * (model.lambda_rule.r0 / r) ** 3
    else:
        mult = getattr(model.provider, "coupling_multiplier", lambda w, zz: None)(wb, z)
        if mult is None:
            raise UnphysicalAlpha("lambda rule 'provider' but the provider has no 'lambda' rows")
        coupling = mult * gamma0["d"]
    return RateSet(gamma0, gp, gm, float(coupling), temps, nonlocal_real)
