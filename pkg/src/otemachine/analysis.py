"""Task classification, refrigeration efficiency, phase scans, power maximisation and sampling."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import units
from .atoms import BodySpec, Geometry, SystemSpec
from .dynamics import Liouvillian, StationaryState, assemble, steady_state
from .environment import EnvironmentModel, LambdaRule, NonlocalRule, RateSet, ToyLorentzianSlab, rates
from .errors import (
    AuditFailure,
    CarnotUnavailable,
    NoRefrigerationWindow,
    NonlocalFluxSign,
    NotRefrigerating,
    OrderingViolation,
    OteError,
)
from .thermo import (
    FluxReport,
    balance_relation,
    flux_report,
    heat_flux_resonant,
    heat_flux_resonant_commutator,
    resonant_exchange_audit,
    roundoff_floor,
)

CLASSIFY_TOL = 1e-9
HIST_BINS = 50
WORKERS_ENV = "OTEMACHINE_WORKERS"


class TaskClass(str, Enum):
    STRONG_COOLING = "StrongCooling"
    LIGHT_COOLING = "LightCooling"
    LIGHT_HEATING = "LightHeating"
    STRONG_HEATING = "StrongHeating"
    POPULATION_INVERSION = "PopulationInversion"
    IDLE = "Idle"


@dataclass(frozen=True)
class Classification:
    label: TaskClass
    theta_b: float
    t_b: float
    margin: float


def classify(report: FluxReport, t_w: float, t_s: float, tol: float = CLASSIFY_TOL) -> Classification:
    """Label what the machine does to the body.

    Strong tasks push theta_B outside [min(T_W, T_S), max(T_W, T_S)], light
    tasks keep it inside while moving it away from T_B.
    """
    theta = report.theta["B"]
    t_b = report.env_temps["B"]
    lo, hi = min(t_w, t_s), max(t_w, t_s)
    margin = min(abs(theta - lo), abs(theta - hi)) if math.isfinite(theta) else math.inf
    if report.p_e >= report.p_g:
        return Classification(TaskClass.POPULATION_INVERSION, theta, t_b, margin)
    if abs(theta - t_b) <= tol:
        label = TaskClass.IDLE
    elif theta < t_b:
        label = TaskClass.STRONG_COOLING if theta < lo - tol else TaskClass.LIGHT_COOLING
    else:
        label = TaskClass.STRONG_HEATING if theta > hi + tol else TaskClass.LIGHT_HEATING
    return Classification(label, theta, t_b, margin)


@dataclass(frozen=True)
class Evaluation:
    system: SystemSpec
    environment: EnvironmentModel
    rates: RateSet
    liouvillian: Liouvillian
    state: StationaryState
    report: FluxReport
    task: Classification


def evaluate(system: SystemSpec, environment: EnvironmentModel) -> Evaluation:
    """rates -> Liouvillian -> stationary state -> heat report -> task label."""
    rs = rates(environment, system)
    liou = assemble(system, rs)
    state = steady_state(liou)
    report = flux_report(state, liou)
    task = classify(report, environment.t_w, environment.t_s)
    return Evaluation(system, environment, rs, liou, state, report, task)


def resonant_power(system: SystemSpec, environment: EnvironmentModel) -> float:
    """Resonant heat current only (cheap path used by the optimiser)."""
    rs = rates(environment, system)
    state = steady_state(assemble(system, rs))
    return heat_flux_resonant(state, rs.coupling, system.omega_b)


# -- efficiency and Carnot bound -------------------------------------------------


def efficiency_refrigeration(report: FluxReport) -> float:
    """Q_r / (Q_1 + Q_2) for refrigeration of the body through transition 2."""
    if report.resonant_index != 2:
        raise NotRefrigerating("refrigeration efficiency is defined for a body resonant with transition 2")
    q_in = report.q_1 + report.q_2
    # currents within round-off of zero carry no direction
    floor = report.roundoff_floor
    if not report.q_r > floor:
        raise NotRefrigerating(f"resonant current {report.q_r!r} does not extract heat from the body (floor {floor!r})")
    if not q_in > floor:
        raise NotRefrigerating(f"Q_1 + Q_2 = {q_in!r} is not an energy input (floor {floor!r})")
    return report.q_r / q_in


BRANCH_HOT = "T_d>T_2"
BRANCH_COLD = "T_d<=T_2"


@dataclass(frozen=True)
class CarnotReport:
    eta: float | None
    eta_c: float
    branch: str

    @property
    def ratio(self) -> float | None:
        return None if self.eta is None else self.eta / self.eta_c


def carnot_value(t1, t2, t3, td, omega1, omega2):
    """Zero-entropy-production efficiency bound; returns (eta_c, branch).

    Works with any number type supporting field arithmetic (floats or Fractions).
    """
    w = omega2 / omega1
    if td <= t2:
        return w, BRANCH_COLD
    first = w / 2
    second = t2 * td * (t1 - t3) / (2 * t1 * t3 * (td - t2))
    third = w / 2 * t2 * (td - t3) / (t3 * (td - t2))
    return first + second + third, BRANCH_HOT


def carnot_bound(t1, t2, t3, td, omega1, omega2, eta=None) -> CarnotReport:
    """Carnot bound on refrigeration through transition 2.

    Only defined for the refrigeration ordering T_3 < T_2, T_d < T_1 and
    T_3 < T_d, T_2 < T_1; other orderings raise OrderingViolation.
    """
    if td is None:
        raise OrderingViolation("no non-local temperature (complex or vanishing non-local rates)")
    if not all(t > 0 for t in (t1, t2, t3, td)):
        raise OrderingViolation("temperatures must be positive")
    if not (t3 < t2 < t1 and t3 < td < t1):
        raise OrderingViolation(
            f"refrigeration ordering T3 < T2, Td < T1 violated (T1={t1}, T2={t2}, T3={t3}, Td={td})"
        )
    eta_c, branch = carnot_value(t1, t2, t3, td, omega1, omega2)
    return CarnotReport(eta, eta_c, branch)


def carnot_for(evaluation: Evaluation) -> CarnotReport:
    """Efficiency and Carnot bound of an evaluated refrigerator."""
    rep = evaluation.report
    eta = efficiency_refrigeration(rep)
    if not rep.q_d < 0:
        raise NonlocalFluxSign(f"non-local current {rep.q_d!r} is not negative; bound not derived for this case")
    t = rep.env_temps
    return carnot_bound(t["1"], t["2"], t["3"], t["d"], rep.omegas["1"], rep.omegas["2"], eta)


# -- law checks -----------------------------------------------------------------


@dataclass(frozen=True)
class LawCheck:
    name: str
    status: str  # "pass", "fail" or "skipped"
    value: float | None
    threshold: float | None
    detail: str = ""


def law_checks(evaluation: Evaluation, residual_tolerance: float = 1e-10) -> list:
    """Invariant suite on one stationary state, in a fixed order."""
    rep, st, liou = evaluation.report, evaluation.state, evaluation.liouvillian
    floor = roundoff_floor(liou)
    out = []

    def add(name, value, threshold, detail=""):
        out.append(LawCheck(name, "pass" if value <= threshold else "fail", float(value), float(threshold), detail))

    # residual certificate: a loose solver tolerance cannot certify 1e-8 laws
    cert = max(st.residual, residual_tolerance)
    add("solver_residual", cert, 1e-8, f"residual {st.residual:.3e}, tolerance {residual_tolerance:.3e}")
    add("first_law", rep.first_law_residual, 1e-10 * rep.max_abs_flux + floor)
    if rep.entropy_production is None:
        out.append(LawCheck("second_law", "skipped", None, None, "KernelUnavailable: complex non-local rates"))
    else:
        add("second_law", rep.entropy_production, 1e-12 * rep.entropy_scale + floor / _min_temp(rep))
    rho_m, rho_b = st.machine_marginal(), st.body_marginal()
    off = max(
        st.off_resonant_coherence(),
        float(np.abs(rho_m - np.diag(np.diag(rho_m))).max()),
        float(abs(rho_b[0, 1])),
    )
    add("x_structure", off, 1e-8)
    bal = balance_relation(st, evaluation.rates)
    add("balance_relation", bal.relative_error, 1e-8)
    comm = heat_flux_resonant_commutator(liou.h_machine, liou.h_interaction, st.rho)
    add("resonant_commutator", abs(comm - rep.q_r), 1e-12 * abs(rep.q_r) + floor)
    try:
        audit = resonant_exchange_audit(st, liou)
        add("exchange_audit", abs(audit.q_m - audit.q_r), 1e-12 * abs(audit.q_r) + floor)
    except AuditFailure as exc:
        out.append(LawCheck("exchange_audit", "fail", None, None, str(exc)))
    bad = [ch for ch in ("1", "2", "3", "B") if not sign_law_holds(rep, ch)]
    out.append(LawCheck("flux_direction", "fail" if bad else "pass", float(len(bad)), 0.0, ",".join(bad)))
    return out


def _min_temp(rep: FluxReport) -> float:
    return min(t for t in rep.env_temps.values() if t)


def sign_law_holds(rep: FluxReport, channel: str, floor: float | None = None) -> bool:
    """sign(q) = sign(1/theta - 1/T), i.e. sign(T - theta) on the extended line.

    Currents with |q| <= ``floor`` (default: the round-off floor of the
    configuration) carry no sign and are accepted; a zero current always is.
    """
    q = rep.local_fluxes()[channel]
    if abs(q) <= (rep.roundoff_floor if floor is None else floor):
        return True
    # for theta > 0 this is sign(T - theta); inverted transitions (theta < 0) always emit
    drive = -rep.minus_inverse_theta[channel] - 1.0 / rep.env_temps[channel]
    return (q > 0) == (drive > 0)


# -- phase-diagram scan ---------------------------------------------------------


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def _pool_map(fn, items, workers):
    """Ordered map, in-process for one worker."""
    workers = _workers(workers)
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


@dataclass(frozen=True)
class ScanCell:
    z: float
    dt: float
    label: str
    theta_b: float
    t_b: float
    minus_inv_theta_b: float
    first_law_ok: bool
    error: str = ""


def _scan_cell(args) -> ScanCell:
    system, environment, z, dt = args
    nan = math.nan
    try:
        env = environment.with_temperatures(t_s=environment.t_w - dt)
        ev = evaluate(system.with_geometry(z=z), env)
    except (OteError, ValueError, np.linalg.LinAlgError) as exc:
        return ScanCell(z, dt, "Error", nan, nan, nan, False, f"{type(exc).__name__}: {exc}")
    rep = ev.report
    ok = rep.first_law_residual <= 1e-10 * rep.max_abs_flux + rep.roundoff_floor
    return ScanCell(z, dt, ev.task.label.value, rep.theta["B"], rep.env_temps["B"],
                    rep.minus_inverse_theta["B"], ok)


PHASE_COLUMNS = ("z", "dT", "label", "theta_b", "t_b", "minus_inv_theta_b", "error")
PHASE_KELVIN_COLUMNS = ("dT_kelvin", "theta_b_kelvin", "t_b_kelvin")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    return repr(float(x))


@dataclass
class PhaseDiagram:
    z_grid: tuple
    dt_grid: tuple
    cells: list

    @property
    def success_fraction(self) -> float:
        return sum(1 for c in self.cells if not c.error) / len(self.cells) if self.cells else 0.0

    @property
    def first_law_violations(self) -> int:
        return sum(1 for c in self.cells if not c.error and not c.first_law_ok)

    def labels(self) -> set:
        return {c.label for c in self.cells if not c.error}

    def to_csv(self, kelvin: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(PHASE_COLUMNS + (PHASE_KELVIN_COLUMNS if kelvin else ()))
        for c in self.cells:
            row = [_fmt(c.z), _fmt(c.dt), c.label, _fmt(c.theta_b), _fmt(c.t_b), _fmt(c.minus_inv_theta_b), c.error]
            if kelvin:
                row += [_fmt(units.to_kelvin(c.dt)), _fmt(units.to_kelvin(c.theta_b)), _fmt(units.to_kelvin(c.t_b))]
            w.writerow(row)
        return buf.getvalue()


def scan_phase_diagram(system: SystemSpec, environment: EnvironmentModel, z_grid, dt_grid,
                       workers=None, progress=None) -> PhaseDiagram:
    """Classify every (z, dT = T_W - T_S) cell at fixed T_W.

    Cells are ordered z-major; failures are recorded in the cell and the scan
    continues.
    """
    z_grid = tuple(float(z) for z in z_grid)
    dt_grid = tuple(float(d) for d in dt_grid)
    if not all(math.isfinite(v) for v in z_grid + dt_grid):
        raise ValueError("scan grids must be finite")
    items = [(system, environment, z, dt) for z in z_grid for dt in dt_grid]
    cells = _pool_map(_scan_cell, items, workers)
    if progress:
        progress(len(cells), len(items))
    return PhaseDiagram(z_grid, dt_grid, cells)


def default_scan_grids(nz=40, ndt=37):
    """z from 0.1 to 30 um (log spaced) and dT in [-270, 270] K, always including dT = 0."""
    z = np.geomspace(0.1, 30.0, nz)
    dt = units.from_kelvin(np.linspace(-270.0, 270.0, ndt))
    if 0.0 not in dt:
        dt = np.sort(np.append(dt, 0.0))
    return z, dt


def default_scan_setup():
    """Configuration of the documented toy-slab phase scan."""
    system = SystemSpec.build(0.9, 0.1, resonant_index=2, z=1.0, r=1.0)
    env = EnvironmentModel(
        t_w=units.from_kelvin(300.0),
        t_s=units.from_kelvin(300.0),
        provider=ToyLorentzianSlab(amplitude=10.0, width=0.02, decay_length=5.0),
        lambda_rule=LambdaRule("inverse_cube", prefactor=100.0, r0=1.0),
        nonlocal_rule=NonlocalRule("coherence", coherence_length=10.0),
    )
    return system, env


# -- power maximisation ---------------------------------------------------------

GOLDEN = (math.sqrt(5) - 1) / 2


def maximize_1d(f, lo, hi, grid=64, xtol=1e-10, max_iter=200):
    """Maximise ``f`` on the open interval (lo, hi).

    Coarse grid of ``grid`` interior points, leftmost maximiser on ties, then
    golden-section refinement inside the neighbouring cells.  The refined
    point replaces the grid point only if it is strictly better.  Returns
    (x_best, f_best, trace) with trace the list of (x, f(x)) evaluations.
    """
    xs = lo + (hi - lo) * np.arange(1, grid + 1) / (grid + 1)
    trace = []
    vals = []
    for x in xs:
        v = f(float(x))
        trace.append((float(x), v))
        vals.append(v)
    vals = np.asarray(vals, dtype=float)
    finite = np.where(np.isfinite(vals), vals, -np.inf)
    k = int(np.argmax(finite))  # first occurrence -> leftmost tie
    best_x, best_v = float(xs[k]), float(finite[k])
    if not math.isfinite(best_v):
        return best_x, best_v, trace
    a = float(xs[k - 1]) if k > 0 else lo
    b = float(xs[k + 1]) if k < grid - 1 else hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    trace += [(c, fc), (d, fd)]
    for _ in range(max_iter):
        if b - a <= xtol * max(1.0, abs(a)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
            trace.append((c, fc))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
            trace.append((d, fd))
    x_ref, v_ref = (c, fc) if fc >= fd else (d, fd)
    if v_ref > best_v:
        best_x, best_v = x_ref, v_ref
    return best_x, best_v, trace


@dataclass(frozen=True)
class PowerOptimum:
    omega1: float
    omega3: float
    q_r_max: float
    eta: float | None
    eta_c: float | None
    branch: str | None
    status: str
    trace: tuple = field(repr=False, default=())

    @property
    def carnot_ratio(self) -> float | None:
        if self.eta is None or self.eta_c is None:
            return None
        return self.eta / self.eta_c

    def trace_csv(self, environment=None, body=None, geometry=None) -> str:
        """Optimiser trace ``omega1,q_r,eta,eta_c`` sorted by omega1."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("omega1", "q_r", "eta", "eta_c"))
        for x, q, eta, etac in sorted(self.trace):
            w.writerow([_fmt(x), _fmt(q), "" if eta is None else _fmt(eta), "" if etac is None else _fmt(etac)])
        return buf.getvalue()


def _carnot_at(system, environment):
    try:
        ev = evaluate(system, environment)
        cr = carnot_for(ev)
        return cr.eta, cr.eta_c, cr.branch, "ok"
    except NotRefrigerating as exc:
        return None, None, None, f"NotRefrigerating: {exc}"
    except CarnotUnavailable as exc:
        try:
            eta = efficiency_refrigeration(ev.report)
        except NotRefrigerating:
            eta = None
        return eta, None, None, f"{type(exc).__name__}: {exc}"


def maximize_power(body: BodySpec, environment: EnvironmentModel, geometry: Geometry,
                   omega2=None, grid=64, omega_max=1.0, annotate_trace=False) -> PowerOptimum:
    """Maximise the resonant current over omega_1 in (omega_2, omega_max), omega_3 = omega_1 + omega_2.

    The body is resonant with transition 2, so omega_2 = omega_B.
    """
    omega2 = body.omega if omega2 is None else omega2
    if not 0 < omega2 < omega_max:
        raise ValueError(f"need 0 < omega2 < {omega_max}, got {omega2}")

    def build(w1):
        return SystemSpec.build(w1, omega2, resonant_index=2, z=geometry.z, r=geometry.r,
                                body_dipole_scale=body.transition.dipole_scale)

    def power(w1):
        try:
            return resonant_power(build(w1), environment)
        except OteError:
            return -math.inf

    x, q, raw = maximize_1d(power, omega2, omega_max, grid=grid)
    if not q > 0:
        raise NoRefrigerationWindow(f"no omega_1 in ({omega2}, {omega_max}) gives a positive resonant current")
    system = build(x)
    floor = roundoff_floor(assemble(system, rates(environment, system)))
    if q <= floor:
        raise NoRefrigerationWindow(f"largest resonant current {q!r} is below the round-off floor {floor!r}")
    eta, eta_c, branch, status = _carnot_at(system, environment)
    trace = []
    for w1, qq in raw:
        if annotate_trace:
            e, ec, _, _ = _carnot_at(build(w1), environment)
        else:
            e = ec = None
        trace.append((w1, qq, e, ec))
    return PowerOptimum(x, x + omega2, q, eta, eta_c, branch, status, tuple(trace))


# -- random sampling ------------------------------------------------------------


@dataclass(frozen=True)
class SampleRanges:
    """Draw ranges; temperatures in kelvin, T_S = T_W + offset clipped below by ``t_s_floor_kelvin``."""

    z: tuple = (0.9, 100.0)
    t_w_kelvin: tuple = (50.0, 500.0)
    t_s_offset_kelvin: tuple = (-500.0, 0.0)
    t_s_floor_kelvin: float = 20.0

    def __post_init__(self):
        for name in ("z", "t_w_kelvin", "t_s_offset_kelvin"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"range {name} must satisfy lo <= hi, got {(lo, hi)}")
        if not (self.z[0] > 0 and self.t_w_kelvin[0] > 0 and self.t_s_floor_kelvin > 0):
            raise ValueError("z and temperatures must be positive")


def default_sample_environment(t_w=1.0, t_s=1.0) -> EnvironmentModel:
    return EnvironmentModel(
        t_w=t_w,
        t_s=t_s,
        provider=ToyLorentzianSlab(amplitude=10.0, width=0.01, decay_length=30.0, background=1.0),
        lambda_rule=LambdaRule("inverse_cube", prefactor=100.0, r0=1.0),
        nonlocal_rule=NonlocalRule("coherence", coherence_length=10.0),
    )


def draw_samples(n, ranges: SampleRanges, seed):
    """Seeded uniform draws of (z, T_W, T_S) with temperatures in natural units."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        z = rng.uniform(*ranges.z)
        tw = rng.uniform(*ranges.t_w_kelvin)
        lo = max(ranges.t_s_floor_kelvin, tw + ranges.t_s_offset_kelvin[0])
        hi = max(lo, tw + ranges.t_s_offset_kelvin[1])
        ts = rng.uniform(lo, hi)
        out.append((float(z), units.from_kelvin(tw), units.from_kelvin(ts)))
    return out


@dataclass(frozen=True)
class SampleOutcome:
    index: int
    z: float
    t_w: float
    t_s: float
    status: str
    omega1: float
    q_r: float
    ratio: float


def _sample_one(args) -> SampleOutcome:
    idx, (z, tw, ts), body, environment, r, grid = args
    env = environment.with_temperatures(t_w=tw, t_s=ts)
    nan = math.nan
    try:
        opt = maximize_power(body, env, Geometry(z, r), grid=grid)
    except NoRefrigerationWindow:
        return SampleOutcome(idx, z, tw, ts, "NoRefrigerationWindow", nan, nan, nan)
    except (OteError, ValueError) as exc:
        return SampleOutcome(idx, z, tw, ts, type(exc).__name__, nan, nan, nan)
    if opt.carnot_ratio is None:
        return SampleOutcome(idx, z, tw, ts, opt.status.split(":")[0], opt.omega1, opt.q_r_max, nan)
    return SampleOutcome(idx, z, tw, ts, "ok", opt.omega1, opt.q_r_max, opt.carnot_ratio)


QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@dataclass
class SampleStudy:
    n: int
    seed: int
    outcomes: list
    bins: int = HIST_BINS

    @property
    def ratios(self) -> np.ndarray:
        return np.array([o.ratio for o in self.outcomes if o.status == "ok"])

    def histogram(self):
        """(edges, counts) over [0, 1]; ratios above 1 are not clipped into the last bin."""
        edges = np.linspace(0.0, 1.0, self.bins + 1)
        r = self.ratios
        counts, _ = np.histogram(r[(r >= 0) & (r <= 1)], bins=edges)
        return edges, counts

    def status_counts(self) -> dict:
        out = {}
        for o in self.outcomes:
            out[o.status] = out.get(o.status, 0) + 1
        return dict(sorted(out.items()))

    def summary(self) -> dict:
        r = self.ratios
        q = {str(p): float(np.quantile(r, p)) for p in QUANTILES} if r.size else {}
        return {
            "n": self.n,
            "seed": self.seed,
            "refrigerators": int(r.size),
            "status_counts": self.status_counts(),
            "ratio_quantiles": q,
            "fraction_above_0.75": float((r > 0.75).mean()) if r.size else None,
            "max_ratio": float(r.max()) if r.size else None,
            "min_ratio": float(r.min()) if r.size else None,
            "ratios_above_one": int((r > 1).sum()),
        }

    def histogram_csv(self) -> str:
        edges, counts = self.histogram()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin_lo", "bin_hi", "count"))
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([_fmt(lo), _fmt(hi), int(c)])
        return buf.getvalue()

    def draws_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("index", "z", "t_w", "t_s", "status", "omega1", "q_r", "ratio"))
        for o in self.outcomes:
            w.writerow([o.index, _fmt(o.z), _fmt(o.t_w), _fmt(o.t_s), o.status, _fmt(o.omega1), _fmt(o.q_r), _fmt(o.ratio)])
        return buf.getvalue()


def sample_machines(n: int, ranges: SampleRanges = SampleRanges(), seed: int = 0, body: BodySpec = None,
                    environment: EnvironmentModel = None, r: float = 1.0, grid: int = 64,
                    workers=None) -> SampleStudy:
    """Random refrigerators: draw (z, T_W, T_S), maximise power, record eta_m / eta_C."""
    if n < 1:
        raise ValueError("n must be >= 1")
    from .atoms import TransitionSpec

    body = body or BodySpec(TransitionSpec(0.1))
    environment = environment or default_sample_environment()
    draws = draw_samples(n, ranges, seed)
    items = [(i, d, body, environment, r, grid) for i, d in enumerate(draws)]
    return SampleStudy(n, seed, _pool_map(_sample_one, items, workers))


# -- diagnostics ----------------------------------------------------------------


def isolated_machine_theta(system: SystemSpec, environment: EnvironmentModel) -> float:
    """Population temperature of the resonant transition of the machine left alone.

    Exploratory comparison for the body temperature it imposes.
    """
    env = replace(environment, lambda_rule=LambdaRule("constant", value=0.0), nonlocal_rule=NonlocalRule("none"))
    ev = evaluate(system, env)
    return ev.report.theta[str(system.resonant_index)]


def spearman(x, y) -> float:
    from scipy.stats import spearmanr

    return float(spearmanr(x, y).statistic)
