"""Acceptance criteria, one pass/fail line each (see the "acceptance criteria" summary section).

Every draw is first held to the stated tolerance.  A miss is accepted only
when the stated tolerance is finer than the double-precision resolution of
the quantity (64 ulp of the configuration's gross one-way energy flow,
``FluxReport.roundoff_floor``) and the value lies within that resolution;
such draws are counted separately in the line.
"""

import math
import subprocess
import sys
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import random_setup, record
from otemachine import units
from otemachine.analysis import (
    BRANCH_COLD,
    TaskClass,
    carnot_bound,
    carnot_for,
    default_sample_environment,
    default_scan_grids,
    default_scan_setup,
    evaluate,
    scan_phase_diagram,
    sign_law_holds,
)
from otemachine.atoms import SystemSpec
from otemachine.dynamics import gibbs_state, time_evolve, trace_distance
from otemachine.environment import LambdaRule, NonlocalRule, ToyLorentzianSlab
from otemachine.errors import OteError
from otemachine.thermo import balance_relation, resonant_exchange_audit, total_transition_flux

CHANNELS = ("1", "2", "3", "B")


class Tally:
    """Literal criterion first; a literal miss is excused only below fp64 resolution."""

    def __init__(self):
        self.n = self.literal = self.excused = self.failed = 0

    def add(self, value, tol, floor):
        self.n += 1
        if value <= tol:
            self.literal += 1
        elif tol <= floor and value <= floor:
            self.excused += 1
        else:
            self.failed += 1

    @property
    def ok(self):
        return self.n > 0 and self.failed == 0

    def __str__(self):
        return (f"{self.literal}/{self.n} meet the stated tolerance, {self.excused} misses where the tolerance is "
                f"below fp64 resolution and the value is within the round-off floor, {self.failed} failures")


def _x_structure(ev):
    st = ev.state
    m, b = st.machine_marginal(), st.body_marginal()
    return max(st.off_resonant_coherence(), float(np.abs(m - np.diag(np.diag(m))).max()), float(abs(b[0, 1])))


@pytest.fixture(scope="module")
def refrigerators():
    """At least 1000 seeded random refrigerators with a defined Carnot bound.

    Body resonant with transition 2 at omega_B = 0.1, omega_1 uniform, toy slab
    with random parameters, T_S <= T_W.  Draws that do not refrigerate or fall
    outside the refrigeration ordering are counted and skipped.
    """
    rng = np.random.default_rng(99)
    found, rejected = [], {}
    start = time.perf_counter()
    while len(found) < 1000:
        w1 = rng.uniform(0.12, 0.95)
        z = math.exp(rng.uniform(math.log(0.9), math.log(100.0)))
        tw = rng.uniform(50.0, 500.0)
        ts = rng.uniform(max(20.0, tw - 500.0), tw)
        env = default_sample_environment(units.from_kelvin(tw), units.from_kelvin(ts))
        env = replace(env, provider=ToyLorentzianSlab(rng.uniform(2, 30), rng.uniform(0.005, 0.05),
                                                      rng.uniform(5, 40), rng.uniform(0, 1)))
        ev = evaluate(SystemSpec.build(w1, 0.1, 2, z=z, r=rng.uniform(0.5, 2.0)), env)
        try:
            cr = carnot_for(ev)
        except OteError as exc:
            rejected[type(exc).__name__] = rejected.get(type(exc).__name__, 0) + 1
            continue
        found.append((ev, cr))
    return found, rejected, time.perf_counter() - start


# -- equilibrium and oracle ------------------------------------------------------


def test_equilibrium_thermalization():
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst_td = worst_q = worst_t = 0.0
    for _ in range(20):
        t = units.from_kelvin(rng.uniform(50.0, 500.0))
        s = random_setup(rng, t_w=t, t_s=t)
        ev = s.evaluate()
        liou, rep = ev.liouvillian, ev.report
        worst_td = max(worst_td, trace_distance(ev.state.rho, gibbs_state(liou.h_body + liou.h_machine, t)))
        worst_q = max(worst_q, *(abs(q) for q in (rep.q_b, rep.q_1, rep.q_2, rep.q_3, rep.q_d, rep.q_r)))
        for ch in CHANNELS:
            worst_t = max(worst_t, abs(rep.theta[ch] - t), abs(rep.env_temps[ch] - t))
    elapsed = time.perf_counter() - start
    ok = worst_td < 1e-8 and worst_q < 1e-12 and worst_t < 1e-10 and elapsed < 5.0
    record("equilibrium thermalization", ok,
           f"20 configs: max trace distance to Gibbs {worst_td:.1e} (<1e-8), max |Q| {worst_q:.1e} (<1e-12), "
           f"max |theta-T|,|T_n-T| {worst_t:.1e} (<1e-10), {elapsed:.2f} s (<5 s)")
    assert ok


def test_oracle_equivalence():
    rng = np.random.default_rng(8)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        s = random_setup(rng)
        ev = s.evaluate()
        rho0 = np.eye(6, dtype=complex) / 6
        worst = max(worst, trace_distance(time_evolve(ev.liouvillian, rho0), ev.state.rho))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-6 and elapsed < 60.0
    record("oracle equivalence (nullspace vs RK4)", ok,
           f"50 configs: max trace distance {worst:.1e} (<1e-6), {elapsed:.2f} s (<60 s)")
    assert ok


# -- laws over the 1000-configuration sweep --------------------------------------


def test_first_law(sweep):
    tally = Tally()
    worst = 0.0
    for _, ev in sweep.items:
        rep = ev.report
        tally.add(rep.first_law_residual, 1e-10 * rep.max_abs_flux, rep.roundoff_floor)
        if 1e-10 * rep.max_abs_flux > rep.roundoff_floor:
            worst = max(worst, rep.first_law_residual / rep.max_abs_flux)
    ok = tally.ok and sweep.elapsed < 120.0
    record("first law", ok,
           f"residual < 1e-10 max|Q|: {tally}; worst resolved residual/max|Q| {worst:.1e}; "
           f"sweep {sweep.elapsed:.1f} s (<120 s)")
    assert ok


def test_second_law(sweep):
    tally = Tally()
    skipped = 0
    worst = -math.inf
    for _, ev in sweep.items:
        rep = ev.report
        if rep.entropy_production is None:
            skipped += 1
            continue
        floor = rep.roundoff_floor / min(t for t in rep.env_temps.values() if t)
        tally.add(rep.entropy_production, 1e-12 * rep.entropy_scale, floor)
        if abs(rep.entropy_production) > floor:
            worst = max(worst, rep.entropy_production / rep.entropy_scale)
    frac = skipped / len(sweep.items)
    ok = tally.ok and frac < 0.05
    record("second law", ok,
           f"sigma <= 1e-12 sum|Q/T|: {tally}; largest resolved sigma/scale {worst:.1e}; "
           f"skipped (complex G_d) {frac:.1%} (<5%)")
    assert ok


def test_x_structure(sweep, refrigerators):
    evs = [ev for _, ev in sweep.items] + [ev for ev, _ in refrigerators[0]]
    worst = max(_x_structure(ev) for ev in evs)
    ok = worst < 1e-8
    record("X-structure and marginal diagonality", ok, f"{len(evs)} states: max off-structure element {worst:.1e} (<1e-8)")
    assert ok


def test_balance_relation(sweep):
    worst = max(balance_relation(ev.state, ev.rates).relative_error for _, ev in sweep.items)
    rng = np.random.default_rng(9)
    worst_local = 0.0
    for _ in range(50):
        s = random_setup(rng, lambda_rule=LambdaRule("constant", value=0.0), nonlocal_rule=NonlocalRule("none"))
        rep = s.evaluate().report
        worst_local = max(worst_local, abs(rep.theta["B"] - rep.env_temps["B"]))
    ok = worst < 1e-8 and worst_local < 1e-9
    record("balance-relation closure", ok,
           f"1000 configs: max relative error {worst:.1e} (<1e-8); Lambda = G_d = 0 over 50 configs: "
           f"max |theta_B - T_B| {worst_local:.1e} (<1e-9)")
    assert ok


def _near_equilibrium_slopes():
    """Least-squares slope of Q_n against T_n - theta_n for small T_S - T_W."""
    system = SystemSpec.build(0.6, 0.2, 2, z=2.0, r=1.0)
    _, env = default_scan_setup()
    t = units.from_kelvin(300.0)
    xs = {ch: [] for ch in CHANNELS}
    ys = {ch: [] for ch in CHANNELS}
    for d in np.linspace(-2.0, 2.0, 9):
        if d == 0:
            continue
        rep = evaluate(system, env.with_temperatures(t_w=t, t_s=t + units.from_kelvin(d))).report
        for ch in CHANNELS:
            xs[ch].append(rep.env_temps[ch] - rep.theta[ch])
            ys[ch].append(rep.local_fluxes()[ch])
    return {ch: float(np.dot(xs[ch], ys[ch]) / np.dot(xs[ch], xs[ch])) for ch in CHANNELS}


def test_flux_direction(sweep, refrigerators):
    reports = [ev.report for _, ev in sweep.items] + [ev.report for ev, _ in refrigerators[0]]
    violations = excused = 0
    for rep in reports:
        for ch in CHANNELS:
            if sign_law_holds(rep, ch, floor=0.0):
                continue
            if abs(rep.local_fluxes()[ch]) <= rep.roundoff_floor:
                excused += 1
            else:
                violations += 1
    slopes = _near_equilibrium_slopes()
    ok = violations == 0 and all(v > 0 for v in slopes.values())
    record("flux-direction law", ok,
           f"{4 * len(reports)} currents: {violations} sign violations, {excused} sign mismatches on currents "
           "within the round-off floor of zero; near-equilibrium slopes "
           + ", ".join(f"{k}:{v:.2e}" for k, v in slopes.items()) + " (>0)")
    assert ok


def test_flux_ratio(refrigerators):
    tally = Tally()
    worst = 0.0
    for ev, _ in refrigerators[0]:
        rep = ev.report
        j = {n: total_transition_flux(rep, n) for n in (1, 2, 3)}
        w = rep.omegas
        for a, b in ((1, 2), (3, 2), (3, 1)):
            err = abs(abs(j[a] / j[b]) / (w[str(a)] / w[str(b)]) - 1.0)
            # ratio error from currents known to +-floor
            resolution = rep.roundoff_floor * (1 / abs(j[a]) + 1 / abs(j[b]))
            tally.add(err, 1e-6, resolution)
            worst = max(worst, err)
    ok = tally.ok
    record("flux-ratio property", ok,
           f"{len(refrigerators[0])} refrigerators, |J_a/J_b| = w_a/w_b within 1e-6: {tally}; worst {worst:.1e}")
    assert ok


def test_exchange_audit(sweep, refrigerators):
    evs = [ev for _, ev in sweep.items] + [ev for ev, _ in refrigerators[0]]
    worst_w = worst_q = 0.0
    n = 0
    for ev in evs:
        a = resonant_exchange_audit(ev.state, ev.liouvillian, check=False)
        if a.q_r == 0:
            continue
        n += 1
        worst_w = max(worst_w, abs(a.w_m) / abs(a.q_r))
        worst_q = max(worst_q, abs(a.q_m - a.q_r) / abs(a.q_r))
    ok = worst_w < 1e-10 and worst_q < 1e-12
    record("machine-body exchange audit", ok,
           f"{n} states: max |W_M|/|Q_r| {worst_w:.1e} (<1e-10), max |Q_M - Q_r|/|Q_r| {worst_q:.1e} (<1e-12)")
    assert ok


# -- Carnot ------------------------------------------------------------------------


def test_carnot_enforcement(refrigerators, tmp_path):
    found, rejected, elapsed = refrigerators
    over = [(cr.eta, cr.eta_c) for _, cr in found if cr.eta > cr.eta_c]
    worst = max(cr.ratio for _, cr in found)
    cold = carnot_bound(0.4, 0.2, 0.1, 0.15, 1.0, 0.2)
    spot = carnot_bound(0.4, 0.15, 0.1, 0.2, 1.0, 0.2).eta_c
    # maximum-power machines from the sampling study
    proc = subprocess.run(
        [sys.executable, "-m", "otemachine.cli", "sample", "--n", "100", "--seed", "7", "--draws", str(tmp_path / "d.csv")],
        capture_output=True, text=True,
    )
    rows = [line.split(",") for line in (tmp_path / "d.csv").read_text().splitlines()[1:]]
    ratios = [float(r[7]) for r in rows if r[4] == "ok"]
    ok = (
        not over
        and len(found) >= 1000
        and cold.branch == BRANCH_COLD and cold.eta_c == 0.2
        and abs(spot - 2.65) < 1e-12
        and proc.returncode == 0
        and all(r <= 1.0 for r in ratios)
    )
    record("Carnot enforcement", ok,
           f"{len(found)} random refrigerators, {len(over)} with eta > eta_C (max ratio {worst:.4f}; "
           f"rejected {rejected}; {elapsed:.1f} s); {len(ratios)} max-power machines, max ratio "
           f"{max(ratios):.4f}; cold branch {cold.eta_c!r} == 0.2; spot value {spot!r} (2.65 +- 1e-12)")
    assert ok


# -- phenomenology and determinism -----------------------------------------------


def test_phenomenology_default_scan():
    system, env = default_scan_setup()
    z, dt = default_scan_grids()
    start = time.perf_counter()
    pd = scan_phase_diagram(system, env, z, dt)
    elapsed = time.perf_counter() - start
    labels = pd.labels()
    need = {TaskClass.STRONG_COOLING.value, TaskClass.STRONG_HEATING.value, TaskClass.POPULATION_INVERSION.value}
    ok = need <= labels and elapsed < 600.0 and pd.success_fraction >= 0.9
    record("phenomenology on the toy slab", ok,
           f"{len(z)}x{len(dt)} scan: labels {sorted(labels)}; success {pd.success_fraction:.3f}; "
           f"first-law violations {pd.first_law_violations}; {elapsed:.1f} s (<600 s)")
    assert ok


def test_sample_determinism(tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"hist{i}.csv"
        draws = tmp_path / f"draws{i}.csv"
        proc = subprocess.run(
            [sys.executable, "-m", "otemachine.cli", "sample", "--n", "100", "--seed", "7",
             "-o", str(path), "--draws", str(draws)],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append((path.read_bytes(), draws.read_bytes()))
    ok = outs[0] == outs[1]
    record("determinism", ok, f"sample n=100 seed=7 twice: histogram and draws byte-identical = {ok}")
    assert ok
