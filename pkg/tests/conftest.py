"""Shared fixtures: a random configuration factory and the acceptance line printer."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest

from otemachine import units
from otemachine.analysis import evaluate
from otemachine.atoms import SystemSpec
from otemachine.environment import (
    EnvironmentModel,
    EquilibriumBlackbody,
    LambdaRule,
    NonlocalRule,
    ToyLorentzianSlab,
    TwoTemperatureFlat,
)

ACCEPTANCE_LINES = []


def record(criterion: str, passed: bool, detail: str = "") -> None:
    """Remember a pass/fail line for the terminal summary and print it."""
    line = f"{'PASS' if passed else 'FAIL'} | {criterion} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@dataclass(frozen=True)
class Setup:
    system: SystemSpec
    environment: EnvironmentModel

    def evaluate(self):
        return evaluate(self.system, self.environment)


def random_provider(rng):
    u = rng.uniform()
    if u < 0.6:
        return ToyLorentzianSlab(
            amplitude=rng.uniform(1.0, 30.0),
            width=rng.uniform(0.01, 0.1),
            decay_length=rng.uniform(2.0, 40.0),
            background=rng.uniform(0.0, 1.0) if rng.uniform() < 0.5 else 0.0,
        )
    if u < 0.9:
        per = tuple(
            (ch, rng.uniform(0.1, 1.0), rng.uniform(0.0, 1.0)) for ch in ("1", "2", "3", "B") if rng.uniform() < 0.5
        )
        return TwoTemperatureFlat(rng.uniform(0.1, 1.0), rng.uniform(0.0, 1.0), per)
    return EquilibriumBlackbody()


def random_setup(rng, t_w=None, t_s=None, min_gap_kelvin=10.0, resonant_index=None, provider=None,
                 nonlocal_rule=None, lambda_rule=None) -> Setup:
    """Random machine, geometry, field model and temperatures.

    Unless given, T_W is drawn in [50, 500] K and T_S differs from it by at
    least ``min_gap_kelvin`` (kept above 20 K).
    """
    ri = int(resonant_index or rng.integers(1, 4))
    w1 = rng.uniform(0.15, 0.95)
    w2 = rng.uniform(0.05, 0.35)
    system = SystemSpec.build(
        w1, w2, ri,
        z=math.exp(rng.uniform(math.log(0.1), math.log(50.0))),
        r=rng.uniform(0.5, 3.0),
        dipole_scales=tuple(rng.uniform(0.3, 2.0, 3)),
        body_dipole_scale=rng.uniform(0.3, 2.0),
    )
    if t_w is None:
        t_w = units.from_kelvin(rng.uniform(50.0, 500.0))
    if t_s is None:
        tw_k = units.to_kelvin(t_w)
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        ts_k = tw_k + sign * rng.uniform(min_gap_kelvin, 400.0)
        if ts_k < 20.0:
            ts_k = tw_k + rng.uniform(min_gap_kelvin, 400.0)
        t_s = units.from_kelvin(ts_k)
    lam = lambda_rule or LambdaRule("inverse_cube", prefactor=rng.uniform(0.0, 300.0), r0=1.0)
    nl = nonlocal_rule or NonlocalRule("coherence", coherence_length=rng.uniform(1.0, 30.0))
    env = EnvironmentModel(t_w, t_s, provider or random_provider(rng), lam, nl)
    return Setup(system, env)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@dataclass
class Sweep:
    items: list
    elapsed: float


@pytest.fixture(scope="session")
def sweep():
    """1000 seeded random configurations with their evaluations and the wall time."""
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    out = []
    for _ in range(1000):
        s = random_setup(rng)
        out.append((s, s.evaluate()))
    return Sweep(out, time.perf_counter() - start)


@pytest.fixture
def fridge():
    """Refrigerator: cold slab, body resonant with transition 2."""
    system = SystemSpec.build(0.9, 0.1, 2, z=10.0, r=1.0)
    env = EnvironmentModel(
        units.from_kelvin(300.0), units.from_kelvin(200.0),
        ToyLorentzianSlab(10.0, 0.02, 5.0),
        LambdaRule("inverse_cube", prefactor=100.0, r0=1.0),
        NonlocalRule("coherence", coherence_length=10.0),
    )
    return Setup(system, env)
