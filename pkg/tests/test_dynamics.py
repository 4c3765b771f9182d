import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_setup
from otemachine import atoms
from otemachine.atoms import SystemSpec
from otemachine.dynamics import (
    assemble,
    density_matrix_from_json,
    density_matrix_to_json,
    evolve_trajectory,
    gibbs_state,
    hermitian_conjugate_super,
    local_dissipator,
    nonlocal_dissipator,
    propagator_power,
    rk4_propagator,
    sprepost,
    steady_state,
    time_evolve,
    trace_distance,
    unvec,
    vec,
)
from otemachine.environment import EnvironmentModel, LambdaRule, NonlocalRule, TwoTemperatureFlat, rates
from otemachine.errors import DegenerateSteadyState, StepTooLarge


def _rand_matrix(rng, n=6):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


def _rand_rho(rng):
    a = _rand_matrix(rng)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def test_column_stacking_identity(rng):
    a, b, x = _rand_matrix(rng), _rand_matrix(rng), _rand_matrix(rng)
    assert np.allclose(sprepost(a, b) @ vec(x), vec(a @ x @ b))
    assert np.allclose(unvec(vec(x)), x)


def test_hermitian_conjugate_superoperator(rng):
    s = _rand_matrix(rng, 36)
    x = _rand_matrix(rng)
    lhs = unvec(hermitian_conjugate_super(s) @ vec(x))
    rhs = unvec(s @ vec(x.conj().T)).conj().T
    assert np.allclose(lhs, rhs)


def test_local_dissipator_two_level_detailed_balance():
    # isolated body: stationary p_e / p_g = G- / G+
    sigma = atoms.lowering_operator("body")
    d = local_dissipator(2.0, 0.5, sigma)
    rho = np.kron(np.diag([0.8, 0.2]), np.eye(3) / 3)
    assert np.abs(d @ vec(rho)).max() < 1e-15


def test_nonlocal_dissipator_is_hermiticity_preserving(rng):
    s, k = atoms.lowering_operator("body"), atoms.lowering_operator(2)
    d = nonlocal_dissipator(0.3 + 0.1j, 0.2 - 0.05j, s, k)
    rho = _rand_rho(rng)
    out = unvec(d @ vec(rho))
    assert np.allclose(out, out.conj().T)
    assert abs(np.trace(out)) < 1e-14


@pytest.mark.parametrize("seed", range(5))
def test_liouvillian_trace_and_hermiticity(seed):
    rng = np.random.default_rng(seed)
    s = random_setup(rng)
    liou = assemble(s.system, rates(s.environment, s.system))
    tr = vec(np.eye(6))
    assert np.abs(tr @ liou.matrix).max() < 1e-12 * np.abs(liou.matrix).max()
    rho = _rand_rho(rng)
    out = liou.apply(rho)
    assert np.allclose(out, out.conj().T, atol=1e-12 * np.abs(out).max())


@pytest.mark.parametrize("seed", range(10))
def test_steady_state_properties(seed):
    rng = np.random.default_rng(100 + seed)
    s = random_setup(rng)
    liou = assemble(s.system, rates(s.environment, s.system))
    st_ = steady_state(liou)
    rho = st_.rho
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.allclose(rho, rho.conj().T, atol=0)
    assert np.linalg.eigvalsh(rho).min() >= 0
    assert st_.residual < 1e-12
    assert st_.off_resonant_coherence() < 1e-8


def test_equilibrium_steady_state_is_gibbs():
    s = SystemSpec.build(0.6, 0.25, 2)
    t = 0.3
    env = EnvironmentModel(t, t, TwoTemperatureFlat(0.7, 0.4), LambdaRule("inverse_cube", 200.0))
    liou = assemble(s, rates(env, s))
    st_ = steady_state(liou)
    gibbs = gibbs_state(liou.h_body + liou.h_machine, t)
    assert trace_distance(st_.rho, gibbs) < 1e-12


def test_degenerate_steady_state():
    s = SystemSpec.build(0.6, 0.2, 2, dipole_scales=(0.0, 0.0, 0.0), body_dipole_scale=0.0)
    env = EnvironmentModel(0.4, 0.2, lambda_rule=LambdaRule("constant", value=0.0))
    with pytest.raises(DegenerateSteadyState):
        steady_state(assemble(s, rates(env, s)))


def test_rk4_reaches_steady_state():
    s = SystemSpec.build(0.7, 0.2, 2, z=2.0)
    env = EnvironmentModel(0.5, 0.3)
    liou = assemble(s, rates(env, s))
    rho0 = np.zeros((6, 6), complex)
    rho0[0, 0] = 1
    final = time_evolve(liou, rho0)
    assert trace_distance(final, steady_state(liou).rho) < 1e-6
    assert abs(np.trace(final) - 1) < 1e-10


def test_rk4_step_bound():
    s = SystemSpec.build(0.7, 0.2, 2)
    liou = assemble(s, rates(EnvironmentModel(0.5, 0.3), s))
    norm = np.linalg.norm(liou.matrix, 2)
    with pytest.raises(StepTooLarge):
        time_evolve(liou, np.eye(6) / 6, t_final=1.0, dt=0.2 / norm)


def test_rk4_zero_time_is_identity(rng):
    s = SystemSpec.build(0.7, 0.2, 2)
    liou = assemble(s, rates(EnvironmentModel(0.5, 0.3), s))
    rho = _rand_rho(rng)
    assert np.array_equal(time_evolve(liou, rho, t_final=0.0), rho)


def test_rk4_matches_exact_exponential(rng):
    from scipy.linalg import expm

    s = SystemSpec.build(0.7, 0.2, 2)
    liou = assemble(s, rates(EnvironmentModel(0.5, 0.3), s))
    rho = _rand_rho(rng)
    exact = unvec(expm(liou.matrix * 3.0) @ vec(rho))
    norm = np.linalg.norm(liou.matrix, 2)
    coarse = np.abs(time_evolve(liou, rho, t_final=3.0, dt=0.08 / norm) - exact).max()
    fine = np.abs(time_evolve(liou, rho, t_final=3.0, dt=0.04 / norm) - exact).max()
    assert fine < 1e-9
    # fourth-order method: halving the step divides the error by about 16
    assert coarse / fine > 12


def test_trajectory_preserves_trace_and_positivity():
    s = SystemSpec.build(0.7, 0.2, 2)
    liou = assemble(s, rates(EnvironmentModel(0.5, 0.3), s))
    rho0 = np.eye(6, dtype=complex) / 6
    traj = evolve_trajectory(liou, rho0, t_final=50.0, samples=7)
    assert len(traj) == 8
    assert traj[-1][0] == pytest.approx(50.0)
    for _, rho in traj:
        assert abs(np.trace(rho) - 1) < 1e-10
        assert np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() > -1e-10


def test_density_matrix_json_round_trip(rng):
    rho = _rand_rho(rng)
    payload = density_matrix_to_json(rho)
    assert payload["basis"] == list(atoms.BASIS_LABELS)
    assert np.array_equal(density_matrix_from_json(payload), rho)


@settings(max_examples=25, deadline=None)
@given(
    w1=st.floats(0.15, 0.95), w2=st.floats(0.05, 0.35), ri=st.sampled_from([1, 2, 3]),
    tw=st.floats(0.05, 1.0), ts=st.floats(0.05, 1.0), lam=st.floats(0.0, 300.0), phase=st.floats(-1.0, 1.0),
)
def test_x_structure(w1, w2, ri, tw, ts, lam, phase):
    s = SystemSpec.build(w1, w2, ri)
    env = EnvironmentModel(tw, ts, lambda_rule=LambdaRule("inverse_cube", lam),
                           nonlocal_rule=NonlocalRule("coherence", 10.0, phase))
    st_ = steady_state(assemble(s, rates(env, s)))
    assert st_.off_resonant_coherence() < 1e-8
    m, b = st_.machine_marginal(), st_.body_marginal()
    assert np.abs(m - np.diag(np.diag(m))).max() < 1e-8
    assert abs(b[0, 1]) < 1e-8
    assert np.trace(m).real == pytest.approx(1.0, abs=1e-12)


def test_propagator_power_matches_numpy(rng):
    s = SystemSpec.build(0.7, 0.2, 2)
    liou = assemble(s, rates(EnvironmentModel(0.5, 0.3), s))
    one = rk4_propagator(liou.matrix, 0.01)
    for n in (0, 1, 7, 64, 1000):
        ref = np.linalg.matrix_power(one, n)
        assert np.abs(propagator_power(one, n) - ref).max() < 1e-12


def test_long_run_keeps_trace():
    s = SystemSpec.build(0.9, 0.1, 2)
    liou = assemble(s, rates(EnvironmentModel(0.5, 0.3), s))
    final = time_evolve(liou, np.eye(6) / 6, t_final=1e4)
    assert abs(np.trace(final) - 1) < 1e-13
