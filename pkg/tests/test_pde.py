import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from lattice_epidemics.errors import CFLViolationError, InvalidParameterError
from lattice_epidemics.pde import (PDEState, SolverConfig, heat_mode_solution, interpolate_periodic,
                                   laplacian, observed_order, reaction_term, solve, step)
from lattice_epidemics.poisson import TildeParams, rate_functions, tilde_mc

P = TildeParams(alpha1=0.5, alpha2=0.5, kappa_death=0.5, lam=0.5, beta=0.5, phi=0.5)
M = 256
THETA = np.arange(M) / M


def test_reaction_term_examples():
    assert reaction_term(0.0, 0.0, TildeParams()) == (0.0, 0.0)
    f1, f2 = reaction_term(1.7, 0.0, TildeParams(alpha2=0.8, kappa_death=1.0, phi=1.0, lam=1.0))
    assert f2 == pytest.approx(0.8 * 1.7)
    f1, _ = reaction_term(1.0, 1.0, TildeParams(alpha1=1.0, alpha2=1.0, kappa_death=1.0))
    assert f1 == pytest.approx(-6.0)


def test_reaction_term_against_monte_carlo():
    fns = rate_functions(P)
    for a, b in [(0.5, 1.0), (2.0, 0.5)]:
        f1, f2 = reaction_term(a, b, P)
        e1 = tilde_mc(lambda *v: fns["beta1"](*v) - fns["delta1"](*v) + fns["g"](*v), a, b, 4 * 10 ** 5, 1)
        e2 = tilde_mc(lambda *v: fns["beta2"](*v) - fns["delta2"](*v) - fns["g"](*v), a, b, 4 * 10 ** 5, 2)
        assert abs(f1 - e1.mean) < 4 * e1.stderr and abs(f2 - e2.mean) < 4 * e2.stderr


def test_jit_reaction_matches_numpy():
    from lattice_epidemics.pde import _rates, _reaction

    r = _rates(P)
    for a, b in [(0.0, 0.0), (0.3, 2.0), (2.5, 0.1)]:
        assert _reaction(a, b, r) == pytest.approx(reaction_term(a, b, P), rel=1e-13, abs=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=3, max_size=64))
def test_laplacian_row_sums_vanish(u):
    u = np.array(u)
    assert abs(laplacian(u, 0.1).sum()) <= 1e-9 * (1 + np.abs(u).sum() / 0.01)


def test_constant_profile_unchanged_without_reaction():
    cfg = SolverConfig.for_grid(M, reaction=False)
    s = solve(np.full(M, 1.3), np.full(M, 0.4), P, 0.01, cfg)
    assert np.max(np.abs(s.states[-1].lambda1 - 1.3)) < 1e-14


def test_heat_mode_decay():
    cfg = SolverConfig.for_grid(M, reaction=False)
    s = solve(2 + 0.5 * np.cos(2 * np.pi * THETA), np.ones(M), TildeParams(), 0.1, cfg)
    exact = heat_mode_solution(2.0, 0.5, 0.1, THETA)
    err = np.linalg.norm(s.states[-1].lambda1 - exact) / np.linalg.norm(exact)
    assert err < 1e-3


def test_ode_limit_without_diffusion():
    a0, b0, T = 1.2, 0.8, 0.2

    def rhs(_, y):
        return list(reaction_term(y[0], y[1], P))

    ref = solve_ivp(rhs, (0, T), [a0, b0], rtol=1e-12, atol=1e-12, method="DOP853").y[:, -1]
    s = solve(np.full(8, a0), np.full(8, b0), P, T, SolverConfig(dt=1e-3, diffusion=False))
    assert s.states[-1].lambda1[0] == pytest.approx(ref[0], abs=1e-10)
    assert s.states[-1].lambda2[0] == pytest.approx(ref[1], abs=1e-10)


def test_zero_time_returns_initial_state():
    m1, m2 = 2 + 0.5 * np.cos(2 * np.pi * THETA), 1 + 0.5 * np.sin(2 * np.pi * THETA)
    s = solve(m1, m2, P, 0.0)
    assert np.array_equal(s.states[0].lambda1, m1) and np.array_equal(s.states[0].lambda2, m2)


def test_cfl_violation():
    st0 = PDEState(np.ones(64), np.ones(64))
    with pytest.raises(CFLViolationError):
        step(st0, P, SolverConfig(dt=1e-3))
    with pytest.raises(InvalidParameterError):
        SolverConfig(dt=-1.0)


def test_mass_balance_and_clipping():
    m1, m2 = 2 + 0.5 * np.cos(2 * np.pi * THETA), 1 + 0.5 * np.sin(2 * np.pi * THETA)
    s = solve(m1, m2, P, 0.1, output_times=[0.05, 0.1])
    assert s.max_mass_residual < 1e-8
    assert s.clip_count == 0 and not s.low_flag
    assert [st.t for st in s.states] == [0.05, 0.1]


def test_refinement_changes_mass_little():
    m = 64
    th = np.arange(m) / m
    s = solve(2 + 0.5 * np.cos(2 * np.pi * th), 1 + 0.5 * np.sin(2 * np.pi * th), P, 0.1, refine=True)
    assert s.refinement["mass_change_lambda1"] < 1e-4


def test_output_times_must_be_on_the_step_grid():
    with pytest.raises(InvalidParameterError):
        solve(np.ones(16), np.ones(16), P, 0.1, SolverConfig(dt=0.001), output_times=[0.03333])


def test_interpolation_is_exact_for_low_modes():
    th = np.arange(16) / 16
    fine = interpolate_periodic(1 + np.cos(2 * np.pi * th) + 0.3 * np.sin(4 * np.pi * th))
    thf = np.arange(32) / 32
    assert np.allclose(fine, 1 + np.cos(2 * np.pi * thf) + 0.3 * np.sin(4 * np.pi * thf))


def test_second_order_in_space():
    order = observed_order(lambda th: 2 + 0.5 * np.cos(2 * np.pi * th),
                           lambda th: 1 + 0.5 * np.sin(2 * np.pi * th), P, 0.05)
    assert 1.8 <= order <= 2.2
