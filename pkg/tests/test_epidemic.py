import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lattice_epidemics.epidemic import (ClusterConfig, EventKind, ModelParams, Recovery,
                                        birth_death_survival, critical_phi_search, is_monotone,
                                        parse_kappa, simulate, site_rates, survival_probability,
                                        total_rate, transition_rates)
from lattice_epidemics.errors import BracketInvalidError, InvalidParameterError


def test_outside_infection_of_healthy_cluster():
    cfg = ClusterConfig({-1: 1, 1: 2})
    assert transition_rates(cfg, 0, ModelParams.irp(lam=0.5)) == {1: 1.5}


def test_within_infection_without_neighbours():
    cfg = ClusterConfig({0: 3})
    rates = transition_rates(cfg, 0, ModelParams.irp(lam=1.0, beta=0.7, phi=2.0))
    assert rates[4] == 6.0


def test_recovery_modes():
    cfg = ClusterConfig({0: 3})
    assert transition_rates(cfg, 0, ModelParams.irp(lam=1.0))[2] == 3.0
    crp = transition_rates(cfg, 0, ModelParams.crp(lam=1.0))
    assert crp[0] == 1.0 and 2 not in crp


def test_cap_blocks_upward_moves():
    cfg = ClusterConfig({0: 3, 1: 5})
    events = site_rates(cfg, 0, ModelParams.irp(lam=1.0, beta=1.0, phi=1.0, kappa=3))
    assert [e.kind for e in events] == [EventKind.RECOVER_ONE]


def test_parse_kappa():
    assert parse_kappa("inf") == math.inf
    assert parse_kappa("4") == 4
    with pytest.raises(InvalidParameterError):
        parse_kappa(0)
    with pytest.raises(InvalidParameterError):
        ModelParams(lam=-1.0)
    assert Recovery.parse("crp") is Recovery.CLUSTER


def test_config_rejects_counts_above_cap():
    with pytest.raises(InvalidParameterError):
        simulate(ClusterConfig({0: 4}), ModelParams.irp(1.0, kappa=3), 1.0, seed=0)


def test_empty_configuration_is_absorbing():
    traj = simulate(ClusterConfig(), ModelParams.irp(1.0, phi=1.0), 5.0, seed=0)
    assert traj.n_events == 0 and traj.final.total() == 0


def test_pure_recovery_time_is_exponential():
    times = []
    for i in range(600):
        traj = simulate(ClusterConfig.single(), ModelParams.irp(0.0), 50.0, seed=i)
        assert traj.n_events == 1
        times.append(traj.times[0])
    assert stats.kstest(times, "expon").pvalue > 1e-3


def test_same_seed_same_path():
    p = ModelParams.irp(0.8, 0.4, 1.0)
    a = simulate(ClusterConfig.single(), p, 5.0, seed=11)
    b = simulate(ClusterConfig.single(), p, 5.0, seed=11)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.counts, b.counts)


def test_snapshots_replay_to_final():
    p = ModelParams.crp(0.9, 0.3, 0.8, kappa=4)
    traj = simulate(ClusterConfig.single(), p, 4.0, seed=3)
    assert traj.snapshot(4.0) == traj.final
    assert traj.snapshot(0.0) == traj.initial


def test_jsonl_output(tmp_path):
    p = ModelParams.irp(0.8, phi=0.5)
    traj = simulate(ClusterConfig.single(), p, 2.0, seed=5)
    traj.to_jsonl(tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    assert len(lines) == traj.n_events + 1


def test_event_budget_truncates():
    traj = simulate(ClusterConfig.single(), ModelParams.irp(2.0, phi=2.0), 100.0, seed=0,
                    max_events=100)
    assert traj.truncated and traj.n_events == 100


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.integers(-5, 5), st.integers(0, 4), max_size=6),
       st.floats(0, 2), st.floats(0, 2), st.floats(0, 2), st.sampled_from(["irp", "crp"]))
def test_total_rate_is_sum_of_site_rates(occ, lam, beta, phi, mode):
    p = ModelParams(lam, beta, phi, 4, 1, mode)
    cfg = ClusterConfig(occ)
    expected = 0.0
    for x in range(-7, 8):
        expected += sum(e.rate for e in site_rates(cfg, x, p))
    assert total_rate(cfg, p) == pytest.approx(expected)


def test_kernel_total_rate_matches_rebuild():
    from lattice_epidemics.epidemic import _SingleRun

    p = ModelParams.irp(0.9, 0.5, 1.2)
    run = _SingleRun(ClusterConfig.single(), p, 4, record=False)
    run.advance(3.0, 10 ** 6, 0)
    assert run.total_rate() == run.rebuilt_total_rate()
    assert run.total_rate() == pytest.approx(total_rate(run.config(), p))


def test_birth_death_oracle():
    assert birth_death_survival(2.0) == pytest.approx(0.5, abs=1e-9)
    assert birth_death_survival(0.5) == pytest.approx(0.0, abs=1e-9)
    assert birth_death_survival(4.0) == pytest.approx(0.75, abs=1e-9)
    # finite horizon converges to the eventual value from above
    assert 0.5 < birth_death_survival(2.0, horizon=10.0) < 0.51


def test_no_infection_dies_out():
    est = survival_probability(ModelParams.irp(0.0), horizon=20.0, replicas=200, master_seed=1)
    assert est.p_hat == 0.0


def test_survival_deterministic_in_seed():
    p = ModelParams.irp(0.5, phi=1.0)
    a = survival_probability(p, horizon=5.0, replicas=50, master_seed=9)
    b = survival_probability(p, horizon=5.0, replicas=50, master_seed=9, n_jobs=2)
    assert a.p_hat == b.p_hat
    assert [r.n_events for r in a.results] == [r.n_events for r in b.results]


@pytest.mark.slow
def test_single_cluster_survival_matches_oracle():
    est = survival_probability(ModelParams.irp(0.0, phi=2.0), horizon=100.0, replicas=2000,
                               master_seed=3)
    assert abs(est.p_hat - birth_death_survival(2.0, horizon=100.0)) < 3 * math.sqrt(0.25 / 2000)


def test_degenerate_bracket():
    with pytest.raises(BracketInvalidError):
        critical_phi_search(0.2, 0.2, ModelParams.irp(0.2), horizon=10, replicas=10,
                            threshold=0.1, bracket=(1.0, 1.0))


def test_bracket_must_straddle():
    with pytest.raises(BracketInvalidError):
        critical_phi_search(0.0, 0.0, ModelParams.irp(0.0), horizon=10, replicas=20,
                            threshold=0.1, bracket=(0.0, 0.5))


@pytest.mark.slow
def test_critical_phi_search_brackets_threshold():
    res = critical_phi_search(0.2, 0.2, ModelParams.irp(0.2), horizon=30.0, replicas=300,
                              threshold=0.1, bracket=(0.0, 4.0), tol=0.25, master_seed=2)
    by_phi = {e.params.phi: e.p_hat for e in res.probes}
    lo, hi = res.bracket
    assert by_phi[lo] < 0.1 <= by_phi[hi]
    assert is_monotone(res.probes)
    assert 0.0 < res.phi_c < 4.0
