import numpy as np
import pytest
from scipy import stats

from lattice_epidemics.errors import InvalidParameterError
from lattice_epidemics.poisson import local_equilibrium_divergence
from lattice_epidemics.two_species import (TwoSpeciesConfig, TwoSpeciesParams, diffusion_rates,
                                           empirical_pairing, pair_counts, reaction_rates,
                                           simulate_torus)


def _cfg(eta, xi):
    return TwoSpeciesConfig(np.array(eta), np.array(xi))


def test_reaction_rates_by_hand():
    cfg = _cfg([0, 2, 0], [0, 1, 0])
    r = reaction_rates(cfg, 1, TwoSpeciesParams(alpha1=1.0, kappa_death=1.0, N=3))
    assert r["birth1"] == 3.0
    assert r["death1"] == 12.0
    assert r["death2"] == 5.0


def test_infections_need_a_healthy_individual():
    cfg = _cfg([0, 0, 0], [2, 3, 1])
    r = reaction_rates(cfg, 1, TwoSpeciesParams(lam=1.0, beta=1.0, phi=1.0, N=3))
    assert r["within_infection"] == 0.0 and r["outside_infection"] == 0.0


def test_recovery_rate_one_per_infected():
    r = reaction_rates(_cfg([1, 1], [1, 1]), 0, TwoSpeciesParams(N=2))
    assert r["recovery"] == 1.0


def test_outside_infection_switches_on_local_state():
    p = TwoSpeciesParams(lam=0.7, beta=0.2, N=4)
    assert reaction_rates(_cfg([1, 1, 0, 0], [2, 0, 1, 0]), 1, p)["outside_infection"] == pytest.approx(0.7 * 3)
    assert reaction_rates(_cfg([1, 1, 0, 0], [2, 1, 1, 0]), 1, p)["outside_infection"] == pytest.approx(0.2 * 3)


def test_diffusion_rates():
    cfg = _cfg([0, 3] + [0] * 8, [0] * 10)
    r = diffusion_rates(cfg, 1, TwoSpeciesParams(N=10))
    assert r["eta_left"] + r["eta_right"] == 300.0 and r["eta_left"] == r["eta_right"]
    assert sum(diffusion_rates(cfg, 0, TwoSpeciesParams(N=10)).values()) == 0.0


def test_pure_diffusion_conserves_totals():
    rng = np.random.default_rng(0)
    cfg = _cfg(rng.poisson(3, 16), rng.poisson(2, 16))
    traj = simulate_torus(cfg, TwoSpeciesParams(N=16, recovery=0.0), 10.0, seed=1,
                          snapshot_times=np.linspace(0, 10, 11))
    assert traj.n_events > 10 ** 5
    assert np.all(traj.eta.sum(axis=1) == cfg.eta.sum())
    assert np.all(traj.xi.sum(axis=1) == cfg.xi.sum())


def test_single_particle_jump_count_is_poisson():
    N, t = 5, 0.2
    counts = []
    for s in range(400):
        traj = simulate_torus(_cfg([1, 0, 0, 0, 0], [0] * 5), TwoSpeciesParams(N=N), t, seed=s)
        counts.append(traj.n_events)
    mean = np.mean(counts)
    assert abs(mean - N * N * t) < 4 * np.sqrt(N * N * t / 400)
    assert abs(np.var(counts) / mean - 1) < 0.2


def test_diffusion_keeps_product_poisson():
    N = 20
    p = TwoSpeciesParams(N=N, recovery=0.0)
    snaps = []
    for s in range(200):
        cfg = TwoSpeciesConfig.from_profiles(np.full(N, 2.0), np.full(N, 0.1), N, seed=s)
        traj = simulate_torus(cfg, p, 0.05, seed=10_000 + s)
        snaps.append(np.stack([traj.eta[-1], traj.xi[-1]]))
    kl1, _ = local_equilibrium_divergence(np.array(snaps), np.full(N, 2.0), np.full(N, 0.1), k=3)
    assert kl1.max() < 0.05


def test_seed_reproducibility_and_snapshots():
    p = TwoSpeciesParams(0.5, 0.5, 0.5, 0.5, 0.5, 0.5, N=8)
    cfg = TwoSpeciesConfig.from_profiles(lambda th: 2 + 0 * th, lambda th: 1 + 0 * th, 8, seed=3)
    a = simulate_torus(cfg, p, 0.3, seed=4, snapshot_times=[0.0, 0.1, 0.3])
    b = simulate_torus(cfg, p, 0.3, seed=4, snapshot_times=[0.0, 0.1, 0.3])
    assert np.array_equal(a.eta, b.eta) and np.array_equal(a.xi, b.xi)
    assert np.array_equal(a.eta[0], cfg.eta)
    assert sum(a.kind_counts.values()) == a.n_events


def test_snapshot_times_validated():
    cfg = _cfg([1, 1], [0, 0])
    with pytest.raises(InvalidParameterError):
        simulate_torus(cfg, TwoSpeciesParams(N=2), 1.0, snapshot_times=[0.5, 0.2])
    with pytest.raises(InvalidParameterError):
        simulate_torus(cfg, TwoSpeciesParams(N=3), 1.0)


def test_tau_leap_runs_and_conserves_under_diffusion():
    cfg = _cfg([3] * 10, [1] * 10)
    traj = simulate_torus(cfg, TwoSpeciesParams(N=10, recovery=0.0), 0.05, seed=0, method="tau_leap")
    assert traj.method == "tau_leap"
    assert traj.eta[-1].sum() == 30 and traj.xi[-1].sum() == 10


def test_pairings_by_hand():
    assert pair_counts(np.full(6, 2.5), lambda th: np.ones_like(th)) == 2.5
    one = np.zeros(8)
    one[3] = 1
    assert pair_counts(one, lambda th: th ** 2) == pytest.approx((3 / 8) ** 2 / 8)
    eta_val, _ = empirical_pairing(_cfg([0, 1, 2, 3], [0] * 4), lambda th: th)
    assert eta_val == pytest.approx(0.875)


def test_pairing_rejects_bad_observable():
    with pytest.raises(InvalidParameterError):
        pair_counts(np.ones(4), lambda th: np.full_like(th, np.nan))
