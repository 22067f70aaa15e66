import math

import numpy as np
import pytest

from lattice_epidemics import _window_kernels as WK
from lattice_epidemics.epidemic import ModelParams
from lattice_epidemics.errors import BudgetExceededError, InvalidParameterError
from lattice_epidemics.harness import (convergence_experiment, phase_scan, window_experiment,
                                       window_run)
from lattice_epidemics.poisson import TildeParams

P = TildeParams(0.5, 0.5, 0.5, 0.5, 0.5, 0.5)


def m1(th):
    return 2 + 0.5 * np.cos(2 * np.pi * th)


def m2(th):
    return 1 + 0.5 * np.sin(2 * np.pi * th)


def test_initial_pairings_are_unbiased():
    rep = convergence_experiment(m1, m2, P, [16], 40, times=[0.0], master_seed=3, refine=False)
    for r in rep.rows:
        assert r.abs_error <= 3 * r.stderr + 1e-12, r


def test_diffusion_only_conserves_mass_pairing():
    flat = lambda th: np.full_like(th, 1.5)
    rep = convergence_experiment(flat, lambda th: np.zeros_like(th), TildeParams(), [16], 30,
                                 observables={"one": lambda th: np.ones_like(th)},
                                 times=[0.0, 0.05], master_seed=4, refine=False)
    r0 = rep._row(16, "one", "eta", 0.0)
    r1 = rep._row(16, "one", "eta", 0.05)
    assert r0.mean == r1.mean


def test_report_structure_and_determinism():
    kw = dict(times=[0.02], master_seed=5, refine=False)
    a = convergence_experiment(m1, m2, P, [8, 16], 5, **kw)
    b = convergence_experiment(m1, m2, P, [8, 16], 5, n_jobs=2, **kw)
    assert list(a.csv_rows()) == list(b.csv_rows())
    assert len(a.rows) == 2 * 3 * 2
    assert all(r.abs_error >= 0 for r in a.rows)
    assert len(a.pairs()) == 6


def test_event_budget_is_fatal():
    with pytest.raises(BudgetExceededError):
        convergence_experiment(m1, m2, P, [8], 2, times=[0.1], refine=False, max_events=10)


def test_window_reference_and_zero_horizon():
    rep = window_experiment(m1, m2, P, 4, 1, [2, 3], 3, master_seed=1, horizon=0.5)
    assert rep.discrepancy[-1] == 0.0
    zero = window_experiment(m1, m2, P, 4, 1, [2, 3], 3, master_seed=1, horizon=0.0)
    assert zero.discrepancy == [0.0, 0.0]


def test_window_overlap_shares_initial_draws():
    la, ea, xa = window_run(m1, m2, P, 4, 2, 0.0, key=17)
    lb, eb, xb = window_run(m1, m2, P, 4, 3, 0.0, key=17)
    off = 4
    assert np.array_equal(ea, eb[off:-off]) and np.array_equal(xa, xb[off:-off])


def test_window_discrepancy_decays_with_distance():
    rep = window_experiment(m1, m2, P, 4, 1, [2, 4, 8], 10, master_seed=2, horizon=1.0)
    assert rep.nonincreasing() and rep.discrepancy[0] > 0 and rep.ratio_ok()


def test_window_validation():
    with pytest.raises(InvalidParameterError):
        window_experiment(m1, m2, P, 4, 2, [2, 4], 2)
    with pytest.raises(InvalidParameterError):
        window_experiment(m1, m2, P, 4, 1, [4, 2], 2)


def test_next_reaction_birth_growth():
    # healthy births only: E[total(t)] = total(0) * exp(alpha1 t)
    rates = np.array([1.0, 0, 0, 0, 0, 0, 16.0, 0.0])
    totals0, totals1 = [], []
    for k in range(400):
        labels = np.arange(-6, 7, dtype=np.int64)
        eta = np.full(13, 2, dtype=np.int64)
        xi = np.zeros(13, dtype=np.int64)
        totals0.append(eta.sum())
        WK.run_window(eta, xi, labels, rates, np.uint64(1000 + k), 0.5, 10 ** 7)
        totals1.append(eta.sum())
    mean = np.mean(totals1)
    assert abs(mean - 26 * math.exp(0.5)) < 4 * np.std(totals1) / math.sqrt(400)


def test_stream_uniforms_are_uniform():
    u = np.array([WK.stream_uniform(np.uint64(5), x, 3, c) for x in range(-50, 50) for c in range(50)])
    assert 0 < u.min() and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.01


def test_phase_scan_flags_and_order_invariance():
    models = [ModelParams.irp(0.0), ModelParams.crp(0.0, kappa=3)]
    rows = phase_scan(models, [0.1, 0.3], [0.2, 0.6], beta=0.4, horizon=20.0, replicas=60,
                      master_seed=4)
    assert len(rows) == 8
    for r in rows:
        assert r["below_line"] == (r["phi"] + 2 * r["lambda"] < 1)
        if r["kappa"] == 3:
            assert r["below_line_finite"] == (r["phi"] + 2 * max(r["lambda"], 0.4) < 1)
        else:
            assert r["below_line_finite"] is None
    again = phase_scan(models[::-1], [0.3, 0.1], [0.6, 0.2], beta=0.4, horizon=20.0, replicas=60,
                       master_seed=4)
    key = lambda r: (r["model"], r["lambda"], r["phi"])
    assert {key(r): r["p_hat"] for r in rows} == {key(r): r["p_hat"] for r in again}


@pytest.mark.slow
def test_phase_scan_subcritical_region_dies():
    rows = phase_scan([ModelParams.irp(0.0)], [0.1, 0.2], [0.2, 0.4], horizon=100.0,
                      replicas=500, master_seed=6)
    assert all(r["p_hat"] <= 0.01 for r in rows if r["below_line"])


@pytest.mark.slow
def test_phase_scan_lambda_zero_column_matches_birth_death():
    from lattice_epidemics.epidemic import birth_death_survival

    rows = phase_scan([ModelParams.irp(0.0)], [0.0], [0.5, 1.5, 3.0], horizon=100.0,
                      replicas=1000, master_seed=7)
    for r in rows:
        target = max(0.0, 1 - 1 / r["phi"])
        assert abs(r["p_hat"] - target) < 4 * math.sqrt(0.25 / 1000) + 0.02
    assert rows[0]["p_hat"] <= rows[1]["p_hat"] <= rows[2]["p_hat"]
