"""Basic coupling of two epidemic processes on shared event streams.

At each site the two processes share one upward and one downward clock,
running at the larger of their two rates. A ring fires in a process with
probability (its rate) / (clock rate), decided by the same uniform for
both, so the slower process sees a thinning of the faster one. For
individual recovery this is the level-clock picture: a ring at level ``i``
hits every process holding at least ``i`` infected.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import _epidemic_kernels as K
from ._box import Box
from ._replicas import replica_seed, run_replicas, uniform_chunks
from ._tree import new_tree
from .epidemic import (DEFAULT_MAX_EVENTS, ClusterConfig, ModelParams, _as_config,
                       _LogBuffer, _SingleRun)
from .errors import InvalidParameterError


@dataclass(frozen=True)
class CoupledPair:
    """Two processes to be run on shared clocks.

    ``ordered=True`` declares that A dominates B (configuration pointwise and
    rates componentwise), which is what makes the coupling preserve order.
    """

    config_a: ClusterConfig
    config_b: ClusterConfig
    params_a: ModelParams
    params_b: ModelParams
    ordered: bool = True

    def __post_init__(self):
        pa, pb = self.params_a, self.params_b
        if pa.d != pb.d:
            raise InvalidParameterError("coupled processes must share the dimension d")
        object.__setattr__(self, "config_a", _as_config(self.config_a, pa.d))
        object.__setattr__(self, "config_b", _as_config(self.config_b, pb.d))
        self.config_a.check_cap(pa.kappa)
        self.config_b.check_cap(pb.kappa)
        if self.ordered:
            if pa.recovery is not pb.recovery:
                raise InvalidParameterError("ordered pairs must share the recovery mode")
            if not (pa.lam >= pb.lam and pa.beta >= pb.beta and pa.phi >= pb.phi
                    and pa.kappa >= pb.kappa):
                raise InvalidParameterError("ordered pair needs params_a >= params_b componentwise")
            for x, c in self.config_b.items():
                if self.config_a[x] < c:
                    raise InvalidParameterError(f"ordered pair needs config_a >= config_b at {x}")


@dataclass
class PairedTrajectory:
    """Synchronised log: after event ``k`` site ``sites[k]`` holds
    ``counts_a[k]`` infected in A and ``counts_b[k]`` in B."""

    pair: CoupledPair
    horizon: float
    times: np.ndarray
    sites: np.ndarray
    counts_a: np.ndarray
    counts_b: np.ndarray
    final_a: ClusterConfig
    final_b: ClusterConfig
    end_time: float
    status: str
    n_events: int

    @property
    def truncated(self) -> bool:
        return self.status in ("truncated", "overflow", "capped")


class _PairRun:
    def __init__(self, pair: CoupledPair, seed, log_chunk: int = 4096):
        self.pair = pair
        d = pair.params_a.d
        self.box = Box.around(list(pair.config_a.support) + list(pair.config_b.support), d)
        self.ca = self.box.embed(pair.config_a)
        self.cb = self.box.embed(pair.config_b)
        pa, pb = pair.params_a, pair.params_b
        self.ra = np.array([pa.lam, pa.beta, pa.phi])
        self.rb = np.array([pb.lam, pb.beta, pb.phi])
        self._alloc()
        self.t = 0.0
        self.events = 0
        self.total_a = pair.config_a.total()
        self.total_b = pair.config_b.total()
        self._chunks = uniform_chunks(np.random.default_rng(seed))
        self.uniforms = next(self._chunks)
        self.upos = 0
        self.log = _LogBuffer(log_chunk, 2)

    def _alloc(self):
        n = self.box.n_cells
        self.ua, self.da, self.ub, self.db = (np.zeros(n) for _ in range(4))
        self.tree, self.size = new_tree(n)
        pa, pb = self.pair.params_a, self.pair.params_b
        K.rebuild_pair(self.ca, self.cb, self.ua, self.da, self.ub, self.db, self.tree,
                       self.size, self.box.offsets, self.ra, pa.kernel_kappa, pa.kernel_mode,
                       self.rb, pb.kernel_kappa, pb.kernel_mode)

    def advance(self, horizon, max_events, max_infected=0) -> int:
        pa, pb = self.pair.params_a, self.pair.params_b
        log = self.log
        while True:
            (status, self.t, self.upos, log.pos, self.events,
             self.total_a, self.total_b) = K.run_pair(
                self.ca, self.cb, self.ua, self.da, self.ub, self.db, self.tree, self.size,
                self.box.offsets, self.box.strides, self.box.L,
                self.ra, pa.kernel_kappa, pa.kernel_mode, self.rb, pb.kernel_kappa, pb.kernel_mode,
                self.t, float(horizon), self.uniforms, self.upos,
                log.t, log.x, log.c[0], log.c[1], log.pos,
                self.events, int(max_events), self.total_a, self.total_b, int(max_infected))
            if status == K.NEED_RANDOM:
                self.uniforms = next(self._chunks)
                self.upos = 0
            elif status == K.LOG_FULL:
                log.drain(self.box)
            elif status == K.GROW:
                log.drain(self.box)
                new = self.box.grown()
                self.ca = self.box.regrid(self.ca, new)
                self.cb = self.box.regrid(self.cb, new)
                self.box = new
                self._alloc()
            else:
                log.drain(self.box)
                return status


def coupled_simulate(pair: CoupledPair, horizon: float, seed=None, *,
                     max_events: int = DEFAULT_MAX_EVENTS,
                     max_infected: int | None = None) -> PairedTrajectory:
    """Run both processes of ``pair`` on shared clocks up to ``horizon``.

    Stops early (status ``"capped"``) once either process holds
    ``max_infected`` infected, or (``"truncated"``) after ``max_events``.
    """
    if horizon < 0:
        raise InvalidParameterError("horizon must be >= 0")
    run = _PairRun(pair, seed)
    status = run.advance(horizon, max_events, max_infected or 0)
    times, sites, ca, cb = run.log.collect(pair.params_a.d, 2)
    d = pair.params_a.d
    return PairedTrajectory(pair=pair, horizon=float(horizon), times=times, sites=sites,
                            counts_a=ca, counts_b=cb,
                            final_a=ClusterConfig(run.box.to_dict(run.ca), d),
                            final_b=ClusterConfig(run.box.to_dict(run.cb), d),
                            end_time=run.t, status=K.STATUS_NAMES[status], n_events=run.events)


class OrderingReport(NamedTuple):
    ok: bool
    first_violation: tuple | None  # (time, site, count_a, count_b)
    events_checked: int


def ordering_check(traj: PairedTrajectory, occupancy: bool = False) -> OrderingReport:
    """Scan the log for the first event after which A no longer dominates B.

    With ``occupancy=True`` domination is of infected indicators,
    1{xi_A(x) > 0} >= 1{xi_B(x) > 0}, instead of counts.
    """

    def bad(a, b):
        return (b > 0 and a == 0) if occupancy else a < b

    pair = traj.pair
    for x in set(pair.config_a) | set(pair.config_b):
        if bad(pair.config_a[x], pair.config_b[x]):
            return OrderingReport(False, (0.0, x, pair.config_a[x], pair.config_b[x]), 0)
    for k in range(len(traj.times)):
        a, b = int(traj.counts_a[k]), int(traj.counts_b[k])
        if bad(a, b):
            site = tuple(int(c) for c in traj.sites[k])
            return OrderingReport(False, (float(traj.times[k]), site, a, b), k + 1)
    return OrderingReport(True, None, len(traj.times))


def dominate_contact(params: ModelParams, config0, horizon: float, seed=None, *,
                     max_events: int = DEFAULT_MAX_EVENTS,
                     max_infected: int | None = None) -> PairedTrajectory:
    """Couple the model (A) with the basic contact process at rate ``lam`` (B),
    both started from the occupied sites of ``config0``."""
    config0 = _as_config(config0, params.d)
    contact = params.contact()
    occupied = ClusterConfig({x: 1 for x in config0.support}, params.d)
    pair = CoupledPair(config0, occupied, params, contact, ordered=False)
    return coupled_simulate(pair, horizon, seed, max_events=max_events, max_infected=max_infected)


@dataclass
class CouplingCheck:
    replicas: int
    violations: int
    first_violation: object
    n_events: int
    n_stopped_early: int

    def to_json(self) -> str:
        return json.dumps({"replicas": self.replicas, "violations": self.violations,
                           "first_violation": self.first_violation, "n_events": self.n_events,
                           "n_stopped_early": self.n_stopped_early})


def _pair_replica(pair, horizon, master_seed, index, occupancy, max_events, max_infected):
    traj = coupled_simulate(pair, horizon, replica_seed(master_seed, index),
                            max_events=max_events, max_infected=max_infected)
    rep = ordering_check(traj, occupancy=occupancy)
    fv = None if rep.ok else [index, rep.first_violation[0], list(rep.first_violation[1])]
    return rep.ok, fv, traj.n_events, traj.status not in ("horizon", "extinct")


def check_ordering(pair: CoupledPair, horizon: float, replicas: int, master_seed: int = 0, *,
                   occupancy: bool = False, n_jobs: int | None = 1,
                   max_events: int = DEFAULT_MAX_EVENTS,
                   max_infected: int | None = None) -> CouplingCheck:
    """Run ``replicas`` coupled replicas and count ordering violations."""
    args = [(pair, horizon, master_seed, i, occupancy, max_events, max_infected)
            for i in range(replicas)]
    res = run_replicas(_pair_replica, args, n_jobs)
    viol = [r for r in res if not r[0]]
    return CouplingCheck(replicas=replicas, violations=len(viol),
                         first_violation=viol[0][1] if viol else None,
                         n_events=sum(r[2] for r in res), n_stopped_early=sum(r[3] for r in res))


def check_contact_domination(params: ModelParams, config0, horizon: float, replicas: int,
                             master_seed: int = 0, **kw) -> CouplingCheck:
    config0 = _as_config(config0, params.d)
    occupied = ClusterConfig({x: 1 for x in config0.support}, params.d)
    pair = CoupledPair(config0, occupied, params, params.contact(), ordered=False)
    return check_ordering(pair, horizon, replicas, master_seed, occupancy=True, **kw)


def infection_totals(traj, which: str | None = None) -> int:
    """Number of upward (infection) events in a run or in one coupled marginal."""
    if which is None:
        return _ups(traj.initial, traj.sites, traj.counts)
    if which == "a":
        return _ups(traj.pair.config_a, traj.sites, traj.counts_a)
    return _ups(traj.pair.config_b, traj.sites, traj.counts_b)


def marginal_ks(pair: CoupledPair, horizon: float, replicas: int = 500, master_seed: int = 0,
                *, max_events: int = DEFAULT_MAX_EVENTS) -> dict:
    """Two-sample KS test of infection-event totals: each coupled marginal
    against independent single-process runs."""
    coupled_a, coupled_b, single_a, single_b = [], [], [], []
    for i in range(replicas):
        traj = coupled_simulate(pair, horizon, replica_seed(master_seed, i, 1),
                                max_events=max_events)
        coupled_a.append(infection_totals(traj, "a"))
        coupled_b.append(infection_totals(traj, "b"))
        for cfg, params, sink, tag in ((pair.config_a, pair.params_a, single_a, 2),
                                       (pair.config_b, pair.params_b, single_b, 3)):
            run = _SingleRun(cfg, params, replica_seed(master_seed, i, tag), record=True)
            run.advance(horizon, max_events)
            t, s, c = run.log.collect(params.d, 1)
            sink.append(_ups(cfg, s, c))
    ka = stats.ks_2samp(coupled_a, single_a)
    kb = stats.ks_2samp(coupled_b, single_b)
    return {"replicas": replicas, "horizon": horizon,
            "a": {"statistic": float(ka.statistic), "pvalue": float(ka.pvalue),
                  "mean_coupled": float(np.mean(coupled_a)), "mean_single": float(np.mean(single_a))},
            "b": {"statistic": float(kb.statistic), "pvalue": float(kb.pvalue),
                  "mean_coupled": float(np.mean(coupled_b)), "mean_single": float(np.mean(single_b))}}


def _ups(init: ClusterConfig, sites, counts) -> int:
    state = dict(init.items())
    ups = 0
    for k in range(len(counts)):
        site = tuple(int(c) for c in sites[k])
        new = int(counts[k])
        ups += new > state.get(site, 0)
        state[site] = new
    return ups

