"""Cluster epidemic processes IRP(kappa) / CRP(kappa) on Z^d.

A site holds a cluster whose state is its number of infected individuals.
With ``S`` the number of infected individuals in the 2d neighbouring
clusters, a cluster in state ``i`` moves

* ``0 -> 1`` at rate ``lam * S``;
* ``i -> i + 1`` at rate ``beta * S + i * phi`` for ``1 <= i < kappa``;
* ``i -> i - 1`` at rate ``i`` (individual recovery), or
  ``i -> 0`` at rate 1 (cluster recovery).

Sample paths are exact (Gillespie direct method on a sum tree). The active
region grows on demand, so runs started from finite support on Z^d carry no
spatial truncation.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

import json
import numpy as np

from . import _epidemic_kernels as K
from ._box import Box
from ._replicas import replica_seed, run_replicas, uniform_chunks
from ._tree import new_tree
from .errors import BracketInvalidError, InvalidParameterError
from .lattice import SiteLike, as_site, neighbors

logger = logging.getLogger(__name__)

DEFAULT_MAX_EVENTS = 10 ** 8


class Recovery(str, Enum):
    INDIVIDUAL = "individual"
    CLUSTER = "cluster"

    @classmethod
    def parse(cls, value) -> "Recovery":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"irp": cls.INDIVIDUAL, "individual": cls.INDIVIDUAL,
                   "crp": cls.CLUSTER, "cluster": cls.CLUSTER}
        if key not in aliases:
            raise InvalidParameterError(f"unknown recovery mode {value!r}")
        return aliases[key]


def parse_kappa(value) -> float | int:
    """Cluster cap from an int, ``math.inf`` or the string ``'inf'``."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "infinity", "∞"):
            return math.inf
        value = int(value)
    if value == math.inf:
        return math.inf
    if int(value) != value or value < 1:
        raise InvalidParameterError(f"kappa must be an integer >= 1 or inf, got {value}")
    return int(value)


@dataclass(frozen=True)
class ModelParams:
    """Rates of an epidemic process.

    ``lam`` and ``beta`` are the outside infection rates into healthy and
    already-infected clusters, ``phi`` the within-cluster rate per infected
    individual and ``kappa`` the cluster size (``math.inf`` allowed).
    """

    lam: float
    beta: float = 0.0
    phi: float = 0.0
    kappa: float | int = math.inf
    d: int = 1
    recovery: Recovery = Recovery.INDIVIDUAL

    def __post_init__(self):
        for name in ("lam", "beta", "phi"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParameterError(f"{name} must be a finite rate >= 0, got {v}")
        object.__setattr__(self, "kappa", parse_kappa(self.kappa))
        object.__setattr__(self, "recovery", Recovery.parse(self.recovery))
        if int(self.d) != self.d or self.d < 1:
            raise InvalidParameterError(f"d must be an integer >= 1, got {self.d}")

    @classmethod
    def irp(cls, lam, beta=0.0, phi=0.0, kappa=math.inf, d=1) -> "ModelParams":
        return cls(lam, beta, phi, kappa, d, Recovery.INDIVIDUAL)

    @classmethod
    def crp(cls, lam, beta=0.0, phi=0.0, kappa=math.inf, d=1) -> "ModelParams":
        return cls(lam, beta, phi, kappa, d, Recovery.CLUSTER)

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def contact(self) -> "ModelParams":
        """Basic contact process with the same outside rate ``lam``."""
        return ModelParams(self.lam, 0.0, 0.0, 1, self.d, self.recovery)

    @property
    def name(self) -> str:
        tag = "IRP" if self.recovery is Recovery.INDIVIDUAL else "CRP"
        cap = "inf" if self.kappa == math.inf else str(self.kappa)
        return f"{tag}({cap})"

    @property
    def in_existence_regime(self) -> bool:
        """False for infinite clusters with beta > lam, where existence of the
        infinite-volume process is not covered by the known construction."""
        return self.kappa != math.inf or self.beta <= self.lam

    @property
    def kernel_kappa(self) -> np.int64:
        return K.INF_CAP if self.kappa == math.inf else np.int64(self.kappa)

    @property
    def kernel_mode(self) -> int:
        return K.INDIVIDUAL if self.recovery is Recovery.INDIVIDUAL else K.CLUSTER

    def to_dict(self) -> dict:
        out = asdict(self)
        out["kappa"] = "inf" if self.kappa == math.inf else self.kappa
        out["recovery"] = self.recovery.value
        return out


class ClusterConfig(Mapping):
    """Sparse configuration: site -> number of infected (absent means 0)."""

    def __init__(self, occupied: Mapping | None = None, d: int = 1):
        self.d = int(d)
        store = {}
        for x, c in (occupied or {}).items():
            c = int(c)
            if c < 0:
                raise InvalidParameterError(f"negative count {c} at site {x}")
            if c:
                store[as_site(x, self.d)] = c
        self._store = store

    @classmethod
    def single(cls, d: int = 1, count: int = 1, site: SiteLike | None = None) -> "ClusterConfig":
        site = (0,) * d if site is None else site
        return cls({as_site(site, d): count}, d)

    def __getitem__(self, x) -> int:
        return self._store.get(as_site(x, self.d), 0)

    def __iter__(self):
        return iter(sorted(self._store))

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, x) -> bool:
        return as_site(x, self.d) in self._store

    def __eq__(self, other) -> bool:
        if isinstance(other, ClusterConfig):
            return self.d == other.d and self._store == other._store
        return NotImplemented

    def __repr__(self) -> str:
        return f"ClusterConfig({dict(sorted(self._store.items()))}, d={self.d})"

    @property
    def support(self) -> list:
        return sorted(self._store)

    def total(self) -> int:
        return sum(self._store.values())

    def check_cap(self, kappa) -> None:
        for x, c in self._store.items():
            if c > kappa:
                raise InvalidParameterError(f"count {c} at {x} exceeds cluster cap {kappa}")

    def to_json_dict(self) -> dict:
        return {",".join(str(c) for c in x): v for x, v in sorted(self._store.items())}

    @classmethod
    def from_json_dict(cls, data: Mapping, d: int = 1) -> "ClusterConfig":
        return cls({tuple(int(c) for c in str(k).split(",")): v for k, v in data.items()}, d)


def _as_config(config, d: int) -> ClusterConfig:
    if isinstance(config, ClusterConfig):
        if config.d != d:
            raise InvalidParameterError(f"config has d={config.d}, params have d={d}")
        return config
    return ClusterConfig(config or {}, d)


class EventKind(str, Enum):
    OUTSIDE_INFECT_NEW = "outside_infect_new"
    OUTSIDE_INFECT_MORE = "outside_infect_more"
    WITHIN_INFECT = "within_infect"
    RECOVER_ONE = "recover_one"
    RECOVER_ALL = "recover_all"


class SiteEvent(NamedTuple):
    kind: EventKind
    rate: float
    new_count: int


def site_rates(config, x: SiteLike, params: ModelParams) -> list[SiteEvent]:
    """All transitions available at site ``x``, with their rates."""
    config = _as_config(config, params.d)
    site = as_site(x, params.d)
    i = config[site]
    s = sum(config[y] for y in neighbors(site, params.d))
    events = []
    if i == 0:
        events.append(SiteEvent(EventKind.OUTSIDE_INFECT_NEW, params.lam * s, 1))
        return events
    if i < params.kappa:
        events.append(SiteEvent(EventKind.OUTSIDE_INFECT_MORE, params.beta * s, i + 1))
        events.append(SiteEvent(EventKind.WITHIN_INFECT, i * params.phi, i + 1))
    if params.recovery is Recovery.INDIVIDUAL:
        events.append(SiteEvent(EventKind.RECOVER_ONE, float(i), i - 1))
    else:
        events.append(SiteEvent(EventKind.RECOVER_ALL, 1.0, 0))
    return events


def transition_rates(config, x: SiteLike, params: ModelParams) -> dict[int, float]:
    """Site rates aggregated by target count."""
    out: dict[int, float] = {}
    for ev in site_rates(config, x, params):
        out[ev.new_count] = out.get(ev.new_count, 0.0) + ev.rate
    return out


def active_window(config: ClusterConfig) -> list:
    """Support together with its neighbours: the only sites with positive rate."""
    sites = set(config.support)
    for x in config.support:
        sites.update(neighbors(x, config.d))
    return sorted(sites)


def total_rate(config, params: ModelParams) -> float:
    config = _as_config(config, params.d)
    return sum(ev.rate for x in active_window(config) for ev in site_rates(config, x, params))


class _LogBuffer:
    def __init__(self, chunk: int, n_counts: int):
        self.chunk = chunk
        self.t = np.empty(chunk)
        self.x = np.empty(chunk, dtype=np.int64)
        self.c = [np.empty(chunk, dtype=np.int64) for _ in range(n_counts)]
        self.pos = 0
        self.parts: list[tuple] = []

    def drain(self, box: Box) -> None:
        if self.pos:
            n = self.pos
            self.parts.append((self.t[:n].copy(), box.coords(self.x[:n]),
                               *[c[:n].copy() for c in self.c]))
            self.pos = 0

    def collect(self, d: int, n_counts: int):
        if not self.parts:
            return (np.empty(0), np.empty((0, d), dtype=np.int64),
                    *[np.empty(0, dtype=np.int64) for _ in range(n_counts)])
        return tuple(np.concatenate(cols) for cols in zip(*self.parts))


class _SingleRun:
    """Resumable exact simulation state for one process."""

    def __init__(self, config0: ClusterConfig, params: ModelParams, seed, record: bool,
                 log_chunk: int = 4096):
        self.params = params
        self.box = Box.around(config0.support, params.d)
        self.counts = self.box.embed(config0)
        self._alloc()
        self.t = 0.0
        self.events = 0
        self.total = config0.total()
        self._chunks = uniform_chunks(np.random.default_rng(seed))
        self.uniforms = next(self._chunks)
        self.upos = 0
        self.record = record
        self.log = _LogBuffer(log_chunk if record else 1, 1)

    def _alloc(self) -> None:
        n = self.box.n_cells
        self.up = np.zeros(n)
        self.down = np.zeros(n)
        self.tree, self.size = new_tree(n)
        p = self.params
        K.rebuild_single(self.counts, self.up, self.down, self.tree, self.size, self.box.offsets,
                         p.lam, p.beta, p.phi, p.kernel_kappa, p.kernel_mode)

    def _grow(self) -> None:
        new = self.box.grown()
        self.counts = self.box.regrid(self.counts, new)
        self.box = new
        self._alloc()

    def advance(self, horizon: float, max_events: int, max_infected: int = 0) -> int:
        p = self.params
        log = self.log
        while True:
            status, self.t, self.upos, log.pos, self.events, self.total = K.run_single(
                self.counts, self.up, self.down, self.tree, self.size,
                self.box.offsets, self.box.strides, self.box.L,
                p.lam, p.beta, p.phi, p.kernel_kappa, p.kernel_mode,
                self.t, float(horizon), self.uniforms, self.upos,
                self.record, log.t, log.x, log.c[0], log.pos,
                self.events, int(max_events), self.total, int(max_infected))
            if status == K.NEED_RANDOM:
                self.uniforms = next(self._chunks)
                self.upos = 0
            elif status == K.LOG_FULL:
                log.drain(self.box)
            elif status == K.GROW:
                log.drain(self.box)
                self._grow()
            else:
                log.drain(self.box)
                return status

    def config(self) -> ClusterConfig:
        return ClusterConfig(self.box.to_dict(self.counts), self.params.d)

    def total_rate(self) -> float:
        return float(self.tree[1])

    def rebuilt_total_rate(self) -> float:
        tree, size = new_tree(self.box.n_cells)
        up = np.zeros(self.box.n_cells)
        down = np.zeros(self.box.n_cells)
        p = self.params
        K.rebuild_single(self.counts, up, down, tree, size, self.box.offsets,
                         p.lam, p.beta, p.phi, p.kernel_kappa, p.kernel_mode)
        return float(tree[1])


@dataclass
class Trajectory:
    """Event log of one run: after event ``k`` at time ``times[k]`` the site
    ``sites[k]`` holds ``counts[k]`` infected."""

    params: ModelParams
    initial: ClusterConfig
    horizon: float
    times: np.ndarray
    sites: np.ndarray
    counts: np.ndarray
    final: ClusterConfig
    end_time: float
    status: str
    n_events: int
    seed: object = None

    @property
    def truncated(self) -> bool:
        return self.status in ("truncated", "overflow")

    @property
    def extinct(self) -> bool:
        return self.final.total() == 0

    def snapshot(self, t: float) -> ClusterConfig:
        return self.snapshots([t])[0]

    def snapshots(self, times: Sequence[float]) -> list[ClusterConfig]:
        """Configurations at the given (sorted) times, replayed from the log."""
        if len(self.times) != self.n_events:
            raise ValueError("trajectory was run without an event log")
        state = dict(self.initial.items())
        out = []
        k = 0
        n = len(self.times)
        for s in times:
            while k < n and self.times[k] <= s:
                site = tuple(int(c) for c in self.sites[k])
                if self.counts[k]:
                    state[site] = int(self.counts[k])
                else:
                    state.pop(site, None)
                k += 1
            out.append(ClusterConfig(state, self.params.d))
        return out

    def to_jsonl(self, path, times: Sequence[float] | None = None) -> None:
        """Write snapshots as JSON lines ``{"t": ..., "sites": {"x": count}}``."""
        if times is None:
            times = [0.0, *self.times.tolist()]
        with open(path, "w") as fh:
            for s, cfg in zip(times, self.snapshots(times)):
                fh.write(json.dumps({"t": float(s), "sites": cfg.to_json_dict()}) + "\n")


def simulate(config0, params: ModelParams, horizon: float, seed=None, *, record: bool = True,
             max_events: int = DEFAULT_MAX_EVENTS, max_infected: int | None = None) -> Trajectory:
    """Exact sample path up to ``horizon`` or extinction.

    Stops early with status ``"truncated"`` after ``max_events`` events, or
    with status ``"capped"`` once the number of infected reaches
    ``max_infected``.
    """
    config0 = _as_config(config0, params.d)
    config0.check_cap(params.kappa)
    if horizon < 0:
        raise InvalidParameterError("horizon must be >= 0")
    if not params.in_existence_regime:
        logger.warning("%s with beta=%g > lam=%g lies outside the regime where the infinite-volume process is known to exist",
                       params.name, params.beta, params.lam)
    run = _SingleRun(config0, params, seed, record)
    status = run.advance(horizon, max_events, max_infected or 0)
    times, sites, counts = run.log.collect(params.d, 1)
    return Trajectory(params=params, initial=config0, horizon=float(horizon), times=times,
                      sites=sites, counts=counts, final=run.config(), end_time=run.t,
                      status=K.STATUS_NAMES[status], n_events=run.events, seed=seed)


@dataclass
class ReplicaResult:
    index: int
    master_seed: int
    survived: bool
    status: str
    n_events: int
    end_time: float
    final_total: int
    observables: dict = field(default_factory=dict)


@dataclass
class SurvivalEstimate:
    """Fraction of replicas still infected at the horizon, with a normal 95% CI."""

    p_hat: float
    ci_halfwidth: float
    replicas: int
    horizon: float
    params: ModelParams | None = None
    master_seed: int = 0
    n_capped: int = 0
    n_truncated: int = 0
    results: list = field(default_factory=list, repr=False)

    @classmethod
    def from_results(cls, results: list[ReplicaResult], horizon, params=None, master_seed=0):
        n = len(results)
        p = sum(r.survived for r in results) / n
        return cls(p_hat=p, ci_halfwidth=1.96 * math.sqrt(p * (1 - p) / n), replicas=n,
                   horizon=float(horizon), params=params, master_seed=master_seed,
                   n_capped=sum(r.status == "capped" for r in results),
                   n_truncated=sum(r.status in ("truncated", "overflow") for r in results),
                   results=results)

    def as_row(self) -> dict:
        return {"phi": self.params.phi if self.params else float("nan"), "p_hat": self.p_hat,
                "ci": self.ci_halfwidth, "replicas": self.replicas, "horizon": self.horizon,
                "seed": self.master_seed}


def _survival_replica(config0, params, horizon, master_seed, index, max_events, max_infected):
    seed = replica_seed(master_seed, index)
    run = _SingleRun(config0, params, seed, record=False)
    status = K.STATUS_NAMES[run.advance(horizon, max_events, max_infected)]
    return ReplicaResult(index=index, master_seed=master_seed, survived=run.total > 0,
                         status=status, n_events=run.events, end_time=run.t,
                         final_total=int(run.total))


def survival_probability(params: ModelParams, config0=None, horizon: float = 100.0,
                         replicas: int = 1000, master_seed: int = 0, *, n_jobs: int | None = 1,
                         max_events: int = DEFAULT_MAX_EVENTS,
                         max_infected: int | None = 10_000) -> SurvivalEstimate:
    """Finite-horizon survival frequency from a single infected individual at 0
    (or ``config0``).

    A replica counts as surviving if it is still infected when it stops. Runs
    that reach ``max_infected`` infected are stopped there: from that many
    infected individuals extinction before the horizon is negligible, and
    following an exponentially growing population to the horizon is not
    feasible.
    """
    if replicas < 1:
        raise InvalidParameterError("replicas must be >= 1")
    config0 = ClusterConfig.single(params.d) if config0 is None else _as_config(config0, params.d)
    config0.check_cap(params.kappa)
    if not params.in_existence_regime:
        logger.warning("%s with beta > lam lies outside the regime where the infinite-volume process is known to exist", params.name)
    args = [(config0, params, float(horizon), int(master_seed), i, int(max_events),
             int(max_infected or 0)) for i in range(replicas)]
    results = run_replicas(_survival_replica, args, n_jobs)
    return SurvivalEstimate.from_results(results, horizon, params, int(master_seed))


@dataclass
class CriticalPhiResult:
    phi_c: float
    bracket: tuple
    threshold: float
    probes: list

    def rows(self) -> list[dict]:
        return [e.as_row() for e in sorted(self.probes, key=lambda e: e.params.phi)]


def critical_phi_search(lam: float, beta: float, params_base: ModelParams, *, horizon: float,
                        replicas: int, threshold: float, bracket: tuple, tol: float = 0.05,
                        master_seed: int = 0, n_jobs: int | None = 1,
                        max_events: int = DEFAULT_MAX_EVENTS,
                        max_infected: int | None = 10_000) -> CriticalPhiResult:
    """Bisect phi against the finite-horizon survival estimate.

    Every probe reuses the same replica seeds, so neighbouring probes are
    positively correlated and the estimated survival curve is far smoother
    in phi than independent estimates would be.
    """
    lo, hi = (float(v) for v in bracket)
    if not lo < hi:
        raise BracketInvalidError(f"BRACKET_INVALID: degenerate bracket [{lo}, {hi}]")
    if not 0 < threshold < 1:
        raise InvalidParameterError("threshold must lie in (0, 1)")
    if tol <= 0:
        raise InvalidParameterError("tol must be > 0")
    base = params_base.with_(lam=lam, beta=beta)
    probes = []

    def probe(phi):
        est = survival_probability(base.with_(phi=phi), None, horizon, replicas, master_seed,
                                   n_jobs=n_jobs, max_events=max_events,
                                   max_infected=max_infected)
        probes.append(est)
        return est.p_hat

    p_lo, p_hi = probe(lo), probe(hi)
    if not (p_lo < threshold < p_hi):
        raise BracketInvalidError(
            f"BRACKET_INVALID: survival({lo})={p_lo:.4f}, survival({hi})={p_hi:.4f} "
            f"do not straddle threshold {threshold}")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if probe(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return CriticalPhiResult(phi_c=0.5 * (lo + hi), bracket=(lo, hi), threshold=threshold,
                             probes=probes)


def is_monotone(estimates: Iterable[SurvivalEstimate], key=lambda e: e.params.phi) -> bool:
    """Survival nondecreasing along ``key`` up to the sum of the two CI half-widths."""
    ests = sorted(estimates, key=key)
    for i, a in enumerate(ests):
        for b in ests[i + 1:]:
            if b.p_hat < a.p_hat - (a.ci_halfwidth + b.ci_halfwidth):
                return False
    return True


def birth_death_survival(phi: float, horizon: float | None = None, n_max: int = 200) -> float:
    """Survival probability of the single-cluster chain (birth i*phi, death i)
    from one individual, by an absorption solve on counts <= n_max.

    With ``horizon=None`` this is the eventual survival probability, where the
    top state counts as surviving; otherwise the chain's transition-rate matrix
    is exponentiated over ``[0, horizon]``.
    """
    from scipy.linalg import expm, solve

    n = n_max
    if horizon is None:
        # h_i = P(absorb at 0 | i) on 1..n-1 with h_0 = 1, h_n = 0
        A = np.zeros((n - 1, n - 1))
        b = np.zeros(n - 1)
        for i in range(1, n):
            r = i * (1 + phi)
            A[i - 1, i - 1] = r
            if i > 1:
                A[i - 1, i - 2] -= i
            else:
                b[0] += i
            if i + 1 < n:
                A[i - 1, i] -= i * phi
        h = solve(A, b)
        return float(1.0 - h[0])
    Q = np.zeros((n + 1, n + 1))
    for i in range(1, n):
        Q[i, i + 1] = i * phi
        Q[i, i - 1] = i
        Q[i, i] = -i * (1 + phi)
    P = expm(Q * horizon)
    return float(1.0 - P[1, 0])
