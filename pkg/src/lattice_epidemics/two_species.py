"""Two-species (healthy / infected) migration-reaction process on Z/NZ.

Each site carries ``eta(x)`` healthy and ``xi(x)`` infected individuals.
Individuals perform independent nearest-neighbour walks at total rate N^2;
births, deaths, recoveries and infections act locally at rate O(1).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _torus_kernels as TK
from ._replicas import uniform_chunks
from ._tree import new_tree
from .errors import InvalidParameterError
from .poisson import TildeParams, as_profile, sample_product_poisson

DEFAULT_MAX_EVENTS = 10 ** 8


@dataclass(frozen=True)
class TwoSpeciesParams(TildeParams):
    """Reaction rates plus the scaling parameter N (torus size, diffusion N^2).

    ``recovery`` is the per-infected recovery rate; the model fixes it at 1,
    and 0 is only meant for diffusion-only checks.
    """

    N: int = 32
    recovery: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if int(self.N) != self.N or self.N < 2:
            raise InvalidParameterError(f"N must be an integer >= 2, got {self.N}")
        if not (self.recovery >= 0 and np.isfinite(self.recovery)):
            raise InvalidParameterError("recovery must be a finite rate >= 0")

    @classmethod
    def from_tilde(cls, p: TildeParams, N: int, recovery: float = 1.0) -> "TwoSpeciesParams":
        return cls(**p.rate_dict(), N=N, recovery=recovery)

    def kernel_rates(self) -> np.ndarray:
        return np.array([self.alpha1, self.alpha2, self.kappa_death, self.lam, self.beta,
                         self.phi, float(self.N) ** 2, self.recovery])


@dataclass
class TwoSpeciesConfig:
    eta: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.eta = np.array(self.eta, dtype=np.int64)
        self.xi = np.array(self.xi, dtype=np.int64)
        if self.eta.ndim != 1 or self.eta.shape != self.xi.shape:
            raise InvalidParameterError("eta and xi must be 1-d arrays of equal length")
        if np.any(self.eta < 0) or np.any(self.xi < 0):
            raise InvalidParameterError("counts must be >= 0")

    @property
    def N(self) -> int:
        return self.eta.size

    @classmethod
    def from_profiles(cls, m1: Callable | np.ndarray, m2: Callable | np.ndarray, N: int,
                      seed=None) -> "TwoSpeciesConfig":
        """Product Poisson draw with intensities m1(x/N), m2(x/N)."""
        theta = np.arange(N) / N
        p1 = as_profile(m1(theta) if callable(m1) else m1)
        p2 = as_profile(m2(theta) if callable(m2) else m2)
        return cls(*sample_product_poisson(p1, p2, seed))

    def totals(self) -> tuple[int, int]:
        return int(self.eta.sum()), int(self.xi.sum())


def _check(config: TwoSpeciesConfig, params: TwoSpeciesParams, x: int) -> int:
    if config.N != params.N:
        raise InvalidParameterError(f"config has {config.N} sites, params N={params.N}")
    return int(x) % config.N


def reaction_rates(config: TwoSpeciesConfig, x: int, params: TwoSpeciesParams) -> dict[str, float]:
    """Rates of the seven local reactions at site ``x``."""
    x = _check(config, params, x)
    out = np.empty(TK.N_KINDS)
    TK.site_event_rates(config.eta, config.xi, x, params.kernel_rates(), out)
    return {name: float(v) for name, v in zip(TK.KIND_NAMES[:7], out[:7])}


def diffusion_rates(config: TwoSpeciesConfig, x: int, params: TwoSpeciesParams) -> dict[str, float]:
    """Jump rates out of ``x``: N^2 p(x, y) per particle towards each side."""
    x = _check(config, params, x)
    n2 = float(params.N) ** 2
    e, s = float(config.eta[x]), float(config.xi[x])
    return {"eta_left": 0.5 * n2 * e, "eta_right": 0.5 * n2 * e,
            "xi_left": 0.5 * n2 * s, "xi_right": 0.5 * n2 * s}


@dataclass
class TorusTrajectory:
    """Snapshots of one run at ``times`` (rows of ``eta`` and ``xi``)."""

    params: TwoSpeciesParams
    times: np.ndarray
    eta: np.ndarray
    xi: np.ndarray
    status: str
    n_events: int
    end_time: float
    kind_counts: dict = field(default_factory=dict)
    method: str = "exact"

    @property
    def truncated(self) -> bool:
        return self.status == "truncated"

    def config(self, i: int) -> TwoSpeciesConfig:
        return TwoSpeciesConfig(self.eta[i], self.xi[i])

    def snapshot_rows(self):
        """Rows (t, x, eta, xi) for every snapshot and site."""
        for i, t in enumerate(self.times):
            for x in range(self.eta.shape[1]):
                yield (float(t), x, int(self.eta[i, x]), int(self.xi[i, x]))


def simulate_torus(config0: TwoSpeciesConfig, params: TwoSpeciesParams, horizon: float, seed=None,
                   snapshot_times: Sequence[float] | None = None, *,
                   max_events: int = DEFAULT_MAX_EVENTS, method: str = "exact",
                   tau: float | None = None) -> TorusTrajectory:
    """Simulate up to ``horizon`` and record the state at ``snapshot_times``.

    ``method="exact"`` is next-event simulation; ``method="tau_leap"`` is a
    fixed-step Poisson approximation for exploratory large-N runs only.
    """
    if config0.N != params.N:
        raise InvalidParameterError(f"config has {config0.N} sites, params N={params.N}")
    if horizon < 0:
        raise InvalidParameterError("horizon must be >= 0")
    times = np.array([0.0, horizon] if snapshot_times is None else snapshot_times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and (times[0] < 0 or times[-1] > horizon)):
        raise InvalidParameterError("snapshot_times must be sorted and lie in [0, horizon]")
    if method == "tau_leap":
        return _tau_leap(config0, params, horizon, seed, times, tau)
    if method != "exact":
        raise InvalidParameterError(f"unknown method {method!r}")

    eta = config0.eta.copy()
    xi = config0.xi.copy()
    rates = params.kernel_rates()
    tree, size = new_tree(params.N)
    TK.rebuild_torus(eta, xi, rates, tree, size)
    snap_eta = np.zeros((times.size, params.N), dtype=np.int64)
    snap_xi = np.zeros_like(snap_eta)
    kinds = np.zeros(TK.N_KINDS, dtype=np.int64)
    chunks = uniform_chunks(np.random.default_rng(seed), first=4096)
    uniforms = next(chunks)
    upos = 0
    t = 0.0
    events = 0
    snap_i = 0
    while True:
        status, t, upos, events, snap_i = TK.run_torus(
            eta, xi, rates, tree, size, t, float(horizon), uniforms, upos,
            times, snap_eta, snap_xi, snap_i, kinds, events, int(max_events))
        if status == TK.NEED_RANDOM:
            uniforms = next(chunks)
            upos = 0
        else:
            break
    name = "horizon" if status == TK.HORIZON else "truncated"
    n_rec = snap_i
    return TorusTrajectory(params=params, times=times[:n_rec], eta=snap_eta[:n_rec],
                           xi=snap_xi[:n_rec], status=name, n_events=events, end_time=t,
                           kind_counts=dict(zip(TK.KIND_NAMES, kinds.tolist())))


def _tau_leap(config0, params, horizon, seed, times, tau):
    rng = np.random.default_rng(seed)
    N = params.N
    n2 = float(N) ** 2
    tau = tau or 0.1 / n2
    eta = config0.eta.copy()
    xi = config0.xi.copy()
    p = params
    snaps_e, snaps_x = [], []
    t = 0.0
    k = 0
    while k < times.size and times[k] <= t:
        snaps_e.append(eta.copy())
        snaps_x.append(xi.copy())
        k += 1
    steps = 0
    while t < horizon - 1e-15:
        h = min(tau, horizon - t)
        e, s = eta.astype(float), xi.astype(float)
        S = np.roll(s, 1) + np.roll(s, -1)
        occ = e > 0
        r = np.stack([p.alpha1 * (e + s), p.kappa_death * e * e * (e + s * s),
                      p.alpha2 * (e + s), p.kappa_death * s * s * (e * e + s), p.recovery * s,
                      occ * p.phi * s, occ * np.where(s == 0, p.lam, p.beta) * S])
        fire = rng.poisson(r * h)
        fire[1] = np.minimum(fire[1], eta)
        fire[3] = np.minimum(fire[3], xi)
        fire[4] = np.minimum(fire[4], xi - fire[3])
        move = np.minimum(fire[5] + fire[6], eta - fire[1])
        eta = eta + fire[0] - fire[1] + fire[4] - move
        xi = xi + fire[2] - fire[3] - fire[4] + move
        for arr in (eta, xi):
            leave = rng.binomial(arr, -np.expm1(-n2 * h))
            left = rng.binomial(leave, 0.5)
            arr += np.roll(left, -1) + np.roll(leave - left, 1) - leave
        t += h
        steps += 1
        while k < times.size and times[k] <= t + 1e-15:
            snaps_e.append(eta.copy())
            snaps_x.append(xi.copy())
            k += 1
    return TorusTrajectory(params=params, times=times[:k], eta=np.array(snaps_e).reshape(k, N),
                           xi=np.array(snaps_x).reshape(k, N), status="horizon", n_events=steps,
                           end_time=float(horizon), method="tau_leap")


def observable_values(G: Callable | np.ndarray, N: int) -> np.ndarray:
    """Test function evaluated on the grid x / N."""
    if callable(G):
        vals = np.broadcast_to(np.asarray(G(np.arange(N) / N), float), (N,))
    else:
        vals = np.asarray(G, float)
    if vals.shape != (N,) or not np.all(np.isfinite(vals)):
        raise InvalidParameterError("observable must give N finite grid values")
    return vals


def pair_counts(counts, G: Callable | np.ndarray) -> float:
    """<pi^N, G> = (1/N) sum_x counts(x) G(x/N)."""
    counts = np.asarray(counts, float)
    N = counts.shape[-1]
    return float(counts @ observable_values(G, N) / N) if counts.ndim == 1 else counts @ observable_values(G, N) / N


def empirical_pairing(config: TwoSpeciesConfig, G: Callable | np.ndarray) -> tuple[float, float]:
    """Empirical-measure pairing of each species with ``G``."""
    return pair_counts(config.eta, G), pair_counts(config.xi, G)
