"""End-to-end experiments: hydrodynamic convergence, window insensitivity and
survival phase scans."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _window_kernels as WK
from ._replicas import replica_seed, run_replicas
from .epidemic import ModelParams, survival_probability
from .errors import BudgetExceededError, InvalidParameterError
from .pde import SolverConfig, solve
from .poisson import TildeParams, as_profile, sample_product_poisson
from .two_species import DEFAULT_MAX_EVENTS, TwoSpeciesConfig, TwoSpeciesParams, simulate_torus

logger = logging.getLogger(__name__)

SPECIES = ("eta", "xi")
# tags keep the seed streams of different experiments apart
_HYDRO_TAG = 1
_WINDOW_TAG = 2


def default_observables() -> dict[str, Callable]:
    return {"one": lambda th: np.ones_like(th),
            "cos": lambda th: np.cos(2 * np.pi * th),
            "sin": lambda th: np.sin(2 * np.pi * th)}


def _grid(f, n: int) -> np.ndarray:
    theta = np.arange(n) / n
    return np.broadcast_to(np.asarray(f(theta) if callable(f) else f, float), (n,)).copy()


# ---------------------------------------------------------------- convergence

@dataclass
class ConvergenceRow:
    N: int
    observable: str
    species: str
    t: float
    mean: float
    target: float
    abs_error: float
    stderr: float
    replicas: int


@dataclass
class ConvergenceReport:
    rows: list
    Ns: list
    times: list
    master_seed: int
    refinement_change: float = float("nan")  # max |target(refined) - target| over all rows
    clip_count: int = 0
    pde_min: float = float("nan")

    def error(self, N: int, observable: str, species: str, t: float | None = None) -> float:
        return self._row(N, observable, species, t).abs_error

    def _row(self, N, observable, species, t):
        t = self.times[-1] if t is None else t
        for r in self.rows:
            if r.N == N and r.observable == observable and r.species == species and r.t == t:
                return r
        raise KeyError((N, observable, species, t))

    def pairs(self) -> list[tuple[str, str]]:
        seen = []
        for r in self.rows:
            if (r.observable, r.species) not in seen:
                seen.append((r.observable, r.species))
        return seen

    def monotone(self, observable: str, species: str, t: float | None = None) -> bool:
        errs = [self.error(N, observable, species, t) for N in self.Ns]
        return all(b <= a for a, b in zip(errs, errs[1:]))

    def decays(self, observable: str, species: str, t: float | None = None) -> bool:
        """Error at the largest N strictly below the error at the smallest N."""
        return self.error(self.Ns[-1], observable, species, t) < self.error(self.Ns[0], observable, species, t)

    def within_cap(self, observable: str, species: str, cap: float = 0.05,
                   t: float | None = None) -> bool:
        r = self._row(self.Ns[-1], observable, species, t)
        return r.abs_error <= max(cap, 3 * r.stderr)

    def refinement_ok(self) -> bool:
        """Numerical error of the targets well below the statistical error."""
        smallest = min(r.stderr for r in self.rows if r.t > 0)
        return self.refinement_change < 0.1 * smallest

    def csv_rows(self):
        header = ("N", "observable", "species", "t", "mean", "target", "abs_error", "stderr", "replicas")
        yield header
        for r in self.rows:
            yield (r.N, r.observable, r.species, r.t, r.mean, r.target, r.abs_error, r.stderr,
                   r.replicas)


def _hydro_replica(m1_grid, m2_grid, params, times, obs_grid, master_seed, index, max_events):
    N = params.N
    rng = np.random.default_rng(replica_seed(master_seed, index, _HYDRO_TAG, N))
    config0 = TwoSpeciesConfig(*sample_product_poisson(m1_grid, m2_grid, rng))
    traj = simulate_torus(config0, params, times[-1], rng, snapshot_times=times,
                          max_events=max_events)
    if traj.truncated:
        raise BudgetExceededError(f"replica {index} at N={N} hit the event budget {max_events}")
    # pairings[obs, time, species]
    return np.stack([np.stack([traj.eta @ g, traj.xi @ g], axis=-1) / N for g in obs_grid])


def convergence_experiment(m1: Callable, m2: Callable, p: TildeParams, Ns: Sequence[int],
                           replicas: int, observables: Mapping[str, Callable] | None = None,
                           times: Sequence[float] = (0.1,), master_seed: int = 0, *,
                           n_jobs: int | None = 1, m_grid: int = 256,
                           max_events: int = DEFAULT_MAX_EVENTS,
                           refine: bool = True) -> ConvergenceReport:
    """Monte Carlo pairings <pi^N, G> against the PDE targets for every N.

    The initial law is product Poisson with intensities m1(x/N), m2(x/N).
    """
    Ns = sorted(int(n) for n in Ns)
    times = sorted(float(t) for t in times)
    if not Ns or replicas < 2 or not times or times[0] < 0:
        raise InvalidParameterError("need at least one N, two replicas and times >= 0")
    if replicas < 30:
        logger.warning("only %d replicas; error bars are rough", replicas)
    observables = dict(default_observables() if observables is None else observables)
    T = times[-1]

    pde_config = SolverConfig.for_grid(m_grid)
    u1, u2 = _grid(m1, m_grid), _grid(m2, m_grid)
    sol = solve(u1, u2, p, T, pde_config, times)
    targets = {name: [s.integral(G) for s in sol.states] for name, G in observables.items()}
    refinement_change = float("nan")
    if refine and T > 0:
        fine = solve(_grid(m1, 2 * m_grid), _grid(m2, 2 * m_grid), p, T,
                     SolverConfig(dt=pde_config.dt / 4), times)
        refinement_change = max(
            abs(a - b) for name, G in observables.items()
            for s, f in zip(sol.states, fine.states)
            for a, b in zip(s.integral(G), f.integral(G)))

    rows = []
    for N in Ns:
        params = TwoSpeciesParams.from_tilde(p, N)
        m1g, m2g = as_profile(_grid(m1, N)), as_profile(_grid(m2, N))
        obs_grid = [_grid(G, N) for G in observables.values()]
        args = [(m1g, m2g, params, np.array(times), obs_grid, int(master_seed), i, int(max_events))
                for i in range(replicas)]
        values = np.array(run_replicas(_hydro_replica, args, n_jobs))  # (rep, obs, time, species)
        means = values.mean(axis=0)
        stderr = values.std(axis=0, ddof=1) / math.sqrt(replicas)
        for o, name in enumerate(observables):
            for k, t in enumerate(times):
                for s, sp in enumerate(SPECIES):
                    target = targets[name][k][s]
                    rows.append(ConvergenceRow(N, name, sp, t, float(means[o, k, s]), float(target),
                                               float(abs(means[o, k, s] - target)),
                                               float(stderr[o, k, s]), replicas))
    return ConvergenceReport(rows=rows, Ns=Ns, times=times, master_seed=int(master_seed),
                             refinement_change=refinement_change, clip_count=sol.clip_count,
                             pde_min=sol.min_value)


# --------------------------------------------------------------------- window

@dataclass
class WindowReport:
    """Mean per-site discrepancy in the window against the reference torus."""

    C_ladder: list
    reference_C: int
    discrepancy: list
    stderr: list
    N: int
    A: int
    horizon: float
    replicas: int
    master_seed: int
    coupling: str = "common per-site event streams (surrogate for a starred-particle coupling)"
    per_replica: np.ndarray = field(default=None, repr=False)

    def nonincreasing(self) -> bool:
        return all(b <= a for a, b in zip(self.discrepancy, self.discrepancy[1:]))

    def ratio_ok(self, factor: float = 0.5) -> bool:
        """Largest-C discrepancy at most ``factor`` times the smallest-C one."""
        return self.discrepancy[-1] <= factor * self.discrepancy[0]

    def csv_rows(self):
        yield ("C", "discrepancy", "stderr", "reference_C", "N", "A", "horizon", "replicas")
        for C, d, s in zip(self.C_ladder, self.discrepancy, self.stderr):
            yield (C, d, s, self.reference_C, self.N, self.A, self.horizon, self.replicas)


def window_run(m1: Callable, m2: Callable, p: TildeParams, N: int, C: int, horizon: float,
               key: int, max_events: int = DEFAULT_MAX_EVENTS):
    """One run on the torus of site labels -C*N..C*N; returns (labels, eta, xi)."""
    half = C * N
    labels = np.arange(-half, half + 1, dtype=np.int64)
    theta = labels / N
    i1 = as_profile(np.broadcast_to(np.asarray(m1(theta), float), labels.shape))
    i2 = as_profile(np.broadcast_to(np.asarray(m2(theta), float), labels.shape))
    eta = np.zeros(labels.size, dtype=np.int64)
    xi = np.zeros(labels.size, dtype=np.int64)
    key = np.uint64(key)
    WK.initial_draw(key, labels, i1, i2, eta, xi)
    rates = TwoSpeciesParams.from_tilde(p, N).kernel_rates()
    status, _ = WK.run_window(eta, xi, labels, rates, key, float(horizon), int(max_events))
    if status == WK.BUDGET:
        raise BudgetExceededError(f"window run C={C} hit the event budget {max_events}")
    return labels, eta, xi


def _window_replica(m1, m2, p, N, A, C_ladder, ref_C, horizon, master_seed, index, max_events):
    key = int(replica_seed(master_seed, index, _WINDOW_TAG).generate_state(1, np.uint64)[0])
    runs = {C: window_run(m1, m2, p, N, C, horizon, key, max_events) for C in sorted({*C_ladder, ref_C})}
    lo, hi = -A * N, A * N

    def window(C):
        labels, eta, xi = runs[C]
        sel = (labels >= lo) & (labels <= hi)
        return eta[sel], xi[sel]

    ref_eta, ref_xi = window(ref_C)
    out = []
    for C in C_ladder:
        eta, xi = window(C)
        out.append(float(np.mean(np.abs(eta - ref_eta) + np.abs(xi - ref_xi))))
    return out


def window_experiment(m1: Callable, m2: Callable, p: TildeParams, N: int, A: int,
                      C_ladder: Sequence[int], replicas: int, master_seed: int = 0, *,
                      horizon: float = 0.05, reference_C: int | None = None,
                      n_jobs: int | None = 1,
                      max_events: int = DEFAULT_MAX_EVENTS) -> WindowReport:
    """Discrepancy inside the window |x| <= A*N between tori of half-width C*N.

    All tori draw initial counts and event clocks from streams keyed by site
    label, so they agree exactly until the boundary makes itself felt.
    The reference is the largest C unless ``reference_C`` is given.
    """
    C_ladder = [int(c) for c in C_ladder]
    if not C_ladder or any(b <= a for a, b in zip(C_ladder, C_ladder[1:])):
        raise InvalidParameterError("C_ladder must be nonempty and strictly increasing")
    if not A < C_ladder[0]:
        raise InvalidParameterError("need A < min(C_ladder)")
    if horizon < 0 or replicas < 1 or N < 1:
        raise InvalidParameterError("need horizon >= 0, replicas >= 1, N >= 1")
    ref_C = max(C_ladder) if reference_C is None else int(reference_C)
    args = [(m1, m2, p, int(N), int(A), C_ladder, ref_C, float(horizon), int(master_seed), i,
             int(max_events)) for i in range(replicas)]
    per = np.array(run_replicas(_window_replica, args, n_jobs), dtype=float).reshape(replicas, -1)
    mean = per.mean(axis=0)
    se = per.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros_like(mean)
    return WindowReport(C_ladder=C_ladder, reference_C=ref_C, discrepancy=mean.tolist(),
                        stderr=se.tolist(), N=int(N), A=int(A), horizon=float(horizon),
                        replicas=replicas, master_seed=int(master_seed), per_replica=per)


# ----------------------------------------------------------------- phase scan

def phase_scan(models: Sequence[ModelParams], lambda_grid: Sequence[float],
               phi_grid: Sequence[float], beta: float = 0.0, horizon: float = 100.0,
               replicas: int = 500, master_seed: int = 0, *, n_jobs: int | None = 1,
               max_infected: int | None = 10_000) -> list[dict]:
    """Survival estimates over (model, lambda, phi).

    ``models`` supply recovery mode, kappa and d; their rates are overridden
    by the grid. Every grid point uses the same master seed, so the result
    does not depend on evaluation order. ``below_line`` marks phi + 2d*lam < 1
    and, for finite kappa, ``below_line_finite`` marks phi + 2d*max(lam, beta) < 1.
    """
    if not models or not len(lambda_grid) or not len(phi_grid):
        raise InvalidParameterError("models and grids must be nonempty")
    rows = []
    for model in models:
        for lam in lambda_grid:
            for phi in phi_grid:
                params = model.with_(lam=float(lam), beta=float(beta), phi=float(phi))
                est = survival_probability(params, horizon=horizon, replicas=replicas,
                                           master_seed=master_seed, n_jobs=n_jobs,
                                           max_infected=max_infected)
                d = params.d
                finite = math.isfinite(params.kappa)
                rows.append({
                    "model": params.recovery.value, "kappa": params.kappa, "d": d,
                    "lambda": float(lam), "beta": float(beta), "phi": float(phi),
                    "p_hat": est.p_hat, "ci": est.ci_halfwidth, "replicas": est.replicas,
                    "horizon": float(horizon), "n_capped": est.n_capped,
                    "below_line": phi + 2 * d * lam < 1,
                    "below_line_finite": (phi + 2 * d * max(lam, beta) < 1) if finite else None,
                })
    return rows
