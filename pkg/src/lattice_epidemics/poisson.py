"""Product Poisson reference measures with spatially varying intensity.

Includes the averaging operator h -> h~(a, b) (expectation under
Poisson(a) x Poisson(b) site marginals) in closed form and by Monte Carlo,
the change-of-variables identities, the log-density of one product measure
against a constant reference, block averages and a local-equilibrium KL
diagnostic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats

from .errors import InvalidParameterError

EPS_FLOOR = 1e-8


@dataclass(frozen=True)
class TildeParams:
    """Birth/death coefficients and infection rates of the two-species model.

    ``kappa_death`` is the death coefficient; it is unrelated to the cluster
    size of the single-species processes.
    """

    alpha1: float = 0.0
    alpha2: float = 0.0
    kappa_death: float = 0.0
    lam: float = 0.0
    beta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "kappa_death", "lam", "beta", "phi"):
            v = getattr(self, name)
            if not (v >= 0 and math.isfinite(v)):
                raise InvalidParameterError(f"{name} must be a finite value >= 0, got {v}")

    def rate_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("alpha1", "alpha2", "kappa_death", "lam", "beta", "phi")}


def as_profile(values, floor: float | None = EPS_FLOOR) -> np.ndarray:
    """Validate grid values of a Poisson intensity profile.

    Non-positive entries are raised to ``floor``; pass ``floor=None`` to
    reject them instead.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidParameterError("a profile is a non-empty 1-d array")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("profile values must be finite")
    if floor is None:
        if np.any(arr <= 0):
            raise InvalidParameterError("profile values must be > 0")
        return arr
    if np.any(arr < 0):
        raise InvalidParameterError("profile values must be >= 0")
    return np.maximum(arr, floor)


def profile_on_grid(f: Callable, n: int, floor: float | None = EPS_FLOOR) -> np.ndarray:
    """Evaluate ``f`` at theta = x / n, x = 0..n-1."""
    theta = np.arange(n) / n
    return as_profile(np.broadcast_to(f(theta), (n,)).astype(float), floor)


def sample_product_poisson(profile1, profile2, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Independent Poisson draws per site with the given intensities."""
    p1, p2 = np.asarray(profile1, float), np.asarray(profile2, float)
    if p1.shape != p2.shape:
        raise InvalidParameterError("profiles must have the same length")
    rng = np.random.default_rng(seed)
    return rng.poisson(p1).astype(np.int64), rng.poisson(p2).astype(np.int64)


class TildeRates(NamedTuple):
    beta1: np.ndarray
    delta1: np.ndarray
    beta2: np.ndarray
    delta2: np.ndarray
    g: np.ndarray


def tilde_rates(a, b, p: TildeParams) -> TildeRates:
    """Closed-form h~(a, b) for the birth, death and exchange rates.

    Uses E X = a, E X^2 = a + a^2, E X^3 = a^3 + 3a^2 + a and independence;
    the exchange term's neighbour sum has mean 2b (one dimension).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    m2a, m2b = a * a + a, b * b + b
    m3a, m3b = a ** 3 + 3 * a * a + a, b ** 3 + 3 * b * b + b
    pa = -np.expm1(-a)  # P(eta > 0)
    pb = -np.expm1(-b)
    beta1 = p.alpha1 * (a + b)
    beta2 = p.alpha2 * (a + b)
    delta1 = p.kappa_death * (m3a + m2a * m2b)
    delta2 = p.kappa_death * (m2a * m2b + m3b)
    g = b * (1 - p.phi * pa) - 2 * b * pa * (p.lam * np.exp(-b) + p.beta * pb)
    return TildeRates(beta1, delta1, beta2, delta2, g)


# Cylinder functions of (eta(x), xi(x), xi(x-1), xi(x+1)); vectorised.
def rate_functions(p: TildeParams) -> dict[str, Callable]:
    def beta1(e, x, l, r):
        return p.alpha1 * (e + x)

    def delta1(e, x, l, r):
        return p.kappa_death * e ** 2 * (e + x ** 2)

    def beta2(e, x, l, r):
        return p.alpha2 * (e + x)

    def delta2(e, x, l, r):
        return p.kappa_death * x ** 2 * (e ** 2 + x)

    def g(e, x, l, r):
        occ = e > 0
        return (1 - p.phi * occ) * x - occ * (p.lam * (x == 0) + p.beta * (x > 0)) * (l + r)

    return {"beta1": beta1, "delta1": delta1, "beta2": beta2, "delta2": delta2, "g": g}


class MCEstimate(NamedTuple):
    mean: float
    stderr: float


def _draws(a, b, samples, seed):
    rng = np.random.default_rng(seed)
    eta = rng.poisson(a, samples).astype(float)
    xi = rng.poisson(b, (3, samples)).astype(float)
    return eta, xi[0], xi[1], xi[2]


def tilde_mc(h: Callable, a: float, b: float, samples: int, seed=None) -> MCEstimate:
    """Monte Carlo h~(a, b): average of ``h(eta, xi, xi_left, xi_right)`` over
    i.i.d. product Poisson draws."""
    if samples < 1:
        raise InvalidParameterError("samples must be >= 1")
    vals = np.broadcast_to(np.asarray(h(*_draws(a, b, samples, seed)), float), (samples,))
    se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return MCEstimate(float(vals.mean()), se)


def tilde_table(grid, p: TildeParams, samples: int = 10 ** 6, seed=0) -> list[dict]:
    """Closed forms next to Monte Carlo estimates on ``grid x grid``."""
    fns = rate_functions(p)
    rows = []
    ss = np.random.SeedSequence(seed)
    for (a, b), child in zip([(a, b) for a in grid for b in grid], ss.spawn(len(grid) ** 2)):
        exact = tilde_rates(a, b, p)._asdict()
        row = {"a": float(a), "b": float(b)}
        row.update({f"{k}_tilde": float(v) for k, v in exact.items()})
        draws = _draws(a, b, samples, child)
        for name, fn in fns.items():
            vals = np.asarray(fn(*draws), float)
            row[f"{name}_mc"] = float(vals.mean())
            row[f"{name}_se"] = float(vals.std(ddof=1) / math.sqrt(samples))
        rows.append(row)
    return rows


# Bounded test functions of (eta(x), xi(x)).
DEFAULT_BATTERY: dict[str, Callable] = {
    "one": lambda e, x: np.ones_like(e, dtype=float),
    "eta_zero": lambda e, x: (e == 0).astype(float),
    "xi_zero": lambda e, x: (x == 0).astype(float),
    "exp_mix": lambda e, x: np.exp(-0.5 * e - 0.3 * x),
    "min_eta_xi_3": lambda e, x: np.minimum(np.minimum(e, x), 3).astype(float),
    "cos_diff": lambda e, x: np.cos(e - 2.0 * x),
}


@dataclass
class SubstitutionResidual:
    name: str
    identity: str  # "remove_eta_add_xi" or "add_eta_remove_xi"
    lhs: float
    rhs: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.lhs - self.rhs) / self.stderr if self.stderr > 0 else 0.0


def substitution_check(a: float, b: float, samples: int, seed=None,
                       battery: dict[str, Callable] | None = None) -> list[SubstitutionResidual]:
    """Monte Carlo both sides of the change-of-variables identities

        E[1{eta>0} f(eta-1, xi+1)] = (a/b) E[xi / (1 + eta) f(eta, xi)]
        E[1{xi>0} f(eta+1, xi-1)] = (b/a) E[eta / (1 + xi) f(eta, xi)]

    The indicator reflects that a particle can only be removed from an
    occupied site. Residuals are standardised by the standard error of the
    paired difference (both sides use the same draws).
    """
    if a <= 0 or b <= 0:
        raise InvalidParameterError("a and b must be > 0")
    battery = battery or DEFAULT_BATTERY
    rng = np.random.default_rng(seed)
    eta = rng.poisson(a, samples)
    xi = rng.poisson(b, samples)
    out = []
    for name, f in battery.items():
        lhs1 = np.where(eta > 0, f(np.maximum(eta - 1, 0), xi + 1), 0.0)
        rhs1 = (a / b) * xi / (1.0 + eta) * f(eta, xi)
        lhs2 = np.where(xi > 0, f(eta + 1, np.maximum(xi - 1, 0)), 0.0)
        rhs2 = (b / a) * eta / (1.0 + xi) * f(eta, xi)
        for ident, lhs, rhs in (("remove_eta_add_xi", lhs1, rhs1), ("add_eta_remove_xi", lhs2, rhs2)):
            diff = lhs - rhs
            out.append(SubstitutionResidual(name, ident, float(lhs.mean()), float(rhs.mean()),
                                            float(diff.std(ddof=1) / math.sqrt(samples))))
    return out


def log_density_psi(eta, xi, profile1, profile2, rho: float) -> float:
    """Log Radon-Nikodym derivative of the product Poisson measure with the two
    profiles against the constant-``rho`` product measure."""
    eta = np.asarray(eta, float)
    xi = np.asarray(xi, float)
    l1 = np.asarray(profile1, float)
    l2 = np.asarray(profile2, float)
    if not (eta.shape == xi.shape == l1.shape == l2.shape):
        raise InvalidParameterError("configurations and profiles must have equal length")
    if rho <= 0:
        raise InvalidParameterError("rho must be > 0")
    if np.any(l1 <= 0) or np.any(l2 <= 0):
        raise InvalidParameterError("profile values must be > 0 (apply the epsilon floor first)")
    return float(np.sum(eta * np.log(l1 / rho) + rho - l1) + np.sum(xi * np.log(l2 / rho) + rho - l2))


def block_average(values, x: int, k: int) -> float:
    """Mean of ``values`` over the periodic block {x-k..x+k}."""
    if k < 0:
        raise InvalidParameterError("k must be >= 0")
    v = np.asarray(values)
    idx = (np.arange(x - k, x + k + 1)) % v.size
    return float(v[idx].sum() / (2 * k + 1))


def block_averages(values, k: int) -> np.ndarray:
    """``block_average`` at every site."""
    v = np.asarray(values, float)
    acc = np.zeros_like(v)
    for s in range(-k, k + 1):
        acc += np.roll(v, s)
    return acc / (2 * k + 1)


def kl_to_poisson(samples, intensity: float) -> float:
    """Plug-in KL(empirical histogram || Poisson(intensity))."""
    samples = np.asarray(samples, dtype=np.int64).ravel()
    counts = np.bincount(samples)
    p = counts / counts.sum()
    nz = p > 0
    ks = np.nonzero(nz)[0]
    logq = stats.poisson.logpmf(ks, intensity)
    return float(np.sum(p[nz] * (np.log(p[nz]) - logq)))


def local_equilibrium_divergence(snapshots, profile1, profile2, k: int = 3):
    """Per-site KL divergence of the pooled (block x ensemble) histogram of
    eta and of xi from Poisson with the profile's intensity at the site.

    ``snapshots`` is a sequence of ``(eta, xi)`` pairs (or an array shaped
    ``(n, 2, N)``).
    """
    arr = np.asarray([np.asarray(s) for s in snapshots]) if not isinstance(snapshots, np.ndarray) else snapshots
    if arr.ndim != 3 or arr.shape[1] != 2:
        raise InvalidParameterError("snapshots must be shaped (n, 2, N)")
    if arr.shape[0] < 1:
        raise InvalidParameterError("need at least one snapshot")
    n, _, N = arr.shape
    p1, p2 = np.asarray(profile1, float), np.asarray(profile2, float)
    out = np.zeros((2, N))
    for x in range(N):
        idx = np.arange(x - k, x + k + 1) % N
        for s, prof in ((0, p1), (1, p2)):
            out[s, x] = kl_to_poisson(arr[:, s, idx], prof[x])
    return out[0], out[1]
