"""Method-of-lines solver for the limiting reaction-diffusion system

    d/dt lambda_1 = 1/2 lambda_1'' + beta1~ - delta1~ + g~
    d/dt lambda_2 = 1/2 lambda_2'' + beta2~ - delta2~ - g~

on the unit torus, with explicit RK4 in time and the second-order central
Laplacian in space.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .errors import CFLViolationError, InvalidParameterError
from .poisson import TildeParams, as_profile, tilde_rates

DIFFUSION = 0.5
LOW_FLAG = 1e-6


def reaction_term(a, b, p: TildeParams) -> tuple[np.ndarray, np.ndarray]:
    r = tilde_rates(np.maximum(a, 0.0), np.maximum(b, 0.0), p)
    return r.beta1 - r.delta1 + r.g, r.beta2 - r.delta2 - r.g


def laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    """Periodic second difference (u[i-1] - 2u[i] + u[i+1]) / dx^2."""
    return (np.roll(u, 1) - 2.0 * u + np.roll(u, -1)) / (dx * dx)


@njit(cache=True)
def _reaction(a, b, r):
    # r = (alpha1, alpha2, kappa_death, lam, beta, phi); mirrors poisson.tilde_rates
    a = max(a, 0.0)
    b = max(b, 0.0)
    m2a = a * a + a
    m2b = b * b + b
    pa = -math.expm1(-a)
    pb = -math.expm1(-b)
    g = b * (1.0 - r[5] * pa) - 2.0 * b * pa * (r[3] * math.exp(-b) + r[4] * pb)
    f1 = r[0] * (a + b) - r[2] * (a ** 3 + 3 * a * a + a + m2a * m2b) + g
    f2 = r[1] * (a + b) - r[2] * (m2a * m2b + b ** 3 + 3 * b * b + b) - g
    return f1, f2


@njit(cache=True)
def _stage(u1, u2, k1, k2, f1, f2, r, inv_dx2, diffusion, reaction):
    n = u1.size
    for i in range(n):
        if reaction:
            a, b = _reaction(u1[i], u2[i], r)
        else:
            a, b = 0.0, 0.0
        f1[i] = a
        f2[i] = b
        k1[i] = a
        k2[i] = b
        if diffusion:
            im = i - 1 if i > 0 else n - 1
            ip = i + 1 if i < n - 1 else 0
            k1[i] += 0.5 * (u1[im] - 2.0 * u1[i] + u1[ip]) * inv_dx2
            k2[i] += 0.5 * (u2[im] - 2.0 * u2[i] + u2[ip]) * inv_dx2


@njit(cache=True)
def _rk4(u1, u2, r, dx, dt, n_steps, diffusion, reaction):
    """Advance in place; returns (clipped values, max relative mass residual, min value)."""
    n = u1.size
    inv = 1.0 / (dx * dx)
    ka = np.empty((4, n))
    kb = np.empty((4, n))
    fa = np.empty((4, n))
    fb = np.empty((4, n))
    ta = np.empty(n)
    tb = np.empty(n)
    clipped = 0
    max_res = 0.0
    min_val = min(u1.min(), u2.min())
    coef = (0.0, 0.5, 0.5, 1.0)
    for _ in range(n_steps):
        for s in range(4):
            if s == 0:
                ta[:] = u1
                tb[:] = u2
            else:
                for i in range(n):
                    ta[i] = u1[i] + coef[s] * dt * ka[s - 1, i]
                    tb[i] = u2[i] + coef[s] * dt * kb[s - 1, i]
            _stage(ta, tb, ka[s], kb[s], fa[s], fb[s], r, inv, diffusion, reaction)
        old_mass = 0.0
        new_mass = 0.0
        react = 0.0
        for i in range(n):
            old_mass += u1[i]
            u1[i] += dt / 6.0 * (ka[0, i] + 2 * ka[1, i] + 2 * ka[2, i] + ka[3, i])
            u2[i] += dt / 6.0 * (kb[0, i] + 2 * kb[1, i] + 2 * kb[2, i] + kb[3, i])
            new_mass += u1[i]
            react += dt / 6.0 * (fa[0, i] + 2 * fa[1, i] + 2 * fa[2, i] + fa[3, i])
        res = abs((new_mass - old_mass) - react) / max(abs(old_mass), 1e-300)
        if res > max_res:
            max_res = res
        for i in range(n):
            if u1[i] < 0.0:
                u1[i] = 0.0
                clipped += 1
            if u2[i] < 0.0:
                u2[i] = 0.0
                clipped += 1
            if u1[i] < min_val:
                min_val = u1[i]
            if u2[i] < min_val:
                min_val = u2[i]
    return clipped, max_res, min_val


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    scheme: str = "rk4"
    cfl_safety: float = 0.4
    diffusion: bool = True  # test hooks: switch off either half of the right-hand side
    reaction: bool = True

    def __post_init__(self):
        if self.scheme.lower() not in ("rk4", "rk4_explicit"):
            raise InvalidParameterError(f"unsupported scheme {self.scheme!r}")
        if not 0 < self.cfl_safety <= 1:
            raise InvalidParameterError("cfl_safety must lie in (0, 1]")
        if not self.dt > 0:
            raise InvalidParameterError("dt must be > 0")

    @classmethod
    def for_grid(cls, m_grid: int, cfl_safety: float = 0.4, **kw) -> "SolverConfig":
        """Largest stable step for ``m_grid`` points."""
        return cls(dt=cfl_safety / m_grid ** 2, cfl_safety=cfl_safety, **kw)


@dataclass
class PDEState:
    lambda1: np.ndarray
    lambda2: np.ndarray
    t: float = 0.0
    clip_count: int = 0
    mass_residual: float = 0.0  # last step's |d mass - dt * mean reaction| / mass

    @property
    def m_grid(self) -> int:
        return self.lambda1.size

    @property
    def dx(self) -> float:
        return 1.0 / self.lambda1.size

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.m_grid) * self.dx

    def integral(self, G: Callable | np.ndarray | None = None) -> tuple[float, float]:
        """(int G lambda_1, int G lambda_2) by the periodic rectangle rule."""
        g = np.ones(self.m_grid) if G is None else (G(self.theta) if callable(G) else np.asarray(G))
        g = np.broadcast_to(np.asarray(g, float), (self.m_grid,))
        return float(np.mean(g * self.lambda1)), float(np.mean(g * self.lambda2))

    def min_value(self) -> float:
        return float(min(self.lambda1.min(), self.lambda2.min()))


def _rates(p: TildeParams) -> np.ndarray:
    return np.array([p.alpha1, p.alpha2, p.kappa_death, p.lam, p.beta, p.phi], dtype=float)


def _check_cfl(dx: float, config: SolverConfig) -> None:
    if config.diffusion and config.dt > config.cfl_safety * dx * dx * (1 + 1e-12):
        raise CFLViolationError(
            f"CFL_VIOLATION: dt={config.dt:g} > {config.cfl_safety} * dx^2 = "
            f"{config.cfl_safety * dx * dx:g}")


def step(state: PDEState, p: TildeParams, config: SolverConfig) -> PDEState:
    """One RK4 step; negative values are clipped to 0 and counted."""
    _check_cfl(state.dx, config)
    u1, u2 = state.lambda1.copy(), state.lambda2.copy()
    clipped, res, _ = _rk4(u1, u2, _rates(p), state.dx, config.dt, 1,
                           config.diffusion, config.reaction)
    return PDEState(u1, u2, state.t + config.dt, state.clip_count + clipped, float(res))


@dataclass
class PDESolution:
    states: list
    clip_count: int
    max_mass_residual: float
    min_value: float
    low_flag: bool
    refinement: dict = field(default_factory=dict)

    def rows(self):
        """CSV rows (t, theta, lambda1, lambda2)."""
        for s in self.states:
            for th, a, b in zip(s.theta, s.lambda1, s.lambda2):
                yield (float(s.t), float(th), float(a), float(b))


def _integrate(m1, m2, p, T, config, output_times):
    _check_cfl(1.0 / m1.size, config)
    u1, u2 = m1.copy(), m2.copy()
    r = _rates(p)
    dx = 1.0 / m1.size
    n_steps = int(math.ceil(T / config.dt - 1e-9)) if T > 0 else 0
    dt = T / n_steps if n_steps else config.dt
    out = []
    clipped = 0
    max_res = 0.0
    min_val = float(min(u1.min(), u2.min()))
    done = 0
    for t_out in sorted(output_times):
        target = int(round(t_out / dt)) if n_steps else 0
        if target > done:
            c, res, mv = _rk4(u1, u2, r, dx, dt, target - done, config.diffusion, config.reaction)
            clipped += c
            max_res = max(max_res, res)
            min_val = min(min_val, mv)
            done = target
        out.append(PDEState(u1.copy(), u2.copy(), float(t_out), clipped, max_res))
    if done < n_steps:
        c, res, mv = _rk4(u1, u2, r, dx, dt, n_steps - done, config.diffusion, config.reaction)
        clipped += c
        max_res = max(max_res, res)
        min_val = min(min_val, mv)
    final = PDEState(u1, u2, float(T), clipped, max_res)
    return out, final, max_res, min_val


def solve(m1, m2, p: TildeParams, T: float, config: SolverConfig | None = None,
          output_times: Sequence[float] | None = None, *, refine: bool = False) -> PDESolution:
    """Integrate from profiles ``m1``, ``m2`` (grid values) to time ``T``.

    The step is shrunk to divide each interval exactly. Output times must be
    multiples of that step (to half a step). With ``refine=True`` the run is
    repeated at half the grid spacing and quarter the step, and the
    difference is reported under ``refinement``.
    """
    m1 = as_profile(m1)
    m2 = as_profile(m2)
    if m1.shape != m2.shape:
        raise InvalidParameterError("m1 and m2 must share the grid")
    if T < 0:
        raise InvalidParameterError("T must be >= 0")
    config = config or SolverConfig.for_grid(m1.size)
    times = [T] if output_times is None else list(output_times)
    if any(t < 0 or t > T for t in times):
        raise InvalidParameterError("output_times must lie in [0, T]")
    if T > 0:
        # shrink dt so every output time is a whole number of steps
        n_steps = int(math.ceil(T / config.dt - 1e-9))
        config = replace(config, dt=T / n_steps)
        grid = [t * n_steps / T for t in times]
        if any(abs(g - round(g)) > 1e-6 for g in grid):
            raise InvalidParameterError("output_times must be multiples of the time step")
    states, final, max_res, min_val = _integrate(m1, m2, p, T, config, times)
    sol = PDESolution(states=states, clip_count=final.clip_count, max_mass_residual=max_res,
                      min_value=min_val, low_flag=min_val < LOW_FLAG)
    if refine and T > 0:
        sol.refinement = refinement_report(m1, m2, p, T, config, final)
    return sol


def interpolate_periodic(u: np.ndarray, factor: int = 2) -> np.ndarray:
    """Trigonometric interpolation of grid values onto a ``factor``-times finer grid."""
    n = u.size
    spec = np.fft.rfft(u)
    out = np.zeros(n * factor // 2 + 1, dtype=complex)
    out[: spec.size] = spec
    if n % 2 == 0:
        out[n // 2] *= 0.5
    return np.fft.irfft(out, n * factor) * factor


def refinement_report(m1, m2, p, T, config, coarse: PDEState | None = None) -> dict:
    """Solution at dx against dx/2 (step divided by 4), compared on the coarse grid."""
    if coarse is None:
        coarse = solve(m1, m2, p, T, config).states[-1]
    f1, f2 = interpolate_periodic(m1), interpolate_periodic(m2)
    fine_cfg = replace(config, dt=config.dt / 4)
    fine = solve(f1, f2, p, T, fine_cfg).states[-1]
    mass_c, mass_f = coarse.integral(), fine.integral()
    return {"T": T, "m_grid": coarse.m_grid, "dt": config.dt,
            "mass_lambda1_coarse": mass_c[0], "mass_lambda1_fine": mass_f[0],
            "mass_change_lambda1": abs(mass_c[0] - mass_f[0]),
            "mass_change_lambda2": abs(mass_c[1] - mass_f[1]),
            "max_abs_change_lambda1": float(np.max(np.abs(coarse.lambda1 - fine.lambda1[::2]))),
            "max_abs_change_lambda2": float(np.max(np.abs(coarse.lambda2 - fine.lambda2[::2])))}


def observed_order(f_m1: Callable, f_m2: Callable, p: TildeParams, T: float,
                   grids: Sequence[int] = (32, 64, 128), cfl_safety: float = 0.4) -> float:
    """Observed spatial convergence order from three nested grids,
    log2(|u_h - u_h/2| / |u_h/2 - u_h/4|) in the max norm on the coarse points."""
    sols = []
    for m in grids:
        theta = np.arange(m) / m
        cfg = SolverConfig.for_grid(m, cfl_safety)
        sols.append(solve(f_m1(theta), f_m2(theta), p, T, cfg).states[-1])
    c, m, f = sols
    s1 = grids[1] // grids[0]
    s2 = grids[2] // grids[0]
    e1 = np.max(np.abs(c.lambda1 - m.lambda1[::s1]))
    e2 = np.max(np.abs(m.lambda1[::s1] - f.lambda1[::s2]))
    return float(math.log(e1 / e2) / math.log(s1))


def heat_mode_solution(c: float, A: float, t: float, theta: np.ndarray) -> np.ndarray:
    """Exact c + A exp(-2 pi^2 t) cos(2 pi theta) for the half-Laplacian heat flow."""
    return c + A * math.exp(-2 * math.pi ** 2 * t) * np.cos(2 * math.pi * theta)
