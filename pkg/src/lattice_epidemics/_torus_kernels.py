"""JIT event loop for the two-species process on the discrete torus Z/NZ."""
import numpy as np
from numba import njit

from ._tree import tree_build, tree_sample, tree_set

HORIZON = 0
NEED_RANDOM = 2
BUDGET = 5

N_KINDS = 11
KIND_NAMES = ("birth1", "death1", "birth2", "death2", "recovery", "within_infection",
              "outside_infection", "eta_left", "eta_right", "xi_left", "xi_right")
# change of (eta(x), xi(x)) for the reaction kinds
D_ETA = np.array([1, -1, 0, 0, 1, -1, -1], dtype=np.int64)
D_XI = np.array([0, 0, 1, -1, -1, 1, 1], dtype=np.int64)


@njit(cache=True)
def site_event_rates(eta, xi, x, rates, out):
    """Fill ``out`` with the 11 event rates at ``x``.

    ``rates`` = (alpha1, alpha2, kappa_death, lam, beta, phi, N^2, recovery).
    """
    n = eta.size
    e = float(eta[x])
    s = float(xi[x])
    S = float(xi[(x - 1) % n] + xi[(x + 1) % n])
    a1, a2, kd, lam, beta, phi, n2 = (rates[0], rates[1], rates[2], rates[3], rates[4],
                                      rates[5], rates[6])
    out[0] = a1 * (e + s)
    out[1] = kd * e * e * (e + s * s)
    out[2] = a2 * (e + s)
    out[3] = kd * s * s * (e * e + s)
    out[4] = rates[7] * s
    if e > 0:
        out[5] = phi * s
        out[6] = lam * S if s == 0 else beta * S
    else:
        out[5] = 0.0
        out[6] = 0.0
    out[7] = 0.5 * n2 * e
    out[8] = 0.5 * n2 * e
    out[9] = 0.5 * n2 * s
    out[10] = 0.5 * n2 * s


@njit(cache=True)
def site_total(eta, xi, x, rates, buf):
    site_event_rates(eta, xi, x, rates, buf)
    tot = 0.0
    for k in range(N_KINDS):
        tot += buf[k]
    return tot


@njit(cache=True)
def rebuild_torus(eta, xi, rates, tree, size):
    buf = np.empty(N_KINDS)
    tree[:] = 0.0
    for x in range(eta.size):
        tree[size + x] = site_total(eta, xi, x, rates, buf)
    tree_build(tree, size)


@njit(cache=True)
def run_torus(eta, xi, rates, tree, size, t, horizon, uniforms, upos,
              snap_times, snap_eta, snap_xi, snap_i, kind_counts, events, max_events):
    n = eta.size
    buf = np.empty(N_KINDS)
    n_snap = snap_times.size
    while True:
        if events >= max_events:
            return BUDGET, t, upos, events, snap_i
        if upos + 3 > uniforms.size:
            return NEED_RANDOM, t, upos, events, snap_i
        total = tree[1]
        if total > 0.0:
            t_next = t - np.log1p(-uniforms[upos]) / total
        else:
            t_next = np.inf
        while snap_i < n_snap and snap_times[snap_i] < t_next and snap_times[snap_i] <= horizon:
            snap_eta[snap_i, :] = eta
            snap_xi[snap_i, :] = xi
            snap_i += 1
        if t_next > horizon:
            upos += 1
            return HORIZON, horizon, upos, events, snap_i
        t = t_next
        x = tree_sample(tree, size, uniforms[upos + 1] * total)
        site_total_x = site_total(eta, xi, x, rates, buf)
        target = uniforms[upos + 2] * site_total_x
        upos += 3
        kind = N_KINDS - 1
        acc = 0.0
        for k in range(N_KINDS):
            acc += buf[k]
            if target < acc and buf[k] > 0.0:
                kind = k
                break
        if kind == N_KINDS - 1 and buf[kind] <= 0.0:
            # rounding pushed target past the last positive rate
            for k in range(N_KINDS - 1, -1, -1):
                if buf[k] > 0.0:
                    kind = k
                    break
        if kind < 7:
            eta[x] += D_ETA[kind]
            xi[x] += D_XI[kind]
        elif kind == 7:
            eta[x] -= 1
            eta[(x - 1) % n] += 1
        elif kind == 8:
            eta[x] -= 1
            eta[(x + 1) % n] += 1
        elif kind == 9:
            xi[x] -= 1
            xi[(x - 1) % n] += 1
        else:
            xi[x] -= 1
            xi[(x + 1) % n] += 1
        for off in range(-2, 3):
            y = (x + off) % n
            tree_set(tree, size, y, site_total(eta, xi, y, rates, buf))
        kind_counts[kind] += 1
        events += 1
