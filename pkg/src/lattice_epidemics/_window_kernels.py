"""Next-reaction simulation of the two-species process with per-channel random streams.

Every reaction channel (site label, event kind) owns a unit-rate Poisson
clock whose k-th waiting time is a hash of (key, label, kind, k). Runs on
tori of different sizes therefore share their randomness wherever the site
labels agree, and stay identical until a difference propagates in from the
boundary.
"""
import numpy as np
from numba import njit

from ._torus_kernels import D_ETA, D_XI, N_KINDS, site_event_rates

HORIZON = 0
BUDGET = 5

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LABEL_OFFSET = 1 << 40
ETA_KIND = N_KINDS
XI_KIND = N_KINDS + 1


@njit(cache=True)
def splitmix64(z):
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def stream_uniform(key, label, kind, counter):
    """Uniform on (0, 1) from the counter-based stream of one channel."""
    h = splitmix64(key)
    h = splitmix64(h ^ np.uint64(label + _LABEL_OFFSET))
    h = splitmix64(h ^ np.uint64(kind))
    h = splitmix64(h ^ np.uint64(counter))
    return (float(h >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def poisson_inverse(u, m):
    k = 0
    p = np.exp(-m)
    F = p
    while u > F and p > 0.0:
        k += 1
        p *= m / k
        F += p
    return k


@njit(cache=True)
def initial_draw(key, labels, m1, m2, eta, xi):
    for i in range(labels.size):
        eta[i] = poisson_inverse(stream_uniform(key, labels[i], ETA_KIND, 0), m1[i])
        xi[i] = poisson_inverse(stream_uniform(key, labels[i], XI_KIND, 0), m2[i])


@njit(cache=True)
def _exp(key, label, kind, counter):
    return -np.log(stream_uniform(key, label, kind, counter))


@njit(cache=True)
def _min_set(tree, size, i, value):
    j = size + i
    tree[j] = value
    j //= 2
    while j >= 1:
        tree[j] = min(tree[2 * j], tree[2 * j + 1])
        j //= 2


@njit(cache=True)
def _min_leaf(tree, size):
    j = 1
    while j < size:
        j = 2 * j if tree[2 * j] <= tree[2 * j + 1] else 2 * j + 1
    return j - size


@njit(cache=True)
def run_window(eta, xi, labels, rates, key, horizon, max_events):
    """Advance in place to ``horizon``; returns (status, events)."""
    n = eta.size
    size = 1
    while size < n:
        size *= 2
    tree = np.full(2 * size, np.inf)
    a = np.zeros((n, N_KINDS))
    internal = np.zeros((n, N_KINDS))
    nxt = np.zeros((n, N_KINDS))
    last = np.zeros((n, N_KINDS))
    tau = np.full((n, N_KINDS), np.inf)
    count = np.zeros((n, N_KINDS), dtype=np.int64)
    buf = np.empty(N_KINDS)
    for i in range(n):
        site_event_rates(eta, xi, i, rates, buf)
        best = np.inf
        for k in range(N_KINDS):
            a[i, k] = buf[k]
            nxt[i, k] = _exp(key, labels[i], k, 0)
            if buf[k] > 0.0:
                tau[i, k] = nxt[i, k] / buf[k]
            best = min(best, tau[i, k])
        _min_set(tree, size, i, best)
    t = 0.0
    events = 0
    while True:
        if tree[1] > horizon:
            return HORIZON, events
        if events >= max_events:
            return BUDGET, events
        x = _min_leaf(tree, size)
        kind = 0
        for k in range(1, N_KINDS):
            if tau[x, k] < tau[x, kind]:
                kind = k
        t = tau[x, kind]
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
        # the fired clock moves on to its next mark
        internal[x, kind] = nxt[x, kind]
        count[x, kind] += 1
        nxt[x, kind] += _exp(key, labels[x], kind, count[x, kind])
        last[x, kind] = t
        for off in range(-2, 3):
            y = (x + off) % n
            site_event_rates(eta, xi, y, rates, buf)
            best = np.inf
            for k in range(N_KINDS):
                if not (y == x and k == kind):
                    internal[y, k] += a[y, k] * (t - last[y, k])
                    last[y, k] = t
                a[y, k] = buf[k]
                if buf[k] > 0.0:
                    tau[y, k] = t + (nxt[y, k] - internal[y, k]) / buf[k]
                else:
                    tau[y, k] = np.inf
                best = min(best, tau[y, k])
            _min_set(tree, size, y, best)
        events += 1
