"""JIT event loops for the cluster epidemic processes on a growable box of Z^d.

Sites are flat indices into a box of side ``L``; ``offsets`` holds the 2d
flat neighbour offsets. The wrapper keeps every infected site at least
``MARGIN`` cells away from the box faces, so neighbour lookups of any site
with a positive rate stay inside the box. Each loop returns a status code and
hands control back to Python whenever it needs fresh uniforms, log space or a
bigger box.
"""
import numpy as np
from numba import njit

from ._tree import tree_build, tree_sample, tree_set

HORIZON = 0
EXTINCT = 1
NEED_RANDOM = 2
LOG_FULL = 3
GROW = 4
BUDGET = 5
CAPPED = 6
OVERFLOW = 7

STATUS_NAMES = {
    HORIZON: "horizon",
    EXTINCT: "extinct",
    BUDGET: "truncated",
    CAPPED: "capped",
    OVERFLOW: "overflow",
}

INDIVIDUAL = 0
CLUSTER = 1

INF_CAP = np.int64(2 ** 62)
I64_MAX = np.int64(2 ** 63 - 1)
MARGIN = 3


@njit(cache=True)
def site_up_down(counts, x, offsets, lam, beta, phi, kappa, mode):
    i = counts[x]
    s = 0
    for k in range(offsets.size):
        s += counts[x + offsets[k]]
    if i >= kappa:
        up = 0.0
    elif i == 0:
        up = lam * s
    else:
        up = beta * s + i * phi
    if i == 0:
        down = 0.0
    elif mode == INDIVIDUAL:
        down = float(i)
    else:
        down = 1.0
    return up, down


@njit(cache=True)
def near_face(x, strides, L):
    for k in range(strides.size):
        c = (x // strides[k]) % L
        if c < MARGIN or c > L - 1 - MARGIN:
            return True
    return False


@njit(cache=True)
def _refresh(counts, up, down, tree, size, x, offsets, lam, beta, phi, kappa, mode):
    u, dn = site_up_down(counts, x, offsets, lam, beta, phi, kappa, mode)
    up[x] = u
    down[x] = dn
    tree_set(tree, size, x, u + dn)


@njit(cache=True)
def rebuild_single(counts, up, down, tree, size, offsets, lam, beta, phi, kappa, mode):
    up[:] = 0.0
    down[:] = 0.0
    tree[:] = 0.0
    for x in range(counts.size):
        if counts[x] > 0:
            for j in range(offsets.size + 1):
                y = x if j == offsets.size else x + offsets[j]
                u, dn = site_up_down(counts, y, offsets, lam, beta, phi, kappa, mode)
                up[y] = u
                down[y] = dn
                tree[size + y] = u + dn
    tree_build(tree, size)


@njit(cache=True)
def run_single(counts, up, down, tree, size, offsets, strides, L,
               lam, beta, phi, kappa, mode,
               t, horizon, uniforms, upos,
               record, log_t, log_x, log_c, log_pos,
               events, max_events, total, max_infected):
    n_off = offsets.size
    while True:
        if total == 0:
            return EXTINCT, t, upos, log_pos, events, total
        if events >= max_events:
            return BUDGET, t, upos, log_pos, events, total
        if max_infected > 0 and total >= max_infected:
            return CAPPED, t, upos, log_pos, events, total
        if upos + 3 > uniforms.size:
            return NEED_RANDOM, t, upos, log_pos, events, total
        if record and log_pos >= log_t.size:
            return LOG_FULL, t, upos, log_pos, events, total
        rate = tree[1]
        dt = -np.log1p(-uniforms[upos]) / rate
        if t + dt > horizon:
            upos += 1
            return HORIZON, horizon, upos, log_pos, events, total
        t += dt
        x = tree_sample(tree, size, uniforms[upos + 1] * rate)
        u = uniforms[upos + 2]
        upos += 3
        i = counts[x]
        grow = False
        if u * (up[x] + down[x]) < up[x]:
            if i == I64_MAX:
                return OVERFLOW, t, upos, log_pos, events, total
            counts[x] = i + 1
            total += 1
            if i == 0 and near_face(x, strides, L):
                grow = True
        elif mode == INDIVIDUAL:
            counts[x] = i - 1
            total -= 1
        else:
            counts[x] = 0
            total -= i
        _refresh(counts, up, down, tree, size, x, offsets, lam, beta, phi, kappa, mode)
        for k in range(n_off):
            _refresh(counts, up, down, tree, size, x + offsets[k], offsets,
                     lam, beta, phi, kappa, mode)
        events += 1
        if record:
            log_t[log_pos] = t
            log_x[log_pos] = x
            log_c[log_pos] = counts[x]
            log_pos += 1
        if grow:
            return GROW, t, upos, log_pos, events, total


@njit(cache=True)
def _refresh_pair(ca, cb, ua, da, ub, db, tree, size, x, offsets, pa, ka, ma, pb, kb, mb):
    u1, d1 = site_up_down(ca, x, offsets, pa[0], pa[1], pa[2], ka, ma)
    u2, d2 = site_up_down(cb, x, offsets, pb[0], pb[1], pb[2], kb, mb)
    ua[x] = u1
    da[x] = d1
    ub[x] = u2
    db[x] = d2
    tree_set(tree, size, x, max(u1, u2) + max(d1, d2))


@njit(cache=True)
def rebuild_pair(ca, cb, ua, da, ub, db, tree, size, offsets, pa, ka, ma, pb, kb, mb):
    ua[:] = 0.0
    da[:] = 0.0
    ub[:] = 0.0
    db[:] = 0.0
    tree[:] = 0.0
    for x in range(ca.size):
        if ca[x] > 0 or cb[x] > 0:
            for j in range(offsets.size + 1):
                y = x if j == offsets.size else x + offsets[j]
                u1, d1 = site_up_down(ca, y, offsets, pa[0], pa[1], pa[2], ka, ma)
                u2, d2 = site_up_down(cb, y, offsets, pb[0], pb[1], pb[2], kb, mb)
                ua[y] = u1
                da[y] = d1
                ub[y] = u2
                db[y] = d2
                tree[size + y] = max(u1, u2) + max(d1, d2)
    tree_build(tree, size)


@njit(cache=True)
def _apply(c, x, fire_up, mode, total):
    # returns (new total, status, became_infected)
    i = c[x]
    if fire_up:
        if i == I64_MAX:
            return total, OVERFLOW, False
        c[x] = i + 1
        return total + 1, -1, i == 0
    if mode == INDIVIDUAL:
        c[x] = i - 1
        return total - 1, -1, False
    c[x] = 0
    return total - i, -1, False


@njit(cache=True)
def run_pair(ca, cb, ua, da, ub, db, tree, size, offsets, strides, L,
             pa, ka, ma, pb, kb, mb,
             t, horizon, uniforms, upos,
             log_t, log_x, log_a, log_b, log_pos,
             events, max_events, total_a, total_b, max_infected):
    """Basic coupling: one joint clock per site and direction at the larger of
    the two rates; each process fires on the Bernoulli thinning of that ring
    given by a single shared uniform."""
    n_off = offsets.size
    while True:
        if total_a == 0 and total_b == 0:
            return EXTINCT, t, upos, log_pos, events, total_a, total_b
        if events >= max_events:
            return BUDGET, t, upos, log_pos, events, total_a, total_b
        if max_infected > 0 and max(total_a, total_b) >= max_infected:
            return CAPPED, t, upos, log_pos, events, total_a, total_b
        if upos + 4 > uniforms.size:
            return NEED_RANDOM, t, upos, log_pos, events, total_a, total_b
        if log_pos >= log_t.size:
            return LOG_FULL, t, upos, log_pos, events, total_a, total_b
        rate = tree[1]
        dt = -np.log1p(-uniforms[upos]) / rate
        if t + dt > horizon:
            upos += 1
            return HORIZON, horizon, upos, log_pos, events, total_a, total_b
        t += dt
        x = tree_sample(tree, size, uniforms[upos + 1] * rate)
        ju = max(ua[x], ub[x])
        jd = max(da[x], db[x])
        is_up = uniforms[upos + 2] * (ju + jd) < ju
        v = uniforms[upos + 3]
        upos += 4
        if is_up:
            fire_a = v * ju < ua[x]
            fire_b = v * ju < ub[x]
        else:
            fire_a = v * jd < da[x]
            fire_b = v * jd < db[x]
        grow = False
        if fire_a:
            total_a, st, fresh = _apply(ca, x, is_up, ma, total_a)
            if st == OVERFLOW:
                return OVERFLOW, t, upos, log_pos, events, total_a, total_b
            grow = grow or (fresh and near_face(x, strides, L))
        if fire_b:
            total_b, st, fresh = _apply(cb, x, is_up, mb, total_b)
            if st == OVERFLOW:
                return OVERFLOW, t, upos, log_pos, events, total_a, total_b
            grow = grow or (fresh and near_face(x, strides, L))
        _refresh_pair(ca, cb, ua, da, ub, db, tree, size, x, offsets, pa, ka, ma, pb, kb, mb)
        for k in range(n_off):
            _refresh_pair(ca, cb, ua, da, ub, db, tree, size, x + offsets[k], offsets,
                          pa, ka, ma, pb, kb, mb)
        events += 1
        log_t[log_pos] = t
        log_x[log_pos] = x
        log_a[log_pos] = ca[x]
        log_b[log_pos] = cb[x]
        log_pos += 1
        if grow:
            return GROW, t, upos, log_pos, events, total_a, total_b
