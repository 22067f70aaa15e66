"""Lattice geometry on Z^d: nearest neighbours, the uniform nearest-neighbour
kernel and the weighted sequence k_x = sum_n M^-n p^(n)(x, 0)."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .errors import InvalidParameterError

Site = tuple
SiteLike = Union[int, Sequence[int]]


def as_site(x: SiteLike, d: int | None = None) -> Site:
    """Normalise an int or integer sequence to a coordinate tuple."""
    if isinstance(x, (int, np.integer)):
        site = (int(x),)
    else:
        site = tuple(int(c) for c in x)
    if d is not None and len(site) != d:
        raise InvalidParameterError(f"site {site} does not have dimension d={d}")
    if len(site) < 1:
        raise InvalidParameterError("sites need at least one coordinate")
    return site


def _check_dim(d: int) -> None:
    if int(d) != d or d < 1:
        raise InvalidParameterError(f"dimension d must be an integer >= 1, got {d}")


def neighbors(x: SiteLike, d: int) -> list[Site]:
    """The 2d sites at l1-distance one from ``x``, in lexicographic order."""
    _check_dim(d)
    site = as_site(x, d)
    out = []
    for k in range(d):
        for step in (-1, 1):
            y = list(site)
            y[k] += step
            out.append(tuple(y))
    out.sort()
    return out


def l1_distance(x: SiteLike, y: SiteLike) -> int:
    return sum(abs(a - b) for a, b in zip(as_site(x), as_site(y)))


def kernel_weight(x: SiteLike, y: SiteLike, d: int, exact: bool = False):
    """p(x, y) = 1/(2d) if |x - y|_1 = 1 else 0.

    With ``exact=True`` the weight is returned as a :class:`fractions.Fraction`.
    """
    _check_dim(d)
    if l1_distance(as_site(x, d), as_site(y, d)) == 1:
        w = Fraction(1, 2 * d)
    else:
        w = Fraction(0)
    return w if exact else float(w)


def kernel_row(x: SiteLike, d: int) -> dict:
    """Non-zero entries of p(x, .) as exact fractions."""
    return {y: Fraction(1, 2 * d) for y in neighbors(x, d)}


def n_step_kernel(n: int, d: int = 1, radius: int | None = None) -> np.ndarray:
    """p^(n)(x, 0) on the window {-R..R}^d, with R = max(n, radius).

    Computed by repeated convolution with the one-step kernel. The window is
    wide enough that no mass ever leaves it, so the result is exact up to
    floating point.
    """
    _check_dim(d)
    if n < 0:
        raise InvalidParameterError("n must be >= 0")
    R = max(n, radius or 0)
    return _kernel_powers(n, d, R)[-1]


def _kernel_powers(n_max: int, d: int, R: int) -> list[np.ndarray]:
    # pad by one so np.roll never wraps mass around the window
    shape = (2 * R + 3,) * d
    p = np.zeros(shape)
    p[(R + 1,) * d] = 1.0
    powers = [p]
    for _ in range(n_max):
        nxt = np.zeros(shape)
        for axis in range(d):
            nxt += np.roll(p, 1, axis=axis) + np.roll(p, -1, axis=axis)
        p = nxt / (2 * d)
        powers.append(p)
    inner = (slice(1, -1),) * d
    return [q[inner] for q in powers]


@dataclass(frozen=True)
class WeightSequence:
    """Truncated k_x on the window {-R..R}^d.

    ``values`` is indexed so that ``values[(x + R)]`` is k_x (per axis).
    ``contraction_residual`` is max_x [sum_y p(x, y) k_y - M k_x] over the
    requested radius; the untruncated series makes it <= 0.
    """

    M: float
    n_max: int
    d: int
    radius: int
    values: np.ndarray = field(repr=False)
    contraction_residual: float
    truncation_bound: float

    @property
    def window(self) -> int:
        return (self.values.shape[0] - 1) // 2

    def __getitem__(self, x: SiteLike) -> float:
        site = as_site(x, self.d)
        R = self.window
        if any(abs(c) > R for c in site):
            return 0.0
        return float(self.values[tuple(c + R for c in site)])

    def as_dict(self) -> dict:
        R = self.window
        out = {}
        for idx in np.ndindex(self.values.shape):
            out[tuple(i - R for i in idx)] = float(self.values[idx])
        return out


def weight_sequence(M: float, n_max: int, radius: int = 5, d: int = 1) -> WeightSequence:
    """Truncated weighted Green's function k_x = sum_{n<=n_max} M^-n p^(n)(x, 0)."""
    if not M > 1:
        raise InvalidParameterError(f"M must be > 1, got {M}")
    if n_max < 0 or int(n_max) != n_max:
        raise InvalidParameterError("n_max must be a non-negative integer")
    if radius < 0:
        raise InvalidParameterError("radius must be >= 0")
    _check_dim(d)
    # one extra ring so the neighbours of every site in the radius are present
    R = max(n_max + 1, radius + 1)
    powers = _kernel_powers(n_max, d, R)
    k = np.zeros_like(powers[0])
    for n, p in enumerate(powers):
        k += M ** (-n) * p

    # sum_y p(x, y) k_y on the interior, by the same shift-average
    pk = np.zeros_like(k)
    for axis in range(d):
        pk += np.roll(k, 1, axis=axis) + np.roll(k, -1, axis=axis)
    pk /= 2 * d
    resid = pk - M * k
    inner = tuple(slice(R - radius, R + radius + 1) for _ in range(d))
    contraction = float(resid[inner].max())
    # the neglected tail contributes at most M^-n_max * max p^(n_max+1) <= M^-n_max
    bound = float(M ** (-n_max))
    return WeightSequence(M=float(M), n_max=int(n_max), d=d, radius=radius, values=k,
                          contraction_residual=contraction, truncation_bound=bound)


def walk_path_count(x: SiteLike, n: int, d: int = 1) -> int:
    """Number of n-step nearest-neighbour paths from x to the origin (brute force)."""
    site = as_site(x, d)
    count = 0

    def rec(pos, left):
        nonlocal count
        if sum(abs(c) for c in pos) > left:
            return
        if left == 0:
            count += all(c == 0 for c in pos)
            return
        for y in neighbors(pos, d):
            rec(y, left - 1)

    rec(site, n)
    return count

