"""Growable dense box of Z^d backing the sparse epidemic configurations."""
from __future__ import annotations

import numpy as np

from ._epidemic_kernels import MARGIN


class Box:
    """Cube {-shift .. L-1-shift}^d stored as flat C-order arrays."""

    def __init__(self, d: int, L: int, shift: int):
        self.d = d
        self.L = L
        self.shift = shift
        self.strides = np.array([L ** (d - 1 - k) for k in range(d)], dtype=np.int64)
        offs = []
        for k in range(d):
            offs += [-self.strides[k], self.strides[k]]
        self.offsets = np.array(offs, dtype=np.int64)

    @classmethod
    def around(cls, sites, d: int) -> "Box":
        reach = max((abs(c) for s in sites for c in s), default=0)
        half = max(8, 2 * (reach + MARGIN + 1))
        return cls(d, 2 * half + 1, half)

    @property
    def n_cells(self) -> int:
        return self.L ** self.d

    def flat(self, site) -> int:
        idx = 0
        for k, c in enumerate(site):
            idx += (c + self.shift) * int(self.strides[k])
        return idx

    def coords(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        out = np.empty((flat.size, self.d), dtype=np.int64)
        rem = flat.copy()
        for k in range(self.d):
            out[:, k] = rem // self.strides[k] - self.shift
            rem = rem % self.strides[k]
        return out

    def embed(self, config: dict) -> np.ndarray:
        counts = np.zeros(self.n_cells, dtype=np.int64)
        for site, c in config.items():
            counts[self.flat(site)] = c
        return counts

    def to_dict(self, counts: np.ndarray) -> dict:
        nz = np.flatnonzero(counts)
        coords = self.coords(nz)
        return {tuple(int(v) for v in row): int(counts[i]) for row, i in zip(coords, nz)}

    def grown(self) -> "Box":
        extra = self.L // 2 + 1
        return Box(self.d, self.L + 2 * extra, self.shift + extra)

    def regrid(self, counts: np.ndarray, new: "Box") -> np.ndarray:
        old = counts.reshape((self.L,) * self.d)
        out = np.zeros((new.L,) * self.d, dtype=counts.dtype)
        lo = new.shift - self.shift
        out[(slice(lo, lo + self.L),) * self.d] = old
        return out.ravel()
