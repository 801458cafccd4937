"""Array-valued interval arithmetic in double precision with outward rounding.

Every arithmetic result is widened by one ulp in each direction
(``np.nextafter``), so enclosures stay valid under round-to-nearest.
"""

from __future__ import annotations

import numpy as np

_INF = np.inf


def _down(x):
    return np.nextafter(x, -_INF)


def _up(x):
    return np.nextafter(x, _INF)


class Interval:
    """Elementwise interval ``[lo, hi]`` over numpy arrays (broadcasting)."""

    __slots__ = ("lo", "hi")
    __array_priority__ = 1000

    def __init__(self, lo, hi=None):
        lo = np.asarray(lo, dtype=float)
        hi = lo if hi is None else np.asarray(hi, dtype=float)
        if np.any(lo > hi):
            raise ValueError("interval with lo > hi")
        self.lo = lo
        self.hi = hi

    @classmethod
    def point(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, x)

    @classmethod
    def around(cls, center, radius):
        """Enclosure of ``center +/- radius``."""
        c = np.asarray(center, dtype=float)
        r = np.asarray(radius, dtype=float)
        return cls(_down(c - r), _up(c + r))

    @staticmethod
    def _coerce(other):
        return other if isinstance(other, Interval) else Interval.point(other)

    @property
    def shape(self):
        return np.broadcast_shapes(self.lo.shape, self.hi.shape)

    def __getitem__(self, idx):
        return Interval(self.lo[idx], self.hi[idx])

    def __repr__(self):
        return f"Interval(lo={self.lo!r}, hi={self.hi!r})"

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __add__(self, other):
        o = self._coerce(other)
        return Interval(_down(self.lo + o.lo), _up(self.hi + o.hi))

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return Interval(_down(self.lo - o.hi), _up(self.hi - o.lo))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        o = self._coerce(other)
        p = np.stack(np.broadcast_arrays(self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi))
        return Interval(_down(p.min(axis=0)), _up(p.max(axis=0)))

    __rmul__ = __mul__

    def sqr(self):
        """Tight enclosure of ``x**2`` (never negative)."""
        a, b = self.lo * self.lo, self.hi * self.hi
        lo = np.where((self.lo <= 0) & (self.hi >= 0), 0.0, np.minimum(a, b))
        return Interval(np.maximum(_down(lo), 0.0), _up(np.maximum(a, b)))

    def sum(self, axis=-1):
        """Sum along an axis, rounding outward after every addition."""
        lo = np.moveaxis(self.lo, axis, 0)
        hi = np.moveaxis(self.hi, axis, 0)
        acc = Interval(lo[0], hi[0])
        for k in range(1, lo.shape[0]):
            acc = acc + Interval(lo[k], hi[k])
        return acc

    def mag(self):
        """Upper bound of ``|x|``."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def width(self):
        return self.hi - self.lo

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        return (self.lo <= x) & (x <= self.hi)


def matvec(M: Interval, v: Interval) -> Interval:
    """Batched ``M @ v`` with ``M[..., r, c]`` and ``v[..., c]``."""
    prod = Interval(M.lo, M.hi) * Interval(v.lo[..., None, :], v.hi[..., None, :])
    return prod.sum(axis=-1)


def matmul(A: Interval, B: Interval) -> Interval:
    """Batched ``A @ B``."""
    prod = Interval(A.lo[..., :, :, None], A.hi[..., :, :, None]) * Interval(
        B.lo[..., None, :, :], B.hi[..., None, :, :]
    )
    return prod.sum(axis=-2)


def dot(a: Interval, b: Interval) -> Interval:
    return (a * b).sum(axis=-1)


def norm_inf_upper(M) -> np.ndarray:
    """Upper bound of the induced infinity norm (max row sum) of ``M[..., r, c]``."""
    mag = M.mag() if isinstance(M, Interval) else np.abs(np.asarray(M, dtype=float))
    acc = mag[..., 0]
    for k in range(1, mag.shape[-1]):
        acc = _up(acc + mag[..., k])
    return acc.max(axis=-1) if acc.ndim else acc
