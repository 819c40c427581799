"""Exact arithmetic on sums of polynomial-times-exponential functions of t.

An ``ExpPoly`` is  sum_lambda P_lambda(t) exp(lambda t)  where every
polynomial carries a batch of coefficient vectors (shape ``batch + (deg+1,)``,
ascending powers).  The batch axis lets one object hold the same
construction for many Fourier modes at once.  Exponents are plain complex
numbers shared by the whole batch.

Convolutions are done in closed form, so residuals computed from these
objects are free of quadrature error.
"""
from __future__ import annotations

from math import comb, factorial

import numpy as np


def _key(lam: complex) -> complex:
    lam = complex(lam)
    return complex(round(lam.real, 13), round(lam.imag, 13))


def _pad(p: np.ndarray, deg1: int) -> np.ndarray:
    if p.shape[-1] >= deg1:
        return p
    pad = [(0, 0)] * (p.ndim - 1) + [(0, deg1 - p.shape[-1])]
    return np.pad(p, pad)


class ExpPoly:
    __slots__ = ("terms", "batch")

    def __init__(self, terms: dict | None = None, batch: tuple = ()):
        self.batch = tuple(batch)
        self.terms: dict[complex, np.ndarray] = {}
        for lam, p in (terms or {}).items():
            self._accumulate(_key(lam), np.asarray(p, dtype=complex))

    def _accumulate(self, lam: complex, p: np.ndarray) -> None:
        p = np.broadcast_to(p, self.batch + p.shape[-1:]) if p.ndim - 1 < len(self.batch) else p
        if p.ndim - 1 > len(self.batch):
            self.batch = p.shape[:-1]
            for k in list(self.terms):
                self.terms[k] = np.broadcast_to(self.terms[k], self.batch + self.terms[k].shape[-1:]).copy()
        if lam in self.terms:
            q = self.terms[lam]
            n = max(q.shape[-1], p.shape[-1])
            self.terms[lam] = _pad(q, n) + _pad(p, n)
        else:
            self.terms[lam] = np.array(p, dtype=complex)

    # constructors
    @classmethod
    def exponential(cls, lam: complex, coef=1.0) -> "ExpPoly":
        c = np.asarray(coef, dtype=complex)
        return cls({lam: c[..., None]}, batch=c.shape)

    @classmethod
    def zero(cls, batch: tuple = ()) -> "ExpPoly":
        return cls({}, batch)

    # algebra
    def copy(self) -> "ExpPoly":
        out = ExpPoly(batch=self.batch)
        out.terms = {k: v.copy() for k, v in self.terms.items()}
        return out

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        out = self.copy()
        for lam, p in other.terms.items():
            out._accumulate(lam, p)
        return out

    def __neg__(self) -> "ExpPoly":
        return self.scale(-1.0)

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def scale(self, s) -> "ExpPoly":
        s = np.asarray(s, dtype=complex)
        out = ExpPoly(batch=np.broadcast_shapes(self.batch, s.shape))
        for lam, p in self.terms.items():
            out.terms[lam] = p * s[..., None]
        return out

    def deriv(self, times: int = 1) -> "ExpPoly":
        out = self
        for _ in range(times):
            nxt = ExpPoly(batch=out.batch)
            for lam, p in out.terms.items():
                dp = p[..., 1:] * np.arange(1, p.shape[-1])
                nxt.terms[lam] = _pad(dp, p.shape[-1]) + lam * p
            out = nxt
        return out

    def at_zero(self) -> np.ndarray:
        total = np.zeros(self.batch, dtype=complex)
        for p in self.terms.values():
            total = total + p[..., 0]
        return total

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        total = np.zeros(self.batch + t.shape, dtype=complex)
        for lam, p in self.terms.items():
            poly = np.zeros(self.batch + t.shape, dtype=complex)
            for j in range(p.shape[-1] - 1, -1, -1):
                poly = poly * t + p[..., j].reshape(self.batch + (1,) * t.ndim)
            total = total + poly * np.exp(lam * t)
        return total

    def convolve(self, kernel: "ExpPoly") -> "ExpPoly":
        """(kernel * self)(t) = int_0^t kernel(t - s) self(s) ds; kernel must be unbatched."""
        if kernel.batch:
            raise ValueError("kernel must be unbatched")
        out = ExpPoly(batch=self.batch)
        for nu, q in kernel.terms.items():
            for lam, p in self.terms.items():
                for b in range(q.shape[-1]):
                    if q[b] == 0:
                        continue
                    for a in range(p.shape[-1]):
                        pa = p[..., a] * q[b]
                        if not np.any(pa):
                            continue
                        _conv_monomials(out, nu, b, lam, a, pa)
        return out


def _conv_monomials(out: ExpPoly, nu: complex, b: int, lam: complex, a: int, coef) -> None:
    """Add coef * int_0^t (t-s)^b e^{nu (t-s)} s^a e^{lam s} ds to out."""
    batch = np.shape(coef)
    if _key(nu) == _key(lam):
        deg = a + b + 1
        v = np.zeros(batch + (deg + 1,), dtype=complex)
        v[..., deg] = coef * factorial(a) * factorial(b) / factorial(a + b + 1)
        out._accumulate(_key(lam), v)
        return
    delta = lam - nu
    # (t-s)^b = sum_i C(b,i) t^{b-i} (-s)^i ; J_m = int_0^t s^m e^{delta s} ds
    for i in range(b + 1):
        m = a + i
        w = comb(b, i) * (-1) ** i
        # e^{delta t} sum_j (-1)^j m!/(m-j)! t^{m-j} / delta^{j+1}, times e^{nu t} t^{b-i}
        v = np.zeros(batch + (m + b - i + 1,), dtype=complex)
        for j in range(m + 1):
            v[..., m - j + b - i] += coef * w * (-1) ** j * (factorial(m) / factorial(m - j)) / delta ** (j + 1)
        out._accumulate(_key(lam), v)
        # minus (-1)^m m! / delta^{m+1}, times e^{nu t} t^{b-i}
        v2 = np.zeros(batch + (b - i + 1,), dtype=complex)
        v2[..., b - i] = -coef * w * (-1) ** m * factorial(m) / delta ** (m + 1)
        out._accumulate(_key(nu), v2)


def exp_integral_moments(delta: np.ndarray, t: np.ndarray, m_max: int) -> np.ndarray:
    """J_m(t) = int_0^t s^m exp(delta s) ds for m = 0..m_max.

    ``delta`` has shape B, ``t`` shape T; returns (m_max+1,) + B + T.
    Uses the upward recursion J_m = (t^m e^{delta t} - m J_{m-1}) / delta,
    accurate when |delta| t is not small (the oscillatory regime used here).
    """
    d = np.asarray(delta, dtype=complex)[..., None]
    e = np.exp(d * t)
    out = np.empty((m_max + 1,) + np.broadcast_shapes(d.shape, np.shape(t)), dtype=complex)
    out[0] = (e - 1.0) / d
    tp = np.ones_like(t, dtype=float)
    for m in range(1, m_max + 1):
        tp = tp * t
        out[m] = (tp * e - m * out[m - 1]) / d
    return out
