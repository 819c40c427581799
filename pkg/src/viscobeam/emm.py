"""Identification of extended-Maxwell-model parameters from moments.

Given m_k = sum_j alpha_j^k beta_j for k < 2N, the alphas are the roots of the
monic polynomial p(y) = prod_j (y - alpha_j).  Its coefficients solve a Hankel
system built from the moments, and the betas then follow from a Vandermonde
solve.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, IdentifiabilityError, NonRealSpectrumError
from .media import emm_moments

COND_LIMIT = 1e12
IMAG_TOL = 1e-8


@dataclass(frozen=True)
class EmmFit:
    alphas: np.ndarray
    betas: np.ndarray
    cond: float


def hankel_matrix(moments: np.ndarray, n: int) -> np.ndarray:
    m = np.asarray(moments, dtype=float)
    idx = np.arange(n)
    return m[idx[:, None] + idx[None, :]]


def recover_parameters(moments, n: int | None = None) -> EmmFit:
    m = np.asarray(moments, dtype=float).ravel()
    if n is None:
        if len(m) % 2:
            raise ArgumentError("moment vector must have even length 2N")
        n = len(m) // 2
    if n < 1 or len(m) != 2 * n:
        raise ArgumentError(f"need exactly 2N = {2 * n} moments, got {len(m)}")

    M = hankel_matrix(m, n)
    cond = float(np.linalg.cond(M)) if np.all(np.isfinite(M)) else math.inf
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IdentifiabilityError(
            f"Hankel matrix is numerically singular (cond={cond:.3g}); "
            "alphas repeated or some beta vanishes")
    coeffs = np.linalg.solve(M, -m[n:2 * n])

    # companion matrix of y^n + c_{n-1} y^{n-1} + ... + c_0
    comp = np.zeros((n, n))
    if n > 1:
        comp[1:, :-1] = np.eye(n - 1)
    comp[:, -1] = -coeffs
    roots = np.linalg.eigvals(comp)
    radius = max(np.max(np.abs(roots)), 1e-300)
    if np.max(np.abs(roots.imag)) > IMAG_TOL * radius:
        raise NonRealSpectrumError(f"polynomial roots are not real: {roots}")
    alphas = np.sort(roots.real)

    V = alphas[None, :] ** np.arange(n)[:, None]
    betas = np.linalg.solve(V, m[:n])
    return EmmFit(alphas, betas, cond)


def hankel_determinant_check(alphas, betas) -> tuple[float, float]:
    """Numeric det of M_ij = m_{i+j} versus prod(beta) * prod_{j<k} (alpha_j - alpha_k)^2."""
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    if a.shape != b.shape:
        raise ArgumentError("alphas and betas must have the same length")
    n = len(a)
    numeric = float(np.linalg.det(hankel_matrix(emm_moments(a, b, 2 * n - 1), n)))
    formula = float(np.prod(b))
    for j in range(n):
        for k in range(j + 1, n):
            formula *= (a[j] - a[k]) ** 2
    return numeric, formula


def magic_formula_residual(alphas, betas, k: int) -> float:
    """Check sum a^(N+k) b = -sum_l (1/l!) (sum a^(l+k) b) p^(l)(0) with p = prod (y - a)."""
    if k < 0:
        raise ArgumentError("k must be >= 0")
    a = np.asarray(alphas, dtype=float)
    b = np.asarray(betas, dtype=float)
    n = len(a)
    m = emm_moments(a, b, n + k + 1)
    # np.poly gives coefficients highest degree first; p^(l)(0)/l! is the y^l coefficient
    low_first = np.poly(a)[::-1]
    lhs = m[n + k]
    rhs = -sum(m[l + k] * low_first[l] for l in range(n))
    return float(abs(lhs - rhs) / (1.0 + abs(lhs)))


def recover_batch(in_path, out_path, n: int, header: str | None = None) -> int:
    """CSV (x, y, m0..m_{2N-1}) -> CSV (x, y, alpha_1..alpha_N, beta_1..beta_N, cond).

    Rows whose recovery fails are written with NaN parameters and cond = inf.
    Returns the number of failed rows.
    """
    failed = 0
    with open(in_path) as fin, open(out_path, "w", newline="") as fout:
        if header:
            fout.write(header)
        writer = csv.writer(fout)
        writer.writerow(["x", "y"] + [f"alpha{j + 1}" for j in range(n)]
                        + [f"beta{j + 1}" for j in range(n)] + ["cond"])
        rows = (r for r in csv.reader(line for line in fin if not line.startswith("#")))
        for row in rows:
            if not row:
                continue
            try:
                vals = [float(v) for v in row]
            except ValueError:
                continue  # column header
            x, y, mom = vals[0], vals[1], vals[2:]
            try:
                fit = recover_parameters(mom, n)
                out = list(fit.alphas) + list(fit.betas) + [fit.cond]
            except (IdentifiabilityError, NonRealSpectrumError, ArgumentError):
                failed += 1
                out = [math.nan] * (2 * n) + [math.inf]
            writer.writerow([repr(x), repr(y)] + [repr(float(v)) for v in out])
    return failed
