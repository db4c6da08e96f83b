"""Spectral Tucker estimators used as comparison methods.

Both estimators return orthonormal-column factors; the reconstruction is
``tucker_assemble`` of the result.  They operate on raw count tensors and hence
estimate mean counts rather than log-intensities.
"""
from __future__ import annotations

import numpy as np

from .tensor import TuckerFactors, frobenius_norm, mode_product, mode_unfold

__all__ = ["hosvd", "hooi"]


def _check_ranks(dims: tuple[int, ...], ranks: tuple[int, int, int]) -> tuple[int, int, int]:
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != 3 or any(r < 1 for r in ranks):
        raise ValueError(f"ranks must be three positive integers, got {ranks}")
    for s, (r, n) in enumerate(zip(ranks, dims), start=1):
        if r > n:
            raise ValueError(f"rank {r} exceeds mode-{s} dimension {n}")
    return ranks


def _leading_left_vectors(mat: np.ndarray, r: int) -> np.ndarray:
    u, _, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, :r]


def _core(t: np.ndarray, factors: list[np.ndarray]) -> np.ndarray:
    g = t
    for mode, f in enumerate(factors, start=1):
        g = mode_product(g, f.T, mode)
    return g


def hosvd(t: np.ndarray, ranks: tuple[int, int, int]) -> TuckerFactors:
    """One-shot Tucker approximation from per-mode singular vectors."""
    t = np.asarray(t, dtype=np.float64)
    ranks = _check_ranks(t.shape, ranks)
    factors = [_leading_left_vectors(mode_unfold(t, mode), ranks[mode - 1]) for mode in (1, 2, 3)]
    return TuckerFactors(_core(t, factors), *factors)


def hooi(t: np.ndarray, ranks: tuple[int, int, int], iters: int = 50, tol: float = 1e-9) -> TuckerFactors:
    """Alternating refinement of :func:`hosvd`.

    Each sweep replaces one factor by the leading singular vectors of the
    tensor contracted with the other two, so the reconstruction error never
    increases.  Stops after ``iters`` sweeps or when the core norm change is
    relatively below ``tol``.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    t = np.asarray(t, dtype=np.float64)
    ranks = _check_ranks(t.shape, ranks)
    f = hosvd(t, ranks)
    factors = [f.u, f.v, f.w]
    prev = frobenius_norm(f.core)
    for _ in range(iters):
        for mode in (1, 2, 3):
            g = t
            for other in (1, 2, 3):
                if other != mode:
                    g = mode_product(g, factors[other - 1].T, other)
            factors[mode - 1] = _leading_left_vectors(mode_unfold(g, mode), ranks[mode - 1])
        cur = frobenius_norm(_core(t, factors))
        if abs(cur - prev) <= tol * max(prev, 1.0):
            break
        prev = cur
    return TuckerFactors(_core(t, factors), *factors)
