"""Dense order-3 tensor algebra: unfoldings, mode products, Tucker assembly, norms.

Tensors are ``numpy`` float arrays of shape ``(n1, n2, n3)`` and matrices are
2-D arrays.  The canonical element order is C order on ``(i, j, k)``, but every
unfolding is defined by the cyclic index law (0-based)

    unfold(t, mode)[i_k, i_{k+1} + n_{k+1} * i_{k+2}] = t[i_1, i_2, i_3]

with mode indices taken modulo 3, so results are independent of memory layout.
All functions are pure; nothing here mutates its arguments.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TuckerFactors",
    "mode_unfold",
    "mode_refold",
    "mode_product",
    "tucker_assemble",
    "frobenius_norm",
    "sigma_r",
    "two_to_inf_norm",
]


def _check_mode(mode: int) -> int:
    if mode not in (1, 2, 3):
        raise ValueError(f"mode must be 1, 2 or 3, got {mode}")
    return mode - 1


def mode_unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Unfold an order-3 tensor into an ``n_k x (n / n_k)`` matrix.

    Column ``i_{k+1} + n_{k+1} * i_{k+2}`` of row ``i_k`` holds
    ``t[i_1, i_2, i_3]`` (cyclic mode order, 0-based).
    """
    t = np.asarray(t)
    if t.ndim != 3:
        raise ValueError(f"expected an order-3 tensor, got ndim={t.ndim}")
    m = _check_mode(mode)
    perm = (m, (m + 1) % 3, (m + 2) % 3)
    return np.transpose(t, perm).reshape(t.shape[m], -1, order="F")


def mode_refold(mat: np.ndarray, dims: tuple[int, int, int], mode: int) -> np.ndarray:
    """Inverse of :func:`mode_unfold` for a tensor of shape ``dims``."""
    mat = np.asarray(mat)
    m = _check_mode(mode)
    perm = (m, (m + 1) % 3, (m + 2) % 3)
    shape = tuple(dims[p] for p in perm)
    if mat.shape != (shape[0], shape[1] * shape[2]):
        raise ValueError(f"matrix shape {mat.shape} does not match dims {dims} for mode {mode}")
    t = mat.reshape(shape, order="F")
    return np.transpose(t, np.argsort(perm))


def mode_product(t: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    """Contract mode ``mode`` of ``t`` with the columns of matrix ``a``.

    ``a`` has shape ``(p, n_mode)``; the result replaces ``n_mode`` by ``p``.
    """
    m = _check_mode(mode)
    t = np.asarray(t)
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[1] != t.shape[m]:
        raise ValueError(f"matrix shape {a.shape} incompatible with tensor mode {mode} of size {t.shape[m]}")
    return np.moveaxis(np.tensordot(a, t, axes=(1, m)), 0, m)


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor plus one factor matrix per mode.

    ``core`` has shape ``(r1, r2, r3)`` and ``u``, ``v``, ``w`` have shapes
    ``(n1, r1)``, ``(n2, r2)``, ``(n3, r3)`` with ``r_s <= n_s``.
    """

    core: np.ndarray
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if self.core.ndim != 3:
            raise ValueError(f"core must be order-3, got ndim={self.core.ndim}")
        for name, f, r in (("u", self.u, 0), ("v", self.v, 1), ("w", self.w, 2)):
            if f.ndim != 2:
                raise ValueError(f"factor {name} must be a matrix, got ndim={f.ndim}")
            if f.shape[1] != self.core.shape[r]:
                raise ValueError(
                    f"factor {name} has {f.shape[1]} columns but core rank is {self.core.shape[r]}"
                )
            if f.shape[1] > f.shape[0]:
                raise ValueError(f"factor {name} has rank {f.shape[1]} exceeding dimension {f.shape[0]}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.u.shape[0], self.v.shape[0], self.w.shape[0])

    @property
    def ranks(self) -> tuple[int, int, int]:
        return self.core.shape


def tucker_assemble(f: TuckerFactors) -> np.ndarray:
    """Expand factors into the full tensor: core contracted with u, v, w."""
    t = mode_product(f.core, f.u, 1)
    t = mode_product(t, f.v, 2)
    return mode_product(t, f.w, 3)


def frobenius_norm(t: np.ndarray) -> float:
    """Square root of the sum of squared entries (any array shape)."""
    return float(np.linalg.norm(np.asarray(t).ravel()))


def sigma_r(m: np.ndarray, r: int) -> float:
    """The r-th largest singular value of a matrix (1-based r)."""
    m = np.asarray(m)
    if not 1 <= r <= min(m.shape):
        raise ValueError(f"r={r} out of range for shape {m.shape}")
    return float(np.linalg.svd(m, compute_uv=False)[r - 1])


def two_to_inf_norm(m: np.ndarray) -> float:
    """Largest Euclidean row norm of a matrix."""
    m = np.asarray(m)
    if m.shape[0] == 0:
        return 0.0
    return float(np.linalg.norm(m, axis=1).max())
