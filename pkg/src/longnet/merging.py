"""Adaptive interval merging from an estimated temporal embedding.

Given the per-interval embedding rows (one row per small interval), the merge
step normalizes the rows, finds the best split of the row sequence into a given
number of contiguous segments (exact dynamic programming on within-segment sums
of squared deviations), picks the segment count by a penalized criterion
``loss / L + nu * S``, and maps segment boundaries back to time endpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MergeConfig",
    "MergeError",
    "OrderedPartitionResult",
    "normalize_w",
    "best_ordered_partition",
    "select_k",
    "default_nu",
    "default_k_max",
    "endpoints_from_segments",
    "write_segments_csv",
]


class MergeError(RuntimeError):
    pass


@dataclass(frozen=True)
class MergeConfig:
    """Merging hyperparameters.

    ``nu`` is the per-segment penalty; ``None`` defers to :func:`default_nu` at
    the call site that knows the problem size.  ``k_max`` bounds the segment
    count search; ``None`` defers to :func:`default_k_max`.  ``cond_tol`` is
    the relative eigenvalue floor for the normalization step.
    """

    nu: float | None = None
    k_max: int | None = None
    epsilon: float = 0.1
    cond_tol: float = 1e-12

    def __post_init__(self):
        if self.nu is not None and not self.nu > 0:
            raise ValueError("nu must be positive when given")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError("k_max must be >= 1 when given")
        if not self.cond_tol > 0:
            raise ValueError("cond_tol must be positive")


@dataclass(frozen=True)
class OrderedPartitionResult:
    """Contiguous segments of ``[1..L]`` (1-based, inclusive bounds), the
    minimized within-segment sum of squared deviations, and the segment end
    times."""

    segments: tuple[tuple[int, int], ...]
    loss: float
    endpoints: np.ndarray

    def __post_init__(self):
        last = 0
        for first, lo in self.segments:
            if first != last + 1 or lo < first:
                raise ValueError(f"segments not contiguous and ordered: {self.segments}")
            last = lo
        if np.any(np.diff(self.endpoints) <= 0):
            raise ValueError("endpoints must be strictly increasing")


def normalize_w(w_hat: np.ndarray, cond_tol: float = 1e-12) -> np.ndarray:
    """Rescale embedding rows so their Gram matrix equals ``L * I``.

    Returns ``sqrt(L) * W (W'W)^{-1/2}``.  Raises :class:`MergeError` with the
    condition number when ``W'W`` is numerically singular.
    """
    w = np.asarray(w_hat, dtype=np.float64)
    if w.ndim != 2:
        raise ValueError("expected an L x r matrix of embedding rows")
    big = w.shape[0]
    gram = w.T @ w
    lam, q = np.linalg.eigh(gram)
    if lam[0] <= cond_tol * lam[-1]:
        cond = math.inf if lam[0] <= 0 else lam[-1] / lam[0]
        raise MergeError(f"embedding Gram matrix near-singular (condition number {cond:.3e})")
    inv_sqrt = q @ np.diag(1.0 / np.sqrt(lam)) @ q.T
    return math.sqrt(big) * w @ inv_sqrt


class _SegmentCosts:
    """O(1) within-segment squared-deviation queries via prefix sums.

    Tiny negative values from cancellation are clamped to zero.
    """

    def __init__(self, rows: np.ndarray):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2:
            raise ValueError("expected an L x r matrix of rows")
        self.count = rows.shape[0]
        self._sum = np.zeros((self.count + 1, rows.shape[1]))
        np.cumsum(rows, axis=0, out=self._sum[1:])
        self._sq = np.concatenate(([0.0], np.cumsum((rows * rows).sum(axis=1))))

    def cost(self, first: int, last: int) -> float:
        """Deviation cost of rows ``first..last`` (0-based inclusive)."""
        m = last - first + 1
        s = self._sum[last + 1] - self._sum[first]
        val = self._sq[last + 1] - self._sq[first] - float(s @ s) / m
        return max(val, 0.0)


def _dp_tables(costs: _SegmentCosts, k_max: int):
    """Best loss for every prefix and segment count, with earliest-split ties.

    ``loss[s][i]`` is the optimal cost of splitting the first ``i`` rows into
    ``s`` segments; ``back[s][i]`` the start (0-based) of the last segment.
    """
    big = costs.count
    sums = costs._sum
    sq = costs._sq
    loss = np.full((k_max + 1, big + 1), np.inf)
    back = np.zeros((k_max + 1, big + 1), dtype=np.int64)
    loss[0, 0] = 0.0
    for s in range(1, k_max + 1):
        for i in range(s, big + 1):
            j = np.arange(s - 1, i)
            diff = sums[i] - sums[j]
            seg = sq[i] - sq[j] - (diff * diff).sum(axis=1) / (i - j)
            np.maximum(seg, 0.0, out=seg)
            vals = loss[s - 1, j] + seg
            idx = int(np.argmin(vals))  # first minimum -> earliest split point
            loss[s, i] = vals[idx]
            back[s, i] = j[idx]
    return loss, back


def best_ordered_partition(rows: np.ndarray, k: int, delta_width: float = 1.0,
                           horizon: float | None = None) -> OrderedPartitionResult:
    """Exact optimal split of the row sequence into ``k`` contiguous segments.

    Minimizes the total within-segment sum of squared deviations from segment
    means over all ordered partitions; ties between split points resolve to the
    earliest.  ``delta_width`` and ``horizon`` control the endpoint times
    (defaults give index-scale endpoints).
    """
    rows = np.asarray(rows, dtype=np.float64)
    big = rows.shape[0]
    if not 1 <= k <= big:
        raise ValueError(f"segment count {k} out of range [1, {big}]")
    costs = _SegmentCosts(rows)
    loss, back = _dp_tables(costs, k)
    bounds = []
    i = big
    for s in range(k, 0, -1):
        j = int(back[s, i])
        bounds.append((j + 1, i))
        i = j
    segments = tuple(reversed(bounds))
    endpoints = endpoints_from_segments(segments, delta_width,
                                        big * delta_width if horizon is None else horizon)
    return OrderedPartitionResult(segments, float(loss[k, big]), endpoints)


def default_k_max(interval_count: int, cap: int = 25) -> int:
    return min(interval_count, math.ceil(interval_count / 2), cap)


def select_k(rows: np.ndarray, cfg: MergeConfig) -> int:
    """Segment count minimizing ``loss(S)/L + nu * S`` over ``S in 1..k_max``.

    Ties break toward the smaller count.  ``cfg.nu`` must be resolved (use
    :func:`default_nu` when no explicit penalty is configured).
    """
    if cfg.nu is None:
        raise ValueError("cfg.nu must be resolved before select_k; see default_nu")
    rows = np.asarray(rows, dtype=np.float64)
    big = rows.shape[0]
    k_max = cfg.k_max if cfg.k_max is not None else default_k_max(big)
    if not 1 <= k_max <= big:
        raise ValueError(f"k_max {k_max} out of range [1, {big}]")
    loss, _ = _dp_tables(_SegmentCosts(rows), k_max)
    best_k = 1
    best_val = np.inf
    for s in range(1, k_max + 1):
        val = loss[s, big] / big + cfg.nu * s
        if val < best_val:
            best_val = val
            best_k = s
    return best_k


def default_nu(n: int, horizon: float, interval_count: int | None = None,
               epsilon: float = 0.1) -> float:
    """Per-segment penalty guideline as a function of problem size.

    Uses ``log^{3/4+eps/2}(nT) / (sqrt(n) T^{1/4})`` when ``T >= n^2/log(nT)``
    and ``log^{1/4+eps/2}(nT) / (sqrt(n) T^{1/4})`` otherwise.  The interval
    count is accepted for interface parity with the interval-count guideline
    but does not enter the formulas.
    """
    if n < 2 or not horizon > 1:
        raise ValueError("requires n >= 2 and horizon > 1")
    log_nt = math.log(n * horizon)
    exponent = (0.75 if horizon >= n * n / log_nt else 0.25) + epsilon / 2.0
    return log_nt ** exponent / (math.sqrt(n) * horizon ** 0.25)


def endpoints_from_segments(segments, delta_width: float, horizon: float) -> np.ndarray:
    """Map segment last-indices to time endpoints; the final endpoint is the
    horizon exactly."""
    ends = np.array([last * delta_width for _, last in segments], dtype=np.float64)
    if ends.size:
        ends[-1] = horizon
    return ends


def write_segments_csv(result: OrderedPartitionResult, costs_rows: np.ndarray, sink) -> None:
    """CSV rows: segment index, first interval index, last index, endpoint, loss."""
    from .events import _fmt, _open_text

    costs = _SegmentCosts(costs_rows)
    fh, owned = _open_text(sink, "w")
    try:
        fh.write("segment,first,last,endpoint,loss\n")
        for k, ((first, last), end) in enumerate(zip(result.segments, result.endpoints), start=1):
            fh.write(f"{k},{first},{last},{_fmt(end)},{_fmt(costs.cost(first - 1, last - 1))}\n")
    finally:
        if owned:
            fh.close()
        else:
            fh.flush()
