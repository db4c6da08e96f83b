"""Synthetic longitudinal networks with piecewise-constant temporal structure.

The generator draws a low-rank log-intensity truth: node factors with exactly
orthogonal columns scaled to ``u'u = n*I``, a piecewise-constant temporal
factor whose width-weighted Gram matrix equals ``T*I``, and a diagonal core.
Edges are then sampled from independent per-cell Poisson counts with uniform
timestamps inside each true interval.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .estimator import LOG_INTENSITY_CLAMP, load_factors, save_factors
from .events import EdgeSet, Partition, load_partition, save_partition
from .tensor import TuckerFactors, tucker_assemble, two_to_inf_norm

__all__ = [
    "SyntheticConfig",
    "GroundTruth",
    "GenerationError",
    "generate_truth",
    "sample_edges",
    "estimation_error",
    "expand_truth",
    "masked_prediction_error",
    "truth_radius_floor",
    "save_truth",
    "load_truth",
]


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    """Ground-truth generator settings (square networks, ``n1 = n2 = n``)."""

    n: int
    horizon: float
    ranks: tuple[int, int, int] = (3, 3, 3)
    k0: int = 3
    diag_s: float = 0.5
    lambda0: float = 1.0
    seed: int = 0
    max_length_ratio: float = 3.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.k0 < 1:
            raise ValueError("k0 must be >= 1")
        if self.max_length_ratio < 1:
            raise ValueError("max_length_ratio must be >= 1")
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")


@dataclass(frozen=True)
class GroundTruth:
    """True factors, true interval partition, and the per-interval
    log-intensity tensor (n x n x k0)."""

    factors: TuckerFactors
    eta: Partition
    theta: np.ndarray
    config: SyntheticConfig


def _random_intervals(rng: np.random.Generator, horizon: float, k0: int,
                      max_ratio: float, cap: int = 10000) -> np.ndarray:
    if k0 == 1:
        return np.array([horizon])
    for _ in range(cap):
        pts = np.sort(rng.uniform(0.0, horizon, size=k0 - 1))
        widths = np.diff(pts, prepend=0.0, append=horizon)
        if widths.min() > 0 and widths.max() <= max_ratio * widths.min():
            return np.append(pts, horizon)
    raise GenerationError(
        f"no interval draw satisfied the length-ratio bound {max_ratio} in {cap} tries"
    )


def _scaled_orthogonal(rng: np.random.Generator, n: int, r: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return math.sqrt(n) * q


def _weighted_whitened(rng: np.random.Generator, widths: np.ndarray, r: int,
                       horizon: float) -> np.ndarray:
    """Rows w_k with ``sum_k width_k * w_k w_k' = horizon * I_r``."""
    k0 = widths.size
    for _ in range(100):
        a = rng.standard_normal((k0, r))
        gram = a.T @ (widths[:, None] * a)
        lam, q = np.linalg.eigh(gram)
        if lam[0] > 1e-10 * lam[-1]:
            inv_sqrt = q @ np.diag(1.0 / np.sqrt(lam)) @ q.T
            return math.sqrt(horizon) * a @ inv_sqrt
    raise GenerationError("could not draw a well-conditioned temporal factor")


def generate_truth(cfg: SyntheticConfig) -> GroundTruth:
    """Draw a ground truth satisfying the generator's orthogonality conditions.

    Requires ``k0 >= r3`` so the width-weighted Gram condition on the temporal
    factor is satisfiable.
    """
    r1, r2, r3 = cfg.ranks
    if cfg.k0 < r3:
        raise GenerationError(f"k0={cfg.k0} < r3={r3}: temporal Gram condition infeasible")
    if max(r1, r2) > cfg.n:
        raise GenerationError(f"ranks {cfg.ranks} exceed n={cfg.n}")
    rng = np.random.default_rng(cfg.seed)
    breakpoints = _random_intervals(rng, cfg.horizon, cfg.k0, cfg.max_length_ratio)
    eta = Partition(cfg.horizon, breakpoints)
    u = _scaled_orthogonal(rng, cfg.n, r1)
    v = _scaled_orthogonal(rng, cfg.n, r2)
    w = _weighted_whitened(rng, eta.widths, r3, cfg.horizon)
    core = np.zeros((r1, r2, r3))
    for a in range(min(r1, r2, r3)):
        core[a, a, a] = cfg.diag_s
    factors = TuckerFactors(core, u, v, w)
    theta = tucker_assemble(factors)
    if np.max(np.abs(theta)) > LOG_INTENSITY_CLAMP:
        warnings.warn("ground-truth log-intensity magnitude exceeds the sampling clamp",
                      stacklevel=2)
    return GroundTruth(factors, eta, theta, cfg)


def sample_edges(gt: GroundTruth, lambda0: float, seed: int) -> EdgeSet:
    """Sample one edge set: per-cell Poisson counts with mean
    ``lambda0 * exp(theta) * width``, timestamps uniform inside each interval."""
    if np.max(gt.theta) > LOG_INTENSITY_CLAMP:
        raise GenerationError(
            f"log-intensity exceeds {LOG_INTENSITY_CLAMP}; expected counts overflow"
        )
    rng = np.random.default_rng(seed)
    widths = gt.eta.widths
    rates = lambda0 * np.exp(gt.theta) * widths
    counts = rng.poisson(rates)
    total = int(counts.sum())
    n1, n2, k0 = counts.shape
    flat = counts.ravel()
    cells = np.repeat(np.arange(flat.size), flat)
    i_idx, j_idx, k_idx = np.unravel_index(cells, counts.shape)
    lows = gt.eta.left_endpoints[k_idx]
    highs = gt.eta.breakpoints[k_idx]
    t = lows + rng.random(total) * (highs - lows)
    # uniform(a, b) can round up to b; keep timestamps strictly inside
    t = np.minimum(t, np.nextafter(highs, lows))
    return EdgeSet(n1, n2, gt.eta.horizon, i_idx + 1, j_idx + 1, t)


def estimation_error(m_hat: np.ndarray, m_star: np.ndarray) -> float:
    """Squared Frobenius distance divided by the number of entries."""
    m_hat = np.asarray(m_hat)
    m_star = np.asarray(m_star)
    if m_hat.shape != m_star.shape:
        raise ValueError(f"shape mismatch: {m_hat.shape} vs {m_star.shape}")
    return float(np.mean((m_hat - m_star) ** 2))


def expand_truth(gt: GroundTruth, p: Partition) -> np.ndarray:
    """Evaluate the true log-intensity on another partition, each slice taking
    the true interval containing its left endpoint."""
    if p.horizon > gt.eta.horizon:
        raise ValueError(f"partition horizon {p.horizon} exceeds truth horizon {gt.eta.horizon}")
    seg = np.searchsorted(gt.eta.breakpoints, p.left_endpoints, side="right")
    return gt.theta[:, :, seg]


def masked_prediction_error(counts_true: np.ndarray, counts_pred: np.ndarray,
                            mask: np.ndarray) -> float:
    """Relative Frobenius error of predicted pair totals on the masked cells."""
    counts_true = np.asarray(counts_true, dtype=np.float64)
    counts_pred = np.asarray(counts_pred, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if not counts_true.shape == counts_pred.shape == mask.shape:
        raise ValueError("counts and mask shapes must agree")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ValueError("mask must be binary")
    denom = np.linalg.norm(counts_true * mask)
    if denom == 0:
        raise ValueError("masked true counts are all zero")
    return float(np.linalg.norm((counts_true - counts_pred) * mask) / denom)


def truth_radius_floor(gt: GroundTruth) -> tuple[float, float, float, float]:
    """Smallest constraint radii under which the truth respects the norm bounds
    assumed by the error analysis (reported, never enforced).

    The core and temporal bounds carry the factors ``max(2, (k0*d_min)^{-1/2})``
    and ``max(2, sqrt(k0*d_max))`` induced by the normalization step.
    """
    widths = gt.eta.widths / gt.eta.horizon
    k0 = widths.size
    core_factor = max(2.0, 1.0 / math.sqrt(k0 * widths.min()))
    w_factor = max(2.0, math.sqrt(k0 * widths.max()))
    f = gt.factors
    return (
        float(np.linalg.norm(f.core) * core_factor),
        two_to_inf_norm(f.u),
        two_to_inf_norm(f.v),
        two_to_inf_norm(f.w) * w_factor,
    )


def save_truth(gt: GroundTruth, outdir) -> None:
    """Write factors, the true partition, and a key=value manifest."""
    os.makedirs(outdir, exist_ok=True)
    save_factors(gt.factors, os.path.join(outdir, "truth_factors.txt"))
    save_partition(gt.eta, os.path.join(outdir, "truth_partition.txt"))
    cfg = gt.config
    with open(os.path.join(outdir, "truth_manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"n = {cfg.n}\n")
        fh.write(f"horizon = {cfg.horizon!r}\n")
        fh.write(f"ranks = {cfg.ranks[0]},{cfg.ranks[1]},{cfg.ranks[2]}\n")
        fh.write(f"k0 = {cfg.k0}\n")
        fh.write(f"diag_s = {cfg.diag_s!r}\n")
        fh.write(f"lambda0 = {cfg.lambda0!r}\n")
        fh.write(f"seed = {cfg.seed}\n")
        fh.write(f"max_length_ratio = {cfg.max_length_ratio!r}\n")


def load_truth(outdir) -> GroundTruth:
    factors = load_factors(os.path.join(outdir, "truth_factors.txt"))
    eta = load_partition(os.path.join(outdir, "truth_partition.txt"))
    fields: dict[str, str] = {}
    with open(os.path.join(outdir, "truth_manifest.txt"), encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, val = line.partition("=")
                fields[key.strip()] = val.strip()
    cfg = SyntheticConfig(
        n=int(fields["n"]),
        horizon=float(fields["horizon"]),
        ranks=tuple(int(x) for x in fields["ranks"].split(",")),
        k0=int(fields["k0"]),
        diag_s=float(fields["diag_s"]),
        lambda0=float(fields["lambda0"]),
        seed=int(fields["seed"]),
        max_length_ratio=float(fields["max_length_ratio"]),
    )
    return GroundTruth(factors, eta, tucker_assemble(factors), cfg)
