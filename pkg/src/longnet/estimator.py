"""Penalized Poisson likelihood over a partition and its projected gradient fit.

The model for the count tensor ``Y`` binned over a partition with interval
widths ``d_l`` is ``Y_ijl ~ Poisson(lambda0 * exp(m_ijl) * d_l)`` with ``m`` a
low Tucker-rank log-intensity tensor ``m = core x1 u x2 v x3 w``.  The fit
maximizes

    l(m) = sum_ijl { m_ijl * Y_ijl - lambda0 * exp(m_ijl) * d_l }

minus ``gamma`` times an orthogonality penalty on the factors, by simultaneous
gradient steps on (core, u, v, w) followed by projection onto a Frobenius ball
for the core and row-norm balls for the factors.  The factor steps are scaled
by their mode dimension (n1, n2, n3 times the base step), the core step by 1.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, replace

import numpy as np

from .baselines import hosvd
from .events import Partition
from .tensor import TuckerFactors, frobenius_norm, mode_product, mode_unfold, tucker_assemble, two_to_inf_norm

__all__ = [
    "PgdConfig",
    "FitResult",
    "EstimationError",
    "LOG_INTENSITY_CLAMP",
    "log_likelihood",
    "grad_m",
    "grad_factors",
    "regularizer",
    "reg_grads",
    "project",
    "default_radii",
    "initialize",
    "pgd_fit",
    "save_factors",
    "load_factors",
    "save_trace",
]

# exp() is evaluated on log-intensities clipped to this magnitude; a fit whose
# final iterate hits the clip is reported as an error rather than returned.
LOG_INTENSITY_CLAMP = 30.0


class EstimationError(RuntimeError):
    """Raised when the gradient fit diverges or leaves the trusted range."""


@dataclass(frozen=True)
class PgdConfig:
    """Optimization hyperparameters.

    ``None`` values are resolved at fit time: ``gamma`` defaults to
    ``n1*n2*n3*H*lambda0`` (H the mean interval width) and the constraint radii
    default to twice the corresponding norms of the initializer.  The base step
    is ``step_c / (n1*n2*n3*H)``; on divergence ``step_c`` is halved and the
    fit restarted, at most 10 times.
    """

    lambda0: float = 1.0
    gamma: float | None = None
    step_c: float = 0.1
    max_iters: int = 500
    tol: float = 1e-8
    c_s: float | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not self.step_c > 0:
            raise ValueError("step_c must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        for name in ("gamma", "c_s", "c1", "c2", "c3"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive when given")


@dataclass(frozen=True)
class FitResult:
    factors: TuckerFactors
    assembled: np.ndarray
    objective_trace: np.ndarray
    iters_run: int
    step_c_used: float


def _exp_clamped(m: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(m, -LOG_INTENSITY_CLAMP, LOG_INTENSITY_CLAMP))


def _check_shapes(m: np.ndarray, counts: np.ndarray, p: Partition) -> None:
    if m.shape != counts.shape:
        raise ValueError(f"log-intensity shape {m.shape} != counts shape {counts.shape}")
    if m.ndim != 3 or m.shape[2] != p.interval_count:
        raise ValueError(f"tensor mode-3 size {m.shape[2:]} != interval count {p.interval_count}")


def log_likelihood(m: np.ndarray, counts: np.ndarray, p: Partition, lambda0: float,
                   mask: np.ndarray | None = None) -> float:
    """Poisson log-likelihood of the counts, up to the Y!-term constant.

    ``mask`` (n1 x n2, 1 = observed) drops both the count and the exposure term
    of excluded node pairs.
    """
    m = np.asarray(m)
    _check_shapes(m, counts, p)
    terms = m * counts - lambda0 * _exp_clamped(m) * p.widths
    if mask is not None:
        terms = terms * np.asarray(mask)[:, :, None]
    return float(terms.sum())


def grad_m(m: np.ndarray, counts: np.ndarray, p: Partition, lambda0: float,
           mask: np.ndarray | None = None) -> np.ndarray:
    """Entrywise likelihood gradient ``Y_ijl - lambda0 * exp(m_ijl) * d_l``."""
    m = np.asarray(m)
    _check_shapes(m, counts, p)
    g = counts - lambda0 * _exp_clamped(m) * p.widths
    if mask is not None:
        g = g * np.asarray(mask)[:, :, None]
    return g


def _factor_grads_from_g(f: TuckerFactors, g: np.ndarray):
    """Chain rule of the entrywise gradient ``g`` through the Tucker map."""
    gs = mode_product(mode_product(mode_product(g, f.u.T, 1), f.v.T, 2), f.w.T, 3)
    b1 = mode_product(mode_product(g, f.v.T, 2), f.w.T, 3)
    gu = mode_unfold(b1, 1) @ mode_unfold(f.core, 1).T
    b2 = mode_product(mode_product(g, f.u.T, 1), f.w.T, 3)
    gv = mode_unfold(b2, 2) @ mode_unfold(f.core, 2).T
    b3 = mode_product(mode_product(g, f.u.T, 1), f.v.T, 2)
    gw = mode_unfold(b3, 3) @ mode_unfold(f.core, 3).T
    return gs, gu, gv, gw


def grad_factors(f: TuckerFactors, counts: np.ndarray, p: Partition, cfg: PgdConfig,
                 mask: np.ndarray | None = None):
    """Likelihood gradients with respect to (core, u, v, w)."""
    g = grad_m(tucker_assemble(f), counts, p, cfg.lambda0, mask=mask)
    return _factor_grads_from_g(f, g)


def _gram_defect(f: np.ndarray) -> np.ndarray:
    n, r = f.shape
    return f.T @ f / n - np.eye(r)


def regularizer(f: TuckerFactors) -> float:
    """Orthogonality penalty: quarter sum of squared Gram defects of u, v, w."""
    return 0.25 * sum(float(np.sum(_gram_defect(x) ** 2)) for x in (f.u, f.v, f.w))


def reg_grads(f: TuckerFactors):
    """The penalty terms used in the update: ``u @ (u'u/n1 - I)`` and analogues.

    These equal ``n_s`` times the true gradient of :func:`regularizer` with
    respect to each factor.
    """
    return tuple(x @ _gram_defect(x) for x in (f.u, f.v, f.w))


# norms within a few ulps of the radius count as inside, so reprojection is a
# bit-exact no-op
_PROJ_SLACK = 1.0 + 16 * np.finfo(np.float64).eps


def _scale_rows(x: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(norms > radius * _PROJ_SLACK, radius / norms, 1.0)
    return x * scale


def project(f: TuckerFactors, cfg: PgdConfig) -> TuckerFactors:
    """Radially project the core into its Frobenius ball and each factor row
    into its norm ball.  Idempotent; factors already inside are unchanged."""
    radii = (cfg.c_s, cfg.c1, cfg.c2, cfg.c3)
    if any(r is None for r in radii):
        raise ValueError("projection requires concrete radii; see default_radii")
    return _project(f, radii)


def _project(f: TuckerFactors, radii) -> TuckerFactors:
    c_s, c1, c2, c3 = radii
    core_norm = frobenius_norm(f.core)
    core = f.core if core_norm <= c_s * _PROJ_SLACK else f.core * (c_s / core_norm)
    return TuckerFactors(core, _scale_rows(f.u, c1), _scale_rows(f.v, c2), _scale_rows(f.w, c3))


def default_radii(f: TuckerFactors, slack: float = 2.0):
    """Constraint radii derived from an iterate with multiplicative slack."""
    return (slack * frobenius_norm(f.core), slack * two_to_inf_norm(f.u),
            slack * two_to_inf_norm(f.v), slack * two_to_inf_norm(f.w))


def _resolve(cfg: PgdConfig, init: TuckerFactors, dims, h: float) -> PgdConfig:
    updates = {}
    if cfg.gamma is None:
        updates["gamma"] = dims[0] * dims[1] * dims[2] * h * cfg.lambda0
    if any(getattr(cfg, k) is None for k in ("c_s", "c1", "c2", "c3")):
        c_s, c1, c2, c3 = default_radii(init)
        for key, val in (("c_s", c_s), ("c1", c1), ("c2", c2), ("c3", c3)):
            if getattr(cfg, key) is None:
                updates[key] = val
    return replace(cfg, **updates) if updates else cfg


def initialize(counts: np.ndarray, p: Partition, ranks, cfg: PgdConfig,
               alpha: float = 0.5, mask: np.ndarray | None = None) -> TuckerFactors:
    """Spectral initializer on a smoothed log transform of the counts.

    Computes ``Z = log((Y + alpha) / (lambda0 * d_l))``, takes its HOSVD at the
    requested ranks, rescales the factors so that ``u'u = n1*I`` (and likewise
    for v, w) with the scaling absorbed into the core, then projects into the
    constraint sets.  Masked node pairs are imputed with the per-interval mean
    of the observed values of ``Z`` before the HOSVD.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 3 or counts.shape[2] != p.interval_count:
        raise ValueError(f"counts shape {counts.shape} incompatible with partition of {p.interval_count}")
    n1, n2, n3 = counts.shape
    z = np.log((counts + alpha) / (cfg.lambda0 * p.widths))
    if mask is not None:
        obs = np.asarray(mask, dtype=bool)
        if not obs.any():
            raise ValueError("mask excludes every node pair")
        fill = z[obs, :].mean(axis=0)
        z[~obs, :] = fill
    f = hosvd(z, ranks)
    scale = np.sqrt([n1, n2, n3])
    core = f.core / scale.prod()
    init = TuckerFactors(core, f.u * scale[0], f.v * scale[1], f.w * scale[2])
    defaults = default_radii(init)
    radii = tuple(c if c is not None else d
                  for c, d in zip((cfg.c_s, cfg.c1, cfg.c2, cfg.c3), defaults))
    return _project(init, radii)


def pgd_fit(counts: np.ndarray, p: Partition, init: TuckerFactors, cfg: PgdConfig,
            mask: np.ndarray | None = None) -> FitResult:
    """Fit the log-intensity tensor by projected gradient ascent on the
    penalized likelihood.

    All four gradients of one iteration are evaluated at the iterate from the
    start of the iteration; each variable then takes its scaled step and is
    projected.  Stops after ``max_iters`` iterations or when the relative
    Frobenius change of the assembled tensor falls below ``tol``.  A divergent
    run (non-finite objective, or the log-intensity clamp binding) restarts
    with a halved step constant; after 10 halvings the failure is raised with
    the iteration index.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.shape != (init.dims[0], init.dims[1], init.dims[2]):
        raise ValueError(f"counts shape {counts.shape} != factor dims {init.dims}")
    _check_shapes(counts, counts, p)
    h = float(np.mean(p.widths))
    rcfg = _resolve(cfg, init, init.dims, h)
    radii = (rcfg.c_s, rcfg.c1, rcfg.c2, rcfg.c3)
    mask_arr = None if mask is None else np.asarray(mask, dtype=np.float64)

    step_c = rcfg.step_c
    last_failure = None
    for _ in range(11):
        result = _run_pgd(counts, p, _project(init, radii), rcfg, radii, step_c, mask_arr)
        if isinstance(result, FitResult):
            if np.max(np.abs(result.assembled)) >= LOG_INTENSITY_CLAMP:
                raise EstimationError(
                    f"log-intensity clamp at +/-{LOG_INTENSITY_CLAMP} binds at the returned iterate"
                )
            return result
        last_failure = result
        step_c /= 2.0
    raise EstimationError(
        f"objective non-finite or clamp exceeded at iteration {last_failure} "
        f"after 10 step halvings (final step_c {step_c})"
    )


def _run_pgd(counts, p, f, cfg, radii, step_c, mask):
    n1, n2, n3 = f.dims
    h = float(np.mean(p.widths))
    zeta = step_c / (n1 * n2 * n3 * h)
    widths = p.widths
    lam = cfg.lambda0
    gamma = cfg.gamma

    m = tucker_assemble(f)
    trace = []
    iters = 0
    grace = 10  # transient non-monotonicity right after the start is tolerated
    for r in range(cfg.max_iters):
        rates = lam * _exp_clamped(m) * widths
        terms = m * counts - rates
        if mask is not None:
            terms = terms * mask[:, :, None]
        objective = -float(terms.sum()) + gamma * regularizer(f)
        trace.append(objective)
        if not np.isfinite(objective) or np.max(np.abs(m)) >= LOG_INTENSITY_CLAMP:
            return r  # diverged at iteration r
        if r >= grace and objective > trace[0] + 1e-9 * (abs(trace[0]) + 1.0):
            return r  # oscillating above the starting objective: step too large
        g = counts - rates
        if mask is not None:
            g = g * mask[:, :, None]
        gs, gu, gv, gw = _factor_grads_from_g(f, g)
        ru, rv, rw = reg_grads(f)
        f = _project(
            TuckerFactors(
                f.core + zeta * gs,
                f.u + zeta * (n1 * gu - gamma * ru),
                f.v + zeta * (n2 * gv - gamma * rv),
                f.w + zeta * (n3 * gw - gamma * rw),
            ),
            radii,
        )
        m_new = tucker_assemble(f)
        iters = r + 1
        change = frobenius_norm(m_new - m)
        m = m_new
        if change <= cfg.tol * max(frobenius_norm(m), 1e-300):
            break

    rates = lam * _exp_clamped(m) * widths
    terms = m * counts - rates
    if mask is not None:
        terms = terms * mask[:, :, None]
    final = -float(terms.sum()) + gamma * regularizer(f)
    trace.append(final)
    if not np.isfinite(final) or (iters > grace and final > trace[0] + 1e-9 * (abs(trace[0]) + 1.0)):
        return iters
    return FitResult(f, m, np.asarray(trace), iters, step_c)


_FORMAT_TAG = "longnet-factors v1"


def save_factors(f: TuckerFactors, sink) -> None:
    """Serialize factors as text: version tag, dims, ranks, then the row-major
    matrices u, v, w and the core (one row per line)."""
    from .events import _fmt, _open_text

    fh, owned = _open_text(sink, "w")
    try:
        fh.write(_FORMAT_TAG + "\n")
        fh.write("dims " + " ".join(str(d) for d in f.dims) + "\n")
        fh.write("ranks " + " ".join(str(r) for r in f.ranks) + "\n")
        for name, mat in (("u", f.u), ("v", f.v), ("w", f.w)):
            fh.write(name + "\n")
            for row in mat:
                fh.write(" ".join(_fmt(x) for x in row) + "\n")
        fh.write("core\n")
        r1, r2, _ = f.ranks
        for a in range(r1):
            for b in range(r2):
                fh.write(" ".join(_fmt(x) for x in f.core[a, b, :]) + "\n")
    finally:
        if owned:
            fh.close()
        else:
            fh.flush()


def load_factors(source) -> TuckerFactors:
    from .events import _open_text

    fh, owned = _open_text(source, "r")
    try:
        lines = [ln.rstrip("\n") for ln in fh]
    finally:
        if owned:
            fh.close()
    if not lines or lines[0] != _FORMAT_TAG:
        raise ValueError(f"not a factor file (expected tag {_FORMAT_TAG!r})")
    if not lines[1].startswith("dims ") or not lines[2].startswith("ranks "):
        raise ValueError("malformed factor file header")
    dims = tuple(int(x) for x in lines[1].split()[1:])
    ranks = tuple(int(x) for x in lines[2].split()[1:])
    pos = 3
    mats = {}
    for name, rows, cols in (("u", dims[0], ranks[0]), ("v", dims[1], ranks[1]),
                             ("w", dims[2], ranks[2])):
        if lines[pos] != name:
            raise ValueError(f"expected section {name!r} at line {pos + 1}")
        pos += 1
        mats[name] = np.array([[float(x) for x in lines[pos + r].split()] for r in range(rows)])
        if mats[name].shape != (rows, cols):
            raise ValueError(f"section {name!r} has shape {mats[name].shape}, expected {(rows, cols)}")
        pos += rows
    if lines[pos] != "core":
        raise ValueError(f"expected section 'core' at line {pos + 1}")
    pos += 1
    core = np.empty(ranks)
    for a in range(ranks[0]):
        for b in range(ranks[1]):
            core[a, b, :] = [float(x) for x in lines[pos].split()]
            pos += 1
    return TuckerFactors(core, mats["u"], mats["v"], mats["w"])


def save_trace(trace: np.ndarray, sink) -> None:
    """Write the per-iteration penalized objective as ``iteration,objective`` CSV."""
    from .events import _fmt, _open_text

    fh, owned = _open_text(sink, "w")
    try:
        fh.write("iteration,objective\n")
        for k, val in enumerate(np.asarray(trace)):
            fh.write(f"{k},{_fmt(val)}\n")
    finally:
        if owned:
            fh.close()
        else:
            fh.flush()
