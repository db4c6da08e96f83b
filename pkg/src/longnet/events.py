"""Timestamped directed edges, partitions of the observation window, and binning.

An edge set is a collection of ``(i, j, t)`` triples on ``[0, T)`` with 1-based
node indices; multiplicity is allowed.  A partition is an increasing sequence of
breakpoints ending exactly at the horizon ``T``; interval ``l`` is the half-open
``[tau_{l-1}, tau_l)`` with the implicit ``tau_0 = 0``.  Binning an edge set over
a partition yields an ``(n1, n2, L)`` count tensor whose entries sum to the
number of edges.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EdgeSet",
    "Partition",
    "EdgeFormatError",
    "equal_partition",
    "bin_edges",
    "load_edges",
    "save_edges",
    "load_partition",
    "save_partition",
]


class EdgeFormatError(ValueError):
    """Malformed edge-list or partition file; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class EdgeSet:
    """Directed timestamped edges between ``n1`` out-nodes and ``n2`` in-nodes.

    ``i``/``j`` are 1-based integer arrays, ``t`` holds timestamps in
    ``[0, horizon)``.  Repeated pairs and repeated timestamps are allowed.
    """

    n1: int
    n2: int
    horizon: float
    i: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    j: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    t: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("node counts must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        t = np.asarray(self.t, dtype=np.float64)
        if not (i.shape == j.shape == t.shape) or i.ndim != 1:
            raise ValueError("edge arrays must be 1-D and of equal length")
        if i.size:
            if i.min() < 1 or i.max() > self.n1:
                raise ValueError(f"out-node index outside [1, {self.n1}]")
            if j.min() < 1 or j.max() > self.n2:
                raise ValueError(f"in-node index outside [1, {self.n2}]")
            if t.min() < 0 or t.max() >= self.horizon:
                raise ValueError(f"timestamp outside [0, {self.horizon})")
        object.__setattr__(self, "i", i)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "t", t)

    def __len__(self) -> int:
        return self.i.size


@dataclass(frozen=True)
class Partition:
    """Strictly increasing breakpoints ``0 < tau_1 < ... < tau_m = horizon``."""

    horizon: float
    breakpoints: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=np.float64)
        if bp.ndim != 1 or bp.size < 1:
            raise ValueError("a partition needs at least one breakpoint")
        if bp[0] <= 0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing and positive")
        if bp[-1] != self.horizon:
            raise ValueError(f"last breakpoint {bp[-1]} must equal horizon {self.horizon}")
        object.__setattr__(self, "breakpoints", bp)

    @property
    def interval_count(self) -> int:
        return self.breakpoints.size

    @property
    def left_endpoints(self) -> np.ndarray:
        return np.concatenate(([0.0], self.breakpoints[:-1]))

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints, prepend=0.0)

    @property
    def mean_width(self) -> float:
        return self.horizon / self.interval_count

    def interval_of(self, t: np.ndarray) -> np.ndarray:
        """0-based interval index of each timestamp (half-open intervals)."""
        return np.searchsorted(self.breakpoints, t, side="right")


def equal_partition(horizon: float, count: int) -> Partition:
    """Split ``[0, horizon)`` into ``count`` intervals of equal width."""
    if count < 1:
        raise ValueError(f"interval count must be >= 1, got {count}")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    return Partition(horizon, np.linspace(horizon / count, horizon, count))


def bin_edges(e: EdgeSet, p: Partition) -> np.ndarray:
    """Count edges per ``(i, j, interval)`` cell into an ``(n1, n2, L)`` tensor.

    Counts are returned as float64 holding exact integers so they compose with
    the rest of the tensor algebra.
    """
    if p.horizon != e.horizon:
        raise ValueError(f"partition horizon {p.horizon} != edge-set horizon {e.horizon}")
    L = p.interval_count
    shape = (e.n1, e.n2, L)
    if len(e) == 0:
        return np.zeros(shape)
    l_idx = p.interval_of(e.t)
    flat = ((e.i - 1) * e.n2 + (e.j - 1)) * L + l_idx
    counts = np.bincount(flat, minlength=e.n1 * e.n2 * L)
    return counts.reshape(shape).astype(np.float64)


def _fmt(x) -> str:
    """repr of a Python float: exact round trip, no numpy scalar prefix."""
    return repr(float(x))


def _open_text(source, mode: str):
    if isinstance(source, (str, os.PathLike)):
        return open(source, mode, encoding="utf-8"), True
    if isinstance(source, io.TextIOBase):
        return source, False
    # byte streams are wrapped; the caller keeps ownership
    return io.TextIOWrapper(source, encoding="utf-8"), False


def load_edges(source) -> EdgeSet:
    """Read an edge set from a path or stream.

    Format: ``#`` starts a comment; the first data line is
    ``n1=<int> n2=<int> T=<real>``; every following data line is ``i,j,t``.
    """
    fh, owned = _open_text(source, "r")
    try:
        header = None
        ii: list[int] = []
        jj: list[int] = []
        tt: list[float] = []
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if header is None:
                try:
                    fields = dict(part.split("=", 1) for part in line.split())
                    header = (int(fields["n1"]), int(fields["n2"]), float(fields["T"]))
                except (ValueError, KeyError) as exc:
                    raise EdgeFormatError(f"bad header {line!r}: {exc}", lineno) from exc
                if header[0] < 1 or header[1] < 1 or not header[2] > 0:
                    raise EdgeFormatError("header values out of range", lineno)
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise EdgeFormatError(f"expected 'i,j,t', got {line!r}", lineno)
            try:
                i, j, t = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise EdgeFormatError(str(exc), lineno) from exc
            n1, n2, horizon = header
            if not 1 <= i <= n1:
                raise EdgeFormatError(f"out-node index {i} outside [1, {n1}]", lineno)
            if not 1 <= j <= n2:
                raise EdgeFormatError(f"in-node index {j} outside [1, {n2}]", lineno)
            if not 0 <= t < horizon:
                raise EdgeFormatError(f"timestamp {t} outside [0, {horizon})", lineno)
            ii.append(i)
            jj.append(j)
            tt.append(t)
        if header is None:
            raise EdgeFormatError("missing header line 'n1=<int> n2=<int> T=<real>'")
        return EdgeSet(header[0], header[1], header[2], np.array(ii, dtype=np.int64),
                       np.array(jj, dtype=np.int64), np.array(tt, dtype=np.float64))
    finally:
        if owned:
            fh.close()


def save_edges(e: EdgeSet, sink) -> None:
    """Write an edge set in the format accepted by :func:`load_edges`."""
    fh, owned = _open_text(sink, "w")
    try:
        fh.write(f"n1={e.n1} n2={e.n2} T={_fmt(e.horizon)}\n")
        for i, j, t in zip(e.i, e.j, e.t):
            fh.write(f"{i},{j},{_fmt(t)}\n")
    finally:
        if owned:
            fh.close()
        else:
            fh.flush()


def load_partition(source) -> Partition:
    """Read a partition: a ``T=<real>`` line then one breakpoint per line."""
    fh, owned = _open_text(source, "r")
    try:
        horizon = None
        bps: list[float] = []
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if horizon is None:
                if not line.startswith("T="):
                    raise EdgeFormatError(f"expected 'T=<real>', got {line!r}", lineno)
                horizon = float(line[2:])
                continue
            bps.append(float(line))
        if horizon is None:
            raise EdgeFormatError("missing horizon line 'T=<real>'")
        try:
            return Partition(horizon, np.array(bps))
        except ValueError as exc:
            raise EdgeFormatError(str(exc)) from exc
    finally:
        if owned:
            fh.close()


def save_partition(p: Partition, sink) -> None:
    fh, owned = _open_text(sink, "w")
    try:
        fh.write(f"T={_fmt(p.horizon)}\n")
        for b in p.breakpoints:
            fh.write(_fmt(b) + "\n")
    finally:
        if owned:
            fh.close()
        else:
            fh.flush()
