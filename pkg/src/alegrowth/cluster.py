"""
Aggregate maps built from rotated slit maps.

``Phi_n = f_1 o f_2 o ... o f_n`` with ``f_k(z) = e^{i theta_k} f_{c_k}(e^{-i theta_k} z)``.
Points are pushed through the blocks innermost-first in log-polar form, and
the log-derivative is accumulated along the same orbit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Sequence

import numpy as np

from .slitgeom import (
    DomainError,
    LogPolarPoint,
    SingularityError,
    SlitParams,
    slit_log_deriv,
    slit_logpolar,
    wrap_angle,
)

__all__ = [
    "BuildingBlock",
    "ClusterState",
    "AncestryAmbiguityError",
    "MIN_CAPACITY",
    "append_particle",
    "orbit",
    "map_point",
    "map_deriv",
    "map_with_deriv",
    "log_abs_deriv",
    "prefix_maps",
    "parent_of",
    "omega_event",
    "boundary_trace",
    "BoundaryTrace",
]

# below this the slit length is under double-precision resolution of the circle
MIN_CAPACITY = 1e-14


class AncestryAmbiguityError(RuntimeError):
    """Two candidate parents lie within tolerance of the attachment point."""

    def __init__(self, j: int, candidates: tuple[int, int]):
        super().__init__(f"particle {j}: ambiguous parent, candidates {candidates}")
        self.j = j
        self.candidates = candidates


@dataclass(frozen=True)
class BuildingBlock:
    """One particle: attachment angle (unwrapped) and slit parameters."""

    theta: float
    c: float
    d: float
    beta: float

    @classmethod
    def make(cls, theta: float, c: float) -> "BuildingBlock":
        p = SlitParams.from_capacity(c)
        return cls(float(theta), p.t, p.d, p.beta)

    @property
    def params(self) -> SlitParams:
        return SlitParams(self.c, self.d, self.beta)


@dataclass
class ClusterState:
    """Ordered building blocks with compensated cumulative capacities.

    ``cum_capacity[k-1]`` is ``C_k``.  States grow through
    :func:`append_particle`; evaluation never mutates them.
    """

    blocks: List[BuildingBlock] = field(default_factory=list)
    cum_capacity: List[float] = field(default_factory=list)
    _sum: float = 0.0
    _comp: float = 0.0
    _params: List[SlitParams] = field(default_factory=list, repr=False)

    @classmethod
    def from_arrays(cls, thetas: Iterable[float], caps: Iterable[float]) -> "ClusterState":
        st = cls()
        for th, c in zip(thetas, caps):
            append_particle(st, th, c)
        return st

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def total_capacity(self) -> float:
        return self.cum_capacity[-1] if self.cum_capacity else 0.0

    @property
    def thetas(self) -> np.ndarray:
        return np.array([b.theta for b in self.blocks])

    @property
    def capacities(self) -> np.ndarray:
        return np.array([b.c for b in self.blocks])

    def prefix(self, k: int) -> "ClusterState":
        """State made of the first ``k`` blocks."""
        st = ClusterState()
        for b in self.blocks[:k]:
            append_particle(st, b.theta, b.c)
        return st


def append_particle(state: ClusterState, theta: float, c: float) -> ClusterState:
    """Append a block in place and return the same state."""
    if not np.isfinite(theta):
        raise DomainError("attachment angle must be finite")
    if not c > 0 or not np.isfinite(c):
        raise DomainError(f"capacity increment must be finite and > 0, got {c!r}")
    if c < MIN_CAPACITY:
        raise DomainError(f"capacity increment {c!r} below {MIN_CAPACITY}")
    blk = BuildingBlock.make(theta, c)
    state.blocks.append(blk)
    state._params.append(blk.params)
    # Neumaier summation
    t = state._sum + c
    if abs(state._sum) >= abs(c):
        state._comp += (state._sum - t) + c
    else:
        state._comp += (c - t) + state._sum
    state._sum = t
    state.cum_capacity.append(state._sum + state._comp)
    return state


def _as_arrays(z):
    if isinstance(z, LogPolarPoint):
        return np.asarray(z.s, dtype=float), np.asarray(z.theta, dtype=float)
    zp = LogPolarPoint.from_complex(z)
    return np.asarray(zp.s, dtype=float), np.asarray(zp.theta, dtype=float)


def orbit(state: ClusterState, s, th, upto: int | None = None, deriv: bool = True):
    """Push ``exp(s + i th)`` through ``f_upto, ..., f_1``.

    Returns ``(s_out, th_out, logd_re, logd_im)``; the derivative parts are
    ``None`` when ``deriv`` is false.  Raises :class:`SingularityError` with the
    offending block index if a base point is hit.
    """
    n = state.n if upto is None else upto
    s = np.array(s, dtype=float, copy=True)
    th = wrap_angle(np.asarray(th, dtype=float))
    s, th = np.broadcast_arrays(s, th)
    s = s.copy()
    th = th.copy()
    lre = np.zeros_like(s) if deriv else None
    lim = np.zeros_like(s) if deriv else None
    for k in range(n - 1, -1, -1):
        blk = state.blocks[k]
        p = state._params[k]
        a = wrap_angle(th - blk.theta)
        s2, a2 = slit_logpolar(p.t, s, a, params=p)
        if deriv:
            dr, di = slit_log_deriv(p.t, s, a, s2, a2, params=p)
            if np.any(np.isposinf(dr)) or np.any(np.isnan(dr)):
                raise SingularityError(f"singular derivative in block {k + 1}", index=k + 1)
            lre += dr
            lim += di
        s = s2
        th = wrap_angle(a2 + blk.theta)
    return s, th, lre, lim


def map_with_deriv(state: ClusterState, z, upto: int | None = None):
    """``(Phi(z), Phi'(z))`` from one shared orbit."""
    s, th = _as_arrays(z)
    s2, th2, lre, lim = orbit(state, s, th, upto)
    w = np.exp(s2 + 1j * th2)
    dw = np.exp(lre + 1j * lim)
    if w.ndim == 0:
        return complex(w), complex(dw)
    return w, dw


def map_point(state: ClusterState, z, upto: int | None = None):
    """``Phi_n(z)`` (or ``Phi_upto``)."""
    s, th = _as_arrays(z)
    s2, th2, _, _ = orbit(state, s, th, upto, deriv=False)
    w = np.exp(s2 + 1j * th2)
    return complex(w) if w.ndim == 0 else w


def map_deriv(state: ClusterState, z, upto: int | None = None):
    """``Phi_n'(z)`` by the chain rule along the forward orbit."""
    return map_with_deriv(state, z, upto)[1]


def log_abs_deriv(state: ClusterState, s, th, upto: int | None = None) -> np.ndarray:
    """``log |Phi'(exp(s + i th))|`` for arrays of angles."""
    return orbit(state, s, th, upto)[2]


def prefix_maps(state: ClusterState, z) -> np.ndarray:
    """``Phi_k(z)`` for ``k = 1..n``; row ``k-1`` holds ``Phi_k``."""
    s, th = _as_arrays(z)
    out = np.empty((state.n,) + np.shape(s), dtype=complex)
    for k in range(1, state.n + 1):
        s2, th2, _, _ = orbit(state, s, th, upto=k, deriv=False)
        out[k - 1] = np.exp(s2 + 1j * th2)
    return out


def _circle_step(blk: BuildingBlock, p: SlitParams, th: float):
    """Apply one block to ``e^{i th}``; returns (local angle, image s, image angle)."""
    a = float(wrap_angle(th - blk.theta))
    s2, a2 = slit_logpolar(p.t, 0.0, a, params=p)
    return a, float(s2), float(a2)


def _land(state: ClusterState, th: float, start: int, tol: float, j: int) -> int:
    """Follow ``e^{i th}`` down from stage ``start``; index of the slit it lands on."""
    for k in range(start, 0, -1):
        blk = state.blocks[k - 1]
        a, s2, a2 = _circle_step(blk, state._params[k - 1], th)
        margin = tol * blk.d
        if abs(a) < blk.beta:
            if np.expm1(s2) <= margin:
                other = _land(state, blk.theta, k - 1, tol, j)
                if other != k:
                    raise AncestryAmbiguityError(j, (k, other))
            return k
        if abs(a2) <= margin:
            other = _land(state, blk.theta + a2, k - 1, tol, j)
            if other != k:
                raise AncestryAmbiguityError(j, (k, other))
        th = blk.theta + a2
    return 0


def parent_of(state: ClusterState, j: int, tol: float = 1e-6) -> int:
    """Index of the particle (0 for the disk) on which particle ``j`` is based.

    The base point ``e^{i theta_j}`` is pushed through ``f_{j-1}, f_{j-2}, ...``
    on the unit circle.  It lands on slit ``k`` when its local angle falls in
    the open base arc ``(-beta_k, beta_k)``.  Landings within ``tol * d_k`` of a
    slit base raise :class:`AncestryAmbiguityError` if the two readings differ.
    """
    if not 1 <= j <= state.n:
        raise DomainError(f"particle index {j} outside 1..{state.n}")
    return _land(state, state.blocks[j - 1].theta, j - 1, tol, j)


def omega_event(angles: Sequence[float], beta_c: float) -> bool:
    """True iff every consecutive angle gap is strictly below ``beta_c``."""
    a = np.asarray(angles, dtype=float)
    if a.size < 2:
        return True
    return bool(np.all(np.abs(np.diff(a)) < beta_c))


@dataclass
class BoundaryTrace:
    """Closed polyline of boundary images; ``flagged`` lists perturbed angles."""

    theta: np.ndarray
    points: np.ndarray
    flagged: list

    @property
    def scale(self) -> float:
        return float(np.ptp(self.points.real) + np.ptp(self.points.imag))


def _trace_eval(state: ClusterState, th: np.ndarray, flagged: list) -> np.ndarray:
    w = map_point(state, LogPolarPoint(np.zeros_like(th), th))
    w = np.atleast_1d(w)
    bad = ~np.isfinite(w)
    if bad.any():
        for i in np.flatnonzero(bad):
            flagged.append(float(th[i]))
            t2 = th[i] + 1e-12
            w[i] = complex(map_point(state, LogPolarPoint(0.0, t2)))
    return w


def boundary_trace(
    state: ClusterState,
    target_points: int = 512,
    refine_tol: float = 0.01,
    max_depth: int = 30,
    max_points: int = 200_000,
) -> BoundaryTrace:
    """Adaptive polyline of ``Phi_n(e^{i theta})`` closing on itself.

    Panels are bisected while the image chord exceeds ``refine_tol`` times the
    current image extent, up to ``max_depth`` halvings.
    """
    th = np.linspace(-np.pi, np.pi, target_points + 1)
    if state.n == 0:
        pts = np.exp(1j * th)
        pts[-1] = pts[0]
        return BoundaryTrace(th, pts, [])
    # seed the attachment angles and their base arcs
    extra = [b.theta + e * b.beta for b in state.blocks for e in (-1.0, 0.0, 1.0)]
    th = np.unique(np.concatenate([th, wrap_angle(np.array(extra))]))
    th = th[(th >= -np.pi) & (th <= np.pi)]
    th = np.unique(np.concatenate([[-np.pi], th, [np.pi]]))
    flagged: list = []
    w = _trace_eval(state, th, flagged)
    min_gap = 2 * np.pi / target_points / 2.0**max_depth
    while th.size < max_points:
        scale = max(np.ptp(w.real), np.ptp(w.imag))
        chord = np.abs(np.diff(w))
        split = (chord > refine_tol * scale) & (np.diff(th) > 2 * min_gap)
        if not split.any():
            break
        idx = np.flatnonzero(split)
        idx = idx[: max(1, max_points - th.size)]
        mid = 0.5 * (th[idx] + th[idx + 1])
        wm = _trace_eval(state, mid, flagged)
        th = np.insert(th, idx + 1, mid)
        w = np.insert(w, idx + 1, wm)
    w[-1] = w[0]
    return BoundaryTrace(th, w, flagged)
