"""
Angle densities of ALE(alpha, eta) and of the Markov surrogate, their
adaptive tabulation and inverse-CDF sampling, and trajectory simulation.

The step-``k`` ALE density is proportional to
``|Phi_{k-1}'(exp(sigma + i theta))|^{-eta}`` on the window
``[theta_{k-1} - pi, theta_{k-1} + pi)``.  The Markov surrogate replaces
``Phi_{k-1}`` by one slit map of capacity ``c (k-1)`` centred at the previous
angle.  Densities are handled in log form and tabulated on an adaptively
bisected grid; the CDF at the nodes comes from the trapezoid rule and is
inverted piecewise linearly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .cluster import (
    AncestryAmbiguityError,
    ClusterState,
    append_particle,
    log_abs_deriv,
    omega_event,
    parent_of,
)
from .rng import make_generator
from .slitgeom import (
    DomainError,
    SlitParams,
    base_angle,
    capacity_from_length,
    length_from_capacity,
    slit_log_deriv,
    slit_logpolar,
)

log = logging.getLogger(__name__)

__all__ = [
    "CAPACITY_RULES",
    "ModelParams",
    "DensityTable",
    "Trajectory",
    "DensityError",
    "SimulationError",
    "build_density_ale",
    "build_density_markov",
    "single_slit_table",
    "uniform_table",
    "sample",
    "capacity_increment",
    "run_model",
    "density_moment",
]

CAPACITY_RULES = ("constant", "alpha-deriv", "equal-slit", "deriv-squared", "fixed-image-length")


class SimulationError(RuntimeError):
    """A step failed; ``partial`` holds the trajectory up to the last good step."""

    def __init__(self, message: str, step: int, partial: "Trajectory"):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.partial = partial


class DensityError(ArithmeticError):
    """Non-finite density value; ``theta`` is the offending angle."""

    def __init__(self, message: str, theta: float):
        super().__init__(f"{message} at theta={theta!r}")
        self.theta = theta


@dataclass
class ModelParams:
    """Parameters of one ALE or Markov run.

    Exactly one of ``sigma``/``gamma`` (``sigma = c**gamma``) and one of
    ``T``/``n`` must be given.
    """

    eta: float
    c: float
    model: str = "ale"
    alpha: float = 0.0
    sigma: Optional[float] = None
    gamma: Optional[float] = None
    T: Optional[float] = None
    n: Optional[int] = None
    capacity_rule: str = "constant"
    sigma_tilde: Optional[float] = None
    pin_theta1: bool = False
    seed: int = 0
    record_parents: bool = True
    max_particles: int = 1_000_000
    quad_rtol: float = 1e-4

    def __post_init__(self):
        if self.model not in ("ale", "markov"):
            raise DomainError(f"unknown model {self.model!r}")
        if not self.c > 0:
            raise DomainError("base capacity c must be > 0")
        if (self.sigma is None) == (self.gamma is None):
            raise DomainError("give exactly one of sigma and gamma")
        if (self.T is None) == (self.n is None):
            raise DomainError("give exactly one of T and n")
        if self.capacity_rule not in CAPACITY_RULES:
            raise DomainError(f"unknown capacity rule {self.capacity_rule!r}")
        if self.model == "markov" and self.capacity_rule != "constant":
            raise DomainError("the Markov model uses constant capacities")
        if self.alpha != 0 and self.capacity_rule == "constant":
            self.capacity_rule = "alpha-deriv"
        sig = self.sigma_value
        if sig < 0 or not math.isfinite(sig):
            raise DomainError("sigma must be finite and >= 0")
        # on the circle |Phi'| vanishes at tips and blows up at bases
        if sig == 0 and self.eta != 0:
            raise DomainError("sigma > 0 is required unless eta == 0")
        if self.T is not None and not self.T > 0:
            raise DomainError("T must be > 0")
        if self.n is not None and self.n < 0:
            raise DomainError("n must be >= 0")

    @property
    def sigma_value(self) -> float:
        return float(self.sigma) if self.sigma is not None else float(self.c ** self.gamma)

    @property
    def sigma_tilde_value(self) -> float:
        return self.sigma_value if self.sigma_tilde is None else float(self.sigma_tilde)

    @property
    def beta_c(self) -> float:
        return base_angle(self.c)

    def n_particles(self) -> Optional[int]:
        """Particle count when it is fixed in advance, else ``None``."""
        if self.n is not None:
            return int(self.n)
        if self.capacity_rule == "constant":
            return int(math.floor(self.T / self.c + 1e-9))
        return None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DensityTable:
    """Tabulated density on a window centred at ``centre``.

    ``density`` is normalised; ``log_Z`` is the log of the raw integral.
    """

    nodes: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    log_Z: float
    centre: float

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    @property
    def window(self) -> tuple[float, float]:
        return float(self.nodes[0]), float(self.nodes[-1])

    def shifted(self, centre: float) -> "DensityTable":
        d = centre - self.centre
        return DensityTable(self.nodes + d, self.density, self.cdf, self.log_Z, centre)


@dataclass
class Trajectory:
    """Result of one run; angles are unwrapped."""

    angles: np.ndarray
    capacities: np.ndarray
    cum_capacity: np.ndarray
    log_Z: np.ndarray
    parents: Optional[np.ndarray]
    omega: bool
    seed: object
    params: dict
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.angles.size)

    def cluster(self) -> ClusterState:
        return ClusterState.from_arrays(self.angles, self.capacities)


# ---------------------------------------------------------------------------
# tabulation


def uniform_table(centre: float = 0.0) -> DensityTable:
    return DensityTable(
        np.array([centre - np.pi, centre + np.pi]),
        np.full(2, 1.0 / (2 * np.pi)),
        np.array([0.0, 1.0]),
        math.log(2 * np.pi),
        centre,
    )


def _geometric_offsets(sigma: float, limit: float) -> np.ndarray:
    if sigma <= 0:
        return np.zeros(0)
    j = np.arange(0, max(1, int(np.ceil(np.log2(limit / sigma))) + 1))
    off = sigma * 2.0 ** j
    return off[off < limit]


def _seed_nodes(lo: float, hi: float, centre: float, sigma: float, extra=(), n_base: int = 256):
    base = np.linspace(lo, hi, n_base + 1)
    parts = [base]
    off = _geometric_offsets(sigma, hi - centre)
    parts += [centre + off, centre - off, [centre]]
    if sigma > 0:
        half = min(50 * sigma, hi - centre)
        h = sigma / 10
        m = int(np.floor(half / h))
        parts.append(centre + h * np.arange(-m, m + 1))
    for a in extra:
        a = lo + np.mod(a - lo, hi - lo)
        o = _geometric_offsets(sigma, 64 * sigma) if sigma > 0 else np.zeros(0)
        parts += [[a], a + o, a - o]
    x = np.concatenate([np.asarray(p, dtype=float) for p in parts])
    x = x[(x >= lo) & (x <= hi)]
    return np.unique(x)


def _adaptive(logf: Callable[[np.ndarray], np.ndarray], x: np.ndarray, min_width: float,
              rtol: float, mass_floor: float = 1e-10, max_nodes: int = 2_000_000):
    """Bisect trapezoid panels until each is resolved; returns (nodes, log values)."""
    lf = logf(x)
    ref = float(np.max(lf))
    todo = np.ones(x.size - 1, dtype=bool)
    while todo.any() and x.size < max_nodes:
        idx = np.flatnonzero(todo)
        a, b = x[idx], x[idx + 1]
        mid = 0.5 * (a + b)
        lm = logf(mid)
        ref_new = max(ref, float(np.max(lm)))
        ref = ref_new
        fa, fb, fm = np.exp(lf[idx] - ref), np.exp(lf[idx + 1] - ref), np.exp(lm - ref)
        h = b - a
        coarse = 0.5 * h * (fa + fb)
        fine = 0.25 * h * (fa + 2 * fm + fb)
        err = np.abs(coarse - fine)
        total = float(np.sum(0.5 * np.diff(x) * (np.exp(lf[:-1] - ref) + np.exp(lf[1:] - ref))))
        ok = (err <= rtol * fine) | (err <= mass_floor * total) | (h <= 2 * min_width)
        # insert all midpoints; unresolved panels split into two unresolved halves
        x = np.insert(x, idx + 1, mid)
        lf = np.insert(lf, idx + 1, lm)
        new_todo = np.zeros(x.size - 1, dtype=bool)
        pos = idx + np.arange(idx.size)
        bad = ~ok
        new_todo[pos[bad]] = True
        new_todo[pos[bad] + 1] = True
        todo = new_todo
    return x, lf


def _finish(x: np.ndarray, lf: np.ndarray, centre: float) -> DensityTable:
    if not np.all(np.isfinite(lf)):
        i = int(np.flatnonzero(~np.isfinite(lf))[0])
        raise DensityError("non-finite density", float(x[i]))
    ref = float(np.max(lf))
    f = np.exp(lf - ref)
    pan = 0.5 * np.diff(x) * (f[:-1] + f[1:])
    cum = np.concatenate([[0.0], np.cumsum(pan)])
    tot = cum[-1]
    cdf = cum / tot
    cdf[-1] = 1.0
    return DensityTable(x, f / tot, cdf, ref + math.log(tot), centre)


def _density_logf(eta: float, logd: Callable[[np.ndarray], np.ndarray]):
    def logf(th):
        v = logd(th)
        if not np.all(np.isfinite(v)):
            i = int(np.flatnonzero(~np.isfinite(v))[0])
            raise DensityError("non-finite |Phi'|", float(np.atleast_1d(th)[i]))
        return -eta * v

    return logf


def build_density_ale(state: ClusterState, params: ModelParams) -> DensityTable:
    """Tabulate the step-``n+1`` ALE density for the cluster ``state``."""
    centre = state.blocks[-1].theta if state.n else 0.0
    if state.n == 0 or params.eta == 0:
        return uniform_table(centre)
    sig = params.sigma_value
    lo, hi = centre - np.pi, centre + np.pi
    extra = [b.theta for b in state.blocks[:-1]]
    x0 = _seed_nodes(lo, hi, centre, sig, extra)
    logf = _density_logf(params.eta, lambda th: log_abs_deriv(state, np.full_like(th, sig), th))
    x, lf = _adaptive(logf, x0, 1e-3 * sig if sig > 0 else 1e-12, params.quad_rtol)
    return _finish(x, lf, centre)


@lru_cache(maxsize=4096)
def _markov_half(t: float, eta: float, sigma: float, rtol: float) -> DensityTable:
    p = SlitParams.from_capacity(t)

    def logd(th):
        s = np.full_like(th, sigma)
        s2, th2 = slit_logpolar(t, s, th, params=p)
        return slit_log_deriv(t, s, th, s2, th2, params=p)[0]

    x0 = _seed_nodes(-np.pi, np.pi, 0.0, sigma)
    x0 = x0[x0 >= 0]
    x, lf = _adaptive(_density_logf(eta, logd), x0, 1e-3 * sigma if sigma > 0 else 1e-12, rtol)
    xs = np.concatenate([-x[:0:-1], x])
    ls = np.concatenate([lf[:0:-1], lf])
    return _finish(xs, ls, 0.0)


def single_slit_table(t: float, eta: float, sigma: float, rtol: float = 1e-4) -> DensityTable:
    """Normalised ``|f_t'(exp(sigma + i theta))|^{-eta}`` centred at 0 (cached)."""
    if eta == 0:
        return uniform_table(0.0)
    return _markov_half(float(t), float(eta), float(sigma), float(rtol))


def build_density_markov(k: int, theta_prev: float, params: ModelParams) -> DensityTable:
    """Step-``k`` density of the Markov surrogate, mirrored about ``theta_prev``."""
    if k < 1:
        raise DomainError("step index k must be >= 1")
    if k == 1 or params.eta == 0:
        return uniform_table(theta_prev)
    tab = _markov_half(params.c * (k - 1), float(params.eta), params.sigma_value, params.quad_rtol)
    return tab.shifted(theta_prev)


def sample(table: DensityTable, u: float) -> float:
    """Piecewise-linear inverse CDF; ``u`` must lie in ``[0, 1)``."""
    if not 0.0 <= u < 1.0:
        raise DomainError(f"u={u!r} outside [0, 1)")
    cdf = table.cdf
    i = int(np.searchsorted(cdf, u, side="right")) - 1
    i = min(max(i, 0), cdf.size - 2)
    w = cdf[i + 1] - cdf[i]
    frac = (u - cdf[i]) / w if w > 0 else 0.0
    th = table.nodes[i] + frac * (table.nodes[i + 1] - table.nodes[i])
    return float(min(th, np.nextafter(table.nodes[-1], -np.inf)))


def density_moment(table: DensityTable, p: int, x: float) -> float:
    """``int_{|theta - centre| <= x} (theta - centre)^p`` times the density.

    The tabulated density is linear on each panel and integrated exactly.
    """
    if p not in (1, 2):
        raise DomainError("moment order must be 1 or 2")
    if not 0 < x <= np.pi:
        raise DomainError("window half-width must be in (0, pi]")
    r = table.nodes - table.centre
    f = table.density
    fl, fr = np.interp([-x, x], r, f)
    keep = (r > -x) & (r < x)
    rr = np.concatenate([[-x], r[keep], [x]])
    ff = np.concatenate([[fl], f[keep], [fr]])
    a, b = rr[:-1], rr[1:]
    fa, fb = ff[:-1], ff[1:]
    h = b - a
    slope = np.where(h > 0, (fb - fa) / np.where(h > 0, h, 1.0), 0.0)
    # exact int_a^b u^p (fa + slope (u - a)) du
    c0 = fa - slope * a
    ip = (b ** (p + 1) - a ** (p + 1)) / (p + 1)
    ip1 = (b ** (p + 2) - a ** (p + 2)) / (p + 2)
    terms = c0 * ip + slope * ip1
    if p == 1:
        # pair mirrored panels so symmetric tables give an exact zero
        return float(math.fsum(terms))
    return float(np.sum(terms))


# ---------------------------------------------------------------------------
# capacities and runs


def _log_abs_deriv_at(state: ClusterState, s: float, theta: float) -> float:
    if state.n == 0:
        return 0.0
    return float(log_abs_deriv(state, np.array([s]), np.array([theta]))[0])


def capacity_increment(state: ClusterState, theta: float, params: ModelParams) -> float:
    """Capacity of the next particle attached at ``theta``."""
    rule = params.capacity_rule
    c = params.c
    if rule == "constant":
        return c
    if rule == "alpha-deriv":
        return c * math.exp(-params.alpha * _log_abs_deriv_at(state, params.sigma_value, theta))
    if rule == "deriv-squared":
        return c * math.exp(-2.0 * _log_abs_deriv_at(state, params.sigma_tilde_value, theta))
    if rule == "equal-slit":
        C0 = state.total_capacity
        C1 = capacity_from_length(length_from_capacity(C0) + length_from_capacity(c))
        return C1 - C0
    # fixed-image-length
    dc = length_from_capacity(c)
    if state.n == 0:
        return c

    def g(d):
        return d * math.exp(_log_abs_deriv_at(state, math.log1p(d), theta)) - dc

    grid = dc * np.logspace(-12, 8, 201)
    prev = grid[0]
    gp = g(prev)
    if gp >= 0:
        raise ArithmeticError(f"fixed-image-length: no bracket, g>0 already at d={prev!r}")
    for d in grid[1:]:
        gd = g(d)
        if gd >= 0:
            dn = brentq(g, prev, d, xtol=1e-300, rtol=1e-12, maxiter=500)
            return capacity_from_length(dn)
        prev = d
    raise ArithmeticError(f"fixed-image-length: no sign change on [{grid[0]!r}, {grid[-1]!r}]")


def run_model(params: ModelParams, rng=None) -> Trajectory:
    """Simulate one trajectory of ALE(alpha, eta) or of the Markov surrogate.

    ``rng`` may be a ``numpy.random.Generator``, a seed, or ``None`` (use
    ``params.seed``).  Angles live in ``[theta_{k-1} - pi, theta_{k-1} + pi)``.
    """
    seed = params.seed if rng is None else rng
    gen = rng if isinstance(rng, np.random.Generator) else make_generator(seed)
    n_fixed = params.n_particles()
    limit = n_fixed if n_fixed is not None else params.max_particles
    T_stop = None if n_fixed is not None else params.T * (1 + 1e-9)
    state = ClusterState()
    angles, caps, logz = [], [], []
    diag = {"nodes": [], "ambiguous_parents": [], "truncated": False}
    try:
        while len(angles) < limit:
            k = len(angles) + 1
            if k == 1:
                u = gen.random()
                th = 0.0 if params.pin_theta1 else -np.pi + 2 * np.pi * u
                lz = math.log(2 * np.pi)
                diag["nodes"].append(2)
            else:
                if params.model == "markov":
                    tab = build_density_markov(k, angles[-1], params)
                else:
                    tab = build_density_ale(state, params)
                th = sample(tab, gen.random())
                lz = tab.log_Z
                diag["nodes"].append(int(tab.nodes.size))
            ck = capacity_increment(state, th, params)
            if T_stop is not None and state.total_capacity + ck > T_stop:
                break
            append_particle(state, th, ck)
            angles.append(th)
            caps.append(ck)
            logz.append(lz)
        else:
            if n_fixed is None:
                diag["truncated"] = True
    except (ArithmeticError, ValueError) as e:
        diag["error"] = repr(e)
        partial = _assemble(state, angles, caps, logz, params, seed, diag)
        raise SimulationError(str(e), len(angles) + 1, partial) from e
    return _assemble(state, angles, caps, logz, params, seed, diag)


def _assemble(state, angles, caps, logz, params, seed, diag) -> Trajectory:
    parents = None
    if params.record_parents:
        parents = np.empty(len(angles), dtype=int)
        for j in range(1, len(angles) + 1):
            try:
                parents[j - 1] = parent_of(state, j)
            except AncestryAmbiguityError as e:
                parents[j - 1] = -1
                diag["ambiguous_parents"].append((j, e.candidates))
    omega = omega_event(angles, params.beta_c)
    return Trajectory(
        np.asarray(angles), np.asarray(caps), np.asarray(state.cum_capacity), np.asarray(logz),
        parents, omega, _seed_repr(seed), params.to_dict(), diag,
    )


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": str(seed.entropy), "spawn_key": list(seed.spawn_key)}
    if isinstance(seed, np.random.Generator):
        return None
    return seed
