"""
Reverse-time radial Loewner flow for piecewise-constant drivers.

The reverse flow ``du/dt = -u (e^{i Xi} + u)/(e^{i Xi} - u)`` with
``Xi_t = xi_{T-t}`` satisfies ``u_T(z) = Psi_T(z)``.  It is integrated in the
variables ``(log r, vartheta, log y)`` where ``y = du_t/dz``, restarting at
every jump of the driver.  With the driver of a cluster it reproduces the
composed slit maps, which makes it the independent oracle for
:mod:`alegrowth.cluster`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .slitgeom import (
    DomainError,
    LogPolarPoint,
    expm1_complex,
    slit_map_deriv,
    wrap_angle,
)

__all__ = [
    "DrivingFunction",
    "LoewnerIntegrationError",
    "reverse_flow",
    "reverse_flow_deriv",
    "reverse_flow_logpolar",
    "reference_radial",
    "reference_angular",
    "angular_lifetime",
    "TipReport",
    "AwayReport",
    "check_tip_estimate",
    "check_away_estimate",
    "deriv_ratio_monitor",
    "continuity_check",
    "SCREEN_A",
]

SCREEN_A = 100.0


class LoewnerIntegrationError(ArithmeticError):
    """The integrator could not advance; ``time`` is the reverse time reached."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (reverse time {time:.17g})")
        self.time = time


@dataclass(frozen=True)
class DrivingFunction:
    """``xi_t = theta_k`` on ``(C_{k-1}, C_k]`` with ``C_0 = 0``."""

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if jt.ndim != 1 or jt.size != v.size + 1 or jt[0] != 0.0:
            raise DomainError("jump_times must be [0, C_1, ..., C_n] matching values")
        if np.any(np.diff(jt) <= 0):
            raise DomainError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_blocks(cls, thetas: Sequence[float], caps: Sequence[float]) -> "DrivingFunction":
        caps = np.asarray(caps, dtype=float)
        return cls(np.concatenate([[0.0], np.cumsum(caps)]), np.asarray(thetas, float))

    @classmethod
    def from_cluster(cls, state) -> "DrivingFunction":
        return cls(np.concatenate([[0.0], state.cum_capacity]), state.thetas)

    @classmethod
    def constant(cls, value: float, T: float) -> "DrivingFunction":
        return cls(np.array([0.0, T]), np.array([value]))

    @property
    def total(self) -> float:
        return float(self.jump_times[-1])

    def _active(self, T: float) -> np.ndarray:
        m = int(np.searchsorted(self.jump_times, T, side="left"))
        return self.values[: max(m, 1)]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.jump_times, t, side="left") - 1, 0, self.values.size - 1)
        return self.values[k]

    def sup_norm(self, T: float, centre: float = 0.0) -> float:
        """``sup_{t <= T} |xi_t - centre|``."""
        return float(np.max(np.abs(self._active(T) - centre)))

    def reverse_segments(self, T: float) -> list[tuple[float, float]]:
        """``(duration, value)`` pairs of ``Xi_t = xi_{T-t}`` in reverse-time order."""
        if not 0 < T <= self.total * (1 + 1e-14):
            raise DomainError(f"T={T} outside (0, {self.total}]")
        T = min(T, self.total)
        m = int(np.searchsorted(self.jump_times, T, side="left"))
        segs = [(T - self.jump_times[m - 1], self.values[m - 1])]
        for k in range(m - 1, 0, -1):
            segs.append((self.jump_times[k] - self.jump_times[k - 1], self.values[k - 1]))
        return [(float(dt), float(v)) for dt, v in segs if dt > 0]

    def rotated(self, phi: float) -> "DrivingFunction":
        return DrivingFunction(self.jump_times, self.values + phi)


def _rhs_factory(xi_val: float, m: int):
    # trial stages may overshoot; non-finite stages make the solver reject the step
    @np.errstate(over="ignore", invalid="ignore", divide="ignore")
    def rhs(_t, y):
        rho = y[:m]
        phi = y[m : 2 * m] - xi_val
        a, b = expm1_complex(rho, phi)
        q = a * a + b * b
        out = np.empty_like(y)
        out[:m] = np.expm1(2.0 * rho) / q
        out[m : 2 * m] = -2.0 * np.exp(rho) * np.sin(phi) / q
        # 1/(v - 1)^2 = ((a - i b)/q)^2
        ia, ib = a / q, b / q
        out[2 * m : 3 * m] = 1.0 - 2.0 * (ia * ia - ib * ib)
        out[3 * m :] = 4.0 * ia * ib
        return out

    return rhs


def reverse_flow_logpolar(xi: DrivingFunction, T: float, s, th, tol: float = 1e-10, deriv: bool = True):
    """Integrate the reverse flow from ``exp(s + i th)`` up to reverse time ``T``.

    Returns ``(log|u_T|, arg u_T, Re log y_T, Im log y_T)`` as arrays.  ``tol``
    is the relative local error per step; ``log r`` is controlled purely
    relatively so points at ``1e-12`` from the circle keep their digits.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    th = np.atleast_1d(np.asarray(th, dtype=float))
    s, th = np.broadcast_arrays(s, th)
    if np.any(s <= 0):
        raise DomainError("reverse flow needs strictly exterior starting points")
    m = s.size
    y = np.concatenate([s.ravel(), th.ravel(), np.zeros(m), np.zeros(m)])
    atol = np.concatenate([np.full(m, 1e-300), np.full(3 * m, tol)])
    t_done = 0.0
    for dt, val in xi.reverse_segments(T):
        # keep the angle near the driver so sin/cos stay well conditioned
        y[m : 2 * m] = val + wrap_angle(y[m : 2 * m] - val)
        sol = solve_ivp(
            _rhs_factory(val, m), (0.0, dt), y, method="RK45", rtol=tol, atol=atol,
            first_step=min(dt, 1e-3 * dt + 1e-12),
        )
        if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
            reached = t_done + (float(sol.t[-1]) if sol.t.size else 0.0)
            raise LoewnerIntegrationError(sol.message, reached)
        y = sol.y[:, -1].copy()
        t_done += dt
    shape = np.shape(s)
    rho = y[:m].reshape(shape)
    ang = wrap_angle(y[m : 2 * m]).reshape(shape)
    if not deriv:
        return rho, ang, None, None
    return rho, ang, y[2 * m : 3 * m].reshape(shape), y[3 * m :].reshape(shape)


def _split(z):
    if isinstance(z, LogPolarPoint):
        return np.asarray(z.s, float), np.asarray(z.theta, float)
    z = np.asarray(z, dtype=complex)
    return np.log(np.abs(z)), np.angle(z)


def _out(v, z):
    scalar = not isinstance(z, LogPolarPoint) and np.ndim(z) == 0
    scalar = scalar or (isinstance(z, LogPolarPoint) and np.ndim(z.s) == 0 and np.ndim(z.theta) == 0)
    return complex(v.ravel()[0]) if scalar else v


def reverse_flow(xi: DrivingFunction, T: float, z, tol: float = 1e-10):
    """``Psi_T(z)`` by integrating the reverse flow."""
    s, th = _split(z)
    rho, ang, _, _ = reverse_flow_logpolar(xi, T, s, th, tol, deriv=False)
    return _out(np.exp(rho + 1j * ang), z)


def reverse_flow_deriv(xi: DrivingFunction, T: float, z, tol: float = 1e-10):
    """``Psi_T'(z)`` from the co-integrated log-derivative."""
    s, th = _split(z)
    _, _, lr, li = reverse_flow_logpolar(xi, T, s, th, tol)
    return _out(np.exp(lr + 1j * li), z)


def reference_radial(r, t):
    """Radius ``f_t(r)`` of the zero-driver flow started at ``r >= 1`` on the axis."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 1):
        raise DomainError("reference_radial needs r >= 1")
    a = (r + 1.0) ** 2 / (2.0 * r)
    out = a * np.exp(t) * (1.0 + np.sqrt(1.0 - 2.0 * np.exp(-t) / a)) - 1.0
    return out if out.ndim else float(out)


def angular_lifetime(theta):
    """Time at which the zero-driver boundary flow from ``e^{i theta}`` hits 1."""
    return -2.0 * np.log(np.abs(np.cos(0.5 * np.asarray(theta, dtype=float))))


def reference_angular(theta, t):
    """Angle of ``f_t(e^{i theta})`` before the point reaches the slit base.

    Uses ``sin^2(v/2) = sin^2(theta/2) - cos^2(theta/2) expm1(t)``, an
    equivalent form of ``arccos((1 + cos theta) e^t - 1)`` that is accurate
    near the lifetime.
    """
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    h = 0.5 * np.abs(theta)
    sn, cs = np.sin(h), np.cos(h)
    rad = sn * sn - cs * cs * np.expm1(t)
    if np.any(rad < -1e-13 * np.maximum(sn * sn, 1e-300)):
        raise DomainError("t exceeds the lifetime log(2/(1 + cos theta))")
    out = np.sign(theta) * 2.0 * np.arctan2(np.sqrt(np.maximum(rad, 0.0)), cs * np.exp(0.5 * t))
    out = np.where(theta == 0, 0.0, out)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# estimate checks


@dataclass
class TipReport:
    admissible: bool
    hypothesis_margin: float
    arg_violation: float
    radial_violation: float
    violated: bool
    detail: dict = field(default_factory=dict)


@dataclass
class AwayReport:
    admissible: bool
    hypothesis_margin: float
    arg_violation: float
    radial_log_ratio: float
    radial_implied_A: float
    violated: bool
    detail: dict = field(default_factory=dict)


def _zparts(z):
    if isinstance(z, LogPolarPoint):
        return float(z.s), float(z.theta)
    z = complex(z)
    return float(np.log(abs(z))), float(np.angle(z))


def check_tip_estimate(xi: DrivingFunction, z, T: float, tol: float = 1e-10, A: float = SCREEN_A) -> TipReport:
    """Constant-free conclusions near the tip for one ``(xi, z, T)``.

    Admissible when ``||xi||_T + |arg z| <= e^{-T}(|z|-1)/A`` and ``1 < |z| < 2``.
    Checks ``|arg Psi_T - arg z| <= ||xi - arg z||_T`` and ``|Psi_T| <= r0_T``;
    a violation must exceed ``10 tol`` (scaled) to count.
    """
    s, th = _zparts(z)
    rz = np.exp(s)
    margin = np.exp(-T) * np.expm1(s) / A - (xi.sup_norm(T) + abs(th))
    admissible = bool(margin >= 0 and 1 < rz < 2)
    rho, ang, _, _ = reverse_flow_logpolar(xi, T, s, th, tol, deriv=False)
    rho, ang = float(rho[0]), float(ang[0])
    r0 = reference_radial(rz, T)
    arg_v = abs(ang - th) - xi.sup_norm(T, th)
    rad_v = np.exp(rho) - r0
    slack_a = 10 * tol * max(abs(th), xi.sup_norm(T, th), 1e-300) + 10 * tol * 1e-6
    slack_r = 10 * tol * r0
    violated = admissible and (arg_v > slack_a or rad_v > slack_r)
    return TipReport(admissible, float(margin), float(arg_v), float(rad_v), bool(violated),
                     {"arg_psi": ang, "r_psi": float(np.exp(rho)), "r0": float(r0)})


def check_away_estimate(xi: DrivingFunction, z, T: float, tol: float = 1e-10, A: float = SCREEN_A) -> AwayReport:
    """Constant-free conclusions away from the slit for one ``(xi, z, T)``.

    Admissible when ``T`` is below the angular lifetime of ``arg z`` and
    ``||xi||_T + |z| - 1 <= (1 - cos v0_T) / (A sqrt(e^T - 1))``.  Checks
    ``|arg Psi_T - v0_T| <= 2 (||xi||_T + |z| - 1) tan(|arg z|/2) cot(v0_T/2)``
    and records the radial log-ratio.
    """
    s, th = _zparts(z)
    eps = xi.sup_norm(T) + np.expm1(s)
    life = float(angular_lifetime(th))
    if T <= life and th != 0:
        v0 = float(reference_angular(th, T))
        one_m_cos = 2.0 * np.sin(0.5 * v0) ** 2
        margin = one_m_cos / (A * np.sqrt(np.expm1(T))) - eps
    else:
        v0, one_m_cos, margin = float("nan"), float("nan"), -np.inf
    admissible = bool(margin >= 0)
    rho, ang, _, _ = reverse_flow_logpolar(xi, T, s, th, tol, deriv=False)
    rho, ang = float(rho[0]), float(ang[0])
    if not admissible:
        return AwayReport(False, float(margin), float("nan"), float("nan"), float("nan"), False,
                          {"arg_psi": ang, "r_psi": float(np.exp(rho))})
    tan_z = np.tan(0.5 * abs(th))
    cot_v = 1.0 / np.tan(0.5 * abs(v0))
    bound = 2.0 * eps * tan_z * cot_v
    arg_v = abs(ang - v0) - bound
    log_ratio = np.log(np.expm1(rho) * np.tan(0.5 * abs(v0)) / (np.expm1(s) * tan_z))
    scale = eps * np.sqrt(np.expm1(T)) / one_m_cos
    implied = abs(log_ratio) / scale if scale > 0 else float("nan")
    slack = 10 * tol * max(abs(v0), 1e-300)
    violated = arg_v > slack
    return AwayReport(True, float(margin), float(arg_v), float(log_ratio), float(implied), bool(violated),
                      {"arg_psi": ang, "v0": v0, "bound": float(bound)})


def deriv_ratio_monitor(xi: DrivingFunction, z, T: float, tol: float = 1e-10, A: float = SCREEN_A) -> dict:
    """Dimensionless derivative ratios whose boundedness the estimates assert.

    ``tip_ratio`` is ``|log|Psi_T'/f_T'||``, ``away_ratio`` is
    ``|log(|Psi_T'| tan(v0_T/2) cot(|arg z|/2))|`` and ``lower_bound_ratio`` is
    ``|Psi_T'| sqrt(e^T - 1)(||xi||_T + |z| - 1)/((|z| - 1)(1 - cos arg z))``,
    i.e. the implied ``1/B`` of the derivative lower bound.
    """
    s, th = _zparts(z)
    rho, ang, lr, _ = reverse_flow_logpolar(xi, T, s, th, tol)
    lr = float(lr[0])
    dpsi = np.exp(lr)
    f_d = abs(slit_map_deriv(T, LogPolarPoint(s, th)))
    tip = abs(lr - np.log(f_d))
    eps = xi.sup_norm(T) + np.expm1(s)
    tip_ok = eps - np.expm1(s) + abs(th) <= np.exp(-T) * np.expm1(s) / A and 1 < np.exp(s) < 2
    life = float(angular_lifetime(th))
    away = float("nan")
    away_ok = False
    if th != 0 and T <= life:
        v0 = float(reference_angular(th, T))
        away = abs(lr + np.log(np.tan(0.5 * abs(v0)) / np.tan(0.5 * abs(th))))
        away_ok = eps <= 2.0 * np.sin(0.5 * v0) ** 2 / (A * np.sqrt(np.expm1(T)))
    one_m_cos = 2.0 * np.sin(0.5 * th) ** 2
    lower = dpsi * np.sqrt(np.expm1(T)) * eps / (np.expm1(s) * one_m_cos) if one_m_cos > 0 else float("inf")
    return {
        "tip_ratio": float(tip),
        "away_ratio": float(away),
        "lower_bound_ratio": float(lower),
        "tip_hypothesis": bool(tip_ok),
        "away_hypothesis": bool(away_ok),
    }


def continuity_check(
    xi1: DrivingFunction,
    xi2: DrivingFunction,
    T: float,
    eps: float = 1e-3,
    n_rays: int = 64,
    t_grid: Sequence[float] | None = None,
    tol: float = 1e-10,
) -> float:
    """Sup-distance of ``Psi^(1)_t`` and ``Psi^(2)_t`` on ``|z| in {1+eps, 2, 10}``.

    The default time grid is the union of both drivers' jump times up to ``T``.
    """
    if t_grid is None:
        jt = np.concatenate([xi1.jump_times, xi2.jump_times, [T]])
        t_grid = np.unique(jt[(jt > 0) & (jt <= T)])
    ang = np.linspace(-np.pi, np.pi, n_rays, endpoint=False)
    rad = np.log(np.array([1.0 + eps, 2.0, 10.0]))
    S, TH = np.meshgrid(rad, ang, indexing="ij")
    worst = 0.0
    for t in t_grid:
        r1, a1, _, _ = reverse_flow_logpolar(xi1, float(t), S, TH, tol, deriv=False)
        r2, a2, _, _ = reverse_flow_logpolar(xi2, float(t), S, TH, tol, deriv=False)
        worst = max(worst, float(np.max(np.abs(np.exp(r1 + 1j * a1) - np.exp(r2 + 1j * a2)))))
    return worst
