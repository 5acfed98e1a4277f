"""
Single slit map of the exterior disk and its half-plane relatives.

The slit map ``f_t`` sends ``{|z| > 1}`` onto the exterior disk minus the
radial segment ``(1, 1 + d(t)]`` with ``f_t(z) = e^t z + O(1)`` at infinity.
Points are carried in log-polar form ``z = exp(s + i*theta)`` so that points a
distance ``1e-15`` from the unit circle keep full relative precision.

Two evaluation routes are used:

* ``s <= 1``: the Moebius factorisation ``f_t = m_D o f~_d o m_H`` written in
  real/imaginary components, so the output log-radius is computed with
  ``log1p`` and never by subtracting numbers close to one.
* ``s > 1``: the closed form expanded in powers of ``1/z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

__all__ = [
    "DomainError",
    "SingularityError",
    "LogPolarPoint",
    "SlitParams",
    "length_from_capacity",
    "capacity_from_length",
    "base_angle",
    "slit_map",
    "slit_map_deriv",
    "halfplane_slit_map",
    "mobius_to_halfplane",
    "mobius_to_disk",
    "scaled_halfplane_slit",
    "slit_logpolar",
    "slit_log_deriv",
    "expm1_complex",
    "wrap_angle",
]

TWO_PI = 2.0 * np.pi

# log-radius above which the 1/z expansion is used instead of the Moebius route
_DIRECT_ROUTE_S = 1.0


class DomainError(ValueError):
    """Argument outside the domain of a map."""


class SingularityError(ArithmeticError):
    """Evaluation at a point where the derivative is infinite.

    ``index`` is the 1-based particle index when raised from a composition.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


@dataclass(frozen=True)
class LogPolarPoint:
    """The point ``exp(s + i*theta)`` of the closed exterior disk.

    ``s`` and ``theta`` may be scalars or equally shaped arrays.
    """

    s: Union[float, np.ndarray]
    theta: Union[float, np.ndarray]

    def __post_init__(self):
        if np.any(np.asarray(self.s) < 0):
            raise DomainError("log-radius s must be >= 0 (point inside the unit disk)")

    @classmethod
    def from_complex(cls, z) -> "LogPolarPoint":
        z = np.asarray(z, dtype=complex)
        s = np.log(np.abs(z))
        if np.any(s < -1e-15):
            raise DomainError("point lies strictly inside the unit disk")
        s = np.maximum(s, 0.0)
        th = np.angle(z)
        if s.ndim == 0:
            return cls(float(s), float(th))
        return cls(s, th)

    def to_complex(self):
        return np.exp(np.asarray(self.s) + 1j * np.asarray(self.theta))


PointLike = Union[LogPolarPoint, complex, np.ndarray]


def _as_logpolar(z: PointLike) -> LogPolarPoint:
    if isinstance(z, LogPolarPoint):
        return z
    return LogPolarPoint.from_complex(z)


def wrap_angle(theta):
    """Reduce angles to ``[-pi, pi)``; values already inside are returned unchanged."""
    th = np.asarray(theta, dtype=float)
    inside = (th >= -np.pi) & (th < np.pi)
    if np.all(inside):
        return th + 0.0
    out = np.mod(th + np.pi, TWO_PI) - np.pi
    out = np.where(out >= np.pi, out - TWO_PI, out)
    return np.where(inside, th, out)


def _check_capacity(t):
    if np.any(np.asarray(t) < 0) or not np.all(np.isfinite(t)):
        raise DomainError(f"capacity must be finite and >= 0, got {t!r}")


def length_from_capacity(t):
    """Slit length ``d(t) = 2 e^t (1 + sqrt(1 - e^-t)) - 2``.

    Written as ``2 expm1(t) + 2 e^t sqrt(-expm1(-t))`` to stay accurate for
    small ``t``.
    """
    _check_capacity(t)
    t = np.asarray(t, dtype=float)
    d = 2.0 * np.expm1(t) + 2.0 * np.exp(t) * np.sqrt(-np.expm1(-t))
    return d if d.ndim else float(d)


def capacity_from_length(d):
    """Inverse of :func:`length_from_capacity`: ``log(1 + d^2 / (4 (1 + d)))``."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or not np.all(np.isfinite(d)):
        raise DomainError(f"slit length must be finite and >= 0, got {d!r}")
    t = np.log1p(d * d / (4.0 * (1.0 + d)))
    return t if t.ndim else float(t)


def base_angle(t):
    """Half-angle ``beta_t`` of the boundary arc sent onto the slit."""
    d = np.asarray(length_from_capacity(t))
    b = 2.0 * np.arctan(d / (2.0 * np.sqrt(d + 1.0)))
    return b if b.ndim else float(b)


@dataclass(frozen=True)
class SlitParams:
    """Capacity ``t`` with its slit length ``d`` and base half-angle ``beta``."""

    t: float
    d: float
    beta: float

    @classmethod
    def from_capacity(cls, t: float) -> "SlitParams":
        return cls(float(t), length_from_capacity(t), base_angle(t))

    @classmethod
    def from_length(cls, d: float) -> "SlitParams":
        return cls.from_capacity(capacity_from_length(d))

    @property
    def rho(self) -> float:
        """Half-width of the pre-slit interval in the upper half-plane picture."""
        return self.d / (2.0 * np.sqrt(self.d + 1.0))

    @property
    def scale(self) -> float:
        return 2.0 * np.sqrt(1.0 + self.d) / (2.0 + self.d)


# ---------------------------------------------------------------------------
# vectorised kernels


def expm1_complex(a, b):
    """Real and imaginary parts of ``exp(a + i b) - 1`` without cancellation.

    Accurate for ``a <= 0`` or ``|b|`` small, which covers every use here.
    """
    re = np.expm1(a) * np.cos(b) - 2.0 * np.sin(0.5 * b) ** 2
    im = np.exp(a) * np.sin(b)
    return re, im


def _log_one_minus_inv(s, alpha):
    """``log(1 - exp(-(s + i alpha)))`` as (real, imag); imag in (-pi/2, pi/2]."""
    re, im = expm1_complex(-s, -alpha)
    with np.errstate(divide="ignore"):
        lre = np.log(np.hypot(re, im))
    lim = np.arctan2(-im, -re)
    return lre, lim


def _slit_moebius(p: SlitParams, s, th):
    """Moebius route; valid and accurate for moderate ``s`` (incl. ``s = 0``)."""
    sh = np.sinh(0.5 * s)
    ch = np.cos(0.5 * th)
    den = 2.0 * sh * sh + 2.0 * ch * ch
    # m_H(e^{s+i th}) = x + i y; x -+ rho via sin((beta +- th)/2) so the
    # distance to the base points survives
    y = np.sinh(s) / den
    cb = np.cos(0.5 * p.beta)
    rad = 2.0 * p.rho * sh * sh
    x_minus = -(rad + 2.0 * ch * np.sin(0.5 * (p.beta + th)) / cb) / den
    x_plus = (rad + 2.0 * ch * np.sin(0.5 * (p.beta - th)) / cb) / den
    q = p.scale * np.sqrt(x_minus + 1j * y) * np.sqrt(x_plus + 1j * y)
    X = q.real
    Y = np.maximum(q.imag, 0.0)
    s2 = 0.5 * np.log1p(4.0 * Y / (X * X + (1.0 - Y) ** 2))
    th2 = np.arctan2(-X, 1.0 + Y) - np.arctan2(X, 1.0 - Y)
    return s2, wrap_angle(th2)


def _slit_direct(p: SlitParams, s, th):
    """Expansion in ``1/z``; used away from the unit circle."""
    e = np.exp(-(s + 1j * th))
    lb = np.log1p(-e * np.exp(1j * p.beta))
    lm = np.log1p(-e * np.exp(-1j * p.beta))
    Q = np.exp(0.5 * (lb + lm))
    G = 0.5 * (1.0 + 2.0 * (-np.expm1(-p.t)) * e + e * e + (1.0 + e) * Q)
    lg = np.log(G)
    s2 = s + p.t + lg.real
    th2 = wrap_angle(th + lg.imag)
    return np.maximum(s2, s), th2


def slit_logpolar(t, s, th, params: SlitParams | None = None):
    """Apply ``f_t`` to ``exp(s + i th)``; returns the image as ``(s', th')``.

    Arrays are broadcast; ``th'`` is wrapped to ``[-pi, pi)``.
    """
    s = np.asarray(s, dtype=float)
    th = np.asarray(th, dtype=float)
    if t == 0:
        return s + 0.0, wrap_angle(th)
    p = params if params is not None else SlitParams.from_capacity(t)
    s, th = np.broadcast_arrays(s, th)
    far = s > _DIRECT_ROUTE_S
    if not far.any():
        return _slit_moebius(p, s, th)
    if far.all():
        return _slit_direct(p, s, th)
    s2 = np.empty_like(s)
    th2 = np.empty_like(th)
    near = ~far
    s2[near], th2[near] = _slit_moebius(p, s[near], th[near])
    s2[far], th2[far] = _slit_direct(p, s[far], th[far])
    return s2, th2


def slit_log_deriv(t, s, th, s2, th2, params: SlitParams | None = None):
    """``log f_t'(z)`` as (real, imag) given ``z`` and its image ``(s2, th2)``.

    Uses ``f'(z) = (f(z)/z) (1 - 1/z) / sqrt((1 - e^{i b}/z)(1 - e^{-i b}/z))``,
    each factor through an accurate complex ``expm1``.  The imaginary part is
    only defined modulo ``2 pi``.
    """
    if t == 0:
        z = np.zeros(np.broadcast(np.asarray(s), np.asarray(th)).shape)
        return z, z.copy()
    p = params if params is not None else SlitParams.from_capacity(t)
    l0r, l0i = _log_one_minus_inv(s, th)
    lpr, lpi = _log_one_minus_inv(s, th - p.beta)
    lmr, lmi = _log_one_minus_inv(s, th + p.beta)
    re = (s2 - s) + l0r - 0.5 * (lpr + lmr)
    im = (th2 - th) + l0i - 0.5 * (lpi + lmi)
    return re, im


# ---------------------------------------------------------------------------
# public scalar-friendly surface


def _unwrap_scalar(v):
    v = np.asarray(v)
    return v.item() if v.ndim == 0 else v


def slit_map(t: float, z: PointLike):
    """Evaluate the slit map ``f_t(z)``.

    ``z`` may be a :class:`LogPolarPoint` (preferred near the circle) or a
    complex number/array.  On ``|z| = 1`` the continuous boundary extension is
    returned.
    """
    _check_capacity(t)
    zp = _as_logpolar(z)
    s2, th2 = slit_logpolar(t, zp.s, zp.theta)
    return _unwrap_scalar(np.exp(s2 + 1j * th2))


def slit_map_deriv(t: float, z: PointLike):
    """Derivative ``f_t'(z)``.

    Returns 0 at the boundary point 1 and raises :class:`SingularityError` at
    the base points ``exp(+-i beta_t)``.
    """
    _check_capacity(t)
    zp = _as_logpolar(z)
    s = np.asarray(zp.s, dtype=float)
    th = wrap_angle(zp.theta)
    s2, th2 = slit_logpolar(t, s, th)
    re, im = slit_log_deriv(t, s, th, s2, th2)
    if np.any(np.isposinf(re)) or np.any(np.isnan(re)):
        raise SingularityError(f"f'_t is singular at a base point (t={t})")
    return _unwrap_scalar(np.exp(re + 1j * im))


def halfplane_slit_map(t: float, z, boundary: bool = False):
    """Half-plane slit map ``F_t(z) = sqrt(z^2 - 4t)`` with ``F_t(z) ~ z``.

    The branch is the product of principal roots of ``z -+ 2 sqrt(t)``, which is
    continuous on the upper half-plane.  ``boundary=True`` admits real ``z``.
    """
    _check_capacity(t)
    z = np.asarray(z, dtype=complex)
    im = z.imag
    if np.any(im < 0) or (not boundary and np.any(im <= 0)):
        raise DomainError("halfplane_slit_map requires Im z > 0")
    a = 2.0 * np.sqrt(t)
    # +0j keeps the imaginary zero positive on the real axis
    out = np.sqrt(z - a + 0j) * np.sqrt(z + a + 0j)
    return _unwrap_scalar(out)


def mobius_to_halfplane(z):
    """``m_H(z) = i (z - 1)/(z + 1)``: exterior disk onto the upper half-plane."""
    z = np.asarray(z, dtype=complex)
    if np.any(z == -1):
        raise DomainError("m_H has a pole at z = -1")
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(z), 1j, 1j * (z - 1) / (z + 1))
    return _unwrap_scalar(out)


def mobius_to_disk(w):
    """``m_D(w) = (1 - i w)/(1 + i w)``: upper half-plane onto the exterior disk."""
    w = np.asarray(w, dtype=complex)
    if np.any(w == 1j):
        raise DomainError("m_D has a pole at w = i")
    return _unwrap_scalar((1 - 1j * w) / (1 + 1j * w))


def scaled_halfplane_slit(d: float, w):
    """``f~_d(w) = 2 sqrt(d+1)/(d+2) * (w^2 - d^2/(4(d+1)))^(1/2)``.

    Maps the upper half-plane onto itself minus ``(0, i d/(d+2)]``.
    """
    if d < 0:
        raise DomainError("slit length must be >= 0")
    w = np.asarray(w, dtype=complex)
    rho = d / (2.0 * np.sqrt(d + 1.0))
    C = 2.0 * np.sqrt(d + 1.0) / (d + 2.0)
    return _unwrap_scalar(C * np.sqrt(w - rho + 0j) * np.sqrt(w + rho + 0j))
