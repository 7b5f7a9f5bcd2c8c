"""Mittag-Leffler functions, Wright-type densities and the scalar solution operator.

On an eigenvector of ``A`` with eigenvalue ``-lam`` the fractional solution
operator acts as multiplication by ``E_{alpha,alpha}(-lam t**alpha)``. That
identity is the production path. The subordination integral against the
Wright density ``xi_alpha`` is kept as an independent check.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from . import _kernels
from .errors import DomainError, EvaluationError, RangeError


@dataclass(frozen=True)
class MLParams:
    """Parameters of the two-parameter Mittag-Leffler function ``E_{alpha,beta}``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise DomainError(f"Mittag-Leffler alpha must lie in (0, 1], got {self.alpha}")
        if not self.beta > 0.0:
            raise DomainError(f"Mittag-Leffler beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class WrightDensity:
    """One-sided Wright-type density of order ``alpha`` in (0, 1)."""

    alpha: float
    series_terms: int = 200

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"Wright density alpha must lie in (0, 1), got {self.alpha}")
        if int(self.series_terms) != self.series_terms or self.series_terms < 1:
            raise DomainError(f"series_terms must be a positive integer, got {self.series_terms}")


class SeriesValue(NamedTuple):
    value: float
    error: float


def mittag_leffler(p, z):
    """Return ``E_{alpha,beta}(z)`` for real ``z``.

    Absolute error is below 1e-12 for ``|z| <= 50``. Uses the power series
    when ``|z| <= 2`` or ``z > 0`` and Laplace inversion on a parabolic
    contour for ``z < -2``.
    """
    z = float(z)
    if not math.isfinite(z):
        raise EvaluationError("Mittag-Leffler argument is not finite",
                              alpha=p.alpha, beta=p.beta, z=z)
    vals, ok = _kernels.mittag_leffler_array(p.alpha, p.beta, np.array([z]))
    if not ok[0]:
        raise EvaluationError("Mittag-Leffler evaluation did not converge",
                              alpha=p.alpha, beta=p.beta, z=z)
    return float(vals[0])


def mittag_leffler_vec(alpha, beta, z):
    """Vectorized ``E_{alpha,beta}``; preserves the shape of ``z``."""
    MLParams(alpha, beta)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise EvaluationError("Mittag-Leffler argument is not finite", alpha=alpha, beta=beta)
    vals, ok = _kernels.mittag_leffler_array(alpha, beta, z)
    if not ok.all():
        bad = z.ravel()[~ok][0]
        raise EvaluationError("Mittag-Leffler evaluation did not converge",
                              alpha=alpha, beta=beta, z=float(bad))
    return vals.reshape(z.shape)


def solution_operator_scalar(alpha, lam, t):
    """``E_{alpha,alpha}(-lam t^alpha)``: the solution operator on one eigenmode."""
    if lam < 0:
        raise DomainError(f"eigenvalue magnitude must be nonnegative, got {lam}")
    if not t > 0:
        raise DomainError(f"solution operator needs t > 0, got {t}")
    return mittag_leffler(MLParams(alpha, alpha), -lam * t ** alpha)


def solution_operator_vec(alpha, lam, t):
    """Array version of :func:`solution_operator_scalar`; ``t >= 0`` allowed."""
    t = np.asarray(t, dtype=float)
    return mittag_leffler_vec(alpha, alpha, -lam * t ** alpha)


def mode_kernel(alpha, lam, sigma, order=0):
    """Kernel of one eigenmode and its repeated antiderivatives.

    ``order=0``: ``sigma^(alpha-1) E_{alpha,alpha}(-lam sigma^alpha)``, the
    convolution kernel of the mild solution. ``order=1`` and ``order=2`` are
    the first and second antiderivatives vanishing at ``sigma=0``, i.e.
    ``sigma^(alpha+k-1) E_{alpha,alpha+k}(-lam sigma^alpha)``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise DomainError("mode kernel needs sigma >= 0")
    ml = mittag_leffler_vec(alpha, alpha + order, -lam * sigma ** alpha)
    with np.errstate(divide="ignore"):
        return sigma ** (alpha + order - 1) * ml


def solution_operator_bound(alpha, semigroup_bound=1.0):
    """Uniform bound ``M / Gamma(alpha)`` on the scalar solution operator."""
    return semigroup_bound / math.gamma(alpha)


# ---------------------------------------------------------------------------
# Wright-type densities (validation path)
# ---------------------------------------------------------------------------

def wright_omega(w, theta):
    """Partial sum of the series for ``omega_alpha(theta)``.

    Returns the value and an estimate of the truncation plus cancellation
    error. Raises :class:`RangeError` when ``theta`` is so small that the
    partial sums are numerically meaningless; use :func:`wright_xi` there.
    """
    theta = float(theta)
    if not theta > 0:
        raise DomainError(f"omega_alpha needs theta > 0, got {theta}")
    a = w.alpha
    n = np.arange(1, int(w.series_terms) + 1, dtype=float)
    logmag = -(n * a + 1.0) * math.log(theta) + gammaln(n * a + 1.0) - gammaln(n + 1.0)
    sign = np.where(n % 2 == 1, 1.0, -1.0)
    terms = sign * np.exp(logmag) * np.sin(math.pi * n * a) / math.pi
    value = float(terms.sum())
    biggest = float(np.max(np.abs(terms)))
    # Bound the tail by the envelope, not the last term: sin(pi n alpha)
    # vanishes whenever n alpha is an integer and would hide a growing series.
    tail = math.exp(float(logmag[-1])) / math.pi
    err = tail + 4 * np.finfo(float).eps * biggest * len(terms)
    if not np.isfinite(value) or err > 1e-8 * max(abs(value), 1e-300) + 1e-14:
        raise RangeError(
            f"omega series unusable at theta={theta} for alpha={a}: estimated error {err:.2e}; "
            "evaluate xi_alpha directly instead")
    return SeriesValue(value, err)


def _kanter(a, phi):
    return (np.sin(a * phi) / np.sin(phi)) ** (1.0 / (1.0 - a)) * np.sin((1.0 - a) * phi) / np.sin(a * phi)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(200)
_PHI = (_GL_X + 1.0) * math.pi / 2.0
_PHI_W = _GL_W * math.pi / 2.0


def _xi_series(a, theta, terms):
    k = np.arange(terms, dtype=float)
    # 1/Gamma(1 - a(k+1)) through the reflection formula.
    mag = np.exp(k * math.log(theta) - gammaln(k + 1.0) + gammaln(a * (k + 1.0)))
    vals = mag * np.sin(math.pi * a * (k + 1.0)) / math.pi * np.where(k % 2 == 0, 1.0, -1.0)
    return float(vals.sum()), float(np.max(np.abs(vals))), float(abs(vals[-1]))


def wright_xi(w, theta):
    """Density ``xi_alpha(theta) = (1/alpha) theta^(-1-1/alpha) omega_alpha(theta^(-1/alpha))``.

    Small ``theta`` uses the entire-function series in ``theta``; elsewhere a
    Zolotarev-Kanter integral over ``[0, pi]`` is used, which has no
    cancellation.
    """
    theta = float(theta)
    if theta < 0:
        raise DomainError(f"xi_alpha needs theta >= 0, got {theta}")
    a = w.alpha
    if theta == 0.0:
        return 1.0 / math.gamma(1.0 - a)
    if theta <= 1.5:
        value, biggest, last = _xi_series(a, theta, max(int(w.series_terms), 400))
        if biggest < 1e3 and last < 1e-18:
            return value
    c = theta ** (1.0 / (1.0 - a))
    amp = _kanter(a, _PHI)
    integral = float(np.sum(_PHI_W * amp * np.exp(-c * amp)))
    return theta ** (a / (1.0 - a)) / (math.pi * (1.0 - a)) * integral


def _theta_cutoff(f, tol=1e-14):
    theta = 1.0
    while f(theta) > tol:
        theta *= 2.0
        if theta > 1e6:
            raise EvaluationError("Wright integrand does not decay", theta=theta)
    return theta


def wright_subordination(alpha, z):
    """``alpha * int_0^inf theta xi_alpha(theta) exp(-z theta) dtheta`` by adaptive quadrature.

    Equals ``E_{alpha,alpha}(-z)`` for ``z >= 0``.
    """
    w = WrightDensity(alpha)

    def integrand(th):
        return th * wright_xi(w, th) * math.exp(-z * th)

    top = _theta_cutoff(lambda th: abs(integrand(th)))
    breaks = [b for b in (0.5, 1.0, 1.5, 2.0, 4.0) if b < top]
    val, _ = integrate.quad(integrand, 0.0, top, points=breaks or None,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    return alpha * val


def wright_mass(alpha):
    """``int_0^inf xi_alpha(theta) dtheta`` by adaptive quadrature (should be 1)."""
    w = WrightDensity(alpha)
    top = _theta_cutoff(lambda th: wright_xi(w, th))
    breaks = [b for b in (0.5, 1.0, 1.5, 2.0, 4.0) if b < top]
    val, _ = integrate.quad(lambda th: wright_xi(w, th), 0.0, top, points=breaks or None,
                            epsabs=1e-13, epsrel=1e-12, limit=400)
    return val
