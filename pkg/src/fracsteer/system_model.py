"""Truncated spectral model of the controlled nonlocal inclusion.

The state lives in the span of ``N`` eigenvectors of a self-adjoint
dissipative generator ``A`` (``A e_n = -lam_n e_n``). The control enters
through a single profile ``b`` with modal coefficients ``b_n``. The nonsmooth
part is a superpotential ``F(t, x)`` whose Clarke subdifferential is a product
of per-mode intervals.

Modes are named by their 1-based index ``n`` in human-facing reports and are
0-based everywhere else.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy import integrate

from .errors import (AssumptionError, ConfigError, ContractError, DomainError,
                     TermDefinitionError, ValidationError)

SELECTION_RULES = ("minimal_norm", "midpoint", "lower")


def _as_vector(values, name):
    arr = np.array(values, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: entries must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Eigenvalue magnitudes ``0 <= lam_1 < ... < lam_N`` of ``-A``.

    ``lam = 0`` is admitted so that free fractional evolution can be posed;
    the heat-type presets use strictly positive eigenvalues.
    """

    eigenvalues: np.ndarray
    mode_labels: tuple = ()

    def __post_init__(self):
        lam = _as_vector(self.eigenvalues, "eigenvalues")
        if lam.size == 0:
            raise ConfigError("eigenvalues: at least one mode is required")
        if np.any(lam < 0):
            raise ConfigError("eigenvalues: must be nonnegative (A dissipative)")
        if np.any(np.diff(lam) <= 0):
            raise ConfigError("eigenvalues: must be strictly increasing (simple spectrum)")
        labels = tuple(self.mode_labels) or tuple(f"e_{n}" for n in range(1, lam.size + 1))
        if len(labels) != lam.size:
            raise ConfigError("mode_labels: one label per eigenvalue is required")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "mode_labels", labels)

    @property
    def size(self):
        return self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class ControlOperator:
    """Rank-one actuator ``(Bu) = b u`` given by the modal coefficients of ``b``."""

    b_coeffs: np.ndarray
    operator_norm: Optional[float] = None

    def __post_init__(self):
        b = _as_vector(self.b_coeffs, "b_coeffs")
        norm = float(np.linalg.norm(b))
        if self.operator_norm is not None and not math.isclose(
                self.operator_norm, norm, rel_tol=1e-12, abs_tol=1e-300):
            raise ConfigError(
                f"operator_norm: {self.operator_norm} differs from |b| = {norm} for a rank-one actuator")
        object.__setattr__(self, "b_coeffs", b)
        object.__setattr__(self, "operator_norm", norm)


@dataclass(frozen=True, eq=False)
class NonlocalCondition:
    """``I^(1-alpha) x|_0 = sum_k c_k x(t_k)``. An empty condition means a zero initial functional."""

    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        c = _as_vector(self.coefficients, "nonlocal.coefficients")
        t = _as_vector(self.times, "nonlocal.times")
        if c.size != t.size:
            raise ConfigError("nonlocal: coefficients and times must have equal length")
        for k, ck in enumerate(c, start=1):
            if ck == 0.0:
                raise ConfigError(f"nonlocal.coefficients[{k}]: c_k != 0 is required, got 0")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise ConfigError("nonlocal.times: need 0 < t_1 < ... < t_m")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "times", t)

    @property
    def size(self):
        return self.coefficients.size


class Interval(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True, eq=False)
class NonsmoothTerm:
    """Superpotential ``F(t, x)`` with a per-mode interval subdifferential.

    ``subgradient_extremes(t, x)`` returns the endpoints of ``dF(t, x)``
    mode by mode, and ``directional_derivative(t, x, v)`` is the Clarke
    derivative ``F0(t, x; v)``. The growth data ``P``, ``gamma`` and ``psi``
    bound the subdifferential by ``P(t) psi(|x|)``; ``uniform_bound_L``, when
    set, is a uniform bound on it.
    """

    name: str
    potential: Callable
    directional_derivative: Callable
    subgradient_extremes: Callable
    growth_P: Callable
    growth_psi: Callable
    growth_gamma: float = 0.0
    uniform_bound_L: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.growth_gamma < 1.0):
            raise ConfigError(f"nonsmooth.gamma: need 0 <= gamma < alpha <= 1, got {self.growth_gamma}")
        if self.uniform_bound_L is not None and not self.uniform_bound_L >= 0:
            raise ConfigError("nonsmooth.L: the uniform bound must be nonnegative")


# ---------------------------------------------------------------------------
# Built-in nonsmooth terms
# ---------------------------------------------------------------------------

def _weights(weights):
    w = np.array(weights, dtype=float).ravel()
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError("nonsmooth.weights: must be finite and nonnegative")
    return w


def zero_term():
    """``F = 0``: the linear problem."""
    def extremes(t, x):
        z = np.zeros_like(np.asarray(x, dtype=float))
        return Interval(z, z.copy())

    return NonsmoothTerm(
        name="zero",
        potential=lambda t, x: 0.0,
        directional_derivative=lambda t, x, v: 0.0,
        subgradient_extremes=extremes,
        growth_P=lambda t: 0.0,
        growth_psi=lambda r: 1.0,
        uniform_bound_L=0.0,
    )


def abs_term(weights):
    """``F(x) = sum_n w_n |x_n|``, convex with a kink at every coordinate plane."""
    w = _weights(weights)
    bound = float(np.linalg.norm(w))

    def extremes(t, x):
        s = np.sign(np.asarray(x, dtype=float))
        lo = np.where(s == 0, -w, w * s)
        hi = np.where(s == 0, w, w * s)
        return Interval(lo, hi)

    def clarke(t, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        total = 0.0
        for xn, vn, wn in zip(x, v, w):
            if xn > 0:
                total += wn * vn
            elif xn < 0:
                total -= wn * vn
            else:
                total += wn * abs(vn)
        return total

    return NonsmoothTerm(
        name="abs",
        potential=lambda t, x: float(np.dot(w, np.abs(x))),
        directional_derivative=clarke,
        subgradient_extremes=extremes,
        growth_P=lambda t: bound,
        growth_psi=lambda r: 1.0,
        uniform_bound_L=bound,
    )


def saturated_abs_term(weights, cap):
    """``F(x) = sum_n w_n min(|x_n|, cap)``: nonconvex, bounded subdifferential.

    At ``|x_n| = cap`` the Clarke gradient of ``min(|r|, cap)`` is the hull
    of the one-sided slopes, ``[0, 1]`` or ``[-1, 0]``.
    """
    w = _weights(weights)
    if not cap > 0:
        raise ConfigError(f"nonsmooth.cap: must be positive, got {cap}")
    bound = float(np.linalg.norm(w))

    def extremes(t, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        s = np.sign(x)
        lo = np.where(a < cap, w * s, 0.0)
        hi = lo.copy()
        kink0 = x == 0
        lo[kink0], hi[kink0] = -w[kink0], w[kink0]
        at_cap = a == cap
        lo[at_cap] = np.minimum(0.0, w[at_cap] * s[at_cap])
        hi[at_cap] = np.maximum(0.0, w[at_cap] * s[at_cap])
        return Interval(lo, hi)

    def clarke(t, x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        total = 0.0
        for xn, vn, wn in zip(x, v, w):
            if xn == 0:
                total += wn * abs(vn)
            elif abs(xn) < cap:
                total += wn * math.copysign(1.0, xn) * vn
            elif abs(xn) == cap:
                # limsup over nearby points picks the larger one-sided slope
                total += max(0.0, wn * math.copysign(1.0, xn) * vn)
        return total

    return NonsmoothTerm(
        name="saturated_abs",
        potential=lambda t, x: float(np.dot(w, np.minimum(np.abs(x), cap))),
        directional_derivative=clarke,
        subgradient_extremes=extremes,
        growth_P=lambda t: bound,
        growth_psi=lambda r: 1.0,
        uniform_bound_L=bound,
    )


def power_term(weights, exponent):
    """``F(x) = sum_n w_n |x_n|^p / p`` with ``1 < p < 2``: smooth, sublinear gradient growth.

    Satisfies the growth condition with ``psi(r) = r^(p-1)`` but admits no
    uniform bound.
    """
    w = _weights(weights)
    p = float(exponent)
    if not (1.0 < p < 2.0):
        raise ConfigError(f"nonsmooth.exponent: need 1 < p < 2, got {p}")
    wmax = float(np.max(w)) if w.size else 0.0

    def grad(x):
        x = np.asarray(x, dtype=float)
        return w * np.sign(x) * np.abs(x) ** (p - 1.0)

    def extremes(t, x):
        g = grad(x)
        return Interval(g, g.copy())

    return NonsmoothTerm(
        name="power",
        potential=lambda t, x: float(np.dot(w, np.abs(x) ** p)) / p,
        directional_derivative=lambda t, x, v: float(np.dot(grad(x), v)),
        subgradient_extremes=extremes,
        growth_P=lambda t: wmax,
        growth_psi=lambda r: r ** (p - 1.0),
    )


# ---------------------------------------------------------------------------
# Problem configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """Validated problem data.

    ``alpha = 1`` is admitted for integer-order reduction checks. The
    compactness and measurability hypotheses cannot be certified from finite
    data and are carried as declared flags.
    """

    alpha: float
    horizon_b: float
    operator: SpectralOperator
    control: ControlOperator
    nonlocal_: NonlocalCondition
    nonsmooth: NonsmoothTerm
    semigroup_bound_M: float = 1.0
    holder_gamma: float = 0.0
    truncation_N: Optional[int] = None
    compact_semigroup: bool = True
    measurable_selection: bool = True

    def __post_init__(self):
        if not (0.5 < self.alpha <= 1.0):
            raise ConfigError(f"alpha: 1/2 < α ≤ 1 is required, got {self.alpha}")
        if not self.horizon_b > 0:
            raise ConfigError(f"horizon_b: must be positive, got {self.horizon_b}")
        n = self.operator.size
        if self.truncation_N is None:
            object.__setattr__(self, "truncation_N", n)
        elif self.truncation_N != n:
            raise ConfigError(f"truncation_N: {self.truncation_N} does not match {n} eigenvalues")
        if self.control.b_coeffs.size != n:
            raise ConfigError(f"b_coeffs: expected {n} entries, got {self.control.b_coeffs.size}")
        if self.nonlocal_.size and self.nonlocal_.times[-1] >= self.horizon_b:
            raise ConfigError("nonlocal.times: need t_m < b")
        if not self.semigroup_bound_M >= 1.0:
            raise ConfigError(f"semigroup_bound_M: need M >= 1, got {self.semigroup_bound_M}")
        if not (0.0 <= self.holder_gamma < self.alpha):
            raise ConfigError(f"holder_gamma: 0 ≤ γ < α is required, got {self.holder_gamma}")
        if self.holder_gamma != self.nonsmooth.growth_gamma:
            raise ConfigError("holder_gamma: must equal the nonsmooth term's growth exponent")
        if not (self.compact_semigroup and self.measurable_selection):
            raise ConfigError("compactness and measurability hypotheses must be declared true")

    @property
    def lam(self):
        return self.operator.eigenvalues

    @property
    def b(self):
        return self.control.b_coeffs


class SmallnessReport(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


class GrowthReport(NamedTuple):
    rho_estimate: float
    p_norm: float
    holds: bool


class ActuationReport(NamedTuple):
    zero_modes: tuple


def check_assumption_smallness(cfg):
    """Compare ``sum_k |c_k t_k^(alpha-1)|`` with ``Gamma(alpha) / M``."""
    nl = cfg.nonlocal_
    lhs = float(np.sum(np.abs(nl.coefficients * nl.times ** (cfg.alpha - 1.0))))
    rhs = math.gamma(cfg.alpha) / cfg.semigroup_bound_M
    return SmallnessReport(lhs, rhs, lhs < rhs)


def require_smallness(cfg):
    rep = check_assumption_smallness(cfg)
    if not rep.holds:
        raise AssumptionError(
            f"nonlocal smallness violated: Σ|c_k t_k^(α−1)| = {rep.lhs:.10g} ≥ Γ(α)/M = {rep.rhs:.10g}")
    return rep


def p_norm(cfg):
    """``|P|`` in ``L^(1/gamma)(0, b)``; ``gamma = 0`` means the sup norm."""
    term = cfg.nonsmooth
    b = cfg.horizon_b
    gam = term.growth_gamma
    if gam == 0.0:
        ts = np.linspace(0.0, b, 2001)
        return float(max(abs(term.growth_P(t)) for t in ts))
    q = 1.0 / gam
    val, _ = integrate.quad(lambda t: abs(term.growth_P(t)) ** q, 0.0, b,
                            epsabs=1e-12, epsrel=1e-10, limit=200)
    return float(val ** gam)


def check_growth_ratio(cfg, r_grid):
    """Estimate ``liminf psi(r)/r * |P|`` over the upper quarter of ``r_grid``."""
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size < 4:
        raise ValidationError("r_grid: need at least four radii")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValidationError("r_grid: must be positive and increasing")
    if r[-1] / r[0] < 1e3:
        raise ValidationError("r_grid: must span at least three decades")
    psi = np.array([cfg.nonsmooth.growth_psi(ri) for ri in r], dtype=float)
    if np.any(np.diff(psi) < 0):
        bad = int(np.nonzero(np.diff(psi) < 0)[0][0])
        raise ValidationError(
            f"growth condition violated: psi must be nondecreasing, but psi({r[bad + 1]:g}) < psi({r[bad]:g})")
    norm = p_norm(cfg)
    tail = max(1, r.size // 4)
    ratio = psi[-tail:] / r[-tail:] * norm
    rho = float(np.min(ratio))
    return GrowthReport(rho, norm, rho < 1.0)


def check_actuation_nondegeneracy(cfg):
    """List the (1-based) modes the actuator cannot reach."""
    b = cfg.control.b_coeffs
    return ActuationReport(tuple(int(n) + 1 for n in np.nonzero(np.abs(b) < 1e-14)[0]))


def subgradient_selection(term, t, x, rule="minimal_norm"):
    """Pick one element of ``dF(t, x)`` mode by mode."""
    if rule not in SELECTION_RULES:
        raise DomainError(f"selection rule must be one of {SELECTION_RULES}, got {rule!r}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ContractError("selection needs a finite state")
    lo, hi = term.subgradient_extremes(t, x)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(lo > hi):
        n = int(np.nonzero(lo > hi)[0][0]) + 1
        raise TermDefinitionError(
            f"nonsmooth term {term.name!r} returned an empty interval in mode {n}: [{lo[n-1]}, {hi[n-1]}]")
    if rule == "minimal_norm":
        return np.clip(0.0, lo, hi)
    if rule == "midpoint":
        return 0.5 * (lo + hi)
    return lo.copy()


def select_along(term, times, states, rule="minimal_norm"):
    """Apply :func:`subgradient_selection` at every column of ``states`` (N x K)."""
    out = np.empty_like(states)
    for k, t in enumerate(times):
        out[:, k] = subgradient_selection(term, t, states[:, k], rule)
    return out
