"""Brute-force Riemann-Liouville operators and a scalar fractional time-stepper.

Nothing in here touches Mittag-Leffler functions: the operators are built
from power-function moments only, so they can validate the mild-solution
formula in :mod:`fracsteer.mild_solver` without sharing a code path with it.

Trajectories are carried as :class:`WeightedSamples`, ``x(t) = t^(a-1) w(t)``,
with ``w`` piecewise linear between grid nodes. Quadrature weights absorb both
the kernel singularity at ``s = t`` and the ``s^(a-1)`` singularity at 0.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc, betaincc, gamma

from ._kernels import volterra_sweep
from .errors import ContractError, DomainError, EvaluationError


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing nodes ``0 = t_0 < ... < t_M = b``."""

    nodes: np.ndarray
    uniform: bool = False

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ContractError("time grid needs at least two nodes")
        if nodes[0] != 0.0:
            raise ContractError(f"time grid must start exactly at 0, got {nodes[0]}")
        if np.any(np.diff(nodes) <= 0):
            raise ContractError("time grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform_grid(cls, horizon, steps):
        if steps < 1:
            raise ContractError("a uniform grid needs at least one step")
        nodes = horizon * np.arange(steps + 1) / steps
        nodes[-1] = horizon
        return cls(nodes, uniform=True)

    @property
    def horizon(self):
        return float(self.nodes[-1])

    @property
    def steps(self):
        return self.nodes.size - 1

    def index_of(self, t, atol=1e-12):
        """Index of the node equal to ``t`` within ``atol``."""
        idx = int(np.argmin(np.abs(self.nodes - t)))
        if abs(self.nodes[idx] - t) > atol:
            raise ContractError(f"time {t} is not a grid node (nearest {self.nodes[idx]})")
        return idx

    def same_as(self, other):
        return self is other or (self.nodes.shape == other.nodes.shape
                                 and np.array_equal(self.nodes, other.nodes))


@dataclass(frozen=True, eq=False)
class WeightedSamples:
    """Samples ``w_i = t_i^(1-alpha) x(t_i)`` of a scalar function.

    ``alpha`` is the singularity exponent: ``x(t) ~ t^(alpha-1)`` near 0. The
    entry at ``t = 0`` is the continuous extension of ``t^(1-alpha) x(t)``.
    """

    grid: TimeGrid
    weighted_values: np.ndarray
    alpha: float

    def __post_init__(self):
        w = np.asarray(self.weighted_values, dtype=float)
        if w.shape != self.grid.nodes.shape:
            raise ContractError("weighted values must match the grid")
        if not np.all(np.isfinite(w)):
            raise ContractError("weighted values must be finite")
        object.__setattr__(self, "weighted_values", w)

    @classmethod
    def from_function(cls, grid, fn, alpha=1.0):
        """Sample ``fn`` at the positive nodes; the value at 0 is ``lim t^(1-alpha) fn(t)``."""
        t = grid.nodes
        w = np.empty_like(t)
        w[1:] = t[1:] ** (1.0 - alpha) * np.array([fn(ti) for ti in t[1:]], dtype=float)
        # linear extrapolation of the weighted values to t = 0
        w[0] = w[1] - (w[2] - w[1]) * t[1] / (t[2] - t[1]) if t.size > 2 else w[1]
        return cls(grid, w, alpha)

    def values(self):
        """``x(t_i)`` at the positive nodes (the node at 0 is omitted)."""
        t = self.grid.nodes[1:]
        return t ** (self.alpha - 1.0) * self.weighted_values[1:]

    def sup_norm(self):
        return float(np.max(np.abs(self.weighted_values)))


def _interval_moments(nodes, mu, c):
    """Matrix of ``int_{s_j}^{s_{j+1}} (t_i - s)^(mu-1) s^(c-1) ds``, shape (M+1, M).

    Entry ``[i, j]`` is zero unless ``j < i``.
    """
    t = nodes
    m = t.size - 1
    # regularized incomplete beta I(t_j / t_i) for j <= i; the complement is
    # used above 1/2 so that differences of neighbouring values stay accurate
    rows, cols = np.tril_indices(m + 1)
    keep = rows > 0
    rows, cols = rows[keep], cols[keep]
    frac = t[cols] / t[rows]
    high = frac > 0.5
    lower = np.full((m + 1, m + 1), np.nan)
    upper = np.full((m + 1, m + 1), np.nan)
    lower[rows[~high], cols[~high]] = betainc(c, mu, frac[~high])
    upper[rows[high], cols[high]] = betaincc(c, mu, frac[high])
    # mixed panels (one endpoint on each side of 1/2) need both forms at one end
    lower_at_hi = np.where(np.isnan(lower), 1.0 - upper, lower)
    upper_at_lo = np.where(np.isnan(upper), 1.0 - lower, upper)
    use_up = ~np.isnan(upper[:, :-1])
    diff = np.where(use_up, upper_at_lo[:, :-1] - upper[:, 1:],
                    lower_at_hi[:, 1:] - lower[:, :-1])
    scale = t[1:, None] ** (mu + c - 1.0) * beta_fn(c, mu)
    mom = np.zeros((m + 1, m))
    mom[1:] = np.tril(np.nan_to_num(scale * diff[1:], nan=0.0))
    return mom


def _plain_moments(nodes, mu):
    """Closed-form moments of ``(t_i - s)^(mu-1)`` and ``s (t_i - s)^(mu-1)`` over each panel."""
    t = nodes
    gap = np.clip(t[:, None] - t[None, :], 0.0, None)
    p1 = gap ** mu / mu
    p2 = gap ** (mu + 1.0) / (mu + 1.0)
    m0 = p1[:, :-1] - p1[:, 1:]
    # s = t_i - (t_i - s)
    m1 = t[:, None] * m0 - (p2[:, :-1] - p2[:, 1:])
    return m0, m1


def _hat_weights(nodes, mu, c):
    """Weights ``Q[i, j]`` with ``int_0^{t_i} (t_i-s)^(mu-1) s^(c-1) phi(s) ds = sum_j Q[i,j] phi_j``.

    ``phi`` is the piecewise-linear interpolant of nodal values ``phi_j``.
    """
    t = nodes
    h = np.diff(t)
    if c == 1.0:
        m0, m1 = _plain_moments(t, mu)
    else:
        m0 = _interval_moments(t, mu, c)
        m1 = _interval_moments(t, mu, c + 1.0)
    # On panel j: phi = phi_j + (phi_{j+1} - phi_j) (s - s_j) / h_j
    lin = (m1 - t[None, :-1] * m0) / h[None, :]
    q = np.zeros((t.size, t.size))
    q[:, :-1] += m0 - lin
    q[:, 1:] += lin
    return q


def _check_order(order):
    if not (0.0 < order < 1.0):
        raise DomainError(f"fractional order must lie in (0, 1), got {order}")


def rl_integral(samples, order):
    """Riemann-Liouville integral of order ``order`` on the same grid.

    Exact when ``t^(1-alpha) x(t)`` is piecewise linear between nodes. The
    result carries exponent ``alpha + order``.
    """
    _check_order(order)
    a = float(samples.alpha)
    if a <= 0:
        raise DomainError(f"integrand exponent must be positive, got {a}")
    t = samples.grid.nodes
    w = samples.weighted_values
    q = _hat_weights(t, order, a)
    out = np.empty_like(w)
    # t^(1-(a+mu)) * int ... : the power of t_i cancels into the moments
    out[1:] = t[1:] ** (1.0 - a - order) * (q[1:] @ w) / math.gamma(order)
    out[0] = w[0] * math.gamma(a) / math.gamma(a + order)
    return WeightedSamples(samples.grid, out, a + order)


def rl_derivative(samples, order):
    """Riemann-Liouville derivative ``d/dt I^(1-order) x`` for ``0 < order < 1``.

    The inner integral is differentiated through its interpolant with
    second-order finite differences. The result carries exponent
    ``alpha - order``.
    """
    _check_order(order)
    inner = rl_integral(samples, 1.0 - order)
    t = samples.grid.nodes
    v = inner.weighted_values
    a1 = inner.alpha
    # I^(1-order)x = t^(a1-1) v  =>  d/dt = t^(a1-2) [(a1-1) v + t v']
    dv = np.gradient(v, t, edge_order=2)
    out = (a1 - 1.0) * v + t * dv
    return WeightedSamples(samples.grid, out, a1 - 1.0)


def step_scalar_fode(alpha, lam, forcing, init_weight, grid):
    """Solve ``D^alpha x = -lam x + g(t)`` with ``I^(1-alpha) x(0) = init_weight``.

    Implicit product integration on the Volterra form, with the ansatz
    ``x = t^(alpha-1) w`` and ``w`` piecewise linear. ``alpha = 1`` reduces
    to the trapezoidal rule for the classical ODE.
    """
    if not (0.5 < alpha <= 1.0):
        raise DomainError(f"stepper needs 1/2 < alpha <= 1, got {alpha}")
    if not grid.uniform:
        raise ContractError("the fractional stepper requires a uniform grid")
    t = grid.nodes
    g = np.array([forcing(ti) for ti in t], dtype=float)
    if not np.all(np.isfinite(g)):
        raise EvaluationError("forcing returned a non-finite sample", alpha=alpha, lam=lam)
    ga = math.gamma(alpha)
    if alpha == 1.0:
        # Kernels reduce to 1: trapezoidal weights.
        q_state = _trapezoid_weights(t)
        q_force = q_state
    else:
        q_state = _hat_weights(t, alpha, alpha)
        q_force = _hat_weights(t, alpha, 1.0)
    scale = np.empty_like(t)
    scale[0] = 0.0
    scale[1:] = t[1:] ** (1.0 - alpha) / ga
    lower = np.eye(t.size) + lam * scale[:, None] * q_state
    rhs = init_weight / ga + scale * (q_force @ g)
    w = volterra_sweep(lower, rhs)
    return WeightedSamples(grid, w, alpha)


def _trapezoid_weights(t):
    h = np.diff(t)
    q = np.zeros((t.size, t.size))
    for i in range(1, t.size):
        q[i, :i] += h[:i] / 2
        q[i, 1:i + 1] += h[:i] / 2
    return q


def power_rule(p, order):
    """``I^order t^p = Gamma(p+1)/Gamma(p+1+order) t^(p+order)``; returns the coefficient."""
    return gamma(p + 1.0) / gamma(p + 1.0 + order)
