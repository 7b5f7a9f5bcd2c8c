"""Mild solutions of the nonlocal fractional system in spectral coordinates.

Mode ``n`` of the state solves

    x_n(t) = t^(alpha-1) E_n(t) w_n + int_0^t k_n(t-s) q_n(s) ds,
    w_n    = O_n sum_k c_k int_0^{t_k} k_n(t_k-s) q_n(s) ds,

with ``E_n(t) = E_{alpha,alpha}(-lam_n t^alpha)``,
``k_n(r) = r^(alpha-1) E_n(r)``, ``q_n = b_n u + f_n`` and the nonlocal
resolvent ``O_n``. Written as one integral over ``[0, b]`` this is
``x_n(t) = int g_n(t, s) q_n(s) ds`` with the kernel of :func:`kernel_value`.

Two kinds of input are integrated:

* piecewise-linear nodal data (a sampled control or forcing), integrated
  exactly against ``k_n`` through its closed-form antiderivatives;
* a :class:`SteeringControl` ``u(s) = sum_m b_m g_m(b, s) y_m``, which is
  singular at ``s = b`` and just below every ``t_k``. Its response is
  expressed through overlap integrals of two kernels and never sampled.
"""

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _quadrature
from .errors import ContractError, DomainError, ResolutionError, ResolventError
from .fractional_oracle import TimeGrid, WeightedSamples
from .specialfun import mittag_leffler_vec, mode_kernel
from .system_model import check_assumption_smallness, require_smallness

NEUMANN_TERMS = 50


@dataclass(frozen=True, eq=False)
class NonlocalResolvent:
    """Diagonal of ``O = (I - sum_k c_k t_k^(alpha-1) T_alpha(t_k))^(-1)``.

    ``kappa`` holds the diagonal of the operator being inverted. When the
    smallness assumption holds, ``neumann_gap`` is the distance between the
    direct inverse and a 50-term Neumann partial sum.
    """

    diag: np.ndarray
    kappa: np.ndarray
    neumann_valid: bool
    neumann_gap: float


def build_resolvent(cfg, override=False):
    """Invert the nonlocal operator mode by mode.

    Raises :class:`AssumptionError` when the smallness assumption fails,
    unless ``override`` is set.
    """
    if not override:
        require_smallness(cfg)
    nl = cfg.nonlocal_
    lam = cfg.lam
    kappa = np.zeros(lam.size)
    for ck, tk in zip(nl.coefficients, nl.times):
        kappa += ck * tk ** (cfg.alpha - 1.0) * mittag_leffler_vec(
            cfg.alpha, cfg.alpha, -lam * tk ** cfg.alpha)
    gap = 1.0 - kappa
    if np.any(np.abs(gap) < 1e-13):
        n = int(np.argmin(np.abs(gap))) + 1
        raise ResolventError(f"nonlocal operator is singular in mode {n}: "
                             f"sum_k c_k t_k^(α−1) E_(α,α)(−λ t_k^α) = {kappa[n-1]!r}")
    diag = 1.0 / gap
    valid = bool(check_assumption_smallness(cfg).holds and np.all(np.abs(kappa) < 1.0))
    if valid:
        powers = kappa[None, :] ** np.arange(NEUMANN_TERMS)[:, None]
        neumann_gap = float(np.max(np.abs(powers.sum(axis=0) - diag)))
    else:
        neumann_gap = math.inf
    return NonlocalResolvent(diag, kappa, valid, neumann_gap)


@dataclass(frozen=True, eq=False)
class KernelEvaluator:
    """Problem data plus resolvent; caches per-grid operators lazily."""

    config: object
    resolvent: NonlocalResolvent
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, cfg, override=False):
        return cls(cfg, build_resolvent(cfg, override=override))

    @property
    def alpha(self):
        return self.config.alpha

    @property
    def horizon(self):
        return self.config.horizon_b

    @property
    def lam(self):
        return self.config.lam

    @property
    def b(self):
        return self.config.b

    def free_profile(self, t):
        """``t^(alpha-1) E_n(t)`` for each mode, shape (N, len(t)); requires t > 0."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([mode_kernel(self.alpha, ln, t) for ln in self.lam])

    def weighted_free_profile(self, t):
        """``E_n(t)``, the free profile times ``t^(1-alpha)``; finite at t = 0."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.stack([mittag_leffler_vec(self.alpha, self.alpha, -ln * t ** self.alpha)
                         for ln in self.lam])

    # -- overlap integrals ------------------------------------------------
    def _overlap(self, p, q):
        key = ("W", float(p), float(q))
        if key not in self._cache:
            self._cache[key] = _quadrature.overlap(self.alpha, self.lam, float(p), float(q))
        return self._cache[key]

    def _terminal_coupling(self):
        """``beta[m, k] = A_m(b) O_m c_k``: weight of the nonlocal branch of ``g_m(b, .)``."""
        a_b = self.free_profile(self.horizon)[:, 0]
        nl = self.config.nonlocal_
        return (a_b * self.resolvent.diag)[:, None] * nl.coefficients[None, :]

    def steering_overlap(self, tau):
        """``V[n, m] = int_0^tau k_n(tau - s) g_m(b, s) ds``."""
        if tau <= 0.0:
            return np.zeros((self.lam.size, self.lam.size))
        beta = self._terminal_coupling()
        v = self._overlap(tau, self.horizon).copy()
        for k, tk in enumerate(self.config.nonlocal_.times):
            v += self._overlap(tau, tk) * beta[None, :, k]
        return v

    def _nonlocal_overlap(self):
        key = ("Vk",)
        if key not in self._cache:
            nl = self.config.nonlocal_
            acc = np.zeros((self.lam.size, self.lam.size))
            for ck, tk in zip(nl.coefficients, nl.times):
                acc += ck * self.steering_overlap(tk)
            self._cache[key] = self.resolvent.diag[:, None] * acc
        return self._cache[key]

    def weighted_cross_gram(self, tau):
        """``t^(1-alpha) int_0^b g_n(t, s) g_m(b, s) ds`` at ``t = tau`` (finite at 0)."""
        head = self._nonlocal_overlap()
        if tau == 0.0:
            return head / math.gamma(self.alpha)
        e = self.weighted_free_profile(tau)[:, 0]
        return e[:, None] * head + tau ** (1.0 - self.alpha) * self.steering_overlap(tau)

    def terminal_cross_gram(self):
        """Symmetrized ``C[n, m] = int_0^b g_n(b, s) g_m(b, s) ds``."""
        key = ("Cb",)
        if key not in self._cache:
            b = self.horizon
            c = self.weighted_cross_gram(b) * b ** (self.alpha - 1.0)
            self._cache[key] = 0.5 * (c + c.T)
        return self._cache[key]

    # -- per-grid operators -------------------------------------------------
    def grid_operators(self, grid):
        key = ("grid", grid.nodes.tobytes())
        if key not in self._cache:
            self._cache[key] = _GridOperators.build(self, grid)
        return self._cache[key]


@dataclass(frozen=True, eq=False)
class _GridOperators:
    grid: TimeGrid
    hat: np.ndarray          # (N, M+1, M+1) product-integration weights
    tk_index: np.ndarray     # grid indices of the nonlocal times
    weighted_free: np.ndarray  # (N, M+1) E_n(t_i)
    steering: Optional[np.ndarray] = None

    @classmethod
    def build(cls, K, grid):
        if abs(grid.horizon - K.horizon) > 1e-12 * K.horizon:
            raise ContractError(f"grid ends at {grid.horizon}, the horizon is {K.horizon}")
        try:
            idx = np.array([grid.index_of(tk) for tk in K.config.nonlocal_.times], dtype=int)
        except ContractError as exc:
            raise ContractError(f"nonlocal.times must be grid nodes: {exc}") from None
        hat = np.stack([_quadrature.hat_weights(K.alpha, ln, grid.nodes) for ln in K.lam])
        return cls(grid, hat, idx, K.weighted_free_profile(grid.nodes))

    def steering_tensor(self, K):
        """Weighted cross-Gram at every node, shape (N, N, M+1)."""
        if self.steering is None:
            t = self.grid.nodes
            # the last node is the horizon itself: reuse the symmetrized terminal block
            last = K.terminal_cross_gram() * K.horizon ** (1.0 - K.alpha)
            blocks = [K.weighted_cross_gram(ti) for ti in t[:-1]] + [last]
            object.__setattr__(self, "steering", np.stack(blocks, axis=-1))
        return self.steering


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Weighted modal samples ``t^(1-alpha) x_n(t)`` on a grid, shape (N, M+1)."""

    grid: TimeGrid
    weighted_modes: np.ndarray
    alpha: float

    def __post_init__(self):
        w = np.asarray(self.weighted_modes, dtype=float)
        if w.ndim != 2 or w.shape[1] != self.grid.nodes.size:
            raise ContractError("weighted_modes must have shape (N, M+1)")
        if not np.all(np.isfinite(w)):
            raise ContractError("trajectory contains non-finite values")
        object.__setattr__(self, "weighted_modes", w)

    def c_norm(self):
        """``max_i |t_i^(1-alpha) x(t_i)|`` over the grid."""
        return float(np.max(np.linalg.norm(self.weighted_modes, axis=0)))

    def at_node(self, idx):
        """State ``x(t_idx)``; ``idx`` must point to a positive time."""
        t = self.grid.nodes[idx]
        if t <= 0:
            raise DomainError("the state itself is singular at t = 0; use the weighted value")
        return t ** (self.alpha - 1.0) * self.weighted_modes[:, idx]

    def terminal(self):
        return self.at_node(-1)

    def __add__(self, other):
        if not self.grid.same_as(other.grid):
            raise ContractError("trajectories live on different grids")
        return Trajectory(self.grid, self.weighted_modes + other.weighted_modes, self.alpha)


@dataclass(frozen=True, eq=False)
class SteeringControl:
    """``u(s) = sum_m b_m g_m(b, s) y_m``: the control shape produced by the Gramian."""

    kernel: KernelEvaluator
    coefficients: np.ndarray

    def __call__(self, s):
        """Evaluate ``u`` at times in ``[0, b)``; ``u`` blows up at ``s = b``."""
        K = self.kernel
        s = np.atleast_1d(np.asarray(s, dtype=float))
        y = np.asarray(self.coefficients, dtype=float)
        with np.errstate(divide="ignore"):
            g = _terminal_kernel_columns(K, s)
        return (K.b * y) @ g

    def energy(self, gramian_matrix):
        """``int_0^b u(s)^2 ds = y^T Gamma y``."""
        y = np.asarray(self.coefficients, dtype=float)
        return float(y @ gramian_matrix @ y)


def _terminal_kernel_columns(K, s):
    """``g_m(b, s)`` for every mode (rows) and time in ``s`` (columns)."""
    b = K.horizon
    nl = K.config.nonlocal_
    beta = K._terminal_coupling()
    out = np.zeros((K.lam.size, s.size))
    live = s < b
    out[:, live] = K.free_profile(b - s[live])
    out[:, s >= b] = np.inf
    for k, tk in enumerate(nl.times):
        hit = s < tk
        if np.any(hit):
            out[:, hit] += beta[:, k:k + 1] * K.free_profile(tk - s[hit])
    return out


def kernel_value(K, mode, t, s):
    """Green kernel ``g_mode(t, s)`` of the nonlocal problem (``mode`` is 0-based).

    The kernel is singular at ``s = t`` and at ``s = t_k``; evaluating there
    raises :class:`DomainError`.
    """
    b = K.horizon
    if not (0.0 < t <= b):
        raise DomainError(f"kernel needs 0 < t <= b, got t={t}")
    if not (0.0 <= s <= b):
        raise DomainError(f"kernel needs 0 <= s <= b, got s={s}")
    nl = K.config.nonlocal_
    if s == t or np.any(nl.times == s):
        raise DomainError(f"kernel is singular at s={s} (t={t}, t_k={tuple(nl.times)})")
    if not (0 <= mode < K.lam.size):
        raise DomainError(f"mode index {mode} out of range")
    alpha = K.alpha
    lam = K.lam[mode]
    value = 0.0
    if s < t:
        value += float(mode_kernel(alpha, lam, t - s))
    head = float(mode_kernel(alpha, lam, t)) * K.resolvent.diag[mode]
    for ck, tk in zip(nl.coefficients, nl.times):
        if s < tk:
            value += ck * head * float(mode_kernel(alpha, lam, tk - s))
    return value


def _nodal_input(values, shape, name):
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise ContractError(f"{name} has shape {arr.shape}, expected {shape}")
    return arr


def evaluate_mild_solution(K, control=None, selection=None, grid=None,
                           initial_functional=None):
    """Mild solution driven by ``B u + f`` on ``grid``.

    ``control`` is ``None``, plain samples of ``u`` (a :class:`WeightedSamples`
    with ``alpha = 1``) or a :class:`SteeringControl`. ``selection`` holds
    nodal values of the forcing, shape (N, M+1). Both sampled inputs are
    taken as piecewise linear between nodes.

    Passing ``initial_functional`` replaces the nonlocal condition by the
    prescribed value of ``I^(1-alpha) x|_0``.
    """
    if grid is None:
        raise ContractError("a time grid is required")
    ops = K.grid_operators(grid)
    n_modes, size = K.lam.size, grid.nodes.size
    q = np.zeros((n_modes, size))
    steering = None
    if isinstance(control, SteeringControl):
        if control.kernel is not K:
            raise ContractError("steering control was built for a different kernel evaluator")
        steering = np.asarray(control.coefficients, dtype=float)
    elif control is not None:
        if not isinstance(control, WeightedSamples) or control.alpha != 1.0:
            raise ContractError("sampled controls must be WeightedSamples with alpha = 1")
        if not control.grid.same_as(grid):
            raise ContractError("control is sampled on a different grid")
        q += K.b[:, None] * control.weighted_values[None, :]
    if selection is not None:
        q += _nodal_input(selection, (n_modes, size), "selection")
    conv = np.einsum("nij,nj->ni", ops.hat, q)

    if initial_functional is not None:
        if steering is not None:
            raise ContractError("a steering control already encodes the nonlocal condition")
        w0 = _nodal_input(initial_functional, (n_modes,), "initial_functional")
    else:
        nl = K.config.nonlocal_
        w0 = K.resolvent.diag * (conv[:, ops.tk_index] @ nl.coefficients)

    t = grid.nodes
    weighted = ops.weighted_free * w0[:, None]
    weighted[:, 1:] += t[1:] ** (1.0 - K.alpha) * conv[:, 1:]
    if steering is not None:
        tensor = ops.steering_tensor(K)
        weighted += K.b[:, None] * np.einsum("nmi,m->ni", tensor, K.b * steering)
    return Trajectory(grid, weighted, K.alpha)


class InitialFunctionalReport(NamedTuple):
    limit: np.ndarray         # Gamma(alpha) lim t^(1-alpha) x(t)
    collocation: np.ndarray   # sum_k c_k x(t_k)
    extrapolated: np.ndarray  # same limit extrapolated from the first positive nodes
    discrepancy: float        # |limit - collocation|


def reconstruct_initial_functional(x, cfg):
    """Both sides of the nonlocal condition for a computed trajectory.

    ``limit`` uses the stored continuous extension at ``t = 0``. As an
    independent diagnostic, ``extrapolated`` fits the expansion
    ``c0 + c1 t^alpha + c2 t + c3 t^(2 alpha)`` through nodes 1..4 (with
    ``t^2, t^3`` taking the place of repeated powers when ``alpha = 1``).
    """
    grid = x.grid
    if grid.steps < 5:
        raise ResolutionError("need at least four positive grid nodes to extrapolate to t = 0")
    alpha = cfg.alpha
    ga = math.gamma(alpha)
    w = x.weighted_modes
    limit = ga * w[:, 0]
    nl = cfg.nonlocal_
    coll = np.zeros(w.shape[0])
    for ck, tk in zip(nl.coefficients, nl.times):
        coll += ck * x.at_node(grid.index_of(tk))
    t = grid.nodes[1:5]
    # the leading exponents of the expansion, without repeats (alpha = 1 merges t^alpha and t)
    exponents = sorted({round(e, 12) for e in (0.0, alpha, 1.0, 2 * alpha, 2.0, 3 * alpha)})[:4]
    basis = t[:, None] ** np.array(exponents)[None, :]
    coef = np.linalg.solve(basis, w[:, 1:5].T)
    extrap = ga * coef[0]
    return InitialFunctionalReport(limit, coll, extrap, float(np.linalg.norm(limit - coll)))
