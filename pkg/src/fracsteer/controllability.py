"""Controllability Gramian, regularized steering and the ``a -> 0`` sweep.

For a target ``x1`` and regularization ``a > 0`` the steering control is

    u(s) = B* G*(b, s) (aI + Gamma)^(-1) (x1 - int_0^b G(b, s) f(s) ds),

with ``f`` a selection of the subdifferential along the state. The state
itself depends on ``f``, so the triple ``(x, u, f)`` is found by a
(relaxed) Picard iteration. Every fixed point satisfies
``x(b) = x1 - a (aI + Gamma)^(-1) P``, so the terminal error is controlled
by ``a`` and by how much of ``P`` lies in the weakly controllable modes.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ._quadrature import singular_rule
from .errors import ContractError, DomainError, NumericError, ValidationError
from .mild_solver import SteeringControl, Trajectory, evaluate_mild_solution
from .system_model import select_along


@dataclass(frozen=True, eq=False)
class GramianData:
    """Symmetric positive semidefinite ``Gamma[n, m] = int_0^b b_n g_n(b,s) b_m g_m(b,s) ds``."""

    matrix: np.ndarray
    eigen_spectrum: np.ndarray
    quadrature_nodes: int

    @property
    def min_eigenvalue(self):
        return float(self.eigen_spectrum[0])


def assemble_gramian(K):
    """Build the controllability Gramian of the truncated system."""
    if K.alpha <= 0.5:
        raise DomainError(f"the Gramian needs 1/2 < α ≤ 1 (square-integrable kernel), got {K.alpha}")
    c = K.terminal_cross_gram()
    mat = np.outer(K.b, K.b) * c
    mat = 0.5 * (mat + mat.T)
    eig = np.linalg.eigvalsh(mat)
    pairs = (K.config.nonlocal_.size + 1) ** 2
    per_pair = singular_rule(1.0, 2.0 * K.alpha - 2.0, K.alpha)[0].size
    return GramianData(mat, eig, pairs * per_pair)


class ResolventApplication(NamedTuple):
    solution: np.ndarray   # R(a, Gamma) h
    scaled: np.ndarray     # a R(a, Gamma) h


def regularized_resolvent_apply(G, a, h):
    """Solve ``(aI + Gamma) y = h`` by Cholesky factorization."""
    if not a > 0:
        raise DomainError(f"regularization a must be positive, got {a}")
    mat = np.asarray(G.matrix if isinstance(G, GramianData) else G, dtype=float)
    h = np.asarray(h, dtype=float)
    shifted = mat + a * np.eye(mat.shape[0])
    try:
        factor = cho_factor(shifted, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise NumericError(f"aI + Gamma is not positive definite at a={a}: {exc}") from None
    y = cho_solve(factor, h)
    # one step of iterative refinement keeps (aI + Gamma) y = h tight for small a
    y = y + cho_solve(factor, h - shifted @ y)
    return ResolventApplication(y, a * y)


@dataclass(frozen=True)
class SynthesisProblem:
    target_x1: np.ndarray
    reg_a: float
    max_iters: int = 50
    tol: float = 1e-10
    relaxation: float = 1.0
    rule: str = "minimal_norm"

    def __post_init__(self):
        if not self.reg_a > 0:
            raise ValidationError(f"reg_a: must be positive, got {self.reg_a}")
        if not self.tol > 0:
            raise ValidationError(f"tol: must be positive, got {self.tol}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValidationError(f"max_iters: must be a positive integer, got {self.max_iters}")
        if not (0.0 < self.relaxation <= 1.0):
            raise ValidationError(f"relaxation: must lie in (0, 1], got {self.relaxation}")


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    """Outcome of one synthesis run.

    ``control`` is the steering control itself; it is singular at ``s = b``
    and cannot be stored as finite grid samples. ``selection`` holds the
    forcing values ``f(t_i)`` (N x (M+1)) chosen along ``trajectory``.
    ``residual`` is the mild-solution defect ``|Phi(x) - x|`` of the returned
    triple in the weighted sup norm.
    """

    trajectory: Trajectory
    control: SteeringControl
    selection: np.ndarray
    terminal_error: float
    iterations: int
    converged: bool
    residual: float
    identity_defect: float
    control_energy: float
    increments: tuple


def forcing_along(K, x, rule="minimal_norm"):
    """Selection of the subdifferential at every grid node.

    The state is singular at ``t = 0``; the value there is copied from the
    first positive node.
    """
    t = x.grid.nodes
    states = x.weighted_modes[:, 1:] * t[1:] ** (K.alpha - 1.0)
    f = np.empty_like(x.weighted_modes)
    f[:, 1:] = select_along(K.config.nonsmooth, t[1:], states, rule)
    f[:, 0] = f[:, 1]
    if not np.all(np.isfinite(f)):
        bad = int(np.nonzero(~np.all(np.isfinite(f), axis=0))[0][0])
        raise NumericError(f"subdifferential selection is not finite at t = {t[bad]:g}")
    return f


def _apply_map(K, gram, grid, x, prob):
    """One evaluation of the fixed-point map; returns (Phi(x), control, forcing, P)."""
    f = forcing_along(K, x, prob.rule)
    xf = evaluate_mild_solution(K, selection=f, grid=grid)
    p = np.asarray(prob.target_x1, dtype=float) - xf.terminal()
    y = regularized_resolvent_apply(gram, prob.reg_a, p).solution
    control = SteeringControl(K, y)
    xu = evaluate_mild_solution(K, control=control, grid=grid)
    return xu + xf, control, f, p


class _PicardOutcome(NamedTuple):
    iterate: Trajectory
    image: Trajectory
    aux: tuple
    iterations: int
    converged: bool
    defect: float
    increments: tuple


def _picard(step, x0, tol, max_iters, relaxation):
    """Relaxed Picard iteration ``x <- theta step(x) + (1 - theta) x``.

    Stops as soon as the increment ``theta |step(x) - x|`` (weighted sup
    norm) drops below ``tol``; the iterate ``x`` is then returned together
    with ``step(x)``.
    """
    x = x0
    increments = []
    for it in range(int(max_iters) + 1):
        image, aux = step(x)
        diff = image.weighted_modes - x.weighted_modes
        defect = float(np.max(np.linalg.norm(diff, axis=0)))
        if not math.isfinite(defect):
            raise NumericError(f"Picard iteration produced non-finite values at step {it}")
        increments.append(relaxation * defect)
        if relaxation * defect < tol:
            return _PicardOutcome(x, image, aux, it, True, defect, tuple(increments))
        if it == max_iters:
            break
        x = Trajectory(x.grid, relaxation * image.weighted_modes
                       + (1.0 - relaxation) * x.weighted_modes, x.alpha)
    return _PicardOutcome(x, image, aux, it, False, defect, tuple(increments))


def _zero_trajectory(K, grid):
    return Trajectory(grid, np.zeros((K.lam.size, grid.nodes.size)), K.alpha)


def synthesize_control(K, prob, grid, gram=None):
    """Picard iteration for the steering triple, starting from ``x = 0``."""
    x1 = np.asarray(prob.target_x1, dtype=float)
    if x1.shape != K.lam.shape:
        raise ContractError(f"target has {x1.size} modes, the model has {K.lam.size}")
    gram = gram if gram is not None else assemble_gramian(K)

    def step(x):
        phi, control, f, _ = _apply_map(K, gram, grid, x, prob)
        return phi, (control, f)

    out = _picard(step, _zero_trajectory(K, grid), prob.tol, prob.max_iters, prob.relaxation)
    control, f = out.aux
    y = control.coefficients
    identity = float(np.linalg.norm(out.image.terminal() - (x1 - prob.reg_a * y)))
    return SynthesisResult(
        trajectory=out.iterate,
        control=control,
        selection=f,
        terminal_error=float(np.linalg.norm(out.iterate.terminal() - x1)),
        iterations=out.iterations,
        converged=out.converged,
        residual=out.defect,
        identity_defect=identity,
        control_energy=control.energy(gram.matrix),
        increments=out.increments,
    )


class ForcedSolution(NamedTuple):
    trajectory: Trajectory
    selection: np.ndarray
    iterations: int
    converged: bool
    residual: float


def solve_with_control(K, control, grid, rule="minimal_norm", max_iters=50, tol=1e-10,
                       relaxation=1.0):
    """State driven by a prescribed control: fixed point of ``x = int G (B u + f(x))``."""

    def step(x):
        f = forcing_along(K, x, rule)
        return evaluate_mild_solution(K, control=control, selection=f, grid=grid), (f,)

    out = _picard(step, _zero_trajectory(K, grid), tol, max_iters, relaxation)
    return ForcedSolution(out.iterate, out.aux[0], out.iterations, out.converged, out.defect)


class SweepRow(NamedTuple):
    a: float
    terminal_error: float
    control_energy: float
    iterations: int
    converged: bool
    residual: float


def regularization_sweep(K, x1, a_grid, grid, gram=None, **problem_options):
    """Run :func:`synthesize_control` for each ``a``; failures become flagged rows."""
    a_grid = [float(a) for a in a_grid]
    if not a_grid:
        raise ValidationError("a_grid must be nonempty")
    if any(a <= 0 for a in a_grid) or any(b >= a for a, b in zip(a_grid, a_grid[1:])):
        raise ValidationError("a_grid: must be positive and strictly decreasing")
    gram = gram if gram is not None else assemble_gramian(K)
    rows = []
    for a in a_grid:
        prob = SynthesisProblem(x1, a, **problem_options)
        try:
            res = synthesize_control(K, prob, grid, gram)
        except NumericError:
            rows.append(SweepRow(a, math.nan, math.nan, 0, False, math.nan))
            continue
        rows.append(SweepRow(a, res.terminal_error, res.control_energy, res.iterations,
                             res.converged, res.residual))
    return rows
