"""Quadrature for Mittag-Leffler convolution kernels.

Two building blocks:

* :func:`hat_weights` integrates piecewise-linear data exactly against the
  modal kernel ``k(r) = r^(alpha-1) E_{alpha,alpha}(-lam r^alpha)`` using its
  closed-form first and second antiderivatives.
* :func:`overlap` computes ``W_nm(p, q) = int_0^min(p,q) k_n(p-s) k_m(q-s) ds``
  with a geometrically graded Gauss-Legendre rule whose innermost panel is
  Gauss-Jacobi, so the endpoint singularity is integrated exactly to leading
  order.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .specialfun import mode_kernel

PANEL_ORDER = 16
GRADING_RATIO = 0.2
# Relative size below which the innermost panel's neglected sub-leading
# term falls under double precision.
_TARGET = 1e-16


@lru_cache(maxsize=64)
def _reference_rule(exponent, order=PANEL_ORDER, ratio=GRADING_RATIO, lead=None):
    """Rule on [0, 1] for integrands ``~ (1-s)^exponent * (1 + O((1-s)^lead))``.

    Returns nodes expressed as distances ``d = 1 - s`` from the singular end,
    together with weights. Distances are returned instead of nodes so that
    tiny offsets from the singular point keep full relative precision.
    """
    lead = lead if lead is not None else 1.0
    depth = _TARGET ** (1.0 / (1.0 + exponent + lead))
    levels = max(1, math.ceil(math.log(depth) / math.log(ratio)))
    x, wx = np.polynomial.legendre.leggauss(order)
    dist, wts = [], []
    hi = 1.0
    for _ in range(levels):
        lo = hi * ratio
        # panel of distances [lo, hi]
        dist.append(lo + (hi - lo) * (x + 1.0) / 2.0)
        wts.append(wx * (hi - lo) / 2.0)
        hi = lo
    xj, wj = roots_jacobi(order, exponent, 0.0)
    # distance d = hi (1 - x) / 2 on the innermost panel [0, hi]
    d = hi * (1.0 - xj) / 2.0
    dist.append(d)
    wts.append(wj * (hi / 2.0) * (1.0 - xj) ** (-exponent))
    return np.concatenate(dist), np.concatenate(wts)


def singular_rule(length, exponent, alpha):
    """Distances from the singular end and weights for an interval of ``length``."""
    d, w = _reference_rule(float(exponent), lead=float(alpha))
    return d * length, w * length


def overlap(alpha, lam, p, q):
    """Matrix ``W[n, m] = int_0^min(p,q) k_n(p-s) k_m(q-s) ds`` over the modes in ``lam``."""
    lo = min(p, q)
    if lo <= 0.0:
        n = len(lam)
        return np.zeros((n, n))
    same = p == q
    exponent = 2.0 * alpha - 2.0 if same else alpha - 1.0
    dist, wts = singular_rule(lo, exponent, alpha)
    # s = lo - dist; p - s and q - s keep full precision near the singular end
    dp = (p - lo) + dist
    dq = (q - lo) + dist
    kp = _kernel_matrix(alpha, lam, dp)
    kq = kp if same else _kernel_matrix(alpha, lam, dq)
    return (kp * wts) @ kq.T


def _kernel_matrix(alpha, lam, sigma):
    return np.stack([mode_kernel(alpha, ln, sigma) for ln in lam])


def hat_weights(alpha, lam, nodes):
    """Product-integration weights for one mode.

    Returns ``Q`` of shape (M+1, M+1) with
    ``int_0^{t_i} k(t_i - s) q(s) ds = sum_j Q[i, j] q_j`` for every
    piecewise-linear ``q`` with nodal values ``q_j``.
    """
    t = np.asarray(nodes, dtype=float)
    size = t.size
    h = np.diff(t)
    dist = t[:, None] - t[None, :]
    mask = dist >= 0
    d = np.where(mask, dist, 0.0)
    k1 = np.where(mask, mode_kernel(alpha, lam, d, order=1), 0.0)
    k2 = np.where(mask, mode_kernel(alpha, lam, d, order=2), 0.0)
    q = np.zeros((size, size))
    # panel j spans kernel arguments r in [A, B] = [t_i - t_{j+1}, t_i - t_j]
    k1_b, k1_a = k1[:, :-1], k1[:, 1:]
    k2_b, k2_a = k2[:, :-1], k2[:, 1:]
    i0 = k1_b - k1_a
    ib = k2_b - k2_a - k1_a * h[None, :]
    live = mask[:, 1:]  # panel lies inside [0, t_i]
    i0 = np.where(live, i0, 0.0)
    ib = np.where(live, ib, 0.0)
    q[:, :-1] += i0 - ib / h[None, :]
    q[:, 1:] += ib / h[None, :]
    return q
