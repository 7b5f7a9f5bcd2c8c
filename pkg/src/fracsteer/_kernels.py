"""Hot numeric kernels.

Every kernel exists twice: a loop formulation compiled with numba, and a
vectorized numpy formulation. :mod:`fracsteer._backend` decides which one the
public wrappers at the bottom of this module dispatch to.
"""

import math

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import rgamma

from ._backend import USE_NUMBA, njit

# Power series is used for |z| <= SERIES_RADIUS and for every z > 0.
SERIES_RADIUS = 2.0
# Half-width of the trapezoidal rule on the parabolic Bromwich contour.
CONTOUR_NODES = 22
SERIES_MAX_TERMS = 200_000
_SERIES_TOL = 1e-17


# ---------------------------------------------------------------------------
# Mittag-Leffler: power series
# ---------------------------------------------------------------------------

def _ml_series_loop(alpha, beta, z, out, ok):
    for idx in range(z.shape[0]):
        zi = z[idx]
        if zi == 0.0:
            out[idx] = 1.0 / math.gamma(beta)
            ok[idx] = True
            continue
        logz = math.log(abs(zi))
        neg = zi < 0.0
        total = 0.0
        prev = math.inf
        done = False
        for n in range(SERIES_MAX_TERMS):
            mag = math.exp(n * logz - math.lgamma(alpha * n + beta))
            # lgamma loses the sign of Gamma for negative arguments; beta > 0
            # keeps every argument positive here.
            term = -mag if (neg and n % 2 == 1) else mag
            total += term
            if n > 2 and mag <= prev and mag <= _SERIES_TOL * max(1.0, abs(total)):
                done = True
                break
            prev = mag
        out[idx] = total
        ok[idx] = done and math.isfinite(total)


_ml_series_jit = njit(_ml_series_loop)


def _ml_series_numpy(alpha, beta, z, out, ok):
    small = np.abs(z) <= SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        # 2**n / Gamma(alpha*n + beta) < 1e-20 well before n = 120 for alpha >= 1/2.
        n = np.arange(120.0)
        coeff = rgamma(alpha * n + beta)
        powers = zs[:, None] ** n[None, :]
        out[small] = powers @ coeff
        ok[small] = True
    rest = np.nonzero(~small)[0]
    if rest.size:
        tmp_out = np.empty(rest.size)
        tmp_ok = np.zeros(rest.size, dtype=np.bool_)
        _ml_series_loop(alpha, beta, z[rest], tmp_out, tmp_ok)
        out[rest] = tmp_out
        ok[rest] = tmp_ok


# ---------------------------------------------------------------------------
# Mittag-Leffler: Laplace inversion on a parabolic contour, z < 0
# ---------------------------------------------------------------------------
#
# E_{a,b}(z) is the inverse Laplace transform of s^(a-b) / (s^a - z) at t = 1.
# For z < 0 and a <= 1 the transform is analytic off the negative real axis,
# so the trapezoidal rule on s(u) = mu (1 + iu)^2 converges geometrically.

def _contour_nodes(n_half):
    mu = math.pi * n_half / 12.0
    h = 3.0 / n_half
    u = h * np.arange(n_half + 1)
    s = mu * (1.0 + 1j * u) ** 2
    ds = 2j * mu * (1.0 + 1j * u)
    # Node 0 lies on the real axis and is counted once; the rest pair with
    # their complex conjugates.
    w = np.full(n_half + 1, 2.0)
    w[0] = 1.0
    return s, ds * w * h / (2j * math.pi)


_NODES_S, _NODES_W = _contour_nodes(CONTOUR_NODES)


def _ml_contour_loop(alpha, beta, x, s_nodes, w_nodes, out):
    n_nodes = s_nodes.shape[0]
    sa = np.empty(n_nodes, dtype=np.complex128)
    pref = np.empty(n_nodes, dtype=np.complex128)
    for k in range(n_nodes):
        s = s_nodes[k]
        sa[k] = s ** alpha
        pref[k] = np.exp(s) * sa[k] / s ** beta * w_nodes[k]
    for idx in range(x.shape[0]):
        xi = x[idx]
        acc = 0.0
        for k in range(n_nodes):
            acc += (pref[k] / (sa[k] + xi)).real
        out[idx] = acc


_ml_contour_jit = njit(_ml_contour_loop)


def _ml_contour_numpy(alpha, beta, x, s_nodes, w_nodes, out):
    sa = s_nodes ** alpha
    pref = np.exp(s_nodes) * (sa / s_nodes ** beta) * w_nodes
    for start in range(0, x.shape[0], 4096):
        xs = x[start:start + 4096]
        vals = pref[None, :] / (sa[None, :] + xs[:, None])
        out[start:start + 4096] = vals.real.sum(axis=1)


def mittag_leffler_array(alpha, beta, z):
    """Evaluate E_{alpha,beta} on a float array; returns (values, converged)."""
    z = np.ascontiguousarray(z, dtype=np.float64).ravel()
    out = np.empty(z.shape[0])
    ok = np.ones(z.shape[0], dtype=np.bool_)
    use_series = (np.abs(z) <= SERIES_RADIUS) | (z > 0.0)
    idx_s = np.nonzero(use_series)[0]
    idx_c = np.nonzero(~use_series)[0]
    if idx_s.size:
        vals = np.empty(idx_s.size)
        conv = np.zeros(idx_s.size, dtype=np.bool_)
        if USE_NUMBA:
            _ml_series_jit(float(alpha), float(beta), z[idx_s], vals, conv)
        else:
            _ml_series_numpy(float(alpha), float(beta), z[idx_s], vals, conv)
        out[idx_s] = vals
        ok[idx_s] = conv
    if idx_c.size:
        vals = np.empty(idx_c.size)
        if USE_NUMBA:
            _ml_contour_jit(float(alpha), float(beta), -z[idx_c], _NODES_S, _NODES_W, vals)
        else:
            _ml_contour_numpy(float(alpha), float(beta), -z[idx_c], _NODES_S, _NODES_W, vals)
        out[idx_c] = vals
        ok[idx_c] = np.isfinite(vals)
    return out, ok


# ---------------------------------------------------------------------------
# Lower-triangular Volterra sweep
# ---------------------------------------------------------------------------

def _volterra_sweep_loop(lower, rhs, out):
    n = rhs.shape[0]
    for i in range(n):
        acc = rhs[i]
        for j in range(i):
            acc -= lower[i, j] * out[j]
        out[i] = acc / lower[i, i]


_volterra_sweep_jit = njit(_volterra_sweep_loop)


def volterra_sweep(lower, rhs):
    """Solve ``lower @ w = rhs`` for lower-triangular ``lower`` by forward substitution."""
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if USE_NUMBA:
        out = np.empty_like(rhs)
        _volterra_sweep_jit(lower, rhs, out)
        return out
    return solve_triangular(lower, rhs, lower=True, check_finite=False)
