"""Diagnostics: 1-d Wasserstein distance, risk gaps, scaling fits, H-curves.

The H-curves take a supremum over a scalar nuisance parameter (``theta`` for
the lasso family, ``eps`` for the robust family) on a fixed grid plus its
analytic limit at infinity.
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr, ndtri

from ._validation import as_vector, check_scalar
from .denoise import _interval_prob, _pdf, st_corr, st_cross_moment, st_grad_kernel, st_mean_abs
from .exceptions import InvalidParameterError, NumericFailure

LASSO_THETA_GRID = (0.0, 20.0, 0.01)
ROBUST_EPS_STEP = 0.005
ROBUST_EPS_SPAN = 10.0


# -- distances and fits ------------------------------------------------------

def w1_gaussian_1d(sample, sigma=1.0):
    """W1 between the empirical law of ``sample`` and ``N(0, sigma^2)``.

    Uses the quantile coupling ``mean_i |x_(i) - sigma Phi^{-1}((i - 1/2)/m)|``.
    """
    x = np.sort(as_vector(sample, "sample"))
    m = x.shape[0]
    if m < 2:
        raise InvalidParameterError("need at least two sample points")
    sigma = check_scalar(sigma, "sigma", lo=0, lo_open=True)
    q = sigma * ndtri((np.arange(1, m + 1) - 0.5) / m)
    return float(np.mean(np.abs(x - q)))


def coordinate_w1(v_next, alpha_norm, n):
    """W1 of the entries of ``sqrt(n) v_{t+1} / ||alpha_t||`` against N(0, 1)."""
    return w1_gaussian_1d(np.sqrt(n) * np.asarray(v_next) / alpha_norm, 1.0)


def norm_ratio(v_next, alpha_norm, n, p):
    """``||v_{t+1}|| / (||alpha_t|| sqrt(p/n))``.

    A vector with i.i.d. ``N(0, ||alpha_t||^2 / n)`` entries in dimension
    ``p`` has norm close to ``||alpha_t|| sqrt(p/n)``, so this is near one.
    """
    return float(np.linalg.norm(v_next) / (alpha_norm * np.sqrt(p / n)))


def risk_gap(trace, se):
    """Per-iteration gaps against the state evolution, t = 1..T.

    Sparse: ``||ST_{tau_t}(theta_t) - theta*|| - gamma*_t``.
    Robust: ``||theta_{t+1} - theta*|| - gamma*_t``.
    """
    T = min(trace.t_max, se.t_max)
    ts = np.arange(1, T + 1)
    theta_star = trace.model.signal
    if trace.mode == "sparse":
        emp = [np.linalg.norm(trace.F_value(t)) for t in ts]
    else:
        emp = [np.linalg.norm(trace[t].theta_next - theta_star) for t in ts]
    return np.asarray(emp) - se.gamma_star[ts]


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float


def scaling_fit(points):
    """Least squares of ``log value`` on ``log n``; points are ``(n, value)`` pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise InvalidParameterError("need at least three (n, value) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise InvalidParameterError("scaling fit needs positive finite n and values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss if ss > 0 else 1.0
    return ScalingFit(float(slope), float(intercept), float(r2))


# -- quadrature ----------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = leggauss(20)


def _gl(f, a, b):
    half = 0.5 * (b - a)
    x = 0.5 * (a + b) + half * _GL_NODES
    return half * float(np.sum(_GL_WEIGHTS * f(x)))


def gauss_expectation(f, tol=1e-8, lo=-12.0, hi=12.0, breakpoints=(), max_depth=60):
    """``E f(G)`` for standard normal G by adaptive Gauss-Legendre.

    The integrand ``f(z) phi(z)`` is integrated over ``[lo, hi]`` split at
    ``breakpoints``; each panel is bisected until a 20-point rule and the sum
    over its halves agree to the panel's share of ``tol``.
    """
    g = lambda z: f(z) * _pdf(z)
    cuts = sorted({lo, hi, *[c for c in breakpoints if lo < c < hi]})
    total = 0.0
    stack = [(a, b, _gl(g, a, b), 0) for a, b in zip(cuts[:-1], cuts[1:])]
    width = hi - lo
    while stack:
        a, b, whole, depth = stack.pop()
        mid = 0.5 * (a + b)
        left, right = _gl(g, a, mid), _gl(g, mid, b)
        if abs(left + right - whole) <= tol * (b - a) / width:
            total += left + right
        elif depth >= max_depth:
            raise NumericFailure(f"quadrature did not converge on [{a}, {b}]")
        else:
            stack.append((a, mid, left, depth + 1))
            stack.append((mid, b, right, depth + 1))
    return total


# -- lasso H-functions ---------------------------------------------------------

def lasso_inner(theta, omega, method="closed"):
    """The four Gaussian expectations used by the lasso H-functions.

    Returns ``(m, s, A, B)`` with ``m = E ST_w(|G|)``, ``s = E ST_w(G) G``,
    ``A = E[(w - G sign(theta + G)) 1{|theta + G| > w}]`` and
    ``B = E[(ST_w(theta + G) - theta 1{|theta + G| > w}) G]``.
    ``method="quadrature"`` evaluates them by :func:`gauss_expectation`.
    """
    if method == "closed":
        return (st_mean_abs(omega), st_corr(omega),
                float(st_grad_kernel(theta, omega)), float(st_cross_moment(theta, omega)))
    if method != "quadrature":
        raise InvalidParameterError(f"unknown method {method!r}")
    w, th = float(omega), float(theta)
    bp = (-w, w, w - th, -w - th)
    act = lambda z: np.abs(th + z) > w
    m = gauss_expectation(lambda z: np.maximum(np.abs(z) - w, 0.0), breakpoints=bp)
    s = gauss_expectation(lambda z: np.sign(z) * np.maximum(np.abs(z) - w, 0.0) * z, breakpoints=bp)
    A = gauss_expectation(lambda z: (w - z * np.sign(th + z)) * act(z), breakpoints=bp)
    B = gauss_expectation(
        lambda z: (np.sign(th + z) * np.maximum(np.abs(th + z) - w, 0.0) - th * act(z)) * z,
        breakpoints=bp)
    return m, s, A, B


def _theta_grid(grid=LASSO_THETA_GRID):
    lo, hi, step = grid
    return lo + step * np.arange(int(round((hi - lo) / step)) + 1)


def _lasso_h(omega, ratio, which, grid):
    w = check_scalar(omega, "omega", lo=0, lo_open=True)
    ratio = check_scalar(ratio, "ratio", lo=1, lo_open=True)
    th = _theta_grid(grid)
    m = st_mean_abs(w)
    s = st_corr(w)
    A = np.append(st_grad_kernel(th, w), w)
    B = np.append(st_cross_moment(th, w), 1.0)
    th = np.append(th, np.inf)
    x = A / m
    ok = 1.0 + x >= ratio
    if not np.any(ok):
        return 1.0, np.nan
    den = 2.0 * np.log1p(x[ok])
    if which == 1:
        num = 1.0 + s * x[ok]
    else:
        num = np.abs(B[ok] + (s / m) * A[ok])
    q = num / den
    i = int(np.argmax(q))
    return float(1.0 - q[i]), float(th[ok][i])


def lasso_h1(omega, ratio=2.3, grid=LASSO_THETA_GRID, return_argsup=False):
    """``1 - sup_theta (1 + P(|G|>w) x) / (2 log(1 + x))`` with ``x = A / m``.

    The sup runs over grid values of theta (plus theta = inf) that satisfy
    ``1 + x >= ratio``, the condition linking theta to the undersampling
    ratio ``p/k``.  With no admissible theta the sup is empty and the value
    is 1.
    """
    val, arg = _lasso_h(omega, ratio, 1, grid)
    return (val, arg) if return_argsup else val


def lasso_h2(omega, ratio=2.3, grid=LASSO_THETA_GRID, return_argsup=False):
    """``1 - sup_theta |B + (s/m) A| / (2 log(1 + x))``, same theta range as :func:`lasso_h1`."""
    val, arg = _lasso_h(omega, ratio, 2, grid)
    return (val, arg) if return_argsup else val


# -- robust H-functions ----------------------------------------------------------

def clipped_second_moment(tau):
    """``E min(G^2, tau^2)``."""
    t = np.asarray(tau, dtype=float)
    out = (2 * ndtr(t) - 1) - 2 * t * _pdf(t) + 2 * t**2 * ndtr(-t)
    return float(out) if out.ndim == 0 else out


def robust_h1(tau):
    """``(1 / P(|G| > tau)) (1 - E min(G^2, tau^2) / P(|G| < tau))``."""
    t = check_scalar(tau, "tau", lo=0, lo_open=True)
    inside = 2 * ndtr(t) - 1
    return float((1.0 - clipped_second_moment(t) / inside) / (2 * ndtr(-t)))


def _robust_ratio(tau, eps):
    lo, hi = -tau - eps, tau - eps
    m0 = _interval_prob(lo, hi)
    m1 = _pdf(lo) - _pdf(hi)
    m2 = m0 - (hi * _pdf(hi) - lo * _pdf(lo))
    num = eps * m1 + m2
    den = eps**2 * m0 + 2 * eps * m1 + m2 + tau**2 * (ndtr(lo) + ndtr(-hi))
    return np.abs(num) / den


def _robust_sup(tau, eps_lo, step, span):
    count = int(round((tau + span - eps_lo) / step))
    eps = eps_lo + step * np.arange(count + 1)
    r = _robust_ratio(tau, eps)
    i = int(np.argmax(r))
    if r[i] <= 0.0:
        return 0.0, np.inf
    return float(r[i]), float(eps[i])


def robust_h2(tau, step=ROBUST_EPS_STEP, span=ROBUST_EPS_SPAN, return_argsup=False):
    """``1 - sup_eps |E[G (eps + G) 1{|eps + G| < tau}]| / E[min((eps + G)^2, tau^2)]``.

    Numerator and denominator are truncated Gaussian moments; the sup runs
    over ``eps`` in ``[0, tau + span]`` (the ratio is even in eps) plus the
    limit ``eps -> inf`` where it vanishes.
    """
    t = check_scalar(tau, "tau", lo=0, lo_open=True)
    sup, arg = _robust_sup(t, 0.0, step, span)
    return (1.0 - sup, arg) if return_argsup else 1.0 - sup


def robust_h2_far_branch(tau, step=ROBUST_EPS_STEP, span=ROBUST_EPS_SPAN, return_argsup=False):
    """The same expression with the sup restricted to ``eps >= tau``."""
    t = check_scalar(tau, "tau", lo=0, lo_open=True)
    sup, arg = _robust_sup(t, t, step, span)
    return (1.0 - sup, arg) if return_argsup else 1.0 - sup


# -- curves -----------------------------------------------------------------------

FAMILIES = {
    "lasso-H1": lasso_h1,
    "lasso-H2": lasso_h2,
    "robust-H1": robust_h1,
    "robust-H2": robust_h2,
}


@dataclass(frozen=True, eq=False)
class HCurve:
    family: str
    grid: np.ndarray
    values: np.ndarray
    argsup: np.ndarray
    inner_sup_resolution: str


def parse_grid(spec):
    """``"start:stop:step"`` to an inclusive, strictly increasing grid."""
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError as err:
        raise InvalidParameterError(f"grid {spec!r} is not start:stop:step") from err
    if step <= 0 or stop < start:
        raise InvalidParameterError(f"grid {spec!r} is empty")
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def h_curve(family, grid, ratio=2.3):
    """Evaluate one H-function family on ``grid``."""
    if family not in FAMILIES:
        raise InvalidParameterError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise InvalidParameterError("empty grid")
    if np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("grid must be strictly increasing")
    vals, args = [], []
    for x in grid:
        if family.startswith("lasso"):
            v, a = FAMILIES[family](x, ratio=ratio, return_argsup=True)
            res = f"theta in [0, 20] step 0.01 and theta=inf; p/k={ratio}"
        elif family == "robust-H2":
            v, a = robust_h2(x, return_argsup=True)
            res = f"eps in [0, tau+{ROBUST_EPS_SPAN}] step {ROBUST_EPS_STEP} and eps=inf"
        else:
            v, a = robust_h1(x), np.nan
            res = "closed form"
        vals.append(v)
        args.append(a)
    values = np.array(vals)
    if not np.all(np.isfinite(values)):
        raise NumericFailure(f"non-finite {family} value on the grid")
    return HCurve(family, grid, values, np.array(args), res)
