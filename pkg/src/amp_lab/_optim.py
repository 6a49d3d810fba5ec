"""One-dimensional minimisation: a coarse grid followed by golden section."""

import numpy as np
from scipy.optimize import brentq

from .exceptions import NumericFailure

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def golden_section(f, a, b, tol=1e-8, max_iter=200):
    """Golden-section search for a minimiser of ``f`` on ``[a, b]``."""
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def grid_golden_minimize(f_many, lo, hi, n_grid=512, tol=1e-8, grad=None):
    """Minimise a scalar function on ``[lo, hi]``.

    ``f_many`` maps an array of abscissae to objective values.  The grid
    minimiser (smallest abscissa on ties) brackets a golden-section search,
    whose result replaces the grid point only if strictly better.  With
    ``grad`` given and an interior optimum, the stationary point inside the
    final bracket is located by Brent's method and kept if it does not
    increase the objective beyond rounding.

    Returns ``(x, f(x))``.
    """
    if hi <= lo:
        return lo, float(f_many(np.array([lo]))[0])
    grid = np.linspace(lo, hi, n_grid)
    vals = np.asarray(f_many(grid), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise NumericFailure("non-finite objective on the search grid")
    i = int(np.argmin(vals))
    best_x, best_f = float(grid[i]), float(vals[i])
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]

    def f1(x):
        return float(f_many(np.array([x]))[0])

    x, fx = golden_section(f1, a, b, tol)
    if not np.isfinite(fx):
        raise NumericFailure("non-finite objective in golden-section search")
    if fx < best_f:
        best_x, best_f = x, fx
    if grad is not None and lo < best_x < hi:
        ga, gb = grad(a), grad(b)
        if ga < 0 < gb:
            root = brentq(grad, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            froot = f1(root)
            if froot <= best_f + 8 * np.finfo(float).eps * abs(best_f):
                best_x, best_f = root, froot
    return best_x, best_f
