"""Scalar denoisers and their Gaussian statistics.

Two families are supported: soft thresholding ``ST_tau`` and the Huber score
``Psi(z, b) = b * psi(z / (1 + b); lam)`` where ``psi`` clamps to
``[-lam, lam]``.  Derivatives use the strict-inequality convention: they are
zero exactly on the kink.

The Gaussian statistics are closed forms built on ``scipy.special.ndtr``
(normal cdf).  Throughout, a vector ``g ~ N(0, I/n)`` perturbs the
argument, so each coordinate has standard deviation ``scale / sqrt(n)``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ._validation import as_vector, check_count, check_scalar
from .exceptions import InvalidParameterError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _pdf(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def _interval_prob(lo, hi):
    """P(lo < Z < hi) for standard normal Z, accurate in both tails."""
    lo, hi = np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float))
    out = np.empty(lo.shape)
    left = hi <= 0
    right = lo >= 0
    mid = ~(left | right)
    out[left] = ndtr(hi[left]) - ndtr(lo[left])
    out[right] = ndtr(-lo[right]) - ndtr(-hi[right])
    out[mid] = 1.0 - ndtr(lo[mid]) - ndtr(-hi[mid])
    return np.maximum(out, 0.0)


def _tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~np.isfinite(tau)) or np.any(tau < 0):
        raise InvalidParameterError("tau must be finite and non-negative")
    return tau


def soft_threshold(x, tau):
    """``sign(x) * max(|x| - tau, 0)``, elementwise."""
    tau = _tau(tau)
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def soft_threshold_deriv(x, tau):
    """Indicator of ``|x| > tau``; zero on the boundary."""
    tau = _tau(tau)
    return (np.abs(np.asarray(x, dtype=float)) > tau).astype(float)


def _lam_b(lam, b=None):
    check_scalar(lam, "lambda", lo=0, lo_open=True)
    if b is not None:
        check_scalar(b, "b", lo=0, lo_open=True)


def huber_psi(z, lam):
    """Clamp to ``[-lam, lam]``."""
    _lam_b(lam)
    return np.clip(np.asarray(z, dtype=float), -lam, lam)


def huber_Psi(z, b, lam):
    """Regularized Huber score ``b * psi(z / (1 + b); lam)``."""
    _lam_b(lam, b)
    return b * np.clip(np.asarray(z, dtype=float) / (1.0 + b), -lam, lam)


def huber_Psi_deriv(z, b, lam):
    """``b / (1 + b)`` where ``|z| < lam (1 + b)``, zero elsewhere."""
    _lam_b(lam, b)
    inside = np.abs(np.asarray(z, dtype=float)) < lam * (1.0 + b)
    return inside * (b / (1.0 + b))


@dataclass(frozen=True)
class DenoiserSpec:
    """A scalar denoiser with its parameter.

    ``family`` is ``"soft-threshold"`` (uses ``tau``) or ``"huber"`` (uses
    ``lam`` and ``b``).
    """

    family: str
    tau: float = 0.0
    lam: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if self.family == "soft-threshold":
            _tau(self.tau)
        elif self.family == "huber":
            _lam_b(self.lam, self.b)
        else:
            raise InvalidParameterError(f"unknown denoiser family {self.family!r}")

    def __call__(self, x):
        if self.family == "soft-threshold":
            return soft_threshold(x, self.tau)
        return huber_Psi(x, self.b, self.lam)

    def deriv(self, x):
        if self.family == "soft-threshold":
            return soft_threshold_deriv(x, self.tau)
        return huber_Psi_deriv(x, self.b, self.lam)

    @property
    def lipschitz(self):
        return 1.0 if self.family == "soft-threshold" else self.b / (1.0 + self.b)


# -- soft-threshold Gaussian statistics ------------------------------------

def _grouped_abs(theta):
    """Distinct |theta| values with multiplicities (risk only sees |theta|)."""
    return np.unique(np.abs(theta), return_counts=True)


def _st_risk_terms(mu, sigma, tau):
    """Per-coordinate E(ST_tau(mu + sigma Z) - mu)^2; broadcasts mu with tau."""
    u = (tau - mu) / sigma
    l = (-tau - mu) / sigma
    pu, pl = _pdf(u), _pdf(l)
    qu, cl = ndtr(-u), ndtr(l)
    above = tau**2 * qu - 2 * tau * sigma * pu + sigma**2 * (u * pu + qu)
    below = tau**2 * cl - 2 * tau * sigma * pl + sigma**2 * (cl - l * pl)
    middle = mu**2 * _interval_prob(l, u)
    return above + below + middle


def st_risk(theta, alpha, tau, n):
    """Exact ``E ||theta - ST_tau(theta + alpha g)||^2`` with ``g ~ N(0, I/n)``.

    ``tau`` may be an array, in which case one value per entry is returned.
    """
    theta = as_vector(theta, "theta")
    alpha = check_scalar(alpha, "alpha", lo=0, lo_open=True)
    n = check_count(n, "n")
    tau = _tau(tau)
    sigma = alpha / np.sqrt(n)
    mu, counts = _grouped_abs(theta)
    terms = _st_risk_terms(mu[:, None], sigma, np.atleast_1d(tau)[None, :])
    out = counts @ terms
    return float(out[0]) if tau.ndim == 0 else out


def st_grad_kernel(theta, omega):
    """``E[(omega - G sign(theta + G)) 1{|theta + G| > omega}]``, G standard normal.

    Even in ``theta``; increases from ``-2 (phi(omega) - omega Q(omega))`` at
    ``theta = 0`` to ``omega`` as ``|theta| -> inf``.
    """
    t = np.abs(np.asarray(theta, dtype=float))
    w = np.asarray(omega, dtype=float)
    return w * (ndtr(t - w) + ndtr(-w - t)) - _pdf(w - t) - _pdf(w + t)


def st_cross_moment(theta, omega):
    """``E[(ST_omega(theta + G) - theta 1{|theta + G| > omega}) G]``."""
    t = np.abs(np.asarray(theta, dtype=float))
    w = np.asarray(omega, dtype=float)
    return ndtr(t - w) + ndtr(-w - t) - t * _pdf(w - t) + t * _pdf(w + t)


def st_risk_grad_tau(theta, alpha, tau, n):
    """Derivative of :func:`st_risk` in ``tau``.

    Equals ``2 sigma sum_i A(|theta_i| / sigma, tau / sigma)`` where
    ``sigma = alpha / sqrt(n)`` and ``A`` is :func:`st_grad_kernel`.
    """
    theta = as_vector(theta, "theta")
    alpha = check_scalar(alpha, "alpha", lo=0, lo_open=True)
    n = check_count(n, "n")
    tau = _tau(tau)
    sigma = alpha / np.sqrt(n)
    mu, counts = _grouped_abs(theta)
    kern = st_grad_kernel(mu[:, None] / sigma, np.atleast_1d(tau)[None, :] / sigma)
    out = 2.0 * sigma * (counts @ kern)
    return float(out[0]) if tau.ndim == 0 else out


def st_mean_abs(omega):
    """``E[ST_omega(|G|)] = E[(|G| - omega)_+] = 2 (phi(omega) - omega Q(omega))``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise InvalidParameterError("omega must be non-negative")
    out = 2.0 * (_pdf(w) - w * ndtr(-w))
    return float(out) if out.ndim == 0 else out


def st_corr(omega):
    """``E[ST_omega(G) G] = P(|G| > omega)``."""
    w = np.asarray(omega, dtype=float)
    out = 2.0 * ndtr(-w)
    return float(out) if out.ndim == 0 else out


# -- Huber Gaussian statistics ----------------------------------------------

def _huber_sigma(gamma, n):
    gamma = check_scalar(gamma, "gamma", lo=0)
    n = check_count(n, "n")
    return gamma / np.sqrt(n)


def huber_active_prob(eps_i, gamma, c, n):
    """``P(|eps_i + gamma g| < c)`` with ``g ~ N(0, 1/n)``; vectorised in ``eps_i``."""
    c = check_scalar(c, "c", lo=0, lo_open=True)
    sigma = _huber_sigma(gamma, n)
    eps = np.asarray(eps_i, dtype=float)
    if sigma == 0:
        out = (np.abs(eps) < c).astype(float)
    else:
        out = _interval_prob((-c - eps) / sigma, (c - eps) / sigma)
    return float(out) if out.ndim == 0 else out


def huber_moment(eps, gamma, c, n=None):
    """``sum_i E[min((eps_i + gamma g_i)^2, c^2)]`` with ``g ~ N(0, I/n)``.

    ``n`` defaults to ``len(eps)``.  ``gamma = 0`` gives the deterministic
    limit ``sum_i min(eps_i^2, c^2)``.
    """
    eps = as_vector(eps, "eps")
    c = check_scalar(c, "c", lo=0, lo_open=True)
    sigma = _huber_sigma(gamma, eps.size if n is None else n)
    if sigma == 0:
        return float(np.sum(np.minimum(eps**2, c**2)))
    lo = (-c - eps) / sigma
    hi = (c - eps) / sigma
    m0 = _interval_prob(lo, hi)
    m1 = _pdf(lo) - _pdf(hi)
    m2 = m0 - (hi * _pdf(hi) - lo * _pdf(lo))
    outside = ndtr(lo) + ndtr(-hi)
    inside = eps**2 * m0 + 2 * eps * sigma * m1 + sigma**2 * m2
    return float(np.sum(inside + c**2 * outside))
