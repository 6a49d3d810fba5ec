"""State evolution for the two AMP variants.

Expectations are over ``g ~ N(0, I/n)`` only; the realised signal
``theta*`` and noise ``eps`` are held fixed.

Sparse::

    gamma_1 = ||theta*||,  alpha_t^2 = gamma_t^2 + ||eps||^2
    tau_t   = argmin_tau st_risk(theta*, alpha_t, tau)
    gamma_{t+1}^2 = st_risk(theta*, alpha_t, tau_t)

Robust::

    b_t solves (b / (1 + b)) (1/p) sum_i P(|eps_i + gamma_t g_i| < lam (1 + b)) = 1
    alpha_t^2 = (n b_t / (p (1 + b_t)))^2 sum_i E min((eps_i + gamma_t g_i)^2, c^2),  c = lam (1 + b_t)
    gamma_{t+1}^2 = (p / n) alpha_t^2
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._optim import grid_golden_minimize
from ._validation import as_vector, check_count, check_scalar
from .denoise import huber_active_prob, huber_moment, st_risk, st_risk_grad_tau
from .exceptions import CalibrationFailure, InvalidParameterError, NumericFailure

TAU_CAP_SIGMAS = 20.0


@dataclass(frozen=True)
class FixedPoint:
    alpha: float
    gamma: float
    converged: bool
    iterations: int
    ratios: np.ndarray


@dataclass(frozen=True, eq=False)
class SeTrace:
    """State-evolution sequences indexed by iteration.

    ``alpha_star[t]`` and ``inner_param[t]`` are defined for ``t = 1..T`` and
    ``gamma_star[t]`` for ``t = 1..T+1``; index 0 holds NaN.
    """

    mode: str
    alpha_star: np.ndarray
    gamma_star: np.ndarray
    inner_param: np.ndarray
    eps_norm2: float
    n: int
    p: int
    fixed_point: FixedPoint = field(default=None)

    @property
    def t_max(self):
        return self.alpha_star.shape[0] - 1

    def rows(self):
        """``(t, alpha_star, gamma_star, inner_param)`` for t = 1..T."""
        return [(t, self.alpha_star[t], self.gamma_star[t], self.inner_param[t])
                for t in range(1, self.t_max + 1)]


def se_step_sparse(theta_star, eps_norm2, gamma_t, n, n_grid=512, tol=1e-8):
    """One sparse step; returns ``(alpha_t, tau_t, gamma_next)``.

    The threshold is searched on ``[0, max|theta*| + 20 alpha_t / sqrt(n)]``
    by the shared grid + golden-section routine, with a final Brent solve of
    the closed-form gradient when the optimum is interior.
    """
    theta_star = as_vector(theta_star, "theta_star")
    gamma_t = check_scalar(gamma_t, "gamma_t", lo=0)
    eps_norm2 = check_scalar(eps_norm2, "eps_norm2", lo=0)
    alpha = np.sqrt(gamma_t**2 + eps_norm2)
    if alpha == 0:
        raise InvalidParameterError("alpha_t = 0: zero signal and zero noise")
    cap = float(np.max(np.abs(theta_star), initial=0.0)) + TAU_CAP_SIGMAS * alpha / np.sqrt(n)
    tau, risk = grid_golden_minimize(
        lambda tt: st_risk(theta_star, alpha, tt, n), 0.0, cap, n_grid, tol,
        grad=lambda x: st_risk_grad_tau(theta_star, alpha, x, n))
    if not np.isfinite(risk):
        raise NumericFailure("non-finite state-evolution risk")
    return float(alpha), float(tau), float(np.sqrt(max(risk, 0.0)))


def robust_calibration(eps, gamma, lam, b, n, p):
    """Left side of the robust calibration equation minus one."""
    c = lam * (1.0 + b)
    return b / (1.0 + b) * float(np.sum(huber_active_prob(eps, gamma, c, n))) / p - 1.0


def se_step_robust(eps, lam, n, p, gamma_t, b_max=1e12):
    """One robust step; returns ``(b_t, alpha_t, gamma_next)``."""
    eps = as_vector(eps, "eps")
    lam = check_scalar(lam, "lambda", lo=0, lo_open=True)
    gamma_t = check_scalar(gamma_t, "gamma_t", lo=0, lo_open=True)
    if p >= n:
        raise InvalidParameterError("robust state evolution needs p < n")

    def cal(b):
        return robust_calibration(eps, gamma_t, lam, b, n, p)

    hi = 1.0
    while cal(hi) < 0:
        hi *= 2.0
        if hi > b_max:
            raise CalibrationFailure("state-evolution calibration has no root", (hi / 2, hi))
    lo = hi
    while cal(lo) >= 0:
        lo /= 2.0
        if lo < 1e-300:
            raise CalibrationFailure("state-evolution calibration has no root", (lo, hi))
    b = brentq(cal, lo, max(hi, 2 * lo), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    c = lam * (1.0 + b)
    alpha2 = (n * b / (p * (1.0 + b))) ** 2 * huber_moment(eps, gamma_t, c, n)
    gamma_next2 = (p / n) * alpha2
    return float(b), float(np.sqrt(alpha2)), float(np.sqrt(gamma_next2))


def _se_run(theta_star, eps, mode, t_max, lam, tol):
    theta_star = as_vector(theta_star, "theta_star")
    eps = as_vector(eps, "eps")
    n, p = eps.shape[0], theta_star.shape[0]
    if mode == "robust":
        lam = 1.0 / np.sqrt(n) if lam is None else lam
    elif mode != "sparse":
        raise InvalidParameterError(f"unknown mode {mode!r}")
    eps_norm2 = float(eps @ eps)
    alpha = [np.nan]
    gamma = [np.nan, float(np.linalg.norm(theta_star))]
    inner = [np.nan]
    converged = False
    for t in range(1, t_max + 1):
        if mode == "sparse":
            a, prm, g = se_step_sparse(theta_star, eps_norm2, gamma[t], n)
        else:
            prm, a, g = se_step_robust(eps, lam, n, p, gamma[t])
        alpha.append(a)
        inner.append(prm)
        gamma.append(g)
        if tol is not None and abs(g - gamma[t]) < tol:
            converged = True
            break
    return (np.array(alpha), np.array(gamma), np.array(inner), eps_norm2, n, p, converged)


def state_evolution(theta_star, eps, mode, t_max, lam=None):
    """Run ``t_max`` state-evolution steps; ``lam`` defaults to ``1/sqrt(n)``."""
    t_max = check_count(t_max, "t_max")
    alpha, gamma, inner, e2, n, p, _ = _se_run(theta_star, eps, mode, t_max, lam, None)
    return SeTrace(mode, alpha, gamma, inner, e2, n, p)


def contraction_ratios(gamma_star):
    """``|d_{t+1}| / |d_t|`` with ``d_t = gamma_{t+1}^2 - gamma_t^2``, for t >= 2.

    Entry ``i`` corresponds to ``t = i + 2``.
    """
    g2 = np.asarray(gamma_star, dtype=float)[1:] ** 2
    d = np.abs(np.diff(g2))
    with np.errstate(divide="ignore", invalid="ignore"):
        return d[1:] / d[:-1]


def se_fixed_point(theta_star, eps, mode, lam=None, tol=1e-10, t_cap=200):
    """Iterate until ``|gamma_{t+1} - gamma_t| < tol`` or ``t_cap`` steps.

    The returned trace carries a :class:`FixedPoint` with the contraction
    ratios; a non-converged run is flagged rather than raised.
    """
    check_scalar(tol, "tol", lo=0, lo_open=True)
    t_cap = check_count(t_cap, "t_cap")
    alpha, gamma, inner, e2, n, p, conv = _se_run(theta_star, eps, mode, t_cap, lam, tol)
    T = alpha.shape[0] - 1
    fp = FixedPoint(float(alpha[T]), float(gamma[T + 1]), conv, T, contraction_ratios(gamma))
    return SeTrace(mode, alpha, gamma, inner, e2, n, p, fp)


def se_for_model(model, mode, t_max, lam=None):
    return state_evolution(model.signal, model.noise, mode, t_max, lam)


def empirical_se(trace, se=None):
    """Empirical ``||gamma_t|| = ||F_t(beta_t)||`` and ``||alpha_t|| = ||G_t(s_t)||``.

    With a :class:`SeTrace`, also the gaps ``| ||gamma_t||^2 - gamma*_t^2 |``
    and ``| ||alpha_t||^2 - alpha*_t^2 |`` over the common range of t.
    """
    summ = trace.summary()
    out = {"t": summ["t"], "gamma_emp": summ["gamma_norm"], "alpha_emp": summ["alpha_norm"]}
    if se is not None:
        T = min(trace.t_max, se.t_max)
        ts = summ["t"][:T]
        out["gamma_gap2"] = np.abs(summ["gamma_norm"][:T] ** 2 - se.gamma_star[ts] ** 2)
        out["alpha_gap2"] = np.abs(summ["alpha_norm"][:T] ** 2 - se.alpha_star[ts] ** 2)
    return out
