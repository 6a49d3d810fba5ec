"""AMP iterations for sparse (soft threshold) and robust (Huber) regression.

The recursion, with ``<v> = sum(v) / n`` for vectors of any length::

    r_t      = y - X f_t(theta_t) + <f_t'(theta_t)> / <g_{t-1}'(r_{t-1})> g_{t-1}(r_{t-1})
    theta_t+1 = X^T g_t(r_t) / <g_t'(r_t)> + f_t(theta_t)

started from ``theta_1 = 0``, ``r_0 = 0`` and ``g_0 = 0``.  Sparse mode uses
``f_t = ST_{tau_t}`` and ``g_t = id``; robust mode uses ``f_t = id`` and
``g_t(x) = (n/p) Psi(x, b_t)``.

State ``t`` holds ``r_t`` together with the step output ``theta_{t+1}``;
state 0 is the initialisation (``r_0 = 0``, ``theta_1 = 0``).
"""

from dataclasses import dataclass

import numpy as np

from ._optim import grid_golden_minimize
from ._validation import as_vector, check_count, check_finite, check_scalar
from .denoise import huber_Psi, huber_Psi_deriv, soft_threshold, soft_threshold_deriv
from .exceptions import CalibrationFailure, InvalidParameterError

MODES = ("sparse", "robust")

# Relative distance kept between a returned threshold (or Huber clip level)
# and the nearest breakpoint, so that active sets survive rounding.
_BREAK_MARGIN = 1e-11


@dataclass(frozen=True, eq=False)
class AmpState:
    """One committed AMP step.

    ``theta`` is the input ``theta_t``, ``r`` the residual ``r_t`` and
    ``theta_next`` the output ``theta_{t+1}``.  ``fx`` and ``gx`` cache
    ``f_t(theta_t)`` and ``g_t(r_t)``; ``f_mean``, ``g_mean`` are the
    derivative averages and ``onsager = f_mean / <g_{t-1}'>``.  ``jump`` marks
    a Huber calibration that landed on a discontinuity of the active count.
    """

    t: int
    theta: np.ndarray
    r: np.ndarray
    theta_next: np.ndarray
    param: float
    onsager: float
    f_mean: float
    g_mean: float
    fx: np.ndarray
    gx: np.ndarray
    jump: bool = False


def initial_state(n, p):
    z_n, z_p = np.zeros(n), np.zeros(p)
    return AmpState(0, z_p, z_n, z_p, np.nan, 0.0, 0.0, 1.0, z_p, z_n)


# -- calibration ------------------------------------------------------------

def tau_objective(X, y, theta, r_prev, taus):
    """``||y - X ST_tau(theta) + <ST_tau'(theta)> r_prev||`` for each tau."""
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    n = y.shape[0]
    out = np.empty(taus.shape[0])
    a = np.abs(theta)
    for start in range(0, taus.shape[0], 256):
        tt = taus[start:start + 256]
        st = np.sign(theta)[:, None] * np.maximum(a[:, None] - tt[None, :], 0.0)
        active = (a[:, None] > tt[None, :]).sum(axis=0) / n
        res = y[:, None] - X @ st + r_prev[:, None] * active[None, :]
        out[start:start + 256] = np.sqrt(np.einsum("ij,ij->j", res, res))
    return out


def _select_tau_exact(X, y, theta, r_prev):
    """Global minimiser over the piecewise-quadratic path in tau.

    Sorting ``|theta|`` decreasingly as ``m_1 >= m_2 >= ...``, the active set
    on ``[m_{j+1}, m_j)`` is the top ``j`` coordinates and the squared
    residual is a quadratic in tau there.  Each piece is minimised in closed
    form; pieces are visited by adding one design column at a time.
    """
    n = y.shape[0]
    a = np.abs(theta)
    order = np.argsort(-a, kind="stable")
    m = a[order]
    nz = int(np.count_nonzero(m))
    if nz == 0:
        return 0.0
    best_val, best_tau = float(y @ y), float(m[0])
    u = np.zeros(n)
    w = np.zeros(n)
    for j in range(1, nz + 1):
        i = order[j - 1]
        col = X[:, i]
        u += theta[i] * col
        w += np.sign(theta[i]) * col
        left = float(m[j]) if j < m.shape[0] else 0.0
        right = float(m[j - 1])
        if left >= right:
            continue
        base = y + (j / n) * r_prev - u
        aa, ab, bb = base @ base, base @ w, w @ w
        tau = -ab / bb if bb > 0 else left
        margin = min(_BREAK_MARGIN * right, 0.25 * (right - left))
        lo_edge = left + margin if left > 0 else 0.0
        tau = min(max(tau, lo_edge), right - margin)
        val = aa + 2.0 * tau * ab + tau * tau * bb
        if val < best_val or (val == best_val and tau < best_tau):
            best_val, best_tau = val, tau
    return best_tau


def select_tau(X, y, theta, r_prev, method="exact", n_grid=512, tol=1e-8):
    """Adaptive threshold ``argmin_{tau in [0, max|theta|]} ||r(tau)||``.

    ``method="exact"`` minimises over every linear piece of the path and is
    the default.  ``method="grid-golden"`` uses the shared grid plus golden
    section optimiser, which can stop in a local dip because the Onsager
    count makes the objective jump at every ``|theta_i|``.

    The exact minimiser is kept a relative ``1e-11`` inside its piece, so
    that no ``|theta_i|`` coincides with the threshold; this costs at most
    that much in objective.
    """
    theta = np.asarray(theta, dtype=float)
    r_prev = np.asarray(r_prev, dtype=float)
    top = float(np.max(np.abs(theta))) if theta.size else 0.0
    if top == 0.0:
        return 0.0
    if method == "exact":
        tau = _select_tau_exact(X, y, theta, r_prev)
    elif method == "grid-golden":
        tau, _ = grid_golden_minimize(
            lambda tt: tau_objective(X, y, theta, r_prev, tt), 0.0, top, n_grid, tol)
    else:
        raise InvalidParameterError(f"unknown tau method {method!r}")
    check_finite(np.array([tau]), "threshold")
    return float(tau)


def calibration_value(r, b, lam, p):
    """``(b / (1 + b)) * #{|r_i| < lam (1 + b)} / p``, i.e. ``<g'(r)>``."""
    k = np.count_nonzero(np.abs(r) < lam * (1.0 + b))
    return b / (1.0 + b) * k / p


def select_b(r, lam, n, p, tol=1e-6, b_max=1e12):
    """Huber parameter with ``<g_t'(r_t)> = 1``.

    Returns ``(b, jump)``.  Bisection on the nondecreasing calibration map
    stops once it is within ``tol`` of one.  When the map steps over one
    instead, the result is the jump location ``b = |r|_(k+1) / lam - 1``
    (where the one-sided limits straddle one), moved down by a relative
    ``1e-11`` so that no residual sits on the clip boundary, with
    ``jump=True``.  The map's value there is just below one.
    """
    lam = check_scalar(lam, "lambda", lo=0, lo_open=True)
    n, p = check_count(n, "n"), check_count(p, "p")
    if p >= n:
        raise InvalidParameterError("robust calibration needs p < n")
    a = np.sort(np.abs(np.asarray(r, dtype=float)))

    def h(b):
        k = np.searchsorted(a, lam * (1.0 + b), side="left")
        return b / (1.0 + b) * k / p

    hi = 1.0
    while h(hi) < 1.0 - tol:
        hi *= 2.0
        if hi > b_max:
            raise CalibrationFailure("no Huber parameter reaches calibration", (hi / 2.0, hi))
    if h(hi) <= 1.0 + tol:
        return hi, False
    lo = hi
    while True:
        lo /= 2.0
        if lo < 1e-300:
            raise CalibrationFailure("calibration map does not drop below one", (lo, hi))
        hl = h(lo)
        if abs(hl - 1.0) <= tol:
            return lo, False
        if hl < 1.0:
            break
        hi = lo
    while hi - lo > 4 * np.finfo(float).eps * hi:
        mid = 0.5 * (lo + hi)
        hm = h(mid)
        if abs(hm - 1.0) <= tol:
            return mid, False
        if hm < 1.0:
            lo = mid
        else:
            hi = mid
    k_lo = int(np.searchsorted(a, lam * (1.0 + lo), side="left"))
    edge = a[k_lo]
    gap = edge - a[k_lo - 1] if k_lo > 0 else edge
    clip = edge - min(_BREAK_MARGIN * edge, 0.25 * gap)
    return float(clip / lam - 1.0), True


# -- steps --------------------------------------------------------------------

def amp_step_sparse(X, y, prev, tau_method="exact"):
    """Soft-threshold AMP step ``t = prev.t + 1``."""
    n, p = X.shape
    t = prev.t + 1
    theta = prev.theta_next
    memory = prev.gx / prev.g_mean
    tau = select_tau(X, y, theta, memory, method=tau_method)
    fx = soft_threshold(theta, tau)
    f_mean = np.count_nonzero(np.abs(theta) > tau) / n
    r = y - X @ fx + f_mean * memory
    theta_next = X.T @ r + fx
    check_finite(r, "residual", t)
    check_finite(theta_next, "estimate", t)
    return AmpState(t, theta, r, theta_next, tau, f_mean / prev.g_mean, f_mean, 1.0, fx, r)


def amp_step_robust(X, y, prev, lam, tol=1e-6):
    """Huber AMP step ``t = prev.t + 1`` with calibrated ``b_t``."""
    n, p = X.shape
    t = prev.t + 1
    theta = prev.theta_next
    f_mean = p / n
    r = y - X @ theta + (f_mean / prev.g_mean) * prev.gx
    check_finite(r, "residual", t)
    b, jump = select_b(r, lam, n, p, tol)
    gx = (n / p) * huber_Psi(r, b, lam)
    g_mean = float(np.sum(huber_Psi_deriv(r, b, lam))) / p
    if g_mean <= 0:
        raise CalibrationFailure(f"empty Huber active set at iteration {t}", (b, b))
    theta_next = X.T @ gx / g_mean + theta
    check_finite(theta_next, "estimate", t)
    return AmpState(t, theta, r, theta_next, b, f_mean / prev.g_mean, f_mean, g_mean,
                    theta, gx, jump)


# -- traces -------------------------------------------------------------------

class AmpTrace:
    """Sequence of :class:`AmpState` (index = iteration) plus optional oracle.

    With a model attached, the error quantities ``beta_t = theta_t - theta*``,
    ``s_t = r_t - eps``, ``F_t(beta_t) = theta* - f_t(theta_t)`` and
    ``G_t(s_t) = g_t(r_t) / <g_t'(r_t)>`` are available per iteration.
    """

    def __init__(self, mode, states, model=None, lam=None, low_memory=False):
        self.mode = mode
        self.states = tuple(states)
        self.model = model
        self.lam = lam
        self.low_memory = low_memory

    def __len__(self):
        return len(self.states)

    def __getitem__(self, t):
        if self.low_memory:
            offset = self.states[-1].t - len(self.states) + 1
            if t < offset:
                raise IndexError(f"iteration {t} dropped in low-memory mode")
            return self.states[t - offset]
        return self.states[t]

    @property
    def t_max(self):
        return self.states[-1].t

    @property
    def params(self):
        """Calibrated parameters indexed by t (entry 0 is NaN)."""
        return np.array([s.param for s in self.states])

    @property
    def jumps(self):
        return np.array([s.jump for s in self.states])

    def _oracle(self):
        if self.model is None:
            raise InvalidParameterError("trace has no attached model")
        return self.model

    def beta(self, t):
        return self[t].theta - self._oracle().signal

    def s(self, t):
        return self[t].r - self._oracle().noise

    def F_value(self, t):
        return self._oracle().signal - self[t].fx

    def G_value(self, t):
        st = self[t]
        return st.gx / st.g_mean

    def summary(self):
        """Per-iteration arrays: risk, gamma_norm, alpha_norm, param (t >= 1)."""
        ts = [s.t for s in self.states if s.t >= 1]
        theta_star = self._oracle().signal
        return {
            "t": np.array(ts),
            "risk": np.array([np.linalg.norm(self[t].theta - theta_star) for t in ts]),
            "risk_next": np.array([np.linalg.norm(self[t].theta_next - theta_star) for t in ts]),
            "gamma_norm": np.array([np.linalg.norm(self.F_value(t)) for t in ts]),
            "alpha_norm": np.array([np.linalg.norm(self.G_value(t)) for t in ts]),
            "param": np.array([self[t].param for t in ts]),
        }


def amp_iterate(X, y, mode, t_max, lam=None, tau_method="exact", calib_tol=1e-6,
                keep_history=True):
    """Run ``t_max`` AMP steps on raw data; returns the list of states."""
    if mode not in MODES:
        raise InvalidParameterError(f"mode must be one of {MODES}")
    t_max = check_count(t_max, "t_max")
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    y = as_vector(y, "y", n)
    if mode == "robust":
        lam = 1.0 / np.sqrt(n) if lam is None else check_scalar(lam, "lambda", lo=0, lo_open=True)
        if p >= n:
            raise InvalidParameterError("robust AMP needs p < n")
    states = [initial_state(n, p)]
    for _ in range(t_max):
        if mode == "sparse":
            nxt = amp_step_sparse(X, y, states[-1], tau_method)
        else:
            nxt = amp_step_robust(X, y, states[-1], lam, calib_tol)
        states.append(nxt)
        if not keep_history and len(states) > 2:
            states.pop(0)
    return states, lam


def run_amp(model, mode, t_max, lam=None, tau_method="exact", calib_tol=1e-6,
            keep_history=True):
    """AMP on a :class:`~amp_lab.model.LinearModel`; returns an :class:`AmpTrace`.

    ``lam`` (robust only) defaults to ``1/sqrt(n)``.  ``keep_history=False``
    keeps the last two states only, which rules out the decomposition.
    """
    states, lam = amp_iterate(model.design, model.observations, mode, t_max, lam,
                              tau_method, calib_tol, keep_history)
    return AmpTrace(mode, states, model, lam, low_memory=not keep_history)


# -- error form -------------------------------------------------------------

class ErrorMaps:
    """The scalar maps ``F_t``, ``G_t`` of the error recursion.

    Sparse: ``F_t(b) = theta* - ST_{tau_t}(theta* + b)`` (``F_1`` is the
    constant ``theta*``) and ``G_t(s) = s + eps``.  Robust:
    ``F_t(b) = -b`` and ``G_t(s) = g_t(s + eps) / c_t`` where ``c_t`` is the
    derivative average of ``g_t`` at the actual iterate.

    ``params[t]`` holds ``tau_t`` or ``b_t``; ``scale[t]`` holds ``c_t``.
    """

    def __init__(self, model, mode, params, lam=None, scale=None):
        self.model = model
        self.mode = mode
        self.params = list(params)
        self.lam = lam
        self.scale = list(scale) if scale is not None else [1.0] * len(self.params)

    @classmethod
    def from_trace(cls, trace):
        return cls(trace.model, trace.mode, trace.params, trace.lam,
                   [s.g_mean for s in trace.states])

    def F(self, t, beta):
        ts = self.model.signal
        if self.mode == "robust":
            return -np.asarray(beta, dtype=float)
        if t == 1:
            return ts.copy()
        return ts - soft_threshold(ts + beta, self.params[t])

    def F_deriv(self, t, beta):
        if self.mode == "robust":
            return -np.ones_like(np.asarray(beta, dtype=float))
        if t == 1:
            return np.zeros_like(np.asarray(beta, dtype=float))
        return -soft_threshold_deriv(self.model.signal + beta, self.params[t])

    def _g(self, t, s):
        n, p = self.model.n, self.model.p
        return (n / p) * huber_Psi(s + self.model.noise, self.params[t], self.lam)

    def _g_deriv(self, t, s):
        n, p = self.model.n, self.model.p
        return (n / p) * huber_Psi_deriv(s + self.model.noise, self.params[t], self.lam)

    def G(self, t, s):
        if self.mode == "sparse":
            return s + self.model.noise
        return self._g(t, s) / self.scale[t]

    def G_deriv(self, t, s):
        if self.mode == "sparse":
            return np.ones_like(s)
        return self._g_deriv(t, s) / self.scale[t]


def error_form_step(model, maps, t, beta_t, G_prev):
    """One step of the error recursion.

    ``s_t = X F_t(beta_t) - <F_t'(beta_t)> G_{t-1}(s_{t-1})`` and
    ``beta_{t+1} = X^T G_t(s_t) - <G_t'(s_t)> F_t(beta_t)``.  In robust mode
    the normaliser ``c_t`` is set here from ``s_t``.  Returns
    ``(s_t, beta_next, G_t(s_t), F_t(beta_t))``.
    """
    X = model.design
    n = model.n
    F = maps.F(t, beta_t)
    F_mean = maps.F_deriv(t, beta_t).sum() / n
    s = X @ F - F_mean * G_prev
    if maps.mode == "robust":
        while len(maps.scale) <= t:
            maps.scale.append(1.0)
        maps.scale[t] = maps._g_deriv(t, s).sum() / n
    G = maps.G(t, s)
    G_mean = maps.G_deriv(t, s).sum() / n
    beta_next = X.T @ G - G_mean * F
    check_finite(s, "error residual", t)
    check_finite(beta_next, "error estimate", t)
    return s, beta_next, G, F


def run_error_form(model, mode, params, lam=None):
    """Run the error recursion with given ``params[t]`` for t = 1..len-1.

    Returns lists ``s[t]`` and ``beta[t]`` for t = 0..T+1 (``s[0] = 0``,
    ``beta[1] = -theta*``), so that ``theta_t = beta[t] + theta*`` and
    ``r_t = s[t] + eps`` can be compared with :func:`run_amp`.
    """
    params = list(params)
    T = len(params) - 1
    if mode == "robust" and lam is None:
        lam = 1.0 / np.sqrt(model.n)
    maps = ErrorMaps(model, mode, params, lam)
    s_hist = [np.zeros(model.n)]
    beta_hist = [np.full(model.p, np.nan), -model.signal.copy()]
    G_prev = np.zeros(model.n)
    for t in range(1, T + 1):
        s, beta_next, G_prev, _ = error_form_step(model, maps, t, beta_hist[t], G_prev)
        s_hist.append(s)
        beta_hist.append(beta_next)
    return s_hist, beta_hist
