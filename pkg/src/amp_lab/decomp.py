"""Exact Gaussian decomposition of an AMP run, plus the auxiliary hat iterates.

Given the error iterates ``s_t``, ``beta_{t+1}`` and the values
``F_t(beta_t)``, ``G_t(s_t)``, the construction builds orthonormal bases

    a_t = normalised (I - U U^T) G_t(s_t),   b_t = normalised (I - V V^T) F_t(beta_t)

the projected designs ``X_t = (I - U_{t-1} U_{t-1}^T) X (I - V_{t-1} V_{t-1}^T)``
and the Gaussian vectors

    phi_k = X_k b_k + sum_{i<k} g_k^i a_i
    psi_k = (I - b_k b_k^T) X_k^T a_k + sum_{i<=k} q_k^i b_i

with fresh ``g, q ~ N(0, 1/n)`` from the auxiliary stream.  Then, with
``gamma_t^k = <F_t(beta_t), b_k>`` and ``alpha_t^k = <G_t(s_t), a_k>``,

    s_t        = sum_k gamma_t^k phi_k + xi_t,    xi_t in span(a_1..a_{t-1})
    beta_{t+1} = sum_k alpha_t^k psi_k + zeta_t,  zeta_t in span(b_1..b_t)

Both residuals are also assembled from their closed-form coordinates so the
identities can be checked rather than assumed.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _rng
from .amp import ErrorMaps
from .exceptions import DegenerateDirection, InvalidParameterError

DEFAULT_BUDGET = 4_000_000
_DEGENERATE = 1e-12


def _project_out(vec, basis):
    """``(I - B B^T) vec`` with one re-orthogonalisation pass."""
    if basis.shape[1] == 0:
        return vec.copy()
    w = vec - basis @ (basis.T @ vec)
    return w - basis @ (basis.T @ w)


@dataclass(eq=False)
class DecompState:
    """Decomposition objects through step ``T``.

    Lists are indexed from zero, so entry ``t - 1`` belongs to iteration
    ``t``.  ``g_aux[k - 1]`` holds ``g_k^1..g_k^{k-1}`` and ``q_aux[k - 1]``
    holds ``q_k^1..q_k^k``.  ``xi_closed`` / ``zeta_closed`` are the
    residuals rebuilt from their span coordinates.
    """

    X: np.ndarray
    aux: object = None
    budget: int = DEFAULT_BUDGET
    U: np.ndarray = None
    V: np.ndarray = None
    X_t: np.ndarray = None
    phi: list = field(default_factory=list)
    psi: list = field(default_factory=list)
    g_aux: list = field(default_factory=list)
    q_aux: list = field(default_factory=list)
    gamma: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    xi: list = field(default_factory=list)
    zeta: list = field(default_factory=list)
    xi_closed: list = field(default_factory=list)
    zeta_closed: list = field(default_factory=list)
    u: list = field(default_factory=list)
    v: list = field(default_factory=list)
    stopped: str = None

    def __post_init__(self):
        n, p = self.X.shape
        self.U = np.zeros((n, 0))
        self.V = np.zeros((p, 0))
        self.materialized = n * p <= self.budget
        if self.materialized:
            self.X_t = np.array(self.X, dtype=float, copy=True)

    @property
    def T(self):
        return len(self.gamma)

    # -- construction steps --------------------------------------------------

    def extend_bases(self, G_val, F_val):
        """Append ``a_t`` and ``b_t``; raises :class:`DegenerateDirection`."""
        t = self.T + 1
        if t > min(self.X.shape):
            raise DegenerateDirection(f"step {t} exceeds min(n, p)", t)
        b = _project_out(F_val, self.V)
        nb = np.linalg.norm(b)
        if nb < _DEGENERATE * max(1.0, np.linalg.norm(F_val)):
            raise DegenerateDirection(f"F direction degenerate at step {t}", t)
        a = _project_out(G_val, self.U)
        na = np.linalg.norm(a)
        if na < _DEGENERATE * max(1.0, np.linalg.norm(G_val)):
            raise DegenerateDirection(f"G direction degenerate at step {t}", t)
        self._U_prev, self._V_prev = self.U, self.V
        self.U = np.column_stack([self.U, a / na])
        self.V = np.column_stack([self.V, b / nb])

    def _Xt_b(self, b):
        if self.materialized:
            return self.X_t @ b
        return _project_out(self.X @ _project_out(b, self._V_prev), self._U_prev)

    def _Xt_T_a(self, a):
        if self.materialized:
            return self.X_t.T @ a
        return _project_out(self.X.T @ _project_out(a, self._U_prev), self._V_prev)

    def draw_phi_psi(self):
        """Append ``phi_t`` and ``psi_t`` using fresh auxiliary Gaussians."""
        n = self.X.shape[0]
        t = self.U.shape[1]
        a, b = self.U[:, -1], self.V[:, -1]
        g = _rng.normals(self.aux, t - 1) / np.sqrt(n)
        q = _rng.normals(self.aux, t) / np.sqrt(n)
        phi = self._Xt_b(b) + self._U_prev @ g
        w = self._Xt_T_a(a)
        psi = w - b * (b @ w) + self.V @ q
        if self.materialized:
            self.X_t -= np.outer(a, a @ self.X_t)
            self.X_t -= np.outer(self.X_t @ b, b)
        self.phi.append(phi)
        self.psi.append(psi)
        self.g_aux.append(g)
        self.q_aux.append(q)

    def compute_coefficients(self, G_val, F_val):
        """``alpha_t = U^T G_t(s_t)``, ``gamma_t = V^T F_t(beta_t)``."""
        alpha = self.U.T @ G_val
        gamma = self.V.T @ F_val
        self.alpha.append(alpha)
        self.gamma.append(gamma)
        return alpha, gamma

    def residuals(self, s_t, beta_next, F_mean, G_mean, F_val, G_val):
        """``xi_t``, ``zeta_t`` by subtraction and from span coordinates."""
        t = self.T
        gam, alp = self.gamma[-1], self.alpha[-1]
        Phi = np.column_stack(self.phi)
        Psi = np.column_stack(self.psi)
        u = Phi @ gam
        v = Psi @ alp
        xi = s_t - u
        zeta = beta_next - v
        prev_alpha = self.alpha[-2] if t > 1 else np.zeros(0)
        c_xi = np.empty(t - 1)
        for k in range(1, t):
            qk = self.q_aux[k - 1]
            c = self.psi[k - 1] @ F_val - F_mean * prev_alpha[k - 1] - qk @ gam[:k]
            c -= sum(gam[j - 1] * self.g_aux[j - 1][k - 1] for j in range(k + 1, t + 1))
            c_xi[k - 1] = c
        c_zeta = np.empty(t)
        for k in range(1, t + 1):
            c = self.phi[k - 1] @ G_val - G_mean * gam[k - 1] - self.g_aux[k - 1] @ alp[:k - 1]
            c -= sum(alp[j - 1] * self.q_aux[j - 1][k - 1] for j in range(k, t + 1))
            c_zeta[k - 1] = c
        self.xi.append(xi)
        self.zeta.append(zeta)
        self.xi_closed.append(self.U[:, :t - 1] @ c_xi)
        self.zeta_closed.append(self.V @ c_zeta)
        self.u.append(u)
        self.v.append(v)
        return xi, zeta

    # -- diagnostics -----------------------------------------------------------

    def span_defect(self, t):
        """Relative norms of the residual parts outside their spans."""
        xi, zeta = self.xi[t - 1], self.zeta[t - 1]
        out_xi = _project_out(xi, self.U[:, :t - 1])
        out_zeta = _project_out(zeta, self.V[:, :t])
        rel = lambda w, ref: np.linalg.norm(w) / max(np.linalg.norm(ref), 1e-300)
        return rel(out_xi, xi), rel(out_zeta, zeta)


def decompose(trace, aux_seed=None, t_max=None, budget=DEFAULT_BUDGET):
    """Decompose an AMP trace that carries its model.

    ``aux_seed`` selects the auxiliary Gaussian stream (default: the model's
    seed), keyed by the model's trial index.  Construction stops early, with
    ``state.stopped`` set, if a direction degenerates.
    """
    if trace.model is None:
        raise InvalidParameterError("decomposition needs a trace with its model")
    if trace.low_memory:
        raise InvalidParameterError("decomposition needs the full trace history")
    model = trace.model
    seed = model.seed if aux_seed is None else aux_seed
    gen = _rng.stream(seed, model.trial, _rng.AUX)
    state = DecompState(model.design, gen, budget)
    maps = ErrorMaps.from_trace(trace)
    T = trace.t_max if t_max is None else min(t_max, trace.t_max)
    n = model.n
    for t in range(1, T + 1):
        F_val, G_val = trace.F_value(t), trace.G_value(t)
        try:
            state.extend_bases(G_val, F_val)
        except DegenerateDirection as err:
            state.stopped = str(err)
            break
        state.draw_phi_psi()
        state.compute_coefficients(G_val, F_val)
        beta_t, s_t = trace.beta(t), trace.s(t)
        beta_next = trace[t].theta_next - model.signal
        F_mean = maps.F_deriv(t, beta_t).sum() / n
        G_mean = maps.G_deriv(t, s_t).sum() / n
        state.residuals(s_t, beta_next, F_mean, G_mean, F_val, G_val)
    state.maps = maps
    return state


@dataclass(eq=False)
class HatState:
    """Hat iterates; lists indexed so that entry ``t - 1`` is iteration ``t``.

    ``beta_hat[t - 1]`` and ``s_hat[t - 1]`` hold the hat iterates at step
    ``t`` (so ``s_hat[0] = u_1``, ``beta_hat[0] = v_1 = 0``).
    ``xi_hat_norm[t - 1]`` is ``||xi_t - sum_k alpha_hat_{t-1}^k G_k(s_k)||``
    and ``zeta_hat_norm[t - 1]`` is ``||zeta_t - sum_k gamma_hat_t^k F_k(beta_k)||``.
    """

    gamma_hat: list = field(default_factory=list)
    alpha_hat: list = field(default_factory=list)
    beta_hat: list = field(default_factory=list)
    s_hat: list = field(default_factory=list)
    xi_hat_norm: list = field(default_factory=list)
    zeta_hat_norm: list = field(default_factory=list)


def hat_sequences(state, trace):
    """Run the hat recursion over the steps the decomposition covers."""
    maps = state.maps
    model = trace.model
    n = model.n
    T = state.T
    mean = lambda x: float(np.sum(x)) / n
    u = state.u
    v = [np.zeros(model.p)] + state.v  # v[t - 1] = v_t
    s = [trace.s(t) for t in range(1, T + 1)]
    beta = [trace.beta(t) for t in range(1, T + 1)]
    beta.append(trace[T].theta_next - model.signal)
    Gs = [trace.G_value(t) for t in range(1, T + 1)]
    Fb = [trace.F_value(t) for t in range(1, T + 1)]
    hat = HatState()
    hat.s_hat.append(u[0].copy())
    hat.beta_hat.append(v[0].copy())
    hat.xi_hat_norm.append(np.linalg.norm(state.xi[0]))
    alpha_prev = np.zeros(0)
    for t in range(1, T + 1):
        gam_t = state.gamma[t - 1]
        g2 = gam_t @ gam_t
        if g2 < 1e-20:
            raise DegenerateDirection(f"||gamma_t||^2 vanishes at step {t}", t)
        s_hat = hat.s_hat[t - 1]
        dG_hat = maps.G_deriv(t, s_hat)
        gh = np.empty(t)
        for k in range(1, t):
            gh[k - 1] = alpha_prev[k - 1] * mean(dG_hat * maps.G_deriv(k, u[k - 1]))
        gh[t - 1] = (mean(dG_hat - maps.G_deriv(t, s[t - 1]))
                     + (u[t - 1] @ (Gs[t - 1] - maps.G(t, s_hat))) / g2)
        hat.gamma_hat.append(gh)
        zeta_hat = state.zeta[t - 1] - sum(gh[k - 1] * Fb[k - 1] for k in range(1, t + 1))
        hat.zeta_hat_norm.append(np.linalg.norm(zeta_hat))
        if t == T or t + 1 > len(maps.params) - 1:
            break
        beta_hat = v[t] + sum(gh[k - 1] * maps.F(k, v[k - 1]) for k in range(1, t + 1))
        hat.beta_hat.append(beta_hat)
        alp_t = state.alpha[t - 1]
        a2 = alp_t @ alp_t
        if a2 < 1e-20:
            raise DegenerateDirection(f"||alpha_t||^2 vanishes at step {t}", t)
        dF_hat = maps.F_deriv(t + 1, beta_hat)
        ah = np.empty(t)
        for k in range(1, t):
            ah[k - 1] = gh[k] * mean(dF_hat * maps.F_deriv(k + 1, v[k]))
        ah[t - 1] = (mean(dF_hat - maps.F_deriv(t + 1, beta[t]))
                     + (v[t] @ (maps.F(t + 1, beta[t]) - maps.F(t + 1, beta_hat))) / a2)
        hat.alpha_hat.append(ah)
        s_next = u[t] + sum(ah[k - 1] * maps.G(k, u[k - 1]) for k in range(1, t + 1))
        hat.s_hat.append(s_next)
        xi_hat = state.xi[t] - sum(ah[k - 1] * Gs[k - 1] for k in range(1, t + 1))
        hat.xi_hat_norm.append(np.linalg.norm(xi_hat))
        alpha_prev = ah
    return hat
