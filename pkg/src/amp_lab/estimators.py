"""scikit-learn style wrappers around the AMP iterations.

Both estimators assume the usual AMP scaling: design entries of order
``1/sqrt(n)`` (columns of roughly unit norm) and no intercept.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .amp import amp_iterate


class _AmpRegressor(RegressorMixin, BaseEstimator):
    _mode = None

    def _run(self, X, y, **kw):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        states, lam = amp_iterate(X, y, self._mode, self.n_iter, **kw)
        self.n_iter_ = states[-1].t
        self.residual_ = states[-1].r
        self.params_ = np.array([s.param for s in states[1:]])
        return states, lam

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_


class SparseAMP(_AmpRegressor):
    """Soft-thresholding AMP with the adaptive (residual-minimising) threshold.

    Parameters
    ----------
    n_iter : int
        Number of AMP iterations.
    tau_method : {"exact", "grid-golden"}
        Threshold search; see :func:`amp_lab.amp.select_tau`.

    Attributes
    ----------
    coef_ : sparse estimate ``ST_{tau_T}(theta_T)``.
    pseudo_data_ : ``theta_{T+1}``, the unthresholded iterate.
    thresholds_ : the sequence ``tau_1..tau_T``.
    """

    _mode = "sparse"

    def __init__(self, n_iter=25, tau_method="exact"):
        self.n_iter = n_iter
        self.tau_method = tau_method

    def fit(self, X, y):
        states, _ = self._run(X, y, tau_method=self.tau_method)
        self.coef_ = states[-1].fx.copy()
        self.pseudo_data_ = states[-1].theta_next.copy()
        self.thresholds_ = self.params_
        return self


class HuberAMP(_AmpRegressor):
    """Robust AMP with a Huber score calibrated so that ``<g_t'> = 1``.

    Parameters
    ----------
    lam : float or None
        Huber knee; ``None`` means ``1/sqrt(n_samples)``.
    n_iter : int
    calib_tol : float
        Tolerance on the calibration equation.

    Attributes
    ----------
    coef_ : ``theta_{T+1}``.
    b_ : calibrated ``b_1..b_T``.
    jump_flags_ : True where calibration landed on a jump of the active count.
    """

    _mode = "robust"

    def __init__(self, lam=None, n_iter=25, calib_tol=1e-6):
        self.lam = lam
        self.n_iter = n_iter
        self.calib_tol = calib_tol

    def fit(self, X, y):
        states, lam = self._run(X, y, lam=self.lam, calib_tol=self.calib_tol)
        self.lam_ = lam
        self.coef_ = states[-1].theta_next.copy()
        self.b_ = self.params_
        self.jump_flags_ = np.array([s.jump for s in states[1:]])
        return self
