"""scikit-learn style wrapper: ``FrapRegressor().fit(t, F).predict(t)``."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .core import BleachSpec, FrapCurve, ModelParams, SpatialGrid, validate_params
from .estimation import FitOptions, fit
from .likelihood import default_grid, profile_1d
from .solver import SpotResponse


def _times(X) -> np.ndarray:
    X = check_array(X, ensure_2d=False, dtype=np.float64)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single time column, got shape {X.shape}")
        X = X[:, 0]
    return X


class FrapRegressor(BaseEstimator, RegressorMixin):
    """Fit (c, D, beta1, beta2) of the transport/diffusion FRAP model to a
    normalized recovery curve.

    ``X`` holds the sample times (seconds, first sample at 0) and ``y`` the
    normalized spot intensity. Fitted parameters are exposed as ``params_``
    and as ``c_``, ``D_``, ``beta1_``, ``beta2_``.
    """

    def __init__(self, c=0.05, D=0.25, beta1=1e-3, beta2=1e-3, domain_l=64.0, grid_n=128,
                 spot_diameter=5.0, u_fraction=0.5, n_starts=8, max_evals=400,
                 random_state=0, threads=1):
        self.c = c
        self.D = D
        self.beta1 = beta1
        self.beta2 = beta2
        self.domain_l = domain_l
        self.grid_n = grid_n
        self.spot_diameter = spot_diameter
        self.u_fraction = u_fraction
        self.n_starts = n_starts
        self.max_evals = max_evals
        self.random_state = random_state
        self.threads = threads

    def _response(self) -> SpotResponse:
        grid = SpatialGrid.square(self.domain_l, self.grid_n)
        return SpotResponse(grid, BleachSpec(diameter=self.spot_diameter), self.u_fraction)

    def _options(self) -> FitOptions:
        return FitOptions(max_evals=self.max_evals, n_starts=self.n_starts,
                          seed=self.random_state, threads=self.threads)

    def fit(self, X, y):
        t = _times(X)
        y = check_array(y, ensure_2d=False, dtype=np.float64)
        check_consistent_length(t, y)
        guess = validate_params(ModelParams(self.c, self.D, self.beta1, self.beta2))
        self.response_ = self._response()
        self.data_ = FrapCurve(t, y)
        res = fit(self.data_, guess, self.response_, opts=self._options())
        self.params_ = res.params
        self.c_, self.D_, self.beta1_, self.beta2_ = res.params.as_array()
        self.sse_ = res.sse
        self.n_evals_ = res.n_evals
        self.converged_ = res.converged
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.response_.values(self.params_, _times(X))

    def profile(self, name: str, sigma: float, n: int = 25):
        """Profile likelihood of one parameter around the fitted optimum."""
        check_is_fitted(self, "params_")
        grid = default_grid(name, self.params_, n)
        return profile_1d(self.data_, sigma, name, grid, self.response_, self.params_,
                          opts=self._options())
