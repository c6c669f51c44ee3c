"""Scikit-learn style wrapper around the price/codebook round trip.

``X`` rows are ``(T, K)`` pairs, ``y`` the call prices.  ``fit`` recovers the
codebook from a complete rectangular surface; ``predict`` prices new
``(T, K)`` rows from it and ``transform`` returns their modified prices.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DataError
from .pricing import PriceSurface, codebook_to_modified, modified_to_calls, surface_to_codebook

__all__ = ["CodebookRegressor", "surface_from_rows"]


def surface_from_rows(X, y, spot, time=0.0):
    """Assemble a :class:`PriceSurface` from ``(T, K)`` rows covering a full grid."""
    X, y = check_X_y(X, y, dtype=float, y_numeric=True)
    if X.shape[1] != 2:
        raise DataError(f"X must have 2 columns (T, K), got {X.shape[1]}")
    T, K = np.unique(X[:, 0]), np.unique(X[:, 1])
    if X.shape[0] != T.size * K.size:
        raise DataError("rows must cover every (T, K) pair exactly once")
    order = np.lexsort((X[:, 1], X[:, 0]))
    Xo = X[order]
    if not (np.array_equal(Xo[:, 0], np.repeat(T, K.size)) and np.array_equal(Xo[:, 1], np.tile(K, T.size))):
        raise DataError("rows must cover every (T, K) pair exactly once")
    return PriceSurface(spot, K, T, y[order].reshape(T.size, K.size), time)


class CodebookRegressor(BaseEstimator, RegressorMixin):
    """Fit a codebook to a call surface and price from it.

    Parameters mirror :func:`surface_to_codebook`; ``x_step`` is the
    log-moneyness step used when pricing.
    """

    def __init__(self, spot=1.0, u_max=40.0, du=0.05, cf_floor=1e-4, x_step=0.01):
        self.spot = spot
        self.u_max = u_max
        self.du = du
        self.cf_floor = cf_floor
        self.x_step = x_step

    def fit(self, X, y):
        surface = surface_from_rows(X, y, self.spot)
        self.codebook_ = surface_to_codebook(surface, u_max=self.u_max, du=self.du,
                                             cf_floor=self.cf_floor)
        self.maturities_ = surface.maturities
        self.n_features_in_ = 2
        return self

    def _slices(self, X):
        check_is_fitted(self, "codebook_")
        X = check_array(X, dtype=float)
        if X.shape[1] != 2:
            raise DataError(f"X must have 2 columns (T, K), got {X.shape[1]}")
        if np.any(X[:, 1] <= 0):
            raise DataError("strikes must be positive")
        x = np.log(X[:, 1] / self.spot)
        need = float(np.max(np.abs(x)))
        m = int(np.ceil(max(need, 2.0) / self.x_step - 1e-9))
        lattice = np.arange(-m, m + 1) * self.x_step
        out = {}
        for T in np.unique(X[:, 0]):
            out[T] = codebook_to_modified(self.codebook_, 0.0, float(T), x=lattice,
                                          method="grid", unresolved="gaussian")
        return X, x, out

    def predict(self, X):
        """Call prices for each ``(T, K)`` row."""
        X, _, slices = self._slices(X)
        res = np.empty(X.shape[0])
        for T, o in slices.items():
            rows = X[:, 0] == T
            res[rows] = modified_to_calls(o, self.spot, X[rows, 1])
        return res

    def transform(self, X):
        """Modified prices ``(C - (S - K)^+) / K`` for each row."""
        X = check_array(X, dtype=float)
        K = X[:, 1]
        return (self.predict(X) - np.maximum(self.spot - K, 0.0)) / K
