import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from levy_codebook import CodebookRegressor, DataError, bs_call


@pytest.fixture(scope="module")
def bs_rows():
    T = np.arange(1, 21) * 0.05
    K = np.exp(np.arange(-200, 201) * 0.01)
    TT, KK = np.meshgrid(T, K, indexing="ij")
    X = np.c_[TT.ravel(), KK.ravel()]
    return X, bs_call(1.0, X[:, 1], 1.0, 0.2) * 0 + np.array(
        [bs_call(1.0, k, t, 0.2) for t, k in X])


def test_fit_predict_black_scholes(bs_rows):
    X, y = bs_rows
    m = CodebookRegressor().fit(X, y)
    Xq = np.array([[1.0, 1.0], [0.5, 0.8], [0.33, 1.2]])
    ref = np.array([bs_call(1.0, k, t, 0.2) for t, k in Xq])
    assert np.max(np.abs(m.predict(Xq) - ref)) < 1e-5
    o = m.transform(Xq)
    assert np.allclose(o * Xq[:, 1] + np.maximum(1 - Xq[:, 1], 0), m.predict(Xq))
    k1 = m.codebook_.grid.u_index(1.0)
    assert abs(m.codebook_.values[10, k1] - (-0.02 - 0.02j)) < 1e-3


def test_params_and_clone():
    m = CodebookRegressor(cf_floor=1e-5)
    assert m.get_params()["cf_floor"] == 1e-5
    assert clone(m).set_params(du=0.1).du == 0.1


def test_input_validation(bs_rows):
    X, y = bs_rows
    with pytest.raises(NotFittedError):
        CodebookRegressor().predict(X[:3])
    with pytest.raises(DataError):
        CodebookRegressor().fit(X[:-1], y[:-1])
    with pytest.raises(ValueError):
        CodebookRegressor().fit(np.c_[X, X[:, :1]], y)
