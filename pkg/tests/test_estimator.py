import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rbfib import SphericalRBFInterpolator
from rbfib.sphere import bauer_spiral, sphere_embed


def test_fit_predict_smooth_field():
    sites = bauer_spiral(400)
    f = lambda s: np.exp(sphere_embed(s) @ [0.3, -0.5, 0.8])
    model = SphericalRBFInterpolator().fit(sites, f(sites))
    new = bauer_spiral(900)
    assert np.abs(model.predict(new) - f(new)).max() < 1e-4
    assert model.score(new, f(new)) > 0.999999


def test_vector_targets():
    sites = bauer_spiral(200)
    X = sphere_embed(sites)
    model = SphericalRBFInterpolator(kernel_exponent=5, max_degree=3).fit(sites, X)
    assert model.predict(sites[:5]).shape == (5, 3)
    np.testing.assert_allclose(model.predict(sites), X, atol=1e-6)


def test_params_and_errors():
    m = SphericalRBFInterpolator(max_degree=4)
    assert clone(m).get_params() == {"kernel_exponent": 7, "max_degree": 4}
    with pytest.raises(NotFittedError):
        m.predict(bauer_spiral(10))
    with pytest.raises(ValueError):
        m.fit(bauer_spiral(50), np.zeros(49))
