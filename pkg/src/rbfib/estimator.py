"""scikit-learn style wrapper around the spherical PHS interpolant."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .rbf import build_system, interpolate
from .sphere import as_sites


class SphericalRBFInterpolator(RegressorMixin, BaseEstimator):
    """Interpolate values given at sites on the unit sphere.

    ``X`` holds ``(theta, phi)`` parameter pairs, ``y`` one value (or a row of
    values) per site.  Fitting solves the saddle system once; ``predict``
    evaluates the interpolant at new sites.

    Parameters
    ----------
    kernel_exponent : int
        Odd power of the polyharmonic kernel ``r**k``.
    max_degree : int
        Highest degree of the appended spherical harmonics.
    """

    def __init__(self, kernel_exponent: int = 7, max_degree: int = 5):
        self.kernel_exponent = kernel_exponent
        self.max_degree = max_degree

    def fit(self, X, y):
        sites = as_sites(X)
        y = np.asarray(y, dtype=float)
        if y.shape[0] != sites.shape[0]:
            raise ValueError(f"X has {sites.shape[0]} sites but y has {y.shape[0]} rows")
        self.system_ = build_system(sites, self.kernel_exponent, self.max_degree)
        self.coef_ = interpolate(self.system_, y)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.coef_.evaluate(self.system_, as_sites(X))
