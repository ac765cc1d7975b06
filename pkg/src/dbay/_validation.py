"""Input checks shared by the estimator wrappers."""

import numpy as np
from sklearn.utils.validation import check_array, check_X_y

from .exceptions import OutOfDomain


def check_unit_inputs(X, y=None):
    """Validate a single-feature input column on [0, 1] (and optional targets)."""
    if y is None:
        X = check_array(X, ensure_2d=False, dtype=float)
    else:
        X, y = check_X_y(X, y, ensure_2d=False, dtype=float, y_numeric=True)
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    if X.shape[1] != 1:
        raise ValueError(f"expected one input feature, got {X.shape[1]}")
    if np.any((X < 0.0) | (X > 1.0)):
        raise OutOfDomain("inputs must lie in [0, 1]")
    return X if y is None else (X, np.asarray(y, dtype=float))
