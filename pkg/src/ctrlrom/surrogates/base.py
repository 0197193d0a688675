"""Shared interface for parameter-to-coefficient regressors."""

import numpy as np


class CoefficientRegressor:
    """Base class for surrogates mapping parameters to reduced coefficients.

    Subclasses implement ``fit(training_data)`` and ``_predict_one(x)`` and
    set ``kind``.  Prediction is deterministic after fitting and returns an
    array whose length matches the basis size the model was trained against.
    """

    kind = "abstract"

    def __init__(self, seed=0):
        self.seed = int(seed)
        self.n_outputs = None

    def fit(self, data):
        raise NotImplementedError

    def _predict_one(self, x):
        raise NotImplementedError

    def predict(self, mu):
        if self.n_outputs is None:
            raise RuntimeError(f"{self.kind} model used before fitting")
        x = np.atleast_1d(np.asarray(mu, dtype=float))
        out = np.asarray(self._predict_one(x), dtype=float).reshape(-1)
        if out.shape[0] != self.n_outputs:
            raise RuntimeError(
                f"{self.kind} model produced {out.shape[0]} coefficients, "
                f"expected {self.n_outputs}"
            )
        return out
