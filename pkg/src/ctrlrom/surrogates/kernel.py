"""Sparse Gaussian-kernel regression with greedy center selection.

Centers are picked from the training inputs by maximizing the power
function, the pointwise worst-case interpolation error bound of the current
center set.  Selection, power updates and the interpolant itself are all
maintained in the Newton basis, the numerically stable incremental form:
the raw kernel matrix of a flat Gaussian kernel is catastrophically
ill-conditioned, while the Newton triangle has its selection-time power
values on the diagonal, which the stopping tolerance keeps away from zero.
With nonzero Tikhonov regularization the (well-conditioned) regularized
system on the selected centers is solved by Cholesky instead.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from ..errors import KernelConditioningError
from .base import CoefficientRegressor


def gaussian_kernel(x, y, beta):
    """k(x, y) = exp(-(beta * |x - y|)^2) for rows of x against rows of y."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    sq = np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)
    return np.exp(-(beta**2) * sq)


class KernelRegressor(CoefficientRegressor):
    kind = "kernel"

    def __init__(self, beta=1.0, p_greedy_tol=1e-10, regularization=0.0, seed=0):
        super().__init__(seed=seed)
        if beta <= 0:
            raise ValueError("kernel shape parameter must be positive")
        self.beta = float(beta)
        self.p_greedy_tol = float(p_greedy_tol)
        self.regularization = float(regularization)
        self.centers = None
        self.newton_triangle = None  # rows of the Newton basis at the centers
        self.coefficients = None

    def fit(self, data):
        """Greedy center selection and interpolation in the Newton basis.

        The squared power function starts at k(x, x) = 1 everywhere and
        shrinks by the squared Newton column of each accepted center; the
        interpolant is extended alongside, so the training residual at the
        selected centers vanishes by construction.
        """
        X = data.inputs()
        Y = data.targets()
        if X.shape[0] < 1:
            raise ValueError("need at least one training pair")
        n = X.shape[0]

        power = np.ones(n)
        newton = np.zeros((n, 0))
        residual = Y.astype(float).copy()
        coeffs = []
        selected = []
        while len(selected) < n:
            j = int(np.argmax(power))
            if power[j] < self.p_greedy_tol:
                break
            col = gaussian_kernel(X, X[j : j + 1], self.beta)[:, 0]
            if selected:
                col = col - newton @ newton[j]
            col = col / np.sqrt(power[j])
            c = residual[j] / col[j]
            residual = residual - np.outer(col, c)
            newton = np.column_stack([newton, col])
            power = np.maximum(power - col**2, 0.0)
            coeffs.append(c)
            selected.append(j)

        self.centers = np.ascontiguousarray(X[selected])
        self.newton_triangle = np.ascontiguousarray(newton[selected])
        self.coefficients = np.ascontiguousarray(coeffs)
        if self.regularization > 0.0:
            # regularized fit replaces pure interpolation on the centers
            kmat = gaussian_kernel(self.centers, self.centers, self.beta)
            kmat = kmat + self.regularization * np.eye(len(selected))
            try:
                factor = cho_factor(kmat)
            except np.linalg.LinAlgError as exc:
                raise KernelConditioningError(
                    f"kernel matrix on {len(selected)} centers is not factorizable; "
                    "increase the regularization or decrease beta"
                ) from exc
            direct = cho_solve(factor, Y[selected])
            # convert to Newton coefficients: N(x) = k(x, centers) L^{-T}
            self.coefficients = np.ascontiguousarray(self.newton_triangle.T @ direct)
        self.n_outputs = Y.shape[1]
        return self

    def _newton_values(self, x):
        """Newton basis functions of the selected centers at inputs x."""
        kvec = gaussian_kernel(x, self.centers, self.beta)
        # N(x) solves N(x) L^T = k(x, centers) with the unit-power diagonal
        # of the triangle bounded below by the selection tolerance
        return solve_triangular(self.newton_triangle, kvec.T, lower=True).T

    def _predict_one(self, x):
        return self._newton_values(x[None, :])[0] @ self.coefficients

    def power_function(self, x):
        """Squared power function of the selected centers at inputs x.

        Recomputed from the Newton representation rather than the greedy
        loop's running array, so it can audit the selection; it vanishes at
        the centers.
        """
        values = self._newton_values(np.atleast_2d(x))
        return np.maximum(1.0 - np.sum(values**2, axis=1), 0.0)

    def save(self, path):
        """Write the model as labelled CSV blocks."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# ctrlrom kernel model v2\n")
            fh.write(f"beta,{self.beta!r}\n")
            fh.write(f"regularization,{self.regularization!r}\n")
            fh.write(f"p_greedy_tol,{self.p_greedy_tol!r}\n")
            fh.write(f"n_centers,{self.centers.shape[0]}\n")
            fh.write(f"p,{self.centers.shape[1]}\n")
            fh.write(f"N,{self.n_outputs}\n")
            for label, block in (
                ("centers", self.centers),
                ("newton_triangle", self.newton_triangle),
                ("coefficients", self.coefficients),
            ):
                fh.write(label + "\n")
                for row in block:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "# ctrlrom kernel model v2":
            raise ValueError("not a kernel model file")
        meta = dict(ln.split(",", 1) for ln in lines[1:7])
        model = cls(
            beta=float(meta["beta"]),
            p_greedy_tol=float(meta["p_greedy_tol"]),
            regularization=float(meta["regularization"]),
        )
        m, p, N = int(meta["n_centers"]), int(meta["p"]), int(meta["N"])

        def block(label, rows, cols):
            start = lines.index(label) + 1
            data = [[float(v) for v in lines[start + i].split(",")] for i in range(rows)]
            return np.ascontiguousarray(np.array(data).reshape(rows, cols))

        model.centers = block("centers", m, p)
        model.newton_triangle = block("newton_triangle", m, m)
        model.coefficients = block("coefficients", m, N)
        model.n_outputs = N
        return model
