"""Gaussian process regression with likelihood-optimized kernel parameters.

The covariance is a scaled squared-exponential kernel with amplitude c and
length scale l searched over fixed boxes.  Outputs are normalized to zero
mean and unit variance per coefficient before fitting; the prediction is
the posterior mean, de-normalized.  Hyper-parameters maximize the summed
log-marginal likelihood over all outputs via a multi-start coordinate-wise
golden-section search in log space, which keeps the fit derivative-free,
deterministic and inside the boxes.
"""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ..errors import TrainingError
from .base import CoefficientRegressor

C_BOUNDS = (0.1, 1000.0)
L_BOUNDS = (0.001, 1000.0)
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def _sq_dists(x, y):
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    return np.sum((x[:, None, :] - y[None, :, :]) ** 2, axis=-1)


def rbf_kernel(x, y, c, length):
    return c * np.exp(-_sq_dists(x, y) / (2.0 * length**2))


def log_marginal_likelihood(X, Y, c, length, jitter):
    """Summed log-marginal likelihood of all output columns under one kernel."""
    n = X.shape[0]
    K = rbf_kernel(X, X, c, length) + jitter * np.eye(n)
    try:
        factor = cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        return -np.inf
    alpha = cho_solve(factor, Y)
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    n_out = Y.shape[1]
    quad = float(np.sum(Y * alpha))
    return -0.5 * quad - 0.5 * n_out * (logdet + n * np.log(2.0 * np.pi))


def _golden_max(f, lo, hi, iters=20):
    """Golden-section maximization of a scalar function on [lo, hi]."""
    a, b = lo, hi
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = f(x1)
    return (x1, f1) if f1 >= f2 else (x2, f2)


class GPRegressor(CoefficientRegressor):
    kind = "gpr"

    def __init__(self, restarts=10, jitter=1e-3, seed=0, sweeps=3, line_iters=20):
        super().__init__(seed=seed)
        self.restarts = int(restarts)
        self.jitter = float(jitter)
        self.sweeps = int(sweeps)
        self.line_iters = int(line_iters)
        self.c = None
        self.length = None
        self.inputs = None
        self.alpha = None
        self.y_mean = None
        self.y_std = None

    def fit(self, data):
        X = data.inputs()
        Y = data.targets()
        if X.shape[0] < 2:
            raise ValueError("need at least two training pairs")
        self.y_mean = Y.mean(axis=0)
        std = Y.std(axis=0)
        self.y_std = np.where(std > 0.0, std, 1.0)
        Yn = (Y - self.y_mean) / self.y_std

        log_c_box = np.log10(C_BOUNDS)
        log_l_box = np.log10(L_BOUNDS)
        rng = np.random.default_rng(self.seed)
        starts = rng.uniform(
            [log_c_box[0], log_l_box[0]], [log_c_box[1], log_l_box[1]], size=(self.restarts, 2)
        )

        def lml(log_c, log_l):
            return log_marginal_likelihood(X, Yn, 10.0**log_c, 10.0**log_l, self.jitter)

        best = (-np.inf, None)
        for log_c, log_l in starts:
            value = lml(log_c, log_l)
            for _ in range(self.sweeps):
                log_c, value = _golden_max(
                    lambda t: lml(t, log_l), *log_c_box, iters=self.line_iters
                )
                log_l, value = _golden_max(
                    lambda t: lml(log_c, t), *log_l_box, iters=self.line_iters
                )
            if np.isfinite(value) and value > best[0]:
                best = (value, (log_c, log_l))
        if best[1] is None:
            raise TrainingError("all gpr restarts failed to factorize the kernel matrix")

        self.c = float(10.0 ** best[1][0])
        self.length = float(10.0 ** best[1][1])
        self.inputs = np.ascontiguousarray(X)
        K = rbf_kernel(X, X, self.c, self.length) + self.jitter * np.eye(X.shape[0])
        self.alpha = np.ascontiguousarray(cho_solve(cho_factor(K, lower=True), Yn))
        self.n_outputs = Y.shape[1]
        return self

    def _predict_one(self, x):
        kvec = rbf_kernel(x[None, :], self.inputs, self.c, self.length)[0]
        return (kvec @ self.alpha) * self.y_std + self.y_mean

    def save(self, path):
        """Write the model as labelled CSV blocks."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# ctrlrom gpr model v1\n")
            fh.write(f"c,{self.c!r}\n")
            fh.write(f"length,{self.length!r}\n")
            fh.write(f"jitter,{self.jitter!r}\n")
            fh.write(f"n_inputs,{self.inputs.shape[0]}\n")
            fh.write(f"p,{self.inputs.shape[1]}\n")
            fh.write(f"N,{self.n_outputs}\n")
            fh.write("y_mean," + ",".join(repr(float(v)) for v in self.y_mean) + "\n")
            fh.write("y_std," + ",".join(repr(float(v)) for v in self.y_std) + "\n")
            fh.write("inputs\n")
            for row in self.inputs:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
            fh.write("alpha\n")
            for row in self.alpha:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "# ctrlrom gpr model v1":
            raise ValueError("not a gpr model file")
        meta = dict(ln.split(",", 1) for ln in lines[1:7])
        model = cls(jitter=float(meta["jitter"]))
        model.c = float(meta["c"])
        model.length = float(meta["length"])
        m, p, N = int(meta["n_inputs"]), int(meta["p"]), int(meta["N"])
        model.y_mean = np.array([float(v) for v in lines[7].split(",")[1:]])
        model.y_std = np.array([float(v) for v in lines[8].split(",")[1:]])
        start = lines.index("inputs") + 1
        model.inputs = np.array(
            [[float(v) for v in lines[start + i].split(",")] for i in range(m)]
        ).reshape(m, p)
        start = lines.index("alpha") + 1
        model.alpha = np.array(
            [[float(v) for v in lines[start + i].split(",")] for i in range(m)]
        ).reshape(m, N)
        model.n_outputs = N
        return model
