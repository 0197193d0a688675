"""Dense linear-algebra kernels shared by every other module.

All routines work on plain numpy arrays.  Inner products are weighted
Euclidean products with a positive scalar weight; for the PDE benchmarks the
weight equals the spatial grid size, which makes the discrete norm consistent
with the L2 norm of the underlying functions.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError


@dataclass(frozen=True)
class InnerProduct:
    """Weighted Euclidean inner product <x, y> = w * sum(x_i * y_i)."""

    weight: float = 1.0

    def __post_init__(self):
        if not self.weight > 0.0:
            raise ValueError(f"inner-product weight must be positive, got {self.weight}")

    def dot(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
        return self.weight * float(np.dot(x, y))

    def norm(self, x):
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(self.weight) * np.linalg.norm(x))


def dotw(x, y, ip):
    """Weighted inner product of two equally sized vectors."""
    return ip.dot(x, y)


def normw(x, ip):
    """Norm induced by the weighted inner product."""
    return ip.norm(x)


def cg_solve(apply, b, ip, tol=1e-12, max_iter=None, x0=None):
    """Conjugate gradients for a self-adjoint positive-definite operator.

    ``apply`` maps a vector to a vector and must be linear, self-adjoint and
    positive-definite with respect to ``ip``.  Iterates until the residual
    norm (in ``ip``) drops to ``tol``; returns ``(x, n_iter)``.

    The recurrence residual drifts away from the true residual near the
    round-off floor, so whenever it signals convergence the true residual
    b - A x is recomputed; if that check fails, the iteration restarts from
    the current iterate.  The returned iterate therefore always satisfies
    the stopping criterion on the recomputed residual.

    Raises ConvergenceError carrying the best iterate if ``max_iter`` is
    exhausted first.  Since the weight is a scalar multiple of the identity,
    the iterates coincide with Euclidean CG, but running all inner products
    through ``ip`` keeps the stopping criterion in the problem norm.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    if not tol > 0.0:
        raise ValueError("cg tolerance must be positive")

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    best_x, best_res = x.copy(), np.inf
    iters = 0
    zero_start = x0 is None
    while True:
        r = b.copy() if zero_start and iters == 0 else b - apply(x)
        res_norm = normw(r, ip)
        if res_norm < best_res:
            best_x, best_res = x.copy(), res_norm
        if res_norm <= tol:
            return x, iters
        if iters >= max_iter:
            raise ConvergenceError(
                f"cg did not reach tol={tol:.3e} within {max_iter} iterations "
                f"(best verified residual {best_res:.3e})",
                best_x, best_res, max_iter,
            )
        p = r.copy()
        rs = dotw(r, r, ip)
        while iters < max_iter:
            Ap = apply(p)
            iters += 1
            pAp = dotw(p, Ap, ip)
            if pAp <= 0.0:
                raise ConvergenceError(
                    f"operator not positive-definite along search direction "
                    f"(p'Ap = {pAp:.3e})",
                    best_x, best_res, iters,
                )
            alpha = rs / pAp
            x = x + alpha * p
            r = r - alpha * Ap
            if normw(r, ip) <= tol:
                break  # verify against the recomputed residual
            rs_new = dotw(r, r, ip)
            p = r + (rs_new / rs) * p
            rs = rs_new


def gram_schmidt_extend(basis, v, ip, drop_tol=1e-10):
    """Orthonormalize ``v`` against an already orthonormal ``basis``.

    Modified Gram-Schmidt with exactly one re-orthogonalization pass.
    Returns the new unit vector, or ``None`` when the post-projection norm
    falls below ``drop_tol * normw(v)``, signalling (near-)linear dependence.
    """
    v = np.asarray(v, dtype=float)
    ref_norm = normw(v, ip)
    if ref_norm == 0.0:
        return None
    w = v.copy()
    for _ in range(2):
        for phi in basis:
            w = w - dotw(phi, w, ip) * phi
    norm_w = normw(w, ip)
    if norm_w < drop_tol * ref_norm:
        return None
    return w / norm_w


def trapezoid_quad(values, dt):
    """Trapezoidal rule on a uniform grid with spacing ``dt``."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] < 2:
        raise ValueError("need at least two nodes for trapezoidal quadrature")
    return float(dt * (values[0] / 2.0 + values[1:-1].sum() + values[-1] / 2.0))


def svd_singular_values(columns, ip):
    """Singular values (descending) of a snapshot set in the weighted norm.

    The snapshots are scaled by sqrt(weight) before the decomposition so the
    squared singular values are the eigenvalues of the Gram matrix taken in
    ``ip``.
    """
    mat = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    scaled = np.sqrt(ip.weight) * mat
    return np.linalg.svd(scaled, compute_uv=False)
