"""Exact optimal control via the final-time adjoint and its residual estimator.

The optimal final-time adjoint solves the dense, self-adjoint and positive
definite system (I + M Gramian) p = M (free-endpoint - target).  The system
is never assembled; conjugate gradients only needs operator applications,
each of which costs one backward and one forward evolution solve.
"""

from dataclasses import dataclass

import numpy as np

from . import dynamics
from .numerics import cg_solve, normw


@dataclass
class ExactSolution:
    """Optimal final-time adjoint with the reconstructed control and state."""

    phiT: np.ndarray
    control: dynamics.Trajectory
    state: dynamics.Trajectory
    cg_iters: int
    residual_norm: float


def solve_exact(inst, cg_tol=1e-12, max_iter=None):
    """Solve the optimal control problem for one instance.

    Runs matrix-free CG on the final-time adjoint system, then reconstructs
    the optimal control (backward adjoint solve, control formula) and the
    optimal state (forward solve under that control).
    """
    rhs = dynamics.rhs_vector(inst)
    phiT, iters = cg_solve(
        lambda p: dynamics.apply_system_operator(inst, p),
        rhs,
        inst.ip,
        tol=cg_tol,
        max_iter=max_iter if max_iter is not None else 10 * inst.n,
    )
    res = normw(rhs - dynamics.apply_system_operator(inst, phiT), inst.ip)
    assert res <= cg_tol, f"cg returned residual {res:.3e} above tol {cg_tol:.3e}"
    adj = dynamics.solve_adjoint_backward(inst, phiT)
    control = dynamics.control_from_adjoint(inst, adj)
    state = dynamics.solve_state_forward(inst, inst.x0, control)
    return ExactSolution(
        phiT=phiT, control=control, state=state, cg_iters=iters, residual_norm=res
    )


def error_estimator(inst, p, precomputed_rhs=None):
    """Residual norm of the final-time adjoint system at an approximation p.

    Two-sided bound on the distance to the optimal final-time adjoint: the
    value is never below the true error and exceeds it at most by the
    operator norm of (I + M Gramian).  Reuses a precomputed right-hand side
    when available, so one extra operator application suffices.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (inst.n,):
        raise ValueError(f"approximate adjoint must have length {inst.n}")
    rhs = dynamics.rhs_vector(inst) if precomputed_rhs is None else precomputed_rhs
    return normw(rhs - dynamics.apply_system_operator(inst, p), inst.ip)


_DENSE_ORACLE_LIMIT = 64


def assemble_dense_operator(inst):
    """Densely assemble I + M Gramian by applying it to all unit vectors.

    Test oracle only; guarded to small instances because assembly costs n
    full operator applications.
    """
    if inst.n > _DENSE_ORACLE_LIMIT:
        raise ValueError(
            f"dense assembly restricted to n <= {_DENSE_ORACLE_LIMIT}, got n = {inst.n}"
        )
    cols = [dynamics.apply_system_operator(inst, e) for e in np.eye(inst.n)]
    return np.column_stack(cols)


def operator_norm(dense_op):
    """Spectral norm of a densely assembled operator.

    With a scalar-weighted inner product the induced operator norm equals
    the Euclidean spectral norm.
    """
    return float(np.linalg.svd(dense_op, compute_uv=False)[0])
