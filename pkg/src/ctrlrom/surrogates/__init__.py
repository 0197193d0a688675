"""Learned parameter-to-coefficient maps and their certified evaluation.

Three interchangeable regressors predict reduced coefficients from a
parameter: greedy sparse kernel interpolation, Gaussian process regression
and a small feedforward network.  Evaluating a prediction through the
reduced basis and certifying it with the residual estimator costs one
backward/forward evolution solve, independent of the basis size.
"""

from dataclasses import dataclass

import numpy as np

from .. import dynamics
from ..exact_solver import error_estimator
from ..numerics import normw
from .base import CoefficientRegressor
from .gpr import GPRegressor
from .kernel import KernelRegressor
from .mlp import MLPRegressor

REGRESSOR_CLASSES = {
    "kernel": KernelRegressor,
    "gpr": GPRegressor,
    "mlp": MLPRegressor,
}


def make_regressor(kind, **settings):
    """Instantiate a regressor by kind name ('kernel' | 'gpr' | 'mlp')."""
    try:
        cls = REGRESSOR_CLASSES[kind]
    except KeyError:
        raise ValueError(f"unknown regressor kind '{kind}'") from None
    return cls(**settings)


def load_model(path):
    """Load a persisted surrogate, dispatching on the file signature."""
    with open(path, "rb") as fh:
        head = fh.read(32)
    if head.startswith(b"CRM1"):
        return MLPRegressor.load(path)
    if head.startswith(b"# ctrlrom kernel"):
        return KernelRegressor.load(path)
    if head.startswith(b"# ctrlrom gpr"):
        return GPRegressor.load(path)
    raise ValueError(f"unrecognized surrogate model file: {path}")


def surrogate_online(inst, basis, model, certify=True):
    """Evaluate a fitted surrogate at one instance and reconstruct the control.

    The predicted coefficients are expanded in the reduced basis; the control
    follows from one backward adjoint solve.  Certification runs the full
    residual estimator, since no operator images are cached on this path.
    """
    from ..greedy_rom import ReducedSolution

    if model.n_outputs != basis.size:
        raise ValueError(
            f"model predicts {model.n_outputs} coefficients but basis has size {basis.size}"
        )
    coeffs = model.predict(_instance_parameter(inst, basis))
    phi = basis.combine(coeffs)
    adj = dynamics.solve_adjoint_backward(inst, phi)
    control = dynamics.control_from_adjoint(inst, adj)
    est = error_estimator(inst, phi) if certify else None
    return ReducedSolution(coeffs=coeffs, phiT_approx=phi, control=control, estimated_error=est)


def _instance_parameter(inst, basis):
    if getattr(inst, "parameter", None) is None:
        raise ValueError("instance does not carry its parameter; pass it explicitly")
    return inst.parameter


@dataclass
class AuditRow:
    """Per-pair record of the surrogate error decomposition."""

    parameter: np.ndarray
    coefficient_error: float
    adjoint_shift: float
    greedy_residual: float
    certified_error: float
    true_error: float | None
    a_priori_bound: float


@dataclass
class AuditReport:
    rows: list
    eps_tilde: float

    @property
    def max_coefficient_error(self):
        return max(r.coefficient_error for r in self.rows)

    @property
    def max_true_error(self):
        vals = [r.true_error for r in self.rows if r.true_error is not None]
        return max(vals) if vals else None

    def greedy_residuals_within_tolerance(self):
        """Whether every projected adjoint meets the offline stopping tolerance."""
        return all(r.greedy_residual <= self.eps_tilde for r in self.rows)


def ml_error_bound_audit(family, basis, model, data, eps_tilde, check_true_errors=True,
                         cg_tol=1e-12, cg_max_iter=None):
    """Decompose the surrogate error against its two-term a priori bound.

    For pairs with known reduced coefficients, reports the coefficient error
    (which equals the induced adjoint shift exactly, because the basis is
    orthonormal), the greedy residual of the projected adjoint, the certified
    residual of the predicted adjoint, and, optionally, the true error
    against the exact solve.  The a priori bound is the greedy residual plus
    the coefficient error.
    """
    from ..exact_solver import solve_exact
    from ..greedy_rom import cheap_estimator_from_cache, project_coefficients

    rows = []
    for mu, alpha in data.pairs:
        inst = family.build(mu)
        alpha_hat = model.predict(np.atleast_1d(mu))
        coeff_err = float(np.linalg.norm(alpha - alpha_hat))
        phi_proj = basis.combine(alpha)
        phi_hat = basis.combine(alpha_hat)
        shift = normw(phi_proj - phi_hat, inst.ip)
        _, states, rhs = project_coefficients(inst, basis)
        greedy_res = cheap_estimator_from_cache(alpha, states, rhs, inst.ip)
        certified = normw(rhs - states @ alpha_hat, inst.ip)
        true_err = None
        if check_true_errors:
            reference = solve_exact(inst, cg_tol=cg_tol, max_iter=cg_max_iter)
            true_err = normw(reference.phiT - phi_hat, inst.ip)
        rows.append(
            AuditRow(
                parameter=np.atleast_1d(mu),
                coefficient_error=coeff_err,
                adjoint_shift=shift,
                greedy_residual=greedy_res,
                certified_error=certified,
                true_error=true_err,
                a_priori_bound=greedy_res + coeff_err,
            )
        )
    return AuditReport(rows=rows, eps_tilde=eps_tilde)
