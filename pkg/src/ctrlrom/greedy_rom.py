"""Weak-greedy construction of a reduced basis of final-time adjoints and
its certified online evaluation.

The offline loop repeatedly selects the training parameter with the largest
residual estimate, solves that parameter exactly, and extends an orthonormal
basis with the new final-time adjoint.  Online, the reduced coefficients for
a new parameter solve a small normal-equation system built from the images
of the basis vectors under the parameter's system operator; the residual of
that projection doubles as a rigorous error estimate at no extra cost.
"""

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import dynamics
from .errors import GramMatrixError, GreedyBudgetError
from .exact_solver import solve_exact
from .numerics import InnerProduct, gram_schmidt_extend, normw

log = logging.getLogger(__name__)

BASIS_FORMAT_MAGIC = b"CRB1"
BASIS_FORMAT_VERSION = 1


@dataclass
class GreedyStep:
    """One row of the greedy history."""

    basis_size: int
    estimated_max_error: float
    selected_param: np.ndarray | None = None
    true_error_at_selected: float | None = None


@dataclass
class ReducedBasis:
    """Orthonormal final-time adjoint snapshots with their provenance."""

    vectors: list  # list of 1-d arrays, pairwise orthonormal w.r.t. ip
    selected_params: list
    ip: InnerProduct
    tolerance_used: float
    family_name: str = ""
    history: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.vectors) != len(self.selected_params):
            raise ValueError("one selected parameter per basis vector required")

    @property
    def size(self):
        return len(self.vectors)

    @property
    def dim(self):
        return self.vectors[0].shape[0] if self.vectors else 0

    def matrix(self):
        """Basis vectors as the columns of an (n, N) array."""
        return np.column_stack(self.vectors) if self.vectors else np.zeros((0, 0))

    def combine(self, coeffs):
        """Linear combination sum_i coeffs[i] * vectors[i]."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.size,):
            raise ValueError(f"expected {self.size} coefficients, got {coeffs.shape}")
        return self.matrix() @ coeffs


@dataclass
class TrainingData:
    """Parameter/coefficient pairs collected by the offline greedy loop."""

    pairs: list  # list of (parameter array, coefficient array) tuples

    def __post_init__(self):
        sizes = {len(c) for _, c in self.pairs}
        if len(sizes) > 1:
            raise ValueError("all coefficient arrays must share the basis size")

    @property
    def n_pairs(self):
        return len(self.pairs)

    @property
    def n_coeffs(self):
        return len(self.pairs[0][1]) if self.pairs else 0

    def inputs(self):
        return np.array([np.atleast_1d(mu) for mu, _ in self.pairs])

    def targets(self):
        return np.array([c for _, c in self.pairs])


@dataclass
class ReducedSolution:
    """Reduced-space approximation of one optimal control problem."""

    coeffs: np.ndarray
    phiT_approx: np.ndarray
    control: dynamics.Trajectory
    estimated_error: float | None = None


def _solve_normal_equations(gram, proj, basis_size):
    try:
        factor = cho_factor(gram)
    except np.linalg.LinAlgError:
        factor = None
    if factor is None:
        jitter = 1e-14 * np.trace(gram) / max(basis_size, 1)
        try:
            factor = cho_factor(gram + jitter * np.eye(basis_size))
        except np.linalg.LinAlgError as exc:
            raise GramMatrixError(
                f"normal-equation Gram matrix singular at basis size {basis_size}",
                basis_size,
            ) from exc
    return cho_solve(factor, proj)


def project_coefficients(inst, basis, perturbed_states=None, rhs=None):
    """Project the right-hand side onto the span of the perturbed states.

    Computes (or reuses) x_i = (I + M Gramian) phi_i for every basis vector,
    then solves the normal equations for the coefficients of the orthogonal
    projection of the right-hand side onto span{x_i} in the weighted inner
    product.  Returns (coeffs, perturbed_states, rhs) so callers can cache
    the expensive pieces.
    """
    if basis.size == 0:
        raise ValueError("cannot project onto an empty basis")
    if rhs is None:
        rhs = dynamics.rhs_vector(inst)
    if perturbed_states is None:
        perturbed_states = np.column_stack(
            [dynamics.apply_system_operator(inst, phi) for phi in basis.vectors]
        )
    w = inst.ip.weight
    gram = w * (perturbed_states.T @ perturbed_states)
    proj = w * (perturbed_states.T @ rhs)
    coeffs = _solve_normal_equations(gram, proj, basis.size)
    return coeffs, perturbed_states, rhs


def cheap_estimator_from_cache(coeffs, perturbed_states, rhs, ip):
    """Residual estimator evaluated from cached operator images.

    Equals the full estimator at the reconstructed adjoint because
    (I + M Gramian) sum_i a_i phi_i = sum_i a_i x_i.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if perturbed_states.shape[1] != coeffs.shape[0]:
        raise ValueError("coefficient/state-column count mismatch")
    return normw(rhs - perturbed_states @ coeffs, ip)


def greedy_offline(
    family,
    train_set,
    tol,
    max_basis=50,
    cg_tol=1e-12,
    cg_max_iter=None,
    track_true_errors=False,
    drop_tol=1e-10,
):
    """Offline weak-greedy loop over a finite training set.

    Starts from the empty basis (approximate adjoint zero everywhere) and
    repeats: pick the training parameter with the largest residual estimate,
    stop if that estimate is at most ``tol``, otherwise solve it exactly,
    orthonormalize the new snapshot into the basis and refresh coefficients
    and estimates for the whole training set.  Only the image of the new
    basis vector has to be computed per parameter and iteration; previously
    cached columns stay valid because earlier basis vectors never change.

    Returns the reduced basis and the final coefficients of every training
    parameter.  Ties in the argmax resolve to the smallest training index.
    """
    if not train_set:
        raise ValueError("training set must not be empty")
    if not tol > 0:
        raise ValueError("greedy tolerance must be positive")

    train_set = [np.atleast_1d(np.asarray(mu, dtype=float)) for mu in train_set]
    instances = [family.build(mu) for mu in train_set]
    ip = instances[0].ip
    rhs = [dynamics.rhs_vector(inst) for inst in instances]

    n_train = len(train_set)
    columns = [np.zeros((inst.n, 0)) for inst in instances]
    coeffs = [np.zeros(0) for _ in range(n_train)]
    eta = np.array([normw(r, ip) for r in rhs])
    selectable = np.ones(n_train, dtype=bool)

    vectors, selected, history = [], [], []

    def make_basis():
        return ReducedBasis(
            vectors=list(vectors),
            selected_params=list(selected),
            ip=ip,
            tolerance_used=tol,
            family_name=family.name,
            history=list(history),
        )

    def make_training_data():
        return TrainingData(pairs=[(train_set[i], coeffs[i].copy()) for i in range(n_train)])

    while True:
        candidates = np.where(selectable)[0]
        if candidates.size == 0:
            log.warning("greedy ran out of selectable training parameters")
            history.append(GreedyStep(len(vectors), float(np.max(eta))))
            break
        j = candidates[int(np.argmax(eta[candidates]))]
        if eta[j] <= tol:
            history.append(GreedyStep(len(vectors), float(eta[j])))
            break
        if len(vectors) >= max_basis:
            history.append(GreedyStep(len(vectors), float(eta[j])))
            raise GreedyBudgetError(
                f"estimated error {eta[j]:.3e} still above tol {tol:.3e} "
                f"at max_basis = {max_basis}",
                make_basis(),
                make_training_data(),
            )

        exact = solve_exact(instances[j], cg_tol=cg_tol, max_iter=cg_max_iter)
        true_err = None
        if track_true_errors:
            if vectors:
                approx = np.column_stack(vectors) @ coeffs[j]
            else:
                approx = np.zeros(instances[j].n)
            true_err = normw(exact.phiT - approx, ip)
        new_vec = gram_schmidt_extend(vectors, exact.phiT, ip, drop_tol=drop_tol)
        if new_vec is None:
            log.warning(
                "snapshot for parameter %s is linearly dependent on the basis; "
                "excluding it from further selection",
                train_set[j],
            )
            selectable[j] = False
            continue
        history.append(GreedyStep(len(vectors), float(eta[j]), train_set[j], true_err))
        vectors.append(new_vec)
        selected.append(train_set[j])

        for i in range(n_train):
            x_new = dynamics.apply_system_operator(instances[i], new_vec)
            columns[i] = np.column_stack([columns[i], x_new])
            w = ip.weight
            gram = w * (columns[i].T @ columns[i])
            proj = w * (columns[i].T @ rhs[i])
            coeffs[i] = _solve_normal_equations(gram, proj, len(vectors))
            eta[i] = cheap_estimator_from_cache(coeffs[i], columns[i], rhs[i], ip)

    return make_basis(), make_training_data()


def rom_online(inst, basis, certify=True):
    """Evaluate the reduced model at one instance (Galerkin projection).

    Projects onto the perturbed-state span, reconstructs the approximate
    final-time adjoint and its control, and, if requested, certifies the
    result with the cached-residual estimator (no extra evolution solves).
    """
    if basis.size == 0:
        raise ValueError("reduced basis is empty")
    coeffs, states, rhs = project_coefficients(inst, basis)
    phi = basis.combine(coeffs)
    adj = dynamics.solve_adjoint_backward(inst, phi)
    control = dynamics.control_from_adjoint(inst, adj)
    est = cheap_estimator_from_cache(coeffs, states, rhs, inst.ip) if certify else None
    return ReducedSolution(coeffs=coeffs, phiT_approx=phi, control=control, estimated_error=est)


def save_basis(basis, path):
    """Write a reduced basis to disk (versioned binary format).

    Layout: 4-byte magic ``CRB1``, little-endian uint32 header length, a
    UTF-8 JSON header (format version, family name, n, N, tolerance,
    inner-product weight, selected parameters), then the basis matrix as
    column-major float64 little-endian raw bytes.
    """
    header = {
        "format_version": BASIS_FORMAT_VERSION,
        "family": basis.family_name,
        "n": basis.dim,
        "N": basis.size,
        "tolerance": basis.tolerance_used,
        "ip_weight": basis.ip.weight,
        "selected_params": [list(map(float, p)) for p in basis.selected_params],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(BASIS_FORMAT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.asfortranarray(basis.matrix()).astype("<f8").tobytes(order="F"))


def load_basis(path):
    """Read a reduced basis written by ``save_basis``."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BASIS_FORMAT_MAGIC:
            raise ValueError(f"not a reduced-basis file (magic {magic!r})")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header["format_version"] != BASIS_FORMAT_VERSION:
            raise ValueError(f"unsupported basis format version {header['format_version']}")
        n, N = header["n"], header["N"]
        data = np.frombuffer(fh.read(8 * n * N), dtype="<f8")
    mat = data.reshape((n, N), order="F")
    return ReducedBasis(
        vectors=[mat[:, i].copy() for i in range(N)],
        selected_params=[np.array(p) for p in header["selected_params"]],
        ip=InnerProduct(weight=header["ip_weight"]),
        tolerance_used=header["tolerance"],
        family_name=header["family"],
    )


def save_training_data(data, path):
    """Write training pairs as CSV: parameter columns, then coefficients."""
    p = len(data.pairs[0][0]) if data.pairs else 0
    N = data.n_coeffs
    cols = [f"mu_{i}" for i in range(p)] + [f"alpha_{i}" for i in range(N)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for mu, alpha in data.pairs:
            row = [repr(float(v)) for v in mu] + [repr(float(a)) for a in alpha]
            fh.write(",".join(row) + "\n")


def load_training_data(path, n_params):
    """Read training pairs written by ``save_training_data``."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("mu_"):
            raise ValueError("not a training-data CSV")
        pairs = []
        for line in fh:
            values = [float(v) for v in line.strip().split(",")]
            pairs.append((np.array(values[:n_params]), np.array(values[n_params:])))
    return TrainingData(pairs=pairs)
