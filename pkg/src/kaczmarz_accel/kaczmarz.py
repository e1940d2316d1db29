"""Cyclic Kaczmarz sweeps, the block variant, and verification oracles.

A sweep projects the iterate onto each equation's hyperplane in natural row
order.  Individual steps never form a matrix-vector product: the update for
row i only needs the row itself and one inner product.  The explicit
projector matrices and spectral quantities live here too; they are
verification tools, guarded to small orders.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import CapabilityError, ConfigurationError, SingularityError
from .linalg import LinearSystem


def single_step(system, p, i):
    """Project p onto the hyperplane of equation i.

    Returns ``p + (b_i - (p, a_i)) / ||a_i||^2 * a_i``; afterwards the i-th
    residual component is zero.  Row indices are 0-based.
    """
    if not 0 <= i < system.order:
        raise IndexError(f"row index {i} out of range for order {system.order}")
    lo, hi, vals, inv_norm2 = system._rows[i]
    coeff = (system.rhs[i] - p[lo:hi] @ vals) * inv_norm2
    out = np.array(p, dtype=float, copy=True)
    out[lo:hi] += coeff * vals
    return out


def _sweep_inplace(system, p):
    """Run one full cycle in place.

    Returns (p, lambdas, gaps) where lambdas are the per-step projection
    coefficients and gaps[i] = b_i - (p_{i-1}, a_i) is the residual
    component of row i seen just before its step (one scalar per step, no
    extra cost; their norm is the incremental convergence measure).
    """
    rhs = system.rhs
    rows = system._rows
    n = system.order
    lambdas = np.empty(n)
    gaps = np.empty(n)
    for i in range(n):
        lo, hi, vals, inv_norm2 = rows[i]
        gap = rhs[i] - p[lo:hi] @ vals
        coeff = gap * inv_norm2
        p[lo:hi] += coeff * vals
        gaps[i] = gap
        lambdas[i] = coeff
    return p, lambdas, gaps


def sweep(system, x):
    """One complete cycle of steps i = 0..N-1 in natural order."""
    p, _, _ = _sweep_inplace(system, np.array(x, dtype=float, copy=True))
    return p


@dataclass(frozen=True)
class BlockPartition:
    """Contiguous row blocks covering 0..N-1, given by their sizes."""

    sizes: tuple

    def __post_init__(self):
        if any(s < 1 for s in self.sizes):
            raise ConfigurationError("block sizes must be positive")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def ranges(self):
        bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        return [(int(bounds[j]), int(bounds[j + 1])) for j in range(len(self.sizes))]

    def validate(self, order):
        if sum(self.sizes) != order:
            raise ConfigurationError(
                f"block sizes sum to {sum(self.sizes)}, expected {order}"
            )


class _BlockFactors:
    """Per-block QR factors of A_i (rows of the block, transposed), computed
    once per (system, partition) and reused across sweeps."""

    def __init__(self, system, partition):
        partition.validate(system.order)
        self.ranges = partition.ranges
        self.blocks = []
        dense_rows = [system.row(i) for i in range(system.order)]
        for b, (lo, hi) in enumerate(self.ranges):
            block_rows = np.array(dense_rows[lo:hi])  # (N_b, N)
            q, r = np.linalg.qr(block_rows.T)  # A_b = block_rows.T, (N, N_b)
            diag = np.abs(np.diag(r))
            if diag.min() <= block_rows.shape[0] * np.finfo(float).eps * max(diag.max(), 1.0):
                raise SingularityError(f"block {b} (rows {lo}..{hi - 1}) is rank deficient")
            self.blocks.append((block_rows, q, r))


def block_sweep(system, partition, x, _factors_cache={}):
    """One cycle of block steps: p <- p + pinv(A_b^T) (b_b - A_b p).

    With all block sizes equal to 1 this reduces to ``sweep``.  The
    pseudoinverse is applied through a QR factorization of each block,
    factored once per (system, partition) pair.
    """
    key = (id(system), partition.sizes)
    factors = _factors_cache.get(key)
    if factors is None:
        factors = _BlockFactors(system, partition)
        _factors_cache.clear()  # keep at most one cached pairing
        _factors_cache[key] = factors
    p = np.array(x, dtype=float, copy=True)
    for (lo, hi), (block_rows, q, r) in zip(factors.ranges, factors.blocks):
        gap = system.rhs[lo:hi] - block_rows @ p
        # pinv(A_b^T) v = Q R^{-T} v for A_b = Q R
        p += q @ scipy.linalg.solve_triangular(r.T, gap, lower=True)
    return p


@dataclass
class SweepTrace:
    """History of a cyclic Kaczmarz run.

    ``residuals[n]`` is b - A x_n, maintained across sweeps from the sweep's
    own increment (r <- r - A dx, never recomputed from x_n); its norm is the
    stopping measure.  ``sweep_residual_norms[n]`` additionally records the
    norm of the per-step residual components seen during sweep n, the scalars
    the steps compute anyway.
    """

    iterates: list
    residuals: list
    error_norms: list | None
    lambdas: np.ndarray | None
    sweep_residual_norms: list
    stop_reason: str

    @property
    def residual_norms(self):
        return [float(np.linalg.norm(r)) for r in self.residuals]

    def to_csv(self):
        lines = ["n,err_norm,res_norm"]
        res = self.residual_norms
        for n in range(len(self.iterates)):
            err = "" if self.error_norms is None else f"{self.error_norms[n]:.17g}"
            lines.append(f"{n},{err},{res[n]:.17g}")
        return "\n".join(lines) + "\n"


def iterate(system, x0, max_sweeps, tol=0.0):
    """Run sweeps from x0 until the maintained residual norm drops below
    tol * ||b|| or max_sweeps is reached.  max_sweeps = 0 records x0 only."""
    if max_sweeps < 0:
        raise ConfigurationError("max_sweeps must be >= 0")
    if tol < 0:
        raise ConfigurationError("tol must be >= 0")
    x = np.array(x0, dtype=float, copy=True)
    rhs_norm = float(np.linalg.norm(system.rhs))
    r = system.residual(x)
    iterates = [x.copy()]
    residuals = [r.copy()]
    errors = None
    if system.solution is not None:
        errors = [float(np.linalg.norm(system.solution - x))]
    sweep_norms = [float(np.linalg.norm(r))]
    lambdas = None
    stop_reason = "max-sweeps"
    if np.linalg.norm(r) <= tol * rhs_norm:
        stop_reason = "converged"
        max_sweeps = 0
    for _ in range(max_sweeps):
        previous = x
        x = previous.copy()
        x, lambdas, gaps = _sweep_inplace(system, x)
        r = r - system.matrix.matvec(x - previous)
        iterates.append(x.copy())
        residuals.append(r.copy())
        if errors is not None:
            errors.append(float(np.linalg.norm(system.solution - x)))
        sweep_norms.append(float(np.linalg.norm(gaps)))
        if np.linalg.norm(r) <= tol * rhs_norm:
            stop_reason = "converged"
            break
    return SweepTrace(
        iterates=iterates,
        residuals=residuals,
        error_norms=errors,
        lambdas=lambdas,
        sweep_residual_norms=sweep_norms,
        stop_reason=stop_reason,
    )


MAX_ORACLE_ORDER = 512


class ProjectorSet:
    """Explicit projector algebra for verification at small order.

    Holds the scaled rows alpha_i = a_i / ||a_i||^2 and the assembled sweep
    products P = P_N...P_1 and Q = Q_N...Q_1.  The per-row factors are built
    on demand (storing all N of them would need N^3 floats).
    """

    def __init__(self, system):
        n = system.order
        self.order = n
        self.rows = np.array([system.row(i) for i in range(n)])
        self.alpha = self.rows / (self.rows * self.rows).sum(axis=1)[:, None]
        self.a_alpha = self.rows @ self.alpha.T  # column j = A alpha_j
        identity = np.eye(n)
        p = identity.copy()
        q = identity.copy()
        for i in range(n):
            p -= np.outer(self.a_alpha[:, i], p[i])
            q -= np.outer(self.alpha[i], self.rows[i] @ q)
        self.P = p
        self.Q = q

    def p_factor(self, i):
        """P_i = I - (A alpha_i) e_i^T: oblique projection killing residual i."""
        out = np.eye(self.order)
        out[:, i] -= self.a_alpha[:, i]
        return out

    def q_factor(self, i):
        """Q_i = I - alpha_i a_i^T: orthogonal projection onto a_i-perp."""
        return np.eye(self.order) - np.outer(self.alpha[i], self.rows[i])

    def shifted_cycle_matrix(self, j):
        """Product P_{j-1}...P_1 P_N...P_j driving the residual subsequence
        that starts at step j of each cycle (j is 1-based like the factors)."""
        if not 1 <= j <= self.order:
            raise IndexError(f"cycle offset {j} out of range 1..{self.order}")
        seq = list(range(j - 1, self.order)) + list(range(j - 1))
        out = np.eye(self.order)
        for i in seq:
            out -= np.outer(self.a_alpha[:, i], out[i])
        return out


def projector_oracle(system, max_order=MAX_ORACLE_ORDER):
    """Assemble the explicit projectors; verification-scale only."""
    if system.order > max_order:
        raise CapabilityError(
            f"projector oracle guarded to order <= {max_order}; "
            "pass max_order to raise the guard"
        )
    return ProjectorSet(system)


@dataclass
class SpectralDiagnostics:
    """Spectrum of the sweep iteration matrix Q plus contraction constants."""

    eigenvalues: np.ndarray  # complex, sorted by decreasing modulus
    spectral_radius: float
    meany_constant: float  # 1 - (det A)^2 / prod ||a_i||^2
    condition_number: float  # 2-norm condition of A
    minimal_poly_degree: int | None = None
    eigenvectors: np.ndarray | None = None


def iteration_matrix(system):
    """Explicit Q = Q_N ... Q_1 (error propagation matrix of one sweep)."""
    n = system.order
    q = np.eye(n)
    for i in range(n):
        _, _, _, inv_norm2 = system._rows[i]
        row = system.row(i)
        q -= np.outer(row * inv_norm2, row @ q)
    return q


def _krylov_degree(q, v, tol=1e-9):
    """Numerical degree of the minimal polynomial of q for v: the first k
    where v, qv, ..., q^k v become (numerically) linearly dependent."""
    n = q.shape[0]
    basis = np.empty((n, 0))
    w = v / np.linalg.norm(v)
    for k in range(min(n, 60)):
        coeffs = basis.T @ w
        w_perp = w - basis @ coeffs
        nrm = np.linalg.norm(w_perp)
        if nrm <= tol:
            return k
        basis = np.column_stack([basis, w_perp / nrm])
        w = q @ basis[:, -1]
    return basis.shape[1]


def spectral_diagnostics(system, max_order=4096, compute_eigenvectors=False):
    """Eigenvalues of the assembled Q, its spectral radius, the Meany
    contraction constant and cond(A).  Dense eigensolve; guarded by order."""
    n = system.order
    if n > max_order:
        raise CapabilityError(
            f"spectral diagnostics guarded to order <= {max_order}; "
            "pass max_order to raise the guard"
        )
    q = iteration_matrix(system)
    if compute_eigenvectors:
        eigvals, eigvecs = np.linalg.eig(q)
    else:
        eigvals = np.linalg.eigvals(q)
        eigvecs = None
    order = np.argsort(-np.abs(eigvals))
    eigvals = eigvals[order]
    if eigvecs is not None:
        eigvecs = eigvecs[:, order]
    dense = system.matrix.to_dense()
    _, logdet = np.linalg.slogdet(dense)
    log_rows = np.log(system.row_norms).sum()
    # (det A)^2 <= prod ||a_i||^2 (Hadamard), so the exponent is <= 0
    meany = 1.0 - np.exp(2.0 * (logdet - log_rows))
    reference = system.solution if system.solution is not None else np.ones(n)
    degree = _krylov_degree(q, reference)
    return SpectralDiagnostics(
        eigenvalues=eigvals,
        spectral_radius=float(np.abs(eigvals[0])),
        meany_constant=float(meany),
        condition_number=float(np.linalg.cond(dense)),
        minimal_poly_degree=degree,
        eigenvectors=eigvecs,
    )
