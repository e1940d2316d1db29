"""Row-accessible matrices, gallery test systems, preconditioning and noise.

Row solvers only ever touch one matrix row at a time, so the matrix types
are organized around cheap per-row access.  Tridiagonal / pentadiagonal
gallery matrices use a banded layout so that a full sweep costs
O(bandwidth * N) instead of O(N^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SingularityError

GALLERY_KINDS = ("parter", "clement", "toeppen", "lesp")


class RowMatrix:
    """Square matrix with per-row dense views.

    Subclasses provide ``row_support(i)`` (the half-open column range that
    can hold nonzeros) and ``row_values(i)`` (the entries on that range).
    """

    order: int
    storage: str

    def row_support(self, i):
        raise NotImplementedError

    def row_values(self, i):
        raise NotImplementedError

    def row(self, i):
        """Dense row i as a length-N vector."""
        out = np.zeros(self.order)
        lo, hi = self.row_support(i)
        out[lo:hi] = self.row_values(i)
        return out

    def to_dense(self):
        out = np.zeros((self.order, self.order))
        for i in range(self.order):
            lo, hi = self.row_support(i)
            out[i, lo:hi] = self.row_values(i)
        return out

    def matvec(self, x):
        raise NotImplementedError


class DenseRowMatrix(RowMatrix):
    storage = "dense"

    def __init__(self, array):
        array = np.asarray(array, dtype=float)
        if array.ndim != 2 or array.shape[0] != array.shape[1]:
            raise ConfigurationError(f"expected a square matrix, got shape {array.shape}")
        if array.shape[0] < 1:
            raise ConfigurationError("matrix order must be >= 1")
        self.data = array
        self.order = array.shape[0]

    def row_support(self, i):
        return 0, self.order

    def row_values(self, i):
        return self.data[i]

    def to_dense(self):
        return self.data.copy()

    def matvec(self, x):
        return self.data @ x


class BandedRowMatrix(RowMatrix):
    """Banded square matrix stored row-major: ``data[i]`` holds the entries
    of row i for columns ``i - below .. i + above`` (zero-padded at edges).
    """

    storage = "banded"

    def __init__(self, order, below, above, data=None):
        if order < 1:
            raise ConfigurationError("matrix order must be >= 1")
        self.order = int(order)
        self.below = int(below)
        self.above = int(above)
        width = self.below + self.above + 1
        if data is None:
            data = np.zeros((order, width))
        self.data = np.asarray(data, dtype=float)
        if self.data.shape != (order, width):
            raise ConfigurationError(
                f"band data shape {self.data.shape} does not match (order, width)={(order, width)}"
            )

    @classmethod
    def from_diagonals(cls, order, diagonals):
        """Build from a mapping ``offset -> constant or array of entries``.

        Offset d addresses entries A[i, i+d]; an array must have length
        ``order - |d|``.
        """
        offsets = sorted(diagonals)
        below = max(0, -min(offsets))
        above = max(0, max(offsets))
        mat = cls(order, below, above)
        for d, values in diagonals.items():
            n_entries = order - abs(d)
            values = np.broadcast_to(np.asarray(values, dtype=float), (n_entries,))
            rows = np.arange(n_entries) + max(0, -d)
            mat.data[rows, below + d] = values
        return mat

    def row_support(self, i):
        return max(0, i - self.below), min(self.order, i + self.above + 1)

    def row_values(self, i):
        lo, hi = self.row_support(i)
        start = lo - (i - self.below)
        return self.data[i, start : start + (hi - lo)]

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.order)
        for d in range(-self.below, self.above + 1):
            n_entries = self.order - abs(d)
            if n_entries <= 0:
                continue
            rows = slice(max(0, -d), max(0, -d) + n_entries)
            cols = slice(max(0, d), max(0, d) + n_entries)
            diag = self.data[np.arange(n_entries) + max(0, -d), self.below + d]
            out[rows] += diag * x[cols]
        return out


@dataclass
class NoiseSpec:
    """White-noise perturbation of the right-hand side.

    The perturbation is ``delta * ||b|| * u / sqrt(N)`` with u drawn from a
    seeded standard normal, so E||e|| is approximately delta * ||b||.
    """

    delta: float
    seed: int = 0

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigurationError(f"noise amplitude must be >= 0, got {self.delta}")


@dataclass
class LinearSystem:
    """A square regular system with cached row norms.

    ``solution`` is the reference vector used for error tracking; after
    noise injection it keeps pointing at the clean solution on purpose.
    """

    matrix: RowMatrix
    rhs: np.ndarray
    solution: np.ndarray | None = None
    preconditioned: bool = False
    noise: NoiseSpec | None = None
    row_norms: np.ndarray = field(init=False)
    _rows: list = field(init=False, repr=False)

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape != (self.matrix.order,):
            raise ConfigurationError("right-hand side length does not match matrix order")
        if self.solution is not None:
            self.solution = np.asarray(self.solution, dtype=float)
        # One-time row cache: (lo, hi, values, 1/||a_i||^2) per row.
        rows = []
        norms = np.empty(self.matrix.order)
        for i in range(self.matrix.order):
            lo, hi = self.matrix.row_support(i)
            vals = np.asarray(self.matrix.row_values(i), dtype=float)
            nrm2 = float(vals @ vals)
            if nrm2 <= 0.0:
                raise SingularityError(f"row {i} has zero norm; system is not regular")
            norms[i] = np.sqrt(nrm2)
            rows.append((lo, hi, vals, 1.0 / nrm2))
        self.row_norms = norms
        self._rows = rows

    @property
    def order(self):
        return self.matrix.order

    def row(self, i):
        return self.matrix.row(i)

    def residual(self, x):
        """b - A x, computed from scratch."""
        return self.rhs - self.matrix.matvec(x)


def _parter(n):
    i = np.arange(1, n + 1)
    return DenseRowMatrix(1.0 / (i[:, None] - i[None, :] + 0.5))


def _clement(n):
    idx = np.arange(1, n)
    return BandedRowMatrix.from_diagonals(n, {0: 0.0, 1: idx, -1: (n - idx)})


def _toeppen(n):
    return BandedRowMatrix.from_diagonals(n, {-2: 1.0, -1: -10.0, 0: 0.0, 1: 10.0, 2: 1.0})


def _lesp(n):
    i = np.arange(1, n + 1)
    return BandedRowMatrix.from_diagonals(
        n, {0: -(2.0 * i + 3.0), 1: np.arange(2.0, n + 1.0), -1: 1.0 / np.arange(2.0, n + 1.0)}
    )


_GALLERY_BUILDERS = {
    "parter": _parter,
    "clement": _clement,
    "toeppen": _toeppen,
    "lesp": _lesp,
}


def build_gallery(kind, n):
    """Build a named test system with solution (1, ..., 1)^T and b = A x.

    kinds: parter (dense Toeplitz 1/(i-j+1/2)), clement (tridiagonal, zero
    diagonal), toeppen (pentadiagonal Toeplitz 1,-10,0,10,1), lesp
    (tridiagonal with diagonal -(5,7,...,2N+3)).
    """
    try:
        builder = _GALLERY_BUILDERS[kind]
    except KeyError:
        raise ConfigurationError(
            f"unknown gallery kind {kind!r}; expected one of {GALLERY_KINDS}"
        ) from None
    if n < 2:
        raise ConfigurationError(f"gallery systems need order >= 2, got {n}")
    matrix = builder(n)
    solution = np.ones(n)
    rhs = matrix.matvec(solution)
    return LinearSystem(matrix=matrix, rhs=rhs, solution=solution)


def precondition_rows(system):
    """Scale every equation by 1/||a_i|| so all row norms become 1.

    The solution set is unchanged; the reference solution carries over.
    """
    scale = 1.0 / system.row_norms
    matrix = system.matrix
    if isinstance(matrix, BandedRowMatrix):
        scaled = BandedRowMatrix(
            matrix.order, matrix.below, matrix.above, matrix.data * scale[:, None]
        )
    else:
        scaled = DenseRowMatrix(matrix.to_dense() * scale[:, None])
    return LinearSystem(
        matrix=scaled,
        rhs=system.rhs * scale,
        solution=None if system.solution is None else system.solution.copy(),
        preconditioned=True,
        noise=system.noise,
    )


def add_noise(system, spec):
    """Perturb the right-hand side by delta * ||b|| * u / sqrt(N), u ~ N(0, I).

    The reference solution is retained: error curves keep measuring the
    distance to the clean solution.
    """
    if spec.delta == 0.0:
        return system
    rng = np.random.default_rng(spec.seed)
    u = rng.standard_normal(system.order)
    perturbation = spec.delta * np.linalg.norm(system.rhs) * u / np.sqrt(system.order)
    return LinearSystem(
        matrix=system.matrix,
        rhs=system.rhs + perturbation,
        solution=None if system.solution is None else system.solution.copy(),
        preconditioned=system.preconditioned,
        noise=spec,
    )


def dump_matrix(system_or_matrix, path):
    """Write the dense matrix as plain text, one row per line.

    Used for cross-checking entries against external references.
    """
    matrix = getattr(system_or_matrix, "matrix", system_or_matrix)
    dense = matrix.to_dense()
    with open(path, "w") as handle:
        for row in dense:
            handle.write(" ".join(f"{v:.17g}" for v in row))
            handle.write("\n")
