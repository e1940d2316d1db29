"""Shanks-kernel vector sequence transformations.

Two computation routes share one kernel (sequences whose errors satisfy a
fixed-coefficient linear difference equation of order k):

* windowed linear-system route: MPE, RRE, MMPE and the topological
  transformation, which differ only in the inner products filling the
  moment matrix;
* recursive epsilon route: scalar (componentwise), vector, and topological
  epsilon algorithms, advanced one ascending table diagonal at a time.

A near-zero denominator raises BreakdownError; drivers decide how to fall
back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BreakdownError, ConfigurationError

MPE = "mpe"
RRE = "rre"
MMPE = "mmpe"
TOPOLOGICAL = "topological"
VECTOR_EPSILON = "vector-epsilon"
SCALAR_EPSILON = "scalar-epsilon"

TRANSFORM_NAMES = (MPE, RRE, MMPE, TOPOLOGICAL, VECTOR_EPSILON, SCALAR_EPSILON)
# Kinds whose order-k output needs 2k+1 iterates (all others need k+2).
EPSILON_WINDOW_KINDS = frozenset({TOPOLOGICAL, VECTOR_EPSILON, SCALAR_EPSILON})
# Kinds computable by solving the moment system.
SYSTEM_PATH_KINDS = frozenset({MPE, RRE, MMPE, TOPOLOGICAL})
# Kinds with a recursive epsilon-table implementation.
TABLE_KINDS = frozenset({VECTOR_EPSILON, SCALAR_EPSILON, TOPOLOGICAL})

DEFAULT_BREAKDOWN_THRESHOLD = 1e-13
DEFAULT_CONDITION_LIMIT = 1e15


def window_length(name, k):
    """Number of iterates beyond the first needed for an order-k output."""
    if name not in TRANSFORM_NAMES:
        raise ConfigurationError(f"unknown transform {name!r}")
    if k < 1:
        raise ConfigurationError(f"transform order must be >= 1, got {k}")
    return 2 * k if name in EPSILON_WINDOW_KINDS else k + 1


@dataclass(frozen=True)
class TransformKind:
    """A transformation tag plus whatever auxiliary data it needs.

    ``y`` is the fixed vector of the topological transformation, ``ys`` the
    stack of k linearly independent vectors of the MMPE, ``component`` the
    coordinate picked out by the componentwise scalar kind.
    """

    name: str
    y: np.ndarray | None = None
    ys: np.ndarray | None = None
    component: int | None = None

    def __post_init__(self):
        if self.name not in TRANSFORM_NAMES:
            raise ConfigurationError(f"unknown transform {self.name!r}")
        if self.name == TOPOLOGICAL and self.y is None:
            raise ConfigurationError("topological transformation needs an auxiliary vector y")
        if self.name == MMPE:
            if self.ys is None:
                raise ConfigurationError("MMPE needs auxiliary vectors ys")
            ys = np.atleast_2d(np.asarray(self.ys, dtype=float))
            if np.linalg.matrix_rank(ys) < ys.shape[0]:
                raise ConfigurationError("MMPE auxiliary vectors must be linearly independent")
            object.__setattr__(self, "ys", ys)
        if self.y is not None:
            object.__setattr__(self, "y", np.asarray(self.y, dtype=float))


def default_auxiliary(name, k, n, policy="random", seed=0):
    """Auxiliary data for a transform: uniform random in [-1, 1] by default,
    or all-ones / canonical unit vectors."""
    if name == TOPOLOGICAL:
        if policy == "random":
            return TransformKind(name, y=np.random.default_rng(seed).uniform(-1.0, 1.0, n))
        if policy == "ones":
            return TransformKind(name, y=np.ones(n))
        if policy == "canonical":
            y = np.zeros(n)
            y[0] = 1.0
            return TransformKind(name, y=y)
        raise ConfigurationError(f"unknown auxiliary policy {policy!r}")
    if name == MMPE:
        if policy == "random":
            return TransformKind(name, ys=np.random.default_rng(seed).uniform(-1.0, 1.0, (k, n)))
        if policy in ("ones", "canonical"):
            return TransformKind(name, ys=np.eye(n)[:k])
        raise ConfigurationError(f"unknown auxiliary policy {policy!r}")
    if name == SCALAR_EPSILON:
        return TransformKind(name, component=0)
    return TransformKind(name)


@dataclass
class TransformWindow:
    """A sliding window of iterates with cached differences and solve results."""

    base_index: int
    k: int
    iterates: list
    diffs: np.ndarray = field(init=False)
    second_diffs: np.ndarray = field(init=False)
    moments: np.ndarray | None = None
    coefficients: "CoefficientSolve | None" = None

    def __post_init__(self):
        xs = np.array([np.asarray(x, dtype=float) for x in self.iterates])
        self.iterates = list(xs)
        self.diffs = xs[1:] - xs[:-1]
        self.second_diffs = self.diffs[1:] - self.diffs[:-1]


def make_window(xs, k, base_index=0):
    return TransformWindow(base_index=base_index, k=k, iterates=list(xs))


def moment_matrix(kind, xs, k):
    """Fill the k x (k+1) moment matrix of inner products for the given kind."""
    needed = window_length(kind.name, k) + 1
    if len(xs) < needed:
        raise ConfigurationError(
            f"{kind.name} with k={k} needs {needed} iterates, got {len(xs)}"
        )
    xs = np.array([np.asarray(x, dtype=float) for x in xs[:needed]])
    dx = xs[1:] - xs[:-1]
    if kind.name == MPE:
        return dx[:k] @ dx[: k + 1].T
    if kind.name == RRE:
        ddx = dx[1:] - dx[:-1]
        return ddx[:k] @ dx[: k + 1].T
    if kind.name == MMPE:
        if kind.ys.shape[0] < k:
            raise ConfigurationError(f"MMPE needs {k} auxiliary vectors, got {kind.ys.shape[0]}")
        return kind.ys[:k] @ dx[: k + 1].T
    if kind.name == TOPOLOGICAL:
        scalars = dx @ kind.y  # (y, dx_j)
        return np.array([[scalars[i + j] for j in range(k + 1)] for i in range(k)])
    if kind.name == SCALAR_EPSILON:
        p = kind.component or 0
        return np.array([[dx[i + j][p] for j in range(k + 1)] for i in range(k)])
    raise ConfigurationError(f"{kind.name} has no moment-matrix form")


@dataclass
class CoefficientSolve:
    a: np.ndarray  # k+1 coefficients summing to 1
    alpha: np.ndarray  # k coefficients of the difference form
    condition: float  # condition estimate of the solved difference system


def solve_coefficients(d, condition_limit=DEFAULT_CONDITION_LIMIT):
    """Solve both parameterizations of the order-k system.

    The homogeneous rows are equilibrated before solving (exact, since their
    right-hand sides are zero); a singular or worse-than-``condition_limit``
    system raises BreakdownError carrying the condition estimate.
    """
    d = np.asarray(d, dtype=float)
    k = d.shape[0]
    if d.shape != (k, k + 1):
        raise ConfigurationError(f"moment matrix must be k x (k+1), got {d.shape}")
    scale = np.abs(d).max(axis=1)
    if not np.all(np.isfinite(scale)) or scale.min() == 0.0:
        raise BreakdownError("moment matrix has a zero or non-finite row", condition=np.inf)
    scaled = d / scale[:, None]
    delta = scaled[:, 1:] - scaled[:, :-1]
    condition = float(np.linalg.cond(delta))
    if not np.isfinite(condition) or condition > condition_limit:
        raise BreakdownError(
            f"moment system condition {condition:.3e} exceeds {condition_limit:.3e}",
            condition=condition,
        )
    try:
        alpha = np.linalg.solve(delta, scaled[:, 0])
        full = np.vstack([np.ones(k + 1), scaled])
        rhs = np.zeros(k + 1)
        rhs[0] = 1.0
        a = np.linalg.solve(full, rhs)
    except np.linalg.LinAlgError as exc:
        raise BreakdownError(f"moment system is singular: {exc}", condition=condition) from exc
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(alpha))):
        raise BreakdownError("moment system produced non-finite coefficients", condition=condition)
    return CoefficientSolve(a=a, alpha=alpha, condition=condition)


def _is_stationary(window):
    scale = 1.0 + float(np.linalg.norm(window.iterates[0]))
    return all(float(np.linalg.norm(d)) <= 1e-15 * scale for d in window.diffs)


def transform_apply(kind, window, condition_limit=DEFAULT_CONDITION_LIMIT):
    """Order-k output of a system-path transformation on a window.

    Returns the normalized combination of x_n..x_{n+k}.  A window whose
    differences all vanish is treated as converged and returned as is.
    """
    if kind.name not in SYSTEM_PATH_KINDS:
        raise ConfigurationError(
            f"{kind.name} has no linear-system path; use an epsilon table"
        )
    if _is_stationary(window):
        return window.iterates[0].copy()
    if window.moments is None:
        window.moments = moment_matrix(kind, window.iterates, window.k)
    if window.coefficients is None:
        window.coefficients = solve_coefficients(window.moments, condition_limit)
    a = window.coefficients.a
    return np.tensordot(a, np.array(window.iterates[: window.k + 1]), axes=1)


def alpha_combination(window):
    """The same output through the difference form x_n - sum alpha_i dx_{n+i-1}."""
    if window.coefficients is None:
        raise ConfigurationError("solve the window before requesting the difference form")
    alpha = window.coefficients.alpha
    return window.iterates[0] - np.tensordot(alpha, window.diffs[: window.k], axes=1)


def _check_denominator(value, scale, threshold, what, cell=None):
    if abs(value) <= threshold * scale:
        raise BreakdownError(
            f"near-zero denominator in {what} (|{value:.3e}| <= {threshold:.1e} * {scale:.3e})",
            cell=cell,
        )
    return value


class EpsilonTable:
    """One ascending diagonal of an epsilon array, advanced point by point.

    ``max_column`` caps how far the diagonal extends (2k when only the
    order-k output is wanted); the previous diagonal is kept because the
    topological even rule reaches one diagonal further back.
    """

    def __init__(self, kind, max_column=None, breakdown_threshold=DEFAULT_BREAKDOWN_THRESHOLD):
        if isinstance(kind, str):
            kind = TransformKind(kind)
        if kind.name not in TABLE_KINDS:
            raise ConfigurationError(f"{kind.name} has no recursive epsilon implementation")
        self.kind = kind
        self.max_column = max_column
        self.threshold = breakdown_threshold
        self.count = 0
        self._diag = []
        self._prev = []

    def even_entries(self):
        """Newest value of every even column: {k: eps_{2k}} for 2k <= columns."""
        return {j // 2: self._diag[j] for j in range(0, len(self._diag), 2)}

    def extend(self, point):
        return epsilon_extend(self, point)


def _vector_inverse(u):
    return u / (u @ u)


def epsilon_extend(table, point):
    """Advance the diagonal by one input point; return the new even entries.

    The update is transactional: on breakdown the table is left unchanged
    and a BreakdownError identifying the cell is raised.
    """
    point = np.asarray(point, dtype=float)
    old = table._diag
    older = table._prev
    limit = table.count if table.max_column is None else min(table.count, table.max_column)
    new = [point.copy()]
    thr = table.threshold
    name = table.kind.name
    for j in range(1, limit + 1):
        u = new[j - 1] - old[j - 1]
        base = old[j - 2] if j >= 2 else np.zeros_like(point)
        cell = (j, table.count)
        if name == VECTOR_EPSILON:
            norm_u = float(np.linalg.norm(u))
            scale = float(np.linalg.norm(new[j - 1]) + np.linalg.norm(old[j - 1]))
            _check_denominator(norm_u, scale, thr, "vector inverse", cell)
            step = _vector_inverse(u)
        elif name == SCALAR_EPSILON:
            scale = np.abs(new[j - 1]) + np.abs(old[j - 1])
            bad = np.abs(u) <= thr * scale
            if bad.any():
                raise BreakdownError(
                    f"near-zero componentwise denominator at column {j} "
                    f"(component {int(np.argmax(bad))})",
                    cell=cell,
                )
            step = 1.0 / u
        else:  # topological
            if j % 2 == 1:
                denom = float(table.kind.y @ u)
                scale = float(np.linalg.norm(table.kind.y) * np.linalg.norm(u))
                _check_denominator(denom, scale, thr, "topological odd inverse", cell)
                step = table.kind.y / denom
            else:
                v = old[j - 2] - older[j - 2]
                denom = float(u @ v)
                scale = float(np.linalg.norm(u) * np.linalg.norm(v))
                _check_denominator(denom, scale, thr, "topological even inverse", cell)
                step = v / denom
        new.append(base + step)
    table._prev = old
    table._diag = new
    table.count += 1
    return table.even_entries()


def k1_closed_form(kind, x0, x1, x2, threshold=DEFAULT_BREAKDOWN_THRESHOLD):
    """The k = 1 transforms written out directly on three iterates."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    dx0 = x1 - x0
    dx1 = x2 - x1
    ddx = dx1 - dx0
    name = kind.name
    if name in (MMPE, TOPOLOGICAL):
        aux = kind.ys[0] if name == MMPE else kind.y
        denom = _check_denominator(
            float(aux @ ddx), float(np.linalg.norm(aux) * np.linalg.norm(ddx)), threshold,
            f"{name} k=1 denominator",
        )
        return x0 - (float(aux @ dx0) / denom) * dx0
    if name == MPE:
        denom = _check_denominator(
            float(dx0 @ ddx), float(np.linalg.norm(dx0) * np.linalg.norm(ddx)), threshold,
            "mpe k=1 denominator",
        )
        return x0 - (float(dx0 @ dx0) / denom) * dx0
    if name == RRE:
        _check_denominator(
            float(np.linalg.norm(ddx)),
            float(np.linalg.norm(dx0) + np.linalg.norm(dx1)), threshold,
            "rre k=1 denominator",
        )
        return x0 - (float(ddx @ dx0) / float(ddx @ ddx)) * dx0
    if name == VECTOR_EPSILON:
        point_scale = float(np.linalg.norm(x0) + np.linalg.norm(x1) + np.linalg.norm(x2))
        for dx in (dx0, dx1):
            _check_denominator(
                float(np.linalg.norm(dx)), point_scale, threshold,
                "vector-epsilon k=1 first column",
            )
        eps1_n = dx0 / float(dx0 @ dx0)
        eps1_n1 = dx1 / float(dx1 @ dx1)
        diff = eps1_n1 - eps1_n
        _check_denominator(
            float(np.linalg.norm(diff)),
            float(np.linalg.norm(eps1_n) + np.linalg.norm(eps1_n1)), threshold,
            "vector-epsilon k=1 denominator",
        )
        return x1 + diff / float(diff @ diff)
    raise ConfigurationError(f"{name} has no k=1 closed form")
