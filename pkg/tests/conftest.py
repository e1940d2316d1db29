"""Shared builders for the test suite."""

import numpy as np
import scipy.linalg

from kaczmarz_accel import DenseRowMatrix, LinearSystem, iteration_matrix, precondition_rows, sweep


def random_system(seed, n, cond_cap=50.0, preconditioned=True):
    """Seeded Gaussian system, redrawn until cond(A) <= cond_cap."""
    rng = np.random.default_rng(seed)
    while True:
        a = rng.standard_normal((n, n))
        if np.linalg.cond(a) <= cond_cap:
            break
    x = rng.uniform(-1.0, 1.0, n)
    system = LinearSystem(DenseRowMatrix(a), a @ x, solution=x)
    return precondition_rows(system) if preconditioned else system


def kaczmarz_iterates(system, x0, count):
    """x0 plus `count` further sweep iterates."""
    xs = [np.asarray(x0, dtype=float)]
    for _ in range(count):
        xs.append(sweep(system, xs[-1]))
    return xs


def fit_decay_ratio(errors, floor=1e-10, skip=3):
    """Geometric decay ratio fitted on the clean part of an error history."""
    e = np.asarray(errors, dtype=float)
    usable = np.where(e > floor)[0]
    hi = usable[-1] + 1
    lo = min(skip, hi - 2)
    slope = np.polyfit(np.arange(lo, hi), np.log(e[lo:hi]), 1)[0]
    return float(np.exp(slope))


def invariant_subspace_start(system, k, seed=0):
    """A starting vector whose error lies in a k-dimensional invariant
    subspace of the sweep matrix Q, so the iterates satisfy an order-k
    difference equation exactly.

    Uses the real Schur form; k is bumped by one when the cut would split a
    2x2 (complex-pair) block.  Returns (x0, effective_k).
    """
    q = iteration_matrix(system)
    _, u = scipy.linalg.schur(q, output="real")
    t = u.T @ q @ u
    cut = k
    if abs(t[cut, cut - 1]) > 1e-12:
        cut += 1
    rng = np.random.default_rng(seed)
    error = u[:, :cut] @ rng.uniform(0.5, 1.5, cut)
    return system.solution - error, cut
