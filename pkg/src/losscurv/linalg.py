"""Dense symmetric linear algebra.

Symmetric matrices are plain 2-D numpy arrays; :func:`as_sym` validates them
and makes the upper triangle authoritative.  The eigensolver is a cyclic
Jacobi method using a round-robin pair ordering, so every sweep applies
``m - 1`` batches of disjoint plane rotations with vectorised numpy updates.
"""

from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, NotPositiveSemidefinite

JACOBI_TOL = 1e-12
MAX_SWEEPS = 60


class EigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns


class MatrixNorms(NamedTuple):
    nuclear: float
    frobenius: float
    trace: float
    trace_sq: float


class PsdSqrt(NamedTuple):
    root: np.ndarray
    clamped: bool
    min_eigenvalue: float


def as_sym(a, name="matrix"):
    """Return a float copy of ``a`` with the lower triangle mirrored from the upper."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInput(f"{name} must be a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def _round_robin(m):
    """Pairings for m (even) players: m - 1 rounds of m/2 disjoint pairs."""
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        half = m // 2
        p = np.array(players[:half])
        q = np.array(players[half:][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _rotate_rows(mat, p, q, c, s):
    rows_p, rows_q = mat[p], mat[q]
    mat[p] = c * rows_p - s * rows_q
    mat[q] = s * rows_p + c * rows_q


def eig_sym(a, tol=JACOBI_TOL, max_sweeps=MAX_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Converges when the off-diagonal Frobenius norm drops below
    ``tol * ||a||_F``.  Eigenvalues are returned in ascending order.
    """
    a = as_sym(a)
    n = a.shape[0]
    if n == 1:
        return EigenDecomposition(a[0].copy(), np.ones((1, 1)))

    m = n + (n % 2)
    work = np.zeros((m, m))
    work[:n, :n] = a
    vt = np.eye(m)  # transpose of the accumulated rotation; rows are eigenvectors
    threshold = tol * np.linalg.norm(a)
    rounds = _round_robin(m)

    for _ in range(max_sweeps):
        off = np.linalg.norm(work - np.diag(np.diag(work)))
        if off <= threshold:
            break
        for p, q in rounds:
            apq = work[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            # |tau| huge (even inf) means a negligible rotation; avoid overflow in tau**2
            with np.errstate(over="ignore"):
                tau = (work[q, q] - work[p, p]) / (2.0 * apq)
            big = np.abs(tau) > 1e150
            tau_safe = np.where(big, 0.0, tau)
            t = np.where(tau_safe >= 0, 1.0, -1.0) / (np.abs(tau_safe) + np.sqrt(1.0 + tau_safe**2))
            t = np.where(big, 0.5 / np.where(big, tau, 1.0), t)
            c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
            s = t[:, None] * c

            # J^T A J == J^T (J^T A)^T for symmetric A: two row passes
            _rotate_rows(work, p, q, c, s)
            work = np.ascontiguousarray(work.T)
            _rotate_rows(work, p, q, c, s)
            work[p, q] = 0.0
            work[q, p] = 0.0
            _rotate_rows(vt, p, q, c, s)

    evecs = vt.T[:n, :n]
    evals = np.diag(work)[:n].copy()
    order = np.argsort(evals, kind="stable")
    return EigenDecomposition(evals[order], evecs[:, order])


def matrix_norms(a):
    a = as_sym(a)
    evals = eig_sym(a).eigenvalues
    return MatrixNorms(
        nuclear=float(np.sum(np.abs(evals))),
        frobenius=float(np.sqrt(np.sum(a * a))),
        trace=float(np.trace(a)),
        trace_sq=float(np.sum(a * a)),
    )


def psd_tolerance(a):
    return 1e-10 * float(np.linalg.norm(a))


def is_psd(a, tol=None):
    a = as_sym(a)
    tol = psd_tolerance(a) if tol is None else tol
    return bool(eig_sym(a).eigenvalues[0] >= -tol)


def sqrt_psd(a, tol=None):
    """Symmetric square root of a PSD matrix.

    Eigenvalues in ``[-tol, 0)`` are treated as round-off and clamped to zero;
    anything more negative raises :class:`NotPositiveSemidefinite`.
    """
    a = as_sym(a)
    tol = psd_tolerance(a) if tol is None else tol
    evals, evecs = eig_sym(a)
    lo = float(evals[0])
    if lo < -tol:
        raise NotPositiveSemidefinite(lo)
    clamped = bool(np.any(evals < 0))
    roots = np.sqrt(np.clip(evals, 0.0, None))
    root = (evecs * roots) @ evecs.T
    return PsdSqrt(0.5 * (root + root.T), clamped, lo)
