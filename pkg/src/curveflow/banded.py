"""Banded and cyclic-banded linear solves.

The implicit part of the time stepper produces matrices of the form
``I + dt * diag(a) * D`` where ``D`` is a constant-coefficient difference
stencil.  For open curves the system is plainly banded; for closed curves
the band wraps around and the system is solved with a Woodbury correction
on top of the banded factorisation.
"""

import numpy as np
from scipy.linalg import solve_banded


class SolveError(RuntimeError):
    """Raised when a banded system is singular or produces non-finite values."""


def stencil_matrix_bands(coef, shift, stencil):
    """Diagonal-ordered storage of ``shift*I + diag(coef) @ S``.

    Parameters
    ----------
    coef : ndarray, shape (n,)
        Row scaling applied to the stencil.
    shift : float
        Identity shift (usually 1.0).
    stencil : dict
        Mapping ``offset -> value``; offsets are symmetric around zero.

    Returns
    -------
    ab : ndarray, shape (2p+1, n)
        Matrix in the layout expected by :func:`scipy.linalg.solve_banded`
        with ``p`` lower and ``p`` upper diagonals.  Entries that would fall
        outside the matrix are dropped, so this is the non-cyclic part.
    """
    coef = np.asarray(coef, dtype=float)
    n = coef.size
    p = max(abs(k) for k in stencil)
    ab = np.zeros((2 * p + 1, n))
    for off, val in stencil.items():
        # ab[p + i - j, j] = A[i, j], with j = i + off
        row = p - off
        if off >= 0:
            ab[row, off:] = coef[: n - off] * val
        else:
            ab[row, : n + off] = coef[-off:] * val
    ab[p] += shift
    return ab


def solve_banded_system(ab, rhs):
    """Solve a symmetric-bandwidth banded system, raising :class:`SolveError` on failure."""
    p = (ab.shape[0] - 1) // 2
    try:
        x = solve_banded((p, p), ab, rhs, check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SolveError(str(exc)) from exc
    if not np.all(np.isfinite(x)):
        raise SolveError("non-finite solution")
    return x


def solve_cyclic_stencil(coef, stencil, rhs, shift=1.0):
    """Solve ``(shift*I + diag(coef) @ S_cyc) x = rhs`` with a cyclic stencil.

    ``S_cyc`` applies ``stencil`` with periodic wrap-around.  The wrapped
    corner entries are split off as a rank-``2p`` update and handled with the
    Woodbury identity, so only banded solves are needed.

    Parameters
    ----------
    coef : ndarray, shape (n,)
    stencil : dict
        ``offset -> value``.
    rhs : ndarray, shape (n,) or (n, k)
    shift : float

    Returns
    -------
    x : ndarray, same shape as ``rhs``
    """
    coef = np.asarray(coef, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = coef.size
    p = max(abs(k) for k in stencil)
    if n <= 2 * p + 1:
        # too small for a meaningful band; fall back to a dense solve
        A = shift * np.eye(n)
        for i in range(n):
            for off, val in stencil.items():
                A[i, (i + off) % n] += coef[i] * val
        try:
            return np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolveError(str(exc)) from exc

    ab = stencil_matrix_bands(coef, shift, stencil)
    rows = np.concatenate([np.arange(p), np.arange(n - p, n)])
    # W holds the wrapped entries of the selected rows
    W = np.zeros((2 * p, n))
    for r, i in enumerate(rows):
        for off, val in stencil.items():
            j = i + off
            if j < 0 or j >= n:
                W[r, j % n] += coef[i] * val
    U = np.zeros((n, 2 * p))
    U[rows, np.arange(2 * p)] = 1.0

    y = solve_banded_system(ab, rhs)
    Z = solve_banded_system(ab, U)
    small = np.eye(2 * p) + W @ Z
    try:
        corr = np.linalg.solve(small, W @ y)
    except np.linalg.LinAlgError as exc:
        raise SolveError(str(exc)) from exc
    x = y - Z @ corr
    if not np.all(np.isfinite(x)):
        raise SolveError("non-finite solution")
    return x
