"""Dense complex linear algebra shared by the solvers.

Small on purpose: forward/adjoint products, a reusable least-squares
factorization, power iteration for leading eigenvectors, and standard
complex Gaussian sampling. All randomness comes from generators owned and
passed in by the caller, so every higher-level routine stays replayable.
"""

import numpy as np
from scipy.linalg import qr, solve_triangular


def matvec(A, x):
    """Forward product A @ x for an M x N matrix and a length-N vector."""
    A = np.asarray(A)
    x = np.asarray(x)
    if A.ndim != 2 or x.shape != (A.shape[1],):
        raise ValueError(f"shape mismatch: A is {A.shape}, x is {x.shape}")
    return A @ x


def adjoint_matvec(A, u):
    """Adjoint product A^H @ u for an M x N matrix and a length-M vector."""
    A = np.asarray(A)
    u = np.asarray(u)
    if A.ndim != 2 or u.shape != (A.shape[0],):
        raise ValueError(f"shape mismatch: A is {A.shape}, u is {u.shape}")
    return A.conj().T @ u


class LeastSquaresFactorization:
    """Economy QR of a tall full-rank matrix, reused across many solves.

    The factorization cost dominates a single solve but amortizes over the
    hundreds of least-squares steps taken by the alternating solvers, where
    the matrix never changes. Rank deficiency is rejected up front because
    the triangular backsolve would silently blow up later.
    """

    def __init__(self, A):
        A = np.asarray(A)
        if A.ndim != 2:
            raise ValueError("expected a matrix")
        m, n = A.shape
        if m < n:
            raise ValueError(f"need at least as many rows as columns, got {m} x {n}")
        self.shape = (m, n)
        self._q, self._r = qr(A, mode="economic")
        diag = np.abs(np.diagonal(self._r))
        if diag.min() <= 1e-12 * max(diag.max(), 1.0):
            raise ValueError("matrix is rank deficient")

    def solve(self, rhs):
        rhs = np.asarray(rhs)
        if rhs.shape != (self.shape[0],):
            raise ValueError(f"rhs has shape {rhs.shape}, expected ({self.shape[0]},)")
        return solve_triangular(self._r, self._q.conj().T @ rhs)


def lstsq_solve(fact, rhs):
    """Minimize ||A x - rhs||_2 through a precomputed factorization of A."""
    return fact.solve(rhs)


def power_iteration(apply, n, max_iters=200, tol=1e-6):
    """Leading eigenpair of a Hermitian PSD operator given as a callable.

    Parameters
    ----------
    apply : callable
        Maps a length-n complex vector to the operator applied to it.
    n : int
        Operator dimension.
    max_iters, tol : int, float
        Iteration cap and relative residual target; convergence is declared
        when ||apply(v) - lam * v|| <= tol * lam.

    Returns
    -------
    (v, lam) with ||v|| = 1 and lam the Rayleigh quotient at v. Starts from
    the deterministic vector ones(n)/sqrt(n) so no RNG is consumed.
    """
    if n <= 0:
        raise ValueError("operator dimension must be positive")
    v = np.ones(n, dtype=complex) / np.sqrt(n)
    for _ in range(max_iters):
        u = apply(v)
        lam = float(np.real(np.vdot(v, u)))
        if np.linalg.norm(u - lam * v) <= tol * abs(lam):
            return v, lam
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return v, 0.0  # v spans the null space, an exact eigenvector
        v = u / norm_u
    u = apply(v)
    return v, float(np.real(np.vdot(v, u)))


def sample_complex_gaussian(rng, n):
    """n i.i.d. CN(0, 1) entries: real and imaginary parts are N(0, 1/2)."""
    if n < 1:
        raise ValueError("need n >= 1")
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return z / np.sqrt(2.0)
