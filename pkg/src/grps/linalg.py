"""Symmetric sparse storage, a Jacobi-preconditioned CG for SPD systems and
a direct solver for equality-constrained quadratic minimisation (KKT)."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConstraintRankError, InvalidArgument, NotSPD, SolverFailure

__all__ = ['SparseSym', 'KKTSystem', 'solve_spd', 'solve_kkt', 'kkt_nullspace', 'KKTFactor',
           'numerical_rank', 'dependent_rows', 'RANK_RTOL']

RANK_RTOL = 1e-10


class SparseSym:
    """Symmetric matrix stored as the CSR lower triangle (diagonal included).

    ``full`` is the assembled symmetric CSR matrix, built lazily and cached;
    ``lower`` is the canonical storage.
    """

    def __init__(self, matrix):
        M = sp.csr_matrix(matrix)
        if M.shape[0] != M.shape[1]:
            raise InvalidArgument(f'matrix must be square, got {M.shape}')
        L = sp.tril(M, format='csr')
        L.eliminate_zeros()
        L.sort_indices()
        self.lower = L
        self._full = None

    @classmethod
    def from_lower(cls, lower):
        obj = cls.__new__(cls)
        L = sp.csr_matrix(lower)
        L.eliminate_zeros()
        L.sort_indices()
        obj.lower = L
        obj._full = None
        return obj

    @property
    def n(self):
        return self.lower.shape[0]

    @property
    def shape(self):
        return self.lower.shape

    @property
    def full(self):
        if self._full is None:
            L = self.lower
            F = (L + L.T - sp.diags(L.diagonal())).tocsr()
            F.sort_indices()
            self._full = F
        return self._full

    def diagonal(self):
        return self.lower.diagonal()

    def __matmul__(self, x):
        return self.full @ x

    def __mul__(self, s):
        return SparseSym.from_lower(self.lower * s)

    __rmul__ = __mul__

    def submatrix(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return SparseSym(self.full[idx][:, idx])

    def quad(self, u, v=None):
        return float(u @ (self.full @ (u if v is None else v)))

    def toarray(self):
        return self.full.toarray()


def _as_csr(A):
    if isinstance(A, SparseSym):
        return A.full
    return sp.csr_matrix(A)


def solve_spd(A, b, tol=1e-10, x0=None, maxiter=None):
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||A x - b|| <= tol * ||b||`` (recomputed residual).  Raises
    :class:`NotSPD` when a search direction has nonpositive curvature and
    :class:`SolverFailure` after ``20 * n`` iterations.
    """
    A = _as_csr(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if b.shape != (n,):
        raise InvalidArgument(f'rhs has shape {b.shape}, expected ({n},)')
    if not 0 < tol <= 1e-6:
        raise InvalidArgument(f'tol must lie in (0, 1e-6], got {tol}')
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n)
    d = A.diagonal()
    if np.any(d <= 0):
        raise NotSPD('nonpositive diagonal entry')
    inv_d = 1.0 / d
    maxiter = 20 * n if maxiter is None else maxiter

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = inv_d * r
    p = z.copy()
    rz = r @ z
    target = tol * bnorm
    for _ in range(maxiter):
        if np.linalg.norm(r) <= target:
            # guard against drift of the recursive residual
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                return x
            z = inv_d * r
            p = z.copy()
            rz = r @ z
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise NotSPD(f'nonpositive curvature {curv:g} encountered')
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        z = inv_d * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bnorm
    if res <= tol:
        return x
    raise SolverFailure(f'CG did not converge in {maxiter} iterations '
                        f'(relative residual {res:.3e})', residual=res)


@dataclass
class KKTSystem:
    """Saddle-point system ``[[A, C^T], [C, 0]] [x; y] = [rhs_primal; rhs_dual]``."""
    A: object
    C: object
    rhs_primal: np.ndarray
    rhs_dual: np.ndarray

    def __post_init__(self):
        self.A = _as_csr(self.A)
        self.C = sp.csr_matrix(self.C)
        n = self.A.shape[0]
        m = self.C.shape[0]
        self.rhs_primal = np.zeros(n) if self.rhs_primal is None else np.asarray(self.rhs_primal, float)
        self.rhs_dual = np.asarray(self.rhs_dual, dtype=float)
        if self.C.shape[1] != n:
            raise InvalidArgument(f'C has {self.C.shape[1]} columns, A has {n} rows')
        if m > n:
            raise InvalidArgument(f'more constraints ({m}) than unknowns ({n})')
        if self.rhs_primal.shape != (n,) or self.rhs_dual.shape != (m,):
            raise InvalidArgument('right-hand side sizes do not match the blocks')

    @property
    def matrix(self):
        return sp.bmat([[self.A, self.C.T], [self.C, None]], format='csc')

    @property
    def rhs(self):
        return np.concatenate([self.rhs_primal, self.rhs_dual])

    def residual(self, x, y):
        r1 = self.A @ x + self.C.T @ y - self.rhs_primal
        r2 = self.C @ x - self.rhs_dual
        return np.sqrt(r1 @ r1 + r2 @ r2)


def numerical_rank(M, rtol=RANK_RTOL):
    """Rank from singular values above ``rtol * sigma_max``."""
    M = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def dependent_rows(C, rtol=RANK_RTOL):
    """Rows of ``C`` left over by a pivoted QR of ``C^T`` beyond its rank."""
    C = C.toarray() if sp.issparse(C) else np.asarray(C, dtype=float)
    rank = numerical_rank(C, rtol)
    if rank == C.shape[0]:
        return np.array([], dtype=np.int64)
    _, _, piv = sla.qr(C.T, mode='economic', pivoting=True)
    return np.sort(piv[rank:])


def _check_rank(C, rtol):
    dep = dependent_rows(C, rtol)
    if len(dep):
        raise ConstraintRankError(
            f'constraint block is rank deficient; dependent rows {dep.tolist()}', rows=dep)


class KKTFactor:
    """Sparse LU of a saddle-point matrix, reusable for many right-hand sides.

    The matrix is equilibrated first: the primal block by the inverse square
    root of ``diag(A)`` and each constraint row to unit Euclidean norm.  The
    residual test ``||r|| <= tol * ||rhs||`` is applied to the equilibrated
    system, which has the same solution.
    """

    def __init__(self, A, C, tol=1e-10, refine_steps=3):
        A = _as_csr(A)
        C = sp.csr_matrix(C)
        self.n = A.shape[0]
        self.m = C.shape[0]
        self.tol = tol
        self.refine_steps = refine_steps
        d = A.diagonal()
        if np.any(d <= 0):
            raise NotSPD('primal block has a nonpositive diagonal entry')
        self.sa = 1.0 / np.sqrt(d)
        Cs = C @ sp.diags(self.sa)
        rn = np.sqrt(np.asarray(Cs.multiply(Cs).sum(axis=1)).ravel())
        if np.any(rn == 0):
            raise ConstraintRankError('constraint block has a zero row',
                                      rows=np.flatnonzero(rn == 0))
        self.sc = 1.0 / rn
        As = sp.diags(self.sa) @ A @ sp.diags(self.sa)
        Cs = sp.diags(self.sc) @ Cs
        self.C = C
        self.K = sp.bmat([[As, Cs.T], [Cs, None]], format='csc')
        try:
            self.lu = spla.splu(self.K, permc_spec='COLAMD')
        except RuntimeError as exc:
            if self.m:
                _check_rank(C, RANK_RTOL)
            raise SolverFailure(f'KKT factorisation failed: {exc}') from exc

    def solve(self, rhs_primal, rhs_dual):
        n, m = self.n, self.m
        rp = np.zeros(n) if rhs_primal is None else np.asarray(rhs_primal, dtype=float)
        rhs = np.concatenate([self.sa * rp, self.sc * np.asarray(rhs_dual, dtype=float)])
        rnorm = np.linalg.norm(rhs)
        if rnorm == 0:
            return np.zeros(n), np.zeros(m)
        K = self.K
        z = self.lu.solve(rhs)
        res = np.linalg.norm(K @ z - rhs) if np.all(np.isfinite(z)) else np.inf
        for _ in range(self.refine_steps):
            if res <= self.tol * rnorm or not np.isfinite(res):
                break
            z += self.lu.solve(rhs - K @ z)
            res = np.linalg.norm(K @ z - rhs)
        if not res <= self.tol * rnorm:
            if m:
                _check_rank(self.C, RANK_RTOL)
            raise SolverFailure(f'KKT residual {res / rnorm:.3e} above tolerance {self.tol:g}',
                                residual=res / rnorm)
        return self.sa * z[:n], self.sc * z[n:]


def solve_kkt(sys, tol=1e-10, check_rank=True):
    """Direct solve of a KKT system by sparse LU of the saddle-point matrix.

    ``check_rank`` runs the singular-value rank test on ``C`` before
    factorising.  When it is off, a singular or inaccurate factorisation
    still triggers the rank test so that dependent rows get reported.
    Iterative refinement is applied while the block residual exceeds
    ``tol * ||rhs||``.
    """
    if check_rank and sys.C.shape[0]:
        _check_rank(sys.C, RANK_RTOL)
    if not np.any(sys.rhs):
        return np.zeros(sys.A.shape[0]), np.zeros(sys.C.shape[0])
    return KKTFactor(sys.A, sys.C, tol).solve(sys.rhs_primal, sys.rhs_dual)


def kkt_nullspace(sys):
    """Dense null-space method: QR of ``C^T``, reduced SPD solve.

    Independent of :func:`solve_kkt`; used as an oracle on small systems.
    """
    A = sys.A.toarray()
    C = sys.C.toarray()
    m = C.shape[0]
    Q, R = np.linalg.qr(C.T, mode='complete')
    Y, Z = Q[:, :m], Q[:, m:]
    R = R[:m]
    # particular solution x_p = Y R^{-T} d satisfies C x_p = d
    xp = Y @ sla.solve_triangular(R, sys.rhs_dual, trans='T')
    if Z.shape[1]:
        H = Z.T @ A @ Z
        w = np.linalg.solve(H, Z.T @ (sys.rhs_primal - A @ xp))
        x = xp + Z @ w
    else:
        x = xp
    # dual from the range part of the first block row: R y = Y^T (b - A x)
    y = sla.solve_triangular(R, Y.T @ (sys.rhs_primal - A @ x))
    return x, y
