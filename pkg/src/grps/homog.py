"""Coarse Galerkin solves in the GRPS space and convergence studies."""
import logging
import math
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import build_all
from .coeff import sample_field
from .errors import DegenerateBasis, GrpsError, InvalidArgument
from .fem import assemble_load, fine_operator, norms, reference_solve
from .linalg import SparseSym
from .measurements import build_measurements
from .mesh import build_coarse_mesh, refine

__all__ = ['CoarseSystem', 'ErrorReport', 'CSV_FIELDS', 'assemble_coarse',
           'solve_coarse', 'error_report', 'converge_study', 'Study']

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096
CSV_FIELDS = ('case', 'Nc', 'J', 'level', 'N_dof', 'abs_h1', 'rel_h1',
              'abs_energy', 'rel_energy', 'build_seconds', 'solve_seconds')
# diagonally scaled pivots below this count as a singular coarse matrix
PIVOT_RTOL = 1e-12


def _basis_matrix(basis):
    return sp.csr_matrix(getattr(basis, 'matrix', basis))


def _csr(A):
    return A.full if isinstance(A, SparseSym) else sp.csr_matrix(A)


class _DenseSPD:
    def __init__(self, K):
        d = np.diag(K).copy()
        if np.any(d <= 0):
            raise DegenerateBasis('coarse matrix has a nonpositive diagonal entry')
        s = 1.0 / np.sqrt(d)
        try:
            self.cho = sla.cho_factor(s[:, None] * K * s[None, :], lower=True)
        except np.linalg.LinAlgError as exc:
            raise DegenerateBasis(f'coarse matrix is not positive definite: {exc}') from exc
        piv = np.diag(self.cho[0]) ** 2
        if piv.min() < PIVOT_RTOL * piv.max():
            raise DegenerateBasis(f'coarse matrix is numerically singular '
                                  f'(pivot ratio {piv.min() / piv.max():.2e})')
        self.s = s

    def solve(self, b):
        return self.s * sla.cho_solve(self.cho, self.s * b)


class _SparseSPD:
    def __init__(self, K):
        d = K.diagonal()
        if np.any(d <= 0):
            raise DegenerateBasis('coarse matrix has a nonpositive diagonal entry')
        s = 1.0 / np.sqrt(d)
        Ks = (sp.diags(s) @ K @ sp.diags(s)).tocsc()
        try:
            self.lu = spla.splu(Ks)
        except RuntimeError as exc:
            raise DegenerateBasis(f'coarse matrix is singular: {exc}') from exc
        piv = np.abs(self.lu.U.diagonal())
        if piv.min() < PIVOT_RTOL * piv.max():
            raise DegenerateBasis(f'coarse matrix is numerically singular '
                                  f'(pivot ratio {piv.min() / piv.max():.2e})')
        self.s = s

    def solve(self, b):
        return self.s * self.lu.solve(self.s * b)


def spd_solver(K):
    """Factorisation of a symmetric positive definite coarse matrix."""
    return _SparseSPD(sp.csr_matrix(K)) if sp.issparse(K) else _DenseSPD(np.asarray(K))


@dataclass(eq=False)
class CoarseSystem:
    """Congruence products of the fine operators with the basis matrix ``Psi``
    (rows are basis functions): ``A_H = Psi A Psi^T`` etc."""
    A_H: object
    M_H: object
    b_H: np.ndarray
    basis: sp.csr_matrix
    _solver: object = None

    @property
    def N(self):
        return self.basis.shape[0]

    @property
    def dense(self):
        return not sp.issparse(self.A_H)

    def solver(self):
        if self._solver is None:
            self._solver = spd_solver(self.A_H)
        return self._solver

    def expand(self, c):
        return self.basis.T @ c


def _congruence(P, A, dense):
    K = (P @ A @ P.T)
    if dense:
        K = K.toarray()
        return 0.5 * (K + K.T)
    K = 0.5 * (K + K.T)
    return K.tocsr()


def assemble_coarse(A, M, b, basis):
    P = _basis_matrix(basis)
    dense = P.shape[0] <= DENSE_LIMIT
    A_H = _congruence(P, _csr(A), dense)
    M_H = _congruence(P, _csr(M), dense) if M is not None else None
    b_H = P @ np.asarray(b, dtype=float) if b is not None else np.zeros(P.shape[0])
    sys = CoarseSystem(A_H, M_H, b_H, P)
    sys.solver()  # raises DegenerateBasis early
    return sys


def solve_coarse(sys):
    """Coarse coefficients and the fine dof vector of ``u_H``."""
    c = sys.solver().solve(sys.b_H)
    return c, sys.expand(c)


@dataclass
class ErrorReport:
    case: str
    Nc: int
    J: int
    level: int
    N_dof: int
    abs_h1: float
    rel_h1: float
    abs_energy: float
    rel_energy: float
    build_seconds: float = 0.0
    solve_seconds: float = 0.0
    error: str = ''

    def row(self):
        d = asdict(self)
        return [d[k] for k in CSV_FIELDS]


def error_report(op, u_ref, u_H, case, Nc, J, level, N):
    e = norms(op, u_ref - u_H)
    r = norms(op, u_ref)
    return ErrorReport(case, Nc, J, level, N, e['h1_semi'], e['h1_semi'] / r['h1_semi'],
                       e['energy'], e['energy'] / r['energy'])


def _log2_int(n):
    k = int(round(math.log2(n)))
    if 2 ** k != n:
        raise InvalidArgument(f'Nc must be a power of two for a shared fine mesh, got {n}')
    return k


class Study:
    """Shared fine mesh, operators and reference solution for a sweep.

    Every ``Nc`` in the study refines to the same fine grid ``h = 2**-fine_level``,
    so the fine operator and reference solution are computed once.
    """

    def __init__(self, kappa_spec, g, fine_level=7):
        self.kappa_spec = kappa_spec
        self.g = g
        self.fine_level = int(fine_level)
        self._fine = None
        self._bases = {}

    def hierarchy(self, Nc):
        J = self.fine_level - _log2_int(Nc)
        if J < 0:
            raise InvalidArgument(f'Nc = {Nc} is finer than h = 2^-{self.fine_level}')
        return refine(build_coarse_mesh(Nc), J)

    def fine(self, h):
        if self._fine is None:
            kappa = sample_field(self.kappa_spec, h)
            op = fine_operator(h, kappa)
            b = assemble_load(h, self.g)
            u = reference_solve(op, b)
            self._fine = (op, b, u)
        return self._fine

    def basis(self, case, Nc, level, threads=1):
        key = (case, Nc, level)
        if key not in self._bases:
            h = self.hierarchy(Nc)
            op, _, _ = self.fine(h)
            m = build_measurements(h, case)
            t0 = time.perf_counter()
            B = build_all(level, op.A, m, h, threads=threads)
            self._bases[key] = (B, time.perf_counter() - t0)
        return self._bases[key]

    def run(self, case, Nc, level, threads=1):
        h = self.hierarchy(Nc)
        op, b, u_ref = self.fine(h)
        B, build_s = self.basis(case, Nc, level, threads)
        t0 = time.perf_counter()
        sys = assemble_coarse(op.A, None, b, B)
        _, u_H = solve_coarse(sys)
        solve_s = time.perf_counter() - t0
        rep = error_report(op, u_ref, u_H, case, Nc, h.J, level, B.N)
        rep.build_seconds = build_s
        rep.solve_seconds = solve_s
        return rep


def converge_study(case, kappa_spec, g, Nc_list, levels, fine_level=7, threads=1,
                   study=None):
    """Error reports over the Cartesian product ``Nc_list x levels``.

    A failing cell is logged and recorded with NaN errors; the sweep goes on.
    """
    study = study or Study(kappa_spec, g, fine_level)
    out = []
    for Nc in Nc_list:
        for level in levels:
            try:
                out.append(study.run(case, Nc, level, threads))
            except GrpsError as exc:
                log.warning('cell case=%s Nc=%s level=%s failed: %s', case, Nc, level, exc)
                J = study.fine_level - int(round(math.log2(Nc)))
                nan = float('nan')
                out.append(ErrorReport(case, Nc, J, level, 0, nan, nan, nan, nan, error=str(exc)))
    return out
