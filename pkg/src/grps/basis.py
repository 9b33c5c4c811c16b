"""Localized GRPS basis functions by constrained energy minimisation.

``psi_i^l`` minimises ``a(v, v)`` over fine functions vanishing outside the
layer-``l`` patch of row ``i`` subject to ``[v, phi_j] = delta_ij``.  Only
constraint rows with a nonzero restriction to the patch dofs are imposed;
the others hold automatically for functions supported in the patch.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BasisInfeasible, ConstraintRankError, InvalidArgument, SolverFailure
from .linalg import KKTFactor, KKTSystem, SparseSym, kkt_nullspace
from .mesh import grow_layers, patch

__all__ = ['GrpsBasis', 'DecayProfile', 'build_localized', 'build_all',
           'decay_profile', 'psi0_scaling', 'full_level', 'local_system',
           'energy_norms', 'central_rows']

KKT_TOL = 1e-11


@dataclass(eq=False)
class GrpsBasis:
    """Row ``i`` of ``matrix`` (shape ``(N, n_dofs)``, CSR) is ``psi_i^level``."""
    case: str
    level: int
    matrix: sp.csr_matrix
    patches: list
    kkt_residuals: np.ndarray
    active_counts: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.matrix.shape[0]

    def vector(self, i):
        return self.matrix[i].toarray().ravel()

    def expand(self, coeffs):
        """Fine dof vector ``sum_i c_i psi_i``."""
        return self.matrix.T @ np.asarray(coeffs, dtype=float)


@dataclass(eq=False)
class DecayProfile:
    row: int
    levels: np.ndarray
    distances: np.ndarray
    energies: np.ndarray
    rho: float


def full_level(h):
    """A level at which every patch is the whole mesh."""
    return 2 * h.coarse.N


def local_system(i, A, m, p):
    """Patch stiffness, active constraint block, active row ids and position of ``i``."""
    dofs = p.fine_dofs
    A = A.full if isinstance(A, SparseSym) else sp.csr_matrix(A)
    A_loc = A[dofs][:, dofs]
    C = m.rows[:, dofs].tocsr()
    active = np.flatnonzero(np.diff(C.indptr) > 0)
    C_loc = C[active]
    pos = np.searchsorted(active, i)
    if pos >= len(active) or active[pos] != i:
        raise BasisInfeasible(i, p.level, 'measurement has no dofs inside its patch')
    return A_loc, C_loc, active, pos


def _solve_rows(rows, level, A, m, p, factor=None):
    """Solve the KKT problems of ``rows`` that share patch ``p``."""
    A_loc, C_loc, active, _ = local_system(rows[0], A, m, p)
    try:
        factor = KKTFactor(A_loc, C_loc, tol=KKT_TOL) if factor is None else factor
    except (ConstraintRankError, SolverFailure) as exc:
        raise BasisInfeasible(int(rows[0]), level, exc) from exc
    out = []
    for i in rows:
        pos = np.searchsorted(active, i)
        if pos >= len(active) or active[pos] != i:
            raise BasisInfeasible(int(i), level, 'measurement has no dofs inside its patch')
        d = np.zeros(len(active))
        d[pos] = 1.0
        try:
            x, y = factor.solve(None, d)
        except (ConstraintRankError, SolverFailure) as exc:
            raise BasisInfeasible(int(i), level, exc) from exc
        res = np.abs(C_loc @ x - d).max()
        out.append((int(i), x, res, len(active)))
    return out


def _check_J(h, m):
    if m.case in ('E', 'D') and h.J < 2:
        raise InvalidArgument(f'case {m.case} needs J >= 2, got J = {h.J}')


def build_localized(i, level, A, m, h):
    """Dof vector of ``psi_i^level`` over all fine interior dofs."""
    _check_J(h, m)
    p = patch(h, m, i, level)
    (_, x, _, _), = _solve_rows([i], level, A, m, p)
    psi = np.zeros(h.n_dofs)
    psi[p.fine_dofs] = x
    return psi


def build_all(level, A, m, h, threads=1):
    """All ``psi_i^level``.  Rows sharing a patch share one factorisation."""
    _check_J(h, m)
    N = m.N
    patches = [patch(h, m, i, level) for i in range(N)]
    groups = {}
    for i, p in enumerate(patches):
        groups.setdefault(p.key, []).append(i)
    jobs = list(groups.values())

    def run(rows):
        return _solve_rows(rows, level, A, m, patches[rows[0]])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(rows) for rows in jobs]

    cols, vals, residuals, counts = [None] * N, [None] * N, np.zeros(N), np.zeros(N, dtype=int)
    for chunk in results:
        for i, x, res, na in chunk:
            cols[i] = patches[i].fine_dofs
            vals[i] = x
            residuals[i] = res
            counts[i] = na
    indptr = np.concatenate([[0], np.cumsum([len(c) for c in cols])])
    M = sp.csr_matrix((np.concatenate(vals), np.concatenate(cols), indptr),
                      shape=(N, h.n_dofs))
    M.eliminate_zeros()
    return GrpsBasis(m.case, int(level), M, patches, residuals, counts,
                     {'Nc': h.coarse.N, 'J': h.J})


def nullspace_localized(i, level, A, m, h):
    """Dense null-space oracle for ``psi_i^level`` (small problems only)."""
    p = patch(h, m, i, level)
    A_loc, C_loc, active, pos = local_system(i, A, m, p)
    d = np.zeros(len(active))
    d[pos] = 1.0
    x, _ = kkt_nullspace(KKTSystem(A_loc, C_loc, None, d))
    psi = np.zeros(h.n_dofs)
    psi[p.fine_dofs] = x
    return psi


def energy_norms(A, vectors):
    """Row-wise energy norms of a (k, n) dense or sparse matrix of dof vectors."""
    A = A.full if isinstance(A, SparseSym) else A
    V = sp.csr_matrix(vectors)
    return np.sqrt(np.maximum(np.asarray((V @ A).multiply(V).sum(axis=1)).ravel(), 0.0))


def central_rows(h, m, count=3):
    """The ``count`` rows whose support centroid is closest to (1/2, 1/2)."""
    c = h.coarse
    cent = np.array([c.vertices[c.triangles[s]].reshape(-1, 2).mean(axis=0)
                     for s in m.support])
    d = np.linalg.norm(cent - 0.5, axis=1)
    return [int(r) for r in np.argsort(d, kind='stable')[:count]]


def _full_cover_level(h, m, i):
    c = h.coarse
    for l in range(full_level(h) + 1):
        if len(grow_layers(c, m.support[i], l)) == c.n_triangles:
            return l
    return full_level(h)


def decay_profile(i, A, m, h, level_max=None):
    """Energy distances ``||psi_i^l - psi_i^{lmax}||_a`` for ``l = 0..lmax``.

    ``level_max`` defaults to the first level whose patch is the whole mesh.
    ``rho`` is the geometric-mean ratio of successive distances over levels
    1..lmax-1.
    """
    if level_max is None:
        level_max = _full_cover_level(h, m, i)
    vecs = [build_localized(i, l, A, m, h) for l in range(level_max + 1)]
    ref = vecs[-1]
    dist = energy_norms(A, np.array([v - ref for v in vecs]))
    energies = energy_norms(A, np.array(vecs))
    lo, hi = 1, level_max - 1
    if hi > lo and dist[lo] > 0 and dist[hi] > 0:
        rho = float((dist[hi] / dist[lo]) ** (1.0 / (hi - lo)))
    else:
        rho = float('nan')
    return DecayProfile(int(i), np.arange(level_max + 1), dist, energies, rho)


def psi0_scaling(case, Nc_list, J, kappa_spec=1.0, threads=1):
    """Rows ``(Nc, H, max_i H * ||psi_i^0||_a)`` for each coarse size."""
    from .coeff import sample_field
    from .fem import assemble_stiffness
    from .measurements import build_measurements
    from .mesh import build_coarse_mesh, refine

    table = []
    for Nc in Nc_list:
        h = refine(build_coarse_mesh(Nc), J)
        A = assemble_stiffness(h, sample_field(kappa_spec, h))
        m = build_measurements(h, case)
        B = build_all(0, A, m, h, threads=threads)
        e = energy_norms(A, B.matrix)
        table.append((Nc, h.H, float(h.H * e.max())))
    return table
