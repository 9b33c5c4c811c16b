"""P1 finite elements on the fine mesh of a :class:`~grps.mesh.MeshHierarchy`.

Matrices are assembled over all fine vertices and then restricted to the
interior dofs (homogeneous Dirichlet data by elimination).
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coeff import CoefficientField
from .errors import InvalidArgument
from .linalg import SparseSym, solve_spd

__all__ = ['FineOperator', 'p1_gradients', 'assemble_stiffness_full',
           'assemble_stiffness', 'assemble_mass_full', 'assemble_mass',
           'assemble_load', 'fine_operator', 'reference_solve', 'norms']


def p1_gradients(mesh):
    """Per-triangle gradients of the three barycentric hats, shape (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    area2 = 2 * mesh.areas
    # grad of lambda_k is the rotated opposite edge divided by 2|T|
    e0 = p[:, 2] - p[:, 1]
    e1 = p[:, 0] - p[:, 2]
    e2 = p[:, 1] - p[:, 0]
    G = np.stack([e0, e1, e2], axis=1)
    return np.stack([-G[..., 1], G[..., 0]], axis=2) / area2[:, None, None]


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def _kappa_values(h, kappa):
    if kappa is None:
        return np.ones(h.fine.n_triangles)
    vals = kappa.values if isinstance(kappa, CoefficientField) else np.asarray(kappa, float)
    if vals.shape != (h.fine.n_triangles,):
        raise InvalidArgument(f'coefficient has {vals.size} values, mesh has '
                              f'{h.fine.n_triangles} fine triangles')
    return vals


def assemble_stiffness_full(h, kappa=None):
    """Stiffness over all fine vertices (no boundary elimination)."""
    mesh = h.fine
    k = _kappa_values(h, kappa)
    G = p1_gradients(mesh)
    local = np.einsum('tid,tjd->tij', G, G) * (k * mesh.areas)[:, None, None]
    return _scatter(mesh, local)


def assemble_stiffness(h, kappa=None):
    """Stiffness ``sum_T kappa_T int_T grad phi_i . grad phi_j`` on interior dofs."""
    A = assemble_stiffness_full(h, kappa)
    idx = h.fine_interior_dofs
    return SparseSym(A[idx][:, idx])


_MASS_REF = (np.ones((3, 3)) + np.eye(3)) / 12.0


def assemble_mass_full(h):
    mesh = h.fine
    local = mesh.areas[:, None, None] * _MASS_REF[None]
    return _scatter(mesh, local)


def assemble_mass(h):
    M = assemble_mass_full(h)
    idx = h.fine_interior_dofs
    return SparseSym(M[idx][:, idx])


def assemble_load(h, g):
    """Load vector ``int g phi_i`` by the edge-midpoint rule on each triangle."""
    mesh = h.fine
    t = mesh.triangles
    p = mesh.vertices[t]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))  # midpoint k joins local k, k+1
    if callable(g):
        gm = np.asarray(g(mids[..., 0], mids[..., 1]), dtype=float) * np.ones(mids.shape[:2])
    else:
        gm = np.full(mids.shape[:2], float(g))
    w = mesh.areas[:, None] / 3.0
    # hat k is 1/2 at the midpoints of its two incident edges (k, k+1) and (k-1, k)
    local = 0.5 * w * (gm + np.roll(gm, 1, axis=1))
    b = np.bincount(t.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return b[h.fine_interior_dofs]


@dataclass(eq=False)
class FineOperator:
    """Fine-scale stiffness ``A``, mass ``M`` and unit-coefficient stiffness
    ``A1`` over the interior dofs of ``h``."""
    h: object
    kappa: CoefficientField
    A: SparseSym
    M: SparseSym
    A1: SparseSym

    @property
    def n(self):
        return self.A.n


def fine_operator(h, kappa):
    A1 = assemble_stiffness(h, None)
    vals = _kappa_values(h, kappa)
    A = A1 if np.all(vals == 1.0) else assemble_stiffness(h, kappa)
    return FineOperator(h, kappa, A, assemble_mass(h), A1)


def reference_solve(op, b, tol=1e-10):
    return solve_spd(op.A, b, tol=tol)


def norms(op, u):
    u = np.asarray(u, dtype=float)
    return {
        'l2': float(np.sqrt(max(op.M.quad(u), 0.0))),
        'h1_semi': float(np.sqrt(max(op.A1.quad(u), 0.0))),
        'energy': float(np.sqrt(max(op.A.quad(u), 0.0))),
    }
