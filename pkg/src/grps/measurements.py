"""Measurement functionals over fine interior dofs.

Each row of ``MeasurementSet.rows`` applied to a fine dof vector ``u`` gives
``[u, phi_i]``: a scaled volume integral over a coarse triangle, a scaled line
integral over an interior coarse edge, or (case ``Dprime``) a scaled integral
of a first derivative over a coarse triangle.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ['MeasurementSet', 'CASES', 'build_volume', 'build_edge',
           'build_derivative', 'build_combined', 'build_measurements',
           'volume_scaling', 'VOLUME_SCALINGS', 'edge_scaling', 'expected_count']

CASES = ('V', 'E', 'D', 'Dprime')
DIM = 2


VOLUME_SCALINGS = ('inv_sqrt', 'sqrt')


def volume_scaling(area, mode='inv_sqrt'):
    """Volume-row factor: ``|tau|**-0.5`` (L2-normalised indicator, the
    default) or the literal ``|tau|**0.5``.  Either choice spans the same
    space; only the individual basis vectors are rescaled."""
    area = np.asarray(area, dtype=float)
    if mode == 'inv_sqrt':
        return 1.0 / np.sqrt(area)
    if mode == 'sqrt':
        return np.sqrt(area)
    raise ValueError(f'unknown volume scaling {mode!r}')


def edge_scaling(length, d=DIM):
    return np.asarray(length, dtype=float) ** ((2 - d) / (2 * (d - 1)))


def expected_count(case, Nc):
    return {'V': 2 * Nc**2, 'E': 3 * Nc**2 - 2 * Nc, 'D': 5 * Nc**2 - 2 * Nc,
            'Dprime': 6 * Nc**2}[case]


@dataclass(eq=False)
class MeasurementSet:
    """Sparse constraint matrix plus per-row metadata.

    ``rows`` has shape ``(N, n_dofs)``.  ``support[i]`` is the array of
    coarse triangles forming the 0-th layer patch of row ``i``;
    ``row_kind[i]`` is ``'volume'``, ``'edge'`` or ``'derivative'`` and
    ``entity[i]`` the coarse triangle or edge id it belongs to.
    """
    case: str
    rows: sp.csr_matrix
    scaling: np.ndarray
    support: list
    row_kind: np.ndarray
    entity: np.ndarray

    @property
    def N(self):
        return self.rows.shape[0]

    def __len__(self):
        return self.N

    def apply(self, u):
        return self.rows @ u

    def volume_rows(self):
        return np.flatnonzero(self.row_kind == 'volume')

    def edge_rows(self):
        return np.flatnonzero(self.row_kind == 'edge')


def _restrict(h, rows_by_vertex):
    """Keep only interior-dof columns of a (N, n_vertices) matrix."""
    M = sp.csr_matrix(rows_by_vertex)[:, h.fine_interior_dofs]
    M.eliminate_zeros()
    M.sort_indices()
    return M.tocsr()


def _volume_integrals(h):
    """(Nt_coarse, n_vertices) matrix of exact P1 integrals over coarse triangles."""
    f = h.fine
    ntc = h.coarse.n_triangles
    rows = np.repeat(h.fine_tri_to_coarse, 3)
    cols = f.triangles.ravel()
    vals = np.repeat(f.areas / 3.0, 3)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ntc, f.n_vertices))


def _edge_integrals(h):
    """(Ne_coarse, n_vertices) matrix of trapezoid line integrals over coarse edges."""
    f = h.fine
    chains = h.coarse_edge_to_fine  # (ne, 2^J)
    ne, r = chains.shape
    ends = f.edges[chains]  # (ne, r, 2)
    half = 0.5 * f.edge_lengths[chains]
    rows = np.repeat(np.arange(ne), 2 * r)
    cols = ends.ravel()
    vals = np.repeat(half.ravel(), 2)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, f.n_vertices))


def build_volume(h, volume_scale='inv_sqrt'):
    c = h.coarse
    scale = volume_scaling(c.areas, volume_scale)
    rows = sp.diags(scale) @ _volume_integrals(h)
    nt = c.n_triangles
    return MeasurementSet('V', _restrict(h, rows), scale,
                          [np.array([t]) for t in range(nt)],
                          np.array(['volume'] * nt), np.arange(nt))


def _edge_part(h):
    c = h.coarse
    inner = c.interior_edges
    scale = edge_scaling(c.edge_lengths[inner])
    rows = sp.diags(scale) @ _edge_integrals(h)[inner]
    support = [np.sort(c.edge_tris[e]) for e in inner]
    return _restrict(h, rows), scale, support, inner


def build_edge(h):
    rows, scale, support, inner = _edge_part(h)
    return MeasurementSet('E', rows, scale, support,
                          np.array(['edge'] * len(inner)), inner)


def build_combined(h, volume_scale='inv_sqrt'):
    """Volume rows followed by interior-edge rows."""
    V = build_volume(h, volume_scale)
    Erows, Escale, Esupport, inner = _edge_part(h)
    return MeasurementSet(
        'D', sp.vstack([V.rows, Erows], format='csr'),
        np.concatenate([V.scaling, Escale]), V.support + Esupport,
        np.concatenate([V.row_kind, np.array(['edge'] * len(inner))]),
        np.concatenate([V.entity, inner]))


def outward_normals(mesh):
    """(nt, 3, 2) outward unit normals; local edge k joins vertices k, k+1."""
    p = mesh.vertices[mesh.triangles]
    d = np.roll(p, -1, axis=1) - p
    n = np.stack([d[..., 1], -d[..., 0]], axis=2)  # right normal, outward for CCW
    return n / np.linalg.norm(n, axis=2, keepdims=True)


def build_derivative(h, volume_scale='inv_sqrt'):
    """Case D': volume rows then, per coarse triangle, the x1- and
    x2-derivative rows written as normal-weighted edge rows.

    Edge integrals over boundary coarse edges only involve boundary vertices,
    so they vanish once restricted to interior dofs.
    """
    c = h.coarse
    V = build_volume(h, volume_scale)
    Eall = _edge_integrals(h)
    ce = edge_scaling(c.edge_lengths)
    Eall = sp.diags(ce) @ Eall
    normals = outward_normals(c)
    ctau = volume_scaling(c.areas, volume_scale)
    nt = c.n_triangles
    # (2 nt, ne) combination matrix: row 2t + a = (c_tau / c_e) sum_k n_{k,a} e_k
    rows = np.repeat(np.arange(2 * nt), 3)
    tri = np.repeat(np.arange(nt), 2)
    edges = c.tri_edges[tri].ravel()
    alpha = np.tile([0, 1], nt)
    vals = (normals[tri, :, :][np.arange(2 * nt), :, alpha]
            * (ctau[tri][:, None] / ce[c.tri_edges[tri]])).ravel()
    Comb = sp.csr_matrix((vals, (rows, edges)), shape=(2 * nt, c.n_edges))
    D = _restrict(h, Comb @ Eall)
    return MeasurementSet(
        'Dprime', sp.vstack([V.rows, D], format='csr'),
        np.concatenate([V.scaling, ctau[tri]]),
        V.support + [np.array([t]) for t in tri],
        np.concatenate([V.row_kind, np.array(['derivative'] * (2 * nt))]),
        np.concatenate([V.entity, tri]))


def build_measurements(h, case, volume_scale='inv_sqrt'):
    case = {'v': 'V', 'e': 'E', 'd': 'D', 'dprime': 'Dprime'}.get(str(case).lower(), case)
    builders = {'V': build_volume, 'E': build_edge, 'D': build_combined,
                'Dprime': build_derivative}
    if case not in builders:
        raise ValueError(f'unknown measurement case {case!r}')
    if case == 'E':
        return build_edge(h)
    return builders[case](h, volume_scale)
