"""Structured triangulations of the unit square and their uniform refinements.

The coarse mesh splits each of the ``Nc x Nc`` squares along the (1, 1)
diagonal.  Red refinement of that mesh (connect edge midpoints, three corner
children plus a centre child) yields the same structured pattern on a grid
with ``2**J * Nc`` squares per side, so the fine mesh is stored as an ordinary
structured mesh and the hierarchy maps are computed by tracking children.

Numbering is lexicographic: vertex ``(row, col)`` has index
``row * (N + 1) + col`` (row = y index), and square ``(row, col)`` owns
triangles ``2 * (row * N + col)`` (below the diagonal) and ``... + 1`` (above).
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import InvalidArgument

__all__ = ['TriMesh', 'MeshHierarchy', 'Patch',
           'build_coarse_mesh', 'refine', 'patch', 'patch_from_tris']


def _structured_triangles(N):
    r, c = np.divmod(np.arange(N * N), N)
    v00 = r * (N + 1) + c
    v10 = v00 + 1
    v01 = v00 + N + 1
    v11 = v01 + 1
    tris = np.empty((2 * N * N, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])
    return tris


class TriMesh:
    """Structured triangulation of [0, 1]^2 with ``N`` squares per side.

    Attributes
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    edges : (ne, 2) int array, sorted vertex pairs in lexicographic order
    edge_boundary : (ne,) bool
    edge_tris : (ne, 2) int array of adjacent triangles, -1 pads boundary edges
    tri_edges : (nt, 3) int array, ``tri_edges[t, k]`` joins local vertices
        ``k`` and ``(k + 1) % 3``
    areas, edge_lengths : float arrays
    """

    def __init__(self, N):
        N = int(N)
        self.N = N
        ii = np.arange(N + 1)
        X, Y = np.meshgrid(ii / N, ii / N)
        self.vertices = np.column_stack([X.ravel(), Y.ravel()])
        # integer lattice coordinates, exact for geometric predicates
        self.lattice = np.column_stack([np.tile(ii, N + 1), np.repeat(ii, N + 1)])
        self.triangles = _structured_triangles(N)

        local = np.stack([self.triangles, np.roll(self.triangles, -1, axis=1)], axis=2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        self.edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        self.tri_edges = inverse.reshape(-1, 3)

        ne = len(self.edges)
        owner = np.repeat(np.arange(len(self.triangles)), 3)
        order = np.argsort(inverse, kind='stable')
        counts = np.bincount(inverse, minlength=ne)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        self.edge_tris = -np.ones((ne, 2), dtype=np.int64)
        self.edge_tris[:, 0] = owner[order[starts]]
        two = counts == 2
        self.edge_tris[two, 1] = owner[order[starts[two] + 1]]
        self.edge_boundary = counts == 1

        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        self.edge_lengths = np.linalg.norm(
            self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)

        lat = self.lattice
        self.vertex_boundary = (lat == 0).any(axis=1) | (lat == N).any(axis=1)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def interior_edges(self):
        return np.flatnonzero(~self.edge_boundary)

    @property
    def interior_vertices(self):
        return np.flatnonzero(~self.vertex_boundary)

    @property
    def spacing(self):
        """Side length of the squares, the ``H`` (or ``h``) of the experiments."""
        return 1.0 / self.N

    @property
    def diameter(self):
        return float(self.edge_lengths.max())

    @cached_property
    def vertex_tri(self):
        """(nv, nt) incidence matrix in CSR format."""
        nt = self.n_triangles
        rows = self.triangles.ravel()
        cols = np.repeat(np.arange(nt), 3)
        data = np.ones(3 * nt, dtype=np.int32)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n_vertices, nt))

    def edge_index(self, a, b):
        """Edge ids for vertex pairs ``(a, b)`` (array-valued, order-free)."""
        a = np.asarray(a)
        b = np.asarray(b)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        keys = self.edges[:, 0] * self.n_vertices + self.edges[:, 1]
        query = lo * self.n_vertices + hi
        pos = np.searchsorted(keys, query)
        pos = np.clip(pos, 0, len(keys) - 1)
        if not np.all(keys[pos] == query):
            raise InvalidArgument('vertex pair is not an edge of the mesh')
        return pos

    def tri_at_lattice(self, cx3, cy3):
        """Triangle ids from three times the lattice centroid (integers)."""
        col = cx3 // 3
        row = cy3 // 3
        upper = (cx3 - 3 * col) < (cy3 - 3 * row)
        return 2 * (row * self.N + col) + upper.astype(np.int64)


def build_coarse_mesh(Nc):
    """Coarse mesh with ``Nc`` squares per side, each split along (1, 1)."""
    if isinstance(Nc, bool) or int(Nc) != Nc or Nc < 1:
        raise InvalidArgument(f'Nc must be a positive integer, got {Nc!r}')
    return TriMesh(int(Nc))


class MeshHierarchy:
    """A coarse mesh plus its ``J``-times uniformly refined fine mesh.

    ``coarse_tri_to_fine[t]`` lists the ``4**J`` fine children of coarse
    triangle ``t`` in recursive order (corner children of ``(a, b, c)`` at
    ``a``, ``b``, ``c``, then the centre child).  ``coarse_edge_to_fine[e]``
    is the chain of ``2**J`` fine edges running from ``edges[e, 0]`` to
    ``edges[e, 1]``.  Fine interior vertices are numbered as dofs in
    lexicographic order; ``vertex_to_dof`` is -1 on the boundary.
    """

    def __init__(self, coarse, J):
        if isinstance(J, bool) or int(J) != J or J < 0:
            raise InvalidArgument(f'J must be a nonnegative integer, got {J!r}')
        J = int(J)
        self.coarse = coarse
        self.J = J
        self.ratio = 2 ** J
        self.fine = TriMesh(coarse.N * self.ratio)

        self.coarse_tri_to_fine = self._children()
        self.fine_tri_to_coarse = np.empty(self.fine.n_triangles, dtype=np.int64)
        self.fine_tri_to_coarse[self.coarse_tri_to_fine] = \
            np.arange(coarse.n_triangles)[:, None]
        self.coarse_edge_to_fine = self._edge_chains()

        self.fine_interior_dofs = self.fine.interior_vertices
        self.vertex_to_dof = -np.ones(self.fine.n_vertices, dtype=np.int64)
        self.vertex_to_dof[self.fine_interior_dofs] = np.arange(len(self.fine_interior_dofs))

    def _children(self):
        c = self.coarse
        tris = (c.lattice[c.triangles] * self.ratio)[:, None]  # (nt, 1, 3, 2)
        for _ in range(self.J):
            a, b, cc = tris[:, :, 0], tris[:, :, 1], tris[:, :, 2]
            mab, mbc, mca = (a + b) // 2, (b + cc) // 2, (cc + a) // 2
            kids = np.stack([
                np.stack([a, mab, mca], axis=2),
                np.stack([mab, b, mbc], axis=2),
                np.stack([mca, mbc, cc], axis=2),
                np.stack([mbc, mca, mab], axis=2),
            ], axis=2)  # (nt, m, 4, 3, 2)
            tris = kids.reshape(kids.shape[0], -1, 3, 2)
        s = tris.sum(axis=2)
        return self.fine.tri_at_lattice(s[..., 0], s[..., 1])

    def _edge_chains(self):
        c, f, r = self.coarse, self.fine, self.ratio
        start = c.lattice[c.edges[:, 0]] * r
        stop = c.lattice[c.edges[:, 1]] * r
        step = (stop - start) // r
        k = np.arange(r + 1)
        pts = start[:, None, :] + k[None, :, None] * step[:, None, :]
        vid = pts[..., 1] * (f.N + 1) + pts[..., 0]
        return f.edge_index(vid[:, :-1], vid[:, 1:])

    @property
    def H(self):
        """Coarse square side ``1 / Nc``."""
        return self.coarse.spacing

    @property
    def h(self):
        return self.fine.spacing

    @property
    def n_dofs(self):
        return len(self.fine_interior_dofs)

    def fine_tris_of(self, coarse_tris):
        return np.sort(self.coarse_tri_to_fine[np.asarray(coarse_tris, dtype=np.int64)].ravel())

    def interpolate(self, fn):
        """Nodal values of ``fn(x1, x2)`` at fine interior dofs."""
        xy = self.fine.vertices[self.fine_interior_dofs]
        return np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=float) * np.ones(len(xy))

    def to_vertices(self, u):
        """Scatter a dof vector onto all fine vertices (zero on the boundary)."""
        full = np.zeros(self.fine.n_vertices)
        full[self.fine_interior_dofs] = u
        return full


def refine(mesh, J):
    return MeshHierarchy(mesh, J)


@dataclass(frozen=True, eq=False)
class Patch:
    """Localization patch: ``level``-layer neighbourhood of a measurement support.

    ``coarse_tris`` and ``fine_dofs`` are sorted index arrays; ``fine_dofs``
    are the fine interior dofs strictly inside the patch.
    """
    center_index: int
    level: int
    coarse_tris: np.ndarray
    fine_dofs: np.ndarray

    @property
    def key(self):
        return self.coarse_tris.tobytes()


def grow_layers(coarse, tris, level):
    """Apply ``level`` layer-growth steps (triangles touching the set)."""
    VT = coarse.vertex_tri
    mask = np.zeros(coarse.n_triangles, dtype=bool)
    mask[np.asarray(tris, dtype=np.int64)] = True
    for _ in range(level):
        verts = VT @ mask.astype(np.int32) > 0
        new = VT.T @ verts.astype(np.int32) > 0
        if new.sum() == mask.sum():
            break
        mask = new
    return np.flatnonzero(mask)


def patch_from_tris(h, tris, level, center_index=-1):
    tris = grow_layers(h.coarse, tris, level)
    fmask = np.zeros(h.fine.n_triangles, dtype=bool)
    fmask[h.fine_tris_of(tris)] = True
    VT = h.fine.vertex_tri
    inside = VT @ fmask.astype(np.int32)
    total = np.diff(VT.indptr)
    verts = np.flatnonzero((inside == total) & ~h.fine.vertex_boundary)
    return Patch(int(center_index), int(level), tris, h.vertex_to_dof[verts])


def patch(h, m, i, level):
    """Layer-``level`` patch of measurement row ``i`` of ``m``."""
    return patch_from_tris(h, m.support[i], level, center_index=i)
