"""Quadratic/linear Lagrange finite elements on a CrossSectionMesh.

Velocity-type fields use continuous P2 (vertex dofs first, then one dof per
edge midpoint); pressures use continuous P1 on the vertices.  Boundary
integrals are done on the exact curve: each boundary edge is identified with
its arclength interval and carries a 1D quadratic trace space.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InterfaceError, MeshError
from .geometry import CrossSectionMesh

_r15 = np.sqrt(15.0)
_a1, _b1 = (9 - 2 * _r15) / 21, (6 + _r15) / 21
_a2, _b2 = (9 + 2 * _r15) / 21, (6 - _r15) / 21
_w1, _w2 = (155 + _r15) / 1200, (155 - _r15) / 1200

# 7-point rule, exact for degree 5; barycentric rows, weights sum to 1
QUAD_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_a1, _b1, _b1], [_b1, _a1, _b1], [_b1, _b1, _a1],
    [_a2, _b2, _b2], [_b2, _a2, _b2], [_b2, _b2, _a2],
])
QUAD_W = np.array([9 / 40, _w1, _w1, _w1, _w2, _w2, _w2])

_LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def _p2_basis(L):
    """Values (q, 6) and barycentric derivatives (q, 6, 3) of P2 shapes."""
    L0, L1, L2 = L[:, 0], L[:, 1], L[:, 2]
    phi = np.stack([L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1),
                    4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0], axis=1)
    z = np.zeros_like(L0)
    d = np.stack([
        np.stack([4 * L0 - 1, z, z], 1),
        np.stack([z, 4 * L1 - 1, z], 1),
        np.stack([z, z, 4 * L2 - 1], 1),
        np.stack([4 * L1, 4 * L0, z], 1),
        np.stack([z, 4 * L2, 4 * L1], 1),
        np.stack([4 * L2, z, 4 * L0], 1),
    ], axis=1)
    return phi, d


def _p2_1d(t):
    """1D quadratic shapes on [0,1] ordered (start, mid, end) and d/dt."""
    N = np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=1)
    dN = np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=1)
    return N, dN


def sparse_solve(A, b, tol=1e-12, max_refine=4, lu=None):
    """Direct sparse solve with a few steps of iterative refinement."""
    A = sp.csc_matrix(A)
    if np.iscomplexobj(b) and not np.iscomplexobj(A.data):
        if lu is None:
            re = sparse_solve(A, np.ascontiguousarray(b.real), tol, max_refine)
            im = sparse_solve(A, np.ascontiguousarray(b.imag), tol, max_refine)
            return re + 1j * im
        A = A.astype(complex)
    if lu is None:
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise MeshError(f"singular system matrix: {exc}") from None
    x = lu.solve(b)
    bn = max(np.linalg.norm(b), 1e-300)
    for _ in range(max_refine):
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bn:
            break
        x = x + lu.solve(r)
    return x


class P2Space:
    """Continuous P2 space with a companion P1 space on the same mesh."""

    def __init__(self, mesh: CrossSectionMesh, n_gauss_boundary: int = 4):
        self.mesh = mesh
        nodes, tris = mesh.nodes, mesh.triangles
        nv = len(nodes)
        loc = np.concatenate([tris[:, list(e)] for e in _LOCAL_EDGES])
        key = np.sort(loc, axis=1)
        code = key[:, 0].astype(np.int64) * nv + key[:, 1]
        ucode, inv = np.unique(code, return_inverse=True)
        self.edges = np.stack([ucode // nv, ucode % nv], axis=1)
        self._edge_code = ucode
        T = len(tris)
        tri_edges = inv.reshape(3, T).T
        self.n_vertices = nv
        self.n_dofs = nv + len(ucode)
        self.dofs = np.concatenate([tris, nv + tri_edges], axis=1)
        self.dof_coords = np.concatenate([nodes, nodes[self.edges].mean(axis=1)])

        p = nodes[tris]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0):
            raise MeshError("degenerate or inverted triangle")
        self.area = 0.5 * det
        # gradients of barycentrics, shape (T, 3, 2)
        g1 = np.stack([d2[:, 1], -d2[:, 0]], axis=1) / det[:, None]
        g2 = np.stack([-d1[:, 1], d1[:, 0]], axis=1) / det[:, None]
        self.grad_bary = np.stack([-g1 - g2, g1, g2], axis=1)
        self.phi, dphi = _p2_basis(QUAD_BARY)
        # (T, q, 6, 2)
        self.grad_phi = np.einsum("qik,tkd->tqid", dphi, self.grad_bary)
        self.wq = self.area[:, None] * QUAD_W[None, :]  # (T, q)
        self.quad_points = np.einsum("qk,tkd->tqd", QUAD_BARY, p)

        self._setup_boundary(n_gauss_boundary)

    # -- helpers ---------------------------------------------------------

    def edge_index(self, i, j):
        i, j = np.minimum(i, j), np.maximum(i, j)
        code = np.asarray(i, dtype=np.int64) * self.n_vertices + j
        k = np.searchsorted(self._edge_code, code)
        if np.any(k >= len(self._edge_code)) or np.any(self._edge_code[k] != code):
            raise MeshError("boundary edge missing from triangulation")
        return k

    def _scatter(self, local, rows, cols, shape):
        r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
        c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
        return sp.csr_matrix((local.ravel(), (r, c)), shape=shape)

    # -- domain matrices -------------------------------------------------

    @cached_property
    def mass(self):
        loc = np.einsum("tq,qi,qj->tij", self.wq, self.phi, self.phi)
        return self._scatter(loc, self.dofs, self.dofs, (self.n_dofs,) * 2)

    @cached_property
    def stiffness(self):
        loc = np.einsum("tq,tqid,tqjd->tij", self.wq, self.grad_phi, self.grad_phi)
        return self._scatter(loc, self.dofs, self.dofs, (self.n_dofs,) * 2)

    def grad_pair(self, a: int, b: int):
        """Matrix of  int d_a(phi_i) d_b(phi_j)  (row i test, column j trial)."""
        loc = np.einsum("tq,tqi,tqj->tij", self.wq,
                        self.grad_phi[..., a], self.grad_phi[..., b])
        return self._scatter(loc, self.dofs, self.dofs, (self.n_dofs,) * 2)

    def value_grad(self, a: int):
        """Matrix of  int phi_i d_a(phi_j)  (row i test, column j trial)."""
        loc = np.einsum("tq,qi,tqj->tij", self.wq, self.phi, self.grad_phi[..., a])
        return self._scatter(loc, self.dofs, self.dofs, (self.n_dofs,) * 2)

    @cached_property
    def p1_mass(self):
        L = QUAD_BARY
        loc = np.einsum("tq,qi,qj->tij", self.wq, L, L)
        tri = self.mesh.triangles
        return self._scatter(loc, tri, tri, (self.n_vertices,) * 2)

    def p1_div(self, a: int):
        """B_a[q, j] = int psi_q d_a(phi_j)."""
        loc = np.einsum("tq,qi,tqj->tij", self.wq, QUAD_BARY, self.grad_phi[..., a])
        return self._scatter(loc, self.mesh.triangles, self.dofs,
                             (self.n_vertices, self.n_dofs))

    @cached_property
    def p1_p2_mass(self):
        """N[q, j] = int psi_q phi_j."""
        loc = np.einsum("tq,qi,qj->tij", self.wq, QUAD_BARY, self.phi)
        return self._scatter(loc, self.mesh.triangles, self.dofs,
                             (self.n_vertices, self.n_dofs))

    @cached_property
    def p1_stiffness(self):
        loc = np.einsum("t,tid,tjd->tij", self.area, self.grad_bary, self.grad_bary)
        tri = self.mesh.triangles
        return self._scatter(loc, tri, tri, (self.n_vertices,) * 2)

    # -- loads, integrals, evaluation -----------------------------------

    def load(self, f):
        """int f phi_i for a callable f(x, y), a constant, or quadrature values (T, q)."""
        fq = self._at_quad(f)
        loc = np.einsum("tq,qi,tq->ti", self.wq, self.phi, fq)
        out = np.zeros(self.n_dofs, dtype=loc.dtype)
        np.add.at(out, self.dofs, loc)
        return out

    def p1_load(self, f):
        fq = self._at_quad(f)
        loc = np.einsum("tq,qi,tq->ti", self.wq, QUAD_BARY, fq)
        out = np.zeros(self.n_vertices, dtype=loc.dtype)
        np.add.at(out, self.mesh.triangles, loc)
        return out

    def _at_quad(self, f):
        if callable(f):
            x, y = self.quad_points[..., 0], self.quad_points[..., 1]
            return np.broadcast_to(np.asarray(f(x, y)), x.shape)
        f = np.asarray(f)
        if f.ndim == 0:
            return np.full(self.wq.shape, f.item(), dtype=f.dtype)
        return f

    def values_at_quad(self, u):
        return np.einsum("qi,ti->tq", self.phi, np.asarray(u)[self.dofs])

    def grads_at_quad(self, u):
        return np.einsum("tqid,ti->tqd", self.grad_phi, np.asarray(u)[self.dofs])

    def p1_values_at_quad(self, p):
        return np.einsum("qi,ti->tq", QUAD_BARY, np.asarray(p)[self.mesh.triangles])

    def integrate(self, values_q):
        return np.sum(self.wq * values_q)

    def interpolate(self, f):
        x, y = self.dof_coords.T
        return np.asarray(f(x, y))

    def p1_interpolate(self, f):
        x, y = self.mesh.nodes.T
        return np.asarray(f(x, y))

    @cached_property
    def dof_integrals(self):
        return self.load(1.0)

    # -- boundary --------------------------------------------------------

    def _setup_boundary(self, ng):
        mesh = self.mesh
        be = mesh.bedges
        nb = len(be)
        mids = self.n_vertices + self.edge_index(be[:, 0], be[:, 1])
        bd = np.empty(2 * nb, dtype=int)
        bd[0::2] = be[:, 0]
        bd[1::2] = mids
        s_lo, s_hi = mesh.bedge_s[:, 0], mesh.bedge_s[:, 1]
        bs = np.empty(2 * nb)
        bs[0::2] = s_lo
        bs[1::2] = 0.5 * (s_lo + s_hi)
        self.boundary_dofs = bd
        self.boundary_s = bs
        # local boundary dofs in the 2B periodic trace numbering
        k = np.arange(nb)
        self.bloc = np.stack([2 * k, 2 * k + 1, (2 * k + 2) % (2 * nb)], axis=1)
        if np.any(be[:, 1] != be[(k + 1) % nb, 0]):
            raise MeshError("boundary edges are not a closed counterclockwise chain")
        x, w = np.polynomial.legendre.leggauss(ng)
        t = 0.5 * (x + 1)
        self.bq_t = t
        self.bq_w = (s_hi - s_lo)[:, None] * (0.5 * w)[None, :]  # (B, g)
        self.bq_s = s_lo[:, None] + (s_hi - s_lo)[:, None] * t[None, :]
        N, dN = _p2_1d(t)
        self.bN = N  # (g, 3)
        self.bdN = dN[None, :, :] / (s_hi - s_lo)[:, None, None]  # (B, g, 3) d/ds
        self.n_bdofs = 2 * nb

    @cached_property
    def boundary_frame(self):
        """Exact frame at boundary quadrature points (needs the mesh curve)."""
        curve = self.mesh.curve
        if curve is None:
            raise InterfaceError("boundary operators require the mesh to carry its curve")
        return curve.frame(self.bq_s.ravel())

    @cached_property
    def boundary_dof_frame(self):
        curve = self.mesh.curve
        if curve is None:
            raise InterfaceError("boundary operators require the mesh to carry its curve")
        return curve.frame(self.boundary_s)

    def boundary_quad_field(self, values):
        """Reshape a field given at flattened boundary quadrature points to (B, g)."""
        return np.asarray(values).reshape(self.bq_s.shape)

    def boundary_form(self, coef=1.0, d_test=0, d_trial=0):
        """Matrix of  int_gamma coef D^a(N_i) D^b(N_j) ds  on the 2B trace dofs."""
        g = self.bq_s.shape
        c = np.broadcast_to(np.asarray(coef), g)
        Ni = self.bdN if d_test else np.broadcast_to(self.bN, g + (3,))
        Nj = self.bdN if d_trial else np.broadcast_to(self.bN, g + (3,))
        loc = np.einsum("bg,bgi,bgj->bij", self.bq_w * c, Ni, Nj)
        return self._scatter(loc, self.bloc, self.bloc, (self.n_bdofs,) * 2)

    def boundary_load(self, g, d_test=0):
        """int_gamma g D^a(N_i) ds for g given at quadrature points (B, g) or callable of s."""
        if callable(g):
            g = g(self.bq_s)
        g = np.broadcast_to(np.asarray(g), self.bq_s.shape)
        Ni = self.bdN if d_test else np.broadcast_to(self.bN, self.bq_s.shape + (3,))
        loc = np.einsum("bg,bgi->bi", self.bq_w * g, Ni)
        out = np.zeros(self.n_bdofs, dtype=loc.dtype)
        np.add.at(out, self.bloc, loc)
        return out

    def boundary_values(self, ub, d=0):
        """Trace values (or s-derivative) at boundary quadrature points, (B, g)."""
        ub = np.asarray(ub)[self.bloc]  # (B, 3)
        if d:
            return np.einsum("bgi,bi->bg", self.bdN, ub)
        return np.einsum("gi,bi->bg", self.bN, ub)

    @cached_property
    def boundary_mass(self):
        return self.boundary_form()

    def boundary_integral(self, values_bq):
        return np.sum(self.bq_w * values_bq)

    @cached_property
    def interior_dofs(self):
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.nonzero(mask)[0]


def dirichlet_solve(space: P2Space, A, b):
    """Solve A u = b with homogeneous Dirichlet data on the boundary dofs."""
    idx = space.interior_dofs
    A = sp.csr_matrix(A)
    u = np.zeros(space.n_dofs, dtype=np.result_type(A.dtype, b.dtype))
    u[idx] = sparse_solve(A[idx][:, idx], b[idx])
    return u
