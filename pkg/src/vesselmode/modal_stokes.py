"""Cross-section solvers for the rigid-wall theory.

Scalar axial problems (Poiseuille profile, Womersley modes) use P2 Lagrange
elements with homogeneous Dirichlet data.  Divergence liftings use the
Taylor-Hood pair P2/P1.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import bessel
from .errors import (
    DomainError,
    IncompatibilityError,
    MeshError,
    UnsupportedParameterError,
)
from .fem import P2Space, dirichlet_solve, sparse_solve
from .geometry import CrossSectionMesh

_space_lock = threading.Lock()
_space_cache: dict[int, tuple[CrossSectionMesh, P2Space]] = {}


def space_for(mesh) -> P2Space:
    """P2 space for a mesh, cached so repeated solves share assembled matrices."""
    if isinstance(mesh, P2Space):
        return mesh
    with _space_lock:
        hit = _space_cache.get(id(mesh))
        if hit is not None and hit[0] is mesh:
            return hit[1]
        space = P2Space(mesh)
        if len(_space_cache) > 16:
            _space_cache.clear()
        _space_cache[id(mesh)] = (mesh, space)
        return space


@dataclass(frozen=True)
class FluidParams:
    nu: float
    rho_b: float = 1.0

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError("kinematic viscosity nu must be positive")
        if not self.rho_b > 0:
            raise DomainError("fluid density rho_b must be positive")

    @property
    def mu_dyn(self) -> float:
        return self.nu * self.rho_b


@dataclass(frozen=True)
class ScalarField:
    """P2 nodal field on a mesh (real or complex)."""

    space: P2Space
    values: np.ndarray

    def flux(self):
        return flux_of(self)

    def l2_norm(self) -> float:
        v = self.space.values_at_quad(self.values)
        return float(np.sqrt(self.space.integrate(np.abs(v) ** 2)))

    def h1_seminorm(self) -> float:
        v = self.values
        return float(np.sqrt(abs(np.vdot(v, self.space.stiffness @ v))))

    def to_csv(self, path):
        """Rows 'node_id, x, y, re, im' for every P2 dof."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "x", "y", "re", "im"])
            vals = np.asarray(self.values, dtype=complex)
            for i, ((x, y), v) in enumerate(zip(self.space.dof_coords, vals)):
                w.writerow([i, f"{x:.17g}", f"{y:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


@dataclass(frozen=True)
class ModalRigidSolution:
    omega: float
    field: ScalarField
    flux: complex
    diagnostics: dict = field(default_factory=dict)


def solve_poiseuille(mesh, nu: float) -> ScalarField:
    """Galerkin solution of  nu Lap v = 1  in the cross-section, v = 0 on the wall."""
    FluidParams(nu)
    space = space_for(mesh)
    b = -space.dof_integrals / nu  # -(1/nu) int phi_i  from  int grad v . grad phi = -(1/nu) int phi
    v = dirichlet_solve(space, space.stiffness, b)
    if not np.all(np.isfinite(v)):
        raise MeshError("singular stiffness matrix")
    return ScalarField(space, v)


def solve_womersley_mode(mesh, nu: float, omega: float) -> ModalRigidSolution:
    """Galerkin solution of  i omega v - nu Lap v + 1 = 0,  v = 0 on the wall."""
    FluidParams(nu)
    if omega == 0:
        raise UnsupportedParameterError("omega = 0 is the steady problem: use solve_poiseuille")
    space = space_for(mesh)
    A = (1j * omega) * space.mass + nu * space.stiffness
    b = -space.dof_integrals.astype(complex)
    v = dirichlet_solve(space, A, b)
    idx = space.interior_dofs
    res = np.linalg.norm((A @ v - b)[idx]) / np.linalg.norm(b[idx])
    fld = ScalarField(space, v)
    return ModalRigidSolution(float(omega), fld, complex(flux_of(fld)),
                              {"relative_residual": float(res), "dofs": int(idx.size)})


def flux_of(fld) -> complex:
    """Integral of a P2 field over the cross-section."""
    if isinstance(fld, ModalRigidSolution):
        fld = fld.field
    return np.dot(fld.space.dof_integrals, fld.values)


def flux_identity_residual(sol: ModalRigidSolution, nu: float):
    """Relative gap in  int v = i omega int |v|^2 - nu int |grad v|^2.

    Returns ``(residual, normalized)``; if the flux vanishes the absolute gap
    is returned with ``normalized=False``.
    """
    v = sol.field.values
    sp2 = sol.field.space
    q = flux_of(sol.field)
    rhs = 1j * sol.omega * np.vdot(v, sp2.mass @ v).real - nu * np.vdot(v, sp2.stiffness @ v).real
    gap = abs(q - rhs)
    if abs(q) == 0:
        return float(gap), False
    return float(gap / abs(q)), True


def conormal_derivative(fld: ScalarField, laplacian) -> np.ndarray:
    """Variationally consistent normal derivative on the wall.

    ``laplacian`` is Lap v (callable, constant or quadrature values).  Solves
    the boundary mass system  int_gamma dn_v N_i = int grad v . grad phi_i
    + int (Lap v) phi_i  for boundary test functions; returns values at the
    boundary trace dofs (arclength order).
    """
    space = fld.space
    r = space.stiffness @ fld.values + space.load(laplacian)
    rb = r[space.boundary_dofs]
    return sparse_solve(space.boundary_mass.tocsc(), rb)


def poiseuille_conormal(fld: ScalarField, nu: float) -> np.ndarray:
    return conormal_derivative(fld, 1.0 / nu)


def trace_to_arclength(space: P2Space, trace, s, n_modes: int | None = None) -> np.ndarray:
    """Evaluate a P2 trace at arclength positions s through its Fourier projection.

    Only modes |m| <= n_modes (default B/4 for B boundary edges) are kept,
    which removes the vertex/midpoint oscillation of co-normal traces.
    """
    L = float(np.sum(space.bq_w))
    B = space.n_bdofs // 2
    M = B // 4 if n_modes is None else int(n_modes)
    vals = space.boundary_values(trace)
    m = np.arange(-M, M + 1)
    ph = np.exp(-2j * np.pi * np.multiply.outer(m, space.bq_s) / L)
    cm = np.einsum("mbg,bg->m", ph, space.bq_w * vals) / L
    out = np.exp(2j * np.pi * np.multiply.outer(np.asarray(s, dtype=float), m) / L) @ cm
    return out.real if np.isrealobj(trace) else out


# ---------------------------------------------------------------------------
# Taylor-Hood helpers and divergence lifting


def vector_blocks(space: P2Space, a_mass, a_stiff):
    """Block-diagonal (3 components) a_mass M + a_stiff K."""
    blk = a_mass * space.mass + a_stiff * space.stiffness
    return sp.block_diag([blk, blk, blk], format="csr")


@dataclass(frozen=True)
class LiftResult:
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    residual: float
    variant: str


def _bubble(space):
    """Positive bubble: -Lap phi = 1 in the cross-section, phi = 0 on the wall."""
    K = space.stiffness
    return dirichlet_solve(space, K, space.dof_integrals)


def divergence_lift(mesh, h, lam: complex = 0.0, variant: str = "dirichlet") -> LiftResult:
    """Discrete lifting w with  div w' + lam w3 = h  (weakly against P1).

    ``variant='dirichlet'``: w = 0 on the wall; for lam != 0 the mean of h is
    carried by w3 = (int h / lam) phi / int phi with a positive bubble phi.
    ``variant='slip'``: only the tangential trace w_s vanishes, w3 = 0; no
    compatibility condition on h.
    """
    space = space_for(mesh)
    hv = space.p1_load(h) if (callable(h) or np.ndim(h) == 0 or np.shape(h) == space.wq.shape) \
        else space.p1_mass @ np.asarray(h)
    hv = np.asarray(hv, dtype=complex)
    alpha = hv.sum()  # int h
    n = space.n_dofs
    scale = max(np.linalg.norm(hv), 1e-300)
    if np.linalg.norm(hv) == 0:
        z = np.zeros(n, dtype=complex)
        return LiftResult(z, z.copy(), z.copy(), 0.0, variant)
    B1, B2 = space.p1_div(0), space.p1_div(1)
    N = space.p1_p2_mass
    w3 = np.zeros(n, dtype=complex)
    if variant == "dirichlet":
        if lam == 0:
            if abs(alpha) > 1e-10 * np.abs(hv).sum():
                raise IncompatibilityError(
                    "lam = 0 with nonzero mean of h cannot be lifted by a field vanishing on the wall")
        else:
            phi = _bubble(space)
            w3 = (alpha / lam) * phi / np.dot(space.dof_integrals, phi)
        target = hv - lam * (N @ w3)
        w1, w2 = _stokes_lift(space, target, slip=False)
    elif variant == "slip":
        target = hv
        w1, w2 = _stokes_lift(space, target, slip=True)
    else:
        raise DomainError(f"unknown lifting variant {variant!r}")
    res = B1 @ w1 + B2 @ w2 + lam * (N @ w3) - hv
    return LiftResult(w1, w2, w3, float(np.linalg.norm(res) / scale), variant)


def _stokes_lift(space: P2Space, target, slip: bool):
    """Minimal-energy w' with  B w' = target  via a Stokes saddle point."""
    n, nv = space.n_dofs, space.n_vertices
    K = space.stiffness + space.mass
    B1, B2 = space.p1_div(0), space.p1_div(1)
    A = sp.block_diag([K, K], format="csr")
    B = sp.hstack([B1, B2], format="csr")
    if slip:
        T = rotation_matrix(space, components=2)
        A = (T.T @ A @ T).tocsr()
        B = (B @ T).tocsr()
        # drop tangential boundary slots (second component at boundary dofs)
        keep = np.ones(2 * n, dtype=bool)
        keep[n + space.boundary_dofs] = False
    else:
        keep = np.zeros(2 * n, dtype=bool)
        keep[space.interior_dofs] = True
        keep[n + space.interior_dofs] = True
    idx = np.nonzero(keep)[0]
    Ak = A[idx][:, idx]
    Bk = B[:, idx]
    if slip:
        S = sp.bmat([[Ak, -Bk.T], [Bk, None]], format="csc")
        rhs = np.concatenate([np.zeros(idx.size, dtype=complex), target])
    else:
        ones = space.p1_mass @ np.ones(nv)
        c = sp.csr_matrix(ones[None, :])
        S = sp.bmat([[Ak, -Bk.T, None], [Bk, None, c.T], [None, c, None]], format="csc")
        rhs = np.concatenate([np.zeros(idx.size, dtype=complex), target, [0.0]])
    sol = sparse_solve(S, rhs)
    w = np.zeros(2 * n, dtype=complex)
    w[idx] = sol[: idx.size]
    if slip:
        w = T @ w
    return w[:n], w[n:]


def rotation_matrix(space: P2Space, components: int = 3):
    """Orthogonal T with v = T w, where w holds (w_n, w_s) at boundary dofs.

    Layout is component-major: [c1 (n dofs), c2 (n dofs), (c3)].  The normal
    slot replaces c1 and the tangential slot replaces c2 at boundary dofs.
    """
    n = space.n_dofs
    fr = space.boundary_dof_frame
    bd = space.boundary_dofs
    nx, ny = fr.normal
    tx, ty = fr.tangent
    diag = np.ones(components * n)
    diag[bd] = 0.0
    diag[n + bd] = 0.0
    rows = [np.arange(components * n)]
    cols = [np.arange(components * n)]
    vals = [diag]
    # v1 = nx w_n + tx w_s ; v2 = ny w_n + ty w_s
    rows += [bd, bd, n + bd, n + bd]
    cols += [bd, n + bd, bd, n + bd]
    vals += [nx, tx, ny, ty]
    T = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(components * n,) * 2)
    T.eliminate_zeros()
    return T


# ---------------------------------------------------------------------------
# disk oracles


@dataclass(frozen=True)
class DiskOracles:
    R: float
    nu: float
    omega: float = 0.0

    @property
    def alpha(self) -> complex:
        return np.sqrt(-1j * self.omega / self.nu)

    def poiseuille(self, r):
        return (np.asarray(r, dtype=float) ** 2 - self.R**2) / (4 * self.nu)

    def womersley(self, r):
        if self.omega == 0:
            return self.poiseuille(r).astype(complex)
        a = self.alpha
        return (1j / self.omega) * (1 - bessel.j0(a * np.asarray(r, dtype=float)) / bessel.j0(a * self.R))

    def flux_poiseuille(self) -> float:
        return -np.pi * self.R**4 / (8 * self.nu)

    def flux_womersley(self) -> complex:
        if self.omega == 0:
            return complex(self.flux_poiseuille())
        a, R = self.alpha, self.R
        return (1j / self.omega) * (np.pi * R**2 - 2 * np.pi * R * bessel.j1(a * R) / (a * bessel.j0(a * R)))

    def flux_by_quadrature(self, n: int = 200) -> complex:
        x, w = np.polynomial.legendre.leggauss(n)
        r = 0.5 * self.R * (x + 1)
        return np.sum(0.5 * self.R * w * 2 * np.pi * r * self.womersley(r))

    def womersley_residual(self, r):
        """|i omega v - nu (v'' + v'/r) + 1| with derivatives through J1."""
        r = np.asarray(r, dtype=float)
        if self.omega == 0:
            return np.abs(-self.nu * (1 / (2 * self.nu) + 1 / (2 * self.nu)) + 1) * np.ones_like(r)
        a, c = self.alpha, (1j / self.omega) / bessel.j0(self.alpha * self.R)
        J0, J1 = bessel.j0(a * r), bessel.j1(a * r)
        dv = c * a * J1                      # d/dr of -c J0(a r)
        d2v = c * a * a * (J0 - J1 / (a * r))  # d2/dr2
        v = (1j / self.omega) - c * J0
        return np.abs(1j * self.omega * v - self.nu * (d2v + dv / r) + 1)

    def conormal_poiseuille(self) -> float:
        return self.R / (2 * self.nu)


def disk_oracles(R: float, nu: float, omega: float = 0.0) -> DiskOracles:
    FluidParams(nu)
    if not R > 0:
        raise DomainError("radius must be positive")
    return DiskOracles(float(R), float(nu), float(omega))
