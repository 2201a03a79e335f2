"""Quadratic pencils for the modal fluid problems with rigid and elastic walls.

Both pencils are assembled on Taylor-Hood P2/P1 elements and stored as
A(lam) = A0 + lam A1 + lam^2 A2, acting on  x = [v1, v2, v3, p].

Rigid wall: velocity dofs on the wall are eliminated (no-slip).

Elastic wall: all velocity dofs are kept.  At boundary dofs the first two
slots hold the normal and tangential velocity (w_n, w_s) instead of the
Cartesian pair, and the three boundary slots (w_n, w_s, w_z) are identified
with i*omega times the wall displacement (u1, u2, u3).  The kinematic
condition therefore holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, NearEigenvalueError, UnsupportedParameterError
from .fem import P2Space, sparse_solve
from .modal_stokes import divergence_lift, rotation_matrix, space_for
from .wall_model import WallMaterial, assemble_wall_form

WALL_COUPLING_MODES = ("direct", "sigma_scaled")


@dataclass
class PencilContext:
    """Discrete quadratic pencil and its natural inner product G."""

    kind: str
    omega: float
    nu: float
    space: P2Space
    A0: sp.csc_matrix
    A1: sp.csc_matrix
    A2: sp.csc_matrix
    G: sp.csc_matrix
    layout: dict
    material: WallMaterial | None = None
    wall_coupling: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.A0.shape[0]

    def mu(self, lam) -> complex:
        return 1j * self.omega - self.nu * lam**2

    def A(self, lam) -> sp.csc_matrix:
        return (self.A0 + lam * self.A1 + lam**2 * self.A2).tocsc()

    def dA(self, lam) -> sp.csc_matrix:
        return (self.A1 + 2 * lam * self.A2).tocsc()

    def scaled(self, factor: float) -> "PencilContext":
        return PencilContext(self.kind, self.omega, self.nu, self.space,
                             (factor * self.A0).tocsc(), (factor * self.A1).tocsc(),
                             (factor * self.A2).tocsc(), self.G, self.layout,
                             self.material, self.wall_coupling,
                             {k: v for k, v in self.extras.items() if k != "_A_gnorms"})

    # -- layout helpers --------------------------------------------------

    def split(self, x):
        L = self.layout
        nvel = L["n_vel"]
        return x[:nvel], x[nvel:nvel + L["n_p"]]

    def export(self, prefix):
        """Write A0/A1/A2 as coordinate text files '<prefix>_A{k}.txt' (row col re im)."""
        paths = []
        for k, M in enumerate((self.A0, self.A1, self.A2)):
            C = sp.coo_matrix(M)
            path = f"{prefix}_A{k}.txt"
            with open(path, "w") as fh:
                for r, c, v in zip(C.row, C.col, C.data):
                    fh.write(f"{r} {c} {np.real(v):.17g} {np.imag(v):.17g}\n")
            paths.append(path)
        return paths


# ---------------------------------------------------------------------------
# volume blocks


def _vector_ops(space: P2Space):
    M, K = space.mass, space.stiffness
    P = [[space.grad_pair(a, b) for b in range(2)] for a in range(2)]
    C = [space.value_grad(a) for a in range(2)]
    B = [space.p1_div(a) for a in range(2)]
    return M, K, P, C, B, space.p1_p2_mass


def _pressure_blocks(space, n_vel_dofs, restrict=None):
    """Momentum/divergence couplings for A0 and A1 in unrotated Cartesian layout."""
    _, _, _, _, B, N = _vector_ops(space)
    n = space.n_dofs
    nv = space.n_vertices
    Z = sp.csr_matrix((nv, n))
    Bfull = sp.hstack([B[0], B[1], Z], format="csr")  # div row, A0
    Nfull = sp.hstack([Z, Z, N], format="csr")  # lam v3, A1
    if restrict is not None:
        Bfull = Bfull[:, restrict]
        Nfull = Nfull[:, restrict]
    return Bfull, Nfull


def _assemble(vel0, vel1, vel2, Bdiv, Nlam, n_p):
    """Stack velocity blocks with the pressure couplings (physical sign)."""
    Zpp = sp.csr_matrix((n_p, n_p))
    A0 = sp.bmat([[vel0, -Bdiv.T], [Bdiv, Zpp]], format="csc")
    A1 = sp.bmat([[vel1, Nlam.T], [Nlam, Zpp]], format="csc")
    Z = sp.csr_matrix(Bdiv.T.shape)
    A2 = sp.bmat([[vel2, Z], [Z.T, Zpp]], format="csc")
    return A0, A1, A2


def assemble_rigid_pencil(mesh, nu: float, omega: float) -> PencilContext:
    """Pencil S(lam) with mu = i omega - nu lam^2 and no-slip walls."""
    if not nu > 0:
        raise DomainError("nu must be positive")
    space = space_for(mesh)
    M, K, _, _, _, _ = _vector_ops(space)
    n, nv = space.n_dofs, space.n_vertices
    inner = space.interior_dofs
    idx = np.concatenate([inner, n + inner, 2 * n + inner])
    base0 = (1j * omega) * M + nu * K
    blk0 = sp.block_diag([base0] * 3, format="csr")[idx][:, idx]
    blk1 = sp.csr_matrix(blk0.shape, dtype=complex)
    blk2 = sp.block_diag([-nu * M] * 3, format="csr")[idx][:, idx]
    Bdiv, Nlam = _pressure_blocks(space, n, restrict=idx)
    A0, A1, A2 = _assemble(blk0, blk1, blk2, Bdiv, Nlam, nv)
    Gv = sp.block_diag([K + M] * 3, format="csr")[idx][:, idx]
    G = sp.block_diag([Gv, space.p1_mass], format="csc")
    layout = {"n_vel": idx.size, "n_p": nv, "vel_index": idx, "n_dofs": n}
    return PencilContext("rigid", float(omega), float(nu), space, A0, A1, A2, G, layout)


def assemble_elastic_pencil(mesh, nu: float, omega: float, material: WallMaterial,
                            wall_coupling: str = "direct") -> PencilContext:
    """Pencil Theta(lam) for the coupled fluid-wall modal problem.

    ``wall_coupling='direct'`` uses the wall term  (i / omega) (-omega^2 int rho u.u_hat
    + a(u, u_hat; lam) + int k u1 u1_hat).  ``'sigma_scaled'`` uses the grouping
    obtained by integrating the fluid stress by parts against the wall
    balance:  -(i / omega) / sigma times the same bracket.
    """
    if omega == 0:
        raise UnsupportedParameterError(
            "omega = 0 degenerates the kinematic constraint; use wall_model.static_wall_solve")
    if wall_coupling not in WALL_COUPLING_MODES:
        raise DomainError(f"wall_coupling must be one of {WALL_COUPLING_MODES}")
    if not nu > 0:
        raise DomainError("nu must be positive")
    material.validate()
    space = space_for(mesh)
    M, K, P, C, _, _ = _vector_ops(space)
    n, nv = space.n_dofs, space.n_vertices

    # 2 nu sum eps_ij(v; lam) conj(eps_ij(v_hat; -conj(lam)))  +  i omega int v.v_hat
    iwM = (1j * omega) * M
    v0 = sp.bmat([
        [iwM + nu * (2 * P[0][0] + P[1][1]), nu * P[1][0], None],
        [nu * P[0][1], iwM + nu * (2 * P[1][1] + P[0][0]), None],
        [None, None, iwM + nu * K],
    ], format="csr")
    v1 = sp.bmat([
        [None, None, -nu * C[0]],
        [None, None, -nu * C[1]],
        [nu * C[0].T, nu * C[1].T, None],
    ], format="csr")
    v2 = sp.block_diag([-nu * M, -nu * M, -2 * nu * M], format="csr")

    T = rotation_matrix(space, components=3)
    rot = lambda A: (T.T @ A @ T).tocsr()  # noqa: E731
    v0, v1, v2 = rot(v0), rot(v1), rot(v2)

    # wall block in boundary velocity variables w = i omega u
    if wall_coupling == "sigma_scaled":
        wall_mat = _divide_by_sigma(material)
        c_wall = -1j / omega
    else:
        wall_mat = material
        c_wall = 1j / omega
    W = assemble_wall_form(space, wall_mat)
    nb = space.n_bdofs
    bd = space.boundary_dofs
    Psel = sp.csr_matrix((np.ones(3 * nb),
                          (np.concatenate([c * n + bd for c in range(3)]), np.arange(3 * nb))),
                         shape=(3 * n, 3 * nb))
    lift = lambda X: (Psel @ X @ Psel.T).tocsr()  # noqa: E731
    wall0 = c_wall * (-omega**2 * W["M_rho"] + W["W0"] + W["K_k"])
    v0 = v0 + lift(wall0)
    v1 = v1 + lift(c_wall * W["W1"])
    v2 = v2 + lift(c_wall * W["W2"])

    Bdiv, Nlam = _pressure_blocks(space, n)
    Bdiv = (Bdiv @ T).tocsr()
    Nlam = (Nlam @ T).tocsr()
    A0, A1, A2 = _assemble(v0, v1, v2, Bdiv, Nlam, nv)

    Gv = rot(sp.block_diag([K + M] * 3, format="csr"))
    Ks = space.boundary_form(1.0, 1, 1)
    Gw = sp.block_diag([sp.csr_matrix((nb, nb)), Ks, Ks], format="csr") / omega**2
    Gv = Gv + lift(Gw)
    G = sp.block_diag([Gv, space.p1_mass], format="csc")
    layout = {"n_vel": 3 * n, "n_p": nv, "n_dofs": n, "boundary_dofs": bd, "n_bdofs": nb}
    return PencilContext("elastic", float(omega), float(nu), space, A0, A1, A2, G, layout,
                         material, wall_coupling,
                         {"T": T, "P_wall": Psel, "wall": W, "c_wall": c_wall,
                          "wall_material": wall_mat})


def _divide_by_sigma(material: WallMaterial) -> WallMaterial:
    h = np.asarray(material.h, dtype=float)
    sig = material.rho_b / h
    Q = material.Q / (sig[..., None, None] if sig.ndim else sig)
    return WallMaterial(Q, np.asarray(material.rho) / sig, np.asarray(material.k) / sig,
                        material.h, material.rho_b, material.table_s, material.period)


# ---------------------------------------------------------------------------
# solutions


@dataclass(frozen=True)
class ModalCoupledSolution:
    v: np.ndarray  # (3, n_dofs) Cartesian components
    p: np.ndarray
    u: np.ndarray | None  # (3, 2B) wall displacement (n, s, z) at trace dofs, elastic only
    omega: float
    lam: complex
    residuals: dict
    x: np.ndarray = field(repr=False, default=None)


def _cartesian_velocity(ctx: PencilContext, xv):
    n = ctx.layout["n_dofs"]
    if ctx.kind == "rigid":
        full = np.zeros(3 * n, dtype=complex)
        full[ctx.layout["vel_index"]] = xv
    else:
        full = ctx.extras["T"] @ xv
    return full.reshape(3, n)


def _rotated_velocity(ctx: PencilContext, v):
    """Map Cartesian (3, n) velocity into the unknown layout of the pencil."""
    v = np.asarray(v).reshape(-1)
    if ctx.kind == "rigid":
        return v[ctx.layout["vel_index"]]
    return ctx.extras["T"].T @ v


def _wall_of(ctx: PencilContext, xv):
    if ctx.kind != "elastic":
        return None
    w = ctx.extras["P_wall"].T @ xv
    nb = ctx.layout["n_bdofs"]
    return (w / (1j * ctx.omega)).reshape(3, nb)


def build_rhs(ctx: PencilContext, f=None, g=None, h=None) -> np.ndarray:
    """Load vector for body force f (3 comps), wall load g (n, s, z) and divergence data h.

    f components and h may be callables of (x, y), constants or None; g
    components are callables of s, arrays at boundary quadrature points or None.
    """
    space = ctx.space
    n = space.n_dofs
    bf = np.zeros(3 * n, dtype=complex)
    if f is not None:
        for c in range(3):
            if f[c] is not None:
                bf[c * n:(c + 1) * n] = space.load(f[c])
    bv = _rotated_velocity(ctx, bf)
    if g is not None:
        if ctx.kind != "elastic":
            raise DomainError("wall loads g require the elastic pencil")
        nb = space.n_bdofs
        gw = np.zeros(3 * nb, dtype=complex)
        sig = ctx.material.at(space.bq_s).sigma
        for c in range(3):
            if g[c] is not None:
                gq = g[c](space.bq_s) if callable(g[c]) else g[c]
                if ctx.wall_coupling == "sigma_scaled":
                    gq = np.asarray(gq) / sig
                    fac = 1.0
                else:
                    fac = 1j / ctx.omega  # int g . conj(u_hat) with u_hat = w_hat / (i omega)
                gw[c * nb:(c + 1) * nb] = fac * space.boundary_load(gq)
        bv = bv + ctx.extras["P_wall"] @ gw
    bp = np.zeros(ctx.layout["n_p"], dtype=complex)
    if h is not None:
        bp = space.p1_load(h).astype(complex)
    return np.concatenate([bv, bp])


def _factor(A, lam):
    try:
        return spla.splu(A)
    except RuntimeError:
        raise NearEigenvalueError(f"pencil is singular at lam = {lam}", lam) from None


def solve_modal_coupled(ctx: PencilContext, lam: complex, f=None, g=None, h=None,
                        use_lift: bool = True, load=None) -> ModalCoupledSolution:
    """Solve A(lam) x = b for the loads (f, g, h), or for an assembled ``load`` vector.

    Nonzero divergence data h is first removed with a discrete lifting, and the
    remaining problem is solved with h = 0.
    """
    A = ctx.A(lam)
    if load is not None:
        if f is not None or g is not None or h is not None:
            raise DomainError("pass either an assembled load or (f, g, h), not both")
        b = np.asarray(load, dtype=complex)
    else:
        b = build_rhs(ctx, f, g, h)
    nvel = ctx.layout["n_vel"]
    x_lift = np.zeros_like(b)
    if h is not None and use_lift:
        variant = "dirichlet" if (lam != 0 or ctx.kind == "rigid") else "slip"
        L = divergence_lift(ctx.space, h, lam, variant=variant)
        x_lift[:nvel] = _rotated_velocity(ctx, np.concatenate([L.v1, L.v2, L.v3]))
        b_red = b - A @ x_lift  # divergence rows are now (discretely) homogeneous
    else:
        b_red = b
    lu = _factor(A, lam)
    y = lu.solve(b_red)
    for _ in range(4):
        r = b_red - A @ y
        if np.linalg.norm(r) <= 1e-13 * max(np.linalg.norm(b_red), 1e-300):
            break
        y = y + lu.solve(r)
    x = x_lift + y
    res = np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), np.linalg.norm(A @ x), 1e-300)
    if not np.isfinite(res) or res > 1e-6:
        raise NearEigenvalueError(f"solve at lam = {lam} lost accuracy (residual {res:.2e})", lam)
    return _package(ctx, lam, x, b, res)


def _package(ctx, lam, x, b, res):
    xv, p = ctx.split(x)
    v = _cartesian_velocity(ctx, xv)
    u = _wall_of(ctx, xv)
    nvel = ctx.layout["n_vel"]
    A = ctx.A(lam)
    div = A[nvel:, :nvel] @ xv - b[nvel:]
    scale = max(np.linalg.norm(b[nvel:]), np.linalg.norm(xv), 1e-300)
    residuals = {"weak_form": float(res), "divergence": float(np.linalg.norm(div) / scale)}
    if u is not None:
        residuals["kinematic"] = kinematic_gap(ctx, v, u)
    return ModalCoupledSolution(v, p, u, ctx.omega, complex(lam), residuals, x)


def kinematic_gap(ctx: PencilContext, v, u) -> float:
    """max |v - i omega u| on the wall, with u mapped to Cartesian components."""
    sp_ = ctx.space
    fr = sp_.boundary_dof_frame
    bd = sp_.boundary_dofs
    w = 1j * ctx.omega * u
    vx = w[0] * fr.normal[0] + w[1] * fr.tangent[0]
    vy = w[0] * fr.normal[1] + w[1] * fr.tangent[1]
    gap = np.stack([v[0, bd] - vx, v[1, bd] - vy, v[2, bd] - w[2]])
    scale = max(np.max(np.abs(v)), 1e-300)
    return float(np.max(np.abs(gap)) / scale)


def state_vector(ctx: PencilContext, v, p) -> np.ndarray:
    """Pencil unknown vector from a Cartesian velocity (3, n) and pressure (n_p).

    Rigid-wall states must vanish on the wall; anything else is rejected.
    """
    if ctx.kind == "rigid":
        vb = np.asarray(v).reshape(3, -1)[:, ctx.space.boundary_dofs]
        if np.any(vb != 0):
            raise DomainError("rigid-wall velocity must vanish on the wall (no-slip)")
    return np.concatenate([_rotated_velocity(ctx, v), np.asarray(p, dtype=complex)])


def recover_pressure(ctx: PencilContext, lam, sol: ModalCoupledSolution, b) -> np.ndarray:
    """Pressure from the momentum rows alone, given the velocity of ``sol``.

    Elastic walls: rows tested with v_hat_s = 0 on the wall and v_hat_3 = 0.
    These test functions span every pressure functional (a discrete slip
    lifting exists for any pressure), so the restricted rows determine p.
    Rigid walls: all momentum rows, which determine p for lam != 0.
    """
    n = ctx.layout["n_dofs"]
    nvel = ctx.layout["n_vel"]
    A = ctx.A(lam).tocsr()
    rows = np.ones(nvel, dtype=bool)
    if ctx.kind == "elastic":
        rows[n + ctx.layout["boundary_dofs"]] = False
        rows[2 * n:3 * n] = False
    elif lam == 0:
        raise DomainError("rigid pressure is only determined up to a constant at lam = 0")
    # rigid walls: all momentum rows; the axial row fixes the constant through lam p
    rows = np.nonzero(rows)[0]
    xv, _ = ctx.split(sol.x)
    rhs = b[rows] - A[rows][:, :nvel] @ xv
    Ap = A[rows][:, nvel:]
    # normal equations with the sparse Gram matrix
    Gm = (Ap.conj().T @ Ap).tocsc()
    return sparse_solve(Gm, Ap.conj().T @ rhs)


# ---------------------------------------------------------------------------
# probes


def coercivity_probe(ctx: PencilContext, xi: float, trials: int = 100, seed: int = 0x5EED,
                     q_values=(1.0, 4.0, 16.0)) -> dict:
    """Measured coercivity ratio of Re A(v, 0, u; v, u; i xi) and Korn-trace constants.

    The coercivity functional is  E(v, v) + xi^2 ||v3||^2 + ||i xi v' + grad v3||^2.
    """
    if ctx.kind != "elastic":
        raise DomainError("coercivity probe is defined for the elastic pencil")
    if trials < 100:
        raise DomainError("at least 100 trials are required")
    sp_ = ctx.space
    n = sp_.n_dofs
    rng = np.random.default_rng(seed)
    A = ctx.A(1j * xi)
    nvel = ctx.layout["n_vel"]
    Avv = A[:nvel, :nvel]
    M, K = sp_.mass, sp_.stiffness
    P = [[sp_.grad_pair(a, b) for b in range(2)] for a in range(2)]
    C = [sp_.value_grad(a) for a in range(2)]
    Emat = sp.bmat([[P[0][0] + 0.5 * P[1][1], 0.5 * P[1][0]],
                    [0.5 * P[0][1], P[1][1] + 0.5 * P[0][0]]], format="csr")
    T = ctx.extras["T"]
    ratios = []
    for _ in range(trials):
        v = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
        x = T.T @ v.reshape(-1)
        num = np.real(np.vdot(x, Avv @ x))
        v2 = v[:2].reshape(-1)
        E = np.real(np.vdot(v2, Emat @ v2))
        v3 = v[2]
        t3 = xi**2 * np.real(np.vdot(v3, M @ v3))
        # || i xi v_a + d_a v3 ||^2
        mix = 0.0
        for a in range(2):
            va = v[a]
            mix += (xi**2 * np.real(np.vdot(va, M @ va)) + np.real(np.vdot(v3, P[a][a] @ v3))
                    + 2 * np.real(np.vdot(v3, C[a].T @ (1j * xi * va))))
        ratios.append(num / (E + t3 + mix))
    korn = korn_trace_constants(sp_, q_values)
    return {"c_measured": float(np.min(ratios)), "korn_trace_constant": korn,
            "trials": trials, "xi": xi}


def korn_trace_constants(space: P2Space, q_values=(1.0, 4.0, 16.0)) -> dict:
    """Discrete sup of  q int_gamma |v|^2 / (q^2 ||v||^2 + E(v, v))  over v' = (v1, v2).

    The largest generalized eigenvalue is found with ARPACK on
    (q^2 M + E)^{-1} q B_gamma; the denominator is SPD for q > 0.
    """
    M = space.mass
    P = [[space.grad_pair(a, b) for b in range(2)] for a in range(2)]
    E = sp.bmat([[P[0][0] + 0.5 * P[1][1], 0.5 * P[1][0]],
                 [0.5 * P[0][1], P[1][1] + 0.5 * P[0][0]]], format="csc")
    n = space.n_dofs
    bd = space.boundary_dofs
    Sel = sp.csr_matrix((np.ones(bd.size), (bd, np.arange(bd.size))), shape=(n, bd.size))
    Bg = Sel @ space.boundary_mass @ Sel.T
    Bg2 = sp.block_diag([Bg, Bg], format="csr")
    M2 = sp.block_diag([M, M], format="csc")
    out = {}
    for q in q_values:
        lu = spla.splu((q * q * M2 + E).tocsc())
        op = spla.LinearOperator(M2.shape, matvec=lambda x, q=q, lu=lu: lu.solve(q * (Bg2 @ x)),
                                 dtype=float)
        w = spla.eigs(op, k=1, which="LR", return_eigenvectors=False,
                      v0=np.ones(M2.shape[0]), tol=1e-10)
        out[float(q)] = float(w[0].real)
    return out


def inf_sup_constant(space: P2Space, wall: str = "noslip") -> float:
    """Discrete inf-sup constant of the P2/P1 pair in H1 x L2.

    ``wall='noslip'`` uses H1_0 velocities and mean-free pressures,
    ``wall='free'`` uses unconstrained velocities and all pressures.
    """
    import scipy.linalg as sla

    n = space.n_dofs
    B = sp.hstack([space.p1_div(0), space.p1_div(1)], format="csr")
    Gv = sp.block_diag([space.stiffness + space.mass] * 2, format="csc")
    Mp = space.p1_mass.toarray()
    if wall == "noslip":
        inner = space.interior_dofs
        idx = np.concatenate([inner, n + inner])
        B = B[:, idx]
        Gv = Gv[idx][:, idx].tocsc()
    lu = spla.splu(Gv)
    X = lu.solve(B.T.toarray())
    S = B @ X
    S = 0.5 * (S + S.T)
    w = sla.eigh(S, Mp, eigvals_only=True)
    if wall == "noslip":
        w = w[1:]  # constant pressure is in the kernel
    return float(np.sqrt(max(w[0], 0.0)))
