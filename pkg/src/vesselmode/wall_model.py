"""Dimension-reduced elastic wall: material, strain operators, traction, and
the explicit steady (omega = 0) wall solutions.

Wall vectors are ordered (n, s, z): u1 normal, u2 tangential, u3 axial.
Strains use the scaled vector  D u = (eps_ss, eps_zz, sqrt(2) eps_sz)  with

    D(kappa, d_s, lam) u = lam D0 u + D1(d_s) u,
    D0 u = (0, u3, u2/sqrt(2)),   D1 u = (kappa u1 + d_s u2, 0, d_s u3/sqrt(2)).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import (
    CompatibilityError,
    DomainError,
    InterfaceError,
    MaterialError,
)
from .geometry import BoundaryCurve, fourier_derivative

SQRT2 = np.sqrt(2.0)
_Q_KEYS = ("Q11", "Q12", "Q13", "Q22", "Q23", "Q33")


# ---------------------------------------------------------------------------
# material


@dataclass(frozen=True)
class MaterialSample:
    Q: np.ndarray  # (m, 3, 3)
    rho: np.ndarray
    k: np.ndarray
    h: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class WallMaterial:
    """Wall material fields along the boundary.

    Either constant (``table is None``) or a periodic table sampled at
    increasing arclength values, linearly interpolated.
    """

    Q: np.ndarray  # (3, 3) for constant material, (m, 3, 3) for a table
    rho: np.ndarray | float = 1.0
    k: np.ndarray | float = 1.0
    h: np.ndarray | float = 1.0
    rho_b: float = 1.0
    table_s: np.ndarray | None = None
    period: float | None = None

    @classmethod
    def constant(cls, Q=None, rho=1.0, k=1.0, h=1.0, rho_b=1.0) -> "WallMaterial":
        Q = np.eye(3) if Q is None else np.asarray(Q, dtype=float)
        m = cls(Q=Q, rho=float(rho), k=float(k), h=float(h), rho_b=float(rho_b))
        m.validate()
        return m

    @classmethod
    def from_table(cls, rows, period: float, rho_b: float = 1.0) -> "WallMaterial":
        """Rows are (s, Q11, Q12, Q13, Q22, Q23, Q33, rho, k, h), sorted in s."""
        a = np.asarray(rows, dtype=float)
        if a.ndim != 2 or a.shape[1] != 10:
            raise MaterialError("material table needs 10 columns: s, Q11..Q33, rho, k, h")
        if np.any(np.diff(a[:, 0]) <= 0) or a[0, 0] < 0 or a[-1, 0] >= period:
            raise MaterialError("material table must be strictly increasing in s within [0, |gamma|)")
        Q = np.empty((len(a), 3, 3))
        for (i, j), col in zip([(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)], range(1, 7)):
            Q[:, i, j] = Q[:, j, i] = a[:, col]
        m = cls(Q=Q, rho=a[:, 7], k=a[:, 8], h=a[:, 9], rho_b=float(rho_b),
                table_s=a[:, 0], period=float(period))
        m.validate()
        return m

    @classmethod
    def read_csv(cls, path, period: float, rho_b: float = 1.0) -> "WallMaterial":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        if rows and not _is_number(rows[0][0]):
            rows = rows[1:]
        return cls.from_table([[float(x) for x in r] for r in rows], period, rho_b)

    def at(self, s) -> MaterialSample:
        s = np.asarray(s, dtype=float)
        shape = s.shape
        s = s.ravel()
        if self.table_s is None:
            Q = np.broadcast_to(self.Q, (s.size, 3, 3))
            rho = np.full(s.size, float(self.rho))
            k = np.full(s.size, float(self.k))
            h = np.full(s.size, float(self.h))
        else:
            P = self.period
            xs = np.concatenate([self.table_s - P, self.table_s, self.table_s + P])

            def interp(v):
                v = np.asarray(v)
                return np.interp(np.mod(s, P), xs, np.concatenate([v, v, v]))

            Q = np.empty((s.size, 3, 3))
            for i in range(3):
                for j in range(3):
                    Q[:, i, j] = interp(self.Q[:, i, j])
            rho, k, h = interp(self.rho), interp(self.k), interp(self.h)
        sigma = self.rho_b / h
        return MaterialSample(Q.reshape(shape + (3, 3)), rho.reshape(shape), k.reshape(shape),
                              h.reshape(shape), sigma.reshape(shape))

    def nodal_arrays(self):
        Q = self.Q if self.Q.ndim == 3 else self.Q[None]
        return Q, np.atleast_1d(self.rho), np.atleast_1d(self.k), np.atleast_1d(self.h)

    def validate(self) -> dict:
        """Check symmetry, positivity of Q, rho, k, h; return measured bounds."""
        Q, rho, k, h = self.nodal_arrays()
        asym = float(np.max(np.abs(Q - np.swapaxes(Q, 1, 2))))
        if asym >= 1e-12:
            raise MaterialError(f"Q is not symmetric (max asymmetry {asym:.3g})")
        q0 = float(np.min(np.linalg.eigvalsh(Q)))
        if not q0 > 0:
            raise MaterialError(f"Q is not positive definite (q0 = {q0:.3g})")
        for name, v in (("rho", rho), ("k", k), ("h", h)):
            if not np.all(v > 0):
                raise MaterialError(f"{name} must be strictly positive")
        if not self.rho_b > 0:
            raise MaterialError("fluid density rho_b must be positive")
        return {"q0": q0, "rho0": float(rho.min()), "k0": float(k.min())}

    def scaled(self, factor: float, include_rho: bool = True) -> "WallMaterial":
        """Material with Q, k (and rho unless ``include_rho`` is False) multiplied by ``factor``."""
        rho = np.asarray(self.rho) * (factor if include_rho else 1.0)
        return WallMaterial(self.Q * factor, rho if rho.ndim else float(rho),
                            np.asarray(self.k) * factor, self.h, self.rho_b,
                            self.table_s, self.period)

    def has_zero_q13_q23(self, tol: float = 1e-14) -> bool:
        Q = self.nodal_arrays()[0]
        return bool(np.all(np.abs(Q[:, 0, 2]) <= tol) and np.all(np.abs(Q[:, 1, 2]) <= tol))


def _is_number(x):
    try:
        float(x)
        return True
    except ValueError:
        return False


# ---------------------------------------------------------------------------
# operators and strains


@dataclass(frozen=True)
class WallOperators:
    """D0 and the two parts of D1(d_s) = kappa * D1_kappa + D1_ds * d_s."""

    D0: np.ndarray
    D1_kappa: np.ndarray
    D1_ds: np.ndarray

    def apply(self, u, du_ds, kappa, lam=0.0):
        """D(kappa, d_s, lam) u for samples u, du_ds of shape (3, m)."""
        u = np.asarray(u)
        return (lam * (self.D0 @ u) + np.asarray(kappa) * (self.D1_kappa @ u)
                + self.D1_ds @ np.asarray(du_ds))


def wall_operator_matrices() -> WallOperators:
    r = 1 / SQRT2
    D0 = np.array([[0, 0, 0], [0, 0, 1], [0, r, 0]], dtype=float)
    D1k = np.array([[1, 0, 0], [0, 0, 0], [0, 0, 0]], dtype=float)
    D1s = np.array([[0, 1, 0], [0, 0, 0], [0, 0, r]], dtype=float)
    for a in (D0, D1k, D1s):
        a.setflags(write=False)
    return WallOperators(D0, D1k, D1s)


@dataclass(frozen=True)
class StrainTriple:
    ss: np.ndarray
    zz: np.ndarray
    sz: np.ndarray


@dataclass(frozen=True)
class WallDisplacementField:
    """u(s, z) = sum_j z^j coeffs[j] on uniform arclength nodes.

    ``coeffs`` has shape (degree+1, 3, n); components ordered (n, s, z).
    """

    s: np.ndarray
    length: float
    coeffs: np.ndarray

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    def at_z(self, z: float) -> np.ndarray:
        return sum(c * z**j for j, c in enumerate(self.coeffs))

    def derivative_s(self, j: int = 0) -> np.ndarray:
        return fourier_derivative(self.coeffs[j], self.length)


def strain_of(u, kappa, lam: complex = 0.0, length: float | None = None) -> StrainTriple:
    """Modal strains of a periodic wall displacement.

    ``u`` is either a (3, n) array of samples at uniform arclength nodes (with
    ``length`` given) or a WallDisplacementField (z-independent part used), or
    a callable u(s) -> (3, m) together with ``length``.
    """
    if isinstance(u, WallDisplacementField):
        length, samples = u.length, u.coeffs[0]
    elif callable(u):
        if length is None:
            raise DomainError("length is required for a callable displacement")
        n = np.size(kappa)
        s = length * np.arange(n) / n
        samples = np.asarray(u(s))
        end = np.asarray(u(np.array([0.0, length])))
        scale = max(np.max(np.abs(samples)), 1e-300)
        if np.max(np.abs(end[:, 1] - end[:, 0])) > 1e-8 * scale:
            raise DomainError("wall displacement is not periodic in s")
    else:
        samples = np.asarray(u)
        if length is None:
            raise DomainError("length is required for sampled displacements")
    du = fourier_derivative(samples, length)
    kappa = np.asarray(kappa)
    return StrainTriple(kappa * samples[0] + du[1], lam * samples[2], 0.5 * (lam * samples[1] + du[2]))


# ---------------------------------------------------------------------------
# traction


@dataclass(frozen=True)
class TraceData:
    """Boundary data of a fluid state needed for the traction."""

    v_n: np.ndarray | None = None
    v_s: np.ndarray | None = None
    v_z: np.ndarray | None = None
    dvn_dn: np.ndarray | None = None
    dvs_dn: np.ndarray | None = None
    dvz_dn: np.ndarray | None = None
    dvn_ds: np.ndarray | None = None
    p: np.ndarray | None = None


@dataclass(frozen=True)
class TractionTriple:
    n: np.ndarray
    s: np.ndarray
    z: np.ndarray

    def as_array(self):
        """Stacked in wall order (n, s, z)."""
        return np.stack(np.broadcast_arrays(self.n, self.s, self.z))


def traction_of(data: TraceData, nu: float, kappa, lam=None) -> TractionTriple:
    """Hydrodynamic force on the wall.

    Phi_n = -p + 2 nu dv_n/dn, Phi_s = nu (dv_n/ds + dv_s/dn - kappa v_s),
    Phi_z = nu (lam v_n + dv_z/dn).  With ``lam=None`` the z-derivative of
    v_n is taken as zero (steady, z-independent normal velocity).
    """
    need = ("p", "dvn_dn", "dvn_ds", "dvs_dn", "v_s", "dvz_dn")
    missing = [k for k in need if getattr(data, k) is None]
    if lam is not None and data.v_n is None:
        missing.append("v_n")
    if missing:
        raise InterfaceError("missing trace data: " + ", ".join(missing))
    kappa = np.asarray(kappa)
    phi_n = -np.asarray(data.p) + 2 * nu * np.asarray(data.dvn_dn)
    phi_s = nu * (np.asarray(data.dvn_ds) + np.asarray(data.dvs_dn) - kappa * np.asarray(data.v_s))
    vn_z = 0.0 if lam is None else lam * np.asarray(data.v_n)
    phi_z = nu * (vn_z + np.asarray(data.dvz_dn))
    return TractionTriple(phi_n, phi_s, phi_z)


def poiseuille_traction(p0, p1, dnv, nu, z=0.0) -> TractionTriple:
    """Traction of v = (0, 0, p0 v*), p = p0 z + p1 on the wall."""
    dnv = np.asarray(dnv, dtype=float)
    zero = np.zeros_like(dnv)
    return traction_of(TraceData(v_n=zero, v_s=zero, v_z=zero, dvn_dn=zero, dvs_dn=zero,
                                 dvz_dn=p0 * dnv, dvn_ds=zero, p=p0 * z + p1 + zero),
                       nu, zero)


# ---------------------------------------------------------------------------
# finite element wall form on the boundary trace space


def assemble_wall_form(space, material: WallMaterial):
    """Coefficients (W0, W1, W2) with a(u, u_hat; lam) = u_hat^H (W0 + lam W1 + lam^2 W2) u.

    Unknowns are stacked by component over the 2B boundary trace dofs of a
    P2Space: [u1 (2B), u2 (2B), u3 (2B)].  Also returns the wall mass matrix
    int rho u . u_hat and the reaction matrix int k u1 u1_hat.
    """
    nb = space.n_bdofs
    fr = space.boundary_frame
    kap = space.boundary_quad_field(fr.kappa)
    mat = material.at(space.bq_s)
    B, G = space.bq_s.shape
    N = np.broadcast_to(space.bN, (B, G, 3))
    dN = space.bdN
    r = 1 / SQRT2
    # E0, E1 : (B, G, 3 strain rows, 9 local unknowns), local index c*3 + i
    E0 = np.zeros((B, G, 3, 9))
    E1 = np.zeros((B, G, 3, 9))
    E0[:, :, 0, 0:3] = kap[..., None] * N
    E0[:, :, 0, 3:6] = dN
    E0[:, :, 2, 6:9] = r * dN
    E1[:, :, 1, 6:9] = N
    E1[:, :, 2, 3:6] = r * N
    w = space.bq_w
    Q = mat.Q

    def form(Ea, Eb):
        return np.einsum("bg,bgri,bgrt,bgtj->bij", w, Ea, Q, Eb)

    glob = np.concatenate([space.bloc + c * nb for c in range(3)], axis=1)  # (B, 9)

    def scatter(loc):
        r_ = np.broadcast_to(glob[:, :, None], loc.shape).ravel()
        c_ = np.broadcast_to(glob[:, None, :], loc.shape).ravel()
        return sp.csr_matrix((loc.ravel(), (r_, c_)), shape=(3 * nb, 3 * nb))

    W0 = scatter(form(E0, E0))
    W1 = scatter(form(E0, E1) - form(E1, E0))
    W2 = scatter(-form(E1, E1))
    Mrho = space.boundary_form(mat.rho)
    Mrho = sp.block_diag([Mrho, Mrho, Mrho], format="csr")
    Kk = space.boundary_form(mat.k)
    Kk = sp.block_diag([Kk, sp.csr_matrix((nb, nb)), sp.csr_matrix((nb, nb))], format="csr")
    return {"W0": W0, "W1": W1, "W2": W2, "M_rho": Mrho, "K_k": Kk}


# ---------------------------------------------------------------------------
# steady wall problem


@dataclass(frozen=True)
class StaticWallResult:
    u: WallDisplacementField
    b1: float
    b2: float
    diagnostics: dict = field(default_factory=dict)
    alpha: float = 0.0
    beta_wall: float = 0.0
    layers: dict = field(default_factory=dict)


def _zero_mean_antiderivative(f, length):
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    c = np.fft.fft(f)
    mult = np.zeros(n, dtype=complex)
    nz = k != 0
    mult[nz] = 1.0 / (2j * np.pi * k[nz] / length)
    if n % 2 == 0:
        mult[n // 2] = 0.0
    return np.fft.ifft(c * mult).real


class _SteadyWall:
    """Spectral collocation of the z-independent wall operator

        L0 u = (kappa A + k u1, -d_s A, -d_s C / sqrt(2)),
        (A, B, C) = Q (kappa u1 + d_s u2, 0, d_s u3 / sqrt(2)),

    plus the z-coupling pieces needed for polynomial-in-z solutions.
    """

    def __init__(self, curve: BoundaryCurve, material: WallMaterial, n: int | None = None):
        self.n = curve.n_nodes if n is None else int(n)
        self.L = curve.length
        self.s = self.L * np.arange(self.n) / self.n
        self.kappa = curve.frame(self.s).kappa if n is not None else np.asarray(curve.kappa)
        m = material.at(self.s)
        self.Q, self.k, self.sigma = m.Q, m.k, m.sigma
        Qr = np.stack([np.stack([self.Q[:, 0, 0], self.Q[:, 0, 2]], -1),
                       np.stack([self.Q[:, 2, 0], self.Q[:, 2, 2]], -1)], -2)
        det = np.linalg.det(Qr)
        if np.any(det <= 0):
            raise MaterialError("[[Q11,Q13],[Q31,Q33]] is not positive definite")
        self.R = np.linalg.inv(Qr)  # (n, 2, 2)
        self.w = self.L / self.n

    def d(self, f):
        return fourier_derivative(f, self.L)

    def integral(self, f):
        return float(np.sum(f) * self.w)

    def strain(self, u, lift=None):
        """Strain vector (E1, E2, E3) = D1 u + D0 lift (lift: constant (0, alpha, beta))."""
        du = self.d(u)
        e = np.stack([self.kappa * u[0] + du[1], np.zeros(self.n), du[2] / SQRT2])
        if lift is not None:
            _, a, b = lift
            e = e + np.array([0.0, b, a / SQRT2])[:, None]
        return e

    def stress(self, e):
        return np.einsum("nij,jn->in", self.Q, e)

    def apply_L0(self, u, lift=None):
        A, _, C = self.stress(self.strain(u, lift))
        return np.stack([self.kappa * A + self.k * u[0], -self.d(A), -self.d(C) / SQRT2])

    def apply_D0T_stress(self, u, lift=None):
        """D0^T Q (D1 u + D0 lift) = (0, C/sqrt2, B)."""
        _, B, C = self.stress(self.strain(u, lift))
        return np.stack([np.zeros(self.n), C / SQRT2, B])

    def apply_D1mT_QD0(self, u):
        """D1(-d_s)^T Q D0 u."""
        X = self.stress(np.stack([np.zeros(self.n), u[2], u[1] / SQRT2]))
        return np.stack([self.kappa * X[0], -self.d(X[0]), -self.d(X[2]) / SQRT2])

    def solve(self, r, tol=1e-9):
        """Solve L0 u = r with zero-mean u2, u3; return (u, A_const, C_const)."""
        scale = max(np.max(np.abs(r)), 1.0)
        for i in (1, 2):
            gap = abs(self.integral(r[i]))
            if gap > tol * scale * self.L:
                raise CompatibilityError(f"load row {i + 1} does not integrate to zero (gap {gap:.3g})")
        A0 = -_zero_mean_antiderivative(r[1], self.L)
        C0 = -SQRT2 * _zero_mean_antiderivative(r[2], self.L)

        def pieces(c1, c2):
            A = A0 + c1
            C = C0 + c2
            u1 = (r[0] - self.kappa * A) / self.k
            E = np.einsum("nij,jn->in", self.R, np.stack([A, C]))
            return u1, E

        # compatibility integrals are affine in (c1, c2)
        def compat(c1, c2):
            u1, E = pieces(c1, c2)
            return np.array([self.integral(E[0] - self.kappa * u1), self.integral(E[1])])

        f0 = compat(0.0, 0.0)
        J = np.stack([compat(1.0, 0.0) - f0, compat(0.0, 1.0) - f0], axis=1)
        c = np.linalg.solve(J, -f0)
        u1, E = pieces(*c)
        u2 = _zero_mean_antiderivative(E[0] - self.kappa * u1, self.L)
        u3 = _zero_mean_antiderivative(SQRT2 * E[1], self.L)
        return np.stack([u1, u2, u3]), float(c[0]), float(c[1]), J


def _sample_dnv(dnv, s, length):
    if callable(dnv):
        return np.asarray(dnv(s), dtype=float)
    a = np.asarray(dnv, dtype=float)
    if a.ndim == 0:
        return np.full(s.shape, float(a))
    if a.size == s.size:
        return a
    src = length * np.arange(a.size) / a.size
    return np.interp(s, np.concatenate([src, [length]]), np.concatenate([a, a[:1]]))


def static_wall_solve(p0: float, p1: float, dnv, material: WallMaterial, curve: BoundaryCurve,
                      nu: float = 1.0, n: int | None = None) -> StaticWallResult:
    """Steady wall displacement under the Poiseuille load.

    The load is sigma * Phi with Phi = (-(p0 z + p1), 0, p0 nu dn_v*), in wall
    order (n, s, z).  For p0 = 0 the solution is z-independent; otherwise it
    is quadratic in z,  u = z^2/2 (0, alpha, beta) + z u1 + u2.  Tangential and
    axial components are normalized to zero mean (the constant family is
    reported separately).
    """
    material.validate()
    W = _SteadyWall(curve, material, n)
    sig = W.sigma
    dn = _sample_dnv(dnv, W.s, W.L)
    zero = np.zeros(W.n)
    r0 = np.stack([-p1 * sig, zero, p0 * nu * sig * dn])
    if p0 == 0:
        u, b1, b2, J = W.solve(r0)
        res = W.apply_L0(u) - r0
        rnorm = float(np.max(np.abs(res)) / max(np.max(np.abs(r0)), 1.0))
        fld = WallDisplacementField(W.s, W.L, u[None])
        diag = {"residual": rnorm, "compatibility_matrix": J,
                "constant_family": [(0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]}
        return StaticWallResult(fld, b1, b2, diag)

    r1 = np.stack([-p0 * sig, zero, zero])
    alpha, beta, b1, b2, M4 = _linear_layer(W, r1, p0 * nu * W.integral(sig * dn))
    lift = np.array([0.0, alpha, beta])
    # z^1 layer: L0 u1 + (D1(-ds)^T Q D0 - D0^T Q D1) lift = r1, with D1 lift = 0
    u1, c1, c2, _ = W.solve(r1 - W.apply_D1mT_QD0(np.broadcast_to(lift[:, None], (3, W.n))))
    # z^0 layer: L0 u2 + L1 u1 - L2 lift = r0
    L1u1 = W.apply_D1mT_QD0(u1) - W.apply_D0T_stress(u1)
    L2lift = W.apply_D0T_stress(np.zeros((3, W.n)), lift)  # D0^T Q D0 lift
    u2, d1, d2, _ = W.solve(r0 - L1u1 + L2lift)
    coeffs = np.stack([u2, u1, 0.5 * np.broadcast_to(lift[:, None], (3, W.n))])
    fld = WallDisplacementField(W.s, W.L, coeffs)
    res = _polynomial_residual(W, coeffs, r0, r1)
    diag = {"residual": res, "layer_system": M4, "b1_z0": d1, "b2_z0": d2,
            "constant_family": [(0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]}
    return StaticWallResult(fld, c1, c2, diag, alpha=float(alpha), beta_wall=float(beta),
                            layers={"u0": lift, "u1": u1, "u2": u2})


def _linear_layer(W: _SteadyWall, r1, load_B):
    """Solve for (alpha, beta, b1, b2): z^1 compatibility, b2 = 0 and int B = -load_B.

    Every condition is affine in the unknowns, so the 4x4 matrix is built by
    probing unit vectors.
    """

    def conditions(x):
        alpha, beta, b1, b2 = x
        lift = np.array([0.0, alpha, beta])
        # z^1 layer strain with A = b1, C = b2
        A = np.full(W.n, b1)
        C = np.full(W.n, b2)
        u1n = (r1[0] - W.kappa * A) / W.k
        # (E1, E3) from Q (E1, beta, E3) = (b1, ., b2)
        rhs = np.stack([A - W.Q[:, 0, 1] * beta, C - W.Q[:, 2, 1] * beta])
        E = np.einsum("nij,jn->in", W.R, rhs)
        Bst = W.Q[:, 1, 0] * E[0] + W.Q[:, 1, 1] * beta + W.Q[:, 1, 2] * E[1]
        return np.array([
            W.integral(E[0] - W.kappa * u1n),
            W.integral(SQRT2 * E[1] - lift[1]),
            b2,
            W.integral(Bst),
        ])

    f0 = conditions(np.zeros(4))
    M = np.stack([conditions(e) - f0 for e in np.eye(4)], axis=1)
    target = np.array([0.0, 0.0, 0.0, -load_B]) - f0
    x = np.linalg.solve(M, target)
    return (*x, M)


def _polynomial_residual(W, coeffs, r0, r1):
    u2, u1, half_u0 = coeffs
    u0 = 2 * half_u0
    lift = u0[:, 0]
    zero = np.zeros((3, W.n))
    # L u for u = z^2/2 u0 + z u1 + u2, collected by power of z
    L1 = lambda v: W.apply_D1mT_QD0(v) - W.apply_D0T_stress(v)  # noqa: E731
    L2 = W.apply_D0T_stress(zero, lift)
    z2 = 0.5 * W.apply_L0(u0)
    z1 = W.apply_L0(u1) + L1(u0)
    z0 = W.apply_L0(u2) + L1(u1) - L2
    scale = max(np.max(np.abs(r0)), np.max(np.abs(r1)), 1.0)
    return float(max(np.max(np.abs(z2)), np.max(np.abs(z1 - r1)), np.max(np.abs(z0 - r0))) / scale)


def linear_layer_constants(alpha: float, beta: float, material: WallMaterial,
                           curve: BoundaryCurve) -> tuple[float, float]:
    """(b1, b2) from the z^1 compatibility system for a prescribed u0 = (0, alpha, beta)."""
    W = _SteadyWall(curve, material)
    zero = np.zeros(W.n)

    def compat(b):
        b1, b2 = b
        u1n = -W.kappa * b1 / W.k
        rhs = np.stack([b1 - W.Q[:, 0, 1] * beta, b2 - W.Q[:, 2, 1] * beta + zero])
        E = np.einsum("nij,jn->in", W.R, rhs)
        return np.array([W.integral(E[0] - W.kappa * u1n), W.integral(SQRT2 * E[1] - alpha)])

    f0 = compat((0.0, 0.0))
    J = np.stack([compat((1.0, 0.0)) - f0, compat((0.0, 1.0)) - f0], axis=1)
    b = np.linalg.solve(J, -f0)
    return float(b[0]), float(b[1])


@dataclass(frozen=True)
class HomogeneousWallReport:
    basis: list
    certificate: dict | None
    reason: str = ""


def homogeneous_wall_solutions(material: WallMaterial, curve: BoundaryCurve) -> HomogeneousWallReport:
    """Polynomial-in-z solutions of the unloaded steady wall equation.

    Constants (0, c2, c3) always solve it.  When Q13 = Q23 = 0 the quadratic
    ansatz is shown to collapse: the 4x4 layer system has only the trivial
    solution, and the reduced 2x2 system in (b1, beta) has positive
    determinant.
    """
    material.validate()
    basis = [np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])]
    if not material.has_zero_q13_q23():
        return HomogeneousWallReport(basis, None,
                                     "Q13 or Q23 nonzero: collapse certificate only available when both vanish")
    W = _SteadyWall(curve, material)
    zero = np.zeros(W.n)
    alpha, beta, b1, b2, M4 = _linear_layer(W, np.stack([zero, zero, zero]), 0.0)
    Q11, Q12, Q22 = W.Q[:, 0, 0], W.Q[:, 0, 1], W.Q[:, 1, 1]
    a11 = W.integral(1 / Q11) + W.integral(W.kappa**2 / W.k)
    a12 = -W.integral(Q12 / Q11)
    a21 = W.integral(Q12 / Q11)
    a22 = W.integral(Q22 - Q12**2 / Q11)
    M2 = np.array([[a11, a12], [a21, a22]])
    cert = {
        "alpha": float(alpha), "beta_wall": float(beta), "b1": float(b1), "b2": float(b2),
        "layer_system": M4, "layer_system_singular_values": np.linalg.svd(M4, compute_uv=False),
        "collapse_system": M2, "collapse_determinant": float(np.linalg.det(M2)),
    }
    return HomogeneousWallReport(basis, cert)
