"""Eigenvalue scans for the quadratic pencils along strips around the imaginary axis.

Singular values are measured in the natural norm of the discrete problem:
the state space carries the Gram matrix G of the pencil context and the data
space its dual, so

    sigma_min(A) = min_x ||A x||_{G^-1} / ||x||_G .

Relative values divide by  sum_k |lam|^k ||A_k||_G , which makes thresholds
comparable across meshes and frequencies.  Every strip certificate produced
here is a windowed discrete certificate: it covers the sampled xi window on
the given mesh and nothing more.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .elastic_coupling import PencilContext, solve_modal_coupled
from .errors import DomainError, NearEigenvalueError

log = logging.getLogger(__name__)

CERTIFICATE_LABEL = "windowed discrete certificate"
RESIDUAL_CERTIFICATE = 1e-6


@dataclass(frozen=True)
class StripScanConfig:
    """Sampling window  |Re lam| <= beta_max,  |Im lam| <= xi_max."""

    beta_max: float
    xi_max: float
    n_beta: int = 11
    n_xi: int = 101
    refine_tol: float = 1e-10
    threshold: float = 1e-6
    relative: bool = True
    separation_hint: float | None = None
    rigid_exclusion: float = 0.05
    threads: int = 1

    def __post_init__(self):
        if not (self.beta_max > 0 and self.xi_max > 0):
            raise DomainError("beta_max and xi_max must be positive")
        if self.n_beta < 1 or self.n_xi < 2:
            raise DomainError("grid needs n_beta >= 1 and n_xi >= 2")
        if self.threshold < 0:
            raise DomainError("threshold must be non-negative")
        if self.separation_hint is not None:
            if max(self.d_beta, self.d_xi) >= 0.5 * self.separation_hint:
                raise DomainError("grid spacing must be below half the separation hint")

    @property
    def betas(self):
        if self.n_beta == 1:
            return np.zeros(1)
        return np.linspace(-self.beta_max, self.beta_max, self.n_beta)

    @property
    def xis(self):
        return np.linspace(-self.xi_max, self.xi_max, self.n_xi)

    @property
    def d_beta(self):
        return 2 * self.beta_max / max(self.n_beta - 1, 1)

    @property
    def d_xi(self):
        return 2 * self.xi_max / (self.n_xi - 1)


# ---------------------------------------------------------------------------
# norms


def _g_factor(ctx: PencilContext):
    lu = ctx.extras.get("_G_lu")
    if lu is None:
        lu = spla.splu(ctx.G.tocsc().astype(complex))
        ctx.extras["_G_lu"] = lu
    return lu


def pencil_norms(ctx: PencilContext) -> tuple:
    """Operator norms ||A_k||_G, k = 0, 1, 2 (cached on the context)."""
    cached = ctx.extras.get("_A_gnorms")
    if cached is not None:
        return cached
    glu = _g_factor(ctx)
    out = []
    for Ak in (ctx.A0, ctx.A1, ctx.A2):
        if Ak.nnz == 0:
            out.append(0.0)
            continue
        AkH = Ak.conj().T.tocsr()

        def mv(x, Ak=Ak, AkH=AkH):
            return glu.solve(AkH @ glu.solve(Ak @ x))

        op = spla.LinearOperator(Ak.shape, matvec=mv, dtype=complex)
        w = spla.eigs(op, k=1, which="LM", return_eigenvectors=False,
                      v0=np.ones(Ak.shape[0], dtype=complex), tol=1e-8)
        out.append(float(np.sqrt(abs(w[0]))))
    ctx.extras["_A_gnorms"] = tuple(out)
    return ctx.extras["_A_gnorms"]


def pencil_scale(ctx: PencilContext, lam) -> float:
    n0, n1, n2 = pencil_norms(ctx)
    a = abs(lam)
    return n0 + a * n1 + a * a * n2


def _gnorm(ctx, x):
    return float(np.sqrt(abs(np.vdot(x, ctx.G @ x))))


def _dual_norm(ctx, r):
    return float(np.sqrt(abs(np.vdot(r, _g_factor(ctx).solve(r)))))


@dataclass
class SigmaSample:
    lam: complex
    sigma: float
    sigma_rel: float
    right: np.ndarray | None = None
    left: np.ndarray | None = None


def sigma_min(ctx: PencilContext, lam, k: int = 1, vectors: bool = False):
    """Smallest G-norm singular value(s) of A(lam).

    Runs ARPACK on  x -> A^-1 G A^-H G x , whose eigenvalues are 1/sigma^2.
    Returns a SigmaSample (k=1) or a list of the k smallest.
    """
    A = ctx.A(lam)
    G = ctx.G
    scale = pencil_scale(ctx, lam)
    try:
        lu = spla.splu(A)
    except RuntimeError:
        s = SigmaSample(complex(lam), 0.0, 0.0)
        return s if k == 1 else [s] * k

    def mv(x):
        return lu.solve(G @ lu.solve(G @ x, trans="H"))

    op = spla.LinearOperator(A.shape, matvec=mv, dtype=complex)
    rng = np.random.default_rng(0x5EED)
    v0 = rng.standard_normal(A.shape[0]) + 0j
    kk = min(k, A.shape[0] - 2)
    w, V = spla.eigs(op, k=kk, which="LM", v0=v0, tol=1e-10)
    order = np.argsort(-np.abs(w))
    out = []
    for j in order:
        wj = abs(w[j].real) if abs(w[j].real) > 0 else abs(w[j])
        sig = 1.0 / np.sqrt(wj) if np.isfinite(wj) and wj > 0 else 0.0
        if not np.isfinite(sig):
            sig = 0.0
        s = SigmaSample(complex(lam), float(sig), float(sig / scale) if scale > 0 else 0.0)
        if vectors:
            x = V[:, j]
            x = x / _gnorm(ctx, x)
            y = lu.solve(G @ x, trans="H")
            s.right = x
            s.left = y / np.linalg.norm(y)
        out.append(s)
    return out[0] if k == 1 else out


# ---------------------------------------------------------------------------
# landscape


@dataclass
class Landscape:
    betas: np.ndarray
    xis: np.ndarray
    sigma: np.ndarray  # (n_beta, n_xi), absolute G-norm values
    sigma_rel: np.ndarray
    kind: str
    omega: float
    caveat: str = ("sampled on a finite grid and a single mesh; values can only "
                   "decrease as the mesh is refined toward a true eigenvalue")

    def values(self, relative=True):
        return self.sigma_rel if relative else self.sigma

    def to_csv(self, path, relative=True):
        S = self.values(relative)
        with open(path, "w") as fh:
            fh.write("re_lambda,im_lambda,sigma_min\n")
            for i, b in enumerate(self.betas):
                for j, x in enumerate(self.xis):
                    fh.write(f"{b:.17g},{x:.17g},{S[i, j]:.17g}\n")
        return path


def sigma_min_landscape(ctx: PencilContext, cfg: StripScanConfig) -> Landscape:
    """Sample sigma_min(A(beta + i xi)) on the configured grid."""
    pencil_norms(ctx)
    _g_factor(ctx)
    betas, xis = cfg.betas, cfg.xis
    pts = [(i, j, complex(b, x)) for i, b in enumerate(betas) for j, x in enumerate(xis)]

    def task(p):
        return p[0], p[1], sigma_min(ctx, p[2])

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            results = list(ex.map(task, pts))
    else:
        results = [task(p) for p in pts]
    S = np.empty((len(betas), len(xis)))
    R = np.empty_like(S)
    for i, j, s in sorted(results, key=lambda t: (t[0], t[1])):
        S[i, j] = s.sigma
        R[i, j] = s.sigma_rel
    return Landscape(betas, xis, S, R, ctx.kind, ctx.omega)


def _local_minima(V):
    nb, nx = V.shape
    P = np.pad(V, 1, constant_values=np.inf)
    out = []
    for i in range(nb):
        for j in range(nx):
            win = P[i:i + 3, j:j + 3]
            if V[i, j] <= win.min():
                out.append((i, j))
    return out


# ---------------------------------------------------------------------------
# eigenvalues


@dataclass
class Eigenpair:
    lam: complex
    residual: float
    vector: np.ndarray = field(repr=False)
    multiplicity: int = 1
    iterations: int = 0
    status: str = "converged"


@dataclass
class SpectrumReport:
    eigenpairs: list
    landscape: Landscape | None
    beta_star: float | None
    window: dict
    caveats: list
    unresolved: list = field(default_factory=list)

    @property
    def eigenvalues(self):
        return np.array([e.lam for e in self.eigenpairs], dtype=complex)

    def to_dict(self):
        return {
            "eigenvalues": [[e.lam.real, e.lam.imag] for e in self.eigenpairs],
            "residuals": [float(e.residual) for e in self.eigenpairs],
            "multiplicities": [e.multiplicity for e in self.eigenpairs],
            "unresolved": [[z.real, z.imag] for z in self.unresolved],
            "beta_star_estimate": self.beta_star,
            "window": self.window,
            "caveats": self.caveats,
            "certificate": CERTIFICATE_LABEL,
            "new_data": True,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        return path


def eigen_residual(ctx: PencilContext, lam, w) -> float:
    """||A(lam) w||_{G^-1} / (scale * ||w||_G)."""
    r = ctx.A(lam) @ w
    return _dual_norm(ctx, r) / (pencil_scale(ctx, lam) * _gnorm(ctx, w))


def nearest_eigenvalues(ctx: PencilContext, shift, k: int = 4):
    """Eigenvalues of the pencil closest to ``shift`` with right eigenvectors.

    Shift-invert Arnoldi on the companion linearization
    [[0, I], [-A0, -A1]] - lam [[I, 0], [0, A2]]; each operator application is
    one solve with A(shift).  Works for defective eigenvalues, where the
    computed roots form a tight cluster.
    """
    sig = complex(shift)
    n = ctx.size
    lu = spla.splu(ctx.A(sig))
    A1s = (ctx.A1 + sig * ctx.A2).tocsr()
    A2 = ctx.A2.tocsr()

    def mv(z):
        a, b = z[:n], z[n:]
        x1 = -lu.solve(A2 @ b + A1s @ a)
        return np.concatenate([x1, a + sig * x1])

    op = spla.LinearOperator((2 * n, 2 * n), matvec=mv, dtype=complex)
    v0 = np.random.default_rng(0x5EED).standard_normal(2 * n) + 0j
    theta, V = spla.eigs(op, k=min(k, 2 * n - 2), which="LM", v0=v0, tol=1e-13)
    keep = np.abs(theta) > 0
    lams = sig + 1.0 / theta[keep]
    vecs = V[:n, keep]
    order = np.argsort(np.abs(lams - sig))
    return lams[order], vecs[:, order]


def refine_eigenvalue(ctx: PencilContext, lam0, tol: float = 1e-10, max_iter: int = 50,
                      cluster: float = 1e-6):
    """Refine an eigenvalue candidate by re-shifted inverse Arnoldi steps.

    The shift moves to the current nearest eigenvalue until it settles.
    Status is 'unresolved' when that does not happen within ``max_iter``
    steps or the residual certificate fails.
    """
    shift = complex(lam0)
    lam = shift
    x = None
    mult = 1
    it = 0
    settled = False
    for it in range(1, max_iter + 1):
        try:
            lams, vecs = nearest_eigenvalues(ctx, shift)
        except RuntimeError:
            # A(shift) exactly singular: the shift is itself an eigenvalue
            s = sigma_min(ctx, shift + tol, vectors=True)
            lam, x, settled = shift, s.right, True
            break
        if lams.size == 0:
            break
        x = vecs[:, 0]
        near = np.abs(lams - lams[0]) < cluster * max(1.0, abs(lams[0]))
        mult = int(near.sum())
        # the mean of a root cluster is well conditioned even for Jordan blocks
        lam = lams[near].mean()
        if abs(lam - shift) <= max(tol, 1e-3 * cluster) * max(1.0, abs(lam)):
            settled = True
            break
        shift = lam
    if x is None:
        return Eigenpair(lam, np.inf, np.zeros(ctx.size), iterations=it, status="unresolved")
    x = x / _gnorm(ctx, x)
    res = eigen_residual(ctx, lam, x)
    status = "converged" if settled and res < RESIDUAL_CERTIFICATE else "unresolved"
    return Eigenpair(complex(lam), res, x, multiplicity=mult, iterations=it, status=status)


def locate_eigenvalues_in_strip(ctx: PencilContext, cfg: StripScanConfig,
                                landscape: Landscape | None = None) -> SpectrumReport:
    """Refine every local sigma_min minimum below the threshold."""
    if landscape is None:
        landscape = sigma_min_landscape(ctx, cfg)
    V = landscape.values(cfg.relative)
    cands = [(i, j) for i, j in _local_minima(V) if V[i, j] < cfg.threshold]
    pairs, unresolved = [], []
    sep = min(cfg.d_beta if cfg.n_beta > 1 else np.inf, cfg.d_xi)
    for i, j in sorted(cands, key=lambda t: V[t]):
        lam0 = complex(landscape.betas[i], landscape.xis[j])
        ep = refine_eigenvalue(ctx, lam0, cfg.refine_tol)
        inside = (abs(ep.lam.real) <= cfg.beta_max + 0.5 * cfg.d_beta
                  and abs(ep.lam.imag) <= cfg.xi_max + 0.5 * cfg.d_xi)
        if ep.status != "converged" or not inside:
            unresolved.append(lam0)
            continue
        if any(abs(ep.lam - q.lam) < 0.5 * sep for q in pairs):
            continue
        pairs.append(ep)
    pairs.sort(key=lambda e: (e.lam.real, e.lam.imag))
    window = _window(ctx, cfg)
    caveats = [CERTIFICATE_LABEL, landscape.caveat,
               f"xi window limited to |Im lam| <= {cfg.xi_max}"]
    return SpectrumReport(pairs, landscape, None, window, caveats, unresolved)


def _window(ctx, cfg):
    return {"kind": ctx.kind, "omega": ctx.omega, "nu": ctx.nu,
            "beta_max": cfg.beta_max, "xi_max": cfg.xi_max,
            "n_beta": cfg.n_beta, "n_xi": cfg.n_xi, "threshold": cfg.threshold,
            "relative": cfg.relative, "mesh_h": float(ctx.space.mesh.h),
            "n_unknowns": ctx.size}


def estimate_beta_star(ctx: PencilContext, cfg: StripScanConfig,
                       landscape: Landscape | None = None) -> dict:
    """Largest sampled beta with min_xi sigma_min(beta' + i xi) > threshold for |beta'| <= beta.

    For the rigid pencil grid points within ``cfg.rigid_exclusion`` of 0 are
    ignored (the constant-pressure eigenvalue).
    """
    if landscape is None:
        landscape = sigma_min_landscape(ctx, cfg)
    V = landscape.values(cfg.relative).copy()
    B, X = np.meshgrid(landscape.betas, landscape.xis, indexing="ij")
    excluded = np.zeros_like(V, dtype=bool)
    if ctx.kind == "rigid":
        excluded = np.hypot(B, X) < cfg.rigid_exclusion
    V[excluded] = np.inf
    profile = V.min(axis=1)
    betas = landscape.betas
    order = np.argsort(np.abs(betas), kind="stable")
    beta_star = 0.0
    ok = True
    for idx in order:
        if not profile[idx] > cfg.threshold:
            ok = False
            break
        beta_star = float(abs(betas[idx]))
    diag = None
    if beta_star == 0.0 and not ok:
        diag = "threshold not met on the imaginary axis; no strip certified"
    elif ok:
        diag = "threshold met on the whole window; estimate limited by beta_max"
    return {
        "beta_star_estimate": beta_star,
        "evidence": {"beta": betas.tolist(), "min_sigma": profile.tolist()},
        "label": CERTIFICATE_LABEL,
        "excluded_disk": cfg.rigid_exclusion if ctx.kind == "rigid" else 0.0,
        "window_limited": ok,
        "diagnostic": diag,
        "caveat": "relative to the sampled xi window and the mesh; not a proof",
    }


def scan_strip(ctx: PencilContext, cfg: StripScanConfig) -> SpectrumReport:
    """Landscape, eigenvalue refinement and beta* in one pass."""
    land = sigma_min_landscape(ctx, cfg)
    rep = locate_eigenvalues_in_strip(ctx, cfg, land)
    rep.beta_star = estimate_beta_star(ctx, cfg, land)["beta_star_estimate"]
    return rep


# ---------------------------------------------------------------------------
# resolvent scaling


def composite_data_norm(f_norm, g1_norm, g2_norm, g3_norm, xi) -> float:
    """N(f, g; xi) = ||f|| + ||g2|| + ||g3|| + |xi|^(1/2) ||g1||."""
    return f_norm + g2_norm + g3_norm + abs(xi) ** 0.5 * g1_norm


@dataclass
class ResolventProbe:
    xi: np.ndarray
    v_l2: np.ndarray
    grad_v_l2: np.ndarray
    p_l2: np.ndarray
    wall_l2: np.ndarray  # (len(xi), 3)
    data_norm: np.ndarray
    slope_v: float
    flagged: list = field(default_factory=list)

    def scaled(self):
        """Left-hand side quantities divided by N, one row per xi (0 where N = 0)."""
        x = np.abs(self.xi)
        N = self.data_norm

        def ratio(a):
            return np.divide(a, N, out=np.zeros_like(a, dtype=float), where=N > 0)

        return {
            "xi2_v": ratio(x**2 * self.v_l2),
            "xi_grad_v": ratio(x * self.grad_v_l2),
            "p": ratio(self.p_l2),
            "xi2_u23": ratio(x**2 * np.hypot(self.wall_l2[:, 1], self.wall_l2[:, 2])),
        }

    def as_dict(self):
        d = {k: np.asarray(v).tolist() for k, v in asdict(self).items()}
        d["scaled"] = {k: v.tolist() for k, v in self.scaled().items()}
        return d


def _field_norms(space, f, g):
    """L2 norms of f (vector, over the section) and of g components (on the wall)."""
    fn = 0.0
    if f is not None:
        tot = 0.0
        for c in f:
            if c is None:
                continue
            tot += space.integrate(np.abs(space._at_quad(c)) ** 2)
        fn = float(np.sqrt(tot))
    gn = [0.0, 0.0, 0.0]
    if g is not None:
        for k, c in enumerate(g):
            if c is None:
                continue
            val = c(space.bq_s) if callable(c) else np.broadcast_to(c, space.bq_s.shape)
            gn[k] = float(np.sqrt(np.sum(space.bq_w * np.abs(val) ** 2)))
    return fn, gn


def data_norm(space, f=None, g=None, xi=0.0) -> float:
    """N(f, g; xi) from the L2 norms of f on the section and g on the wall."""
    fn, gn = _field_norms(space, f, g)
    return composite_data_norm(fn, gn[0], gn[1], gn[2], xi)


def resolvent_scaling_probe(ctx: PencilContext, xi_list, f=None, g=None,
                            min_xi: float | None = None) -> ResolventProbe:
    """Solve Theta(i xi) y = (f, g) along xi_list and record the solution norms.

    A xi whose solve hits a near-eigenvalue is flagged and gets NaN norms.
    """
    if ctx.kind != "elastic":
        raise DomainError("resolvent probe expects the elastic pencil")
    floor = 4 * (1 + abs(ctx.omega)) if min_xi is None else min_xi
    xi = np.asarray(xi_list, dtype=float)
    if np.any(np.abs(xi) < floor):
        raise DomainError(f"|xi| below the asymptotic floor {floor}")
    space = ctx.space
    M, K, Mp = space.mass, space.stiffness, space.p1_mass
    Mb = space.boundary_mass
    fn, gn = _field_norms(space, f, g)
    rows, flagged = [], []
    nan = float("nan")
    for x in xi:
        N = composite_data_norm(fn, gn[0], gn[1], gn[2], x)
        try:
            sol = solve_modal_coupled(ctx, 1j * x, f=f, g=g)
        except NearEigenvalueError:
            flagged.append(float(x))
            rows.append((nan, nan, nan, [nan] * 3, N))
            continue
        v = sol.v
        vl = np.sqrt(sum(abs(np.vdot(c, M @ c)) for c in v))
        gl = np.sqrt(sum(abs(np.vdot(c, K @ c)) for c in v))
        pl = np.sqrt(abs(np.vdot(sol.p, Mp @ sol.p)))
        wl = [np.sqrt(abs(np.vdot(c, Mb @ c))) for c in sol.u]
        rows.append((vl, gl, pl, wl, N))
    vl = np.array([r[0] for r in rows])
    ok = np.isfinite(vl) & (vl > 0)
    slope = (float(np.polyfit(np.log(np.abs(xi[ok])), np.log(vl[ok]), 1)[0])
             if ok.sum() > 1 else float("nan"))
    return ResolventProbe(xi, vl, np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
                          np.array([r[3] for r in rows]), np.array([r[4] for r in rows]), slope,
                          flagged)
