"""Cross-section geometry: arclength-parametrized boundary curves and meshes.

Curvature sign convention
-------------------------
Curvature is computed as ``kappa = z1'' z2' - z2'' z1'`` for the arclength
parametrization ``z(s)`` traversed counterclockwise.  This gives
``kappa = -1/R`` on a circle of radius ``R``, the opposite of the usual
textbook sign.  Every wall operator in the package uses this convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import Delaunay

from .errors import (
    GeometryError,
    InsufficientDataError,
    MeshError,
    RefinementError,
    RegularityError,
)

_NEWTON_TOL = 1e-12


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# analytic descriptors


class _Parametric:
    """A closed curve c(theta), theta in [0, 2 pi), with two derivatives."""

    def __init__(self, fn: Callable, name: str, params: dict):
        self._fn = fn
        self.name = name
        self.params = params

    def __call__(self, theta):
        return self._fn(np.asarray(theta, dtype=float))


def _circle(radius):
    def fn(t):
        c, s = np.cos(t), np.sin(t)
        p = radius * np.stack([c, s])
        d1 = radius * np.stack([-s, c])
        d2 = -p
        return p, d1, d2

    return fn


def _ellipse(a, b):
    def fn(t):
        c, s = np.cos(t), np.sin(t)
        p = np.stack([a * c, b * s])
        d1 = np.stack([-a * s, b * c])
        d2 = -p
        return p, d1, d2

    return fn


def _star(a0, cos_coeffs, sin_coeffs):
    ks = np.arange(1, len(cos_coeffs) + 1)
    ac = np.asarray(cos_coeffs, dtype=float)
    bs = np.asarray(sin_coeffs, dtype=float)

    def fn(t):
        kt = np.multiply.outer(ks, t)
        ck, sk = np.cos(kt), np.sin(kt)
        r = a0 + np.tensordot(ac, ck, 1) + np.tensordot(bs, sk, 1)
        r1 = np.tensordot(ac * -ks, sk, 1) + np.tensordot(bs * ks, ck, 1)
        r2 = np.tensordot(ac * -(ks**2), ck, 1) + np.tensordot(bs * -(ks**2), sk, 1)
        e = np.stack([np.cos(t), np.sin(t)])
        ep = np.stack([-np.sin(t), np.cos(t)])
        p = r * e
        d1 = r1 * e + r * ep
        d2 = r2 * e + 2 * r1 * ep - r * e
        return p, d1, d2

    return fn


def parse_descriptor(descriptor) -> _Parametric:
    """Turn a descriptor mapping into a parametric curve.

    Accepted forms: ``{"shape": "circle", "radius": R}``,
    ``{"shape": "ellipse", "a": a, "b": b}`` and
    ``{"shape": "star", "a0": r0, "cos": [...], "sin": [...]}``.
    """
    if isinstance(descriptor, _Parametric):
        return descriptor
    d = dict(descriptor)
    shape = str(d.get("shape", "")).lower()
    if shape == "circle":
        R = float(d.get("radius", 1.0))
        if R <= 0:
            raise GeometryError("circle radius must be positive")
        return _Parametric(_circle(R), "circle", {"radius": R})
    if shape == "ellipse":
        a, b = float(d["a"]), float(d["b"])
        if a <= 0 or b <= 0:
            raise GeometryError("ellipse semi-axes must be positive")
        return _Parametric(_ellipse(a, b), "ellipse", {"a": a, "b": b})
    if shape == "star":
        a0 = float(d.get("a0", 1.0))
        cos_c = [float(x) for x in d.get("cos", [])]
        sin_c = [float(x) for x in d.get("sin", [])]
        n = max(len(cos_c), len(sin_c))
        cos_c += [0.0] * (n - len(cos_c))
        sin_c += [0.0] * (n - len(sin_c))
        return _Parametric(_star(a0, cos_c, sin_c), "star",
                           {"a0": a0, "cos": cos_c, "sin": sin_c})
    raise GeometryError(f"unknown curve shape {shape!r}")


# ---------------------------------------------------------------------------
# boundary curve


class _ArclengthMap:
    """Cumulative length L(theta) as a trigonometric series, and its inverse."""

    def __init__(self, curve: _Parametric, n_samples: int):
        t = 2 * np.pi * np.arange(n_samples) / n_samples
        _, d1, _ = curve(t)
        speed = np.hypot(d1[0], d1[1])
        self.min_speed = float(speed.min())
        self.max_speed = float(speed.max())
        c = np.fft.rfft(speed) / n_samples
        keep = np.abs(c) > 1e-17 * abs(c[0])
        keep[0] = True
        last = int(np.nonzero(keep)[0].max()) + 1
        self.c0 = c[0].real
        self.ck = c[1:last]
        self.k = np.arange(1, last)
        self.length = 2 * np.pi * self.c0
        self.curve = curve

    def length_at(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.k.size == 0:
            return self.c0 * theta
        kt = np.multiply.outer(theta, self.k)
        # integral of 2 Re(c_k e^{ik t}) from 0 to theta
        s = (self.ck / (1j * self.k)) * (np.exp(1j * kt) - 1.0)
        return self.c0 * theta + 2 * s.real.sum(axis=-1)

    def speed(self, theta):
        _, d1, _ = self.curve(theta)
        return np.hypot(d1[0], d1[1])

    def theta_of(self, s):
        s = np.asarray(s, dtype=float)
        period = self.length
        turns = np.floor(s / period)
        s0 = s - turns * period
        theta = 2 * np.pi * s0 / period
        for _ in range(60):
            step = (self.length_at(theta) - s0) / self.speed(theta)
            theta = theta - step
            if np.all(np.abs(step) < _NEWTON_TOL):
                break
        else:  # pragma: no cover - analytic curves converge in a few steps
            raise RegularityError("arclength inversion did not converge")
        return theta + 2 * np.pi * turns


@dataclass(frozen=True)
class CurveFrame:
    """Point, unit tangent, outward normal and curvature at arclength values."""

    s: np.ndarray
    point: np.ndarray  # (2, m)
    tangent: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray


@dataclass(frozen=True)
class BoundaryCurve:
    """Closed boundary sampled at uniform arclength nodes.

    ``normal`` is the outward unit normal; ``tangent`` points in the
    counterclockwise direction of travel.
    """

    s: np.ndarray
    points: np.ndarray  # (2, n)
    tangent: np.ndarray
    normal: np.ndarray
    kappa: np.ndarray
    length: float
    descriptor: dict
    interpolant: dict
    _map: _ArclengthMap = field(repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.s.size

    def frame(self, s) -> CurveFrame:
        """Evaluate the exact curve (via the arclength map) at arbitrary s."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        theta = self._map.theta_of(s)
        p, d1, d2 = self._map.curve(theta)
        speed = np.hypot(d1[0], d1[1])
        tau = d1 / speed
        normal = np.stack([tau[1], -tau[0]])
        kappa = (d2[0] * d1[1] - d2[1] * d1[0]) / speed**3
        return CurveFrame(s, p, tau, normal, kappa)

    def area(self) -> float:
        """Enclosed area by the spectrally accurate boundary formula."""
        x, y = self.points
        w = self.length / self.n_nodes
        return float(0.5 * w * np.sum(x * self.tangent[1] - y * self.tangent[0]))

    def centroid(self) -> np.ndarray:
        x, y = self.points
        w = self.length / self.n_nodes
        # Green: int x dA = 1/2 oint x^2 dy, int y dA = -1/2 oint y^2 dx
        A = self.area()
        cx = 0.5 * w * np.sum(x**2 * self.tangent[1]) / A
        cy = -0.5 * w * np.sum(y**2 * self.tangent[0]) / A
        return np.array([cx, cy])

    def spectral_derivative(self, f, order: int = 1):
        """Periodic Fourier derivative d^order f / ds^order of nodal samples."""
        return fourier_derivative(f, self.length, order)

    def arclength_defect(self) -> float:
        """max | |dz/ds| - 1 | measured by spectral differentiation of the samples."""
        dx = self.spectral_derivative(self.points[0])
        dy = self.spectral_derivative(self.points[1])
        return float(np.max(np.abs(np.hypot(dx, dy) - 1.0)))

    def closure_gap(self) -> float:
        end = self.frame(self.length).point[:, 0]
        return float(np.linalg.norm(end - self.points[:, 0]))

    def turning_integral(self) -> float:
        return float(np.sum(self.kappa) * self.length / self.n_nodes)


def fourier_derivative(f, period, order=1):
    f = np.asarray(f)
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = (2j * np.pi * k / period) ** order
    if order % 2 == 1 and n % 2 == 0:
        mult[n // 2] = 0.0
    out = np.fft.ifft(np.fft.fft(f, axis=-1) * mult, axis=-1)
    return out.real if np.isrealobj(f) else out


def _segments_intersect(points):
    """True if any two non-adjacent segments of the closed polygon cross."""
    p = points.T
    q = np.roll(p, -1, axis=0)
    n = len(p)

    def orient(a, b, c):
        return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                       - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))

    for i in range(n):
        j = np.arange(i + 2, n)
        if i == 0:
            j = j[j != n - 1]
        if j.size == 0:
            continue
        a, b = p[i], q[i]
        c, d = p[j], q[j]
        o1 = orient(a, b, c)
        o2 = orient(a, b, d)
        o3 = orient(c, d, a[None, :])
        o4 = orient(c, d, b[None, :])
        if np.any((o1 * o2 < 0) & (o3 * o4 < 0)):
            return True
    return False


def build_boundary(descriptor, n_nodes: int = 256) -> BoundaryCurve:
    """Arclength-reparametrize an analytic closed curve.

    Arclength is computed from a trigonometric interpolant of the speed
    and inverted by Newton iteration (tolerance 1e-12).
    """
    if n_nodes < 16:
        raise InsufficientDataError("n_nodes must be at least 16")
    curve = parse_descriptor(descriptor)
    amap = _ArclengthMap(curve, max(8 * n_nodes, 2048))
    if amap.min_speed <= 1e-8 * amap.max_speed:
        raise RegularityError("curve has a stationary point (cusp): tangent jump")

    # orientation and simplicity on a fine polygon
    t_fine = 2 * np.pi * np.arange(4 * n_nodes) / (4 * n_nodes)
    pf, _, _ = curve(t_fine)
    signed_area = 0.5 * np.sum(pf[0] * np.roll(pf[1], -1) - np.roll(pf[0], -1) * pf[1])
    if signed_area <= 0:
        raise GeometryError("curve must be traversed counterclockwise with positive area")
    if _segments_intersect(pf):
        raise GeometryError("curve is self-intersecting")

    length = amap.length
    s = length * np.arange(n_nodes) / n_nodes
    bc = BoundaryCurve(
        s=_frozen(s), points=np.empty(0), tangent=np.empty(0), normal=np.empty(0),
        kappa=np.empty(0), length=float(length),
        descriptor={"shape": curve.name, **curve.params},
        interpolant={"kind": "trigonometric", "modes": int(amap.k.size),
                     "nodes": int(n_nodes)},
        _map=amap,
    )
    fr = bc.frame(s)
    # fill the frozen fields
    object.__setattr__(bc, "points", _frozen(fr.point))
    object.__setattr__(bc, "tangent", _frozen(fr.tangent))
    object.__setattr__(bc, "normal", _frozen(fr.normal))
    object.__setattr__(bc, "kappa", _frozen(fr.kappa))
    return bc


def smooth_curvature(curve: BoundaryCurve, keep_modes: int) -> np.ndarray:
    """Low-pass filtered curvature (optional; never applied by default)."""
    c = np.fft.rfft(curve.kappa)
    c[keep_modes + 1:] = 0.0
    return np.fft.irfft(c, n=curve.n_nodes)


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class BoundaryQuadrature:
    nodes: np.ndarray
    weights: np.ndarray
    order: int


def boundary_quadrature(curve: BoundaryCurve, n: int | None = None) -> BoundaryQuadrature:
    """Periodic trapezoid rule; exact for trigonometric degree < n."""
    n = curve.n_nodes if n is None else int(n)
    nodes = curve.length * np.arange(n) / n
    return BoundaryQuadrature(_frozen(nodes), _frozen(np.full(n, curve.length / n)), n - 1)


def rigid_motion_rank_check(curve=None, *, points=None, tangents=None, weights=None) -> dict:
    """Smallest singular value of the normalized rigid-motion sample matrix.

    Columns are z1'(s), z2'(s) and z2 z1' - z1 z2' sampled at quadrature
    nodes.  For a closed admissible curve the three columns are linearly
    independent.  Raw ``points``/``tangents`` may be given instead of a curve
    (useful for degenerate inputs such as a straight segment).
    """
    if curve is not None:
        points, tangents = curve.points, curve.tangent
        weights = np.full(curve.n_nodes, curve.length / curve.n_nodes)
    points = np.asarray(points, dtype=float)
    tangents = np.asarray(tangents, dtype=float)
    m = points.shape[1]
    if m < 3:
        raise InsufficientDataError("need at least 3 quadrature nodes")
    if weights is None:
        weights = np.ones(m)
    cols = np.stack([
        tangents[0],
        tangents[1],
        points[1] * tangents[0] - points[0] * tangents[1],
    ], axis=1) * np.sqrt(np.asarray(weights))[:, None]
    norms = np.linalg.norm(cols, axis=0)
    cols = cols / np.where(norms > 0, norms, 1.0)
    sv = np.linalg.svd(cols, compute_uv=False)
    smin = float(sv[-1])
    return {"min_singular_value": smin, "violation": smin < 1e-8}


# ---------------------------------------------------------------------------
# meshing


@dataclass(frozen=True)
class CrossSectionMesh:
    """Triangulation of the cross-section.

    ``bedges`` rows are ``(i, j)`` vertex pairs, counterclockwise along the
    boundary, with matching arclength intervals ``bedge_s[k] = (s_lo, s_hi)``.
    """

    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3)
    bedges: np.ndarray  # (B, 2)
    bedge_s: np.ndarray  # (B, 2)
    curve: BoundaryCurve | None = None

    @property
    def h(self) -> float:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        d = self.nodes[e[:, 0]] - self.nodes[e[:, 1]]
        return float(np.max(np.hypot(d[:, 0], d[:, 1])))

    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self) -> float:
        return float(self.areas().sum())

    def min_angle_deg(self) -> float:
        return float(_triangle_angles(self.nodes, self.triangles).min())

    def check(self) -> None:
        """Validate orientation, quality and boundary tiling; raise MeshError."""
        if np.any(self.areas() <= 0):
            raise MeshError("mesh has non-positively oriented triangles")
        if self.min_angle_deg() <= 15.0:
            raise MeshError(f"minimum angle {self.min_angle_deg():.2f} deg <= 15 deg")
        s = self.bedge_s
        if np.any(s[:, 1] <= s[:, 0]):
            raise MeshError("boundary arclength intervals must be increasing")
        if np.any(np.abs(s[1:, 0] - s[:-1, 1]) > 1e-12) or abs(s[0, 0]) > 1e-12:
            raise MeshError("boundary intervals do not tile [0, |gamma|)")
        if self.curve is not None and abs(s[-1, 1] - self.curve.length) > 1e-9:
            raise MeshError("boundary intervals do not close at |gamma|")


def _triangle_angles(nodes, tris):
    p = nodes[tris]
    angles = []
    for i in range(3):
        a = p[:, (i + 1) % 3] - p[:, i]
        b = p[:, (i + 2) % 3] - p[:, i]
        cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
        angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
    return np.stack(angles, axis=1)


def _points_in_polygon(pts, poly):
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for i in range(len(poly)):
        cond = (py[i] > y) != (qy[i] > y)
        xint = px[i] + (y - py[i]) * (qx[i] - px[i]) / (qy[i] - py[i] + 1e-300)
        inside ^= cond & (x < xint)
    return inside


def _triangulate(points, poly):
    tri = Delaunay(points).simplices
    cen = points[tri].mean(axis=1)
    tri = tri[_points_in_polygon(cen, poly)]
    p = points[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def mesh_domain(curve: BoundaryCurve, h_target: float, smoothing: int = 8) -> CrossSectionMesh:
    """Mapped ring mesh of a star-shaped cross-section.

    Boundary vertices sit at uniform arclength on the curve; interior rings are
    scaled copies of the boundary towards the centroid.  Interior vertices get
    a few sweeps of Laplacian smoothing with Delaunay re-triangulation.
    """
    L = curve.length
    if not h_target < L / 8:
        raise RefinementError(f"h_target={h_target} must be < |gamma|/8 = {L / 8:.4g}")
    if h_target * float(np.max(np.abs(curve.kappa))) > 0.5:
        raise RefinementError("h_target too coarse to resolve curvature (h max|kappa| > 0.5)")

    c = curve.centroid()
    # star-shapedness about the centroid: polar angle must increase monotonically
    rel = curve.points.T - c
    cross = rel[:, 0] * curve.tangent[1] - rel[:, 1] * curve.tangent[0]
    if np.any(cross <= 0):
        raise MeshError("domain is not star-shaped about its centroid")

    nb = max(16, int(np.ceil(L / h_target)))
    sb = L * np.arange(nb) / nb
    bpts = curve.frame(sb).point.T
    rmax = float(np.max(np.linalg.norm(bpts - c, axis=1)))
    nr = max(2, int(np.ceil(rmax / h_target)))

    pts = [bpts]
    for j in range(1, nr):
        t = j / nr
        nj = max(6, int(round(nb * t)))
        shift = 0.5 * (j % 2)
        sj = L * (np.arange(nj) + shift) / nj
        pts.append(c + t * (curve.frame(sj).point.T - c))
    pts.append(c[None, :])
    points = np.concatenate(pts)
    nfix = nb

    tri = _triangulate(points, bpts)
    for _ in range(smoothing):
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        e = np.concatenate([e, e[:, ::-1]])
        acc = np.zeros_like(points)
        cnt = np.zeros(len(points))
        np.add.at(acc, e[:, 0], points[e[:, 1]])
        np.add.at(cnt, e[:, 0], 1.0)
        free = np.arange(len(points)) >= nfix
        free &= cnt > 0
        target = acc[free] / cnt[free, None]
        points[free] = 0.5 * points[free] + 0.5 * target
        tri = _triangulate(points, bpts)

    used = np.unique(tri)
    if used.size != len(points):
        remap = -np.ones(len(points), dtype=int)
        remap[used] = np.arange(used.size)
        if np.any(remap[:nfix] < 0):
            raise MeshError("boundary vertex dropped by triangulation")
        points = points[used]
        tri = remap[tri]

    bedges = np.stack([np.arange(nb), (np.arange(nb) + 1) % nb], axis=1)
    edge_set = set()
    for a, b in np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]):
        edge_set.add((min(a, b), max(a, b)))
    for a, b in bedges:
        if (min(a, b), max(a, b)) not in edge_set:
            raise MeshError("triangulation does not conform to the boundary")
    bedge_s = np.stack([sb, np.append(sb[1:], L)], axis=1)
    mesh = CrossSectionMesh(_frozen(points), _frozen(tri), _frozen(bedges),
                            _frozen(bedge_s), curve)
    mesh.check()
    return mesh


# ---------------------------------------------------------------------------
# mesh file I/O


def write_mesh(mesh: CrossSectionMesh, path) -> None:
    """Plain-text mesh: header, node lines, triangle lines, boundary-edge lines."""
    with open(path, "w") as fh:
        fh.write(f"nodes {len(mesh.nodes)} triangles {len(mesh.triangles)} "
                 f"bedges {len(mesh.bedges)}\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        for (i, j), (lo, hi) in zip(mesh.bedges, mesh.bedge_s):
            fh.write(f"{i} {j} {lo:.17g} {hi:.17g}\n")


def read_mesh(path, curve: BoundaryCurve | None = None) -> CrossSectionMesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    head = lines[0]
    try:
        if head[0] != "nodes" or head[2] != "triangles" or head[4] != "bedges":
            raise ValueError
        n, t, b = int(head[1]), int(head[3]), int(head[5])
    except (ValueError, IndexError):
        raise MeshError("line 1: expected 'nodes <N> triangles <T> bedges <B>'") from None
    if len(lines) != 1 + n + t + b:
        raise MeshError(f"expected {1 + n + t + b} non-empty lines, found {len(lines)}")
    nodes = np.array(lines[1:1 + n], dtype=float)
    tris = np.array(lines[1 + n:1 + n + t], dtype=int)
    be = lines[1 + n + t:]
    bedges = np.array([r[:2] for r in be], dtype=int)
    bedge_s = np.array([r[2:4] for r in be], dtype=float)
    mesh = CrossSectionMesh(_frozen(nodes), _frozen(tris), _frozen(bedges),
                            _frozen(bedge_s), curve)
    mesh.check()
    return mesh


def segment_samples(p0: Sequence[float], p1: Sequence[float], n: int):
    """Points and tangents sampled on a straight segment (a degenerate 'curve')."""
    t = np.linspace(0.0, 1.0, n)
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    pts = p0[:, None] + np.outer(p1 - p0, t)
    tan = np.repeat(((p1 - p0) / np.linalg.norm(p1 - p0))[:, None], n, axis=1)
    return pts, tan
