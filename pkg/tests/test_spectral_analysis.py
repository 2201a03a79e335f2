import csv
import json

import numpy as np
import pytest
import scipy.linalg as sla

from vesselmode.elastic_coupling import assemble_elastic_pencil, assemble_rigid_pencil
from vesselmode.errors import DomainError
from vesselmode.geometry import mesh_domain
from vesselmode.spectral_analysis import (CERTIFICATE_LABEL, StripScanConfig, composite_data_norm,
                                          data_norm, estimate_beta_star, locate_eigenvalues_in_strip,
                                          pencil_norms, refine_eigenvalue, resolvent_scaling_probe,
                                          sigma_min, sigma_min_landscape)


@pytest.fixture(scope="module")
def tiny_mesh(disk_curve):
    return mesh_domain(disk_curve, 0.4)


@pytest.fixture(scope="module")
def elastic_ctx(disk_mesh_coarse, default_material):
    return assemble_elastic_pencil(disk_mesh_coarse, 1.0, 1.0, default_material)


@pytest.fixture(scope="module")
def rigid_ctx(disk_mesh_coarse):
    return assemble_rigid_pencil(disk_mesh_coarse, 1.0, 1.0)


def _dense_g_singular_values(ctx, M):
    """Singular values of M measured as a map from (G) to its dual, by dense SVD."""
    R = sla.cholesky(ctx.G.toarray(), lower=False)
    Rinv = sla.solve_triangular(R, np.eye(R.shape[0]))
    W = sla.solve_triangular(R, M.toarray(), trans="C") @ Rinv
    return np.linalg.svd(W, compute_uv=False)


# -- sigma_min --------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["elastic", "rigid"])
def test_sigma_min_matches_dense_svd(tiny_mesh, default_material, kind):
    if kind == "elastic":
        ctx = assemble_elastic_pencil(tiny_mesh, 1.0, 1.0, default_material)
    else:
        ctx = assemble_rigid_pencil(tiny_mesh, 1.0, 1.0)
    for lam in (0.3 + 1.0j, -0.2 + 2.5j):
        oracle = _dense_g_singular_values(ctx, ctx.A(lam))[-1]
        assert abs(sigma_min(ctx, lam).sigma - oracle) < 1e-8 * oracle


def test_pencil_norms_match_dense_svd(tiny_mesh, default_material):
    ctx = assemble_elastic_pencil(tiny_mesh, 1.0, 1.0, default_material)
    got = pencil_norms(ctx)
    for Ak, n in zip((ctx.A0, ctx.A1, ctx.A2), got):
        oracle = _dense_g_singular_values(ctx, Ak)[0] if Ak.nnz else 0.0
        assert abs(n - oracle) < 1e-6 * max(oracle, 1.0)


def test_sigma_min_homogeneity(elastic_ctx):
    lam = 0.1 + 1.5j
    a = sigma_min(elastic_ctx, lam)
    b = sigma_min(elastic_ctx.scaled(2.0), lam)
    assert abs(b.sigma - 2 * a.sigma) < 1e-10 * a.sigma
    # the relative value is scale free
    assert abs(b.sigma_rel - a.sigma_rel) < 1e-8 * a.sigma_rel


def test_sigma_min_conjugate_symmetry(disk_mesh_coarse, default_material):
    plus = assemble_elastic_pencil(disk_mesh_coarse, 1.0, 1.0, default_material)
    minus = assemble_elastic_pencil(disk_mesh_coarse, 1.0, -1.0, default_material)
    for lam in (0.2 + 1.0j, -0.3 - 2.0j):
        a = sigma_min(plus, lam).sigma
        b = sigma_min(minus, np.conj(lam)).sigma
        assert abs(a - b) < 1e-10 * max(a, 1.0)


def test_theta_kernel_trivial_on_axis(elastic_ctx):
    for xi in (0.0, 0.5, 1.0, 2.0, 5.0):
        assert sigma_min(elastic_ctx, 1j * xi).sigma_rel > 1e-6


def test_sigma_min_vectors_are_g_normalized(elastic_ctx):
    s = sigma_min(elastic_ctx, 0.5j, vectors=True)
    x = s.right
    assert abs(np.sqrt(abs(np.vdot(x, elastic_ctx.G @ x))) - 1) < 1e-10


# -- scan configuration -------------------------------------------------------------


def test_strip_config_validation():
    with pytest.raises(DomainError):
        StripScanConfig(0.0, 5.0)
    with pytest.raises(DomainError):
        StripScanConfig(0.5, 5.0, n_xi=1)
    with pytest.raises(DomainError):
        StripScanConfig(0.5, 5.0, threshold=-1.0)
    with pytest.raises(DomainError):
        StripScanConfig(0.5, 5.0, n_xi=11, separation_hint=1.0)
    cfg = StripScanConfig(0.5, 5.0, n_beta=11, n_xi=101)
    assert cfg.d_beta == pytest.approx(0.1) and cfg.d_xi == pytest.approx(0.1)
    assert StripScanConfig(0.5, 5.0, n_beta=1).betas.tolist() == [0.0]


# -- landscapes, eigenvalues and beta* ------------------------------------------------


@pytest.fixture(scope="module")
def rigid_landscape(rigid_ctx):
    cfg = StripScanConfig(0.5, 5.0, n_beta=5, n_xi=11)
    return cfg, sigma_min_landscape(rigid_ctx, cfg)


def test_rigid_landscape_minimum_at_origin(rigid_landscape):
    cfg, land = rigid_landscape
    V = land.values()
    i, j = np.unravel_index(np.argmin(V), V.shape)
    assert land.betas[i] == 0.0 and land.xis[j] == 0.0
    assert V[i, j] < 1e-8


def test_rigid_landscape_homogeneity(rigid_ctx):
    cfg = StripScanConfig(0.5, 5.0, n_beta=2, n_xi=3)
    a = sigma_min_landscape(rigid_ctx, cfg).sigma
    b = sigma_min_landscape(rigid_ctx.scaled(2.0), cfg).sigma
    np.testing.assert_allclose(b, 2 * a, rtol=1e-8)


def test_threshold_zero_gives_empty_report(rigid_ctx, rigid_landscape):
    cfg, land = rigid_landscape
    cfg0 = StripScanConfig(0.5, 5.0, n_beta=5, n_xi=11, threshold=0.0)
    rep = locate_eigenvalues_in_strip(rigid_ctx, cfg0, land)
    assert rep.eigenpairs == [] and rep.unresolved == []
    assert CERTIFICATE_LABEL in rep.caveats


def test_rigid_beta_star_positive_outside_exclusion(rigid_ctx, rigid_landscape):
    cfg, land = rigid_landscape
    est = estimate_beta_star(rigid_ctx, cfg, land)
    assert est["beta_star_estimate"] > 0
    assert est["excluded_disk"] == 0.05
    assert est["label"] == CERTIFICATE_LABEL
    assert len(est["evidence"]["min_sigma"]) == cfg.n_beta


def test_beta_star_zero_with_diagnostic(rigid_ctx, rigid_landscape):
    _, land = rigid_landscape
    cfg = StripScanConfig(0.5, 5.0, n_beta=5, n_xi=11, threshold=1e3)
    est = estimate_beta_star(rigid_ctx, cfg, land)
    assert est["beta_star_estimate"] == 0.0 and est["diagnostic"]


def test_elastic_beta_star_depends_on_frequency(disk_mesh_coarse, default_material):
    cfg = StripScanConfig(0.5, 5.0, n_beta=5, n_xi=11)
    out = {}
    for omega in (1.0, 4.0):
        ctx = assemble_elastic_pencil(disk_mesh_coarse, 1.0, omega, default_material)
        land = sigma_min_landscape(ctx, cfg)
        assert land.values()[cfg.n_beta // 2].min() > 1e-6
        est = estimate_beta_star(ctx, cfg, land)
        assert est["excluded_disk"] == 0.0
        out[omega] = est
    assert all(e["beta_star_estimate"] > 0 for e in out.values())
    assert out[1.0]["evidence"]["min_sigma"] != out[4.0]["evidence"]["min_sigma"]


def test_rigid_zero_eigenvalue_stable_under_refinement(tiny_mesh, disk_mesh_coarse):
    for mesh in (tiny_mesh, disk_mesh_coarse):
        ctx = assemble_rigid_pencil(mesh, 1.0, 1.0)
        ep = refine_eigenvalue(ctx, 0.05 + 0.1j)
        assert ep.status == "converged"
        assert abs(ep.lam) < 1e-4
        _, p = ctx.split(ep.vector)
        cos = abs(p.sum()) / (np.sqrt(p.size) * np.linalg.norm(p))
        assert cos > 0.999


def test_landscape_csv_and_report_json(tmp_path, rigid_ctx, rigid_landscape):
    cfg, land = rigid_landscape
    path = land.to_csv(tmp_path / "land.csv")
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["re_lambda", "im_lambda", "sigma_min"]
    assert len(rows) == 1 + cfg.n_beta * cfg.n_xi
    assert float(rows[1][2]) == land.sigma_rel[0, 0]
    rep = locate_eigenvalues_in_strip(rigid_ctx, cfg, land)
    d = json.loads(open(rep.to_json(tmp_path / "rep.json")).read())
    for key in ("eigenvalues", "residuals", "multiplicities", "beta_star_estimate",
                "window", "caveats", "certificate", "new_data"):
        assert key in d
    assert d["certificate"] == CERTIFICATE_LABEL and d["new_data"] is True


# -- resolvent scaling ---------------------------------------------------------------


@pytest.mark.parametrize("args, expected", [
    ((1.0, 2.0, 3.0, 4.0, 16.0), 1.0 + 3.0 + 4.0 + 4.0 * 2.0),
    ((0.5, 1.0, 0.0, 0.0, -9.0), 0.5 + 3.0),
    ((0.0, 0.0, 0.25, 0.125, 0.0), 0.375),
])
def test_composite_data_norm_by_hand(args, expected):
    assert composite_data_norm(*args) == expected


def test_data_norm_wall_only(disk_mesh_coarse):
    from vesselmode.modal_stokes import space_for
    space = space_for(disk_mesh_coarse)
    g1 = np.sqrt(np.sum(space.bq_w))  # L2 norm of the constant 1 on the wall
    assert abs(data_norm(space, None, (1.0, 0.0, 0.0), 16.0) - 4 * g1) < 1e-12


def test_resolvent_probe_zero_rhs(elastic_ctx):
    z = lambda x, y: 0 * x
    pr = resolvent_scaling_probe(elastic_ctx, [8.0, 16.0], f=(z, z, z))
    for v in pr.scaled().values():
        assert np.all(v == 0)
    assert pr.flagged == []


def test_resolvent_probe_flags_and_floor(elastic_ctx, monkeypatch):
    from vesselmode import spectral_analysis as sa
    from vesselmode.errors import NearEigenvalueError

    with pytest.raises(DomainError):
        resolvent_scaling_probe(elastic_ctx, [1.0], f=(lambda x, y: 1 + 0 * x,) * 3)
    real = sa.solve_modal_coupled

    def fake(ctx, lam, **kw):
        if abs(lam.imag - 16.0) < 1e-12:
            raise NearEigenvalueError("forced")
        return real(ctx, lam, **kw)

    monkeypatch.setattr(sa, "solve_modal_coupled", fake)
    f = (lambda x, y: 1 + 0 * x, lambda x, y: 0 * x, lambda x, y: x * y)
    pr = resolvent_scaling_probe(elastic_ctx, [8.0, 16.0, 32.0], f=f)
    assert pr.flagged == [16.0]
    assert np.isnan(pr.v_l2[1]) and np.isfinite(pr.slope_v)


def test_resolvent_probe_rejects_rigid(rigid_ctx):
    with pytest.raises(DomainError):
        resolvent_scaling_probe(rigid_ctx, [8.0])
