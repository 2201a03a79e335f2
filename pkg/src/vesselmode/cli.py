"""Command line interface: ``vesselmode <verb> [--config PATH] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import bundled_config_path, load_config
from .errors import ConfigError, UnsupportedParameterError, VesselModeError

log = logging.getLogger("vesselmode")

VERBS = ("mesh", "poiseuille", "womersley", "pencil-scan", "static-wall", "synthesize",
         "certify", "compare")


def _seed(text):
    try:
        return int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be hexadecimal, got {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="vesselmode", description=__doc__)
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", type=Path, default=None,
                   help="experiment config (default: bundled disk-rigid-vs-elastic)")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=_seed, default=None, help="hex seed, e.g. 5EED")
    p.add_argument("--omega", type=float, default=None,
                   help="angular frequency for womersley / pencil-scan")
    p.add_argument("--kind", choices=("rigid", "elastic"), default=None,
                   help="pencil for pencil-scan (default: the config wall type)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _geometry(cfg):
    from .geometry import build_boundary, mesh_domain

    curve = build_boundary(cfg.geometry, cfg.n_nodes)
    return curve, mesh_domain(curve, cfg.mesh_h)


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=str))


def _cmd_mesh(cfg, out, args):
    from .geometry import write_mesh

    curve, mesh = _geometry(cfg)
    write_mesh(mesh, out / "mesh.txt")
    _emit({"nodes": len(mesh.nodes), "triangles": len(mesh.triangles), "h": mesh.h,
           "min_angle_deg": mesh.min_angle_deg(), "area": mesh.area(), "length": curve.length})
    return 0


def _cmd_poiseuille(cfg, out, args):
    from .modal_stokes import disk_oracles, solve_poiseuille

    _, mesh = _geometry(cfg)
    fld = solve_poiseuille(mesh, cfg.fluid.nu)
    fld.to_csv(out / "poiseuille.csv")
    info = {"flux": float(np.real(fld.flux()))}
    if cfg.geometry["shape"] == "circle":
        info["flux_oracle"] = disk_oracles(cfg.geometry["radius"], cfg.fluid.nu).flux_poiseuille()
    _emit(info)
    return 0


def _cmd_womersley(cfg, out, args):
    from .modal_stokes import disk_oracles, flux_identity_residual, solve_womersley_mode

    omega = args.omega if args.omega is not None else cfg.waveform.omega(1)
    _, mesh = _geometry(cfg)
    sol = solve_womersley_mode(mesh, cfg.fluid.nu, omega)
    sol.field.to_csv(out / "womersley.csv")
    info = {"omega": omega, "flux": [sol.flux.real, sol.flux.imag],
            "flux_identity_residual": flux_identity_residual(sol, cfg.fluid.nu)[0]}
    if cfg.geometry["shape"] == "circle":
        f = disk_oracles(cfg.geometry["radius"], cfg.fluid.nu, omega).flux_womersley()
        info["flux_oracle"] = [f.real, f.imag]
    _emit(info)
    return 0


def _cmd_pencil_scan(cfg, out, args):
    from .elastic_coupling import assemble_elastic_pencil, assemble_rigid_pencil
    from .geometry import build_boundary, mesh_domain
    from .spectral_analysis import StripScanConfig, scan_strip

    kind = args.kind or cfg.wall
    omega = args.omega if args.omega is not None else cfg.scan_omega
    if omega is None:
        omega = cfg.waveform.omega(1)
    curve = build_boundary(cfg.geometry, cfg.n_nodes)
    mesh = mesh_domain(curve, cfg.scan_h)
    if kind == "elastic":
        if omega == 0:
            raise UnsupportedParameterError(
                "omega = 0 has no elastic modal problem; use the 'static-wall' verb")
        ctx = assemble_elastic_pencil(mesh, cfg.fluid.nu, omega, cfg.material,
                                      cfg.wall_coupling)
    else:
        ctx = assemble_rigid_pencil(mesh, cfg.fluid.nu, omega)
    s = cfg.scan
    scan = StripScanConfig(s.beta_max, s.xi_max, s.n_beta, s.n_xi, s.refine_tol, s.threshold,
                           s.relative, s.separation_hint, s.rigid_exclusion, args.threads)
    rep = scan_strip(ctx, scan)
    rep.landscape.to_csv(out / "landscape.csv")
    rep.to_json(out / "spectrum.json")
    _emit(rep.to_dict())
    return 0


def _cmd_static_wall(cfg, out, args):
    from .flowsynth import write_wall_csv
    from .modal_stokes import poiseuille_conormal, solve_poiseuille, trace_to_arclength
    from .wall_model import static_wall_solve

    curve, mesh = _geometry(cfg)
    base = solve_poiseuille(mesh, cfg.fluid.nu)
    tr = poiseuille_conormal(base, cfg.fluid.nu)
    p0 = float(cfg.waveform.coeffs[0].real)
    res = static_wall_solve(p0, cfg.p1, lambda s: trace_to_arclength(base.space, tr, s),
                            cfg.material, curve, nu=cfg.fluid.nu)
    write_wall_csv(res, out / "wall_displacement.csv")
    _emit({"p0": p0, "p1": cfg.p1, "b1": res.b1, "b2": res.b2, "alpha": res.alpha,
           "beta_wall": res.beta_wall, "residual": res.diagnostics["residual"]})
    return 0


def _cmd_synthesize(cfg, out, args):
    from .flowsynth import synthesize_rigid_periodic

    _, mesh = _geometry(cfg)
    rep = synthesize_rigid_periodic(mesh, cfg.fluid.nu, cfg.waveform, cfg.n_time, args.threads)
    rep.flux_csv(out / "flux_rigid.csv")
    _emit(rep.summary())
    return 0


def _cmd_certify(cfg, out, args):
    from .flowsynth import certify_elastic_rigidity
    from .geometry import mesh_domain

    if cfg.wall != "elastic":
        raise ConfigError("certify needs an elastic wall", "wall", "type")
    curve, mesh = _geometry(cfg)
    rep = certify_elastic_rigidity(mesh, curve, cfg.fluid.nu, cfg.material, cfg.waveform,
                                   cfg.scan, p1=cfg.p1, n_time=cfg.n_time,
                                   wall_coupling=cfg.wall_coupling, raise_on_failure=False,
                                   scan_mesh=mesh_domain(curve, cfg.scan_h))
    rep.certificate_csv(out / "certificate.csv")
    _emit(rep.summary())
    if not rep.flags["certificate_passed"]:
        return 3
    rep.flux_csv(out / "flux_elastic.csv")
    rep.wall_csv(out / "wall_displacement.csv")
    return 0


def _cmd_compare(cfg, out, args):
    from .flowsynth import run_experiment

    status, path = run_experiment(cfg, out, threads=args.threads, seed=args.seed)
    with open(path / "manifest.json") as fh:
        _emit(json.load(fh)["summary"])
    return status


_COMMANDS = {
    "mesh": _cmd_mesh, "poiseuille": _cmd_poiseuille, "womersley": _cmd_womersley,
    "pencil-scan": _cmd_pencil_scan, "static-wall": _cmd_static_wall,
    "synthesize": _cmd_synthesize, "certify": _cmd_certify, "compare": _cmd_compare,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config or bundled_config_path())
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out or cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.verb](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VesselModeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
