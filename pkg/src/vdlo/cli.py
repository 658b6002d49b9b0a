"""Command-line front end.

Subcommands form a staged pipeline with JSON files between the stages:

  run     config -> result.json (and images when the config asks for them)
  fem     config -> gauss_stress.json
  smooth  config + gauss_stress.json -> nodal_stress.json
  vdlo    config + nodal_stress.json -> result.json
  render  config + result/stress files -> pattern.svg / stress.ppm

The staged files let external tools inject their own stress fields between
``smooth`` and ``vdlo``.  Exit codes: 0 success, 2 bad configuration,
3 missing/unparsable input file, 4 pipeline failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_PIPELINE = 4

log = logging.getLogger("vdlo")


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if "mesh" not in cfg:
        raise ConfigError("config needs a 'mesh' entry")
    if ("load" in cfg) == ("stress" in cfg):
        raise ConfigError("config needs exactly one stress source: 'load' or 'stress'")
    if cfg.get("analysis", "static") not in ("static", "pseudostatic"):
        raise ConfigError(f"unknown analysis kind {cfg.get('analysis')!r}")
    if cfg.get("analysis") == "pseudostatic":
        if "stress" in cfg:
            raise ConfigError("pseudostatic analysis computes its own stress history")
        fem = cfg.get("fem", {})
        for key in ("dt", "n_steps"):
            if key not in fem:
                raise ConfigError(f"pseudostatic analysis needs fem.{key}")
    cfg["_dir"] = os.path.dirname(os.path.abspath(path))
    return cfg


def _resolve(cfg: dict, name: str) -> str:
    return os.path.join(cfg["_dir"], cfg[name])


def _vdlo_options(cfg: dict, args):
    from .analysis import VdloOptions
    from .candidates import Quadrature

    raw = dict(cfg.get("vdlo", {}))
    quad = None
    if "quadrature" in raw:
        q = raw.pop("quadrature")
        quad = Quadrature(h=q.get("h"), min_points=q.get("min_points", 3),
                          max_points=q.get("max_points"))
    opts = VdloOptions(threshold=raw.get("threshold", 1e-6),
                       max_length=raw.get("max_length"),
                       quadrature=quad,
                       solver=raw.get("solver", "highs"),
                       exclude_material_crossing=raw.get("exclude_material_crossing", False))
    if getattr(args, "max_length", None) is not None:
        opts.max_length = args.max_length
    return opts


def _write_json(path: str, payload) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
    log.info("wrote %s", path)


def _render_outputs(cfg, mesh, outdir, result_dict=None, sigma_n=None):
    from .render import render_pattern_svg, render_stress_ppm

    rcfg = cfg.get("render")
    if result_dict is not None:
        render_pattern_svg(mesh, result_dict.get("pattern", []), result_dict.get("lambda"),
                           path=os.path.join(outdir, "pattern.svg"))
        log.info("wrote %s", os.path.join(outdir, "pattern.svg"))
    if rcfg and sigma_n is not None:
        ranges = rcfg["stress_ranges"]
        res = rcfg.get("resolution", [200, 200])
        render_stress_ppm(mesh, sigma_n, ranges, tuple(res),
                          path=os.path.join(outdir, "stress.ppm"))
        log.info("wrote %s", os.path.join(outdir, "stress.ppm"))


def cmd_run(args) -> int:
    from .mesh import load_mesh
    from .fem import load_load_case
    from .recovery import load_nodal_stresses
    from .analysis import Snapshot, SnapshotPipeline, run_pseudostatic, static_snapshot

    cfg = _load_config(args.config)
    mesh = load_mesh(_resolve(cfg, "mesh"))
    opts = _vdlo_options(cfg, args)
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)

    if cfg.get("analysis", "static") == "pseudostatic":
        load = load_load_case(_resolve(cfg, "load"))
        fem_cfg = cfg["fem"]
        series = run_pseudostatic(mesh, load, dt=float(fem_cfg["dt"]),
                                  n_steps=int(fem_cfg["n_steps"]),
                                  snapshot_every=int(fem_cfg.get("snapshot_every", 1)),
                                  options=opts)
        payload = [{"time": t, **r.to_dict()} for t, r in series]
        _write_json(os.path.join(outdir, "result.json"), payload)
        for t, r in series:
            log.info("t=%.3e s: %s lambda=%s", t, r.status, r.lam)
        return EXIT_OK

    if "load" in cfg:
        snapshot = static_snapshot(mesh, load_load_case(_resolve(cfg, "load")))
    else:
        sigma_n = load_nodal_stresses(_resolve(cfg, "stress"), n_nodes=len(mesh.nodes))
        snapshot = Snapshot(sigma_n=sigma_n, provenance="imported")

    pipeline = SnapshotPipeline(mesh, opts)
    result = pipeline.run(snapshot)
    log.info("candidates=%d lp_rows=%s lp_vars=%s iterations=%s",
             len(pipeline.candidates), result.timing.get("lp_rows"),
             result.timing.get("lp_vars"), result.timing.get("iterations"))
    log.info("status=%s lambda=%s", result.status,
             "inf" if result.lam is None else f"{result.lam:.6g}")
    _write_json(os.path.join(outdir, "result.json"), result.to_dict())
    _render_outputs(cfg, mesh, outdir, result_dict=result.to_dict(),
                    sigma_n=snapshot.sigma_n)
    return EXIT_OK


def cmd_fem(args) -> int:
    from .mesh import load_mesh
    from .fem import gauss_point_stresses, load_load_case, solve_static

    cfg = _load_config(args.config)
    if "load" not in cfg:
        raise ConfigError("'fem' needs a config with a load case")
    mesh = load_mesh(_resolve(cfg, "mesh"))
    state = solve_static(mesh, load_load_case(_resolve(cfg, "load")))
    sigma_g = gauss_point_stresses(mesh, state)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "gauss_stress.json"), sigma_g.tolist())
    return EXIT_OK


def cmd_smooth(args) -> int:
    from .mesh import load_mesh
    from .recovery import build_smoothing_system, recover_nodal_stresses, save_nodal_stresses

    cfg = _load_config(args.config)
    mesh = load_mesh(_resolve(cfg, "mesh"))
    gauss_path = args.gauss or os.path.join(args.out, "gauss_stress.json")
    if not os.path.exists(gauss_path):
        raise FileNotFoundError(gauss_path)
    with open(gauss_path) as fh:
        sigma_g = np.array(json.load(fh), dtype=float)
    system = build_smoothing_system(mesh)
    sigma_n = recover_nodal_stresses(system, sigma_g)
    os.makedirs(args.out, exist_ok=True)
    save_nodal_stresses(sigma_n, os.path.join(args.out, "nodal_stress.json"))
    log.info("wrote %s", os.path.join(args.out, "nodal_stress.json"))
    return EXIT_OK


def cmd_vdlo(args) -> int:
    from .mesh import load_mesh
    from .recovery import load_nodal_stresses
    from .analysis import Snapshot, SnapshotPipeline

    cfg = _load_config(args.config)
    mesh = load_mesh(_resolve(cfg, "mesh"))
    stress_path = args.stress or os.path.join(args.out, "nodal_stress.json")
    if not os.path.exists(stress_path):
        raise FileNotFoundError(stress_path)
    sigma_n = load_nodal_stresses(stress_path, n_nodes=len(mesh.nodes))
    pipeline = SnapshotPipeline(mesh, _vdlo_options(cfg, args))
    result = pipeline.run(Snapshot(sigma_n=sigma_n, provenance="imported"))
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "result.json"), result.to_dict())
    if args.dump_candidates:
        from .candidates import dump_candidates
        dump_candidates(pipeline.candidates, os.path.join(args.out, "candidates.jsonl"))
    if args.dump_lp:
        from .lp import assemble_lp, write_mps
        write_mps(assemble_lp(mesh, pipeline.candidates),
                  os.path.join(args.out, "program.mps"))
    return EXIT_OK


def cmd_render(args) -> int:
    from .mesh import load_mesh
    from .recovery import load_nodal_stresses

    cfg = _load_config(args.config)
    mesh = load_mesh(_resolve(cfg, "mesh"))
    os.makedirs(args.out, exist_ok=True)
    result_dict = None
    sigma_n = None
    result_path = args.result or os.path.join(args.out, "result.json")
    if os.path.exists(result_path):
        with open(result_path) as fh:
            result_dict = json.load(fh)
    stress_path = args.stress or os.path.join(args.out, "nodal_stress.json")
    if os.path.exists(stress_path):
        sigma_n = load_nodal_stresses(stress_path, n_nodes=len(mesh.nodes))
    if result_dict is None and sigma_n is None:
        raise FileNotFoundError(f"nothing to render: no {result_path} or {stress_path}")
    _render_outputs(cfg, mesh, args.out, result_dict=result_dict, sigma_n=sigma_n)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vdlo",
                                     description="Upper-bound limit analysis from stress snapshots")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, max_length=False):
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker thread cap (solves are single-threaded for determinism)")
        p.add_argument("--seed", type=int, default=0,
                       help="seed for randomized utilities (ignored by the pipeline)")
        if max_length:
            p.add_argument("--max-length", dest="max_length", type=float, default=None,
                           help="candidate length cap in metres (overrides config)")

    p_run = sub.add_parser("run", help="full pipeline from a config file")
    common(p_run, max_length=True)
    p_run.set_defaults(fn=cmd_run)

    p_fem = sub.add_parser("fem", help="static FEM solve -> Gauss-point stresses")
    common(p_fem)
    p_fem.set_defaults(fn=cmd_fem)

    p_smooth = sub.add_parser("smooth", help="Gauss-point stresses -> nodal stresses")
    common(p_smooth)
    p_smooth.add_argument("--gauss", default=None, help="gauss_stress.json path")
    p_smooth.set_defaults(fn=cmd_smooth)

    p_vdlo = sub.add_parser("vdlo", help="nodal stresses -> factor of safety")
    common(p_vdlo, max_length=True)
    p_vdlo.add_argument("--stress", default=None, help="nodal_stress.json path")
    p_vdlo.add_argument("--dump-candidates", action="store_true")
    p_vdlo.add_argument("--dump-lp", action="store_true",
                        help="write the assembled program in free MPS format")
    p_vdlo.set_defaults(fn=cmd_vdlo)

    p_render = sub.add_parser("render", help="result/stress files -> SVG and PPM")
    common(p_render)
    p_render.add_argument("--result", default=None)
    p_render.add_argument("--stress", default=None)
    p_render.set_defaults(fn=cmd_render)
    return parser


def main(argv=None) -> int:
    from .mesh import MeshError
    from .fem import FemError
    from .recovery import RecoveryError
    from .candidates import CandidateError
    from .lp import LpError
    from .analysis import AnalysisError
    from .render import RenderError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (FileNotFoundError, MeshError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT
    except (FemError, RecoveryError, CandidateError, LpError, AnalysisError,
            RenderError) as exc:
        log.error("pipeline error: %s", exc)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
