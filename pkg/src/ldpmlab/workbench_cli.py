"""Command-line workbench: every experiment as a subcommand.

Subcommands: generate-rve, run-rve, run-finescale, calibrate-ottosen,
run-multiscale, report.  Each run writes its artifacts plus a manifest
(JSON) under the output directory; re-running with the same config and
seed reproduces the outputs bit-identically (wall times aside).

Exit codes: 0 success, 1 numerical failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import fileio
from .adaptive_coupler import OttosenSurface
from .config import RunConfig, RunManifest, load_config
from .errors import ConfigurationError, LdpmError
from .experiments import (calibrate_from_rve, run_finescale_bending,
                          run_multiscale_bending, speedup_report)
from .macro_fem import ElasticityTensor
from .mesostructure import Box, generate_mesh
from .rve_homogenizer import (RveInstance, effective_elastic_constants,
                              run_rve_test)

USAGE_EXIT = 2
NUMERICAL_EXIT = 1


def resolve_threads(flag_value):
    """Worker count: LDPMLAB_THREADS overrides the --threads flag."""
    env = os.environ.get("LDPMLAB_THREADS")
    n = int(env) if env else (flag_value or 1)
    try:
        import numba
        numba.set_num_threads(max(n, 1))
    except (ImportError, ValueError):
        pass
    return n


def _outdir(args):
    out = Path(args.out or "runs/latest")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigurationError("--config FILE is required for this command")
    return load_config(args.config)


def cmd_generate_rve(args):
    cfg = _load_config(args)
    seed = args.seed if args.seed is not None else cfg.seed
    size = args.size if args.size is not None else cfg.rve_size
    out = _outdir(args)
    t0 = time.perf_counter()
    mesh = generate_mesh(cfg.mix, Box.cube(size), seed, periodic=True,
                         surface_spacing=cfg.surface_spacing)
    mesh.validate()
    wall = time.perf_counter() - t0
    mesh_path = out / f"rve_{size:g}mm_seed{seed}.mesh.txt"
    fileio.write_meso_mesh(mesh, mesh_path)
    manifest = RunManifest.create("generate-rve", cfg, {"generation": wall},
                                  outputs=[str(mesh_path)])
    manifest.seeds = [seed]
    manifest.write(out / "manifest.json")
    print(f"wrote {mesh_path} ({mesh.n_nodes} nodes, {mesh.n_tets} tets, "
          f"{mesh.n_facets} facets)")
    return 0


def cmd_run_rve(args):
    cfg = _load_config(args)
    out = _outdir(args)
    mesh = fileio.read_meso_mesh(args.mesh)
    rve = RveInstance(mesh, cfg.ldpm, cfg.mix.density)
    t0 = time.perf_counter()
    record = run_rve_test(rve, args.load, args.to)
    wall = time.perf_counter() - t0
    curve_path = out / f"rve_{args.load}.csv"
    fileio.write_curve_csv(curve_path, {
        "strain": record["strain"],
        "stress_MPa": record["stress"],
        "lateral_stress_MPa": record["lateral_stress"],
    })
    field_path = out / f"rve_{args.load}_crack_opening.vtk"
    fileio.write_meso_vtk(field_path, mesh, displacements=rve.system.u,
                          crack_opening=record["crack_opening"])
    manifest = RunManifest.create("run-rve", cfg, {"solve": wall},
                                  outputs=[str(curve_path), str(field_path)])
    manifest.write(out / "manifest.json")
    print(f"wrote {curve_path} (peak |stress| "
          f"{np.max(np.abs(record['stress'])):.3f} MPa)")
    return 0


def cmd_run_finescale(args):
    cfg = _load_config(args)
    if cfg.macro_lengths is None or cfg.loading_case is None:
        raise ConfigurationError("config needs 'macro' and 'loading' sections")
    seed = args.seed if args.seed is not None else cfg.seed
    out = _outdir(args)
    t0 = time.perf_counter()
    record = run_finescale_bending(
        cfg.mix, cfg.ldpm, cfg.macro_lengths, seed,
        platen_velocity=cfg.platen_velocity, total_time=cfg.total_time,
        surface_spacing=cfg.surface_spacing,
        output_every=cfg.output["interval_steps"])
    wall = time.perf_counter() - t0
    curve_path = out / "finescale_curve.csv"
    fileio.write_curve_csv(curve_path, {
        "time_s": record["time_s"],
        "deflection_mm": record["deflection_mm"],
        "force_N": record["force_N"],
        "kinetic_energy_Nmm": record["kinetic_energy_Nmm"],
        "internal_work_Nmm": record["internal_work_Nmm"],
    })
    field_path = out / "finescale_final.vtk"
    fileio.write_meso_vtk(field_path, record["mesh"],
                          displacements=record["system"].u,
                          crack_opening=record["system"].state.crack_opening)
    manifest = RunManifest.create("run-finescale", cfg, {"solve": wall},
                                  outputs=[str(curve_path), str(field_path)])
    manifest.seeds = [seed]
    manifest.write(out / "manifest.json")
    print(f"wrote {curve_path} (peak load {record['force_N'].max():.1f} N)")
    return 0


def cmd_calibrate_ottosen(args):
    cfg = _load_config(args)
    out = _outdir(args)
    mesh = fileio.read_meso_mesh(args.rve)
    rve = RveInstance(mesh, cfg.ldpm, cfg.mix.density)
    t0 = time.perf_counter()
    ec = effective_elastic_constants([rve])
    cal = calibrate_from_rve(rve)
    wall = time.perf_counter() - t0
    surface = cal["surface"]
    cal_path = out / "ottosen_calibration.yaml"
    with open(cal_path, "w") as fh:
        yaml.safe_dump({
            "f_t_MPa": float(cal["f_t"]),
            "f_c_MPa": float(cal["f_c"]),
            "f_b_MPa": float(cal["f_b"]),
            "c1_per_MPa": surface.c1,
            "c2_per_MPa": surface.c2,
            "c3_per_MPa2": surface.c3,
            "K": surface.shape_k,
            "youngs_MPa": ec.youngs,
            "poisson": ec.poisson,
        }, fh, sort_keys=False)
    for name in ("tension", "compression"):
        curve = cal[f"{name}_curve"]
        fileio.write_curve_csv(out / f"calibration_{name}.csv", {
            "strain": curve["strain"], "stress_MPa": curve["stress"]})
    manifest = RunManifest.create("calibrate-ottosen", cfg, {"solve": wall},
                                  outputs=[str(cal_path)])
    manifest.write(out / "manifest.json")
    print(f"f_t={cal['f_t']:.3f} f_c={cal['f_c']:.3f} f_b={cal['f_b']:.3f} MPa; "
          f"c1*fc={surface.c1 * cal['f_c']:.3f} c2*fc={surface.c2 * cal['f_c']:.3f} "
          f"c3*fc^2={surface.c3 * cal['f_c'] ** 2:.3f}")
    return 0


def cmd_run_multiscale(args):
    cfg = _load_config(args)
    if cfg.macro_lengths is None or cfg.loading_case is None:
        raise ConfigurationError("config needs 'macro' and 'loading' sections")
    seed = args.seed if args.seed is not None else cfg.seed
    out = _outdir(args)

    if args.calibration:
        with open(args.calibration) as fh:
            cal = yaml.safe_load(fh)
        surface = OttosenSurface.calibrate(cal["f_t_MPa"], cal["f_c_MPa"],
                                           cal["f_b_MPa"])
        elastic = ElasticityTensor(cal["youngs_MPa"], cal["poisson"])
        wall_cal = 0.0
    else:
        t0 = time.perf_counter()
        mesh = generate_mesh(cfg.mix, Box.cube(cfg.rve_size), cfg.seed,
                             periodic=True, surface_spacing=cfg.surface_spacing)
        rve = RveInstance(mesh, cfg.ldpm, cfg.mix.density)
        ec = effective_elastic_constants([rve])
        cal = calibrate_from_rve(rve)
        surface = cal["surface"]
        elastic = ElasticityTensor(ec.youngs, ec.poisson)
        wall_cal = time.perf_counter() - t0

    t0 = time.perf_counter()
    record = run_multiscale_bending(
        cfg.mix, cfg.ldpm, cfg.macro_lengths, cfg.macro_element_size,
        cfg.rve_size, elastic=elastic, surface=surface,
        platen_velocity=cfg.platen_velocity, total_time=cfg.total_time,
        run_seed=seed, surface_spacing=cfg.surface_spacing,
        output_every=cfg.output["interval_steps"])
    wall = time.perf_counter() - t0
    result = record["result"]

    curve_path = out / "multiscale_curve.csv"
    fileio.write_curve_csv(curve_path, {
        "time_s": record["time_s"],
        "deflection_mm": record["deflection_mm"],
        "force_N": record["force_N"],
    })
    log_path = out / "insertion_log.csv"
    with open(log_path, "w") as fh:
        fh.write("step,element,wall_time_s,s11_MPa,s22_MPa,s33_MPa\n")
        for ev in result.insertion_log.events:
            s = ev.trigger_stress
            fh.write(f"{ev.step},{ev.element},{ev.wall_time},"
                     f"{s[0, 0]},{s[1, 1]},{s[2, 2]}\n")
    macro_path = out / "multiscale_final.vtk"
    tags = [0 if m.kind == "elastic" else 1 for m in result.models]
    fileio.write_macro_vtk(macro_path, record["mesh"],
                           gamma=np.array([m.gamma for m in result.models]),
                           sigma=np.array([m.sigma for m in result.models]),
                           model_tag=tags)

    wall_times = dict(result.wall_phases)
    wall_times["calibration"] = wall_cal
    wall_times["total"] = wall
    manifest = RunManifest.create(
        "run-multiscale", cfg, wall_times,
        enriched_elements=result.insertion_log.count,
        enriched_fraction=result.enriched_fraction,
        outputs=[str(curve_path), str(log_path), str(macro_path)])
    manifest.seeds = [seed]
    manifest.write(out / "manifest.json")
    print(f"enriched {result.insertion_log.count}/{record['mesh'].n_elements} "
          f"elements ({result.enriched_fraction:.1%}); "
          f"peak load {record['force_N'].max():.1f} N")
    return 0


def cmd_report(args):
    manifest = RunManifest.read(Path(args.rundir) / "manifest.json")
    baseline = None
    if args.baseline:
        baseline = RunManifest.read(Path(args.baseline) / "manifest.json")
    rep = speedup_report(manifest, baseline)
    if rep["enriched_fraction"] is not None:
        print(f"enriched elements: {rep['enriched_elements']} "
              f"({rep['enriched_fraction']:.1%})")
    print(f"multiscale wall time: {rep['multiscale_wall_s']:.1f} s")
    if baseline is not None:
        print(f"fine-scale wall time: {rep['finescale_wall_s']:.1f} s")
        print(f"speedup: wall ratio {rep['wall_ratio']:.2f} "
              f"({rep['wall_ratio']:.0%} of the fine-scale time)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ldpmlab",
        description="Lattice discrete particle workbench: meso-structure "
                    "generation, RVE homogenization and adaptive two-scale "
                    "analysis (units: mm / N / MPa / tonne / s)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker count (env LDPMLAB_THREADS overrides)")
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("generate-rve", help="generate a periodic RVE mesh")
    common(p)
    p.add_argument("--size", type=float, default=None, help="RVE edge (mm)")
    p.add_argument("--mix", dest="config", help="alias for --config")
    p.set_defaults(func=cmd_generate_rve)

    p = sub.add_parser("run-rve", help="virtual test on an RVE mesh")
    common(p)
    p.add_argument("--mesh", required=True)
    p.add_argument("--load", required=True,
                   choices=("tension", "hydro", "confined",
                            "uniaxial-compression"))
    p.add_argument("--to", type=float, required=True, help="target strain")
    p.set_defaults(func=cmd_run_rve)

    p = sub.add_parser("run-finescale", help="full particle-model bending test")
    common(p)
    p.set_defaults(func=cmd_run_finescale)

    p = sub.add_parser("calibrate-ottosen",
                       help="failure surface from RVE virtual tests")
    common(p)
    p.add_argument("--rve", required=True, help="RVE mesh file")
    p.set_defaults(func=cmd_calibrate_ottosen)

    p = sub.add_parser("run-multiscale", help="adaptive two-scale bending test")
    common(p)
    p.add_argument("--calibration",
                   help="YAML from calibrate-ottosen (skips recalibration)")
    p.set_defaults(func=cmd_run_multiscale)

    p = sub.add_parser("report", help="summarize a finished run")
    p.add_argument("rundir")
    p.add_argument("--baseline", help="fine-scale twin run directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return USAGE_EXIT
    if hasattr(args, "threads"):
        resolve_threads(args.threads)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except LdpmError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_EXIT


if __name__ == "__main__":
    sys.exit(main())
