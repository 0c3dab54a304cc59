"""Desk-scale experiment harnesses shared by the CLI and the tests.

Bending specimens are loaded through velocity-controlled platens with a
smooth startup ramp and mass-proportional damping tuned to the first
bending mode, so the explicit runs trace the quasi-static response
(kinetic energy stays a small fraction of the internal work).
"""

from __future__ import annotations

import math
import time as _time

import numpy as np

from .adaptive_coupler import (OttosenSurface, RveTemplate, TwoScaleResult,
                               run_two_scale)
from .errors import ConfigurationError
from .ldpm_solver import LdpmParams, ParticleSystem, PrescribedMotion
from .macro_fem import ElasticityTensor, make_box_mesh, nodes_near
from .mesostructure import Box, MesoMesh, MixDesign, generate_mesh
from .rve_homogenizer import RveInstance, run_rve_test


def smooth_ramp_velocity(v_max, t_ramp):
    """Half-cosine startup to v_max over t_ramp, constant afterwards."""
    v_max = np.asarray(v_max, dtype=float)

    def velocity(t):
        if t >= t_ramp:
            return v_max
        return v_max * 0.5 * (1.0 - math.cos(math.pi * t / t_ramp))

    return velocity


def bending_fixture_positions(length, load_offset=25.0, support_inset=25.0):
    """x of the two supports and two loading lines (four point bending)."""
    supports = (support_inset, length - support_inset)
    loads = (length / 2.0 - load_offset, length / 2.0 + load_offset)
    return supports, loads


def first_bending_frequency(length_span, height, width, youngs, density):
    """Simply supported beam, first mode (rad/s)."""
    inertia = width * height ** 3 / 12.0
    area = width * height
    return (math.pi / length_span) ** 2 * math.sqrt(
        youngs * inertia / (density * area))


def run_finescale_bending(mix: MixDesign, params: LdpmParams, lengths, seed, *,
                          platen_velocity, total_time, surface_spacing=None,
                          line_halfwidth=None, output_every=500,
                          damping=None, observer=None):
    """Full particle-model bending test of a prism; returns curves.

    The prism spans x in [0, L] with height along y and width along z.
    Supports are bottom node lines near both ends (vertical rollers,
    one end pinned); two top node lines at +-25 mm from midspan move
    down at `platen_velocity` after a smooth startup.
    """
    length, height, width = lengths
    box = Box(np.zeros(3), np.array([length, height, width]))
    mesh = generate_mesh(mix, box, seed, periodic=False,
                         surface_spacing=surface_spacing)
    system = ParticleSystem(mesh, params, mix.density)

    if line_halfwidth is None:
        line_halfwidth = 0.55 * mix.d_max
    supports, loads = bending_fixture_positions(length)

    def line_nodes(x_line, y_val):
        sel = (np.abs(mesh.positions[:, 1] - y_val) < 1e-6) \
            & (np.abs(mesh.positions[:, 0] - x_line) <= line_halfwidth)
        ids = np.flatnonzero(sel)
        if len(ids) == 0:
            raise ConfigurationError(
                f"no surface nodes near x={x_line}, y={y_val}")
        return ids

    sup_a = line_nodes(supports[0], 0.0)
    sup_b = line_nodes(supports[1], 0.0)
    load_nodes = np.concatenate([line_nodes(loads[0], height),
                                 line_nodes(loads[1], height)])

    e_est = params.E0 * (2.0 + 3.0 * params.alpha) / (4.0 + params.alpha)
    omega1 = first_bending_frequency(supports[1] - supports[0], height, width,
                                     e_est, mix.density)
    system.damping = 2.0 * omega1 if damping is None else damping
    t_ramp = 0.15 * total_time
    system.add_motion(PrescribedMotion("support_pin", sup_a, np.zeros(3),
                                       dofs=(True, True, True)))
    system.add_motion(PrescribedMotion("support_roller", sup_b, np.zeros(3),
                                       dofs=(False, True, True)))
    system.add_motion(PrescribedMotion(
        "platen", load_nodes,
        smooth_ramp_velocity(np.array([0.0, -abs(platen_velocity), 0.0]), t_ramp),
        dofs=(False, True, False)))

    dt = system.dt_stable
    n_steps = int(math.ceil(total_time / dt))
    times, forces, deflections, kes, works = [], [], [], [], []
    for step in range(1, n_steps + 1):
        system.step(dt)
        if step % output_every == 0 or step == n_steps:
            times.append(system.time)
            forces.append(-system.reactions["platen"][1])
            deflections.append(-float(system.u[load_nodes, 1].mean()))
            kes.append(system.kinetic_energy())
            works.append(system.internal_work())
            if observer is not None:
                observer(step, system)
    return {
        "mesh": mesh,
        "system": system,
        "time_s": np.asarray(times),
        "force_N": np.asarray(forces),
        "deflection_mm": np.asarray(deflections),
        "kinetic_energy_Nmm": np.asarray(kes),
        "internal_work_Nmm": np.asarray(works),
        "n_steps": n_steps,
    }


def run_multiscale_bending(mix: MixDesign, params: LdpmParams, lengths,
                           element_size, rve_size, *, elastic: ElasticityTensor,
                           surface: OttosenSurface, platen_velocity, total_time,
                           run_seed=0, surface_spacing=None, output_every=20,
                           handoff_schedule=None, observer=None) -> dict:
    """Adaptive two-scale bending twin of `run_finescale_bending`."""
    length, height, width = lengths
    mesh = make_box_mesh([length, height, width], element_size)
    supports, loads = bending_fixture_positions(length)

    sup_a = nodes_near(mesh, x=supports[0], y=0.0)
    sup_b = nodes_near(mesh, x=supports[1], y=0.0)
    load_nodes = np.concatenate([nodes_near(mesh, x=loads[0], y=height),
                                 nodes_near(mesh, x=loads[1], y=height)])
    if min(len(sup_a), len(sup_b), len(load_nodes)) == 0:
        raise ConfigurationError("bending fixture lines miss the macro grid")

    omega1 = first_bending_frequency(supports[1] - supports[0], height, width,
                                     elastic.youngs, mix.density)
    t_ramp = 0.15 * total_time
    motions = [
        PrescribedMotion("support_pin", sup_a, np.zeros(3),
                         dofs=(True, True, True)),
        PrescribedMotion("support_roller", sup_b, np.zeros(3),
                         dofs=(False, True, True)),
        PrescribedMotion(
            "platen", load_nodes,
            smooth_ramp_velocity(np.array([0.0, -abs(platen_velocity), 0.0]),
                                 t_ramp),
            dofs=(False, True, False)),
    ]
    template = RveTemplate(mix=mix, params=params, size=rve_size,
                           surface_spacing=surface_spacing)
    result = run_two_scale(
        mesh, surface, template, motions=motions, total_time=total_time,
        elastic=elastic, density=mix.density, run_seed=run_seed,
        damping=2.0 * omega1, output_every=output_every,
        handoff_schedule=handoff_schedule, observer=observer)

    force = -result.reactions["platen"][:, 1]
    deflection = -result.displacements["platen"][:, 1]
    return {
        "mesh": mesh,
        "result": result,
        "time_s": result.times,
        "force_N": force,
        "deflection_mm": deflection,
    }


def elastic_limit_from_curve(strain, stress, departure=0.05, fit_fraction=0.35):
    """Stress at which the response departs `departure` from linearity.

    A line (with intercept, absorbing any constant quasi-static lag) is
    fit to the early part of the curve; the limit is interpolated where
    the secant-to-fit ratio first drops below 1 - departure.
    """
    strain = np.abs(np.asarray(strain, dtype=float))
    stress = np.abs(np.asarray(stress, dtype=float))
    n_fit = max(int(len(strain) * fit_fraction), 3)
    a = np.vstack([strain[:n_fit], np.ones(n_fit)]).T
    slope, icpt = np.linalg.lstsq(a, stress[:n_fit], rcond=None)[0]
    if slope <= 0.0:
        raise ConfigurationError("non-positive initial slope in virtual test")
    predicted = slope * strain + icpt
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(predicted > 0, stress / predicted, 1.0)
    below = np.flatnonzero(ratio < 1.0 - departure)
    if len(below) == 0:
        raise ConfigurationError(
            "virtual test never departs from linearity; extend the ramp")
    k = below[0]
    if k == 0:
        return float(stress[0])
    # linear interpolation in the ratio between the bracketing outputs
    r0, r1 = ratio[k - 1], ratio[k]
    w = (1.0 - departure - r0) / (r1 - r0)
    return float(stress[k - 1] + w * (stress[k] - stress[k - 1]))


def calibrate_from_rve(rve: RveInstance, *, biaxial_ratio=1.1,
                       tension_to=4e-4, compression_to=1.5e-3,
                       departure=0.05) -> dict:
    """Ottosen surface from the elastic limits of RVE virtual tests.

    f_t and f_c are the tensile/compressive elastic-limit stresses at
    `departure` secant drop; f_b defaults to 1.1 f_c.  Returns the
    surface plus the raw curves.
    """
    rve.reset()
    ten = run_rve_test(rve, "tension", tension_to)
    f_t = elastic_limit_from_curve(ten["strain"], ten["stress"], departure)
    rve.reset()
    comp = run_rve_test(rve, "uniaxial-compression", compression_to)
    f_c = elastic_limit_from_curve(comp["strain"], comp["stress"], departure)
    rve.reset()
    f_b = biaxial_ratio * f_c
    surface = OttosenSurface.calibrate(f_t, f_c, f_b)
    return {"surface": surface, "f_t": f_t, "f_c": f_c, "f_b": f_b,
            "tension_curve": ten, "compression_curve": comp}


def speedup_report(multiscale_manifest: dict, finescale_manifest: dict | None):
    """Enriched fraction and wall-time ratio versus a fine-scale twin."""
    out = {
        "enriched_elements": multiscale_manifest.get("enriched_elements"),
        "enriched_fraction": multiscale_manifest.get("enriched_fraction"),
    }
    multi_wall = sum(multiscale_manifest.get("wall_times_s", {}).values())
    out["multiscale_wall_s"] = multi_wall
    if finescale_manifest is not None:
        fine_wall = sum(finescale_manifest.get("wall_times_s", {}).values())
        out["finescale_wall_s"] = fine_wall
        out["wall_ratio"] = multi_wall / fine_wall if fine_wall > 0 else None
    return out
