"""Adaptive two-scale driver: failure-surface triggered RVE insertion.

All macro elements start with the isotropic elastic law calibrated on
the RVE family.  At every macro step each still-elastic Gauss point is
checked against an Ottosen surface calibrated from three strength
states (uniaxial tension, uniaxial compression, equi-biaxial
compression); a point that reaches the surface is irreversibly
switched to a fresh particle RVE, pre-loaded to the element strain.
Everything inside the surface stays tensorial-elastic, so the cost of
the fine scale is paid only where the material actually leaves the
elastic regime.
"""

from __future__ import annotations

import math
import time as _time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, HandoffError
from .ldpm_solver import LdpmParams, PrescribedMotion
from .macro_fem import ElasticityTensor, GaussPointModel, MacroMesh, MacroSolver
from .mesostructure import Box, MixDesign, generate_mesh
from .rve_homogenizer import (RelaxSchedule, RveInstance, homogenize_stress,
                              relax_rve)


@dataclass(frozen=True)
class HaighWestergaard:
    """Hydrostatic length, deviatoric radius and Lode angle of a stress."""

    xi: float
    rho: float
    theta: float

    def __post_init__(self):
        if self.rho < 0.0 or not -1e-12 <= self.theta <= math.pi / 3 + 1e-12:
            raise ConfigurationError("invalid Haigh-Westergaard coordinates")


def haigh_westergaard(sigma) -> HaighWestergaard:
    """Invariant coordinates of a symmetric stress tensor.

    xi = I1/sqrt(3), rho = sqrt(2 J2); the Lode angle follows from
    cos(3 theta) = (3 sqrt(3)/2) J3 / J2^(3/2), clamped to [-1, 1],
    with theta = 0 for purely hydrostatic states (rho = 0).
    """
    sigma = np.asarray(sigma, dtype=float)
    i1 = float(np.trace(sigma))
    dev = sigma - i1 / 3.0 * np.eye(3)
    j2 = 0.5 * float(np.sum(dev * dev))
    j3 = float(np.linalg.det(dev))
    xi = i1 / math.sqrt(3.0)
    rho = math.sqrt(2.0 * j2)
    if rho < 1e-14 * max(1.0, abs(i1)):
        return HaighWestergaard(xi=xi, rho=max(rho, 0.0), theta=0.0)
    cos3t = 1.5 * math.sqrt(3.0) * j3 / j2 ** 1.5
    cos3t = min(1.0, max(-1.0, cos3t))
    theta = math.acos(cos3t) / 3.0
    return HaighWestergaard(xi=xi, rho=rho, theta=theta)


def r_theta(theta, shape_k):
    """Deviatoric shape function of the failure surface.

    Two-branch arccos form, continuous where cos(3 theta) crosses zero
    and positive for |K| <= 1.
    """
    if abs(shape_k) > 1.0:
        raise ConfigurationError(f"shape factor K = {shape_k} outside [-1, 1]")
    c3t = math.cos(3.0 * theta)
    if c3t >= 0.0:
        return math.cos(math.acos(shape_k * c3t) / 3.0)
    return math.cos(math.pi / 3.0 - math.acos(-shape_k * c3t) / 3.0)


@dataclass(frozen=True)
class OttosenSurface:
    """Multiaxial concrete failure surface f(xi, rho, theta) = 0.

    f = c1 xi + c2 rho r(theta) + c3 rho^2 - 1 with the shape factor K
    and the three strengths it was calibrated from.
    """

    c1: float
    c2: float
    c3: float
    shape_k: float
    f_t: float
    f_c: float
    f_b: float

    def evaluate(self, sigma) -> float:
        hw = haigh_westergaard(sigma)
        return (self.c1 * hw.xi + self.c2 * hw.rho * r_theta(hw.theta, self.shape_k)
                + self.c3 * hw.rho ** 2 - 1.0)

    def calibration_states(self):
        """(xi, rho, theta) of the three calibration stress states."""
        rt = math.sqrt(2.0 / 3.0)
        return (
            (self.f_t / math.sqrt(3.0), self.f_t * rt, 0.0),
            (-self.f_c / math.sqrt(3.0), self.f_c * rt, math.pi / 3.0),
            (-2.0 * self.f_b / math.sqrt(3.0), self.f_b * rt, 0.0),
        )

    def calibration_residuals(self):
        out = []
        for xi, rho, theta in self.calibration_states():
            out.append(self.c1 * xi + self.c2 * rho * r_theta(theta, self.shape_k)
                       + self.c3 * rho ** 2 - 1.0)
        return out

    @classmethod
    def calibrate(cls, f_t, f_c, f_b) -> "OttosenSurface":
        """Solve the 3x3 system through the three strength states."""
        if not 0.0 < f_t < f_c:
            raise ConfigurationError(f"need 0 < f_t < f_c, got ({f_t}, {f_c})")
        if f_b < f_c:
            raise ConfigurationError(f"need f_b >= f_c, got ({f_b}, {f_c})")
        shape_k = 1.0 - 6.8 * (f_t / f_c - 0.07) ** 2
        rt = math.sqrt(2.0 / 3.0)
        states = (
            (f_t / math.sqrt(3.0), f_t * rt, 0.0),
            (-f_c / math.sqrt(3.0), f_c * rt, math.pi / 3.0),
            (-2.0 * f_b / math.sqrt(3.0), f_b * rt, 0.0),
        )
        a = np.array([[xi, rho * r_theta(theta, shape_k), rho ** 2]
                      for xi, rho, theta in states])
        if abs(np.linalg.det(a)) < 1e-12 * np.abs(a).prod(axis=1).max():
            raise ConfigurationError("degenerate strengths: singular calibration")
        c = np.linalg.solve(a, np.ones(3))
        surface = cls(c1=float(c[0]), c2=float(c[1]), c3=float(c[2]),
                      shape_k=shape_k, f_t=f_t, f_c=f_c, f_b=f_b)
        worst = max(abs(r) for r in surface.calibration_residuals())
        if worst > 1e-6:
            raise ConfigurationError(
                f"calibration residual {worst:.3e} exceeds 1e-6")
        return surface


def check_insertion(sigma, surface: OttosenSurface, boundary_tol=1e-9) -> bool:
    """True when the stress state reaches or crosses the surface.

    The >= convention includes the boundary; `boundary_tol` absorbs
    round-off so the calibration states themselves trigger.
    """
    return surface.evaluate(sigma) >= -boundary_tol


@dataclass
class InsertionEvent:
    step: int
    element: int
    trigger_stress: np.ndarray
    wall_time: float


@dataclass
class InsertionLog:
    """Chronological, irreversible record of RVE insertions."""

    events: list = field(default_factory=list)

    def record(self, step, element, sigma):
        self.events.append(InsertionEvent(step=int(step), element=int(element),
                                          trigger_stress=np.asarray(sigma).copy(),
                                          wall_time=_time.perf_counter()))

    @property
    def count(self):
        return len(self.events)

    def elements(self):
        return [e.element for e in self.events]

    def replay_assignment(self, n_elements):
        """Element -> enriched flags reproduced from the log alone."""
        enriched = np.zeros(n_elements, dtype=bool)
        for e in self.events:
            enriched[e.element] = True
        return enriched


@dataclass
class RveTemplate:
    """Recipe for instantiating per-element RVE realizations."""

    mix: MixDesign
    params: LdpmParams
    size: float
    surface_spacing: float | None = None

    @property
    def volume(self):
        return self.size ** 3

    def element_seed(self, run_seed, element_id):
        return int(np.random.SeedSequence([int(run_seed), int(element_id)])
                   .generate_state(1)[0])

    def build(self, seed) -> RveInstance:
        mesh = generate_mesh(self.mix, Box.cube(self.size), seed,
                             periodic=True, surface_spacing=self.surface_spacing)
        return RveInstance(mesh, self.params, self.mix.density, seed=seed)


def insert_rve(gauss_point: GaussPointModel, rve: RveInstance, current_gamma,
               element_volume, *, schedule: RelaxSchedule | None = None,
               warn_tol=0.05, abort_tol=0.20):
    """Load a fresh RVE to the element strain and hand it over.

    The freshly generated RVE ramps its imposed strain from zero to
    `current_gamma`; its homogenized stress must agree with the elastic
    prediction at that strain within `warn_tol` (Frobenius), which is
    the accepted handoff approximation; beyond `abort_tol` the run
    aborts.  The gauss point switch is irreversible.
    """
    if gauss_point.kind != "elastic":
        raise ConfigurationError("gauss point already enriched")
    current_gamma = np.asarray(current_gamma, dtype=float)
    relax_rve(rve, current_gamma, schedule)
    sigma_h = homogenize_stress(rve).sigma
    sigma_el = gauss_point.elastic.apply(current_gamma)
    scale = float(np.linalg.norm(sigma_el))
    mismatch = 0.0 if scale == 0.0 else float(np.linalg.norm(sigma_h - sigma_el)) / scale
    if mismatch > abort_tol:
        raise HandoffError(
            f"handoff stress mismatch {mismatch:.1%} exceeds {abort_tol:.0%}")
    if mismatch > warn_tol:
        warnings.warn(f"RVE handoff mismatch {mismatch:.1%} above "
                      f"{warn_tol:.0%} consistency target", RuntimeWarning,
                      stacklevel=2)
    gauss_point.switch_to_rve(rve, element_volume)
    return mismatch


@dataclass
class TwoScaleResult:
    """Curves, insertion log and cost accounting of a two-scale run."""

    times: np.ndarray
    reactions: dict
    displacements: dict
    insertion_log: InsertionLog
    enriched_fraction: float
    handoff_mismatches: list
    wall_phases: dict
    n_steps: int
    models: list


def run_two_scale(macro_mesh: MacroMesh, surface: OttosenSurface,
                  template: RveTemplate, *, motions, total_time,
                  elastic: ElasticityTensor, density, run_seed=0,
                  damping=0.0, dt=None, hourglass_coef=0.05,
                  handoff_schedule: RelaxSchedule | None = None,
                  output_every=50, observer=None) -> TwoScaleResult:
    """Adaptive two-scale analysis of one loading program.

    Every Gauss point starts with `elastic` (the RVE-family effective
    law).  After each macro step the still-elastic points are screened
    with the calibrated surface; trigger points get a fresh RVE
    realization (seed hashed from element id and `run_seed`), ramped to
    the element strain and used as the constitutive source afterwards.
    """
    models = [GaussPointModel(elastic) for _ in range(macro_mesh.n_elements)]
    solver = MacroSolver(macro_mesh, models, density, damping=damping,
                         hourglass_coef=hourglass_coef)
    for motion in motions:
        solver.add_motion(motion)
    if dt is None:
        dt = solver.stable_dt()
    n_steps = int(math.ceil(total_time / dt))

    vol = solver.volumes
    if np.any(np.abs(vol - template.volume) > 1e-6 * template.volume):
        raise ConfigurationError(
            "RVE volume must match the macro element volume")

    log = InsertionLog()
    mismatches = []
    wall = {"elastic": 0.0, "rve": 0.0, "insertion": 0.0}
    times, rec_t = [], {m.name: [] for m in motions}
    rec_u = {m.name: [] for m in motions}

    for step in range(1, n_steps + 1):
        t0 = _time.perf_counter()
        solver.step(dt)
        t1 = _time.perf_counter()
        if any(m.kind == "homogenized" for m in models):
            wall["rve"] += t1 - t0
        else:
            wall["elastic"] += t1 - t0

        for e, model in enumerate(models):
            if model.kind != "elastic":
                continue
            if check_insertion(model.sigma, surface):
                t2 = _time.perf_counter()
                seed = template.element_seed(run_seed, e)
                rve = template.build(seed)
                mismatch = insert_rve(model, rve, model.gamma, float(vol[e]),
                                      schedule=handoff_schedule)
                mismatches.append((e, mismatch))
                log.record(step, e, model.sigma)
                wall["insertion"] += _time.perf_counter() - t2

        if step % output_every == 0 or step == n_steps:
            times.append(solver.time)
            for m in motions:
                rec_t[m.name].append(solver.reactions[m.name].copy())
                rec_u[m.name].append(solver.u[m.nodes].mean(axis=0))
            if observer is not None:
                observer(step, solver, models, log)

    return TwoScaleResult(
        times=np.asarray(times),
        reactions={k: np.asarray(v) for k, v in rec_t.items()},
        displacements={k: np.asarray(v) for k, v in rec_u.items()},
        insertion_log=log,
        enriched_fraction=log.count / macro_mesh.n_elements,
        handoff_mismatches=mismatches,
        wall_phases=wall,
        n_steps=n_steps,
        models=models,
    )
