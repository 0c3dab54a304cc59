"""Periodic RVE solves and discrete-to-continuum homogenization.

A representative volume element is a periodically generated particle
mesh whose boundary nodes come in translated groups (face pairs, edge
quadruples, one corner octuple).  The macroscopic strain acts on every
facet as an imposed strain offset; the fluctuation field solves the
per-particle equilibrium equations under master/slave periodic
constraints (slaves translate and rotate exactly like their masters).
Facet tractions are then volume-averaged into the macroscopic stress.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, MeshGenerationError, NonConvergenceError
from .ldpm_solver import LdpmParams, ParticleSystem
from .mesostructure import Box, FacetGeometry, MesoMesh


@dataclass
class PeriodicPairing:
    """Boundary node groups of a periodic box mesh.

    Every boundary node belongs to exactly one group; nodes in a group
    differ by translations of the box lattice.  The lexicographically
    smallest node of each group is its master.
    """

    face_pairs: np.ndarray        # (n_face, 2) [master, slave]
    edge_quads: np.ndarray        # (n_edge, 4) [master, s1, s2, s3]
    corner_octuple: np.ndarray    # (8,)
    tolerance: float
    master_of: np.ndarray         # (n_nodes,) full map, identity on masters

    @property
    def n_groups(self):
        return len(self.face_pairs) + len(self.edge_quads) + 1

    def groups(self):
        out = [list(p) for p in self.face_pairs]
        out += [list(q) for q in self.edge_quads]
        out.append(list(self.corner_octuple))
        return out


def build_periodic_pairs(mesh: MesoMesh, box: Box,
                         tolerance=1e-6) -> PeriodicPairing:
    """Group the boundary nodes of a periodically generated mesh.

    Nodes are classified by how many coordinates sit on the box
    boundary (1 = face, 2 = edge, 3 = corner) and matched across
    parallel faces/edges by their in-plane coordinates.  A boundary
    node without a counterpart raises MeshGenerationError naming it.
    """
    pos = mesh.positions
    n = mesh.n_nodes
    at_lo = np.abs(pos - box.lo) < tolerance
    at_hi = np.abs(pos - box.hi) < tolerance
    extreme = at_lo | at_hi
    n_extreme = extreme.sum(axis=1)

    master_of = np.arange(n, dtype=np.int64)

    def match(reference, candidates, coords):
        """Match each reference node to one candidate by `coords`."""
        if len(reference) != len(candidates):
            raise MeshGenerationError(
                f"unpaired boundary nodes: {len(reference)} vs {len(candidates)}")
        if len(reference) == 0:
            return np.empty(0, dtype=np.int64)
        tree = cKDTree(pos[candidates][:, coords])
        dist, idx = tree.query(pos[reference][:, coords])
        if np.any(dist > tolerance):
            bad = reference[int(np.argmax(dist))]
            raise MeshGenerationError(f"unpaired boundary node {bad}")
        picked = candidates[idx]
        if len(np.unique(picked)) != len(picked):
            raise MeshGenerationError("ambiguous periodic matching")
        return picked

    # faces: one extreme coordinate
    face_pairs = []
    for axis in range(3):
        on_axis_lo = np.flatnonzero((n_extreme == 1) & at_lo[:, axis])
        on_axis_hi = np.flatnonzero((n_extreme == 1) & at_hi[:, axis])
        coords = [a for a in range(3) if a != axis]
        slaves = match(on_axis_lo, on_axis_hi, coords)
        for m, s in zip(on_axis_lo, slaves):
            face_pairs.append((m, s))
            master_of[s] = m

    # edges: two extreme coordinates; master edge has both at the lo side
    edge_quads = []
    for axis in range(3):
        o1, o2 = [a for a in range(3) if a != axis]
        is_edge = (n_extreme == 2) & ~extreme[:, axis].astype(bool) \
            if False else (n_extreme == 2) & extreme[:, o1] & extreme[:, o2]
        base = np.flatnonzero(is_edge & at_lo[:, o1] & at_lo[:, o2])
        quads = [base]
        for s1, s2 in ((1, 0), (0, 1), (1, 1)):
            sel1 = at_hi[:, o1] if s1 else at_lo[:, o1]
            sel2 = at_hi[:, o2] if s2 else at_lo[:, o2]
            cand = np.flatnonzero(is_edge & sel1 & sel2)
            quads.append(match(base, cand, [axis]))
        for row in zip(*quads):
            edge_quads.append(row)
            for s in row[1:]:
                master_of[s] = row[0]

    corners = np.flatnonzero(n_extreme == 3)
    if len(corners) != 8:
        raise MeshGenerationError(f"expected 8 corner nodes, found {len(corners)}")
    order = np.lexsort((pos[corners, 2], pos[corners, 1], pos[corners, 0]))
    corners = corners[order]
    for s in corners[1:]:
        master_of[s] = corners[0]

    # paired nodes must differ by exact lattice translations
    lattice = np.diag(box.size)
    for group in [p for p in face_pairs] + [q for q in edge_quads] + [tuple(corners)]:
        m = group[0]
        for s in group[1:]:
            d = pos[s] - pos[m]
            steps = np.rint(d / box.size)
            if np.max(np.abs(d - steps * box.size)) > tolerance:
                raise MeshGenerationError(
                    f"nodes {m} and {s} are not lattice translates")

    return PeriodicPairing(
        face_pairs=np.asarray(face_pairs, dtype=np.int64).reshape(-1, 2),
        edge_quads=np.asarray(edge_quads, dtype=np.int64).reshape(-1, 4),
        corner_octuple=np.asarray(corners, dtype=np.int64),
        tolerance=tolerance,
        master_of=master_of,
    )


def project_macro_strain(gamma, facet: FacetGeometry):
    """Project a symmetric macro strain onto one facet.

    eps_c_alpha = n_i gamma_ij e_alpha_j with n the facet normal (the
    edge direction); returns (eps_c_N, eps_c_M, eps_c_L).
    """
    gamma = np.asarray(gamma, dtype=float)
    if not np.allclose(gamma, gamma.T, atol=1e-12 * max(1.0, abs(gamma).max())):
        raise ConfigurationError("macro strain tensor must be symmetric")
    n = facet.e_n
    return (float(n @ gamma @ facet.e_n),
            float(n @ gamma @ facet.e_m),
            float(n @ gamma @ facet.e_l))


def project_macro_strain_mesh(gamma, mesh: MesoMesh):
    """Vectorized facet projection of a symmetric macro strain."""
    gamma = np.asarray(gamma, dtype=float)
    gn = mesh.facet_e_n @ gamma
    out = np.empty((mesh.n_facets, 3))
    out[:, 0] = np.einsum("fk,fk->f", gn, mesh.facet_e_n)
    out[:, 1] = np.einsum("fk,fk->f", gn, mesh.facet_e_m)
    out[:, 2] = np.einsum("fk,fk->f", gn, mesh.facet_e_l)
    return out


@dataclass
class MacroStress:
    """Homogenized stress and (diagnostic) moment stress."""

    sigma: np.ndarray
    mu: np.ndarray

    def asymmetry(self):
        sym = 0.5 * (self.sigma + self.sigma.T)
        asym = 0.5 * (self.sigma - self.sigma.T)
        ns = np.linalg.norm(sym)
        return float(np.linalg.norm(asym) / ns) if ns > 0.0 else 0.0


@dataclass
class RelaxSchedule:
    """Sub-incrementation and convergence control for RVE solves.

    The stopping residual is the scaled force |f| / (E0 * A_mean); the
    effective target is the spec bound `tolerance` tightened by
    `relative` times the out-of-balance residual right after the strain
    increment is applied, so small elastic load steps are resolved to
    the same relative accuracy as large ones.
    """

    increments_per_1e4: int = 10          # sub-increments per |d_gamma| = 1e-4
    tolerance: float = 1e-6               # residual |f| / (E0 * A_mean)
    relative: float = 1e-4                # fraction of the initial imbalance
    floor: float = 1e-13
    max_steps: int = 400_000              # per sub-increment
    check_every: int = 100
    min_steps: int = 0

    def target(self, initial_residual):
        tight = max(self.relative * initial_residual, self.floor)
        return min(self.tolerance, tight)


class RveInstance:
    """A periodic particle mesh bound to a solver and its applied strain."""

    def __init__(self, mesh: MesoMesh, params: LdpmParams, density, *,
                 pairing: PeriodicPairing | None = None, damping=None,
                 seed=None):
        if pairing is None:
            pairing = build_periodic_pairs(mesh, mesh.box)
        self.mesh = mesh
        self.params = params
        self.density = density
        self.pairing = pairing
        self.seed = seed
        self.system = ParticleSystem(mesh, params, density,
                                     master_of=pairing.master_of)
        if damping is None:
            damping = 2.0 * self.fundamental_frequency()
        self.system.damping = damping
        self.gamma = np.zeros((3, 3))
        self.volume = mesh.box.volume

    @property
    def v0(self):
        return self.volume

    def fundamental_frequency(self):
        """Lowest structural circular frequency estimate (axial mode)."""
        e_est = self.params.E0 * (2.0 + 3.0 * self.params.alpha) \
            / (4.0 + self.params.alpha)
        c_wave = math.sqrt(e_est / self.density)
        return math.pi * c_wave / float(self.mesh.box.size.max())

    def set_strain(self, gamma):
        gamma = np.asarray(gamma, dtype=float)
        self.gamma = 0.5 * (gamma + gamma.T)
        self.system.set_eigenstrain(project_macro_strain_mesh(self.gamma, self.mesh))

    def reset(self):
        """Back to the virgin state (zero strain, zero history)."""
        sys_ = self.system
        for arr in (sys_.u, sys_.theta, sys_.v, sys_.omega, sys_.force, sys_.moment):
            arr[:] = 0.0
        sys_.state = type(sys_.state)(self.mesh.n_facets)
        sys_.time = 0.0
        self.gamma = np.zeros((3, 3))
        sys_.set_eigenstrain(np.zeros((self.mesh.n_facets, 3)))

    def copy_state(self):
        sys_ = self.system
        return (sys_.u.copy(), sys_.theta.copy(), sys_.v.copy(),
                sys_.omega.copy(), sys_.state.copy(), self.gamma.copy())

    def restore_state(self, snap):
        u, theta, v, omega, state, gamma = snap
        sys_ = self.system
        sys_.u[:] = u
        sys_.theta[:] = theta
        sys_.v[:] = v
        sys_.omega[:] = omega
        sys_.state = state.copy()
        self.set_strain(gamma)


def relax_rve(rve: RveInstance, gamma_target,
              schedule: RelaxSchedule | None = None) -> RveInstance:
    """Drive the RVE to equilibrium at `gamma_target`.

    The strain ramps from the currently applied value in sub-increments
    (default 10 per 1e-4 of the largest component change); each
    sub-increment runs damped central-difference steps until the worst
    per-particle residual drops below the schedule tolerance.
    """
    if schedule is None:
        schedule = RelaxSchedule()
    gamma_target = np.asarray(gamma_target, dtype=float)
    d_gamma = gamma_target - rve.gamma
    span = float(np.abs(d_gamma).max())
    n_sub = max(1, int(math.ceil(span / 1e-4 * schedule.increments_per_1e4)))
    dt = rve.system.dt_stable
    start = rve.gamma.copy()

    for inc in range(1, n_sub + 1):
        rve.set_strain(start + d_gamma * (inc / n_sub))
        rve.system.compute_forces()
        target = schedule.target(rve.system.residual())
        steps = 0
        while True:
            for _ in range(schedule.check_every):
                rve.system.step(dt)
            steps += schedule.check_every
            res = rve.system.residual()
            if res < target and steps >= schedule.min_steps:
                break
            if steps >= schedule.max_steps:
                raise NonConvergenceError(
                    f"RVE relaxation stalled at increment {inc}/{n_sub}: "
                    f"residual {res:.3e} after {steps} steps (target {target:.1e})",
                    worst_residual=res)
    return rve


def advance_rve(rve: RveInstance, gamma_target, n_steps) -> float:
    """Track `gamma_target` with a fixed number of damped steps.

    Used by the two-scale driver, where the RVE follows the (slow)
    macro loading in physical time instead of converging at every macro
    step; returns the residual after the last step.
    """
    rve.set_strain(gamma_target)
    dt = rve.system.dt_stable
    for _ in range(n_steps):
        rve.system.step(dt)
    return rve.system.residual()


def homogenize_stress(rve: RveInstance) -> MacroStress:
    """Volume-averaged stress (and diagnostic moment stress).

    sigma_ij = (1/V0) sum_facets A r t_alpha n_i e_alpha_j, which is
    the per-particle double sum with its 1/2 factor folded in (every
    facet has exactly two owners).  The moment stress uses moment arms
    about the box center and is never fed back to the macro problem.
    """
    mesh = rve.mesh
    t = rve.system.state.t
    w = mesh.facet_area * mesh.facet_r
    n = mesh.facet_e_n
    sigma = (np.einsum("f,fi,fj->ij", w * t[:, 0], n, mesh.facet_e_n)
             + np.einsum("f,fi,fj->ij", w * t[:, 1], n, mesh.facet_e_m)
             + np.einsum("f,fi,fj->ij", w * t[:, 2], n, mesh.facet_e_l)) / rve.volume
    center = 0.5 * (mesh.box.lo + mesh.box.hi)
    y = mesh.facet_centroid - center
    mu = (np.einsum("f,fi,fj->ij", w * t[:, 0], n, np.cross(y, mesh.facet_e_n))
          + np.einsum("f,fi,fj->ij", w * t[:, 1], n, np.cross(y, mesh.facet_e_m))
          + np.einsum("f,fi,fj->ij", w * t[:, 2], n, np.cross(y, mesh.facet_e_l))
          ) / rve.volume
    return MacroStress(sigma=sigma, mu=mu)


@dataclass
class ElasticConstants:
    """Least-squares isotropic fit over a family of realizations."""

    youngs: float
    poisson: float
    youngs_std: float
    poisson_std: float
    lame_lambda: float
    lame_mu: float
    per_realization: list = field(default_factory=list)


def fit_lame_constants(strain_stress_pairs):
    """Fit (lambda, mu) of sigma = 2 mu gamma + lambda tr(gamma) I."""
    rows, rhs = [], []
    for gamma, sigma in strain_stress_pairs:
        gamma = np.asarray(gamma, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        tr = np.trace(gamma)
        for i in range(3):
            for j in range(i, 3):
                rows.append([tr * (1.0 if i == j else 0.0),
                             2.0 * 0.5 * (gamma[i, j] + gamma[j, i])])
                rhs.append(0.5 * (sigma[i, j] + sigma[j, i]))
    a = np.asarray(rows)
    b = np.asarray(rhs)
    if np.linalg.matrix_rank(a) < 2:
        raise ConfigurationError(
            "elastic load cases are linearly dependent; cannot identify "
            "two Lame constants")
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    lam, mu = float(sol[0]), float(sol[1])
    return lam, mu


def elastic_constants_single(rve: RveInstance, strain=1e-5,
                             schedule: RelaxSchedule | None = None,
                             load_cases=None):
    """(E, nu, lambda, mu) of one realization from >= 2 load cases."""
    if load_cases is None:
        load_cases = [np.eye(3) * strain,
                      np.diag([strain, 0.0, 0.0])]
    pairs = []
    for gamma in load_cases:
        rve.reset()
        relax_rve(rve, gamma, schedule)
        pairs.append((gamma, homogenize_stress(rve).sigma))
    rve.reset()
    lam, mu = fit_lame_constants(pairs)
    e = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
    nu = lam / (2.0 * (lam + mu))
    return e, nu, lam, mu


def effective_elastic_constants(rve_family, strain=1e-5,
                                schedule: RelaxSchedule | None = None,
                                load_cases=None) -> ElasticConstants:
    """Homogenized E and nu (mean and std-dev over realizations)."""
    per = [elastic_constants_single(rve, strain, schedule, load_cases)
           for rve in rve_family]
    es = np.array([p[0] for p in per])
    nus = np.array([p[1] for p in per])
    lams = np.array([p[2] for p in per])
    mus = np.array([p[3] for p in per])
    return ElasticConstants(
        youngs=float(es.mean()), poisson=float(nus.mean()),
        youngs_std=float(es.std(ddof=1)) if len(per) > 1 else 0.0,
        poisson_std=float(nus.std(ddof=1)) if len(per) > 1 else 0.0,
        lame_lambda=float(lams.mean()), lame_mu=float(mus.mean()),
        per_realization=per,
    )


_LOAD_CASES = ("tension", "hydro", "confined", "uniaxial-compression")


def run_rve_test(rve: RveInstance, case: str, to_strain: float, *,
                 n_outputs=120, ramp_periods=None, feedback_gain=0.3,
                 feedback_every=25):
    """Quasi-static virtual test on one RVE, continuous slow ramp.

    `case` is one of tension / hydro / confined / uniaxial-compression.
    Uniaxial-stress cases (tension, uniaxial-compression) regulate the
    lateral normal strains so the lateral homogenized stresses stay
    near zero (mixed strain/stress control); confined is pure uniaxial
    strain and hydro is an isotropic strain ramp.  The ramp time scales
    with the strain magnitude to keep the loading rate quasi-static.
    Returns a record with strain/stress curves; the final state is
    left on the instance.
    """
    if case not in _LOAD_CASES:
        raise ConfigurationError(
            f"unknown load case {case!r}; expected one of {_LOAD_CASES}")
    sign = 1.0 if case == "tension" else -1.0
    signed = sign * abs(to_strain)
    if ramp_periods is None:
        ramp_periods = max(40.0, 60.0 * abs(to_strain) / 1e-3)

    period = 2.0 * math.pi / rve.fundamental_frequency()
    dt = rve.system.dt_stable
    total_steps = max(int(ramp_periods * period / dt), 10 * n_outputs)
    out_every = max(total_steps // n_outputs, 1)
    uniaxial_stress = case in ("tension", "uniaxial-compression")
    e_est = rve.params.E0 * (2.0 + 3.0 * rve.params.alpha) / (4.0 + rve.params.alpha)

    # unit projections so the per-step eigenstrain update is a scale-add
    p_axial = project_macro_strain_mesh(np.diag([1.0, 0.0, 0.0]), rve.mesh)
    p_lateral = project_macro_strain_mesh(np.diag([0.0, 1.0, 1.0]), rve.mesh)
    p_hydro = project_macro_strain_mesh(np.eye(3), rve.mesh)
    eps_c = rve.system.eps_c

    lateral = 0.0
    strains, stresses, laterals = [], [], []
    for step in range(1, total_steps + 1):
        s = signed * step / total_steps
        if case == "hydro":
            np.multiply(p_hydro, s, out=eps_c)
            rve.gamma = np.eye(3) * s
        elif case == "confined":
            np.multiply(p_axial, s, out=eps_c)
            rve.gamma = np.diag([s, 0.0, 0.0])
        else:
            np.multiply(p_axial, s, out=eps_c)
            eps_c += lateral * p_lateral
            rve.gamma = np.diag([s, lateral, lateral])
        rve.system.step(dt)
        if uniaxial_stress and step % feedback_every == 0:
            sig = homogenize_stress(rve).sigma
            lat = 0.5 * (sig[1, 1] + sig[2, 2])
            lateral -= feedback_gain * lat / e_est
        if step % out_every == 0 or step == total_steps:
            sig = homogenize_stress(rve).sigma
            strains.append(s)
            stresses.append(sig[0, 0] if case != "hydro" else np.trace(sig) / 3.0)
            laterals.append(0.5 * (sig[1, 1] + sig[2, 2]))
    return {
        "case": case,
        "strain": np.asarray(strains),
        "stress": np.asarray(stresses),
        "lateral_stress": np.asarray(laterals),
        "crack_opening": rve.system.state.crack_opening.copy(),
    }
