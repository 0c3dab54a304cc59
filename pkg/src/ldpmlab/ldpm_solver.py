"""Explicit dynamics for lattice discrete particle systems.

Particles are rigid; all nonlinearity lives on the facets.  The facet
strain follows from rigid-body kinematics of the two particles sharing
it, the vectorial constitutive laws (fracture, pore collapse, friction)
return the facet traction, and particle forces/moments are assembled
facet by facet.  Time integration is central difference with
mass-proportional damping so quasi-static paths can be traced by slow
loading or dynamic relaxation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError, NumericalInstabilityError
from .mesostructure import FacetGeometry, MesoMesh, cell_mass_properties


@dataclass(frozen=True)
class LdpmParams:
    """Facet-level constitutive parameters (MPa / mm units).

    E0 is the effective normal modulus, alpha the shear/normal coupling
    (E_T = alpha * E0).  The meso shear strength is sigma_s = r_st *
    sigma_t.  l_t is the tensile characteristic length, equivalent to a
    meso fracture energy G_t = l_t * sigma_t^2 / (2 E0); the softening
    modulus of a facet with edge length r is 2 E0 / (l_t / r - 1), so
    every facet must satisfy l_t / r > 1.

    Sign conventions follow tan(omega) = eps_N / (sqrt(alpha) * eps_T):
    pure tension is omega = pi/2, pure shear omega = 0.
    """

    E0: float
    alpha: float
    sigma_t: float
    r_st: float
    l_t: float
    n_t: float
    k_t: float = 1.0
    sigma_c0: float = 150.0
    H_c0: float = 24000.0
    H_c1: float = 6000.0
    kappa_c0: float = 4.0
    kappa_c1: float = 1.0
    kappa_c2: float = 5.0
    kappa_c3: float = 0.1
    E_d: float = 120000.0
    mu_0: float = 0.4
    mu_inf: float = 0.0
    sigma_N0: float = 600.0

    def __post_init__(self):
        if self.E0 <= 0.0 or self.sigma_t <= 0.0 or self.l_t <= 0.0:
            raise ConfigurationError("E0, sigma_t and l_t must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigurationError("alpha must lie in (0, 1]")
        if self.sigma_c0 <= 0.0 or self.E_d <= 0.0:
            raise ConfigurationError("compressive parameters must be positive")

    @property
    def sigma_s(self):
        return self.r_st * self.sigma_t

    @property
    def E_T(self):
        return self.alpha * self.E0

    @property
    def G_t(self):
        return self.l_t * self.sigma_t ** 2 / (2.0 * self.E0)

    @classmethod
    def reference_concrete(cls):
        """Parameter set used throughout the RVE studies."""
        return cls(E0=60000.0, alpha=0.25, sigma_t=3.45, r_st=2.6, l_t=500.0,
                   n_t=0.4, k_t=1.0, sigma_c0=150.0, H_c0=0.4 * 60000.0,
                   H_c1=0.1 * 60000.0, kappa_c0=4.0, kappa_c1=1.0, kappa_c2=5.0,
                   kappa_c3=0.1, E_d=2.0 * 60000.0, mu_0=0.4, mu_inf=0.0,
                   sigma_N0=600.0)

    def softening_modulus(self, r):
        """Facet softening modulus H_t; requires l_t / r > 1."""
        r = np.asarray(r, dtype=float)
        ratio = self.l_t / r
        if np.any(ratio <= 1.0):
            worst = float(r.max())
            raise ConfigurationError(
                f"l_t/r <= 1 for some facet (l_t={self.l_t}, max r={worst:.3g}); "
                "softening modulus undefined"
            )
        return 2.0 * self.E0 / (ratio - 1.0)


@dataclass
class ParticleState:
    """Rigid-particle degrees of freedom and lumped mass properties."""

    u: np.ndarray = field(default_factory=lambda: np.zeros(3))
    theta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f: np.ndarray = field(default_factory=lambda: np.zeros(3))
    m: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = 1.0
    inertia: np.ndarray = field(default_factory=lambda: np.eye(3))


class FacetState:
    """Structure-of-arrays history for a set of facets."""

    __slots__ = ("eps", "t", "eps_max_n", "eps_max_t", "eps_p", "eps_v",
                 "compacted", "crack_opening", "work", "dissipated")

    def __init__(self, n_facets):
        self.eps = np.zeros((n_facets, 3))
        self.t = np.zeros((n_facets, 3))
        self.eps_max_n = np.zeros(n_facets)
        self.eps_max_t = np.zeros(n_facets)
        self.eps_p = np.zeros((n_facets, 2))
        self.eps_v = np.zeros(n_facets)
        self.compacted = np.zeros(n_facets, dtype=np.bool_)
        self.crack_opening = np.zeros(n_facets)
        self.work = np.zeros(n_facets)
        self.dissipated = np.zeros(n_facets)

    @property
    def n_facets(self):
        return self.eps.shape[0]

    def copy(self):
        out = FacetState(self.n_facets)
        for name in self.__slots__:
            getattr(out, name)[:] = getattr(self, name)
        return out


def facet_strain(state_i: ParticleState, state_j: ParticleState,
                 geom: FacetGeometry):
    """Facet strain components from the kinematics of the two particles.

    eps_alpha = (u_j + theta_j x c_j - u_i - theta_i x c_i) . e_alpha / r
    """
    jump = (state_j.u + np.cross(state_j.theta, geom.c_j)
            - state_i.u - np.cross(state_i.theta, geom.c_i))
    return (float(np.dot(jump, geom.e_n)) / geom.r,
            float(np.dot(jump, geom.e_m)) / geom.r,
            float(np.dot(jump, geom.e_l)) / geom.r)


def tension_fracture_update(state: FacetState, trial_eps, params: LdpmParams,
                            geom_r) -> FacetState:
    """Fracture law (eps_N >= 0) applied to every facet of `state`."""
    trial_eps = np.atleast_2d(np.asarray(trial_eps, dtype=float))
    h_t = params.softening_modulus(geom_r) * np.ones(state.n_facets)
    kernels.tension_fracture_batch(state, trial_eps, params, h_t)
    return state


def compression_update(state: FacetState, trial_eps_n, eps_v,
                       params: LdpmParams) -> FacetState:
    """Pore-collapse law (eps_N < 0) applied to every facet of `state`."""
    trial = np.atleast_1d(np.asarray(trial_eps_n, dtype=float))
    vol = np.broadcast_to(np.asarray(eps_v, dtype=float), trial.shape)
    kernels.compression_batch(state, trial, vol, params)
    return state


def shear_friction_update(state: FacetState, trial_eps_m, trial_eps_l, t_n,
                          params: LdpmParams) -> FacetState:
    """Frictional shear law (compression) applied to every facet."""
    em = np.atleast_1d(np.asarray(trial_eps_m, dtype=float))
    el = np.atleast_1d(np.asarray(trial_eps_l, dtype=float))
    tn = np.broadcast_to(np.asarray(t_n, dtype=float), em.shape)
    kernels.friction_batch(state, em, el, tn, params)
    return state


def assemble_particle_forces(mesh: MesoMesh, tractions, body_force=None):
    """Nodal forces and moments from facet tractions.

    Facet ij adds A * t to particle i and -A * t to particle j; the
    moment arms are the node-to-centroid vectors.  `body_force` is an
    acceleration-free force density (N/mm^3) applied through the cell
    volumes.
    """
    t = np.asarray(tractions, dtype=float)
    f_vec = mesh.facet_area[:, None] * (
        t[:, 0:1] * mesh.facet_e_n + t[:, 1:2] * mesh.facet_e_m
        + t[:, 2:3] * mesh.facet_e_l)
    force = np.zeros((mesh.n_nodes, 3))
    moment = np.zeros((mesh.n_nodes, 3))
    m_i = np.cross(mesh.facet_c_i, f_vec)
    m_j = np.cross(mesh.facet_c_j, -f_vec)
    for k in range(3):
        force[:, k] = (np.bincount(mesh.facet_i, weights=f_vec[:, k],
                                   minlength=mesh.n_nodes)
                       - np.bincount(mesh.facet_j, weights=f_vec[:, k],
                                     minlength=mesh.n_nodes))
        moment[:, k] = (np.bincount(mesh.facet_i, weights=m_i[:, k],
                                    minlength=mesh.n_nodes)
                        + np.bincount(mesh.facet_j, weights=m_j[:, k],
                                      minlength=mesh.n_nodes))
    if body_force is not None:
        force += mesh.cell_volumes[:, None] * np.asarray(body_force, dtype=float)
    return force, moment


def central_difference_step(u, theta, v, omega, force, moment, mass,
                            inertia_inv, dt, damping=0.0):
    """One damped central-difference update (arrays modified in place).

    v_new = v * (1 - c dt) + dt f / m, u_new = u + dt v_new, and the
    analogous update for rotations through the inverse inertia.
    """
    if not (np.all(np.isfinite(force)) and np.all(np.isfinite(moment))):
        bad = int(np.flatnonzero(~np.isfinite(force).all(axis=1)
                                 | ~np.isfinite(moment).all(axis=1))[0])
        raise NumericalInstabilityError(f"non-finite load on particle {bad}")
    v *= (1.0 - damping * dt)
    v += dt * force / mass[:, None]
    u += dt * v
    omega *= (1.0 - damping * dt)
    omega += dt * np.einsum("nij,nj->ni", inertia_inv, moment)
    theta += dt * omega


def stable_dt(mesh: MesoMesh, params: LdpmParams, mass, safety=0.5):
    """Critical time step: safety * min over facets sqrt(m_min / (E0 A / r))."""
    m_min = np.minimum(mass[mesh.facet_i], mass[mesh.facet_j])
    stiffness = params.E0 * mesh.facet_area / mesh.facet_r
    return float(safety * np.min(np.sqrt(m_min / stiffness)))


@dataclass
class PrescribedMotion:
    """Velocity-controlled node set (a loading platen or support).

    `velocity` is either a constant (3,) vector or a callable t ->
    (3,); `dofs` masks which translational components are driven.
    """

    name: str
    nodes: np.ndarray
    velocity: object
    dofs: tuple = (True, True, True)

    def velocity_at(self, t):
        v = self.velocity(t) if callable(self.velocity) else self.velocity
        return np.asarray(v, dtype=float)


class ParticleSystem:
    """Explicit solver state for one particle mesh.

    Handles optional master/slave DOF reduction (periodic RVEs), facet
    eigenstrain offsets, prescribed-velocity node sets and telemetry.
    Rotational inertia is floored so that the translational stability
    bound of `stable_dt` governs the coupled system.
    """

    def __init__(self, mesh: MesoMesh, params: LdpmParams, density, *,
                 master_of=None, damping=0.0, inertia_floor=True):
        self.mesh = mesh
        self.params = params
        self.density = density
        self.damping = damping
        self.time = 0.0

        self.h_t = params.softening_modulus(mesh.facet_r)
        self.mass, inertia = cell_mass_properties(mesh, density)
        if master_of is None:
            master_of = np.arange(mesh.n_nodes, dtype=np.int64)
        self.master_of = np.asarray(master_of, dtype=np.int64)
        self.is_master = self.master_of == np.arange(mesh.n_nodes)

        # lump slave masses and inertias into their masters
        self.mass_eff = np.bincount(self.master_of, weights=self.mass,
                                    minlength=mesh.n_nodes)
        self.mass_eff[~self.is_master] = self.mass[~self.is_master]
        inertia_eff = np.zeros_like(inertia)
        np.add.at(inertia_eff, self.master_of, inertia)

        if inertia_floor:
            # floor the rotational inertia so that rotational facet modes
            # cannot be stiffer than the translational bound
            k_rot = np.zeros(mesh.n_nodes)
            k_n = params.E0 * mesh.facet_area / mesh.facet_r
            arm_i = np.einsum("fk,fk->f", mesh.facet_c_i, mesh.facet_c_i)
            arm_j = np.einsum("fk,fk->f", mesh.facet_c_j, mesh.facet_c_j)
            np.add.at(k_rot, mesh.facet_i, k_n * arm_i)
            np.add.at(k_rot, mesh.facet_j, k_n * arm_j)
            k_rot_m = np.bincount(self.master_of, weights=k_rot,
                                  minlength=mesh.n_nodes)
            k_tr = np.zeros(mesh.n_nodes)
            np.add.at(k_tr, mesh.facet_i, k_n)
            np.add.at(k_tr, mesh.facet_j, k_n)
            k_tr_m = np.bincount(self.master_of, weights=k_tr,
                                 minlength=mesh.n_nodes)
            with np.errstate(divide="ignore", invalid="ignore"):
                floor = np.where(k_tr_m > 0.0,
                                 self.mass_eff * k_rot_m / np.maximum(k_tr_m, 1e-300),
                                 0.0)
            eye = np.eye(3)[None]
            eigs = np.linalg.eigvalsh(inertia_eff[self.is_master])
            need = floor[self.is_master] > eigs[:, 0]
            idx = np.flatnonzero(self.is_master)[need]
            inertia_eff[idx] += floor[idx, None, None] * eye

        self.inertia_inv = np.zeros_like(inertia_eff)
        masters = np.flatnonzero(self.is_master)
        self.inertia_inv[masters] = np.linalg.inv(inertia_eff[masters])

        n = mesh.n_nodes
        self.u = np.zeros((n, 3))
        self.theta = np.zeros((n, 3))
        self.v = np.zeros((n, 3))
        self.omega = np.zeros((n, 3))
        self.force = np.zeros((n, 3))
        self.moment = np.zeros((n, 3))
        self.state = FacetState(mesh.n_facets)
        self.eps_c = np.zeros((mesh.n_facets, 3))
        self.body_force = None
        self.motions: list[PrescribedMotion] = []
        self.reactions: dict[str, np.ndarray] = {}

        # fixed-order incidence for deterministic assembly
        nf = mesh.n_facets
        nodes = np.concatenate([mesh.facet_i, mesh.facet_j])
        slots = np.concatenate([np.arange(nf), np.arange(nf)])
        signs = np.concatenate([np.ones(nf, dtype=np.int8),
                                -np.ones(nf, dtype=np.int8)])
        order = np.argsort(nodes, kind="stable")
        self._inc_slot = slots[order].astype(np.int64)
        self._inc_sign = signs[order]
        counts = np.bincount(nodes, minlength=n)
        self._inc_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

        self._f_vec = np.zeros((nf, 3))
        self._m_i = np.zeros((nf, 3))
        self._m_j = np.zeros((nf, 3))
        self._eps_v_tet = np.zeros(mesh.n_tets)
        self._scratch = np.zeros((n, 3))
        self._dt_stable = stable_dt(mesh, params, self.mass_eff)

        # free translational dof mask (constrained dofs excluded from residuals)
        self.free_dof = np.ones((n, 3), dtype=bool)
        self._area_mean = float(mesh.facet_area.mean())
        self._r_mean = float(mesh.facet_r.mean())

    # ------------------------------------------------------------------
    @property
    def dt_stable(self):
        return self._dt_stable

    def add_motion(self, motion: PrescribedMotion):
        self.motions.append(motion)
        for k, on in enumerate(motion.dofs):
            if on:
                self.free_dof[motion.nodes, k] = False
        self.reactions[motion.name] = np.zeros(3)

    def set_eigenstrain(self, eps_c):
        self.eps_c[:] = eps_c

    def compute_forces(self):
        """Facet update + assembly; fills self.force / self.moment."""
        mesh, p = self.mesh, self.params
        kernels.tet_volumetric_strain(mesh.positions, self.u, mesh.tets,
                                      mesh.tet_volumes, self._eps_v_tet)
        kernels.facet_system_step(
            self.u, self.theta, mesh.facet_i, mesh.facet_j,
            mesh.facet_e_n, mesh.facet_e_m, mesh.facet_e_l,
            mesh.facet_r, mesh.facet_area, mesh.facet_c_i, mesh.facet_c_j,
            mesh.facet_tet, self._eps_v_tet, self.eps_c,
            self.state.eps, self.state.t, self.state.eps_max_n,
            self.state.eps_max_t, self.state.eps_p, self.state.compacted,
            self.state.crack_opening, self.state.work, self.state.dissipated,
            self.state.eps_v,
            p.E0, p.alpha, p.sigma_t, p.r_st, p.n_t, p.k_t, self.h_t,
            p.sigma_c0, p.H_c0, p.H_c1, p.kappa_c0, p.kappa_c1, p.kappa_c2,
            p.kappa_c3, p.E_d, p.mu_0, p.mu_inf, p.sigma_N0,
            self._f_vec, self._m_i, self._m_j)
        kernels.gather_node_loads(self._inc_ptr, self._inc_slot, self._inc_sign,
                                  self._f_vec, self._m_i, self._m_j,
                                  self.force, self.moment)
        if self.body_force is not None:
            self.force += self.mesh.cell_volumes[:, None] * self.body_force
        if not self.is_master.all():
            self._scratch[:] = self.force
            kernels.reduce_to_masters(self.master_of, self._scratch, self.force)
            self._scratch[:] = self.moment
            kernels.reduce_to_masters(self.master_of, self._scratch, self.moment)
            self.force[~self.is_master] = 0.0
            self.moment[~self.is_master] = 0.0

    def step(self, dt):
        """Advance one central-difference step (forces recomputed)."""
        self.compute_forces()
        c = self.damping
        v_old = None
        if self.motions:
            v_old = {m.name: self.v[m.nodes].copy() for m in self.motions}
        bad = kernels.update_velocities(self.v, self.omega, self.force,
                                        self.moment, self.mass_eff,
                                        self.inertia_inv, c, dt)
        if bad >= 0:
            raise NumericalInstabilityError(
                f"non-finite load on particle {bad} at t={self.time:.3e}")
        for motion in self.motions:
            vel = motion.velocity_at(self.time)
            for k, on in enumerate(motion.dofs):
                if on:
                    self.v[motion.nodes, k] = vel[k]
        kernels.advance_positions(self.u, self.theta, self.v, self.omega,
                                  self.master_of, dt)
        # implied external force on driven nodes (the reaction)
        for motion in self.motions:
            nodes = motion.nodes
            dv = (self.v[nodes] - v_old[motion.name] * (1.0 - c * dt)) / dt
            r = dv * self.mass_eff[nodes, None] - self.force[nodes]
            mask = np.asarray(motion.dofs, dtype=bool)
            self.reactions[motion.name] = (r * mask[None, :]).sum(axis=0)
        self.time += dt

    def run(self, n_steps, dt):
        for _ in range(n_steps):
            self.step(dt)

    # ------------------------------------------------------------------
    def residual(self):
        """Worst scaled equilibrium residual over free master dofs."""
        scale_f = self.params.E0 * self._area_mean
        scale_m = scale_f * self._r_mean
        mask = self.free_dof & self.is_master[:, None]
        rf = np.abs(self.force[mask]).max(initial=0.0) / scale_f
        rm = np.abs(self.moment[self.is_master]).max(initial=0.0) / scale_m
        return max(rf, rm)

    def kinetic_energy(self):
        masters = np.flatnonzero(self.is_master)
        ke = 0.5 * float(np.sum(self.mass_eff[masters]
                                * np.sum(self.v[masters] ** 2, axis=1)))
        om = self.omega[masters]
        i_om = np.linalg.solve(self.inertia_inv[masters], om[:, :, None])[:, :, 0]
        return ke + 0.5 * float(np.sum(om * i_om))

    def internal_work(self):
        return float(self.state.work.sum())

    def dissipated_energy(self):
        return float(self.state.dissipated.sum())
