"""Explicit macro-scale FEM on 8-node hexahedra, one integration point.

Gauss points carry either an isotropic elastic law or a particle RVE
as constitutive source; the solver only sees strain-in / stress-out.
Single-point integration requires hourglass stabilization, implemented
in viscous Flanagan-Belytschko form with an off switch for
single-element verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalInstabilityError
from .ldpm_solver import PrescribedMotion
from .rve_homogenizer import advance_rve, homogenize_stress

# natural coordinates of the standard hex node ordering
_XI = np.array([
    [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
], dtype=float)

# hourglass base vectors of the trilinear hex (4 zero-energy modes)
_HOURGLASS = np.array([
    [1, -1, 1, -1, 1, -1, 1, -1],
    [1, -1, -1, 1, -1, 1, 1, -1],
    [1, 1, -1, -1, -1, -1, 1, 1],
    [-1, 1, -1, 1, 1, -1, 1, -1],
], dtype=float)


@dataclass
class ElasticityTensor:
    """Isotropic elasticity acting on symmetric strain tensors."""

    youngs: float
    poisson: float

    def __post_init__(self):
        if self.youngs <= 0.0 or not 0.0 <= self.poisson < 0.5:
            raise ConfigurationError(
                f"need E > 0 and 0 <= nu < 0.5, got ({self.youngs}, {self.poisson})")

    @property
    def lame(self):
        e, nu = self.youngs, self.poisson
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = e / (2.0 * (1.0 + nu))
        return lam, mu

    def apply(self, gamma):
        lam, mu = self.lame
        gamma = np.asarray(gamma, dtype=float)
        return 2.0 * mu * gamma + lam * np.trace(gamma) * np.eye(3)

    def matrix(self):
        """6x6 operator on [g11, g22, g33, 2g23, 2g13, 2g12]."""
        lam, mu = self.lame
        d = np.zeros((6, 6))
        d[:3, :3] = lam
        d[np.arange(3), np.arange(3)] += 2.0 * mu
        d[np.arange(3, 6), np.arange(3, 6)] = mu
        return d

    def wave_speed(self, density):
        lam, mu = self.lame
        return math.sqrt((lam + 2.0 * mu) / density)


class GaussPointModel:
    """Constitutive source of one integration point (tagged union).

    Exactly one of the two variants is active: isotropic elastic, or a
    particle RVE whose homogenized stress is the element stress.  The
    switch is irreversible.
    """

    def __init__(self, elastic: ElasticityTensor):
        self.kind = "elastic"
        self.elastic = elastic
        self.rve = None
        self.gamma = np.zeros((3, 3))
        self.sigma = np.zeros((3, 3))

    def switch_to_rve(self, rve, element_volume, volume_tol=1e-6):
        if self.kind != "elastic":
            raise ConfigurationError("gauss point is already RVE-backed")
        if abs(rve.volume - element_volume) > volume_tol * element_volume:
            raise ConfigurationError(
                f"RVE volume {rve.volume} does not match element volume "
                f"{element_volume}")
        self.kind = "homogenized"
        self.rve = rve


@dataclass
class MacroMesh:
    """Hexahedral mesh with named node sets for supports and platens."""

    nodes: np.ndarray                 # (n_nodes, 3)
    hexes: np.ndarray                 # (n_elems, 8)
    element_size: float
    node_sets: dict = field(default_factory=dict)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.hexes.shape[0]


def make_box_mesh(lengths, element_size) -> MacroMesh:
    """Structured hex mesh of a box anchored at the origin.

    Node sets: xmin/xmax/ymin/ymax/zmin/zmax faces.  Every dimension
    must be an integer multiple of the element size.
    """
    lengths = np.asarray(lengths, dtype=float)
    counts = lengths / element_size
    n = np.rint(counts).astype(int)
    if np.any(np.abs(counts - n) > 1e-9) or np.any(n < 1):
        raise ConfigurationError(
            f"box {lengths} is not a multiple of element size {element_size}")
    nx, ny, nz = n
    xs = np.arange(nx + 1) * element_size
    ys = np.arange(ny + 1) * element_size
    zs = np.arange(nz + 1) * element_size
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    hexes = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                hexes.append([nid(i, j, k), nid(i + 1, j, k),
                              nid(i + 1, j + 1, k), nid(i, j + 1, k),
                              nid(i, j, k + 1), nid(i + 1, j, k + 1),
                              nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)])
    hexes = np.asarray(hexes, dtype=np.int64)

    tol = 1e-9 * max(lengths.max(), 1.0)
    sets = {
        "xmin": np.flatnonzero(np.abs(nodes[:, 0]) < tol),
        "xmax": np.flatnonzero(np.abs(nodes[:, 0] - lengths[0]) < tol),
        "ymin": np.flatnonzero(np.abs(nodes[:, 1]) < tol),
        "ymax": np.flatnonzero(np.abs(nodes[:, 1] - lengths[1]) < tol),
        "zmin": np.flatnonzero(np.abs(nodes[:, 2]) < tol),
        "zmax": np.flatnonzero(np.abs(nodes[:, 2] - lengths[2]) < tol),
    }
    return MacroMesh(nodes=nodes, hexes=hexes, element_size=float(element_size),
                     node_sets=sets)


def nodes_near(mesh: MacroMesh, *, x=None, y=None, z=None, tol=1e-6):
    """Node ids matching the given coordinate values (None = any)."""
    mask = np.ones(mesh.n_nodes, dtype=bool)
    for axis, val in enumerate((x, y, z)):
        if val is not None:
            mask &= np.abs(mesh.nodes[:, axis] - val) < tol
    return np.flatnonzero(mask)


def element_geometry(mesh: MacroMesh):
    """Centroid shape-function gradients (n_e, 8, 3) and volumes (n_e,)."""
    coords = mesh.nodes[mesh.hexes]                     # (E, 8, 3)
    d_nat = _XI / 8.0                                   # dN/dxi at the centroid
    jac = np.einsum("eak,ai->eki", coords, d_nat)       # (E, 3, 3)
    det = np.linalg.det(jac)
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise ConfigurationError(f"inverted element {bad}")
    jinv = np.linalg.inv(jac)
    grad = np.einsum("ai,eik->eak", d_nat, jinv)        # (E, 8, 3)
    return grad, 8.0 * det


def element_strain(element_coords, nodal_displacements):
    """Symmetric strain at the centroid of one hex (exact for affine fields)."""
    coords = np.asarray(element_coords, dtype=float)[None]
    mesh = MacroMesh(nodes=coords[0], hexes=np.arange(8, dtype=np.int64)[None],
                     element_size=1.0)
    grad, _ = element_geometry(mesh)
    h = np.einsum("ai,aj->ij", np.asarray(nodal_displacements, dtype=float),
                  grad[0])
    return 0.5 * (h + h.T)


def element_strains(mesh: MacroMesh, grad, u):
    """Centroid strains of all elements for nodal displacements `u`."""
    ue = u[mesh.hexes]
    h = np.einsum("eai,eaj->eij", ue, grad)
    return 0.5 * (h + np.transpose(h, (0, 2, 1)))


def internal_forces(grad_e, volume, sigma):
    """Nodal forces (8, 3) of one element from its centroid stress."""
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, atol=1e-9 * max(1.0, np.abs(sigma).max())):
        raise ConfigurationError("element stress must be symmetric")
    return volume * np.einsum("ij,aj->ai", sigma, grad_e)


def hourglass_shape_vectors(mesh: MacroMesh, grad):
    """Distortion-corrected hourglass shape vectors (n_e, 4, 8)."""
    coords = mesh.nodes[mesh.hexes]
    proj = np.einsum("ga,eak->egk", _HOURGLASS, coords)     # (E, 4, 3)
    gamma = _HOURGLASS[None] - np.einsum("egk,eak->ega", proj, grad)
    return gamma


class MacroSolver:
    """Central-difference integrator for a hex mesh with gauss models."""

    def __init__(self, mesh: MacroMesh, models, density, *,
                 damping=0.0, hourglass_coef=0.05, rve_substeps=None):
        if len(models) != mesh.n_elements:
            raise ConfigurationError("one gauss model per element required")
        self.mesh = mesh
        self.models = list(models)
        self.density = density
        self.damping = damping
        self.hourglass_coef = hourglass_coef
        self.rve_substeps = rve_substeps
        self.time = 0.0

        self.grad, self.volumes = element_geometry(mesh)
        self.hg_gamma = hourglass_shape_vectors(mesh, self.grad)
        self.mass = np.zeros(mesh.n_nodes)
        np.add.at(self.mass, mesh.hexes.ravel(),
                  np.repeat(density * self.volumes / 8.0, 8))

        n = mesh.n_nodes
        self.u = np.zeros((n, 3))
        self.v = np.zeros((n, 3))
        self.f_int = np.zeros((n, 3))
        self.motions: list[PrescribedMotion] = []
        self.reactions: dict[str, np.ndarray] = {}
        self.gamma = np.zeros((mesh.n_elements, 3, 3))
        self.sigma = np.zeros((mesh.n_elements, 3, 3))

        self.work_external = 0.0
        self.work_internal = 0.0
        self.work_hourglass = 0.0
        self.work_damping = 0.0
        self._energy_window = []
        self._g_prev = np.zeros((mesh.n_elements, 3, 3))

    # ------------------------------------------------------------------
    def elastic_wave_speed(self):
        els = [m.elastic for m in self.models if m.kind == "elastic"]
        if not els:
            els = [GaussPointModel(ElasticityTensor(30000.0, 0.2)).elastic]
        return max(e.wave_speed(self.density) for e in els)

    def stable_dt(self, safety=0.5):
        h = self.mesh.element_size
        return safety * h / self.elastic_wave_speed()

    def add_motion(self, motion: PrescribedMotion):
        self.motions.append(motion)
        self.reactions[motion.name] = np.zeros(3)

    # ------------------------------------------------------------------
    def evaluate_stresses(self, dt):
        """Update every gauss model to the current element strains."""
        self.gamma = element_strains(self.mesh, self.grad, self.u)
        elastic = [e for e, m in enumerate(self.models) if m.kind == "elastic"]
        if elastic:
            idx = np.asarray(elastic)
            lam_mu = np.array([self.models[e].elastic.lame for e in elastic])
            g = self.gamma[idx]
            tr = np.trace(g, axis1=1, axis2=2)
            self.sigma[idx] = (2.0 * lam_mu[:, 1, None, None] * g
                               + (lam_mu[:, 0] * tr)[:, None, None]
                               * np.eye(3)[None])
        for e, model in enumerate(self.models):
            model.gamma = self.gamma[e]
            if model.kind == "homogenized":
                n_sub = self.rve_substeps
                if n_sub is None:
                    n_sub = max(int(math.ceil(dt / model.rve.system.dt_stable)), 1)
                advance_rve(model.rve, self.gamma[e], n_sub)
                sig = homogenize_stress(model.rve).sigma
                self.sigma[e] = 0.5 * (sig + sig.T)
            model.sigma = self.sigma[e]

    def assemble_internal(self):
        f = np.zeros_like(self.f_int)
        fe = np.einsum("e,eij,eaj->eai", self.volumes, self.sigma, self.grad)
        np.add.at(f, self.mesh.hexes.ravel(), fe.reshape(-1, 3))
        return f

    def hourglass_forces(self):
        if self.hourglass_coef <= 0.0:
            return np.zeros_like(self.f_int)
        ve = self.v[self.mesh.hexes]                        # (E, 8, 3)
        rate = np.einsum("ega,eak->egk", self.hg_gamma, ve)  # (E, 4, 3)
        c = self.elastic_wave_speed()
        coef = self.hourglass_coef * self.density * c \
            * self.volumes ** (2.0 / 3.0) / 4.0
        fe = -coef[:, None, None] * np.einsum("ega,egk->eak", self.hg_gamma, rate)
        f = np.zeros_like(self.f_int)
        np.add.at(f, self.mesh.hexes.ravel(), fe.reshape(-1, 3))
        return f

    def step(self, dt):
        self.evaluate_stresses(dt)
        self.f_int = self.assemble_internal()
        f_hg = self.hourglass_forces()
        f_net = -self.f_int + f_hg

        if not np.all(np.isfinite(f_net)):
            bad = int(np.flatnonzero(~np.isfinite(f_net).all(axis=1))[0])
            raise NumericalInstabilityError(f"non-finite force at macro node {bad}")

        c = self.damping
        v_old = {m.name: self.v[m.nodes].copy() for m in self.motions}
        v_before = self.v.copy()
        self.v *= (1.0 - c * dt)
        self.v += dt * f_net / self.mass[:, None]
        for motion in self.motions:
            vel = motion.velocity_at(self.time)
            for k, on in enumerate(motion.dofs):
                if on:
                    self.v[motion.nodes, k] = vel[k]
        self.u += dt * self.v

        # reactions: implied external force on the driven dofs
        for motion in self.motions:
            nodes = motion.nodes
            dv = (self.v[nodes] - v_old[motion.name] * (1.0 - c * dt)) / dt
            r = dv * self.mass[nodes, None] - f_net[nodes]
            mask = np.asarray(motion.dofs, dtype=bool)
            self.reactions[motion.name] = (r * mask[None, :]).sum(axis=0)
            self.work_external += float(np.sum(
                (r * mask[None, :]) * self.v[nodes])) * dt

        d_gamma = element_strains(self.mesh, self.grad, self.u) - self._g_prev
        self.work_internal += float(np.einsum(
            "e,eij,eij->", self.volumes, self.sigma, d_gamma))
        self._g_prev += d_gamma
        self.work_hourglass += float(np.sum(-f_hg * self.v)) * dt
        self.work_damping += float(np.sum(
            c * self.mass[:, None] * v_before * self.v)) * dt
        self.time += dt

        # instability envelope: kinetic energy dwarfing all work done while
        # growing >1% per step for 100 consecutive steps
        ke = self.kinetic_energy()
        work_scale = abs(self.work_external) + abs(self.work_internal) + 1e-20
        self._energy_window.append((ke, work_scale))
        if len(self._energy_window) > 100:
            self._energy_window.pop(0)
            blown = all(k > 10.0 * w for k, w in self._energy_window)
            if blown and all(self._energy_window[i + 1][0]
                             > 1.01 * self._energy_window[i][0]
                             for i in range(len(self._energy_window) - 1)):
                raise NumericalInstabilityError(
                    "kinetic energy grew >1%/step for 100 macro steps while "
                    "exceeding 10x the total work; integration unstable")

    def kinetic_energy(self):
        return 0.5 * float(np.sum(self.mass[:, None] * self.v ** 2))
