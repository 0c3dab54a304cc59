"""Meso-structure generation for lattice discrete particle meshes.

The geometry pipeline is: sample aggregate diameters from a truncated
Fuller sieve curve, pack them as non-overlapping spheres, sprinkle
zero-radius nodes on the external surfaces, tetrahedralize all node
centers, and tessellate every tetrahedron into twelve triangular facets
(two per edge).  Facets are projected onto the plane orthogonal to the
edge connecting their two particles, so the facet normal ``e_n``
coincides with the edge direction; this keeps the facet-dyad density
identity ``sum(A * r * (e_n x e_n)) = 3 * V`` exact and removes
normal/shear coupling for uniform strain fields.

Units are mm / N / MPa / tonne / s throughout the package.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import Delaunay

from .errors import ConfigurationError, MeshGenerationError, PackingError

# specific gravities used to convert a mix design into volume fractions
SG_CEMENT = 3.15
SG_AGGREGATE = 2.65
SG_WATER = 1.00

# dense random packing limit for spheres; above this the try-and-reject
# placement cannot terminate
MAX_PACKING_FRACTION = 0.63

_MAX_PLACEMENT_TRIES = 10_000

# seed-stream tags so each generation stage draws from an independent,
# reproducible stream
_STREAM_SAMPLE = 1
_STREAM_PACK = 2
_STREAM_SURFACE = 3
_STREAM_PERTURB = 4

# local tet topology: vertex pairs per edge, vertex triples per face,
# and the two faces adjacent to each edge
_TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
_TET_FACES = ((0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3))
_EDGE_FACES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
_FACE_EDGES = ((0, 1, 3), (0, 2, 4), (1, 2, 5), (3, 4, 5))


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, lo/hi corners in mm."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))
        if not np.all(self.hi > self.lo):
            raise ConfigurationError(f"degenerate box: lo={self.lo}, hi={self.hi}")

    @classmethod
    def cube(cls, size, origin=(0.0, 0.0, 0.0)):
        origin = np.asarray(origin, dtype=float)
        return cls(origin, origin + size)

    @property
    def size(self):
        return self.hi - self.lo

    @property
    def volume(self):
        return float(np.prod(self.size))

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.size))


@dataclass(frozen=True)
class MixDesign:
    """Concrete mix design driving the aggregate sampling.

    d_min/d_max are the minimum/maximum spherical aggregate diameters in
    mm, cement_content is kg/m^3, density is the bulk mass density in
    tonne/mm^3 used for lumped particle masses.
    """

    d_min: float
    d_max: float
    cement_content: float
    water_cement_ratio: float
    aggregate_cement_ratio: float
    fuller_exponent: float
    density: float = 2.4e-9

    def __post_init__(self):
        if not (0.0 < self.d_min <= self.d_max):
            raise ConfigurationError(
                f"need 0 < d_min <= d_max, got ({self.d_min}, {self.d_max})"
            )
        if self.fuller_exponent <= 0.0:
            raise ConfigurationError("fuller_exponent must be > 0")
        for name in ("cement_content", "water_cement_ratio",
                     "aggregate_cement_ratio", "density"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(f"{name} must be > 0")

    def aggregate_volume_fraction(self):
        """Total aggregate volume per unit concrete volume."""
        v_cement = self.cement_content / (1000.0 * SG_CEMENT)
        v_water = self.water_cement_ratio * self.cement_content / (1000.0 * SG_WATER)
        v_agg = self.aggregate_cement_ratio * self.cement_content / (1000.0 * SG_AGGREGATE)
        total = v_cement + v_water + v_agg
        if total > 1.0:
            raise ConfigurationError(
                f"mix volume fractions sum to {total:.3f} > 1; check the mix design"
            )
        return v_agg

    def simulated_volume_fraction(self):
        """Volume fraction of aggregate coarser than d_min (the part that
        is resolved as discrete spheres)."""
        if self.d_min == self.d_max:
            passing_d_min = 0.0
        else:
            passing_d_min = (self.d_min / self.d_max) ** self.fuller_exponent
        return self.aggregate_volume_fraction() * (1.0 - passing_d_min)

    def sieve_cdf(self, d):
        """Truncated Fuller curve F(d) restricted to [d_min, d_max]."""
        d = np.asarray(d, dtype=float)
        nf = self.fuller_exponent
        lo, hi = self.d_min ** nf, self.d_max ** nf
        if hi == lo:
            return np.where(d >= self.d_max, 1.0, 0.0)
        return np.clip((d ** nf - lo) / (hi - lo), 0.0, 1.0)


@dataclass(frozen=True)
class ParticleNode:
    """A sphere center (radius > 0) or a boundary node (radius == 0)."""

    id: int
    position: np.ndarray
    radius: float
    is_surface: bool = False

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.radius < 0.0:
            raise ConfigurationError(f"node {self.id}: negative radius")


@dataclass(frozen=True)
class FacetGeometry:
    """One triangular facet shared by particles i and j.

    The frame (e_n, e_m, e_l) is orthonormal with e_n along the edge
    x_j - x_i, `area` is the triangle area projected onto the plane
    orthogonal to e_n, `r` the edge length, and c_i/c_j the vectors from
    each node to the (unprojected) facet centroid.
    """

    particle_i: int
    particle_j: int
    area: float
    e_n: np.ndarray
    e_m: np.ndarray
    e_l: np.ndarray
    r: float
    centroid: np.ndarray
    c_i: np.ndarray
    c_j: np.ndarray
    tet_id: int = -1

    def validate(self, tol=1e-9):
        for a, b in ((self.e_n, self.e_m), (self.e_n, self.e_l), (self.e_m, self.e_l)):
            if abs(float(np.dot(a, b))) > tol:
                raise MeshGenerationError("facet frame not orthogonal")
        for a in (self.e_n, self.e_m, self.e_l):
            if abs(float(np.linalg.norm(a)) - 1.0) > tol:
                raise MeshGenerationError("facet frame not unit")
        if self.area <= 0.0 or self.r <= 0.0:
            raise MeshGenerationError("facet with non-positive area or edge length")
        if float(np.dot(self.e_n, self.c_i - self.c_j)) <= 0.0:
            raise MeshGenerationError("facet normal not oriented from i to j")


@dataclass
class MesoMesh:
    """Structure-of-arrays container for a tessellated particle system."""

    positions: np.ndarray          # (n_nodes, 3)
    radii: np.ndarray              # (n_nodes,)
    is_surface: np.ndarray         # (n_nodes,) bool
    tets: np.ndarray               # (n_tets, 4) int
    facet_i: np.ndarray            # (n_facets,) int
    facet_j: np.ndarray            # (n_facets,) int
    facet_area: np.ndarray         # (n_facets,)
    facet_e_n: np.ndarray          # (n_facets, 3)
    facet_e_m: np.ndarray          # (n_facets, 3)
    facet_e_l: np.ndarray          # (n_facets, 3)
    facet_r: np.ndarray            # (n_facets,)
    facet_centroid: np.ndarray     # (n_facets, 3)
    facet_c_i: np.ndarray          # (n_facets, 3)
    facet_c_j: np.ndarray          # (n_facets, 3)
    facet_tet: np.ndarray          # (n_facets,) int
    cell_volumes: np.ndarray       # (n_nodes,)
    tet_volumes: np.ndarray        # (n_tets,)
    box: Box

    @property
    def n_nodes(self):
        return self.positions.shape[0]

    @property
    def n_tets(self):
        return self.tets.shape[0]

    @property
    def n_facets(self):
        return self.facet_i.shape[0]

    def node(self, i) -> ParticleNode:
        return ParticleNode(i, self.positions[i].copy(), float(self.radii[i]),
                            bool(self.is_surface[i]))

    def facet(self, k) -> FacetGeometry:
        return FacetGeometry(
            particle_i=int(self.facet_i[k]),
            particle_j=int(self.facet_j[k]),
            area=float(self.facet_area[k]),
            e_n=self.facet_e_n[k].copy(),
            e_m=self.facet_e_m[k].copy(),
            e_l=self.facet_e_l[k].copy(),
            r=float(self.facet_r[k]),
            centroid=self.facet_centroid[k].copy(),
            c_i=self.facet_c_i[k].copy(),
            c_j=self.facet_c_j[k].copy(),
            tet_id=int(self.facet_tet[k]),
        )

    def facets(self):
        return [self.facet(k) for k in range(self.n_facets)]

    def validate(self, volume_tol=5e-3, density_tol=0.02):
        """Check the partition-of-volume and facet-density invariants."""
        vol_err = abs(self.cell_volumes.sum() - self.box.volume) / self.box.volume
        if vol_err > volume_tol:
            raise MeshGenerationError(
                f"cell volumes cover {1 - vol_err:.4f} of the domain (tol {volume_tol})"
            )
        density = float(np.sum(self.facet_area * self.facet_r)) / (3.0 * self.box.volume)
        if abs(density - 1.0) > density_tol:
            raise MeshGenerationError(
                f"facet density check sum(A*r)/(3V) = {density:.4f} (tol {density_tol})"
            )
        dots = np.einsum("fk,fk->f", self.facet_e_n,
                         self.positions[self.facet_j] - self.positions[self.facet_i])
        if np.any(dots <= 0.0):
            raise MeshGenerationError("facet normals not oriented i -> j")
        return True


def sample_aggregates(mix: MixDesign, volume: float, seed: int) -> np.ndarray:
    """Sample sphere diameters from the truncated Fuller curve.

    Draws by inverse-CDF of the sieve curve restricted to
    [d_min, d_max] until the summed sphere volume reaches the simulated
    aggregate fraction of `volume`; the overshoot is below one particle
    volume.  Returns the diameters sorted descending (largest placed
    first when packing).
    """
    if volume <= 0.0:
        raise ConfigurationError("volume must be > 0")
    frac = mix.simulated_volume_fraction()
    if frac <= 0.0:
        raise ConfigurationError("simulated aggregate fraction is <= 0")
    if frac >= MAX_PACKING_FRACTION:
        raise ConfigurationError(
            f"simulated aggregate fraction {frac:.3f} exceeds the packable limit "
            f"{MAX_PACKING_FRACTION}"
        )
    budget = frac * volume
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_SAMPLE]))
    nf = mix.fuller_exponent
    lo, hi = mix.d_min ** nf, mix.d_max ** nf

    diameters = []
    total = 0.0
    while total < budget:
        u = rng.random()
        d = mix.d_min if hi == lo else (lo + u * (hi - lo)) ** (1.0 / nf)
        diameters.append(d)
        total += math.pi / 6.0 * d ** 3
    out = np.sort(np.asarray(diameters))[::-1]
    return out


def pack_particles(diameters, box: Box, seed: int,
                   wall_clearance=0.0) -> list[ParticleNode]:
    """Place spheres in `box` by try-and-reject, largest first.

    Spheres must not overlap each other and must lie fully inside the
    box (plus an optional extra `wall_clearance`).  A sphere that
    cannot be placed after 10^4 consecutive rejections raises
    PackingError naming it.
    """
    diameters = np.asarray(diameters, dtype=float)
    if diameters.size and np.any(np.diff(diameters) > 1e-12):
        raise ConfigurationError("diameters must be sorted descending")

    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_PACK]))
    radii = diameters / 2.0
    cell = float(diameters.max()) if diameters.size else 1.0
    grid: dict[tuple, list[int]] = {}
    placed_pos = np.empty((diameters.size, 3))
    placed_rad = np.empty(diameters.size)

    def cell_of(p):
        return tuple(np.floor((p - box.lo) / cell).astype(int))

    for k, r in enumerate(radii):
        lo = box.lo + r + wall_clearance
        hi = box.hi - r - wall_clearance
        if np.any(hi <= lo):
            raise PackingError(
                f"sphere {k} (d={2 * r:.3g} mm) does not fit in the box"
            )
        for attempt in range(_MAX_PLACEMENT_TRIES):
            p = lo + rng.random(3) * (hi - lo)
            ci, cj, ck = cell_of(p)
            ok = True
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    for dk in (-1, 0, 1):
                        for idx in grid.get((ci + di, cj + dj, ck + dk), ()):
                            gap = np.linalg.norm(p - placed_pos[idx]) \
                                - (r + placed_rad[idx])
                            if gap < 0.0:
                                ok = False
                                break
                        if not ok:
                            break
                    if not ok:
                        break
                if not ok:
                    break
            if ok:
                placed_pos[k] = p
                placed_rad[k] = r
                grid.setdefault((ci, cj, ck), []).append(k)
                break
        else:
            raise PackingError(
                f"sphere {k} (d={2 * r:.3g} mm) rejected "
                f"{_MAX_PLACEMENT_TRIES} times; packing too dense"
            )

    return [ParticleNode(k, placed_pos[k].copy(), float(placed_rad[k]), False)
            for k in range(diameters.size)]


def _jittered_line(length, spacing, rng, jitter=0.3):
    """Interior points of a segment at roughly `spacing`, jittered."""
    n = max(int(round(length / spacing)) - 1, 0)
    if n == 0:
        return np.empty(0)
    base = (np.arange(1, n + 1) / (n + 1)) * length
    step = length / (n + 1)
    return base + rng.uniform(-jitter, jitter, size=n) * step


def _jittered_grid(lu, lv, spacing, rng, jitter=0.3):
    """Interior points of an lu x lv rectangle at roughly `spacing`."""
    nu = max(int(round(lu / spacing)), 1)
    nv = max(int(round(lv / spacing)), 1)
    us = (np.arange(nu) + 0.5) / nu * lu
    vs = (np.arange(nv) + 0.5) / nv * lv
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    pts = np.column_stack([uu.ravel(), vv.ravel()])
    pts[:, 0] += rng.uniform(-jitter, jitter, size=len(pts)) * (lu / nu)
    pts[:, 1] += rng.uniform(-jitter, jitter, size=len(pts)) * (lv / nv)
    return pts


def surface_node_positions(box: Box, spacing: float, seed: int,
                           periodic=False) -> np.ndarray:
    """Zero-radius node positions on the box surface.

    Corners always present; edge and face interiors carry jittered
    points at roughly one node per spacing (1D) or spacing^2 (2D).
    With `periodic=True` the patterns on opposite faces (and on the
    four parallel copies of each edge) are identical translates, so
    every boundary node has periodic counterparts.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_SURFACE]))
    size = box.size
    pts = []

    # 8 corners
    for ix in (0, 1):
        for iy in (0, 1):
            for iz in (0, 1):
                pts.append(box.lo + size * np.array([ix, iy, iz], dtype=float))

    # 12 edges: 3 axis directions x 4 parallel copies
    for axis in range(3):
        o1, o2 = [a for a in range(3) if a != axis]
        ts_master = _jittered_line(size[axis], spacing, rng)
        for s1 in (0, 1):
            for s2 in (0, 1):
                ts = ts_master if periodic else _jittered_line(size[axis], spacing, rng)
                for t in ts:
                    p = box.lo.copy()
                    p[axis] += t
                    p[o1] += s1 * size[o1]
                    p[o2] += s2 * size[o2]
                    pts.append(p)

    # 6 faces: 3 normal axes x 2 sides
    for axis in range(3):
        o1, o2 = [a for a in range(3) if a != axis]
        uv_master = _jittered_grid(size[o1], size[o2], spacing, rng)
        for side in (0, 1):
            uv = uv_master if periodic else _jittered_grid(size[o1], size[o2], spacing, rng)
            for u, v in uv:
                p = box.lo.copy()
                p[axis] += side * size[axis]
                p[o1] += u
                p[o2] += v
                pts.append(p)

    return np.asarray(pts)


def delaunay_tets(points: np.ndarray) -> np.ndarray:
    """Delaunay tetrahedra of a point cloud, oriented to positive volume."""
    tri = Delaunay(points)
    tets = np.asarray(tri.simplices, dtype=np.int64)
    p = points[tets]
    vol6 = np.einsum("tk,tk->t", np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]),
                     p[:, 3] - p[:, 0])
    flip = vol6 < 0.0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3].copy(), tets[flip, 2].copy()
    return tets


def _tessellation_points(positions, radii, tets):
    """Edge, face and tet points of every tetrahedron.

    Edge points sit midway along the free segment between the two
    sphere surfaces; face and tet points are the means of their edge
    points, which keeps all of them outside the aggregate interiors.
    """
    P = positions[tets]                       # (T, 4, 3)
    R = radii[tets]                           # (T, 4)
    e_pts = np.empty((tets.shape[0], 6, 3))
    for e, (a, b) in enumerate(_TET_EDGES):
        d = P[:, b] - P[:, a]
        L = np.linalg.norm(d, axis=1)
        u = d / L[:, None]
        s = R[:, a] + 0.5 * (L - R[:, a] - R[:, b])
        e_pts[:, e] = P[:, a] + s[:, None] * u
    f_pts = np.empty((tets.shape[0], 4, 3))
    for f, edges in enumerate(_FACE_EDGES):
        f_pts[:, f] = e_pts[:, edges].mean(axis=1)
    t_pts = e_pts.mean(axis=1)
    return P, e_pts, f_pts, t_pts


def tessellate(nodes, tets=None, *, box=None, seed=0,
               sliver_fraction=1e-12, max_retries=3) -> MesoMesh:
    """Build the facet network and polyhedral cells of a particle system.

    `nodes` is a list of ParticleNode (or an (n,3)/(n,)/(n,) triple of
    arrays).  When `tets` is omitted the Delaunay tetrahedralization is
    computed here; degenerate point sets and sliver tets (volume below
    `sliver_fraction` of the domain volume) trigger a retry with a
    reproducible random perturbation of at most 1e-9 of the domain
    size, up to `max_retries` times.

    Every tetrahedron contributes 12 facets, two per edge, each shared
    by exactly the two particles of that edge.  Per-particle cell
    volumes are the exact volumes enclosed by the facet fans.
    """
    if isinstance(nodes, (list, tuple)) and nodes and isinstance(nodes[0], ParticleNode):
        positions = np.asarray([n.position for n in nodes], dtype=float)
        radii = np.asarray([n.radius for n in nodes], dtype=float)
        is_surface = np.asarray([n.is_surface for n in nodes], dtype=bool)
    else:
        positions, radii, is_surface = nodes
        positions = np.asarray(positions, dtype=float)
        radii = np.asarray(radii, dtype=float)
        is_surface = np.asarray(is_surface, dtype=bool)

    if box is None:
        box = Box(positions.min(axis=0), positions.max(axis=0))
    scale = box.diagonal

    work_positions = positions
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM_PERTURB]))
    for attempt in range(max_retries + 1):
        if tets is None:
            current_tets = delaunay_tets(work_positions)
        else:
            current_tets = np.asarray(tets, dtype=np.int64)
        p = work_positions[current_tets]
        vol = np.einsum("tk,tk->t",
                        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]),
                        p[:, 3] - p[:, 0]) / 6.0
        if np.all(np.abs(vol) > sliver_fraction * box.volume):
            break
        if attempt == max_retries:
            raise MeshGenerationError(
                f"{int(np.sum(np.abs(vol) <= sliver_fraction * box.volume))} sliver "
                f"tets remain after {max_retries} perturbation retries"
            )
        # perturb interior coordinates only; boundary nodes keep their faces
        perturbation = rng.uniform(-1.0, 1.0, size=positions.shape) * 1e-9 * scale
        perturbation[is_surface] = 0.0
        work_positions = positions + perturbation
        tets = None

    return _build_mesh(work_positions, radii, is_surface, current_tets, box)


def _build_mesh(positions, radii, is_surface, tets, box) -> MesoMesh:
    n_nodes = positions.shape[0]
    n_tets = tets.shape[0]
    P, e_pts, f_pts, t_pts = _tessellation_points(positions, radii, tets)

    n_facets = 12 * n_tets
    fi = np.empty(n_facets, dtype=np.int64)
    fj = np.empty(n_facets, dtype=np.int64)
    area = np.empty(n_facets)
    e_n = np.empty((n_facets, 3))
    r = np.empty(n_facets)
    centroid = np.empty((n_facets, 3))
    c_i = np.empty((n_facets, 3))
    c_j = np.empty((n_facets, 3))
    tet_id = np.repeat(np.arange(n_tets, dtype=np.int64), 12)
    cell_vol = np.zeros(n_nodes)

    k = 0
    for e, (a, b) in enumerate(_TET_EDGES):
        edge_vec = P[:, b] - P[:, a]
        edge_len = np.linalg.norm(edge_vec, axis=1)
        n_hat = edge_vec / edge_len[:, None]
        for f in _EDGE_FACES[e]:
            sl = slice(k * n_tets, (k + 1) * n_tets)
            E, F, T = e_pts[:, e], f_pts[:, f], t_pts
            tri_vec = 0.5 * np.cross(F - E, T - E)
            area[sl] = np.abs(np.einsum("tk,tk->t", tri_vec, n_hat))
            fi[sl] = tets[:, a]
            fj[sl] = tets[:, b]
            e_n[sl] = n_hat
            r[sl] = edge_len
            y = (E + F + T) / 3.0
            centroid[sl] = y
            c_i[sl] = y - P[:, a]
            c_j[sl] = y - P[:, b]
            tet_id[sl] = np.arange(n_tets)
            va = np.abs(np.einsum("tk,tk->t",
                                  np.cross(E - P[:, a], F - P[:, a]),
                                  T - P[:, a])) / 6.0
            vb = np.abs(np.einsum("tk,tk->t",
                                  np.cross(E - P[:, b], F - P[:, b]),
                                  T - P[:, b])) / 6.0
            np.add.at(cell_vol, tets[:, a], va)
            np.add.at(cell_vol, tets[:, b], vb)
            k += 1

    if np.any(area <= 0.0):
        raise MeshGenerationError("zero-area facet produced by tessellation")

    # complete each frame with the global axis least aligned with e_n
    pick = np.argmin(np.abs(e_n), axis=1)
    helper = np.zeros_like(e_n)
    helper[np.arange(n_facets), pick] = 1.0
    e_m = np.cross(e_n, helper)
    e_m /= np.linalg.norm(e_m, axis=1)[:, None]
    e_l = np.cross(e_n, e_m)

    tet_volumes = np.abs(np.einsum(
        "tk,tk->t", np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]),
        P[:, 3] - P[:, 0])) / 6.0

    return MesoMesh(
        positions=positions, radii=radii, is_surface=is_surface, tets=tets,
        facet_i=fi, facet_j=fj, facet_area=area,
        facet_e_n=e_n, facet_e_m=e_m, facet_e_l=e_l,
        facet_r=r, facet_centroid=centroid, facet_c_i=c_i, facet_c_j=c_j,
        facet_tet=tet_id, cell_volumes=cell_vol, tet_volumes=tet_volumes,
        box=box,
    )


def cell_mass_properties(mesh: MesoMesh, density: float):
    """Lumped mass and inertia tensor of every polyhedral cell.

    Mass is density times the cell volume.  The inertia tensor is taken
    about the particle node, assembled from the exact second moments of
    the sub-tetrahedra (node, edge point, face point, tet point) that
    tile the cell.
    """
    P, e_pts, f_pts, t_pts = _tessellation_points(mesh.positions, mesh.radii, mesh.tets)
    n_nodes = mesh.n_nodes
    second = np.zeros((n_nodes, 3, 3))

    for e, (a, b) in enumerate(_TET_EDGES):
        for f in _EDGE_FACES[e]:
            E, F, T = e_pts[:, e], f_pts[:, f], t_pts
            for v in (a, b):
                u1 = E - P[:, v]
                u2 = F - P[:, v]
                u3 = T - P[:, v]
                vol = np.abs(np.einsum("tk,tk->t", np.cross(u1, u2), u3)) / 6.0
                s = u1 + u2 + u3
                c = (np.einsum("ti,tj->tij", u1, u1)
                     + np.einsum("ti,tj->tij", u2, u2)
                     + np.einsum("ti,tj->tij", u3, u3)
                     + np.einsum("ti,tj->tij", s, s))
                np.add.at(second, mesh.tets[:, v], vol[:, None, None] / 20.0 * c)

    mass = density * mesh.cell_volumes
    trace = np.trace(second, axis1=1, axis2=2)
    inertia = density * (trace[:, None, None] * np.eye(3)[None] - second)
    return mass, inertia


def generate_mesh(mix: MixDesign, box: Box, seed: int, *,
                  periodic=False, surface_spacing=None) -> MesoMesh:
    """Full generation pipeline: sample, pack, add surface nodes, tessellate.

    `surface_spacing` defaults to half the maximum aggregate diameter.
    With `periodic=True` the surface node patterns on opposite faces
    are identical translates so the mesh can be used as a periodic RVE.
    """
    if surface_spacing is None:
        surface_spacing = 0.5 * mix.d_max
    diameters = sample_aggregates(mix, box.volume, seed)
    # small wall clearance keeps boundary tets well shaped
    interior = pack_particles(diameters, box, seed,
                              wall_clearance=0.1 * mix.d_min)
    surf = surface_node_positions(box, surface_spacing, seed, periodic=periodic)

    positions = np.vstack([np.asarray([n.position for n in interior]).reshape(-1, 3),
                           surf])
    radii = np.concatenate([np.asarray([n.radius for n in interior]),
                            np.zeros(len(surf))])
    is_surface = np.concatenate([np.zeros(len(interior), dtype=bool),
                                 np.ones(len(surf), dtype=bool)])
    return tessellate((positions, radii, is_surface), box=box, seed=seed)
