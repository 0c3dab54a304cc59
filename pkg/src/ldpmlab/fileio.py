"""File formats: mesh text serialization, checkpoints, VTK export, CSV.

All text formats are line-oriented with full-precision floats so a
write/read round trip is bit-exact.  VTK output uses the legacy ASCII
unstructured-grid dialect readable by standard viewers.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .errors import ConfigurationError
from .macro_fem import MacroMesh
from .mesostructure import Box, MesoMesh

MESO_MAGIC = "# ldpmlab meso mesh v1"
MACRO_MAGIC = "# ldpmlab macro mesh v1"


def _fmt(x):
    return np.format_float_repr(float(x), precision=17)


def np_float(token):
    return float(token)


def write_meso_mesh(mesh: MesoMesh, path):
    """Plain-text meso mesh: nodes, tets and full facet geometry."""
    with open(path, "w") as fh:
        fh.write(MESO_MAGIC + "\n")
        fh.write("# units: mm; facet frame stored as e_n e_m e_l\n")
        fh.write("BOX\n")
        fh.write(" ".join(_fmt(v) for v in mesh.box.lo) + "\n")
        fh.write(" ".join(_fmt(v) for v in mesh.box.hi) + "\n")
        fh.write(f"NODES {mesh.n_nodes}\n")
        for i in range(mesh.n_nodes):
            fh.write(f"{i} " + " ".join(_fmt(v) for v in mesh.positions[i])
                     + f" {_fmt(mesh.radii[i])} {int(mesh.is_surface[i])}\n")
        fh.write(f"TETS {mesh.n_tets}\n")
        for row in mesh.tets:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
        fh.write(f"FACETS {mesh.n_facets}\n")
        for k in range(mesh.n_facets):
            vals = [mesh.facet_area[k], mesh.facet_r[k],
                    *mesh.facet_e_n[k], *mesh.facet_e_m[k], *mesh.facet_e_l[k],
                    *mesh.facet_centroid[k], *mesh.facet_c_i[k], *mesh.facet_c_j[k]]
            fh.write(f"{int(mesh.facet_i[k])} {int(mesh.facet_j[k])} "
                     + " ".join(_fmt(v) for v in vals)
                     + f" {int(mesh.facet_tet[k])}\n")
        fh.write(f"CELL_VOLUMES {mesh.n_nodes}\n")
        for v in mesh.cell_volumes:
            fh.write(_fmt(v) + "\n")
        fh.write(f"TET_VOLUMES {mesh.n_tets}\n")
        for v in mesh.tet_volumes:
            fh.write(_fmt(v) + "\n")


def read_meso_mesh(path) -> MesoMesh:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != MESO_MAGIC:
        raise ConfigurationError(f"{path}: not a meso mesh file")
    idx = 0

    def seek(keyword):
        nonlocal idx
        while idx < len(lines):
            ln = lines[idx]
            idx += 1
            if ln.startswith(keyword):
                return ln
        raise ConfigurationError(f"{path}: missing section {keyword}")

    seek("BOX")
    lo = np.array([float(v) for v in lines[idx].split()]); idx += 1
    hi = np.array([float(v) for v in lines[idx].split()]); idx += 1

    header = seek("NODES")
    n = int(header.split()[1])
    positions = np.empty((n, 3))
    radii = np.empty(n)
    is_surface = np.empty(n, dtype=bool)
    for i in range(n):
        parts = lines[idx].split(); idx += 1
        positions[i] = [float(v) for v in parts[1:4]]
        radii[i] = float(parts[4])
        is_surface[i] = bool(int(parts[5]))

    header = seek("TETS")
    nt = int(header.split()[1])
    tets = np.empty((nt, 4), dtype=np.int64)
    for i in range(nt):
        tets[i] = [int(v) for v in lines[idx].split()]; idx += 1

    header = seek("FACETS")
    nf = int(header.split()[1])
    fi = np.empty(nf, dtype=np.int64)
    fj = np.empty(nf, dtype=np.int64)
    area = np.empty(nf)
    r = np.empty(nf)
    e_n = np.empty((nf, 3))
    e_m = np.empty((nf, 3))
    e_l = np.empty((nf, 3))
    cen = np.empty((nf, 3))
    c_i = np.empty((nf, 3))
    c_j = np.empty((nf, 3))
    ft = np.empty(nf, dtype=np.int64)
    for k in range(nf):
        parts = lines[idx].split(); idx += 1
        fi[k] = int(parts[0]); fj[k] = int(parts[1])
        vals = [float(v) for v in parts[2:-1]]
        area[k], r[k] = vals[0], vals[1]
        e_n[k] = vals[2:5]; e_m[k] = vals[5:8]; e_l[k] = vals[8:11]
        cen[k] = vals[11:14]; c_i[k] = vals[14:17]; c_j[k] = vals[17:20]
        ft[k] = int(parts[-1])

    header = seek("CELL_VOLUMES")
    cell = np.array([float(lines[idx + i]) for i in range(n)]); idx += n
    header = seek("TET_VOLUMES")
    tvol = np.array([float(lines[idx + i]) for i in range(nt)]); idx += nt

    return MesoMesh(positions=positions, radii=radii, is_surface=is_surface,
                    tets=tets, facet_i=fi, facet_j=fj, facet_area=area,
                    facet_e_n=e_n, facet_e_m=e_m, facet_e_l=e_l, facet_r=r,
                    facet_centroid=cen, facet_c_i=c_i, facet_c_j=c_j,
                    facet_tet=ft, cell_volumes=cell, tet_volumes=tvol,
                    box=Box(lo, hi))


def write_macro_mesh(mesh: MacroMesh, path):
    with open(path, "w") as fh:
        fh.write(MACRO_MAGIC + "\n")
        fh.write(f"ELEMENT_SIZE {_fmt(mesh.element_size)}\n")
        fh.write(f"NODES {mesh.n_nodes}\n")
        for row in mesh.nodes:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")
        fh.write(f"HEXES {mesh.n_elements}\n")
        for row in mesh.hexes:
            fh.write(" ".join(str(int(v)) for v in row) + "\n")
        for name, ids in mesh.node_sets.items():
            fh.write(f"NODESET {name} {len(ids)}\n")
            fh.write(" ".join(str(int(v)) for v in ids) + "\n")


def read_macro_mesh(path) -> MacroMesh:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != MACRO_MAGIC:
        raise ConfigurationError(f"{path}: not a macro mesh file")
    idx = 1
    if not lines[idx].startswith("ELEMENT_SIZE"):
        raise ConfigurationError(f"{path}: missing ELEMENT_SIZE")
    h = float(lines[idx].split()[1]); idx += 1
    n = int(lines[idx].split()[1]); idx += 1
    nodes = np.array([[float(v) for v in lines[idx + i].split()]
                      for i in range(n)]); idx += n
    ne = int(lines[idx].split()[1]); idx += 1
    hexes = np.array([[int(v) for v in lines[idx + i].split()]
                      for i in range(ne)], dtype=np.int64); idx += ne
    sets = {}
    while idx < len(lines):
        parts = lines[idx].split(); idx += 1
        if parts[0] != "NODESET":
            raise ConfigurationError(f"{path}: unexpected line {parts[0]}")
        name, count = parts[1], int(parts[2])
        ids = np.array([int(v) for v in lines[idx].split()], dtype=np.int64)
        idx += 1
        if len(ids) != count:
            raise ConfigurationError(f"{path}: node set {name} count mismatch")
        sets[name] = ids
    return MacroMesh(nodes=nodes, hexes=hexes, element_size=h, node_sets=sets)


def save_checkpoint(path, system, extra=None):
    """Full particle/facet state as a documented npz archive."""
    state = system.state
    meta = {"time": system.time, "n_nodes": system.mesh.n_nodes,
            "n_facets": system.mesh.n_facets}
    if extra:
        meta.update(extra)
    np.savez_compressed(
        path,
        meta=json.dumps(meta),
        u=system.u, theta=system.theta, v=system.v, omega=system.omega,
        facet_eps=state.eps, facet_t=state.t,
        facet_eps_max_n=state.eps_max_n, facet_eps_max_t=state.eps_max_t,
        facet_eps_p=state.eps_p, facet_eps_v=state.eps_v,
        facet_compacted=state.compacted,
        facet_crack_opening=state.crack_opening,
        facet_work=state.work, facet_dissipated=state.dissipated,
        eigenstrain=system.eps_c,
    )


def load_checkpoint(path, system):
    """Restore a checkpoint written by save_checkpoint; returns metadata."""
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    if meta["n_nodes"] != system.mesh.n_nodes \
            or meta["n_facets"] != system.mesh.n_facets:
        raise ConfigurationError("checkpoint does not match this mesh")
    system.u[:] = data["u"]
    system.theta[:] = data["theta"]
    system.v[:] = data["v"]
    system.omega[:] = data["omega"]
    st = system.state
    st.eps[:] = data["facet_eps"]
    st.t[:] = data["facet_t"]
    st.eps_max_n[:] = data["facet_eps_max_n"]
    st.eps_max_t[:] = data["facet_eps_max_t"]
    st.eps_p[:] = data["facet_eps_p"]
    st.eps_v[:] = data["facet_eps_v"]
    st.compacted[:] = data["facet_compacted"]
    st.crack_opening[:] = data["facet_crack_opening"]
    st.work[:] = data["facet_work"]
    st.dissipated[:] = data["facet_dissipated"]
    system.eps_c[:] = data["eigenstrain"]
    system.time = meta["time"]
    return meta


def write_meso_vtk(path, mesh: MesoMesh, displacements=None, crack_opening=None):
    """Particles and facet centroids as VTK vertices with field data.

    Particle points carry radius and displacement; facet-centroid
    points carry the crack opening.  `point_type` is 0 for particles
    and 1 for facet centroids.
    """
    n, f = mesh.n_nodes, mesh.n_facets
    u = np.zeros((n, 3)) if displacements is None else displacements
    w = np.zeros(f) if crack_opening is None else crack_opening
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write("ldpmlab meso state\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n + f} double\n")
        for p in mesh.positions:
            fh.write(f"{p[0]} {p[1]} {p[2]}\n")
        for p in mesh.facet_centroid:
            fh.write(f"{p[0]} {p[1]} {p[2]}\n")
        fh.write(f"CELLS {n + f} {2 * (n + f)}\n")
        for i in range(n + f):
            fh.write(f"1 {i}\n")
        fh.write(f"CELL_TYPES {n + f}\n")
        fh.write("1\n" * (n + f))
        fh.write(f"POINT_DATA {n + f}\n")
        fh.write("SCALARS point_type int\nLOOKUP_TABLE default\n")
        fh.write("0\n" * n)
        fh.write("1\n" * f)
        fh.write("SCALARS radius double\nLOOKUP_TABLE default\n")
        for r in mesh.radii:
            fh.write(f"{r}\n")
        fh.write("0\n" * f)
        fh.write("SCALARS crack_opening double\nLOOKUP_TABLE default\n")
        fh.write("0\n" * n)
        for v in w:
            fh.write(f"{v}\n")
        fh.write("VECTORS displacement double\n")
        for row in u:
            fh.write(f"{row[0]} {row[1]} {row[2]}\n")
        fh.write("0 0 0\n" * f)


def write_macro_vtk(path, mesh: MacroMesh, displacements=None, gamma=None,
                    sigma=None, model_tag=None):
    """Hexahedral mesh with element strain/stress and model flag."""
    n, e = mesh.n_nodes, mesh.n_elements
    u = np.zeros((n, 3)) if displacements is None else displacements
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\n")
        fh.write("ldpmlab macro state\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for p in mesh.nodes:
            fh.write(f"{p[0]} {p[1]} {p[2]}\n")
        fh.write(f"CELLS {e} {9 * e}\n")
        for row in mesh.hexes:
            fh.write("8 " + " ".join(str(int(v)) for v in row) + "\n")
        fh.write(f"CELL_TYPES {e}\n")
        fh.write("12\n" * e)
        fh.write(f"POINT_DATA {n}\n")
        fh.write("VECTORS displacement double\n")
        for row in u:
            fh.write(f"{row[0]} {row[1]} {row[2]}\n")
        fh.write(f"CELL_DATA {e}\n")
        if model_tag is not None:
            fh.write("SCALARS model_tag int\nLOOKUP_TABLE default\n")
            for v in model_tag:
                fh.write(f"{int(v)}\n")
        for name, tensor in (("strain", gamma), ("stress", sigma)):
            if tensor is None:
                continue
            fh.write(f"TENSORS {name} double\n")
            for t in tensor:
                for row in t:
                    fh.write(f"{row[0]} {row[1]} {row[2]}\n")
                fh.write("\n")


class TelemetryWriter:
    """Per-step CSV telemetry with unit-carrying headers."""

    def __init__(self, path, reaction_names=()):
        self.path = path
        self._fh = open(path, "w", newline="")
        self._writer = csv.writer(self._fh)
        header = ["step", "time_s", "kinetic_energy_Nmm", "internal_work_Nmm",
                  "dissipated_Nmm"]
        for name in reaction_names:
            header += [f"reaction_{name}_{c}_N" for c in "xyz"]
        self._writer.writerow(header)
        self._names = list(reaction_names)

    def record(self, step, system):
        row = [step, system.time, system.kinetic_energy(),
               system.internal_work(), system.dissipated_energy()]
        for name in self._names:
            row += list(system.reactions.get(name, np.zeros(3)))
        self._writer.writerow(row)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_curve_csv(path, columns: dict):
    """Column dict -> CSV; keys should carry units, e.g. 'strain' or
    'stress_MPa'."""
    keys = list(columns)
    rows = zip(*[np.asarray(columns[k]).tolist() for k in keys])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys)
        for row in rows:
            writer.writerow(row)


def read_curve_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols = {k: [] for k in header}
        for row in reader:
            for k, v in zip(header, row):
                cols[k].append(float(v))
    return {k: np.asarray(v) for k, v in cols.items()}
