"""Shared fixtures: reference mix/parameters and hand-built meshes."""

import numpy as np
import pytest

from ldpmlab.ldpm_solver import LdpmParams
from ldpmlab.mesostructure import Box, MesoMesh, MixDesign


@pytest.fixture(scope="session")
def reference_mix():
    return MixDesign(d_min=4.0, d_max=8.0, cement_content=612.0,
                     water_cement_ratio=0.4, aggregate_cement_ratio=2.4,
                     fuller_exponent=0.42, density=2.4e-9)


@pytest.fixture(scope="session")
def reference_params():
    return LdpmParams.reference_concrete()


@pytest.fixture(scope="session")
def fig2_params():
    """Parameter set used for the facet-law golden curves."""
    return LdpmParams(E0=30000.0, alpha=0.25, sigma_t=3.0, r_st=1.5,
                      l_t=100.0, n_t=0.2)


def single_facet_mesh(area=100.0, r=10.0):
    """Two particles joined by one facet on the x axis (1D chain)."""
    box = Box(np.array([-1.0, -6.0, -6.0]), np.array([r + 1.0, 6.0, 6.0]))
    return MesoMesh(
        positions=np.array([[0.0, 0.0, 0.0], [r, 0.0, 0.0]]),
        radii=np.zeros(2),
        is_surface=np.zeros(2, dtype=bool),
        tets=np.zeros((0, 4), dtype=np.int64),
        facet_i=np.array([0], dtype=np.int64),
        facet_j=np.array([1], dtype=np.int64),
        facet_area=np.array([area]),
        facet_e_n=np.array([[1.0, 0.0, 0.0]]),
        facet_e_m=np.array([[0.0, 1.0, 0.0]]),
        facet_e_l=np.array([[0.0, 0.0, 1.0]]),
        facet_r=np.array([r]),
        facet_centroid=np.array([[r / 2.0, 0.0, 0.0]]),
        facet_c_i=np.array([[r / 2.0, 0.0, 0.0]]),
        facet_c_j=np.array([[-r / 2.0, 0.0, 0.0]]),
        facet_tet=np.array([0], dtype=np.int64),
        cell_volumes=np.array([500.0, 500.0]),
        tet_volumes=np.array([1000.0]),
        box=box,
    )


def point_cloud_mesh(positions, box):
    """Facet-free mesh wrapper for pairing tests."""
    n = len(positions)
    return MesoMesh(
        positions=np.asarray(positions, dtype=float),
        radii=np.zeros(n),
        is_surface=np.ones(n, dtype=bool),
        tets=np.zeros((0, 4), dtype=np.int64),
        facet_i=np.zeros(0, dtype=np.int64),
        facet_j=np.zeros(0, dtype=np.int64),
        facet_area=np.zeros(0),
        facet_e_n=np.zeros((0, 3)),
        facet_e_m=np.zeros((0, 3)),
        facet_e_l=np.zeros((0, 3)),
        facet_r=np.zeros(0),
        facet_centroid=np.zeros((0, 3)),
        facet_c_i=np.zeros((0, 3)),
        facet_c_j=np.zeros((0, 3)),
        facet_tet=np.zeros(0, dtype=np.int64),
        cell_volumes=np.zeros(n),
        tet_volumes=np.zeros(0),
        box=box,
    )


@pytest.fixture(scope="session")
def small_rve(reference_mix, reference_params):
    """One 25 mm periodic RVE shared by read-only tests."""
    from ldpmlab.mesostructure import generate_mesh
    from ldpmlab.rve_homogenizer import RveInstance

    mesh = generate_mesh(reference_mix, Box.cube(25.0), seed=1, periodic=True)
    return RveInstance(mesh, reference_params, reference_mix.density, seed=1)
