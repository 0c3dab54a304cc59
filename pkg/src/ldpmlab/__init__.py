"""Lattice discrete particle simulation of concrete, with periodic-RVE
homogenization and an adaptive two-scale FEM driver.

Units everywhere: mm (length), N (force), MPa (stress), tonne (mass),
s (time); densities are tonne/mm^3.
"""

from .adaptive_coupler import (HaighWestergaard, InsertionLog, OttosenSurface,
                               RveTemplate, check_insertion, haigh_westergaard,
                               insert_rve, r_theta, run_two_scale)
from .errors import (ConfigurationError, HandoffError, LdpmError,
                     MeshGenerationError, NonConvergenceError,
                     NumericalInstabilityError, PackingError)
from .ldpm_solver import (FacetState, LdpmParams, ParticleState,
                          ParticleSystem, PrescribedMotion,
                          assemble_particle_forces, central_difference_step,
                          compression_update, facet_strain,
                          shear_friction_update, stable_dt,
                          tension_fracture_update)
from .macro_fem import (ElasticityTensor, GaussPointModel, MacroMesh,
                        MacroSolver, element_strain, internal_forces,
                        make_box_mesh)
from .mesostructure import (Box, FacetGeometry, MesoMesh, MixDesign,
                            ParticleNode, cell_mass_properties, generate_mesh,
                            pack_particles, sample_aggregates, tessellate)
from .rve_homogenizer import (MacroStress, PeriodicPairing, RelaxSchedule,
                              RveInstance, build_periodic_pairs,
                              effective_elastic_constants, homogenize_stress,
                              project_macro_strain, relax_rve, run_rve_test)

__version__ = "0.1.0"
