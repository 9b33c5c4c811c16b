"""Localized gamblet-type (GRPS) multiscale bases for rough-coefficient
elliptic and wave problems on the unit square.

The pipeline is: structured coarse mesh and red refinement (:mod:`grps.mesh`),
coefficient sampling (:mod:`grps.coeff`), P1 assembly (:mod:`grps.fem`),
measurement functionals (:mod:`grps.measurements`), constrained energy
minimisation on patches (:mod:`grps.basis`), coarse Galerkin solves
(:mod:`grps.homog`) and implicit wave stepping (:mod:`grps.wave`).
"""
from .basis import GrpsBasis, build_all, build_localized, decay_profile, psi0_scaling
from .coeff import CoefficientField, RasterGrid, load_raster, mstrig_eval, sample_field
from .errors import GrpsError
from .fem import fine_operator, reference_solve
from .homog import Study, assemble_coarse, converge_study, solve_coarse
from .measurements import build_measurements
from .mesh import build_coarse_mesh, patch, refine
from .wave import wave_run

__version__ = '0.1.0'

__all__ = ['GrpsBasis', 'build_all', 'build_localized', 'decay_profile', 'psi0_scaling',
           'CoefficientField', 'RasterGrid', 'load_raster', 'mstrig_eval', 'sample_field',
           'GrpsError', 'fine_operator', 'reference_solve', 'Study', 'assemble_coarse',
           'converge_study', 'solve_coarse', 'build_measurements', 'build_coarse_mesh',
           'patch', 'refine', 'wave_run', '__version__']
