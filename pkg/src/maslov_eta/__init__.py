"""Maslov indices, interval Dirac spectra, eta-invariants and eta-forms over
parameter grids, with a scenario runner verifying the index identities."""

from .errors import (BranchCutError, ContinuityBreakError, DegeneracyError,
                     DegreeOverflowError, PreconditionError, TransversalityError,
                     TruncationError)
from .lagrangian import (LagrangianProjection, StandardizedPair, boundary_unitary_path,
                         cayley, from_unitary, i0_matrix, is_transverse,
                         standard_projection, standardize_pair, unitary_of)
from .maslov import (MaslovResult, maslov_form_matrix, maslov_index,
                     maslov_index_family, maslov_projection, tau_interval)
from .interval import (IntervalSpectrum, circle_eta, eta_invariant, eta_scalar,
                       eigenfunction, heat_kernel_images, heat_kernel_spectral,
                       heat_trace_D, spectrum)
from .forms import (BaseGrid, MatrixFormField, chern_character, circle_grid,
                    ext_d, field_from_json, field_to_json, integrate, point_grid,
                    sphere_grid, torus_grid, trace_field, wedge)
from .eta import (EtaForm, PairFamily, curvature_R, eta_form,
                  eta_form_boundary_limit, eta_form_epsilon, simplex_exp2)

__all__ = [n for n in dir() if not n.startswith("_")]
__version__ = "0.1.0"
