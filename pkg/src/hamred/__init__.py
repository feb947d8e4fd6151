"""Dictionary-based symplectic model order reduction for parametric Hamiltonian systems.

The offline stage (:func:`build_dictionary`) stores labelled full-order
snapshots together with all products against them.  The online stage
(:func:`run_online`) selects snapshots close to the current parameter and
time window and assembles a symplectic (or POD) basis, the reduced system
and a (S)DEIM hyper-reduction from those products alone, at a cost
independent of the full dimension.
"""

from .diagnostics import (average_basis_size, basis_change_bound, basis_change_bounds,
                          hamiltonian_error_series, online_report, relative_reduction_error)
from .dictionary import (Dictionary, build_dictionary, generate_snapshots, load_dictionary, online_phase,
                         save_dictionary)
from .errors import (ContractError, DegenerateSpectrumError, DimensionError, EmptyBasisError, HamredError,
                     NewtonConvergenceError, SingularInterpolationError)
from .integrators import NewtonSettings, TimeGrid, integrate
from .models import AffineHamiltonianModel, build_sine_gordon, build_wave2d
from .online import METHODS, OnlineSettings, explicit_basis, reconstruct_run, run_online
from .selection import SelectionConfig, compute_time_weight, select_indices
from .standard import assemble_reduced_linear, assemble_sdeim, csvd, deim, pod
from .symplectic import apply_poisson, symplectic_defect, symplectic_inverse_apply

__all__ = [
    "AffineHamiltonianModel", "ContractError", "DegenerateSpectrumError", "Dictionary", "DimensionError",
    "EmptyBasisError", "HamredError", "METHODS", "NewtonConvergenceError", "NewtonSettings", "OnlineSettings",
    "SelectionConfig", "SingularInterpolationError", "TimeGrid", "apply_poisson", "assemble_reduced_linear",
    "assemble_sdeim", "average_basis_size", "basis_change_bound", "basis_change_bounds", "build_dictionary",
    "build_sine_gordon", "build_wave2d", "compute_time_weight", "csvd", "deim", "explicit_basis",
    "generate_snapshots", "hamiltonian_error_series", "integrate", "load_dictionary", "online_phase",
    "online_report", "pod", "reconstruct_run", "relative_reduction_error", "run_online", "save_dictionary",
    "select_indices", "symplectic_defect", "symplectic_inverse_apply",
]
