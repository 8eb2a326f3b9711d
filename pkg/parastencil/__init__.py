from .grid import apply_parallel, axpy3, field_from_interior, Field3, GridSpec, halo_exchange, inf_norm, lincomb, mean, random_field, shift_field
from .stencils import apply_parallel_laplacian, rhs_coarse, rhs_fine, StencilCoeffs
from .integrators import measure_step_time, propagate_coarse, propagate_fine, Propagator, SliceInterval
from .problem import amplitude, amplitude_ode, ConvergenceReport, exact_solution, initial_condition, ProblemSpec, relative_error
from .parareal import decode_field, defect, encode_field, PararealAbort, PararealConfig, PararealResult, run_parareal, run_serial_coarse, run_serial_fine, SliceWorker
from .perfmodel import cost_parareal, cost_serial, efficiencies, energy_model, EnergyParams, PerfParams, speedup_bound
from .harness import ExperimentConfig, main, RunRecord
