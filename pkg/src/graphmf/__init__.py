"""graphmf: interacting diffusions on W-random graphs, their mean-field
limits, and the convergence diagnostics connecting the two."""

__version__ = "0.1.0"

from .kernels import (DilutionScheme, Kernel, MicroKernel, PositionGrid,
                      builtin_kernel, delta_n, dilution, grid_l2_residual,
                      holder_row_distance, lchi_norm, make_positions,
                      micro_prob, moment_Wr, renormalized_field,
                      riemann_constant_gap, s_n)
from .graphs import (RandomGraph, RenormalizedGraph, b_n, degree_stats,
                     export_edges, renormalize, sample_graph)
from .models import (InitialLaw, ModelSpec, builtin_model, initial_law,
                     interaction_mean, probe_constants, profile)
from .particles import (BlowUpError, NoiseBath, Trajectory,
                        simulate_coupled_copies, simulate_graph_system,
                        simulate_w_system, spatial_profile, trajectory_to_csv)
from .meanfield import (MeanFieldSolution, ProfileField, TruncatedDomain,
                        TruncationError, heat_solve, picard_solve,
                        psi0_from_init, truncate_domain, uniform_quadrature,
                        uniqueness_probe)
from .cutmetrics import (CutNormResult, StepKernel, aux_graphs,
                         average_kernel_cells, cut_distance_graph_kernel,
                         cut_norm, d1_distance, infty_one_norm,
                         read_step_kernel, step_kernel_from_graph,
                         uniform_step_kernel, write_step_kernel)
from . import diagnostics
