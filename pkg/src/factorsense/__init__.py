"""factorsense: over-parameterized matrix sensing by factorized gradient
descent, with restricted-isometry diagnostics, quadratic-activation network
training, and seeded, reproducible experiment presets."""

from .matkit import (Norms, SvdResult, col_projector, norms,
                     principal_angle_sin, pseudo_inverse, psd_project, svd)
from .sensing import (GroundTruth, MeasurementEnsemble, Metrics, apply_map,
                      gradient, loss, metrics, residual_operator,
                      sample_gaussian_ensemble, sample_ground_truth)
from .ripcheck import RipReport, estimate_rip, truncated_rank1_deviation
from .solvers import (DivergenceError, SolverConfig, Trajectory, gd_step,
                      init_factor, population_gd_step, run_gd, run_pgd,
                      run_sgd)
from .quadnet import (QuadConfig, QuadDataset, algorithm1_step, gen_quad_data,
                      predict, run_algorithm1, run_quad_sgd, truncated_loss,
                      truncated_gradient)
from .probes import (DiagRecord, FRSplit, SubspaceState, SubspaceTracker,
                     ZESplit, advance_subspace, diagnostics, split_fr,
                     split_rank1, split_ze, subspace_start)
from .xlab import ExperimentSpec, SummaryTable, preset_specs, run_experiment

__version__ = "0.1.0"
