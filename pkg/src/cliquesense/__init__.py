"""Sparse sensor placement from POD modes via maximum clique search.

Candidate points are vertices of a graph whose edge weights measure how
independent two weighted POD rows are; a maximum clique of the thresholded
graph, found by annealing a QUBO over the complement graph, gives the
sensors. Greedy determinant and random placements serve as baselines, and
fields are rebuilt by pseudo-inverse or by filtered LASSO amplitude fits.
"""
from .baselines import greedy_determinant_placement, random_placement, trial_statistics
from .experiment import ConfigError, ExperimentConfig, ResultBundle, emit_results, run_placement_experiment
from .graph import (CandidateSet, InfeasibleTarget, ThresholdGraph, WeightedGraph, build_graph, calibrate_threshold,
                    complement, pair_weight, select_candidates, threshold_graph)
from .io import DataFormatError, export_field_image, read_matrix, write_matrix
from .placement import Placement
from .pod import DataMatrix, PodBasis, SvdFactorization, compute_svd, optimal_hard_threshold_rank, pod_basis, truncate
from .qubo import AnnealSchedule, QuboProblem, anneal, build_qubo, clique_placement, energy, exhaustive_solve
from .reconstruction import (denoise_pipeline, lasso_cv, lasso_fit, make_operator, pinv_coefficients, pinv_pipeline,
                             reconstruction_error, spatial_mean_filter)
from .synthetic import SyntheticSpec, generate_vortex_street, vortex_street

__version__ = "0.1.0"
