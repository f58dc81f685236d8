"""Exact convex clustering paths in one dimension and selective inference after clustering."""
from .errors import (DegenerateTruncation, FactorizationFailure, InconsistentConditioning,
                     InvalidInput, NotEnoughClusters, OracleSizeExceeded, SelClustError,
                     UndefinedContrast)
from .inference import (GaussianModel, SelectiveTestResult, TruncationBounds, balanced_contrast,
                        cluster_contrast, conditional_bounds, pvalue_from_constraints,
                        selective_pvalue_1d, selective_pvalue_independent,
                        selective_pvalue_multidim)
from .multidim import (AggregatedClustering, ColumnClusterings, aggregate, aggregate_columns,
                       build_block_constraints, build_kappa, columnwise_paths, rescale_labels)
from .path import (FittedSolution, MergeEvent, RegularizationPath, SegmentedClustering,
                   brute_force_solve, clustering_at, compute_path, compute_path_naive,
                   lambda_max, objective, solution_at)
from .polyhedron import PolyhedralConstraint, build_constraints, check_membership
from .simstats import (EcdfTable, ExperimentConfig, calibrate_lambda, ks_uniformity,
                       run_experiment_1d, run_experiment_multidim, sample_matrix_normal,
                       wilcoxon_rank_sum)
from .truncnorm import trunc_gauss_cdf, trunc_gauss_sf, trunc_gauss_tails

__version__ = "0.1.0"
