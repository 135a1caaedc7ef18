"""Routing-topology inference from end-to-end delay cumulants.

The toolkit reconstructs the binary routing matrix of a set of monitor
paths from the joint distribution (or a sample) of their delays: it
estimates multivariate cumulants, inverts their superset-sum structure
over the subset lattice of paths, and reads the matrix columns off the
support of the inverted vector. A sparse three-stage variant bounds the
support with low-order statistics and filters noisy estimates through a
weighted-L1 problem. Synthetic-network generation, scoring, and a
campaign harness round out the package.
"""

__version__ = "0.1.0"

from .cumulants import (
    DelaySample,
    EstimateWithSpread,
    LinkDistribution,
    NonzeroTestConfig,
    analytic_cumulant,
    common_cumulant_estimate,
    k_statistic,
    mixture_cumulant,
    nonzero_test,
    resample_estimates,
)
from .evaluate import ScoreReport, grid_search, run_campaign, score
from .inference import (
    InferenceResult,
    infer_routing_exact,
    infer_routing_from_sample,
    oracle_from_ground_truth,
)
from .lattice import (
    CumulantVector,
    MultiIndex,
    PathSet,
    inversion_matrix,
    mobius_forward,
    mobius_inverse,
    modified_inversion_matrix,
    representative_multi_indices,
)
from .netmodel import (
    RoutingMatrix,
    Scenario,
    Topology,
    check_assumptions,
    common_links,
    exact_links,
    generate_scenario,
    random_topology,
    sample_delays,
    sparsity_report,
)
from .solver import GenLassoSpec, solve
from .sparse import (
    BoundingTopology,
    PipelineConfig,
    ThresholdFunction,
    assemble_problem,
    bounding_topology,
    clique_init,
    run_sparse_pipeline,
    threshold,
    tighten,
)
