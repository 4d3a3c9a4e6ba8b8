"""Exact laboratory for gradient flows of single-neuron rectified regression.

The package simulates the piecewise-linear gradient flow exactly
(spectral closed form per activation pattern, certified boundary-event
detection), enumerates the piecewise-quadratic loss landscape, and
evaluates the initialization certificates that explain which minima the
flow can and cannot reach.
"""

from .dataset import (
    Dataset,
    ReductionMap,
    ValidationReport,
    augment_bias,
    dataset_from_json,
    dataset_to_json,
    load_dataset,
    reduce_dataset,
    reduction_map,
    save_dataset,
    validate_dataset,
)
from .errors import (
    DegenerateDirectionError,
    DimensionError,
    GeometryError,
    NumericalError,
    PreconditionError,
    ReluFlowError,
    SizeError,
    StructuralError,
)
from .expsum import ExpSum, Root
from .flow import (
    FlowConfig,
    FlowEvent,
    FlowSegment,
    Trajectory,
    count_hyperplane_crossings,
    norm_profile,
    revisit_report,
    simulate_flow,
    simulate_linear_flow,
)
from .geometry import (
    ActivationPattern,
    Hyperrectangle,
    PartitionCell,
    PartitionOrdering,
    enumerate_partitions,
    g_value,
    hyperrectangle_of,
    partition_count_bound,
    partition_order_2d,
    pattern_of,
)
from .landscape import (
    MinimaCensus,
    VirtualMinimizer,
    compare_support_losses,
    gradient,
    loss,
    minima_census,
    relu_vs_linear_gap,
    virtual_minimizer,
)
from .criteria import (
    BConditionReport,
    BoundaryCrossingContext,
    CosineForm,
    alpha_star,
    bad_minimum_exclusion,
    check_B_conditions,
    cosine_form,
    crossing_context,
    no_deactivation_certificate,
)
from .deepnet import (
    DeepNet,
    LayerProblem,
    MultiOutputDataset,
    backprop_labels,
    balancedness_drift,
    forward_trace,
    multi_gradient,
    multi_loss,
    network_gradients,
    row_decompose,
)

__version__ = "0.1.0"
