"""Non-stationary alpha-fractal functions, the fractal operator, function-space
conditions, box-counting dimension estimates and set-valued IFS trajectories."""

from .core import (
    AffineMapFamily,
    BaseOperator,
    BaseScheme,
    Partition,
    RefinementGrid,
    SampledFunction,
    ScalingScheme,
    build_partition,
    inverse_map,
    locate_interval,
    refinement_points,
)
from .dimension import (
    DimensionEstimate,
    DimensionReport,
    box_count_graph,
    dimension_report,
    estimate_box_dimension,
)
from .engine import (
    FractalSpec,
    apply_rb,
    backward_trajectory,
    evaluate_series,
    evaluate_series_many,
    make_spec,
    stationary_fixed_point,
)
from .errors import FractalError
from .fractal_operator import (
    OperatorConfig,
    apply_operator,
    bounded_below_report,
    neumann_inverse,
    perturbation_report,
)
from .set_ifs import (
    ContractionMap2D,
    IfsLevel,
    backward_trajectory_sets,
    forward_trajectory_sets,
    hausdorff_distance,
    hutchinson_apply,
    invariant_ball_radius,
)
from .spaces import (
    ThetaFunction,
    check_bv_conditions,
    check_convex_conditions,
    check_vbeta_conditions,
    convex_seminorm,
    oscillation_sum,
    total_variation,
)

__version__ = "0.1.0"
