"""otkit: a computational optimal transport toolkit.

Discrete, semidiscrete, entropic, dynamic and generalized transport solvers
over numpy arrays, cross-validated against closed-form cases and each other.
"""

from .barycenter import (
    BarycenterProblem,
    barycenter_1d,
    entropic_barycenter,
    gaussian_barycenter,
    sliced_barycenter,
)
from .closed_form import (
    Gaussian,
    Quantile1D,
    gaussian_monge_map,
    gaussian_w2,
    monge_map_1d,
    monge_plan_1d,
    w1_1d_cdf,
    w_p_1d,
)
from .core import (
    CostMatrix,
    DiscreteMeasure,
    DualPair,
    Histogram,
    Scalings,
    TransportPlan,
    barycentric_projection,
    build_cost,
    push_forward,
    validate_plan,
)
from .dynamic import (
    StaggeredField,
    benamou_brenier,
    continuity_projection,
    mccann_interpolate,
    theta_prox,
)
from .entropic import (
    GibbsKernel,
    MarginalPenalty,
    SinkhornReport,
    apply_separable_kernel,
    batched_sinkhorn,
    contraction_factor,
    generalized_sinkhorn,
    hilbert_metric,
    proximal_point,
    round_to_feasible,
    sinkhorn,
    sinkhorn_divergences,
    sinkhorn_log,
    sinkhorn_rounded,
)
from .exact import (
    auction,
    auction_scaled,
    cbar_transform,
    certify_optimality,
    ctransform,
    dual_ascent,
    network_simplex,
    northwest_corner,
)
from .graph import (
    WeightedGraph,
    geodesic_matrix,
    w1_graph_flow,
    w1_graph_potential,
)
from .losses import (
    EntropyFunction,
    Kernel,
    MetricMeasureSpace,
    corrected_sinkhorn_divergence,
    entropic_gw,
    hilbertianity_counterexample,
    mmd_squared,
    mmd_unbiased,
    phi_divergence,
    sliced_w,
    sliced_w_gradient,
)
from .semidiscrete import (
    QuadratureSource,
    cbar_transform_semidiscrete,
    laguerre_assign,
    maximize_semidual,
    semidual_energy_grad,
    sga_semidual,
    sgd_semidual,
)
from .variational import (
    FitProblem,
    fit_eulerian,
    grad_wrt_positions,
    grad_wrt_weights,
    jko_step,
)

__version__ = "0.1.0"
