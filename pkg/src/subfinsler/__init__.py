"""Numerics for the geometry induced by first-order differential operators.

Symbol seminorms and their dual extended norms, control distances via
anisotropic shortest paths, flow-concatenation approximation, Friedrichs
mollifiers, and energy-preserving finite-speed wave propagation on a single
rectangular chart of R^n.
"""

from .fields import ExtReal, Field, Grid, load_field, sample, save_field
from .geometry import (
    Curve,
    DistanceField,
    arclength_reparam,
    ball,
    curve_length,
    distance_field,
    is_subunit,
    lipschitz_lower_bound,
)
from .symbol import (
    KernelDecomposition,
    RiemannianApproximant,
    SymbolField,
    double,
    dual_norm,
    dual_norm_batch,
    formal_adjoint,
    kernel_decomposition,
    riemannian_approximant,
    seminorm,
)
from .flows import (
    PiecewiseFlowCurve,
    VectorFieldSet,
    approx_by_flows,
    flow,
    hoermander_rank,
    lie_bracket,
)
from .mollify import MollifierKernel, commutator_apply, mollify, seminorm_upper_bound_check
from .propagate import (
    SkewOperator,
    Trajectory,
    WaveState,
    discretise_skew,
    evolve,
    support_radius,
    wave_second_order,
)

__all__ = [
    "Curve",
    "DistanceField",
    "ExtReal",
    "Field",
    "Grid",
    "KernelDecomposition",
    "MollifierKernel",
    "PiecewiseFlowCurve",
    "RiemannianApproximant",
    "SkewOperator",
    "SymbolField",
    "Trajectory",
    "VectorFieldSet",
    "WaveState",
    "approx_by_flows",
    "arclength_reparam",
    "ball",
    "commutator_apply",
    "curve_length",
    "discretise_skew",
    "distance_field",
    "double",
    "dual_norm",
    "dual_norm_batch",
    "evolve",
    "flow",
    "formal_adjoint",
    "hoermander_rank",
    "is_subunit",
    "kernel_decomposition",
    "lie_bracket",
    "lipschitz_lower_bound",
    "load_field",
    "mollify",
    "riemannian_approximant",
    "sample",
    "save_field",
    "seminorm",
    "seminorm_upper_bound_check",
    "support_radius",
    "wave_second_order",
]

__version__ = "0.1.0"
