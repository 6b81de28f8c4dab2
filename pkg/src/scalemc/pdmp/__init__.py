"""Piecewise deterministic samplers and their event-time machinery."""
from .events import (
    LinearRate,
    PiecewiseLinearRate,
    ThinningStats,
    cc_bound,
    event_time_linear,
    event_time_thinning,
    first_event_superposition,
    hessian_bound_rate,
    linear_inverse,
    reflect,
    reflect_precond,
)
from .samplers import (
    PdmpState,
    boomerang_flow,
    boomerang_run,
    bps_autotune,
    bps_run,
    coordinate_kernel,
    coordinate_run,
    neighbours_from_precision,
    zigzag_run,
)
from .skeleton import Quadratic, Skeleton, SkeletonBuilder, skeleton_estimate

skeleton_interpolate = Skeleton.interpolate

__all__ = [
    "LinearRate", "PiecewiseLinearRate", "ThinningStats", "cc_bound", "event_time_linear",
    "event_time_thinning", "first_event_superposition", "hessian_bound_rate", "linear_inverse",
    "reflect", "reflect_precond", "PdmpState", "boomerang_flow", "boomerang_run", "bps_autotune",
    "bps_run", "coordinate_kernel", "coordinate_run", "neighbours_from_precision", "zigzag_run",
    "Quadratic", "Skeleton", "SkeletonBuilder", "skeleton_estimate", "skeleton_interpolate",
]
