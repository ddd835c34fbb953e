"""Exact min-plus network-calculus models of congestion control."""

from .minplus import (
    EPS_T,
    EPS_Y,
    CumulativeFunction,
    MonotonicityError,
    PiecewiseLinear,
    Segment,
    add,
    affine_function,
    bursty_source,
    convolve,
    first_crossing_below,
    lower_pseudo_inverse,
    pointwise_min,
    rate_function,
    shift,
    step_function,
    upper_pseudo_inverse,
    zero,
)
from .path_server import ServiceCurve, backlog, departures, rtt

__version__ = "0.1.0"

__all__ = [
    "EPS_T",
    "EPS_Y",
    "CumulativeFunction",
    "MonotonicityError",
    "PiecewiseLinear",
    "Segment",
    "ServiceCurve",
    "add",
    "affine_function",
    "backlog",
    "bursty_source",
    "convolve",
    "departures",
    "first_crossing_below",
    "lower_pseudo_inverse",
    "pointwise_min",
    "rate_function",
    "rtt",
    "shift",
    "step_function",
    "upper_pseudo_inverse",
    "zero",
]
