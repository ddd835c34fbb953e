"""Service curves of the path server and its observables (departures, backlog, RTT)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .minplus import (
    EPS_Y,
    CumulativeFunction,
    PiecewiseLinear,
    affine_function,
    convolve,
    lower_pseudo_inverse,
    rate_function,
    shift,
    step_function,
    stitch,
    subtract,
    upper_pseudo_inverse,
    _tol,
)


class ConsistencyError(RuntimeError):
    """Internal consistency check failed (e.g. negative backlog)."""


@dataclass(frozen=True)
class ServiceCurve:
    """An exact service curve.

    ``kind`` is one of ``"rate"``, ``"window"``, ``"token_bucket"`` or
    ``"general"``; ``general`` curves carry their function in ``fn``.
    """

    kind: str
    rate: float = 0.0
    burst: float = 0.0
    fn: CumulativeFunction | None = None

    @classmethod
    def rate_server(cls, rate: float) -> "ServiceCurve":
        return cls("rate", rate=float(rate))

    @classmethod
    def window(cls, w: float) -> "ServiceCurve":
        return cls("window", burst=float(w))

    @classmethod
    def token_bucket(cls, b: float, r: float) -> "ServiceCurve":
        return cls("token_bucket", rate=float(r), burst=float(b))

    @classmethod
    def general(cls, fn: CumulativeFunction) -> "ServiceCurve":
        return cls("general", fn=fn)

    def curve(self, horizon: float) -> CumulativeFunction:
        if self.kind == "rate":
            return rate_function(self.rate, horizon)
        if self.kind == "window":
            return step_function(self.burst, horizon)
        if self.kind == "token_bucket":
            return affine_function(self.burst, self.rate, horizon)
        return self.fn.truncate(horizon)

    @property
    def is_rate(self) -> bool:
        return self.kind == "rate"


def as_curve(s, horizon: float) -> CumulativeFunction:
    return s.curve(horizon) if isinstance(s, ServiceCurve) else s


def departures(admitted: CumulativeFunction, s) -> CumulativeFunction:
    """``D = admitted (x) S``."""
    return convolve(admitted, as_curve(s, admitted.horizon))


def backlog_function(admitted: CumulativeFunction, departed: CumulativeFunction) -> PiecewiseLinear:
    return subtract(admitted, departed)


def backlog(admitted: CumulativeFunction, departed: CumulativeFunction, t) -> float:
    b = np.asarray(admitted(t)) - np.asarray(departed(t))
    if np.any(b < -_tol(np.asarray(admitted(t)))):
        raise ConsistencyError(f"negative backlog {np.min(b):g}")
    b = np.maximum(b, 0.0)
    return float(b) if b.ndim == 0 else b


def rtt(admitted: CumulativeFunction, departed: CumulativeFunction, delta_r: float, t: float, side: str = "left") -> float:
    """Round-trip time measured at ``t``: ``t - admitted_lower_inv(D(t - delta_r))``.

    ``side="right"`` returns the limit from the right, which already counts
    acknowledgments arriving at ``t`` itself: when departures are increasing
    just after ``t - delta_r`` the lower inverse is replaced by the upper one.
    """
    if t < delta_r - 1e-15:
        raise ValueError(f"RTT undefined before the feedback delay (t={t:g} < {delta_r:g})")
    u = t - delta_r
    acked = float(departed(u))
    if side == "right":
        probe = min(1e-9, max(departed.horizon - u, 0.0) / 2) or 1e-12
        if float(departed(u + probe)) > acked + float(_tol(acked)):
            return float(t - min(upper_pseudo_inverse(admitted)(acked), t))
    elif side != "left":
        raise ValueError("side must be 'left' or 'right'")
    return float(t - lower_pseudo_inverse(admitted)(acked))


def max_backlog(admitted, departed) -> float:
    b = backlog_function(admitted, departed)
    vals = np.concatenate((b.y, b.left_values()))
    return float(max(vals.max(), 0.0))


__all__ = [
    "ConsistencyError",
    "ServiceCurve",
    "as_curve",
    "backlog",
    "backlog_function",
    "departures",
    "departures_from",
    "max_backlog",
    "rtt",
    "EPS_Y",
]


def departures_from(admitted: CumulativeFunction, departed: CumulativeFunction, t0: float, s) -> CumulativeFunction:
    """Departures after ``admitted`` changed only on ``(t0, horizon]``.

    For a rate server the future depends on the past only through the
    backlog at ``t0``, so only the suffix is rebuilt; other curves fall back
    to a full convolution."""
    if isinstance(s, ServiceCurve) and s.is_rate and t0 > 0:
        y0 = float(departed(t0))
        local = convolve(shift(admitted, t0, y0), rate_function(s.rate, admitted.horizon - t0))
        return stitch(departed, local, t0, y0)
    return departures(admitted, s)
