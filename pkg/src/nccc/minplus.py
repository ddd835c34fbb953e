"""Exact min-plus algebra over left-continuous piecewise-linear functions.

A function is stored by its breakpoints ``t[i]`` (``t[0] == 0``), the
right-limit ``y[i]`` at each breakpoint and the slope ``s[i]`` valid on
``(t[i], t[i+1]]``.  The value at a breakpoint is the limit from the left, so
a jump at ``t[i]`` shows up as ``y[i]`` exceeding the end of the previous
piece.  Every function is zero for ``t <= 0``.  Time is in seconds, data in
bits.
"""

from __future__ import annotations

import io
from typing import Iterator, NamedTuple, Sequence

import numpy as np

EPS_T = 1e-12
EPS_Y = 1e-3
REL_Y = 1e-12


class MonotonicityError(ValueError):
    """An operation would produce a decreasing or negative cumulative function."""


def _tol(v) -> np.ndarray:
    v = np.abs(np.asarray(v, dtype=float))
    v = np.where(np.isfinite(v), v, 0.0)
    return EPS_Y + REL_Y * v


class Segment(NamedTuple):
    t_start: float
    t_end: float
    y_start: float
    slope: float
    jump: float


def _canon(t, y, s, horizon):
    """Normal form: drop breakpoints past the horizon, fuse near-duplicate
    times, merge collinear neighbours.  Infinite pieces (``y == inf``) are
    allowed and merged with each other."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    if t.size == 0:
        return np.zeros(1), np.zeros(1), np.zeros(1)
    keep = t < horizon
    keep[0] = True
    t, y, s = t[keep], y[keep], s[keep]
    while t.size > 1:
        close = np.diff(t) <= EPS_T
        if not close.any():
            break
        # a run of close points collapses onto its first time, keeping the last values
        drop = np.append(close, False)
        nxt = np.flatnonzero(close) + 1
        t, y = t.copy(), y.copy()
        # moving a point back must not stretch its steep segment
        with np.errstate(invalid="ignore"):
            back = y[nxt] - s[nxt] * (t[nxt] - t[nxt - 1])
        y[nxt] = np.where(np.isfinite(back), np.maximum(back, y[nxt - 1]), y[nxt])
        t[nxt] = t[nxt - 1]
        t, y, s = t[~drop], y[~drop], s[~drop]
    t[0] = 0.0
    if t.size == 1:
        return t, y, s
    fin = np.isfinite(y)
    with np.errstate(invalid="ignore"):
        left = y[:-1] + s[:-1] * (t[1:] - t[:-1])
        tol = _tol(np.where(fin[1:], y[1:], 0))
        # slope equality is relative so that chains of merges cannot drift
        same_slope = np.abs(s[1:] - s[:-1]) <= 1e-9 * np.maximum(np.abs(s[1:]), np.abs(s[:-1])) + 1e-12
        collinear = fin[:-1] & fin[1:] & (np.abs(y[1:] - left) <= tol) & same_slope
    both_inf = ~fin[:-1] & ~fin[1:]
    drop = np.concatenate(([False], collinear | both_inf))
    if drop.any():
        t, y, s = t[~drop], y[~drop], s[~drop]
    return t, y, s


class PiecewiseLinear:
    """Left-continuous piecewise-linear function of time, zero for ``t <= 0``.

    No sign or monotonicity is assumed; differences such as backlog or
    ``f - g`` live here.  Instances are immutable.
    """

    __slots__ = ("t", "y", "s", "horizon")

    def __init__(self, t, y, s, horizon: float, *, canonical: bool = True):
        horizon = float(horizon)
        if canonical:
            t, y, s = _canon(t, y, s, horizon)
        else:
            t, y, s = (np.asarray(a, dtype=float) for a in (t, y, s))
        for a in (t, y, s):
            a.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "horizon", horizon)

    def __setattr__(self, name, value):
        raise AttributeError("piecewise-linear functions are immutable")

    def __repr__(self):
        return f"{type(self).__name__}(n={self.t.size}, horizon={self.horizon:g})"

    def __len__(self):
        return int(self.t.size)

    # evaluation -----------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(self.t, x, side="left") - 1
        ic = np.clip(i, 0, None)
        v = self.y[ic] + self.s[ic] * (x - self.t[ic])
        out = np.where(i < 0, 0.0, v)
        return float(out) if out.ndim == 0 else out

    def right_limit(self, x):
        """Limit from the right, ``f(x+)``."""
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(self.t, x, side="right") - 1
        ic = np.clip(i, 0, None)
        v = self.y[ic] + self.s[ic] * (x - self.t[ic])
        out = np.where(i < 0, 0.0, v)
        return float(out) if out.ndim == 0 else out

    def left_values(self) -> np.ndarray:
        """Value at every breakpoint (left limit); zero at the origin."""
        lv = np.empty_like(self.y)
        lv[0] = 0.0
        lv[1:] = self.y[:-1] + self.s[:-1] * np.diff(self.t)
        return lv

    def jumps(self) -> np.ndarray:
        return self.y - self.left_values()

    def segments(self) -> Iterator[Segment]:
        ends = np.append(self.t[1:], max(self.horizon, self.t[-1]))
        for a, b, y0, sl, j in zip(self.t, ends, self.y, self.s, self.jumps()):
            yield Segment(float(a), float(b), float(y0), float(sl), float(j))

    def final_value(self) -> float:
        return self(self.horizon)

    def arrays(self):
        return self.t, self.y, self.s

    def truncate(self, horizon: float):
        return type(self)(self.t, self.y, self.s, horizon)

    def to_csv(self) -> str:
        """Debug dump: one ``t,y,slope,jump`` row per breakpoint (y is the right-limit)."""
        buf = io.StringIO()
        buf.write(f"# horizon={self.horizon!r}\n")
        buf.write("t,y,slope,jump\n")
        for seg in self.segments():
            buf.write(f"{seg.t_start!r},{seg.y_start!r},{seg.slope!r},{seg.jump!r}\n")
        return buf.getvalue()

    def sample(self, ts) -> np.ndarray:
        return np.asarray(self(np.asarray(ts, dtype=float)))

    def __sub__(self, other: "PiecewiseLinear") -> "PiecewiseLinear":
        return _combine(self, other, np.subtract, PiecewiseLinear)

    def __neg__(self):
        return PiecewiseLinear(self.t, -self.y, -self.s, self.horizon)


class CumulativeFunction(PiecewiseLinear):
    """Non-negative, non-decreasing, left-continuous piecewise-linear function."""

    __slots__ = ()

    def __init__(self, t, y, s, horizon: float, *, canonical: bool = True, validate: bool = True):
        if validate:
            t, y, s = _validated(t, y, s, horizon, canonical)
            canonical = False
        super().__init__(t, y, s, horizon, canonical=canonical)

    @classmethod
    def from_segments(cls, segments: Sequence[tuple[float, float, float]], horizon: float):
        """Build from ``(t, y_right_limit, slope)`` triples."""
        if not segments or segments[0][0] != 0.0:
            segments = [(0.0, 0.0, 0.0)] + list(segments)
        t, y, s = zip(*segments)
        return cls(t, y, s, horizon)

    @classmethod
    def from_csv(cls, text: str, horizon: float | None = None):
        lines = text.strip().splitlines()
        if horizon is None:
            for r in lines:
                if r.startswith("#") and "horizon=" in r:
                    horizon = float(r.split("horizon=", 1)[1].split()[0])
        rows = [r for r in lines if r and not r.startswith("#")]
        if rows and rows[0].startswith("t"):
            rows = rows[1:]
        vals = np.array([[float(x) for x in r.split(",")[:3]] for r in rows])
        if horizon is None:
            horizon = float(vals[-1, 0]) * 2 if vals[-1, 0] > 0 else 1.0
        return cls(vals[:, 0], vals[:, 1], vals[:, 2], horizon)


def _validated(t, y, s, horizon, canonical):
    if canonical:
        t, y, s = _canon(t, y, s, horizon)
    else:
        t, y, s = (np.array(a, dtype=float) for a in (t, y, s))
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(s))):
        raise MonotonicityError("cumulative function must be finite")
    if t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise MonotonicityError("breakpoints must start at 0 and strictly increase")
    tol = _tol(y)
    seg_len = np.append(np.diff(t), max(horizon - t[-1], 0.0))
    if np.any(y < -tol):
        raise MonotonicityError("negative value")
    if np.any(s * np.maximum(seg_len, EPS_T) < -tol):
        raise MonotonicityError("negative slope")
    left = np.concatenate(([0.0], y[:-1] + s[:-1] * np.diff(t)))
    if np.any(y - left < -tol):
        raise MonotonicityError("downward jump")
    y = np.maximum(y, 0.0)
    s = np.maximum(s, 0.0)
    # absorb downward rounding noise so later prefix evaluations stay monotone
    left = np.concatenate(([0.0], y[:-1] + s[:-1] * np.diff(t)))
    y = np.maximum(y, left)
    return t, y, s


def is_valid_cumulative(f: PiecewiseLinear) -> bool:
    try:
        _validated(f.t, f.y, f.s, f.horizon, False)
    except MonotonicityError:
        return False
    return True


# constructors --------------------------------------------------------------

def zero(horizon: float) -> CumulativeFunction:
    return CumulativeFunction([0.0], [0.0], [0.0], horizon)


def rate_function(rate: float, horizon: float) -> CumulativeFunction:
    """``max(rate * t, 0)``."""
    return CumulativeFunction([0.0], [0.0], [rate], horizon)


def affine_function(burst: float, rate: float, horizon: float) -> CumulativeFunction:
    """``burst + rate * t`` for ``t > 0`` (token bucket), zero at the origin."""
    return CumulativeFunction([0.0], [burst], [rate], horizon)


def step_function(height: float, horizon: float, at: float = 0.0) -> CumulativeFunction:
    """Zero up to ``at`` (inclusive), ``height`` afterwards."""
    if at <= 0:
        return CumulativeFunction([0.0], [height], [0.0], horizon)
    return CumulativeFunction([0.0, at], [0.0, height], [0.0, 0.0], horizon)


def bursty_source(
    horizon: float,
    rate: float = 0.0,
    bursts: Sequence[tuple[float, float]] = (),
) -> CumulativeFunction:
    """Constant-rate source with instantaneous bursts ``(time, size)``.

    A burst at time ``u`` is counted for ``t > u`` (left-continuity)."""
    bursts = sorted((float(u), float(b)) for u, b in bursts if b > 0)
    t = [0.0]
    y = [sum(b for u, b in bursts if u <= 0.0)]
    s = [rate]
    acc = y[0]
    for u, b in bursts:
        if u <= 0.0:
            continue
        acc += b
        t.append(u)
        y.append(acc + rate * u)
        s.append(rate)
    return CumulativeFunction(t, y, s, horizon)


# elementwise combination ---------------------------------------------------

def _eval_rc(t, y, s, u):
    i = np.searchsorted(t, u, side="right") - 1
    i = np.clip(i, 0, None)
    with np.errstate(invalid="ignore"):
        v = y[i] + s[i] * (u - t[i])
    v = np.where(np.isinf(y[i]), y[i], v)
    return v, s[i]


def _combine(f, g, op, cls):
    horizon = min(f.horizon, g.horizon)
    u = np.union1d(f.t, g.t)
    a, sa = _eval_rc(f.t, f.y, f.s, u)
    b, sb = _eval_rc(g.t, g.y, g.s, u)
    return cls(u, op(a, b), op(sa, sb), horizon)


def add(f: CumulativeFunction, g: CumulativeFunction) -> CumulativeFunction:
    return _combine(f, g, np.add, CumulativeFunction)


def add_many(fs: Sequence[CumulativeFunction]) -> CumulativeFunction:
    horizon = min(f.horizon for f in fs)
    u = np.unique(np.concatenate([f.t for f in fs]))
    y = np.zeros(u.size)
    s = np.zeros(u.size)
    for f in fs:
        a, sa = _eval_rc(f.t, f.y, f.s, u)
        y += a
        s += sa
    return CumulativeFunction(u, y, s, horizon)


def subtract(f: PiecewiseLinear, g: PiecewiseLinear) -> PiecewiseLinear:
    return _combine(f, g, np.subtract, PiecewiseLinear)


def _rc_min(t1, y1, s1, t2, y2, s2, end):
    """Pointwise minimum of two right-continuous PL arrays over ``[0, end)``.

    Pieces may be ``+inf`` (value ``inf``, slope 0)."""
    u = np.union1d(t1, t2)
    u = u[u < end]
    if u.size == 0 or u[0] != 0.0:
        u = np.concatenate(([0.0], u[u > 0]))
    a, sa = _eval_rc(t1, y1, s1, u)
    b, sb = _eval_rc(t2, y2, s2, u)
    L = np.diff(np.append(u, end))
    fa = np.isfinite(a)
    fb = np.isfinite(b)
    with np.errstate(invalid="ignore"):
        d0 = a - b
        d1 = d0 + (sa - sb) * L
    tol = _tol(np.maximum(np.where(fa, np.abs(a), 0), np.where(fb, np.abs(b), 0)))
    both = fa & fb
    tie = both & (np.abs(d0) <= tol)
    pick_a = (~fb) | (both & ((d0 < -tol) | (tie & (sa <= sb))))
    y0 = np.where(pick_a, a, b)
    s0 = np.where(pick_a, sa, sb)
    s0 = np.where(np.isfinite(y0), s0, 0.0)
    cross = both & (((d0 < -tol) & (d1 > tol)) | ((d0 > tol) & (d1 < -tol)))
    if cross.any():
        idx = np.flatnonzero(cross)
        xc = u[idx] - d0[idx] / (sa[idx] - sb[idx])
        # after the crossing the other line is the lower one
        s_after = np.where(pick_a[idx], sb[idx], sa[idx])
        y_after = np.where(pick_a[idx], b[idx] + sb[idx] * (xc - u[idx]), a[idx] + sa[idx] * (xc - u[idx]))
        tt = np.concatenate((u, xc))
        yy = np.concatenate((y0, y_after))
        ss = np.concatenate((s0, s_after))
        order = np.argsort(tt, kind="stable")
        return tt[order], yy[order], ss[order]
    return u, y0, s0


def _rc_envelope(parts, end):
    """Lower envelope of many right-continuous PL arrays (divide and conquer)."""
    parts = list(parts)
    if not parts:
        raise ValueError("empty envelope")
    while len(parts) > 1:
        nxt = []
        for k in range(0, len(parts) - 1, 2):
            t, y, s = _rc_min(*parts[k], *parts[k + 1], end)
            nxt.append(_canon(t, y, s, end))
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def pointwise_min(f: CumulativeFunction, g: CumulativeFunction) -> CumulativeFunction:
    horizon = min(f.horizon, g.horizon)
    t, y, s = _rc_min(f.t, f.y, f.s, g.t, g.y, g.s, horizon)
    return CumulativeFunction(t, y, s, horizon)


def pointwise_max(f: CumulativeFunction, g: CumulativeFunction) -> CumulativeFunction:
    horizon = min(f.horizon, g.horizon)
    t, y, s = _rc_min(f.t, -f.y, -f.s, g.t, -g.y, -g.s, horizon)
    return CumulativeFunction(t, -y, -s, horizon)


def min_constant(f: CumulativeFunction, level: float) -> CumulativeFunction:
    """``min(f(t), level)`` for ``t > 0``."""
    t, y, s = _rc_min(f.t, f.y, f.s, np.zeros(1), np.array([float(level)]), np.zeros(1), f.horizon)
    return CumulativeFunction(t, y, s, f.horizon)


# shifts --------------------------------------------------------------------

def shift(f: PiecewiseLinear, dt: float, dy: float, horizon: float | None = None) -> CumulativeFunction:
    """``h(t) = f(t + dt) - dy`` for ``t > 0`` and ``h(t) = 0`` for ``t <= 0``."""
    if dt < 0:
        raise ValueError("shift origin must be non-negative")
    if horizon is None:
        horizon = max(f.horizon - dt, EPS_T)
    k = int(np.searchsorted(f.t, dt, side="right") - 1)
    y0 = f.y[k] + f.s[k] * (dt - f.t[k]) - dy
    if y0 < -float(_tol(dy)):
        raise MonotonicityError(f"shift by dy={dy:g} exceeds f(dt+)={y0 + dy:g}")
    t = np.concatenate(([0.0], f.t[k + 1:] - dt))
    y = np.concatenate(([max(y0, 0.0)], f.y[k + 1:] - dy))
    s = np.concatenate(([f.s[k]], f.s[k + 1:]))
    return CumulativeFunction(t, y, s, horizon)


def delay(f: PiecewiseLinear, d: float) -> PiecewiseLinear:
    """Right shift: ``h(t) = f(t - d)`` (zero for ``t <= d``)."""
    if d < 0:
        raise ValueError("delay must be non-negative")
    if d == 0:
        return f
    t = np.concatenate(([0.0], f.t + d))
    y = np.concatenate(([0.0], f.y))
    s = np.concatenate(([0.0], f.s))
    return type(f)(t, y, s, f.horizon)


def stitch(global_fn: CumulativeFunction, local_fn: CumulativeFunction, t_origin: float, y_origin: float) -> CumulativeFunction:
    """Keep ``global_fn`` on ``[0, t_origin]`` and use ``y_origin + local_fn(t - t_origin)`` after."""
    g = global_fn
    before = g(t_origin)
    start = y_origin + local_fn.y[0]
    if start < before - float(_tol(before)):
        raise MonotonicityError(
            f"stitch at t={t_origin:g} drops from {before:g} to {start:g}"
        )
    if t_origin <= 0.0:
        return CumulativeFunction(local_fn.t, local_fn.y + y_origin, local_fn.s, g.horizon)
    k = int(np.searchsorted(g.t, t_origin, side="left"))
    t = np.concatenate((g.t[:k], local_fn.t + t_origin))
    y = np.concatenate((g.y[:k], local_fn.y + y_origin))
    s = np.concatenate((g.s[:k], local_fn.s))
    return CumulativeFunction(t, y, s, g.horizon)


# convolution ---------------------------------------------------------------

def _shape_rate(f: PiecewiseLinear, r: float):
    """``f (x) max(r t, 0)`` by a single sweep (greedy shaper)."""
    t, y, s = f.t, f.y, f.s
    n = t.size
    M = 0.0  # inf of f(u) - r u over the closed past
    ot, oy, os_ = [], [], []
    for i in range(n):
        ti, yi, si = float(t[i]), float(y[i]), float(s[i])
        te = float(t[i + 1]) if i + 1 < n else np.inf
        g0 = yi - r * ti
        if si < r:
            if g0 <= M + EPS_Y:
                ot.append(ti); oy.append(yi); os_.append(si)
                M = min(M, g0 + (si - r) * (te - ti)) if te < np.inf else M
            else:
                tc = ti + (g0 - M) / (r - si)
                ot.append(ti); oy.append(M + r * ti); os_.append(r)
                if tc < te:
                    ot.append(tc); oy.append(M + r * tc); os_.append(si)
                    if te < np.inf:
                        M = g0 + (si - r) * (te - ti)
        else:
            ot.append(ti); oy.append(M + r * ti); os_.append(r)
    return np.array(ot), np.array(oy), np.array(os_)


def _simple_kind(g: PiecewiseLinear):
    if g.t.size != 1:
        return None
    y0, s0 = float(g.y[0]), float(g.s[0])
    if y0 == 0.0:
        return ("rate", s0)
    if s0 == 0.0:
        return ("window", y0)
    return ("bucket", y0, s0)


def _convolve_simple(f, kind, horizon):
    if kind[0] == "rate":
        t, y, s = _shape_rate(f, kind[1])
        return CumulativeFunction(t, y, s, horizon)
    if kind[0] == "window":
        t, y, s = _rc_min(f.t, f.y, f.s, np.zeros(1), np.array([kind[1]]), np.zeros(1), horizon)
        return CumulativeFunction(t, y, s, horizon)
    b, r = kind[1], kind[2]
    t1, y1, s1 = _shape_rate(f, r)
    t, y, s = _rc_min(f.t, f.y, f.s, t1, y1 + b, s1, horizon)
    return CumulativeFunction(t, y, s, horizon)


def _convolve_generic(f, g, horizon):
    """Lower envelope of ``f(b) + g(. - b)`` over breakpoints ``b`` of f and the
    symmetric family; right-limits of that envelope are exact for the
    (left-continuous) convolution."""
    parts = []
    for a, b in ((f, g), (g, f)):
        lv = a.left_values()
        for ti, lift in zip(a.t, lv):
            if ti >= horizon:
                continue
            if ti == 0.0:
                parts.append((b.t, b.y + lift, b.s))
            else:
                parts.append((
                    np.concatenate(([0.0], b.t + ti)),
                    np.concatenate(([np.inf], b.y + lift)),
                    np.concatenate(([0.0], b.s)),
                ))
    t, y, s = _rc_envelope(parts, horizon)
    return CumulativeFunction(t, y, s, horizon)


def convolve(f: CumulativeFunction, g: CumulativeFunction, *, generic: bool = False) -> CumulativeFunction:
    """Exact min-plus convolution ``inf_{0<=s<=t} f(s) + g(t-s)``.

    Single-piece operands (rate, token-bucket, window curves) take closed-form
    paths; ``generic=True`` forces the envelope algorithm."""
    horizon = min(f.horizon, g.horizon)
    if not generic:
        kind = _simple_kind(g)
        if kind is not None:
            return _convolve_simple(f, kind, horizon)
        kind = _simple_kind(f)
        if kind is not None:
            return _convolve_simple(g, kind, horizon)
    return _convolve_generic(f, g, horizon)


# pseudo-inverses -----------------------------------------------------------

class PseudoInverse:
    """Callable generalized inverse (bits -> seconds) of a cumulative function."""

    def __init__(self, f: CumulativeFunction, upper: bool):
        self.f = f
        self.upper = upper

    def __call__(self, level):
        fn = _upper_inv if self.upper else _lower_inv
        v = np.asarray(level, dtype=float)
        out = fn(self.f, v)
        return float(out) if out.ndim == 0 else out


def _upper_inv(f, v):
    """sup{x >= 0 : f(x) <= v}."""
    t, y, s = f.t, f.y, f.s
    n = t.size
    i = np.searchsorted(y, v + _tol(v), side="right") - 1
    ic = np.clip(i, 0, None)
    nxt = np.where(ic + 1 < n, t[np.minimum(ic + 1, n - 1)], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.where(s[ic] > 0, t[ic] + (v - y[ic]) / s[ic], np.inf)
    x = np.minimum(nxt, np.maximum(lin, t[ic]))
    x = np.where(i < 0, 0.0, x)
    return np.where(v < 0, -np.inf, x)


def _lower_inv(f, v):
    """inf{x >= 0 : f(x) >= v}; 0 for v <= 0, +inf if never reached."""
    t, y, s = f.t, f.y, f.s
    n = t.size
    j = np.searchsorted(y, v - _tol(v), side="left")
    jm = np.clip(j - 1, 0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        lin = np.where(s[jm] > 0, t[jm] + (v - y[jm]) / s[jm], np.inf)
    tj = np.where(j < n, t[np.minimum(j, n - 1)], np.inf)
    x = np.where(j == 0, 0.0, np.minimum(np.maximum(lin, t[jm]), tj))
    return np.where(v <= 0, 0.0, x)


def upper_pseudo_inverse(f: CumulativeFunction) -> PseudoInverse:
    return PseudoInverse(f, upper=True)


def lower_pseudo_inverse(f: CumulativeFunction) -> PseudoInverse:
    return PseudoInverse(f, upper=False)


# crossing searches ---------------------------------------------------------

def first_below(h: PiecewiseLinear, t_from: float, threshold: float = 0.0, t_until: float | None = None):
    """inf{t > t_from : h(t) < threshold - tol}; the returned time is where the
    line reaches ``threshold`` (not the tolerance band).  ``None`` if the
    condition never holds before ``t_until`` (default: horizon)."""
    if t_until is None:
        t_until = h.horizon
    t_from = max(float(t_from), 0.0)
    if t_from >= t_until:
        return None
    k0 = int(np.searchsorted(h.t, t_from, side="right") - 1)
    k0 = max(k0, 0)
    starts = np.concatenate(([t_from], h.t[k0 + 1:]))
    keep = starts < t_until
    starts = starts[keep]
    idx = np.concatenate(([k0], np.arange(k0 + 1, h.t.size)))[keep]
    ys = h.y[idx] + h.s[idx] * (starts - h.t[idx])  # right-limits
    sl = h.s[idx]
    ends = np.append(starts[1:], t_until)
    ye = ys + sl * (ends - starts)
    tol = _tol(np.maximum(np.abs(ys), np.abs(ye)))
    lvl = threshold - tol
    hit_start = ys < lvl
    hit_inside = (~hit_start) & (ye < lvl) & (sl < 0)
    hit = np.flatnonzero(hit_start | hit_inside)
    if hit.size == 0:
        return None
    k = hit[0]
    if hit_start[k]:
        return float(starts[k])
    x = starts[k] + (ys[k] - threshold) / (-sl[k])
    return float(min(max(x, starts[k]), ends[k]))


def first_crossing_below(f: PiecewiseLinear, g: PiecewiseLinear, t_from: float, t_until: float | None = None):
    """inf{t > t_from : f(t) < g(t)} or ``None``."""
    return first_below(subtract(f, g), t_from, 0.0, t_until)


def first_at_or_above(f: PiecewiseLinear, level: float, t_from: float, t_until: float | None = None, strict: bool = False):
    """inf{t > t_from : f(t) >= level} (``> level`` when ``strict``)."""
    neg = PiecewiseLinear(f.t, -f.y, -f.s, f.horizon, canonical=False)
    if strict:
        return first_below(neg, t_from, -level, t_until)
    return first_below(neg, t_from, -level + 2 * float(_tol(level)), t_until)


def max_abs_diff(f: PiecewiseLinear, g: PiecewiseLinear, ts) -> float:
    return float(np.max(np.abs(f.sample(ts) - g.sample(ts))))
