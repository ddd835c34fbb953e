import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cumulative_functions, random_cumulative
from nccc.minplus import (
    EPS_Y,
    CumulativeFunction,
    MonotonicityError,
    PiecewiseLinear,
    add,
    bursty_source,
    convolve,
    first_crossing_below,
    is_valid_cumulative,
    lower_pseudo_inverse,
    min_constant,
    rate_function,
    shift,
    step_function,
    stitch,
    upper_pseudo_inverse,
)
from nccc.oracle import exact_convolve_at, grid_convolve

MB = 8e6
H_VEGAS = 3e-3


def vegas_source(horizon=H_VEGAS):
    return bursty_source(horizon, 50e9, [(0.0, 4 * MB)] + [(1e-3 + 0.5e-3 * k, 1.5 * MB) for k in range(4)])


def close(a, b, tol=1.0):
    return np.max(np.abs(np.asarray(a) - np.asarray(b))) <= tol


# representation --------------------------------------------------------------

class TestRepresentation:
    def test_left_continuous_jump(self):
        f = step_function(100e3, 1e-3, at=1e-6)
        assert f(1e-6) == 0.0
        assert f.right_limit(1e-6) == 100e3
        assert f(1.0000001e-6) == 100e3

    def test_vegas_source_values(self):
        A = vegas_source()
        assert A(0.0) == 0.0
        assert A(0.1e-3) == pytest.approx(37e6, abs=1e-3)

    def test_zero_for_nonpositive_time(self):
        f = rate_function(1e9, 1.0)
        assert f(-1.0) == 0.0 and f(0.0) == 0.0

    def test_validator_rejects_decrease(self):
        with pytest.raises(MonotonicityError):
            CumulativeFunction([0.0, 1.0], [5.0, 3.0], [0.0, 0.0], 2.0)
        with pytest.raises(MonotonicityError):
            CumulativeFunction([0.0], [0.0], [-1.0], 2.0)
        with pytest.raises(MonotonicityError):
            CumulativeFunction([0.0], [-5.0], [0.0], 2.0)

    def test_canonical_form_merges_collinear(self):
        f = CumulativeFunction([0.0, 1.0, 2.0], [0.0, 1.0, 2.0], [1.0, 1.0, 1.0], 3.0)
        assert len(f) == 1

    def test_close_breakpoints_keep_steep_segments_monotone(self):
        # two breakpoints 1e-13 s apart on a 3e9 bit/s ramp must fuse without a downward jump
        t = [0.0, 1.0, 1.0 + 1e-13, 2.0]
        y = [0.0, 10.0, 10.0003, 10.0003 + 3e9 * (1.0 - 1e-13)]
        s = [10.0, 3e9, 3e9, 0.0]
        f = CumulativeFunction(t, y, s, 3.0)
        assert is_valid_cumulative(f)

    def test_csv_round_trip(self):
        f = vegas_source()
        g = CumulativeFunction.from_csv(f.to_csv())
        assert g.horizon == f.horizon
        np.testing.assert_array_equal(g.t, f.t)
        np.testing.assert_allclose(g.y, f.y)


# convolution examples ---------------------------------------------------------

class TestConvolveExamples:
    def test_rate_rate_is_min_rate(self):
        r = convolve(rate_function(60e9, 1e-3), rate_function(100e9, 1e-3))
        assert len(r) == 1 and r.s[0] == 60e9 and r.y[0] == 0.0

    def test_vegas_burst_drain(self):
        H = 1e-3
        A = bursty_source(H, 50e9, [(0.0, 32e6)])
        for generic in (False, True):
            D = convolve(A, rate_function(100e9, H), generic=generic)
            assert D(0.3e-3) == pytest.approx(30e6, abs=1e-3)
            assert D(0.64e-3) == pytest.approx(64e6, abs=1e-3)
            assert D(0.8e-3) == pytest.approx(32e6 + 50e9 * 0.8e-3, abs=1e-3)
            assert D(0.9e-3) == pytest.approx(A(0.9e-3), abs=1e-3)

    def test_window_curve_gives_min(self):
        rng = np.random.default_rng(3)
        A = random_cumulative(rng, horizon=1.0)
        W = 7.5
        got = convolve(A, step_function(W, 1.0))
        ts = np.linspace(1e-6, 1.0, 500)
        assert close(got(ts), np.minimum(A(ts), W), 1e-6)
        assert close(got(ts), min_constant(A, W)(ts), 1e-6)

    def test_zero_operand(self):
        f = CumulativeFunction([0.0], [0.0], [0.0], 1.0)
        assert convolve(f, f).final_value() == 0.0


# algebraic laws --------------------------------------------------------------

GRID = np.linspace(0.0, 1.0, 1000)


@settings(max_examples=60, deadline=None)
@given(cumulative_functions(), cumulative_functions())
def test_commutativity(f, g):
    assert close(convolve(f, g)(GRID), convolve(g, f)(GRID))


@settings(max_examples=40, deadline=None)
@given(cumulative_functions(n_max=5), cumulative_functions(n_max=5), cumulative_functions(n_max=5))
def test_associativity(f, g, h):
    a = convolve(convolve(f, g), h)(GRID)
    b = convolve(f, convolve(g, h))(GRID)
    assert close(a, b, max(1.0, 1e-9 * np.max(np.abs(a))))


@settings(max_examples=40, deadline=None)
@given(cumulative_functions(), cumulative_functions(), cumulative_functions())
def test_monotonicity(f, extra, g):
    bigger = add(f, extra)
    assert np.all(convolve(f, g)(GRID) <= convolve(bigger, g)(GRID) + 1.0)


@settings(max_examples=60, deadline=None)
@given(cumulative_functions(), cumulative_functions())
def test_matches_definitional_oracle(f, g):
    got = convolve(f, g)
    want = exact_convolve_at(f, g, GRID)
    assert close(got(GRID), want, max(1.0, 1e-9 * np.max(want)))
    assert is_valid_cumulative(got)


@settings(max_examples=30, deadline=None)
@given(cumulative_functions(), cumulative_functions())
def test_plain_grid_upper_bounds(f, g):
    ts, grid_vals = grid_convolve(f, g, 200)
    assert np.all(convolve(f, g)(ts) <= grid_vals + EPS_Y)


@settings(max_examples=40, deadline=None)
@given(cumulative_functions(), cumulative_functions())
def test_generic_path_agrees_with_fast_path(f, g):
    assert close(convolve(f, g)(GRID), convolve(f, g, generic=True)(GRID))


def test_rate_grid_error_bound():
    f, g = rate_function(3.0, 1.0), rate_function(5.0, 1.0)
    ts, vals = grid_convolve(f, g, 1000)
    assert np.max(np.abs(vals - convolve(f, g)(ts))) <= 5.0 * (ts[1] - ts[0])


def test_grid_oracle_rejects_coarse_grid():
    f = rate_function(1.0, 1.0)
    with pytest.raises(ValueError):
        grid_convolve(f, f, 50)


# pseudo-inverses ------------------------------------------------------------

class TestPseudoInverse:
    def test_linear_inverse(self):
        f = rate_function(100e9, 1e-3)
        assert lower_pseudo_inverse(f)(1e6) == pytest.approx(1e-5)
        assert upper_pseudo_inverse(f)(1e6) == pytest.approx(1e-5)

    def test_zero_level(self):
        f = step_function(5.0, 1.0, at=0.3)
        x = upper_pseudo_inverse(f)(0.0)
        assert x >= 0 and f(x) == 0.0
        assert lower_pseudo_inverse(f)(0.0) == 0.0

    def test_plateau_and_jump(self):
        f = step_function(5.0, 1.0, at=0.3)
        assert upper_pseudo_inverse(f)(2.0) == pytest.approx(0.3)
        assert lower_pseudo_inverse(f)(2.0) == pytest.approx(0.3)
        assert upper_pseudo_inverse(f)(5.0) == np.inf
        assert lower_pseudo_inverse(f)(6.0) == np.inf


@settings(max_examples=200, deadline=None)
@given(cumulative_functions(), st.floats(0.0, 0.999))
def test_upper_inverse_property(f, u):
    top = f.final_value()
    y = u * top
    x = upper_pseudo_inverse(f)(y)
    if not np.isfinite(x) or x + 1e-9 >= f.horizon:
        return
    tol = 1e-3 + 1e-12 * abs(y)
    assert f(x) <= y + tol
    assert y < f(x + 1e-9) + tol


# shifts, stitching, crossings ------------------------------------------------------

def test_shift_definition():
    A = vegas_source()
    t0, y0 = 0.4e-3, 20e6
    r = shift(A, t0, y0)
    ts = np.linspace(1e-7, 1e-3, 300)
    assert close(r(ts), A(ts + t0) - y0, 1e-3)
    assert r(0.0) == 0.0
    assert r.right_limit(0.0) == pytest.approx(A.right_limit(t0) - y0)


def test_stitch_zero_shift_identity():
    A = vegas_source()
    local = shift(A, 1e-3, A(1e-3))
    out = stitch(A, local, 1e-3, A(1e-3))
    ts = np.linspace(0, H_VEGAS, 800)
    assert close(out(ts), A(ts), 1e-3)


def test_first_crossing_unit_example():
    # f = min(t, 3), g = t - 5 for t > 5
    f = CumulativeFunction([0.0, 3.0], [0.0, 3.0], [1.0, 0.0], 20.0)
    g = PiecewiseLinear([0.0, 5.0], [0.0, 0.0], [0.0, 1.0], 20.0)
    assert first_crossing_below(f, g, 0.0) == pytest.approx(8.0)
    assert first_crossing_below(g, g, 0.0) is None
    big = rate_function(10.0, 20.0)
    assert first_crossing_below(big, g, 0.0) is None
