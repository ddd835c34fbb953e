import math

import numpy as np
import pytest

from nccc.congestion_events import (
    ConfigurationError,
    EcnState,
    EventLog,
    PfcState,
    ShiftRecord,
    ack_function,
    ecn_mark_times,
    next_timeout,
    packet_uniforms,
    pfc_resume,
    pfc_schedule,
    shift_after_admit,
    shift_after_timeout,
    stitch,
)
from nccc.minplus import (
    CumulativeFunction,
    MonotonicityError,
    PiecewiseLinear,
    bursty_source,
    is_valid_cumulative,
    rate_function,
    zero,
)
from nccc.path_server import ServiceCurve, departures

KB = 8e3
C = 100e9


# acknowledgments ----------------------------------------------------------------

class TestAck:
    def test_fluid_is_delayed(self):
        D = rate_function(C, 1e-3)
        ack = ack_function(D, 20e-6)
        assert ack(10e-6) == 0.0
        assert ack(50e-6) == pytest.approx(C * 30e-6)

    def test_packet_staircase(self):
        D = rate_function(C, 10e-6)
        ack = ack_function(D, 0.0, i_max=12e3)
        # steps every i_max / rate = 0.12 us
        assert ack(0.11e-6) == 0.0
        assert ack(0.1201e-6) == 12e3
        assert ack(0.2399e-6) == 12e3
        assert ack(0.2401e-6) == 24e3
        assert np.all(ack.s == 0.0)

    def test_zero(self):
        assert ack_function(zero(1.0), 1e-3).final_value() == 0.0
        assert ack_function(zero(1.0), 1e-3, i_max=1e3).final_value() == 0.0

    def test_rejects_nonpositive_packet(self):
        with pytest.raises(ConfigurationError):
            ack_function(rate_function(1.0, 1.0), 0.1, i_max=0.0)


# timeouts ------------------------------------------------------------------

class TestTimeout:
    def test_unit_example(self):
        H = 20.0
        f = CumulativeFunction([0.0, 3.0], [0.0, 3.0], [1.0, 0.0], H)
        # admitted grows at unit rate; acknowledgments stall at 3
        admitted = rate_function(1.0, H)
        assert next_timeout(admitted, f, delta_r=0.0, tau_o=5.0, t_from=0.0) == pytest.approx(8.0)

    def test_lossless_fast_server(self):
        A = rate_function(10e9, 1e-3)
        D = departures(A, ServiceCurve.rate_server(C))
        assert next_timeout(A, D, 20e-6, 100e-6, 0.0) is None

    def test_frozen_source_catches_up(self):
        H = 2e-3
        A = bursty_source(H, 0.0, [(0.0, 8e6)])
        D = departures(A, ServiceCurve.rate_server(C))
        # 8 Mbit drains in 80 us, acknowledged by 100 us: no timeout afterwards
        assert next_timeout(A, D, 20e-6, 200e-6, 0.0) is None
        assert next_timeout(A, D, 20e-6, 50e-6, 0.0) == pytest.approx(50e-6)

    def test_soundness(self):
        H = 2e-3
        A = bursty_source(H, 80e9, [(0.0, 20e6)])
        S = ServiceCurve.rate_server(50e9)
        D = departures(A, S)
        t_to = next_timeout(A, D, 20e-6, 150e-6, 0.0)
        assert t_to is not None
        ts = np.linspace(0, t_to, 500)[:-1]
        assert np.all(D(ts - 20e-6) >= A(ts - 150e-6) - 1e-3)

    def test_rejects_short_timeout(self):
        A = rate_function(1.0, 1.0)
        with pytest.raises(ConfigurationError):
            next_timeout(A, A, 0.1, 0.1, 0.0)


# ECN ----------------------------------------------------------------------

def plateau_backlog(t_star, length, level, H):
    return PiecewiseLinear([0.0, t_star, t_star + length], [0.0, level, 0.0], [0.0, 0.0, 0.0], H)


class TestEcn:
    def params(self, **kw):
        d = dict(k_min=5 * KB, k_max=200 * KB, p_max=0.01, delta_tau_ecn=50e-6)
        d.update(kw)
        return EcnState(**d)

    def test_single_crossing(self):
        # a ramp that touches k_max at one instant and falls back
        k, t0 = 200 * KB, 0.1e-3
        B = PiecewiseLinear([0.0, t0, 2 * t0], [0.0, k, 0.0], [k / t0, -k / t0, 0.0], 1e-3)
        assert ecn_mark_times(B, self.params(), 1e-3) == pytest.approx([0.1e-3])

    def test_chaining_under_sustained_backlog(self):
        t0 = 0.1e-3
        B = plateau_backlog(t0, 200e-6, 300 * KB, 1e-3)
        got = ecn_mark_times(B, self.params(), 1e-3)
        np.testing.assert_allclose(got, [t0 + k * 50e-6 for k in range(5)], atol=1e-12)

    def test_below_k_min_is_silent(self):
        B = plateau_backlog(0.1e-3, 0.5e-3, 4 * KB, 1e-3)
        A = rate_function(C, 1e-3)
        for seed in range(5):
            assert ecn_mark_times(B, self.params(rng_seed=seed), 1e-3, admitted=A) == []

    def test_red_zone_marks_are_seeded_and_spaced(self):
        B = plateau_backlog(0.0, 1e-3, 150 * KB, 1e-3)
        A = rate_function(C, 1e-3)
        a = ecn_mark_times(B, self.params(rng_seed=7, i_max=KB), 1e-3, admitted=A)
        b = ecn_mark_times(B, self.params(rng_seed=7, i_max=KB), 1e-3, admitted=A)
        assert a == b and len(a) > 0
        assert np.all(np.diff(a) >= 50e-6 - 1e-12)

    def test_probability_cases(self):
        st = self.params()
        p = st.mark_probability([0.0, 5 * KB, 102.5 * KB, 200 * KB, 1e9])
        np.testing.assert_allclose(p, [0.0, 0.0, 0.005, 1.0, 1.0])

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            self.params(p_max=0.0)
        with pytest.raises(ConfigurationError):
            self.params(k_min=300 * KB)

    def test_uniforms_are_index_stable(self):
        whole = packet_uniforms(3, 0, 70000)
        np.testing.assert_array_equal(packet_uniforms(3, 65530, 65540), whole[65530:65540])


# PFC ----------------------------------------------------------------------

class TestPfc:
    def state(self):
        return PfcState(x_off=950 * KB, x_on=925 * KB, line_rate=C, delta_r=4e-6)

    def test_pause_length(self):
        assert self.state().pause_length == pytest.approx(2e-6)

    def test_pause_follows_crossing_by_feedback_delay(self):
        st = self.state()
        B = rate_function(10e9, 5e-3)
        u = 950 * KB / 10e9
        t_p, t_r = pfc_schedule(B, st, 0.0)
        assert t_p == pytest.approx(u + 4e-6)
        assert t_r - t_p == pytest.approx(2e-6)

    def test_never_exceeds(self):
        B = plateau_backlog(0.0, 1e-3, 900 * KB, 2e-3)
        assert pfc_schedule(B, self.state(), 0.0) is None

    def test_resume_chains_while_above(self):
        st = self.state()
        B = plateau_backlog(0.0, 10e-6, 2000 * KB, 1e-3)
        t_p, _ = pfc_schedule(B, st, 0.0)
        t_r, subs = pfc_resume([B], st, t_p, 1e-3)
        assert all(b - a == pytest.approx(2e-6) for a, b in subs)
        assert B(t_r - st.delta_r) <= st.x_off
        assert len(subs) > 1

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            PfcState(x_off=1.0, x_on=2.0, line_rate=1.0, delta_r=0.0)


# coordinate shifts -------------------------------------------------------------

H = 1e-3


class TestShifts:
    def test_timeout_unacked_becomes_burst(self):
        A = bursty_source(H, 50e9, [(0.0, 4e6)])
        D = departures(A, ServiceCurve.rate_server(C))
        t_to = 0.2e-3
        rem, rec = shift_after_timeout(A, D, t_to, 20e-6)
        assert rec == ShiftRecord(t_to, D(t_to - 20e-6), "timeout")
        assert rem.right_limit(0.0) == pytest.approx(A.right_limit(t_to) - D(t_to - 20e-6), abs=1e-3)
        assert is_valid_cumulative(rem)

    def test_timeout_with_nothing_unacked(self):
        A = bursty_source(H, 0.0, [(0.0, 1e6)])
        D = departures(A, ServiceCurve.rate_server(C))
        rem, _ = shift_after_timeout(A, D, 0.5e-3, 20e-6)
        assert rem.final_value() == pytest.approx(0.0, abs=1e-3)

    def test_constant_tail(self):
        A = bursty_source(H, 0.0, [(0.0, 1e6)])
        D = departures(A, ServiceCurve.rate_server(1e9))
        rem, _ = shift_after_timeout(A, D, 0.5e-3, 20e-6)
        unacked = 1e6 - D(0.48e-3)
        ts = np.linspace(1e-7, 0.4e-3, 50)
        np.testing.assert_allclose(rem(ts), unacked, atol=1e-3)

    def test_admit_keeps_shaper_backlog(self):
        A = bursty_source(H, 50e9, [(0.0, 4e6)])
        admitted = departures(A, ServiceCurve.rate_server(20e9))
        t = 0.1e-3
        rem, rec = shift_after_admit(A, admitted, t)
        assert rec.y_origin == pytest.approx(admitted(t))
        unsent = A.right_limit(t) - admitted(t)
        assert rem.right_limit(0.0) == pytest.approx(unsent, abs=1e-3)
        # the shifted source still carries everything not yet admitted
        assert rem.final_value() + admitted(t) == pytest.approx(A.final_value(), abs=1e-3)

    def test_admit_nothing_pending(self):
        A = rate_function(10e9, H)
        rem, _ = shift_after_admit(A, A, 0.3e-3)
        assert rem.right_limit(0.0) == pytest.approx(0.0, abs=1e-3)

    def test_precondition(self):
        A = rate_function(1.0, 1.0)
        with pytest.raises(MonotonicityError):
            shift_after_admit(A, rate_function(2.0, 1.0), 0.5)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ShiftRecord(0.0, 0.0, "bogus")

    def test_stitch_timeout_update(self):
        # acknowledged-origin stitch of the departures with nothing in flight
        A = bursty_source(H, 0.0, [(0.0, 2e6), (0.5e-3, 1e6)])
        S = ServiceCurve.rate_server(C)
        D = departures(A, S)
        t_to = 0.3e-3
        rem, rec = shift_after_timeout(A, D, t_to, 20e-6)
        local = departures(rem, S)
        out = stitch(D, local, rec)
        assert is_valid_cumulative(out)
        for u in (0.4e-3, 0.53e-3, 0.9e-3):
            assert out(u) == pytest.approx(local(u - t_to) + rec.y_origin, abs=1e-3)
            assert out(u) == pytest.approx(D(u), abs=1e-3)

    def test_stitch_rejects_junction_decrease(self):
        # unacked traffic in flight: restarting from the acknowledged level drops
        A = bursty_source(H, 50e9, [(0.0, 4e6)])
        D = departures(A, ServiceCurve.rate_server(C))
        rem, rec = shift_after_timeout(A, D, 0.2e-3, 20e-6)
        with pytest.raises(MonotonicityError):
            stitch(D, departures(rem, ServiceCurve.rate_server(C)), rec)

    def test_stitch_zero_shift_identity(self):
        A = bursty_source(H, 50e9, [(0.0, 4e6)])
        rem, rec = shift_after_admit(A, A, 0.4e-3)
        out = stitch(A, rem, rec)
        ts = np.linspace(0, H, 300)
        np.testing.assert_allclose(out(ts), A(ts), atol=1e-3)

    def test_two_event_chain_hand_trace(self):
        # 2 Gbps saturated source through a 1 Gbps shaper; the rate halves at 10 us,
        # then doubles back at 20 us; admitted traffic is 10k, 5k, 10k bit per 10 us
        H2 = 40e-6
        A = rate_function(2e9, H2)
        adm = departures(A, ServiceCurve.rate_server(1e9))
        rem1, rec1 = shift_after_admit(A, adm, 10e-6, "cnp")
        adm = stitch(adm, departures(rem1, ServiceCurve.rate_server(0.5e9)), rec1)
        rem2, rec2 = shift_after_admit(A, adm, 20e-6)
        adm = stitch(adm, departures(rem2, ServiceCurve.rate_server(1e9)), rec2)
        for t, want in ((10e-6, 10e3), (20e-6, 15e3), (30e-6, 25e3), (40e-6, 35e3)):
            assert adm(t) == pytest.approx(want, abs=1e-3)
        assert np.all(adm(np.linspace(0, H2, 200)) <= A(np.linspace(0, H2, 200)) + 1e-3)


def test_event_log_csv():
    log = EventLog()
    log.add(2e-6, "cnp", 1, "rate=5")
    log.add(1e-6, "timeout", 0)
    lines = log.to_csv().splitlines()
    assert lines[0] == "t,event_kind,flow_id,detail"
    assert lines[1].startswith("1e-06,timeout,0")
    assert len(log) == 2 and len(log.of_kind("cnp", 1)) == 1
    with pytest.raises(ValueError):
        log.add(0.0, "bogus")
    assert math.isclose(log.times("cnp")[0], 2e-6)
