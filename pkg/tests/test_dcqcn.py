import numpy as np
import pytest

from nccc.congestion_events import ConfigurationError
from nccc.dcqcn import (
    KB,
    MB,
    BurstScenario,
    DcqcnParams,
    DcqcnState,
    dcqcn_full_rate_update,
    run_burst_scenario,
)
from nccc.invariants import _probe_times, check_multiflow

QUICK = 2e-3


class TestFullUpdate:
    def state(self, **kw):
        d = dict(rc=40e9, rt=40e9, line_rate=100e9, params=DcqcnParams())
        d.update(kw)
        return DcqcnState(**d)

    def test_first_cnp_with_unit_alpha_zeroes_rate(self):
        st = dcqcn_full_rate_update(self.state(alpha=1.0), "cnp")
        assert st.rc == 0.0 and st.rt == 40e9 and st.alpha == 1.0

    def test_cnp_decrease_and_alpha(self):
        g = 1 / 256
        st = dcqcn_full_rate_update(self.state(alpha=0.5), "cnp")
        assert st.rc == pytest.approx(20e9)
        assert st.alpha == pytest.approx(0.5 + g * 0.5)

    def test_alpha_decays_without_cnp(self):
        st = dcqcn_full_rate_update(self.state(alpha=0.5), "alpha_timer")
        assert st.alpha == pytest.approx(0.5 * (1 - 1 / 256))

    def test_fast_recovery_then_additive(self):
        st = self.state(rc=20e9, rt=40e9, alpha=0.5)
        for k in range(4):
            st = dcqcn_full_rate_update(st, "rate_timer")
            assert st.rt == 40e9
        assert st.rc == pytest.approx(40e9 - 20e9 / 2**4)
        before = st.rc
        st = dcqcn_full_rate_update(st, "rate_timer")
        assert st.i_t == 5
        assert st.rt == pytest.approx(40e9 + 5e6)
        assert st.rc == pytest.approx((before + st.rt) / 2)

    def test_hyper_increase(self):
        # (min(i_T, i_B) - 5) * R_HI with both counters at 6
        st = self.state(rc=40e9, rt=40e9, i_t=6, i_b=5)
        st = dcqcn_full_rate_update(st, "byte_counter")
        assert st.i_b == 6 and st.rt == pytest.approx(40e9 + 50e6)
        assert st.rc == pytest.approx(40e9 + 25e6)

    def test_cnp_resets_counters(self):
        st = self.state(i_t=7, i_b=3, alpha=0.2)
        st = dcqcn_full_rate_update(st, "cnp")
        assert st.i_t == 0 and st.i_b == 0

    def test_rate_capped_at_line_rate(self):
        st = self.state(rc=100e9, rt=100e9, i_t=4)
        st = dcqcn_full_rate_update(st, "rate_timer")
        assert st.rt == 100e9 and st.rc == 100e9

    def test_unknown_event(self):
        with pytest.raises(ValueError):
            dcqcn_full_rate_update(self.state(), "bogus")


def test_scenario_validation():
    with pytest.raises(ConfigurationError):
        BurstScenario(mode="ecn")
    with pytest.raises(ConfigurationError):
        BurstScenario(n_senders=0)
    s = BurstScenario()
    assert s.x_off == pytest.approx(950 * KB) and s.x_on == pytest.approx(925 * KB)


@pytest.fixture(scope="module")
def runs():
    return {m: run_burst_scenario(BurstScenario(mode=m), t_end=QUICK) for m in ("pfc", "dcqcn", "dcqcn_nopfc")}


class TestQuickScenarios:
    def test_pfc_pauses_and_headroom(self, runs):
        r = runs["pfc"]
        s = r.scenario
        assert r.run.pause_intervals
        for a, b in r.run.pause_intervals:
            assert b - a == pytest.approx(2e-6, abs=1e-12)
        cap = s.x_off + s.line_rate * s.delta_r
        for tr in r.traces:
            ts = _probe_times(tr.admitted, tr.departed)
            assert np.max(tr.backlog(ts)) <= cap + 1e-3
        assert r.backlog(QUICK) > 20 * MB
        assert not r.run.notifications

    def test_nopfc_first_decrease_and_spacing(self, runs):
        r = runs["dcqcn_nopfc"]
        cnp = r.cnp_times(0)
        assert 0 < cnp[0] <= 10e-6
        gaps = np.diff(cnp)
        assert np.all(gaps >= 50e-6 - 1e-12)
        np.testing.assert_allclose(gaps[:5], 50e-6, atol=1e-9)
        assert not r.run.pause_intervals

    def test_dcqcn_decreases_are_exact(self, runs):
        for m in ("dcqcn", "dcqcn_nopfc"):
            r = runs[m]
            assert check_multiflow(r.run, {tr.flow_id: 0.75 for tr in r.traces}) == []
            for tr in r.traces:
                assert tr.decreases
                assert all(kind == "cnp" for _, kind, _, _ in tr.decreases)

    def test_rate_limits(self, runs):
        for r in runs.values():
            C = r.scenario.line_rate
            for tr in r.traces:
                assert max(v for _, v in tr.control) <= C
            ts = np.linspace(0, QUICK, 2001)[:-1]
            assert np.all(r.aggregate_rate(ts) <= r.scenario.n_senders * C * (1 + 1e-9))

    def test_csv_headers(self, runs):
        r = runs["dcqcn"]
        rate = r.rate_csv(1e-5).splitlines()
        back = r.backlog_csv(1e-5).splitlines()
        assert rate[0].startswith("# ") and rate[1] == "t,rate_gbps"
        assert back[1] == "t,backlog_mb"
        assert len(rate) == 2 + 200


def test_same_seed_is_deterministic():
    a = run_burst_scenario(BurstScenario(mode="dcqcn", n_senders=4, burst_size=1 * MB), DcqcnParams(seed=1), t_end=0.5e-3)
    b = run_burst_scenario(BurstScenario(mode="dcqcn", n_senders=4, burst_size=1 * MB), DcqcnParams(seed=1), t_end=0.5e-3)
    assert a.run.notifications == b.run.notifications
