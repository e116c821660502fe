"""Engine contract tests.

The central invariant: the vectorized batch engine and the scalar
reference path produce bit-identical results for every path, field by
field, including event logs and CSV series rows.  Everything else
(worker invariance, added-path stability, explosion and overflow
handling) follows from that plus the per-path stream derivation.
"""

import numpy as np
import pytest

from splitmerge.dynamics import MarketState
from splitmerge.engine import (
    CHUNK,
    EngineRun,
    reference_path,
    run_paths,
    run_until_event,
)
from splitmerge.params import ModelParams, RankTable, SplitDist
from splitmerge.portfolio import PortfolioRule
from splitmerge.streams import PathStreams

RULES = (
    PortfolioRule("market"),
    PortfolioRule("equal"),
    PortfolioRule("rank", 0),
    PortfolioRule("cash"),
)


def make_params(**kw):
    base = dict(
        drift=RankTable(0.0, 0.0),
        vol=RankTable(1.0, 0.0),
        delta=0.1,
        eps0=4.0 / 9.0,
        clock_c=2.0,
        clock_alpha=1.0,
        dt=1e-3,
    )
    base.update(kw)
    return ModelParams(**base)


def assert_paths_match(
    params, caps0, horizon, seed, res, paths, rules=RULES, stride=50
):
    """Field-by-field bit comparison of the batch result against the
    scalar reference for each path."""
    for p in range(paths):
        ref = reference_path(
            params, caps0, horizon, seed, p, rules=rules,
            stride=stride, series_cols=(0, 1),
        )
        assert ref["status"] == int(res.status[p])
        if ref["status"] == 0:
            for i in range(len(rules)):
                assert ref["v"][i] == res.final_wealth[i, p], (p, i)
            assert ref["log_z"] == res.final_log_z[p]
            assert ref["qv"] == res.final_qv[p]
            assert ref["total"] == res.final_total[p]
            assert sorted(ref["caps"].tolist()) == sorted(
                res.final_caps[p].tolist()
            )
        assert ref["n"] == int(res.final_n[p])
        assert ref["max_n"] == int(res.max_n[p])
        ev_batch = [r.to_json() for r in res.events if r.path == p]
        ev_ref = [r.to_json() for r in ref["events"]]
        assert ev_batch == ev_ref, f"event mismatch on path {p}"
        sr_batch = [s for s in res.series if s.startswith(f"{p},")]
        assert sr_batch == ref["series"], f"series mismatch on path {p}"


class TestBitExactness:
    def test_event_rich_market(self):
        # forced entry split plus busy clocks: every event type and the
        # wealth/density accumulators all cross-checked bit for bit
        params = make_params()
        caps0 = np.array([14.0, 0.5, 0.5, 0.5])
        res = run_paths(
            EngineRun(
                params=params, initial_caps=caps0, horizon=0.5,
                n_paths=8, seed=11, rules=RULES, stride=50,
                series_cols=(0, 1), collect_events=True,
                collect_final_caps=True,
            )
        )
        assert res.instr.splits >= 8 and res.instr.mergers > 0
        assert_paths_match(params, caps0, 0.5, 11, res, 8)

    def test_quiet_market(self):
        # no events at all: pure diffusion against the reference
        params = make_params(clock_c=0.0, vol=RankTable(0.4, 0.2))
        caps0 = np.array([2.0, 1.0, 1.5])
        res = run_paths(
            EngineRun(
                params=params, initial_caps=caps0, horizon=0.3,
                n_paths=5, seed=3, rules=RULES, stride=50,
                series_cols=(0, 1), collect_events=True,
                collect_final_caps=True,
            )
        )
        assert res.instr.splits == 0 and res.instr.mergers == 0
        assert_paths_match(params, caps0, 0.3, 3, res, 5)

    def test_rank_dependent_coefficients(self):
        # drift and vol vary by rank, so a wrong rank gather would show
        params = make_params(
            drift=RankTable(-0.3, 0.6), vol=RankTable(0.7, 0.6),
            clock_c=3.0,
        )
        caps0 = np.array([6.0, 3.0, 2.0, 1.0, 1.0])
        res = run_paths(
            EngineRun(
                params=params, initial_caps=caps0, horizon=0.4,
                n_paths=6, seed=17, rules=RULES, stride=40,
                series_cols=(0, 1), collect_events=True,
                collect_final_caps=True,
            )
        )
        assert_paths_match(params, caps0, 0.4, 17, res, 6, stride=40)

    def test_growth_theta_mode(self):
        params = make_params(
            drift=RankTable(0.1, 0.2), theta_mode="growth"
        )
        caps0 = np.array([5.0, 2.0, 2.0])
        res = run_paths(
            EngineRun(
                params=params, initial_caps=caps0, horizon=0.3,
                n_paths=4, seed=23, rules=RULES, stride=30,
                series_cols=(0, 1), collect_events=True,
                collect_final_caps=True,
            )
        )
        assert_paths_match(params, caps0, 0.3, 23, res, 4, stride=30)


class TestDeterminism:
    def test_adding_paths_never_perturbs_existing(self):
        params = make_params()
        caps0 = np.array([3.0, 1.0, 1.0])

        def final_state(n_paths):
            return run_paths(
                EngineRun(
                    params=params, initial_caps=caps0, horizon=0.2,
                    n_paths=n_paths, seed=5,
                )
            )

        a = final_state(3)
        b = final_state(7)
        assert np.array_equal(a.final_wealth[:, :3], b.final_wealth[:, :3])
        assert np.array_equal(a.final_log_z, b.final_log_z[:3])

    def test_two_workers_match_one(self):
        params = make_params()
        caps0 = np.array([3.0, 1.0, 1.0])
        kw = dict(
            params=params, initial_caps=caps0, horizon=0.05,
            n_paths=CHUNK + 64, seed=5, rules=(PortfolioRule("market"),),
            stride=25, series_cols=(0, 0), collect_events=True,
        )
        a = run_paths(EngineRun(workers=1, **kw))
        b = run_paths(EngineRun(workers=2, **kw))
        assert np.array_equal(a.final_wealth, b.final_wealth)
        assert np.array_equal(a.final_log_z, b.final_log_z)
        assert np.array_equal(a.status, b.status)
        assert a.series == b.series
        assert [r.to_json() for r in a.events] == [
            r.to_json() for r in b.events
        ]
        assert a.instr.splits == b.instr.splits
        assert a.instr.mergers == b.instr.mergers


class TestRunUntilEvent:
    def test_no_event_reaches_horizon(self):
        params = make_params(clock_c=0.0)
        state = MarketState(0.0, np.array([1.0, 1.0, 1.0]))
        out, rec = run_until_event(
            state, params, PathStreams.for_path(2, 0), horizon=0.05
        )
        assert rec is None
        assert out.t == pytest.approx(0.05)
        assert out.n == 3

    def test_forced_initial_split_fires_at_time_zero(self):
        params = make_params()
        state = MarketState(0.0, np.array([19.0, 0.5, 0.5]))  # mu_1 = 0.95
        out, rec = run_until_event(
            state, params, PathStreams.for_path(2, 1), horizon=1.0
        )
        assert rec is not None
        assert rec.kind == "split"
        assert rec.t == 0.0
        assert rec.n_before == 3 and rec.n_after == 4
        assert out.n == 4

    def test_huge_clock_rate_makes_first_event_a_merger(self):
        params = make_params(clock_c=1e6 / 3.0, clock_alpha=1.0)
        hits = 0
        trials = 400
        for p in range(trials):
            state = MarketState(0.0, np.array([1.0, 1.0, 1.0]))
            _, rec = run_until_event(
                state, params, PathStreams.for_path(7, p), horizon=1.0
            )
            assert rec is not None
            hits += rec.kind == "merger"
        assert hits / trials >= 0.99

    def test_zero_rate_only_splits(self):
        params = make_params(clock_c=0.0)
        kinds = set()
        for p in range(50):
            state = MarketState(0.0, np.array([8.0, 0.6, 0.4]))
            _, rec = run_until_event(
                state, params, PathStreams.for_path(9, p), horizon=2.0
            )
            if rec is not None:
                kinds.add(rec.kind)
        assert kinds == {"split"}


class TestFailureModes:
    def test_explosion_guard(self):
        # tiny cap: the first split at N = n_max - 1 trips the guard
        params = make_params(n_max=4, clock_c=0.0)
        caps0 = np.array([50.0, 1.0, 1.0])  # mu_1 = 0.96: immediate split
        res = run_paths(
            EngineRun(
                params=params, initial_caps=caps0, horizon=1.0,
                n_paths=3, seed=1, collect_events=True,
            )
        )
        assert np.all(res.status == 1)
        assert np.all(res.final_n == 4)
        for p in range(3):
            ref = reference_path(params, caps0, 1.0, 1, p)
            assert ref["status"] == 1
            assert ref["n"] == 4

    def test_overflow_flags_status_two(self):
        params = make_params(drift=RankTable(0.0, 500.0), dt=1.0)
        caps0 = np.array([1e300, 1.0])
        res = run_paths(
            EngineRun(
                params=params, initial_caps=caps0, horizon=5.0,
                n_paths=2, seed=2,
            )
        )
        assert np.all(res.status == 2)
        for p in range(2):
            ref = reference_path(params, caps0, 5.0, 2, p)
            assert ref["status"] == 2

    def test_ok_mask(self):
        params = make_params(clock_c=0.0)
        res = run_paths(
            EngineRun(
                params=params, initial_caps=np.array([1.0, 1.0]),
                horizon=0.02, n_paths=4, seed=3,
            )
        )
        assert res.ok.tolist() == [True] * 4


class TestValidation:
    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError, match="Assumption 2"):
            run_paths(
                EngineRun(
                    params=make_params(delta=0.4),
                    initial_caps=np.array([1.0, 1.0]),
                    horizon=0.1, n_paths=1, seed=0,
                )
            )

    def test_initial_caps_checked(self):
        with pytest.raises(ValueError):
            run_paths(
                EngineRun(
                    params=make_params(),
                    initial_caps=np.array([1.0, -1.0]),
                    horizon=0.1, n_paths=1, seed=0,
                )
            )

    def test_rule_target_must_exist_at_start(self):
        with pytest.raises(ValueError, match="target"):
            run_paths(
                EngineRun(
                    params=make_params(),
                    initial_caps=np.array([1.0, 1.0]),
                    horizon=0.1, n_paths=1, seed=0,
                    rules=(PortfolioRule("rank", 5),),
                )
            )

    def test_zero_paths_rejected(self):
        with pytest.raises(ValueError):
            run_paths(
                EngineRun(
                    params=make_params(),
                    initial_caps=np.array([1.0, 1.0]),
                    horizon=0.1, n_paths=0, seed=0,
                )
            )


class TestSeries:
    def test_header_shape_and_stride(self):
        params = make_params(clock_c=0.0)
        res = run_paths(
            EngineRun(
                params=params, initial_caps=np.array([1.0, 1.0]),
                horizon=0.01, n_paths=2, seed=4,
                rules=(PortfolioRule("market"), PortfolioRule("equal")),
                stride=5, series_cols=(0, 1),
            )
        )
        # rows at steps 0, 5 and 10 for each of the two paths
        assert len(res.series) == 6
        row = res.series[0].split(",")
        assert len(row) == 7
        assert row[0] == "0"
        assert float(row[1]) == 0.0
        assert int(row[2]) == 2
        assert 0.0 <= float(row[3]) <= 1.0
        assert float(row[4]) == 1.0 and float(row[6]) == 1.0
