import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from rrcslice.traffic import (TrafficProfile, TrafficSchedule, draw_size, generate_trace,
                              make_rng, next_arrival, read_trace, schedule_rate_at,
                              write_trace)


def gaps(idt, n, seed=11):
    rng = make_rng(seed)
    p = TrafficProfile(1 / idt, 1 / 600)
    now, out = 0.0, []
    for _ in range(n):
        nxt, _ = next_arrival(rng, p, now)
        out.append(nxt - now)
        now = nxt
    return np.array(out)


def test_mean_gap_1000():
    assert 980 <= gaps(1000, 100_000).mean() <= 1020


def test_mean_gap_200():
    assert gaps(200, 100_000).mean() == pytest.approx(200, rel=0.02)


def test_gaps_pass_ks_against_exponential():
    g = gaps(1000, 10_000, seed=3)
    res = stats.kstest(g, "expon", args=(0, 1000))
    assert res.pvalue > 0.01


def test_same_state_same_draw():
    p = TrafficProfile(1 / 1000, 1 / 600)
    a = next_arrival(make_rng(5, 2), p, 10.0)
    b = next_arrival(make_rng(5, 2), p, 10.0)
    assert a == b
    assert next_arrival(make_rng(5, 3), p, 10.0) != a


def test_sizes_positive_with_requested_mean():
    rng = make_rng(1)
    p = TrafficProfile(1 / 1000, 1 / 600)
    sizes = np.array([draw_size(rng, p) for _ in range(20_000)])
    assert sizes.min() >= 1
    assert sizes.mean() == pytest.approx(600, rel=0.01)
    tiny = TrafficProfile(1, 1.0)   # mean one byte
    assert {draw_size(rng, tiny) for _ in range(100)} == {1}


def test_schedule_lookup_boundaries():
    sched = TrafficSchedule([TrafficProfile(1 / 1000, 1 / 600),
                             TrafficProfile(1 / 6000, 1 / 8000, 500)])
    assert schedule_rate_at(sched, 0) is sched[0]
    assert schedule_rate_at(sched, 499) is sched[0]
    assert schedule_rate_at(sched, 499.999) is sched[0]
    assert schedule_rate_at(sched, 500) is sched[1]
    assert sched.switch_times == [500]


@pytest.mark.parametrize("profiles", [
    [],
    [TrafficProfile(1, 1, 5)],
    [TrafficProfile(1, 1), TrafficProfile(1, 1, 0)],
    [TrafficProfile(1, 1), TrafficProfile(1, 1, 9), TrafficProfile(1, 1, 9)],
])
def test_bad_schedules(profiles):
    with pytest.raises(ValueError):
        TrafficSchedule(profiles)


@pytest.mark.parametrize("kw", [dict(lambda_idt=0, lambda_size=1), dict(lambda_idt=1, lambda_size=-1),
                                dict(lambda_idt=1, lambda_size=1, active_from=-3)])
def test_bad_profiles(kw):
    with pytest.raises(ValueError):
        TrafficProfile(**kw)


def test_trace_is_deterministic_and_sorted():
    sched = [TrafficProfile(1 / 300, 1 / 600), TrafficProfile(1 / 50, 1 / 100, 30_000)]
    a = generate_trace(sched, 60_000, seed=9, ue_id=1)
    assert a == generate_trace(sched, 60_000, seed=9, ue_id=1)
    assert a != generate_trace(sched, 60_000, seed=9, ue_id=2)
    times = [t for t, _ in a]
    assert times == sorted(times) and 0 <= times[0] and times[-1] < 60_000
    # the second phase is six times denser
    first = sum(t < 30_000 for t in times)
    assert len(times) - first > 3 * first


def test_trace_rate_follows_schedule():
    sched = [TrafficProfile(1 / 100, 1 / 10), TrafficProfile(1 / 1000, 1 / 10, 500_000)]
    tr = generate_trace(sched, 1_000_000, seed=4)
    n1 = sum(t < 500_000 for t, _ in tr)
    assert n1 == pytest.approx(5000, rel=0.05)
    assert len(tr) - n1 == pytest.approx(500, rel=0.15)


@given(st.dictionaries(st.integers(0, 2**32 - 1),
                       st.lists(st.tuples(st.integers(0, 10**9), st.integers(1, 10**6)),
                                max_size=20), max_size=5))
def test_trace_csv_round_trip(tmp_path_factory, traces):
    traces = {k: sorted(v, key=lambda x: x[0]) for k, v in traces.items() if v}
    path = tmp_path_factory.mktemp("tr") / "t.csv"
    write_trace(path, traces)
    assert read_trace(path) == traces


def test_trace_file_needs_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("ue,arrival\n1,2\n")
    with pytest.raises(ValueError):
        read_trace(p)
