import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uepcount import (CountCollection, DataError, InfeasiblePartitionError, ParameterError, Partition,
                      assign_intervals, greedy_sweep, interval_stats, partition_uep, partition_uniform_len,
                      partition_uniform_num)
from uepcount.partition import MAX_ITERATIONS


def naive_sweep(values, t0, l_bar):
    """Plain loop: returns endpoints plus the final (p, n) state."""
    P, p, n = [t0], t0, 0
    for d in values:
        if d < t0:
            continue
        n += 1
        if (d - p) * n > l_bar:
            P.append(d)
            p, n = d, 0
    return P, p, n


def naive_uep(values, m, t0, eps):
    d = sorted(v for v in values if v >= t0)
    t_max = d[-1]
    L, H = 0.0, (t_max - t0) * len(d)
    while abs(H - L) > eps:
        l_bar = (L + H) / 2
        P, p, n = naive_sweep(d, t0, l_bar)
        if len(P) >= m:
            L = l_bar
        elif len(P) == m - 1:
            L, H = (l_bar, H) if (t_max - p) * n > l_bar else (L, l_bar)
        else:
            H = l_bar
    for cand in (H, L):
        if cand <= 0:
            continue
        P = naive_sweep(d, t0, cand)[0]
        if len(P) > 1 and P[-1] == t_max:
            P.pop()
        if len(P) == m - 1:
            return [0.0, *P, t_max], cand
    return None, None


def lognormal(k, seed, sigma=1.0):
    return CountCollection.from_values(np.random.default_rng(seed).lognormal(0, sigma, k))


def test_sweep_hand_trace(filtered_t):
    assert greedy_sweep(filtered_t, 1e-4, 0.5) == [1e-4, 0.4, 1.6, 3.2]


def test_sweep_ignores_background(raw_t, filtered_t):
    assert greedy_sweep(raw_t, 1e-4, 0.5) == greedy_sweep(filtered_t, 1e-4, 0.5)


def test_sweep_rejects_bad_inputs(filtered_t):
    with pytest.raises(ParameterError):
        greedy_sweep(filtered_t, 1e-4, 0.0)
    with pytest.raises(ParameterError):
        greedy_sweep(filtered_t, 0.0, 0.5)
    with pytest.raises(DataError):
        greedy_sweep(filtered_t, 10.0, 0.5)


@settings(max_examples=200, deadline=None)
@given(values=st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=200),
       l_bar=st.floats(1e-6, 500), t0=st.floats(1e-4, 1.0))
def test_sweep_matches_plain_loop(values, l_bar, t0):
    t = CountCollection.from_values(values)
    if t.at_least(t0).size == 0:
        return
    assert greedy_sweep(t, t0, l_bar) == naive_sweep(sorted(values), t0, l_bar)[0]


@settings(max_examples=100, deadline=None)
@given(values=st.lists(st.floats(1e-3, 20, allow_nan=False), min_size=1, max_size=150),
       l_bar=st.floats(1e-3, 50))
def test_sweep_tightness(values, l_bar):
    # an interval never closes later than its first triggering sample
    d = sorted(values)
    t0 = 1e-4
    P = greedy_sweep(CountCollection.from_values(d), t0, l_bar)
    p, n = t0, 0
    ends = iter(P[1:])
    nxt = next(ends, None)
    for v in d:
        n += 1
        fired = (v - p) * n > l_bar
        if nxt is not None and v == nxt and fired:
            p, n = v, 0
            nxt = next(ends, None)
        else:
            assert not fired


def test_uep_trivial():
    p, _ = partition_uep(CountCollection.from_values([1.0, 1.0, 1.0]), m=2, t0=0.1)
    np.testing.assert_array_equal(p.borders, [0.0, 0.1, 1.0])
    assert p.strategy == "uep"


def test_uep_replays_final_sweep():
    t = lognormal(5000, 0)
    p, state = partition_uep(t, m=10, t0=1e-3)
    assert p.m == 10
    P = greedy_sweep(t, 1e-3, p.final_l_bar)
    if P[-1] == t.t_max:
        P.pop()
    np.testing.assert_array_equal(p.borders, [0.0, *P, t.t_max])
    assert abs(state.H - state.L) <= state.epsilon
    assert state.iterations <= MAX_ITERATIONS


@pytest.mark.parametrize("seed,m", [(0, 5), (1, 12), (2, 25), (3, 3)])
def test_uep_matches_literal_algorithm(seed, m):
    t = lognormal(3000, seed)
    p, _ = partition_uep(t, m=m, t0=1e-3, epsilon=1e-9)
    borders, l_bar = naive_uep(t.counts.tolist(), m, 1e-3, 1e-9)
    assert p.borders.tolist() == borders
    assert p.final_l_bar == l_bar


@settings(max_examples=60, deadline=None)
@given(values=st.lists(st.floats(0, 30, allow_nan=False), min_size=2, max_size=120),
       m=st.integers(2, 8))
def test_uep_property(values, m):
    t = CountCollection.from_values(values)
    t0 = 1e-3
    d = t.at_least(t0)
    if np.unique(d).size < m - 1:
        with pytest.raises(InfeasiblePartitionError):
            partition_uep(t, m=m, t0=t0)
        return
    try:
        p, _ = partition_uep(t, m=m, t0=t0, epsilon=1e-9)
    except InfeasiblePartitionError:
        # must agree with the literal transcription
        assert naive_uep(t.counts.tolist(), m, t0, 1e-9)[0] is None
        return
    assert p.m == m
    assert p.borders[0] == 0 and p.borders[1] == t0 and p.borders[-1] == d[-1]
    assert np.all(np.diff(p.borders) > 0)
    assert p.borders.tolist() == naive_uep(t.counts.tolist(), m, t0, 1e-9)[0]


def test_uep_nl_balanced_on_lognormal():
    t = lognormal(20000, 7)
    p, _ = partition_uep(t, m=25, t0=1.6e-4)
    assert interval_stats(t, p).nl_cv() < 0.1
    assert interval_stats(t, partition_uniform_len(t, 25, 1.6e-4)).nl_cv() > 1


def test_uep_infeasible_messages():
    t = CountCollection.from_values([2.0] * 50)
    with pytest.raises(InfeasiblePartitionError, match="short by 1"):
        partition_uep(t, m=3, t0=0.1)
    with pytest.raises(ParameterError):
        partition_uep(t, m=1)
    with pytest.raises(ParameterError):
        partition_uep(lognormal(100, 0), m=3, search=(5.0, 1.0))
    with pytest.raises(ParameterError):
        partition_uep(lognormal(100, 0), m=3, epsilon=0)


def test_uniform_len(raw_t):
    p = partition_uniform_len(raw_t, m=3, t0=0.2)
    np.testing.assert_allclose(p.borders, [0, 0.2, 1.7, 3.2])
    with pytest.raises(InfeasiblePartitionError):
        partition_uniform_len(CountCollection.from_values([0.1]), m=3, t0=0.2)


def test_uniform_num(raw_t):
    p = partition_uniform_num(raw_t, m=3, t0=1e-4)
    np.testing.assert_array_equal(p.borders, [0, 1e-4, 0.8, 3.2])
    st_ = interval_stats(raw_t, p)
    np.testing.assert_array_equal(st_.n, [1, 3, 3])


def test_uniform_num_remainder_goes_first():
    t = CountCollection.from_values([1, 2, 3, 4, 5, 6, 7.0])
    p = partition_uniform_num(t, m=4, t0=0.5)
    # groups of 3, 2, 2
    np.testing.assert_array_equal(p.borders, [0, 0.5, 4, 6, 7])


def test_uniform_num_duplicates_infeasible():
    t = CountCollection.from_values([1.0] * 10)
    with pytest.raises(InfeasiblePartitionError):
        partition_uniform_num(t, m=4, t0=0.5)


def test_interval_stats_example(raw_t):
    p = Partition([0, 1e-4, 0.4, 1.6, 3.2])
    s = interval_stats(raw_t, p)
    np.testing.assert_array_equal(s.n, [1, 2, 2, 2])
    np.testing.assert_allclose(s.length, [1e-4, 0.3999, 1.2, 1.6], rtol=1e-12)
    np.testing.assert_allclose(s.sample_mean, [0.00005, 0.2, 0.6, 2.4])
    assert s.n.sum() == raw_t.K


def test_interval_stats_errors(raw_t):
    with pytest.raises(DataError):
        interval_stats(raw_t, Partition([0, 1e-4, 1.0, 2.0]))
    with pytest.raises(DataError):
        interval_stats(CountCollection.from_values([-1.0, 1.0]), Partition([0, 0.5, 2.0]))


def test_assign_intervals_boundaries():
    b = [0, 1, 2, 3]
    np.testing.assert_array_equal(assign_intervals([0, 0.5, 1, 1.99, 2, 3, 4], b), [0, 0, 1, 1, 2, 2, 2])


def test_partition_validation():
    with pytest.raises(ParameterError):
        Partition([0, 1])
    with pytest.raises(ParameterError):
        Partition([0.1, 1, 2])
    with pytest.raises(InfeasiblePartitionError):
        Partition([0, 1, 1, 2])
    with pytest.raises(ParameterError):
        Partition([0, 1, 2], strategy="bogus")


@settings(max_examples=50, deadline=None)
@given(values=st.lists(st.floats(0, 10, allow_nan=False), min_size=5, max_size=100), m=st.integers(2, 6))
def test_membership_covers_every_count(values, m):
    t = CountCollection.from_values(values)
    try:
        p = partition_uniform_num(t, m=m, t0=1e-3)
    except InfeasiblePartitionError:
        return
    s = interval_stats(t, p)
    assert s.n.sum() == t.K
    cls = p.classify(t.counts)
    lo, hi = p.borders[cls], p.borders[cls + 1]
    assert np.all(lo <= t.counts) and np.all(t.counts <= hi)


def test_sweep_trivial_cases(filtered_t):
    huge = (filtered_t.t_max - 1e-4) * filtered_t.K
    assert greedy_sweep(filtered_t, 1e-4, huge) == [1e-4]
    assert greedy_sweep(CountCollection.from_values([2.0]), 0.5, 1.0) == [0.5, 2.0]


def test_uep_small_fixture_agrees_with_grid(filtered_t):
    p, _ = partition_uep(filtered_t, m=3, t0=1e-4)
    d = filtered_t.counts.tolist()
    hits = set()
    for l_bar in np.linspace(0, (d[-1] - 1e-4) * len(d), 10001)[1:]:
        P = naive_sweep(d, 1e-4, l_bar)[0]
        if P[-1] == d[-1] and len(P) > 1:
            P.pop()
        if len(P) == 2:
            hits.add(tuple([0.0, *P, d[-1]]))
    assert tuple(p.borders.tolist()) in hits
    assert p.borders.tolist() == naive_uep(d, 3, 1e-4, default_eps(filtered_t))[0]


def default_eps(t):
    return 1e-6 * t.K * t.t_max


def test_uniform_len_small_cases():
    t = CountCollection.from_values([0.5, 10.0])
    np.testing.assert_array_equal(partition_uniform_len(t, 2, 1e-4).borders, [0, 1e-4, 10.0])
    p = partition_uniform_len(t, 11, 1e-4)
    np.testing.assert_allclose(np.diff(p.borders[1:]), (10 - 1e-4) / 10, rtol=1e-12)


def test_stats_empty_and_single_interval():
    t = CountCollection.from_values([0.5, 0.7, 4.0])
    s = interval_stats(t, Partition([0, 0.1, 1.0, 2.0, 4.0]))
    np.testing.assert_array_equal(s.n, [0, 2, 0, 1])
    assert s.empty.tolist() == [True, False, True, False]
    assert np.isnan(s.sample_min[2]) and np.isnan(s.sample_mean[0])
    one = interval_stats(t, partition_uniform_num(t, 2, 0.1))
    np.testing.assert_array_equal(one.n, [0, 3])
    np.testing.assert_array_equal(partition_uniform_num(t, 2, 0.1).borders, [0, 0.1, 4.0])
