import math

import numpy as np
import pytest

from zrpmeta.errors import ArgumentError
from zrpmeta.simulate import (
    EventStream,
    SimConfig,
    hitting_experiment,
    kmc_run,
    replica_rng,
    run_replicas,
    trace_and_order,
    well_region,
    wilson_interval,
)
from zrpmeta.walk import WalkSpec, complete_graph
from zrpmeta.zrp import ZrpModel, g_rate, well_measure


def replay(model, stream):
    """Configurations after each recorded event."""
    times, src, dst = stream.events
    eta = np.array(stream.eta0, dtype=np.int64)
    out = [eta.copy()]
    for x, y in zip(src, dst):
        eta[x] -= 1
        eta[y] += 1
        out.append(eta.copy())
    return times, out


def exit_rate(spec, eta):
    return sum(g_rate(int(eta[x])) * spec.rates[x].sum() for x in range(spec.kappa))


def test_config_validation():
    with pytest.raises(ArgumentError):
        SimConfig(seed=-1)
    with pytest.raises(ArgumentError):
        SimConfig(t_max=0)
    with pytest.raises(ArgumentError):
        SimConfig(record="all")


def test_replica_streams_are_independent_of_order():
    a = replica_rng(5, 3).random(4)
    replica_rng(5, 0).random(100)
    assert np.array_equal(a, replica_rng(5, 3).random(4))
    assert not np.array_equal(a, replica_rng(5, 4).random(4))


def test_first_jump_time_from_full_condensate():
    N = 50
    m = ZrpModel(N, complete_graph(3))
    R = exit_rate(m.walk, [N, 0, 0])
    assert R == pytest.approx(2 * N / (N - 1))
    cfg = SimConfig(seed=3, t_max=5.0 / (R * m.theta) * 10, record="full")
    firsts = []
    for rep in range(2000):
        s = kmc_run(m, np.array([N, 0, 0]), cfg, replica=rep)
        firsts.append(s.events[0][0])
    firsts = np.array(firsts)
    assert abs(firsts.mean() * R - 1.0) < 4.0 / math.sqrt(firsts.size)


def test_holding_times_are_exponential_and_particles_conserved():
    m = ZrpModel(30, WalkSpec(3, np.array([[0, 1, 0.5], [1, 0, 2], [0.5, 2, 0]], dtype=float)))
    s = kmc_run(m, np.array([10, 10, 10]), SimConfig(seed=9, t_max=40.0, record="full"))
    times, configs = replay(m, s)
    assert all(c.sum() == 30 and np.all(c >= 0) for c in configs)
    assert np.array_equal(configs[-1], s.eta_final)
    gaps = np.diff(np.concatenate([[0.0], times]))
    z = np.array([g * exit_rate(m.walk, c) for g, c in zip(gaps, configs[:-1])])
    n = z.size
    assert n > 50_000
    assert abs(z.mean() - 1.0) < 4.0 / math.sqrt(n)
    assert abs(z.var() - 1.0) < 4.0 * math.sqrt(8.0 / n)


def test_occupation_matches_well_measure():
    m = ZrpModel(200, complete_graph(2))
    reps = 10
    cfg = SimConfig(seed=21, replicas=reps, t_max=2.5)
    fracs, events = [], 0
    for rep in range(reps):
        s = kmc_run(m, np.array([200, 0]), cfg, replica=rep)
        events += s.n_events
        fracs.append(sum(d for lab, d in s.segments if lab == 0) / s.t_total)
    fracs = np.array(fracs)
    assert events > 5_000_000
    mean_two = fracs.mean()
    se = fracs.std(ddof=1) / math.sqrt(reps)
    assert abs(mean_two - well_measure(m, "E")) < 3 * se + 1e-3


def test_short_run_stays_in_one_well():
    m = ZrpModel(400, complete_graph(3))
    p = trace_and_order(kmc_run(m, np.array([400, 0, 0]), SimConfig(seed=1, t_max=1e-4)))
    assert p.labels == (0,)
    assert p.delta_fraction == 0.0
    assert p.n_transitions == 0


def test_clock_is_partitioned():
    m = ZrpModel(60, complete_graph(3))
    for rep in range(3):
        s = kmc_run(m, np.array([60, 0, 0]), SimConfig(seed=4, t_max=3.0), replica=rep)
        p = trace_and_order(s)
        assert math.fsum(p.durations) + p.delta_time == pytest.approx(p.total_time, rel=1e-12)
        assert all(a != b for a, b in p.transitions())


def test_trace_merges_repeated_labels():
    m = ZrpModel(60, complete_graph(3))
    s = EventStream(m, np.array([60, 0, 0]), np.array([60, 0, 0]), [(0, 0.1), (-1, 0.05), (0, 0.2), (1, 0.3)], 0, 0.65)
    p = trace_and_order(s)
    assert p.labels == (0, 1)
    assert p.durations == pytest.approx((0.3, 0.3))
    assert p.delta_time == pytest.approx(0.05)
    assert p.holding_times() == []


def test_overlapping_wells_rejected():
    m = ZrpModel(4, complete_graph(2))
    assert not m.wells_disjoint
    with pytest.raises(ArgumentError):
        kmc_run(m, np.array([4, 0]), SimConfig())


def test_replicas_do_not_depend_on_workers():
    m = ZrpModel(80, complete_graph(3))
    cfg = SimConfig(seed=13, replicas=4, t_max=0.5)
    a = run_replicas(m, ("E", 0), cfg, threads=1)
    b = run_replicas(m, ("E", 0), cfg, threads=2)
    assert a == b


def test_hitting_start_inside_target():
    m = ZrpModel(100, complete_graph(3))
    stats = hitting_experiment(m, ("D", 0), [well_region(m, "E", 0)], SimConfig(seed=2, replicas=20))
    assert stats.probabilities["E0"] == 1.0
    assert np.all(stats.times == 0.0)


def test_deep_well_reached_before_leaving_shallow_well_more_often_at_larger_n():
    probs = {}
    for N in (200, 400):
        m = ZrpModel(N, complete_graph(3))
        targets = [well_region(m, "D", 0), well_region(m, "notW", 0)]
        stats = hitting_experiment(m, ("E-D", 0), targets, SimConfig(seed=8, replicas=4000, t_max=5.0))
        assert stats.censored == 0
        probs[N] = stats.probabilities["D0"]
    assert probs[400] > probs[200] > 0.85


def test_wilson_interval():
    lo, hi = wilson_interval(50, 100)
    assert lo < 0.5 < hi
    assert wilson_interval(0, 0) == (0.0, 1.0)
    lo, hi = wilson_interval(100, 100)
    assert hi == 1.0 and lo > 0.95
