import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from strategies import configurations, specs
from zrpmeta.errors import ArgumentError, ResourceError
from zrpmeta.walk import complete_graph
from zrpmeta.zrp import (
    ZrpModel,
    a_weight,
    classify,
    g_rate,
    partition_tables,
    sample_conditioned,
    stationary_weight,
    well_measure,
)


def all_configs(N, k):
    for c in itertools.product(range(N + 1), repeat=k - 1):
        if sum(c) <= N:
            yield (*c, N - sum(c))


def brute_measure(N, k, pred):
    num = den = 0.0
    for eta in all_configs(N, k):
        w = 1.0 / math.prod(max(v, 1) for v in eta)
        den += w
        if pred(eta):
            num += w
    return num / den


@pytest.mark.parametrize("n,expected", [(0, 0.0), (1, 1.0), (5, 1.25)])
def test_rates(n, expected):
    assert g_rate(n) == expected


def test_weights():
    assert a_weight(0) == 1 and a_weight(7) == 7
    assert stationary_weight((4, 2, 0)) == pytest.approx(1 / 8)
    assert stationary_weight((9, 0, 0, 0)) == pytest.approx(1 / 9)


def test_two_site_partition_at_1000():
    assert partition_tables(1000, 2).Z == pytest.approx(2.4565059177373, abs=1e-12)


@pytest.mark.parametrize("kappa", [2, 3, 4])
@pytest.mark.parametrize("N", [2, 5, 9, 12])
def test_partition_matches_enumeration(N, kappa):
    brute = math.fsum(1.0 / math.prod(max(v, 1) for v in eta) for eta in all_configs(N, kappa))
    assert partition_tables(N, kappa).total == pytest.approx(brute, abs=1e-12)


@pytest.mark.parametrize("N", [2, 3, 10, 257, 4000])
def test_two_site_closed_form(N):
    H = math.fsum(1.0 / j for j in range(1, N))
    assert partition_tables(N, 2).Z == pytest.approx(2.0 / math.log(N) * (1.0 + H), abs=1e-12)


def test_partition_argument_checks():
    with pytest.raises(ArgumentError):
        partition_tables(1, 3)
    with pytest.raises(ResourceError):
        partition_tables(10, 3, cap=5)


@pytest.mark.parametrize("N,kappa", [(12, 3), (9, 4), (20, 2)])
def test_well_measures_match_enumeration(N, kappa):
    m = ZrpModel(N, complete_graph(kappa))
    ell, d, w = m.ell, m.deep_width, m.shallow_width
    assert well_measure(m, "E") == pytest.approx(brute_measure(N, kappa, lambda e: e[0] >= N - ell), abs=1e-13)
    assert well_measure(m, "D") == pytest.approx(brute_measure(N, kappa, lambda e: e[0] >= N - d), abs=1e-13)
    assert well_measure(m, "W") == pytest.approx(brute_measure(N, kappa, lambda e: e[0] >= N - w), abs=1e-13)
    ehat = brute_measure(N, kappa, lambda e: all(v <= ell for v in e[1:]))
    assert well_measure(m, "Ehat") == pytest.approx(ehat, abs=1e-13)
    if m.wells_disjoint:
        delta = brute_measure(N, kappa, lambda e: all(v < N - ell for v in e))
        assert well_measure(m, "Delta") == pytest.approx(delta, abs=1e-13)


def test_full_condensate_mass():
    m = ZrpModel(500, complete_graph(3))
    expected = (1.0 / m.N) * (m.N / (m.tables.Z * math.log(m.N) ** 2))
    assert well_measure(m, "threshold", p=0) == pytest.approx(expected, rel=1e-12)


def test_model_parameters():
    m = ZrpModel(1000, complete_graph(3))
    assert m.ell == math.floor(1000 / math.log(1000))
    assert m.gamma == pytest.approx(1 / 3)
    assert m.deep_width == math.floor(1000 ** (1 / 3))
    assert m.shallow_width == math.floor(1000 / math.log(1000) ** 0.5)
    assert m.theta == pytest.approx(1000**2 * math.log(1000))
    with pytest.raises(ArgumentError):
        ZrpModel(1, complete_graph(3))
    with pytest.raises(ArgumentError):
        ZrpModel(100, complete_graph(3), gamma=0.9)


def test_nesting_on_full_condensate():
    m = ZrpModel(200, complete_graph(3))
    mem = classify(m, np.array([200, 0, 0]))
    assert mem.D[0] and mem.E[0] and mem.W[0] and not mem.delta


def test_delta_just_below_wells():
    m = ZrpModel(300, complete_graph(3))
    a = m.N - m.ell - 1
    eta = np.array([a, m.N - a, 0])
    assert classify(m, eta).delta


@given(st.data())
def test_classify_matches_inequalities(data):
    m = ZrpModel(200, complete_graph(3))
    eta = data.draw(configurations(200, 3))
    mem = classify(m, eta)
    for x in range(3):
        assert mem.E[x] == (eta[x] >= 200 - m.ell)
        assert mem.D[x] == (eta[x] >= 200 - m.deep_width)
        assert mem.W[x] == (eta[x] >= 200 - m.shallow_width)
        assert mem.Ehat[x] == all(eta[y] <= m.ell for y in range(3) if y != x)
        assert (not mem.D[x] or mem.E[x]) and (not mem.E[x] or mem.W[x])
    assert mem.delta == (not any(mem.E))


@given(specs(max_kappa=5), st.data())
def test_detailed_balance(spec, data):
    N = data.draw(st.integers(2, 40))
    eta = data.draw(configurations(N, spec.kappa))
    for x in range(spec.kappa):
        for y in range(spec.kappa):
            if x == y or eta[x] == 0:
                continue
            z = eta.copy()
            z[x] -= 1
            z[y] += 1
            lhs = stationary_weight(eta) * g_rate(int(eta[x])) * spec.rates[x, y]
            rhs = stationary_weight(z) * g_rate(int(z[y])) * spec.rates[y, x]
            assert lhs == pytest.approx(rhs, rel=1e-12)


def test_conditioned_sampler_law(rng):
    N, k = 14, 3
    m = ZrpModel(N, complete_graph(k))
    lo, hi = N - m.ell, N
    configs = [e for e in all_configs(N, k) if lo <= e[1] <= hi]
    w = np.array([stationary_weight(e) for e in configs])
    p = w / w.sum()
    index = {e: i for i, e in enumerate(configs)}
    n = 40000
    counts = np.zeros(len(configs))
    for _ in range(n):
        counts[index[tuple(int(v) for v in sample_conditioned(m, 1, lo, hi, rng))]] += 1
    # chi-square statistic against the exact law; 99.9% quantile bound
    chi2 = float(np.sum((counts - n * p) ** 2 / (n * p)))
    dof = len(configs) - 1
    assert chi2 < dof + 4.5 * math.sqrt(2 * dof)
