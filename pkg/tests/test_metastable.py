import numpy as np
import pytest

from zrpmeta.metastable import compare, limit_chain, trend_table
from zrpmeta.simulate import OrderPath
from zrpmeta.walk import WalkSpec, complete_graph, path_graph


def test_two_site_limit_rate():
    chain = limit_chain(complete_graph(2))
    assert chain.rates[0, 1] == pytest.approx(6.0)


def test_three_site_limit_chain():
    chain = limit_chain(complete_graph(3))
    off = chain.rates[~np.eye(3, dtype=bool)]
    assert np.allclose(off, 9.0)
    assert np.allclose(chain.mean_holding, 1 / 18)
    assert np.allclose(chain.jump_law[~np.eye(3, dtype=bool)], 0.5)


@pytest.mark.parametrize("spec", [path_graph(4), WalkSpec(3, np.array([[0, 1, 0.5], [1, 0, 2], [0.5, 2, 0]], dtype=float))])
def test_limit_chain_symmetric_so_uniform_is_invariant(spec):
    chain = limit_chain(spec)
    assert np.allclose(chain.rates, chain.rates.T)
    Q = chain.rates - np.diag(chain.exit_rates)
    assert np.allclose(np.ones(spec.kappa) @ Q, 0.0)


def test_compare_by_hand():
    chain = limit_chain(complete_graph(3))
    p1 = OrderPath((0, 1, 0, 2), (0.5, 0.1, 0.3, 0.2), 0.1, 1.2, 100)
    p2 = OrderPath((1, 2), (0.4, 0.4), 0.0, 0.8, 50)
    rep = compare([p1, p2], chain)
    assert rep.transitions == 4
    assert rep.counts.tolist() == [[0, 1, 1], [1, 0, 1], [0, 0, 0]]
    assert rep.holding_mean[1] == pytest.approx(0.1)
    assert rep.holding_mean[0] == pytest.approx(0.3)
    assert np.isnan(rep.holding_mean[2])
    # site 0: empirical (0, .5, .5) is exact; site 1: (1/2, 0, 1/2) exact as well
    assert rep.tv == pytest.approx(0.0)
    assert rep.delta_fraction == pytest.approx(0.1 / 2.0)
    rows = trend_table({100: rep})
    assert {r["quantity"] for r in rows} >= {"transitions", "tv", "delta_fraction", "holding_ratio_0"}


def test_compare_total_variation():
    chain = limit_chain(complete_graph(3))
    p = OrderPath((0, 1, 0, 1, 0), (1, 1, 1, 1, 1), 0.0, 5.0, 10)
    rep = compare([p], chain)
    # from 0 always to 1 and from 1 always to 0: TV = 1/2 at both sites
    assert rep.tv == pytest.approx(0.5)


def test_degenerate_paths():
    rep = compare([OrderPath((2,), (1.0,), 0.0, 1.0, 3)], limit_chain(complete_graph(3)))
    assert rep.degenerate and rep.transitions == 0
    assert rep.to_dict()["tv"] is None
