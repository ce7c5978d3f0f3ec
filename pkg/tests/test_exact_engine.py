import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from zrpmeta.errors import ArgumentError, ResourceError
from zrpmeta.exact_engine import (
    StateIndex,
    assemble_generator,
    audit_comparison_paths,
    birth_death_product_gap,
    comparison_path,
    dump_triplets,
    exact_capacity,
    load_triplets,
    region_mask,
    restricted_gap,
    restricted_states,
    solve_poisson,
    symmetric_gap,
)
from zrpmeta.walk import complete_graph, path_graph
from zrpmeta.zrp import ZrpModel, g_rate, stationary_weight


@given(st.integers(0, 25), st.integers(1, 5))
def test_rank_unrank_roundtrip(N, kappa):
    idx = StateIndex(N, kappa)
    states = idx.enumerate()
    assert states.shape[0] == idx.size == math.comb(N + kappa - 1, kappa - 1)
    assert np.array_equal(idx.rank(states), np.arange(idx.size))
    for r in {0, idx.size // 2, idx.size - 1}:
        assert np.array_equal(idx.unrank(r), states[r])


def test_two_site_generator_is_tridiagonal():
    gen = assemble_generator(ZrpModel(30, complete_graph(2)))
    assert gen.size == 31
    L = gen.L.toarray()
    i, j = np.nonzero(L)
    assert np.all(np.abs(i - j) <= 1)


@pytest.mark.parametrize("spec", [complete_graph(3), path_graph(4)])
def test_row_sums_vanish(spec):
    gen = assemble_generator(ZrpModel(25, spec))
    assert np.max(np.abs(gen.row_sums())) < 1e-12


def test_detailed_balance_entries(rng):
    gen = assemble_generator(ZrpModel(60, complete_graph(3)))
    C = gen.L.tocoo()
    off = np.flatnonzero(C.row != C.col)
    pick = rng.choice(off, 1000, replace=False)
    L = gen.L.tocsr()
    for e in pick:
        i, j = C.row[e], C.col[e]
        wi = stationary_weight(gen.states[i])
        wj = stationary_weight(gen.states[j])
        assert wi * L[i, j] == pytest.approx(wj * L[j, i], rel=1e-12)


def test_state_cap_enforced():
    with pytest.raises(ResourceError):
        assemble_generator(ZrpModel(100, complete_graph(4)), cap=1000)


def test_triplet_roundtrip(tmp_path):
    gen = assemble_generator(ZrpModel(15, complete_graph(3)), speeded=True)
    path = tmp_path / "gen.bin"
    dump_triplets(gen, path)
    L, speeded = load_triplets(path)
    assert speeded
    assert (L != gen.L.tocsr()).nnz == 0
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nonsense" * 4)
    with pytest.raises(ArgumentError):
        load_triplets(bad)


@pytest.mark.parametrize("N", [20, 50, 121])
def test_two_site_capacity_series(N):
    m = ZrpModel(N, complete_graph(2))
    ell = m.ell
    w = np.array([1.0 / (max(k, 1) * max(N - k, 1)) for k in range(N + 1)])
    mu = w / w.sum()
    resist = math.fsum(1.0 / (mu[k] * g_rate(N - k)) for k in range(ell, N - ell))
    expected = m.theta / resist
    gen = assemble_generator(m, speeded=True)
    A = region_mask(m, gen.states, "E", 0)
    B = region_mask(m, gen.states, "E", 1)
    assert exact_capacity(m, A, B, generator=gen) == pytest.approx(expected, rel=1e-9)


def test_capacity_symmetry(rng):
    m = ZrpModel(18, path_graph(3))
    gen = assemble_generator(m, speeded=True)
    for _ in range(5):
        lab = rng.integers(0, 3, gen.size)
        A, B = lab == 0, lab == 1
        assert exact_capacity(m, A, B, generator=gen) == pytest.approx(exact_capacity(m, B, A, generator=gen), rel=1e-9)


def test_capacity_argument_checks():
    m = ZrpModel(10, complete_graph(3))
    gen = assemble_generator(m, speeded=True)
    A = region_mask(m, gen.states, "E", 0)
    with pytest.raises(ArgumentError):
        exact_capacity(m, A, A, generator=gen)
    with pytest.raises(ArgumentError):
        exact_capacity(m, A, np.zeros(gen.size, dtype=bool), generator=gen)


def test_poisson_constant_function():
    res = solve_poisson(ZrpModel(40, complete_graph(3)), np.full(3, 0.7))
    assert np.allclose(res.f_N, 0.7, atol=1e-12)
    assert np.ptp(res.F) < 1e-9
    assert res.energy < 1e-12


def test_poisson_iterative_matches_dense():
    m = ZrpModel(40, complete_graph(3))
    f = np.array([1.0, 0.0, -1.0])
    dense = solve_poisson(m, f, method="dense")
    pcg = solve_poisson(m, f, method="pcg", tol=1e-12)
    assert np.allclose(dense.f_N, pcg.f_N, atol=1e-7)
    assert dense.energy == pytest.approx(pcg.energy, rel=1e-7)


def test_poisson_resolvent_energy_identity():
    m = ZrpModel(40, path_graph(3))
    res = solve_poisson(m, np.array([1.0, -0.5, 0.2]), lam=0.5)
    scale = max(1.0, res.energy)
    assert abs(res.diagnostics["energy_identity_gap"]) < 1e-8 * scale
    assert res.diagnostics["relative_sup_residual"] < 1e-8


def test_poisson_rejects_negative_lambda():
    with pytest.raises(ArgumentError):
        solve_poisson(ZrpModel(40, complete_graph(3)), np.zeros(3), lam=-1)


@pytest.mark.parametrize("N", [10, 57])
def test_two_state_restricted_gap(N):
    m = ZrpModel(N, complete_graph(2))
    assert restricted_gap(m, 0, ell=1) == pytest.approx(g_rate(N) + 1.0, rel=1e-12)


def test_inverse_iteration_matches_dense():
    m = ZrpModel(200, complete_graph(3))
    states = restricted_states(m, 0)
    assert states.shape[0] > 400
    gen = assemble_generator(m, restriction=states)
    S = gen.symmetrized()
    dense = np.sort(np.linalg.eigvalsh(S.toarray()))[1]
    assert symmetric_gap(S, np.sqrt(gen.mu)) == pytest.approx(dense, rel=1e-8)


def test_product_chain_gap_scaling():
    vals = [birth_death_product_gap(ell, 3) * ell**2 for ell in (5, 10, 20, 40)]
    assert min(vals) > 1.0
    assert max(vals) / min(vals) < 2.0


def test_single_step_comparison_path():
    m = ZrpModel(20, complete_graph(2))
    eta = np.array([15, 5])
    path = comparison_path(m, 0, eta, 1)
    assert len(path) == 2
    assert np.array_equal(path[1], [14, 6])


def test_comparison_path_blocked_site():
    m = ZrpModel(30, path_graph(3))
    ell = m.ell
    eta = np.array([30 - ell - 3, ell, 3])
    path = comparison_path(m, 0, eta, 2)
    assert np.array_equal(path[-1], eta + np.array([-1, 0, 1]))
    for a, b in zip(path[:-1], path[1:]):
        assert np.abs(b - a).sum() == 2
        assert np.all(b[1:] <= ell)


@pytest.mark.parametrize("kappa,N", [(3, 30), (4, 20)])
def test_comparison_paths_exhaustive(kappa, N):
    for spec in (complete_graph(kappa), path_graph(kappa)):
        m = ZrpModel(N, spec)
        for x0 in range(kappa):
            audit = audit_comparison_paths(m, x0)
            assert audit.paths > 0
            assert audit.passed, audit
            assert audit.max_mu_ratio <= 4.0
            assert audit.max_congestion <= 2 * kappa**4


def test_region_masks_partition():
    m = ZrpModel(40, complete_graph(3))
    st_ = StateIndex(40, 3).enumerate()
    E = [region_mask(m, st_, "E", x) for x in range(3)]
    delta = region_mask(m, st_, "Delta")
    total = sum(e.astype(int) for e in E) + delta.astype(int)
    assert np.all(total == 1)
    assert sp.issparse(assemble_generator(m).L)
