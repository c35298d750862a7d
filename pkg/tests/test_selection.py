import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _scenarios import noiseless_plurality, valid_ids
from mrkit.errors import ExposureSERequired, MissingLDEntry, NoRelevantInstruments
from mrkit.selection import (
    LDMatrix,
    VotingMatrix,
    default_lambda,
    ld_clump,
    max_clique_valid_set,
    maximum_cliques,
    robust_confidence_interval,
    select_relevant,
    spi_select,
    voting_matrix,
)
from mrkit.summary import ivw_estimate
from mrkit.types import SnpRecord, SummaryDataset


def with_p(pvals, ids=None):
    p = len(pvals)
    return SummaryDataset.from_arrays(np.full(p, 0.1), 0.01, np.full(p, 0.05), 0.01,
                                      pval_exposure=pvals, ids=ids)


def brute_force_cliques(adj):
    k = adj.shape[0]
    for size in range(k, 0, -1):
        found = [c for c in itertools.combinations(range(k), size)
                 if all(adj[i, j] for i, j in itertools.combinations(c, 2))]
        if found:
            return sorted(found)
    return [()]


# -- clumping and screening ---------------------------------------------------


def test_clump_identity_keeps_everything():
    data = with_p([1e-9, 1e-8, 1e-10])
    assert ld_clump(data, LDMatrix.identity(data.ids), 0.01).ids == data.ids


def test_clump_pair_keeps_smaller_p():
    data = with_p([1e-5, 1e-9], ["a", "b"])
    ld = LDMatrix.from_pairs(["a", "b"], {("a", "b"): math.sqrt(0.5)})
    assert ld_clump(data, ld, 0.01).ids == ["b"]


def test_clump_chain_keeps_ends():
    data = with_p([1e-10, 1e-9, 1e-8], ["s1", "s2", "s3"])
    r = math.sqrt(0.9)
    ld = LDMatrix.from_pairs(data.ids, {("s1", "s2"): r, ("s2", "s3"): r})
    assert ld_clump(data, ld, 0.01).ids == ["s1", "s3"]


def test_clump_tie_broken_by_id():
    data = with_p([1e-9, 1e-9], ["b", "a"])
    ld = LDMatrix.from_pairs(data.ids, {("a", "b"): 0.9})
    assert ld_clump(data, ld, 0.01).ids == ["a"]


def test_clump_window_limits_comparisons():
    recs = [SnpRecord("a", "A", "G", 0.1, 0.01, 0.05, 0.01, 1e-9, chrom="1", pos=100),
            SnpRecord("b", "A", "G", 0.1, 0.01, 0.05, 0.01, 1e-8, chrom="1", pos=900_000)]
    data = SummaryDataset(tuple(recs))
    ld = LDMatrix.from_pairs(["a", "b"], {("a", "b"): 0.9})
    assert ld_clump(data, ld, 0.01, window=500_000).ids == ["a", "b"]
    assert ld_clump(data, ld, 0.01).ids == ["a"]


def test_clump_missing_ld_entry():
    data = with_p([1e-9, 1e-9], ["a", "b"])
    with pytest.raises(MissingLDEntry):
        ld_clump(data, LDMatrix.identity(["a"]), 0.01)


def test_select_relevant_rules():
    data = with_p([1e-10, 1e-3, 5e-8])
    assert select_relevant(data, 1.0).ids == data.ids
    assert select_relevant(data, 5e-8).ids == ["snp1"]
    with pytest.raises(NoRelevantInstruments) as err:
        select_relevant(data, 1e-12)
    assert len(err.value.dataset) == 0


# -- voting -------------------------------------------------------------------


def noiseless(ratios, g=None, se=0.01):
    ratios = np.asarray(ratios, float)
    g = np.full(ratios.size, 0.1) if g is None else np.asarray(g, float)
    return SummaryDataset.from_arrays(g, se, ratios * g, se, pval_exposure=1e-20)


def test_votes_all_ones_on_valid_noiseless_data():
    vm = voting_matrix(noiseless([0.3] * 5, g=[0.1, 0.2, -0.15, 0.3, 0.05]))
    assert vm.votes.all()


def test_votes_block_structure():
    vm = voting_matrix(noiseless([2, 2, 2, 5], g=[0.1, 0.12, 0.09, 0.11]))
    expected = np.array([[1, 1, 1, 0], [1, 1, 1, 0], [1, 1, 1, 0], [0, 0, 0, 1]], bool)
    np.testing.assert_array_equal(vm.votes, expected)


def test_votes_infinite_lambda():
    assert voting_matrix(noiseless([1, 2, 3, 4]), lam=math.inf).votes.all()


def test_votes_need_exposure_se():
    data = SummaryDataset.from_arrays([0.1, 0.2], None, [0.1, 0.2], 0.01)
    with pytest.raises(ExposureSERequired):
        voting_matrix(data)


def test_default_lambda():
    assert default_lambda(10) == pytest.approx(math.sqrt(2 * math.log(100)))


summary_rows = st.lists(
    st.tuples(st.floats(0.02, 0.3).flatmap(lambda a: st.sampled_from([a, -a])),
              st.floats(-0.3, 0.3), st.floats(0.005, 0.05), st.floats(0.005, 0.05)),
    min_size=2, max_size=8,
)


def _from_rows(rows):
    g, G, sg, sG = map(np.array, zip(*rows))
    return SummaryDataset.from_arrays(g, sg, G, sG, pval_exposure=1e-10)


@settings(max_examples=100, deadline=None)
@given(summary_rows, st.floats(0, 5), st.floats(0, 5), st.booleans())
def test_votes_symmetric_and_monotone_in_lambda(rows, l1, l2, plugin):
    data = _from_rows(rows)
    lo, hi = sorted((l1, l2))
    a, b = voting_matrix(data, lo, plugin), voting_matrix(data, hi, plugin)
    assert np.array_equal(a.votes, a.votes.T)
    assert a.votes.diagonal().all()
    assert not np.any(a.votes & ~b.votes)
    assert len(max_clique_valid_set(a).valid_set) <= len(max_clique_valid_set(b).valid_set)


# -- cliques ------------------------------------------------------------------


def test_clique_examples():
    ids = ("a", "b", "c", "d")
    full = VotingMatrix(ids, np.ones((4, 4), bool), np.ones(4))
    assert max_clique_valid_set(full).valid_set == ids
    block = np.eye(4, dtype=bool)
    block[:3, :3] = True
    assert max_clique_valid_set(VotingMatrix(ids, block, np.ones(4))).valid_set == ("a", "b", "c")


def test_equal_triangles_pick_stronger():
    ids = tuple("abcdef")
    adj = np.eye(6, dtype=bool)
    adj[:3, :3] = adj[3:, 3:] = True
    res = max_clique_valid_set(VotingMatrix(ids, adj, [1, 1, 1, 2, 2, 2]))
    assert res.valid_set == ("d", "e", "f")
    assert set(res.ties) == {("a", "b", "c"), ("d", "e", "f")}
    # equal strength falls back to lexicographic order
    res = max_clique_valid_set(VotingMatrix(ids, adj, np.ones(6)))
    assert res.valid_set == ("a", "b", "c")


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 12), st.floats(0.1, 0.9), st.integers(0, 2**31 - 1))
def test_cliques_match_brute_force(k, density, seed):
    rng = np.random.default_rng(seed)
    upper = np.triu(rng.random((k, k)) < density, 1)
    adj = upper | upper.T | np.eye(k, dtype=bool)
    assert maximum_cliques(adj) == brute_force_cliques(adj)


# -- pipeline and robust interval ---------------------------------------------


def test_noiseless_plurality_recovery():
    rng = np.random.default_rng(21)
    for _ in range(30):
        data = noiseless_plurality(rng)
        assert set(spi_select(data).valid_set) == valid_ids(data)


def test_spi_estimate_is_ivw_on_valid_set():
    data = noiseless_plurality(np.random.default_rng(22))
    sel = spi_select(data)
    assert sel.estimate.beta_hat == pytest.approx(0.5, abs=1e-12)
    assert sel.estimate.beta_hat == ivw_estimate(data.subset(sel.valid_set)).beta_hat


def test_robust_ci_zero_noise_collapses():
    g = np.array([0.1, 0.2, 0.15, 0.12])
    data = SummaryDataset.from_arrays(g, 1e-12, 0.4 * g, 1e-12, pval_exposure=1e-30)
    ci = robust_confidence_interval(data, n_resamples=20, seed=1)
    assert ci.lower == pytest.approx(0.4, abs=1e-9)
    assert ci.upper == pytest.approx(0.4, abs=1e-9)


def test_robust_ci_contains_pointwise_and_is_seeded():
    from _scenarios import noisy_plurality

    data = noisy_plurality(np.random.default_rng(23), seed=5, n=5000)
    point = spi_select(data, p_threshold=None).estimate
    a = robust_confidence_interval(data, n_resamples=40, seed=9)
    b = robust_confidence_interval(data, n_resamples=40, seed=9)
    assert (a.lower, a.upper) == (b.lower, b.upper)
    assert a.lower <= point.ci_lower and a.upper >= point.ci_upper
    g = np.linspace(-2, 2, 401)
    snapped = robust_confidence_interval(data, n_resamples=40, seed=9, grid=g)
    assert snapped.lower <= a.lower and snapped.upper >= a.upper
