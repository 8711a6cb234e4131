import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freca.aggregation import FedTruthResult, Regulation, fedtruth
from freca.contribution import (
    ClientScores,
    ContributionReport,
    UtilityOracle,
    average_across_rounds,
    build_report,
    freca_aw,
    gap_distance,
    loo,
    loo_from_utility,
    loss_share,
    net_contribution,
    normalize_scores,
    shapley,
    shapley_from_utility,
)
from freca.data import generate_blobs, SyntheticSpec
from freca.model import ModelSpec, TrainConfig, init_params, local_train
from freca.params import ModelUpdate


def permutation_shapley(n, utility):
    """Average marginal contribution over all n! orderings."""
    totals = [0.0] * n
    perms = list(itertools.permutations(range(n)))
    for order in perms:
        mask = 0
        for k in order:
            totals[k] += utility(mask | 1 << k) - utility(mask)
            mask |= 1 << k
    return [t / len(perms) for t in totals]


def table_utility(table):
    return lambda mask: table[mask]


class TestFrecaAw:
    def test_single(self):
        assert freca_aw(fedtruth([ModelUpdate(0, [1.0, 2.0], 3)])) == [1.0]

    def test_symmetric(self):
        res = fedtruth([ModelUpdate(i, v, 1) for i, v in enumerate([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])])
        assert freca_aw(res) == pytest.approx([0.25] * 4)

    def test_boosted_client_gets_smallest_weight(self):
        rng = np.random.default_rng(0)
        base = rng.standard_normal(12)
        ups = [ModelUpdate(i, base + 0.1 * rng.standard_normal(12), 10) for i in range(3)]
        ups.append(ModelUpdate(3, 10 * ups[0].delta, 10))
        aw = freca_aw(fedtruth(ups))
        assert aw[3] < min(aw[:3])


class TestGapDistance:
    def test_zero_distances(self):
        u = [1.0, 1.0]
        ups = [ModelUpdate(i, u, 1) for i in range(3)]
        total, per = gap_distance(ups, fedtruth(ups))
        assert total == 0.0 and per == [0.0, 0.0, 0.0]

    def test_two_clients(self):
        # truth at the origin, distances 1 and 3
        res = FedTruthResult(truth=np.zeros(1), weights=[0.75, 0.25], performances=[0.25, 0.75], iterations=1)
        total, per = gap_distance([ModelUpdate(0, [1.0], 1), ModelUpdate(1, [3.0], 1)], res)
        assert per == pytest.approx([4.0, 4.0]) and total == pytest.approx(8.0)

    @pytest.mark.parametrize("reg", [Regulation("reciprocal"), Regulation("neg_log")])
    def test_homogeneous_in_distance_scale(self, reg, rng):
        vecs = rng.standard_normal((5, 4))
        ups = [ModelUpdate(i, v, 1) for i, v in enumerate(vecs)]
        ups_c = [ModelUpdate(i, 3.5 * v, 1) for i, v in enumerate(vecs)]
        res = fedtruth(ups, reg=reg)
        # scale the converged estimate too; the stopping tolerance is absolute
        scaled = FedTruthResult(3.5 * res.truth, res.weights, res.performances, res.iterations)
        t1, _ = gap_distance(ups, res, reg=reg)
        t2, _ = gap_distance(ups_c, scaled, reg=reg)
        assert t2 == pytest.approx(3.5 * t1, rel=1e-9)

    def test_reciprocal_makes_every_term_equal(self, rng):
        # g(p_k) d_k = sum(d) for every k when g(p) = 1/p
        ups = [ModelUpdate(i, v, 1) for i, v in enumerate(rng.standard_normal((6, 3)))]
        res = fedtruth(ups)
        _, per = gap_distance(ups, res)
        assert per == pytest.approx([math.fsum(res.distances)] * 6, rel=1e-12)


class TestLossShareAndNet:
    @pytest.mark.parametrize(
        "gaps, expected",
        [([1, 1, 1, 1], [0.25] * 4), ([4, 4], [0.5, 0.5]), ([1, 3], [0.25, 0.75]), ([0, 0, 0], [1 / 3] * 3)],
    )
    def test_loss_share(self, gaps, expected):
        assert loss_share(gaps) == pytest.approx(expected)

    def test_loss_share_negative(self):
        with pytest.raises(ValueError):
            loss_share([1.0, -0.5])

    def test_worked_example(self):
        assert net_contribution([0.1, 0.2, 0.3, 0.4]) == pytest.approx([12 / 25, 6 / 25, 4 / 25, 3 / 25], abs=1e-12)

    def test_uniform(self):
        assert net_contribution([0.2] * 5) == pytest.approx([0.2] * 5)

    def test_two(self):
        assert net_contribution([0.25, 0.75]) == pytest.approx([0.75, 0.25])

    def test_sum_violation(self):
        with pytest.raises(ValueError):
            net_contribution([0.5, 0.6])

    def test_zero_share_is_floored(self):
        c = net_contribution([0.0, 0.5, 0.5])
        assert c[0] < 1.0 and c[0] == pytest.approx(1.0, abs=1e-6)

    @given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=12))
    def test_net_laws(self, raw):
        shares = [x / math.fsum(raw) for x in raw]
        c = net_contribution(shares)
        assert math.fsum(c) == pytest.approx(1.0, abs=1e-9)
        for i in range(len(c)):
            for k in range(len(c)):
                assert c[k] * shares[k] == pytest.approx(c[i] * shares[i], abs=1e-9)
                if shares[i] < shares[k]:
                    assert c[i] > c[k]


class TestShapley:
    def test_two_player_example(self):
        table = {0b00: 0.0, 0b01: 0.5, 0b10: 0.7, 0b11: 0.8}
        assert shapley_from_utility(2, table_utility(table)) == pytest.approx([0.3, 0.5], abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_against_permutation_oracle_and_axioms(self, n, seed):
        rng = np.random.default_rng(seed)
        table = rng.uniform(0, 1, 1 << n).tolist()
        sv = shapley_from_utility(n, table_utility(table))
        np.testing.assert_allclose(sv, permutation_shapley(n, table_utility(table)), atol=1e-9)
        assert math.fsum(sv) == pytest.approx(table[-1] - table[0], abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 5), st.integers(0, 2**32 - 1))
    def test_dummy_and_symmetry(self, n, seed):
        rng = np.random.default_rng(seed)
        base = rng.uniform(0, 1, 1 << (n - 1))
        # player n-1 is a dummy: utility ignores its bit
        dummy = [base[m & ((1 << (n - 1)) - 1)] for m in range(1 << n)]
        assert shapley_from_utility(n, table_utility(dummy))[n - 1] == pytest.approx(0.0, abs=1e-12)
        # players 0 and 1 interchangeable: utility depends on their bits only through their sum
        sym_vals = rng.uniform(0, 1, (3, 1 << (n - 2)))
        sym = [sym_vals[(m & 1) + (m >> 1 & 1), m >> 2] for m in range(1 << n)]
        sv = shapley_from_utility(n, table_utility(sym))
        assert sv[0] == pytest.approx(sv[1], abs=1e-12)

    def test_evaluation_count_and_cap(self):
        calls = []
        shapley_from_utility(8, lambda m: calls.append(m) or 0.0)
        assert len(calls) == 256 and len(set(calls)) == 256
        with pytest.raises(ValueError):
            shapley_from_utility(13, lambda m: 0.0)


class TestLoo:
    def test_direct_subtraction(self):
        table = {0b11: 0.9, 0b10: 0.8, 0b01: 0.85}
        assert loo_from_utility(2, table_utility(table)) == pytest.approx([0.1, 0.05])

    def test_evaluation_count(self):
        calls = []
        loo_from_utility(8, lambda m: calls.append(m) or 0.0)
        assert len(calls) == 9


@pytest.fixture(scope="module")
def oracle_setup():
    data = generate_blobs(SyntheticSpec(input_dim=6, num_classes=4, cluster_spread=0.8, samples=600, seed=3))
    spec = ModelSpec("linear", 6, 4)
    w0 = init_params(spec)
    cfg = TrainConfig(2, 16, 0.1, seed=1)
    ups = [local_train(spec, w0, data.subset(range(i * 100, (i + 1) * 100)), cfg, client_id=i) for i in range(4)]
    validation = data.subset(range(400, 600))
    return spec, w0, ups, validation


class TestWithRealOracle:
    def test_counts(self, oracle_setup):
        spec, w0, ups, val = oracle_setup
        oracle = UtilityOracle(w0, 1.0, val, spec)
        shapley(ups, oracle)
        assert oracle.evaluations == 16
        oracle.evaluations = 0
        loo(ups, oracle)
        assert oracle.evaluations == 5

    def test_efficiency(self, oracle_setup):
        spec, w0, ups, val = oracle_setup
        oracle = UtilityOracle(w0, 1.0, val, spec)
        sv = shapley(ups, oracle)
        assert math.fsum(sv) == pytest.approx(oracle(ups) - oracle([]), abs=1e-9)

    def test_identical_clients_equal_values(self, oracle_setup):
        spec, w0, ups, val = oracle_setup
        twins = [ups[0], ModelUpdate(1, ups[0].delta, ups[0].sample_count), ups[2]]
        oracle = UtilityOracle(w0, 1.0, val, spec)
        sv = shapley(twins, oracle)
        assert sv[0] == pytest.approx(sv[1], abs=1e-12)
        same = [ModelUpdate(i, ups[0].delta, 10) for i in range(3)]
        assert len(set(loo(same, oracle))) == 1

    def test_no_op_removal_gives_zero_loo(self, oracle_setup):
        spec, w0, ups, val = oracle_setup
        # client 2's delta is the mean of clients 0 and 1; equal counts keep the FedAvg unchanged without it
        mid = 0.5 * (ups[0].delta + ups[1].delta)
        trio = [ModelUpdate(0, ups[0].delta, 10), ModelUpdate(1, ups[1].delta, 10), ModelUpdate(2, mid, 10)]
        assert loo(trio, UtilityOracle(w0, 1.0, val, spec))[2] == pytest.approx(0.0, abs=1e-12)

    def test_empty_subset_scores_base_model(self, oracle_setup):
        spec, w0, ups, val = oracle_setup
        oracle = UtilityOracle(w0, 1.0, val, spec)
        # zero params predict class 0 everywhere
        assert oracle([]) == pytest.approx(np.mean(val.labels == 0))


class TestNormalize:
    def test_minmax(self):
        assert normalize_scores([2, 4, 6], "minmax") == pytest.approx([0, 0.5, 1])
        assert normalize_scores([3, 3], "minmax") == [0.5, 0.5]

    def test_softmax(self):
        assert normalize_scores([1.0, 1.0, 1.0], "softmax") == pytest.approx([1 / 3] * 3)
        assert normalize_scores([0.0, math.log(3)], "softmax") == pytest.approx([0.25, 0.75])
        assert normalize_scores([1000.0, 1000.0], "softmax") == pytest.approx([0.5, 0.5])

    def test_errors(self):
        with pytest.raises(ValueError):
            normalize_scores([], "minmax")
        with pytest.raises(ValueError):
            normalize_scores([1.0, math.nan], "softmax")
        with pytest.raises(ValueError):
            normalize_scores([1.0], "zscore")


def rep(round_idx, nets):
    return ContributionReport(round_idx, {cid: ClientScores(net=v) for cid, v in nets.items()})


class TestAverage:
    def test_identity(self):
        avg = average_across_rounds([rep(0, {0: 0.2, 1: 0.8})])
        assert avg[0]["net"] == 0.2 and avg[1]["net"] == 0.8 and avg[0]["sv_raw"] is None

    def test_two_rounds(self):
        avg = average_across_rounds([rep(0, {0: 0.2, 1: 0.8}), rep(1, {0: 0.4, 1: 0.6})])
        assert [avg[0]["net"], avg[1]["net"]] == pytest.approx([0.3, 0.7])

    def test_absent_client(self):
        avg = average_across_rounds([rep(0, {0: 0.2, 1: 0.8}), rep(1, {0: 1.0}), rep(2, {0: 0.6, 1: 0.4})])
        assert avg[1]["net"] == pytest.approx(0.6)
        assert avg[0]["net"] == pytest.approx(0.6)

    def test_empty(self):
        with pytest.raises(ValueError):
            average_across_rounds([])


def test_build_report_scales_and_preserves_sums(rng):
    sv = rng.normal(size=5).tolist()
    r = build_report(3, [10, 11, 12, 13, 14], aw=[0.2] * 5, sv=sv)
    assert set(r.per_client) == {10, 11, 12, 13, 14}
    mm = [s.sv_minmax for s in r.per_client.values()]
    assert min(mm) == 0.0 and max(mm) == 1.0
    assert math.fsum(s.sv_softmax for s in r.per_client.values()) == pytest.approx(1.0)
    assert all(s.loo_raw is None and s.net is None for s in r.per_client.values())


def test_metric_permutation_equivariance(rng):
    vecs = rng.standard_normal((5, 6))
    vecs[4] *= 10
    perm = rng.permutation(5)
    results = []
    for order in (np.arange(5), perm):
        ups = [ModelUpdate(i, vecs[i], 1) for i in order]
        res = fedtruth(ups, reg=Regulation("neg_log"))
        _, gaps = gap_distance(ups, res, reg=Regulation("neg_log"))
        results.append((np.array(freca_aw(res)), np.array(net_contribution(loss_share(gaps)))))
    np.testing.assert_allclose(results[1][0], results[0][0][perm], atol=1e-12)
    np.testing.assert_allclose(results[1][1], results[0][1][perm], atol=1e-12)
