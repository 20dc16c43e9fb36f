import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specmap.exceptions import (
    CorrespondenceError,
    DimensionMismatchError,
    EdgeListParseError,
    NumericalError,
    RankDeficientError,
    UnknownNodeError,
)
from specmap.fmap import SpectralMap, compute_spectral_map
from specmap.graph import NodeCorrespondence, parse_edge_list
from specmap.matching import (
    CandidateRanking,
    DescriptorSet,
    RegularizerConfig,
    band_limited_indicator,
    default_mask_width,
    estimate_map,
    feature_descriptors,
    landmark_descriptors,
    load_landmarks,
    map_objective,
    mean_average_precision,
    recover_node_map,
    sample_landmarks,
    slanted_mask,
    zoomout_refine,
)
from specmap.perturb import permute_graph
from specmap.spectral import Eigenbasis, graph_eigenbasis


@pytest.fixture(scope="module")
def permuted_karate(karate_graph):
    g2, S = permute_graph(karate_graph, rng_seed=11)
    return g2, S, graph_eigenbasis(karate_graph, 34), graph_eigenbasis(g2, 34)


@pytest.fixture(scope="module")
def permuted_path(path11):
    g2, S = permute_graph(path11, rng_seed=2)
    return g2, S, graph_eigenbasis(path11, 11), graph_eigenbasis(g2, 11)


class TestSlantedMask:
    def test_identical_spectra(self):
        b = Eigenbasis(np.eye(3), [0.0, 0.5, 1.0])
        W = slanted_mask(b, b, 0.1)
        assert np.array_equal(np.diag(W), np.zeros(3))
        assert W[0, 2] == pytest.approx(1.0)

    def test_formula(self):
        b = Eigenbasis(np.eye(2), [0.0, 0.1])
        W = slanted_mask(b, b, 0.1)
        assert W[1, 0] == pytest.approx(1 - math.exp(-1), rel=1e-9)
        assert W[0, 1] == pytest.approx(1 - math.exp(-1), rel=1e-9)

    def test_shape_and_width(self, karate_full_bases):
        b1, b2 = karate_full_bases
        assert slanted_mask(b1.truncate(6), b2.truncate(4), 0.2).shape == (4, 6)
        with pytest.raises(ValueError):
            slanted_mask(b1, b2, 0.0)

    def test_default_width(self):
        assert default_mask_width(Eigenbasis(np.eye(3), [0.0, 0.2, 0.6])) == pytest.approx(0.3)
        assert default_mask_width(Eigenbasis(np.eye(3)[:, :1], [0.0])) == 1.0


class TestBandLimitedIndicator:
    def test_full_basis_gives_delta(self, karate_graph, karate_full_bases):
        b1, _ = karate_full_bases
        column = band_limited_indicator(5, b1)
        expected = np.zeros(34)
        expected[karate_graph.position(5)] = 1.0
        assert np.allclose(column, expected, atol=1e-10)

    def test_single_eigenvector(self, karate_graph):
        column = band_limited_indicator(0, graph_eigenbasis(karate_graph, 1))
        assert np.linalg.norm(column) == pytest.approx(1.0)
        assert np.all(column > 0)

    def test_unknown_landmark(self, karate_full_bases):
        with pytest.raises(UnknownNodeError):
            band_limited_indicator(99, karate_full_bases[0])


class TestEstimateMap:
    def test_all_indicators_recover_ground_truth(self, karate_graph, permuted_karate):
        g2, S, b1, b2 = permuted_karate
        pairs = sample_landmarks(S, karate_graph, g2, m=34)
        F1, F2 = landmark_descriptors(pairs, b1, b2)
        estimated = estimate_map(F1, F2, b1, b2)

        assert estimated.source == "estimated"
        assert np.abs(estimated.C - compute_spectral_map(S, b1, b2).C).max() < 1e-6

    def test_unregularized_equals_least_squares(self, karate_full_bases, rng):
        b1, b2 = (b.truncate(10) for b in karate_full_bases)
        F1 = DescriptorSet(rng.normal(size=(34, 40)), "raw_feature")
        F2 = DescriptorSet(rng.normal(size=(17, 40)), "raw_feature")
        A, B = b1.phi.T @ F1.F, b2.phi.T @ F2.F
        oracle = np.linalg.solve(A @ A.T, A @ B.T).T

        assert np.allclose(estimate_map(F1, F2, b1, b2).C, oracle, atol=1e-8)

    def test_rank_deficient(self, karate_graph, karate_patch, karate_full_bases):
        sub, S = karate_patch
        b1, b2 = (b.truncate(10) for b in karate_full_bases)
        F1, F2 = landmark_descriptors(sample_landmarks(S, karate_graph, sub, m=3), b1, b2)

        with pytest.raises(RankDeficientError):
            estimate_map(F1, F2, b1, b2)

        fallback = estimate_map(F1, F2, b1, b2, rank_deficient="lstsq")
        assert fallback.notes["min_norm_fallback"]
        assert fallback.C.shape == (10, 10)

    def test_single_pair_descent(self, karate_full_bases):
        b1, b2 = karate_full_bases[0].truncate(10), karate_full_bases[1].truncate(8)
        F1, F2 = landmark_descriptors([(0, 0)], b1, b2)
        reg = RegularizerConfig(mu_mask=1.0)
        estimated = estimate_map(F1, F2, b1, b2, reg, rank_deficient="lstsq")

        assert estimated.notes["mask_width"] == pytest.approx(default_mask_width(b1))
        assert map_objective(estimated, F1, F2, b1, b2, reg) <= map_objective(np.zeros((8, 10)), F1, F2, b1, b2, reg)

    def test_orthogonality_descent(self, karate_graph, karate_patch, karate_full_bases):
        sub, S = karate_patch
        b1, b2 = (b.truncate(8) for b in karate_full_bases)
        F1, F2 = landmark_descriptors(sample_landmarks(S, karate_graph, sub, m=5, rng_seed=3), b1, b2)

        ridge = estimate_map(F1, F2, b1, b2, RegularizerConfig(mu_mask=1e-2), rank_deficient="lstsq")
        reg = RegularizerConfig(mu_mask=1e-2, mu_orth=1e-1)
        refined = estimate_map(F1, F2, b1, b2, reg, rank_deficient="lstsq")

        assert 1 <= refined.notes["orth_iterations"] <= 500
        assert map_objective(refined, F1, F2, b1, b2, reg) <= map_objective(ridge, F1, F2, b1, b2, reg) + 1e-12

    @pytest.mark.parametrize("rng_seed", range(4))
    def test_karate_landmarks_beat_unregularized(self, karate_graph, karate_patch, karate_full_bases, rng_seed):
        sub, S = karate_patch
        b1, b2 = karate_full_bases[0].truncate(20), karate_full_bases[1]
        F1, F2 = landmark_descriptors(sample_landmarks(S, karate_graph, sub, m=10, rng_seed=rng_seed), b1, b2)
        truth = compute_spectral_map(S, b1, b2).C

        def error(reg):
            C = estimate_map(F1, F2, b1, b2, reg, rank_deficient="lstsq").C
            return np.linalg.norm(C - truth) / np.linalg.norm(truth)

        regularized = error(RegularizerConfig(mu_mask=1e-3))
        # 10 landmarks fix at most 10 of the 20 source directions per row
        assert regularized < 0.9
        assert regularized < error(RegularizerConfig())

    def test_mask_floor_keeps_rows_solvable(self, karate_graph, karate_patch, karate_full_bases):
        sub, S = karate_patch
        b1, b2 = karate_full_bases[0].truncate(20), karate_full_bases[1]
        F1, F2 = landmark_descriptors(sample_landmarks(S, karate_graph, sub, m=3), b1, b2)

        reg = RegularizerConfig(mu_mask=1e-3)
        estimated = estimate_map(F1, F2, b1, b2, reg)
        assert not estimated.notes["min_norm_fallback"]
        assert estimated.notes["mask_floor"] == 0.3
        # the floor alone bounds the penalty, hence ‖C‖, by the objective at C=0
        at_zero = map_objective(np.zeros((b2.k, b1.k)), F1, F2, b1, b2, reg)
        assert np.sum(estimated.C ** 2) <= at_zero / (reg.mu_mask * reg.mask_floor)

    @settings(max_examples=20, deadline=None)
    @given(copies=st.integers(2, 4), mu_mask=st.sampled_from([1e-4, 1e-3, 1e-1]))
    def test_weights_ignore_descriptor_count(self, karate_graph, karate_patch, karate_full_bases, copies, mu_mask):
        sub, S = karate_patch
        b1, b2 = (b.truncate(12) for b in karate_full_bases)
        F1, F2 = landmark_descriptors(sample_landmarks(S, karate_graph, sub, m=6, rng_seed=1), b1, b2)
        reg = RegularizerConfig(mu_mask=mu_mask)

        repeated = (DescriptorSet(np.tile(F.F, copies), F.kind) for F in (F1, F2))
        assert np.allclose(estimate_map(*repeated, b1, b2, reg).C, estimate_map(F1, F2, b1, b2, reg).C, atol=1e-8)

    def test_dimension_checks(self, karate_full_bases, rng):
        b1, b2 = karate_full_bases
        with pytest.raises(DimensionMismatchError):
            estimate_map(DescriptorSet(rng.normal(size=(34, 3))), DescriptorSet(rng.normal(size=(17, 4))), b1, b2)
        with pytest.raises(DimensionMismatchError):
            estimate_map(DescriptorSet(rng.normal(size=(17, 3))), DescriptorSet(rng.normal(size=(17, 3))), b1, b2)


def test_descriptor_set_validation():
    assert DescriptorSet(np.ones(4)).m == 1
    with pytest.raises(DimensionMismatchError):
        DescriptorSet(np.ones((4, 0)))
    with pytest.raises(NumericalError):
        DescriptorSet(np.array([1.0, np.inf]))
    with pytest.raises(ValueError):
        DescriptorSet(np.ones(4), "learned")


def test_regularizer_validation():
    assert RegularizerConfig().mask_width is None
    assert RegularizerConfig().to_dict()["mask_floor"] == 0.3
    with pytest.raises(ValueError):
        RegularizerConfig(mu_mask=-1.0)
    with pytest.raises(ValueError):
        RegularizerConfig(mask_width=0.0)
    with pytest.raises(ValueError):
        RegularizerConfig(mu_orth=float("nan"))
    with pytest.raises(ValueError):
        RegularizerConfig(mask_floor=-1.0)


def test_feature_descriptors(rng):
    F1, F2 = feature_descriptors(rng.normal(5.0, 2.0, size=(20, 3)), rng.normal(size=(12, 3)))
    assert F1.kind == F2.kind == "raw_feature"
    assert np.allclose(F1.F.mean(axis=0), 0.0, atol=1e-12)
    with pytest.raises(DimensionMismatchError):
        feature_descriptors(rng.normal(size=(20, 3)), rng.normal(size=(12, 2)))


def test_sample_landmarks(karate_graph, karate_patch):
    sub, S = karate_patch
    pairs = sample_landmarks(S, karate_graph, sub, m=50, rng_seed=4)
    assert len(pairs) == 17
    assert all(S.pairs(karate_graph, sub)[v] == u for u, v in pairs)
    assert sample_landmarks(S, karate_graph, sub, m=5, rng_seed=4) == sample_landmarks(S, karate_graph, sub, m=5, rng_seed=4)


def test_load_landmarks(tmp_path):
    path = tmp_path / "landmarks.txt"
    path.write_text("# g1 g2\n0 3\nhub spoke\n")
    assert load_landmarks(path) == [(0, 3), ("hub", "spoke")]

    path.write_text("0 1 2\n")
    with pytest.raises(EdgeListParseError):
        load_landmarks(path)


class TestRecoverNodeMap:
    def test_identity_map_on_same_graph(self, karate_full_bases):
        b1, _ = karate_full_bases
        ranking = recover_node_map(SpectralMap(np.eye(34), b1.meta, b1.meta), b1, b1)
        assert np.array_equal(ranking.top1(), np.arange(34))
        assert np.all(np.diff(ranking.distances, axis=1) >= 0)

    def test_candidate_lists_are_permutations(self, karate_patch, karate_full_bases):
        _, S = karate_patch
        b1, b2 = (b.truncate(8) for b in karate_full_bases)
        ranking = recover_node_map(compute_spectral_map(S, b1, b2), b1, b2)
        assert ranking.order.shape == (17, 34)
        assert np.array_equal(np.sort(ranking.order, axis=1), np.tile(np.arange(34), (17, 1)))

    def test_inverts_permutation(self, permuted_karate):
        _, S, b1, b2 = permuted_karate
        ranking = recover_node_map(compute_spectral_map(S, b1, b2), b1, b2)
        assert np.array_equal(ranking.top1(), S.targets)
        assert mean_average_precision(ranking, S) == 1.0

    def test_chunked_pool_matches_serial(self, permuted_karate):
        _, S, b1, b2 = permuted_karate
        C = compute_spectral_map(S, b1.truncate(6), b2.truncate(6))
        serial = recover_node_map(C, b1.truncate(6), b2.truncate(6))
        pooled = recover_node_map(C, b1.truncate(6), b2.truncate(6), workers=3, chunk_size=5)
        assert np.array_equal(serial.order, pooled.order)
        assert np.array_equal(serial.distances, pooled.distances)

    def test_rows(self, karate_graph, permuted_karate):
        g2, S, b1, b2 = permuted_karate
        ranking = recover_node_map(compute_spectral_map(S, b1, b2), b1, b2)
        query, rank, candidate, distance = next(ranking.to_rows(karate_graph, g2))
        assert (query, rank) == (g2.node_ids[0], 1)
        assert candidate == karate_graph.node_ids[S.target[0]]
        assert distance == pytest.approx(0.0, abs=1e-8)

    def test_ties_follow_node_ids(self):
        # first appearance puts ids 2, 0, 1 at positions 0, 1, 2
        g = parse_edge_list(["2 0", "0 1"])
        b = graph_eigenbasis(g, 3)
        ranking = recover_node_map(SpectralMap(np.zeros((3, 3)), b.meta, b.meta), b, b)
        assert np.array_equal(ranking.order, np.tile([1, 2, 0], (3, 1)))
        assert mean_average_precision(ranking, NodeCorrespondence([1, 1, 1], 3)) == 1.0

        start = SpectralMap(np.zeros((1, 1)), b.truncate(1).meta, b.truncate(1).meta)
        refined = zoomout_refine(start, b, b, step=2, k_max=3)
        assert np.allclose(refined.C, b.phi.T @ b.phi[[1, 1, 1]])


class TestZoomOut:
    def test_ground_truth_is_a_fixed_point(self, permuted_path):
        _, S, b1, b2 = permuted_path
        start = compute_spectral_map(S, b1.truncate(5), b2.truncate(5))
        refined = zoomout_refine(start, b1, b2, step=2, k_max=11)

        assert refined.source == "refined"
        assert refined.C.shape == (11, 11)
        assert np.abs(refined.C - compute_spectral_map(S, b1, b2).C).max() < 1e-8

    def test_single_round(self, permuted_path):
        _, S, b1, b2 = permuted_path
        start = compute_spectral_map(S, b1.truncate(5), b2.truncate(5))
        matches = recover_node_map(start, b1.truncate(5), b2.truncate(5)).top1()
        refined = zoomout_refine(start, b1.truncate(9), b2.truncate(9), step=6, k_max=9)
        assert np.allclose(refined.C, b2.phi[:, :9].T @ b1.phi[matches, :9])

    def test_preconditions(self, permuted_path):
        _, S, b1, b2 = permuted_path
        start = compute_spectral_map(S, b1.truncate(5), b2.truncate(5))
        with pytest.raises(ValueError):
            zoomout_refine(start, b1, b2, k_max=5)
        with pytest.raises(ValueError):
            zoomout_refine(start, b1, b2, step=0)
        with pytest.raises(ValueError):
            zoomout_refine(compute_spectral_map(S, b1.truncate(5), b2.truncate(4)), b1, b2)


def _ranked(order) -> CandidateRanking:
    order = np.asarray(order)
    return CandidateRanking(order, np.broadcast_to(np.arange(order.shape[1], dtype=float), order.shape))


class TestMeanAveragePrecision:
    def test_all_first(self):
        ranking = _ranked([[0, 1], [1, 0]])
        assert mean_average_precision(ranking, NodeCorrespondence([0, 1], 2)) == 1.0

    def test_hand_value(self):
        ranking = _ranked([[0, 1], [0, 1]])
        assert mean_average_precision(ranking, NodeCorrespondence([0, 1], 2)) == 0.75

    def test_ties_go_to_lower_id(self):
        ranking = CandidateRanking(np.array([[1, 0]]), np.array([[0.5, 0.5]]))
        assert mean_average_precision(ranking, NodeCorrespondence([0], 2)) == 1.0

        # position 0 holds the larger id
        ranking = CandidateRanking(np.array([[0, 1]]), np.array([[0.5, 0.5]]), tie_key=np.array([1, 0]))
        assert mean_average_precision(ranking, NodeCorrespondence([0], 2)) == 0.5
        assert mean_average_precision(ranking, NodeCorrespondence([1], 2)) == 1.0

    def test_missing_true_match(self):
        ranking = _ranked([[1], [0]])
        with pytest.raises(CorrespondenceError):
            mean_average_precision(ranking, NodeCorrespondence([0, 1], 2))

    def test_size_mismatch(self):
        ranking = _ranked([[0, 1]])
        with pytest.raises(DimensionMismatchError):
            mean_average_precision(ranking, NodeCorrespondence([0, 1], 2))

    def test_random_rankings_match_harmonic_expectation(self):
        n = 34
        truth = NodeCorrespondence.identity(n)
        scores = []
        for seed in range(200):
            rng = np.random.default_rng(seed)
            order = np.array([rng.permutation(n) for _ in range(n)])
            scores.append(mean_average_precision(_ranked(order), truth))
        harmonic = sum(1 / r for r in range(1, n + 1))
        assert np.mean(scores) == pytest.approx(harmonic / n, abs=0.02)

    @given(st.permutations(range(8)), st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_relabel_invariance(self, relabel, seed):
        rng = np.random.default_rng(seed)
        order = np.array([rng.permutation(8) for _ in range(5)])
        truth = NodeCorrespondence(rng.permutation(8)[:5], 8)
        relabel = np.asarray(relabel)

        relabeled = _ranked(relabel[order])
        relabeled_truth = NodeCorrespondence(relabel[truth.targets], 8)
        original = mean_average_precision(_ranked(order), truth)
        assert mean_average_precision(relabeled, relabeled_truth) == original
