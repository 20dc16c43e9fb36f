import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import connected_graph
from specmap.exceptions import DimensionMismatchError
from specmap.fmap import (
    SpectralMap,
    compute_spectral_map,
    diagonal_energy,
    distillation_loss,
    gaussian_noise_map,
    map_distance,
    normalize_signal,
    pullback_signal,
    reverse_map,
    rmse,
    transfer_signal,
)
from specmap.graph import SignalMatrix
from specmap.perturb import khop_for_fraction, permute_graph
from specmap.spectral import BasisMeta, graph_eigenbasis

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def _map(C) -> SpectralMap:
    C = np.asarray(C, dtype=float)
    return SpectralMap(C, BasisMeta(10, C.shape[1], "normalized"), BasisMeta(8, C.shape[0], "normalized"))


def test_permuted_graph_map_is_signed_identity():
    checked = 0
    for seed in range(30):
        g = connected_graph(200, seed)
        extended = graph_eigenbasis(g, 31)
        if not extended.has_simple_spectrum():
            continue
        b1 = extended.truncate(30)
        g2, S = permute_graph(g, rng_seed=seed)
        C = compute_spectral_map(S, b1, graph_eigenbasis(g2, 30)).C

        assert np.allclose(np.abs(np.diag(C)), 1.0, atol=1e-6)
        assert np.abs(C - np.diag(np.diag(C))).max() < 1e-6
        checked += 1
        if checked == 10:
            break
    assert checked == 10


def test_full_basis_equivalence(rng):
    for seed in range(10):
        g = connected_graph(30 + 2 * seed, seed)
        sub, S = khop_for_fraction(g, 0.6, seed)
        b1, b2 = graph_eigenbasis(g, g.n), graph_eigenbasis(sub, sub.n)
        C = compute_spectral_map(S, b1, b2)

        operator = b2.phi @ C.C @ b1.phi.T
        assert np.linalg.norm(operator - S.pullback_matrix().toarray()) <= 1e-8

        for _ in range(5):
            f = SignalMatrix.of(g, rng.normal(size=(g.n, 3)))
            assert np.abs(transfer_signal(C, b1, b2, f).values - pullback_signal(S, f).values).max() <= 1e-8


def test_reverse_transfer_fills_the_parent(karate_graph, karate_patch, karate_full_bases, rng):
    sub, S = karate_patch
    b1, b2 = karate_full_bases
    C = compute_spectral_map(S, b1, b2)
    back = reverse_map(C)
    assert back.C.shape == (b1.k, b2.k)
    assert back.basis1 == b2.meta and back.basis2 == b1.meta

    g2 = rng.normal(size=sub.n)
    lifted = transfer_signal(back, b2, b1, g2).values[:, 0]
    expected = np.zeros(karate_graph.n)
    expected[S.targets] = g2
    assert np.allclose(lifted, expected, atol=1e-8)


def test_transfer_keeps_node_ids(karate_patch, karate_full_bases):
    sub, S = karate_patch
    b1, b2 = karate_full_bases
    g = transfer_signal(compute_spectral_map(S, b1, b2), b1, b2, np.ones(34))
    assert g.node_ids == sub.node_ids


def test_provenance_checks(karate_patch, karate_full_bases):
    _, S = karate_patch
    b1, b2 = karate_full_bases
    C = compute_spectral_map(S, b1, b2)

    with pytest.raises(DimensionMismatchError):
        transfer_signal(C, b1.truncate(5), b2, np.ones(34))
    with pytest.raises(DimensionMismatchError):
        transfer_signal(C, b1, b2, np.ones(17))
    with pytest.raises(DimensionMismatchError):
        compute_spectral_map(S, b2, b1)


def test_spectral_map_validation():
    with pytest.raises(DimensionMismatchError):
        SpectralMap(np.zeros((3, 3)), BasisMeta(10, 4, "normalized"), BasisMeta(8, 3, "normalized"))
    with pytest.raises(ValueError):
        SpectralMap(np.zeros((3, 4)), BasisMeta(10, 4, "normalized"), BasisMeta(8, 3, "normalized"), "guessed")


class TestNormalizeSignal:
    def test_standardizes(self, rng):
        f = normalize_signal(rng.normal(3.0, 5.0, size=(50, 4)))
        assert np.allclose(f.values.mean(axis=0), 0.0, atol=1e-12)
        assert np.allclose(f.values.std(axis=0), 1.0)

    def test_constant_column(self):
        f = normalize_signal(np.column_stack([np.full(5, 7.0), np.arange(5.0)]))
        assert np.array_equal(f.values[:, 0], np.zeros(5))

    def test_idempotent(self, rng):
        once = normalize_signal(rng.normal(size=(20, 3)))
        assert np.allclose(normalize_signal(once).values, once.values, atol=1e-10)

    def test_needs_two_nodes(self):
        with pytest.raises(DimensionMismatchError):
            normalize_signal(np.ones((1, 3)))


class TestRmse:
    def test_hand_value(self):
        assert rmse(np.zeros(2), np.array([3.0, 4.0])) == pytest.approx(np.sqrt(12.5))
        assert rmse(np.ones(4), np.ones(4)) == 0.0

    @given(arrays(float, (6, 2), elements=finite), arrays(float, (6, 2), elements=finite))
    def test_symmetric(self, a, b):
        assert rmse(a, b) == rmse(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            rmse(np.zeros(3), np.zeros(4))


class TestMapDistance:
    def test_sign_invariance_on_random_matrices(self, rng):
        for _ in range(100):
            A, B = rng.normal(size=(2, 6, 6))
            signs = rng.choice([-1.0, 1.0], size=6)
            assert map_distance(A, signs[:, None] * A) == pytest.approx(0.0, abs=1e-20)
            assert map_distance(A, signs[:, None] * B) == pytest.approx(map_distance(A, B), rel=1e-12)

    @settings(max_examples=50)
    @given(arrays(float, (4, 5), elements=finite), arrays(float, (4, 5), elements=finite))
    def test_bounded_by_plain_distance(self, a, b):
        assert map_distance(a, b) <= np.sum((a - b) ** 2) * (1 + 1e-12) + 1e-9

    def test_accepts_maps(self):
        C = _map(np.eye(3, 4))
        assert map_distance(C, C) == 0.0

    def test_blocks_absorb_rotations(self):
        theta = 0.4
        rotation = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        A = np.eye(3)
        B = A.copy()
        B[:2, :2] = rotation @ A[:2, :2]
        assert map_distance(A, B) > 0.1
        assert map_distance(A, B, blocks=[(0, 2)]) == pytest.approx(0.0, abs=1e-20)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            map_distance(np.eye(3), np.eye(4))


class TestNoise:
    def test_sigma_zero_is_identity(self):
        C = _map(np.eye(8, 10))
        assert gaussian_noise_map(C, 0.0, rng_seed=1) is C

    def test_deterministic(self):
        C = _map(np.eye(8, 10))
        a = gaussian_noise_map(C, 0.2, rng_seed=4)
        b = gaussian_noise_map(C, 0.2, rng_seed=4)
        assert np.array_equal(a.C, b.C)
        assert a.basis1 == C.basis1 and a.basis2 == C.basis2
        assert not np.array_equal(a.C, C.C)

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            gaussian_noise_map(_map(np.eye(8, 10)), -0.1, rng_seed=0)


def test_distillation_loss_vanishes_on_pulled_back_features(karate_patch, karate_full_bases, rng):
    _, S = karate_patch
    b1, b2 = karate_full_bases
    C = compute_spectral_map(S, b1, b2)
    x_t = rng.normal(size=(34, 8))
    x_s = pullback_signal(S, x_t)

    assert distillation_loss(C, b1, b2, x_t, x_s) == pytest.approx(0.0, abs=1e-8)
    assert distillation_loss(C, b1, b2, x_t, x_s, reduction="mse") == pytest.approx(0.0, abs=1e-16)
    assert distillation_loss(C, b1, b2, x_t, rng.normal(size=(17, 8))) > 0.0

    with pytest.raises(ValueError):
        distillation_loss(C, b1, b2, x_t, x_s, reduction="sum")
    with pytest.raises(DimensionMismatchError):
        distillation_loss(C, b1, b2, x_t, rng.normal(size=(17, 3)))


def test_diagonal_energy():
    assert diagonal_energy(np.eye(4)) == 1.0
    assert diagonal_energy(np.zeros((3, 3))) == 0.0
    swap = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert diagonal_energy(swap) == 0.0
    assert diagonal_energy(swap, band=1) == 1.0
