import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfddl.errors import DegenerateInputError, InputError
from rfddl.graph import (assemble_laplacian, build_atom_graph, knn_neighbors, local_weights,
                         pairwise_distances, raw_weight_matrix, refine_distances, simplex_qp)


def simplex_grid_best(atom, nb, step=0.01):
    """Brute-force minimum of the reconstruction error over a 2-simplex grid."""
    m = int(round(1 / step))
    best = np.inf
    for i in range(m + 1):
        for j in range(m + 1 - i):
            w = np.array([i, j, m - i - j]) / m
            r = atom - nb @ w
            best = min(best, float(r @ r))
    return best


def recon(atom, nb, w):
    r = atom - nb @ w
    return float(r @ r)


def random_labels(rng, K, c):
    labels = np.arange(K) % c
    rng.shuffle(labels)
    return labels


def test_distances_examples():
    np.testing.assert_array_equal(pairwise_distances(np.ones((3, 4))), np.zeros((4, 4)))
    d = pairwise_distances(np.array([[0.0, 3.0], [0.0, 4.0]]))
    np.testing.assert_allclose(d, [[0, 5], [5, 0]])


def test_distances_reject_bad_input():
    with pytest.raises(InputError):
        pairwise_distances(np.array([[0.0, np.inf]]))
    with pytest.raises(InputError):
        pairwise_distances(np.ones((3, 1)))


def test_refine_hand_examples():
    delta = np.array([[0.0, 2.0], [2.0, 0.0]])
    np.testing.assert_allclose(refine_distances(delta, [0, 0]), [[0, 1], [1, 0]])
    np.testing.assert_allclose(refine_distances(delta, [0, 1]), [[0, 4], [4, 0]])


def test_refine_degenerate():
    with pytest.raises(DegenerateInputError):
        refine_distances(np.zeros((3, 3)), [0, 1, 2])


def test_refine_small_scale_keeps_separation():
    # max distance below one: same-class distances must not be inflated above inter-class ones
    atoms = np.array([[0.0, 0.4, 0.41, 0.5]])
    labels = [0, 0, 1, 1]
    dn = refine_distances(pairwise_distances(atoms), labels)
    assert dn[1, 0] < dn[1, 2]


def test_knn_examples():
    d = pairwise_distances(np.array([[0.0, 1.0, 3.0]]))
    assert knn_neighbors(d, 1).ravel().tolist() == [1, 0, 1]
    assert sorted(knn_neighbors(d, 2)[0].tolist()) == [1, 2]


def test_knn_tie_goes_to_lower_index():
    d = pairwise_distances(np.array([[0.0, -1.0, 1.0]]))
    assert knn_neighbors(d, 1)[0, 0] == 1
    assert np.array_equal(knn_neighbors(d, 1), knn_neighbors(d.copy(), 1))


def test_knn_range():
    d = pairwise_distances(np.eye(3))
    with pytest.raises(InputError):
        knn_neighbors(d, 0)
    with pytest.raises(InputError):
        knn_neighbors(d, 3)


def test_local_weights_exact_reconstruction():
    nb = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 2.0]])
    w = local_weights(nb[:, 0], nb)
    assert recon(nb[:, 0], nb, w) <= 1e-6
    # the Gram ridge of 1e-6 * trace / k perturbs the weights at that order
    np.testing.assert_allclose(w, [1, 0, 0], atol=1e-5)


def test_local_weights_midpoint():
    nb = np.array([[0.0, 2.0], [0.0, 0.0]])
    np.testing.assert_allclose(local_weights(np.array([1.0, 0.0]), nb), [0.5, 0.5], atol=1e-9)


def test_local_weights_single_neighbour_and_coincident():
    assert local_weights(np.zeros(2), np.ones((2, 1))).tolist() == [1.0]
    np.testing.assert_allclose(local_weights(np.zeros(2), np.zeros((2, 4))), np.full(4, 0.25))


def test_local_weights_matches_grid_oracle(rng):
    for _ in range(20):
        atom, nb = rng.standard_normal(5), rng.standard_normal((5, 3))
        w = local_weights(atom, nb)
        assert recon(atom, nb, w) <= simplex_grid_best(atom, nb) + 1e-3


def test_simplex_qp_against_vertex_enumeration(rng):
    # exact optimum: best over all faces of the equality-constrained solution
    for _ in range(30):
        k = int(rng.integers(2, 6))
        B = rng.standard_normal((k + 2, k))
        C = B.T @ B + 1e-3 * np.eye(k)
        w = simplex_qp(C)
        best = np.inf
        for r in range(1, k + 1):
            for face in itertools.combinations(range(k), r):
                f = list(face)
                z = np.linalg.solve(C[np.ix_(f, f)], np.ones(r))
                if z.sum() <= 0:
                    continue
                z = z / z.sum()
                if np.all(z >= -1e-12):
                    v = np.zeros(k)
                    v[f] = z
                    best = min(best, v @ C @ v)
        assert w @ C @ w <= best * (1 + 1e-9) + 1e-14
        assert abs(w.sum() - 1) < 1e-8 and w.min() >= -1e-10


@given(st.integers(0, 2**31 - 1), st.integers(2, 8), st.integers(1, 6))
def test_local_weights_feasible_and_beat_uniform(seed, k, n):
    rng = np.random.default_rng(seed)
    atom, nb = rng.standard_normal(n), rng.standard_normal((n, k))
    w = local_weights(atom, nb)
    assert abs(w.sum() - 1) <= 1e-8
    assert w.min() >= -1e-10
    assert recon(atom, nb, w) <= recon(atom, nb, np.full(k, 1 / k)) + 1e-9


def test_assemble_two_atoms():
    M, L = assemble_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(M, [[0, 1], [1, 0]])
    np.testing.assert_allclose(L, [[1, -1], [-1, 1]])


def check_laplacian(L):
    K = L.shape[0]
    assert np.max(np.abs(L - L.T)) <= 1e-12
    assert np.max(np.abs(L @ np.ones(K))) <= 1e-10
    off = L[~np.eye(K, dtype=bool)]
    assert off.max() <= 0
    assert np.linalg.eigvalsh(L).min() >= -1e-10


@given(st.integers(0, 2**31 - 1), st.integers(2, 20), st.integers(1, 4), st.integers(1, 9))
def test_graph_invariants(seed, K, c, k):
    rng = np.random.default_rng(seed)
    c = min(c, K)
    atoms = rng.standard_normal((int(rng.integers(1, 8)), K))
    labels = random_labels(rng, K, c)
    g = build_atom_graph(atoms, labels, k)
    check_laplacian(g.L)
    assert g.k == min(k, K - 1)
    np.testing.assert_allclose(g.delta, g.delta.T)
    assert np.all(np.diag(g.delta) == 0)
    np.testing.assert_allclose(g.weights.sum(axis=1), 1, atol=1e-8)
    assert g.weights.min() >= -1e-10
    for i in range(K):
        off_support = np.setdiff1d(np.arange(K), g.neighbors[i])
        assert np.all(g.weights[i, off_support] == 0)
    assert np.all(g.M >= 0)
    np.testing.assert_allclose(g.M, g.M.T, atol=0)


def test_graph_one_atom_per_class_crosses_classes(rng):
    g = build_atom_graph(rng.standard_normal((4, 3)), [0, 1, 2], k=1)
    check_laplacian(g.L)


def test_graph_well_separated_neighbours_stay_in_class(rng):
    centers = np.array([[0.0, 100.0, 0.0], [0.0, 0.0, 100.0]])
    labels = np.repeat([0, 1, 2], 5)
    atoms = centers[:, labels] + rng.standard_normal((2, 15))
    g = build_atom_graph(atoms, labels, k=4)
    assert np.all(labels[g.neighbors] == labels[:, None])


def test_knn_scale_covariance(rng):
    atoms = rng.standard_normal((3, 12))
    labels = random_labels(rng, 12, 3)
    a = build_atom_graph(atoms, labels, 5).neighbors
    b = build_atom_graph(atoms * 37.5, labels, 5).neighbors
    assert np.array_equal(a, b)


def test_raw_weights_rows_sum_to_one(rng):
    atoms = rng.standard_normal((4, 6))
    nb = knn_neighbors(pairwise_distances(atoms), 3)
    np.testing.assert_allclose(raw_weight_matrix(atoms, nb).sum(axis=1), 1)
