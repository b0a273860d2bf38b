"""Supervised graph Laplacian over dictionary atoms.

Pipeline: Euclidean distances between atoms, a label-aware refinement that
pushes different-class atoms apart, k-nearest-neighbour selection on the
refined distances, simplex-constrained reconstruction weights for every atom
from its neighbours, then symmetrization, degree normalization and
``L = G - M``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateInputError, InputError

DEFAULT_K = 7
GRAM_REG = 1e-6
DEGREE_FLOOR = 1e-12

__all__ = [
    "AtomGraph",
    "pairwise_distances",
    "refine_distances",
    "knn_neighbors",
    "local_weights",
    "simplex_qp",
    "raw_weight_matrix",
    "assemble_laplacian",
    "build_atom_graph",
]


@dataclass(frozen=True)
class AtomGraph:
    k: int
    delta: np.ndarray
    delta_new: np.ndarray
    neighbors: np.ndarray  # (K, k) int
    weights: np.ndarray  # raw row-stochastic weights before symmetrization
    M: np.ndarray
    L: np.ndarray


def pairwise_distances(atoms: np.ndarray) -> np.ndarray:
    """Euclidean distance matrix between the columns of ``atoms``."""
    atoms = np.asarray(atoms, dtype=np.float64)
    if atoms.ndim != 2 or atoms.shape[1] < 2:
        raise InputError(f"need a 2-D matrix with at least 2 atom columns, got {atoms.shape}")
    if not np.all(np.isfinite(atoms)):
        raise InputError("atoms contain non-finite entries")
    return squareform(pdist(atoms.T))


def refine_distances(delta: np.ndarray, atom_labels) -> np.ndarray:
    """Label-aware distances.

    Different-class pairs get ``delta + max(delta)``; same-class pairs get
    ``delta / max(max(delta), 1)``. The divisor is floored at one so the
    same-class branch never enlarges a distance, which keeps every
    same-class entry of a row below every different-class entry.
    """
    delta = np.asarray(delta, dtype=np.float64)
    atom_labels = np.asarray(atom_labels)
    K = delta.shape[0]
    if delta.shape != (K, K) or atom_labels.shape != (K,):
        raise InputError("delta must be K x K with one label per atom")
    dmax = float(delta.max())
    if not dmax > 0:
        raise DegenerateInputError("all atoms coincide (max distance is zero)")
    same = atom_labels[:, None] == atom_labels[None, :]
    return np.where(same, delta / max(dmax, 1.0), delta + dmax)


def knn_neighbors(delta_new: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` closest other atoms per row; ties go to the lower index."""
    delta_new = np.asarray(delta_new, dtype=np.float64)
    K = delta_new.shape[0]
    if not 1 <= k <= K - 1:
        raise InputError(f"k must be in [1, {K - 1}], got {k}")
    d = delta_new.copy()
    np.fill_diagonal(d, np.inf)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :k]


def simplex_qp(C: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Minimize ``w^T C w`` over the probability simplex (primal active set).

    ``C`` must be symmetric positive definite. Starts from uniform weights;
    each pass solves the equality-constrained problem on the free set and
    either steps to it (pinning the first coordinate that hits zero) or, at a
    stationary point, frees the pinned coordinate with the most negative
    multiplier.
    """
    k = C.shape[0]
    w = np.full(k, 1.0 / k)
    pinned = np.zeros(k, dtype=bool)
    ones = np.ones(k)
    for _ in range(max_iter or 10 * k + 10):
        free = ~pinned
        Cf = C[np.ix_(free, free)]
        z = np.linalg.solve(Cf, ones[free])
        z /= z.sum()
        p = z - w[free]
        if np.max(np.abs(p)) <= 1e-15:
            if not pinned.any():
                return w
            g = C @ w
            mu = w @ g
            lam = g - mu
            lam[free] = np.inf
            j = int(np.argmin(lam))
            if lam[j] >= -1e-14 * max(abs(mu), 1e-300):
                return w
            pinned[j] = False
            continue
        wf = w[free]
        shrinking = p < 0
        ratios = np.full(p.shape, np.inf)
        ratios[shrinking] = -wf[shrinking] / p[shrinking]
        t = min(1.0, float(ratios.min()))
        if t >= 1.0:
            w[free] = z
        else:
            wf = wf + t * p
            blocking = int(np.argmin(ratios))
            wf[blocking] = 0.0
            w[free] = wf
            pinned[np.flatnonzero(free)[blocking]] = True
    return w


def local_weights(atom: np.ndarray, neighbor_atoms: np.ndarray) -> np.ndarray:
    """Simplex-constrained weights reconstructing ``atom`` from its neighbours."""
    atom = np.asarray(atom, dtype=np.float64).ravel()
    nb = np.asarray(neighbor_atoms, dtype=np.float64)
    if nb.ndim == 1:
        nb = nb[:, None]
    k = nb.shape[1]
    if k < 1:
        raise InputError("need at least one neighbour")
    if k == 1:
        return np.ones(1)
    Z = nb - atom[:, None]
    C = Z.T @ Z
    tr = np.trace(C)
    if not tr > 0:
        return np.full(k, 1.0 / k)
    C = C + (GRAM_REG * tr / k) * np.eye(k)
    return simplex_qp(C)


def raw_weight_matrix(atoms: np.ndarray, neighbors: np.ndarray) -> np.ndarray:
    atoms = np.asarray(atoms, dtype=np.float64)
    K = atoms.shape[1]
    R = np.zeros((K, K))
    for i in range(K):
        nb = neighbors[i]
        R[i, nb] = local_weights(atoms[:, i], atoms[:, nb])
    return R


def assemble_laplacian(raw_weights: np.ndarray):
    """Symmetrize, degree-normalize and return ``(M, L)`` with ``L = G - M``."""
    R = np.asarray(raw_weights, dtype=np.float64)
    M = 0.5 * (R + R.T)
    deg = np.maximum(M.sum(axis=1), DEGREE_FLOOR)
    s = 1.0 / np.sqrt(deg)
    M = s[:, None] * M * s[None, :]
    M = 0.5 * (M + M.T)
    L = np.diag(M.sum(axis=1)) - M
    return M, L


def build_atom_graph(atoms: np.ndarray, atom_labels, k: int | None = DEFAULT_K) -> AtomGraph:
    """Build the discriminative atom graph; ``k`` is clamped to ``K - 1``."""
    delta = pairwise_distances(atoms)
    K = delta.shape[0]
    k = min(DEFAULT_K if k is None else int(k), K - 1)
    delta_new = refine_distances(delta, atom_labels)
    neighbors = knn_neighbors(delta_new, k)
    R = raw_weight_matrix(atoms, neighbors)
    M, L = assemble_laplacian(R)
    return AtomGraph(k=k, delta=delta, delta_new=delta_new, neighbors=neighbors,
                     weights=R, M=M, L=L)
