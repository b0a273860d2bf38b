"""Block-coordinate trainer for the graph-regularized dictionary model.

The joint problem, after eliminating the three bias vectors, is

    ||(X - E)Hc - (D - E_D) L S Hc||^2 + alpha (||E||_2,1 + ||E_D||_2,1)
      + beta (||Q Hc - L S Hc||^2 + ||S Hc||^2)
      + gamma (||H Hc - W L S Hc||^2 + ||W||_2,1)

where ``Hc`` is the centering matrix and every ``||.||_2,1`` sums column
norms. Each iteration rebuilds the atom Laplacian ``L`` from the clean
dictionary ``D - E_D`` and then updates ``D``, ``S``, ``E_D``, ``E`` and
``W`` in closed form (Gauss-Seidel: every step sees the freshest blocks). The
L2,1 terms are handled by iteratively reweighted least squares with the
diagonals ``V`` (data error), ``Lambda`` (atom error) and ``Theta``
(classifier).

``Hc`` is never formed: right-multiplying by it is row-mean removal, and
``Hc Hc^T = Hc`` collapses every product the updates need.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .data import LabeledDataset, build_indicator_codes, build_label_matrix, make_rng
from .errors import InputError, NumericalError
from .graph import DEFAULT_K, build_atom_graph

log = logging.getLogger(__name__)

__all__ = [
    "Hyperparams",
    "TrainState",
    "RfddlModel",
    "init_state",
    "objective",
    "update_dictionary",
    "update_codes",
    "update_atom_error",
    "update_data_error",
    "update_classifier",
    "update_irls_diagonals",
    "compute_biases",
    "refresh_laplacian",
    "iterate",
    "fit",
    "converged",
    "to_model",
    "train",
    "l21",
]


@dataclass(frozen=True)
class Hyperparams:
    """Model weights and solver controls.

    ``gamma`` weights the classification term. ``atoms_per_class`` is the
    per-class atom allocation, so the dictionary has ``atoms_per_class * c``
    atoms. ``init`` selects dictionary initialization: ``"samples"`` draws
    training columns per class, ``"random"`` draws Gaussian atoms labelled
    round-robin.
    """

    alpha: float = 1e2
    beta: float = 1e4
    gamma: float = 1e8
    atoms_per_class: int = 5
    k_neighbors: int = DEFAULT_K
    max_iter: int = 200
    tol: float = 1e-3
    jitter: float = 1e-8
    irls_floor: float = 1e-8
    seed: int = 0
    init: str = "samples"

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "tol", "jitter", "irls_floor"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InputError(f"{name} must be a positive finite number, got {v}")
        for name in ("atoms_per_class", "k_neighbors", "max_iter"):
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be >= 1")
        if int(self.seed) < 0:
            raise InputError("seed must be non-negative")
        if self.init not in ("samples", "random"):
            raise InputError(f"init must be 'samples' or 'random', got {self.init!r}")

    def replace(self, **changes) -> "Hyperparams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "beta": float(self.beta),
            "gamma": float(self.gamma),
            "atoms_per_class": int(self.atoms_per_class),
            "k_neighbors": int(self.k_neighbors),
            "max_iter": int(self.max_iter),
            "tol": float(self.tol),
            "jitter": float(self.jitter),
            "irls_floor": float(self.irls_floor),
            "seed": int(self.seed),
            "init": str(self.init),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        return cls(**d)


@dataclass
class TrainState:
    D: np.ndarray
    S: np.ndarray
    E: np.ndarray
    E_D: np.ndarray
    W: np.ndarray
    L: np.ndarray
    V: np.ndarray  # diagonal entries, length N
    Lambda: np.ndarray  # length K
    Theta: np.ndarray  # length K
    atom_labels: np.ndarray
    iter: int = 0
    obj_history: list = field(default_factory=list)

    @property
    def D_new(self) -> np.ndarray:
        return self.D - self.E_D

    def X_new(self, X: np.ndarray) -> np.ndarray:
        return X - self.E

    def copy(self) -> "TrainState":
        return TrainState(
            D=self.D.copy(), S=self.S.copy(), E=self.E.copy(), E_D=self.E_D.copy(),
            W=self.W.copy(), L=self.L.copy(), V=self.V.copy(),
            Lambda=self.Lambda.copy(), Theta=self.Theta.copy(),
            atom_labels=self.atom_labels.copy(), iter=self.iter,
            obj_history=list(self.obj_history),
        )


@dataclass(frozen=True)
class RfddlModel:
    """Everything inference needs from a trained run."""

    D_new: np.ndarray
    S: np.ndarray
    L: np.ndarray
    W: np.ndarray
    atom_labels: np.ndarray
    hyperparams: Hyperparams

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.D_new.shape[1]


def _center(A: np.ndarray) -> np.ndarray:
    return A - A.mean(axis=1, keepdims=True)


def l21(A: np.ndarray) -> float:
    """Sum of column L2 norms."""
    return float(np.sqrt((A * A).sum(axis=0)).sum())


def _check_finite(name: str, A: np.ndarray, **diag) -> np.ndarray:
    if not np.all(np.isfinite(A)):
        details = ", ".join(f"{k}={v:.3g}" for k, v in diag.items())
        raise NumericalError(f"{name} update produced non-finite values ({details})")
    return A


RCOND_FLOOR = 1e-12


def _spd_solve_right(B: np.ndarray, A: np.ndarray, jitter: float, name: str,
                     rcond_floor: float | None = None) -> np.ndarray:
    """Return ``B A^{-1}`` for symmetric positive (semi)definite ``A``.

    ``jitter * trace(A)/dim`` is added to the diagonal when the plain Cholesky
    factorization fails or, if ``rcond_floor`` is given, when the eigenvalue
    ratio of ``A`` falls below it.
    """
    m = A.shape[0]
    tr = float(np.trace(A))
    ridge = jitter * (tr / m if tr > 0 else 1.0)
    singular = False
    if rcond_floor is not None:
        w = np.linalg.eigvalsh(A)
        singular = not w[0] > rcond_floor * max(w[-1], 0.0)
    attempts = [ridge] if singular else [0.0, ridge]
    for r in attempts:
        try:
            c_and_lower = scipy.linalg.cho_factor(A + r * np.eye(m) if r else A,
                                                  check_finite=False)
        except np.linalg.LinAlgError:
            continue
        X = scipy.linalg.cho_solve(c_and_lower, B.T, check_finite=False).T
        return _check_finite(name, X, trace=tr, ridge=r)
    raise NumericalError(f"{name} system is not positive definite (trace={tr:.3g})")


def init_state(train: LabeledDataset, hp: Hyperparams) -> TrainState:
    """Zero errors and classifier, unit IRLS diagonals, dictionary drawn per class."""
    X = train.X
    n, N = X.shape
    c = train.c
    nu = int(hp.atoms_per_class)
    K = nu * c
    if K > N:
        raise InputError(f"dictionary size {K} exceeds the number of training samples {N}")
    counts = train.class_counts()
    rng = make_rng(hp.seed)
    if hp.init == "samples":
        small = np.flatnonzero(counts < nu)
        if small.size:
            raise InputError(
                f"classes {small.tolist()} have fewer than {nu} training samples"
            )
        cols = []
        for k in range(c):
            members = np.flatnonzero(train.labels == k)
            cols.append(np.sort(rng.choice(members, size=nu, replace=False)))
        idx = np.concatenate(cols)
        D = X[:, idx].copy()
        atom_labels = train.labels[idx].astype(np.int64)
    else:
        scale = float(np.sqrt(np.mean(X * X))) or 1.0
        D = rng.standard_normal((n, K)) * scale
        atom_labels = np.arange(K, dtype=np.int64) % c
    S = 0.01 * rng.standard_normal((K, N))
    graph = build_atom_graph(D, atom_labels, hp.k_neighbors)
    return TrainState(
        D=D, S=S, E=np.zeros((n, N)), E_D=np.zeros((n, K)), W=np.zeros((c, K)),
        L=graph.L, V=np.ones(N), Lambda=np.ones(K), Theta=np.ones(K),
        atom_labels=atom_labels,
    )


def objective(state: TrainState, X: np.ndarray, Q: np.ndarray, H: np.ndarray,
              hp: Hyperparams) -> float:
    """Centered objective with exact L2,1 norms (not the IRLS surrogates)."""
    LS = state.L @ state.S
    rec = _center(X - state.E - state.D_new @ LS)
    code = _center(Q - LS)
    cls = _center(H - state.W @ LS)
    Sc = _center(state.S)
    return float(
        (rec * rec).sum()
        + hp.alpha * (l21(state.E) + l21(state.E_D))
        + hp.beta * ((code * code).sum() + (Sc * Sc).sum())
        + hp.gamma * ((cls * cls).sum() + l21(state.W))
    )


def update_dictionary(state: TrainState, X: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """``D = (X_new + E_D L S) Hc S^T L^T (L S Hc S^T L^T)^{-1}``."""
    LS = state.L @ state.S
    P = _center(LS)
    rhs = (state.X_new(X) + state.E_D @ LS) @ P.T
    # L has a null vector, so during training P P^T is singular and takes the ridge
    return _spd_solve_right(rhs, P @ P.T, hp.jitter, "dictionary", rcond_floor=RCOND_FLOOR)


def update_codes(state: TrainState, X: np.ndarray, Q: np.ndarray, H: np.ndarray,
                 hp: Hyperparams) -> np.ndarray:
    """Closed-form codes; the system is ``L^T(D^T D + beta I + gamma W^T W)L + beta I``."""
    L, W = state.L, state.W
    DL = state.D_new @ L
    WL = W @ L
    K = L.shape[0]
    A = DL.T @ DL + hp.beta * (L.T @ L) + hp.beta * np.eye(K) + hp.gamma * (WL.T @ WL)
    A = 0.5 * (A + A.T)
    B = DL.T @ state.X_new(X) + hp.beta * (L.T @ Q) + hp.gamma * (WL.T @ H)
    # A is symmetric, so solving A S = B is the right-solve of B^T against A.
    return _spd_solve_right(B.T, A, hp.jitter, "codes").T


def update_atom_error(state: TrainState, X: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """``E_D = (D L S - X_new) Hc S^T L^T (L S Hc S^T L^T + alpha Lambda)^{-1}``."""
    LS = state.L @ state.S
    P = _center(LS)
    rhs = (state.D @ LS - state.X_new(X)) @ P.T
    A = P @ P.T + hp.alpha * np.diag(state.Lambda)
    return _spd_solve_right(rhs, A, hp.jitter, "atom error")


def update_data_error(state: TrainState, X: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """``E = (X - D_new L S) Hc (Hc + alpha V)^{-1}``.

    ``Hc + alpha V = A - ee^T/N`` with ``A = I + alpha V`` diagonal, so the N x N
    inverse is applied with the Sherman-Morrison formula in O(nN).
    """
    R = _center(X - state.D_new @ (state.L @ state.S))
    N = R.shape[1]
    a_inv = 1.0 / (1.0 + hp.alpha * state.V)
    RA = R * a_inv[None, :]
    denom = N - a_inv.sum()
    if not denom > 0:
        raise NumericalError(f"data error system is singular (denominator={denom:.3g})")
    E = RA + np.outer(RA.sum(axis=1) / denom, a_inv)
    return _check_finite("data error", E, denominator=denom)


def update_classifier(state: TrainState, H: np.ndarray, hp: Hyperparams) -> np.ndarray:
    """``W = H Hc S^T L^T (L S Hc S^T L^T + Theta)^{-1}``; gamma cancels out."""
    P = _center(state.L @ state.S)
    A = P @ P.T + np.diag(state.Theta)
    return _spd_solve_right(H @ P.T, A, hp.jitter, "classifier")


def update_irls_diagonals(state: TrainState, hp: Hyperparams):
    """Reweighting diagonals ``1 / (2 max(||column||, floor))`` for E, E_D and W."""
    def weights(A):
        return 1.0 / (2.0 * np.maximum(np.sqrt((A * A).sum(axis=0)), hp.irls_floor))

    return weights(state.E), weights(state.E_D), weights(state.W)


def compute_biases(state: TrainState, X: np.ndarray, Q: np.ndarray, H: np.ndarray):
    """Optimal offsets ``b1``, ``b2``, ``b3`` of the three flexible residuals."""
    N = X.shape[1]
    LS = state.L @ state.S
    b1 = (state.D_new @ LS - state.X_new(X)).sum(axis=1) / N
    b2 = (LS - Q).sum(axis=1) / N
    b3 = (state.W @ LS - H).sum(axis=1) / N
    return b1, b2, b3


def refresh_laplacian(state: TrainState, hp: Hyperparams) -> np.ndarray:
    return build_atom_graph(state.D_new, state.atom_labels, hp.k_neighbors).L


def iterate(state: TrainState, X: np.ndarray, Q: np.ndarray, H: np.ndarray,
            hp: Hyperparams, refresh_graph: bool = True) -> float:
    """Run one training iteration in place and return the new objective value."""
    if refresh_graph:
        state.L = refresh_laplacian(state, hp)
    state.D = update_dictionary(state, X, hp)
    state.S = update_codes(state, X, Q, H, hp)
    state.E_D = update_atom_error(state, X, hp)
    state.E = update_data_error(state, X, hp)
    state.W = update_classifier(state, H, hp)
    state.V, state.Lambda, state.Theta = update_irls_diagonals(state, hp)
    state.iter += 1
    obj = objective(state, X, Q, H, hp)
    state.obj_history.append(obj)
    return obj


def fit(train: LabeledDataset, hp: Hyperparams) -> TrainState:
    """Train and return the final state (errors included)."""
    X = np.asarray(train.X)
    state = init_state(train, hp)
    H = build_label_matrix(train.labels, train.c)
    Q = build_indicator_codes(train.labels, state.atom_labels)
    last_good = state.copy()
    for _ in range(int(hp.max_iter)):
        try:
            obj = iterate(state, X, Q, H, hp)
        except NumericalError as exc:
            raise NumericalError(f"iteration {state.iter + 1}: {exc}", state=last_good) from exc
        if not np.isfinite(obj):
            raise NumericalError(
                f"objective became non-finite at iteration {state.iter}", state=last_good
            )
        hist = state.obj_history
        log.debug("iter %d objective %.6g", state.iter, obj)
        if len(hist) >= 2 and abs(hist[-2] - hist[-1]) < hp.tol:
            break
        last_good = state.copy()
    return state


def converged(history, tol: float) -> bool:
    return len(history) >= 2 and abs(history[-2] - history[-1]) < tol


def to_model(state: TrainState, hp: Hyperparams) -> RfddlModel:
    return RfddlModel(D_new=state.D_new.copy(), S=state.S.copy(), L=state.L.copy(),
                      W=state.W.copy(), atom_labels=state.atom_labels.copy(),
                      hyperparams=hp)


def train(train: LabeledDataset, hp: Hyperparams):
    """Fit a model; returns ``(RfddlModel, objective_history)``."""
    state = fit(train, hp)
    return to_model(state, hp), list(state.obj_history)
