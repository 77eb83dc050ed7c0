"""Probabilistic surrogate models over encoded configurations.

Two families: a Gaussian process with a Matern-5/2 ARD kernel on continuous
columns multiplied by a Hamming kernel on categorical groups, and a
probabilistic random forest whose predictive variance combines within-leaf
spread with across-tree disagreement.  Both predict a Gaussian (mean,
variance) at a point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from sklearn.tree import DecisionTreeRegressor

__all__ = [
    "GaussianPrediction",
    "GPModel",
    "GPHyper",
    "PRFModel",
    "PRFParams",
    "SurrogateKind",
    "fit_gp",
    "fit_gp_fixed",
    "fit_prf",
    "log_marginal_likelihood",
]

MIN_NOISE = 1e-8
SQRT5 = math.sqrt(5.0)


class SurrogateKind:
    GP = "GP"
    PRF = "PRF"


@dataclass(frozen=True)
class GaussianPrediction:
    mean: float
    var: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.var)):
            raise ValueError("prediction must be finite")
        if self.var < 0:
            object.__setattr__(self, "var", 0.0)

    @property
    def std(self) -> float:
        return math.sqrt(self.var)


# ---------------------------------------------------------------------------
# Gaussian process
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GPHyper:
    """Kernel hyperparameters: amplitude, per-column ARD length-scales for the
    continuous block, per-group Hamming weights, and a noise nugget."""

    signal_var: float
    lengthscales: np.ndarray
    cat_weights: np.ndarray
    noise_var: float


@dataclass(frozen=True)
class GPModel:
    X: np.ndarray
    y_raw: np.ndarray
    hyper: GPHyper
    cont_cols: tuple[int, ...]
    cat_groups: tuple[tuple[int, int], ...]
    y_mean: float
    y_std: float
    chol: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    lml: float
    constant_target: bool = False

    @property
    def input_dim(self) -> int:
        return self.X.shape[1]

    def predict(self, x: np.ndarray) -> GaussianPrediction:
        mean, var = self.predict_batch(np.asarray(x, dtype=float).reshape(1, -1))
        return GaussianPrediction(float(mean[0]), float(var[0]))

    def predict_batch(self, X_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized posterior mean/variance at rows of X_star (orig. scale)."""
        X_star = np.asarray(X_star, dtype=float)
        if X_star.ndim != 2 or X_star.shape[1] != self.input_dim:
            raise ValueError(
                f"dimension mismatch: expected (*, {self.input_dim}), got {X_star.shape}"
            )
        k_star = _kernel(
            self.X, X_star, self.hyper, self.cont_cols, self.cat_groups
        )  # n x m
        mean_std = k_star.T @ self.alpha
        v = solve_triangular(self.chol, k_star, lower=True)
        prior = self.hyper.signal_var
        var_std = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
        return mean_std * self.y_std + self.y_mean, var_std * self.y_std**2

    def loo_posteriors(self) -> tuple[np.ndarray, np.ndarray]:
        """Leave-one-out predictive mean/var at each training point.

        Computed from the full factorization at fixed hyperparameters, which
        equals refitting the posterior on the n-1 remaining points.
        """
        n = self.X.shape[0]
        K_inv = cho_solve((self.chol, True), np.eye(n))
        diag = np.diag(K_inv)
        y_std = (self.y_raw - self.y_mean) / self.y_std
        mu_std = y_std - self.alpha / diag
        var_std = 1.0 / diag
        return mu_std * self.y_std + self.y_mean, var_std * self.y_std**2


def _split_blocks(
    X: np.ndarray, cont_cols: Sequence[int], cat_groups: Sequence[tuple[int, int]]
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous block (n x d_c) and per-group categorical codes (n x g)."""
    cont = X[:, list(cont_cols)] if cont_cols else np.zeros((X.shape[0], 0))
    codes = np.zeros((X.shape[0], len(cat_groups)))
    for j, (off, width) in enumerate(cat_groups):
        codes[:, j] = np.argmax(X[:, off : off + width], axis=1)
    return cont, codes


def _kernel(
    XA: np.ndarray,
    XB: np.ndarray,
    hyper: GPHyper,
    cont_cols: Sequence[int],
    cat_groups: Sequence[tuple[int, int]],
) -> np.ndarray:
    """Cross-covariance (len(XA) x len(XB)) without the noise term."""
    cont_a, codes_a = _split_blocks(XA, cont_cols, cat_groups)
    cont_b, codes_b = _split_blocks(XB, cont_cols, cat_groups)
    k = np.full((XA.shape[0], XB.shape[0]), hyper.signal_var)
    if cont_a.shape[1]:
        scaled_a = cont_a / hyper.lengthscales
        scaled_b = cont_b / hyper.lengthscales
        d2 = (
            np.sum(scaled_a**2, axis=1)[:, None]
            + np.sum(scaled_b**2, axis=1)[None, :]
            - 2.0 * scaled_a @ scaled_b.T
        )
        r = np.sqrt(np.maximum(d2, 0.0))
        k = k * (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r)
    if codes_a.shape[1]:
        mismatch = codes_a[:, None, :] != codes_b[None, :, :]
        k = k * np.exp(-(mismatch * hyper.cat_weights).sum(axis=2))
    return k


def _unpack_theta(
    theta: np.ndarray, d_cont: int, n_groups: int
) -> GPHyper:
    exp = np.exp(theta)
    return GPHyper(
        signal_var=float(exp[0]),
        lengthscales=exp[1 : 1 + d_cont],
        cat_weights=exp[1 + d_cont : 1 + d_cont + n_groups],
        noise_var=float(exp[-1]) + MIN_NOISE,
    )


class _GPObjective:
    """Negative evidence with analytic gradients in log-hyperparameter space.

    Pairwise squared differences and categorical mismatch masks are computed
    once; each evaluation then only rescales them.
    """

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        cont_cols: Sequence[int],
        cat_groups: Sequence[tuple[int, int]],
    ) -> None:
        self.y = y
        self.n = X.shape[0]
        self.d_cont = len(cont_cols)
        self.n_groups = len(cat_groups)
        cont, codes = _split_blocks(X, cont_cols, cat_groups)
        self.raw_d2 = (cont[:, None, :] - cont[None, :, :]) ** 2  # n x n x d
        self.mismatch = (codes[:, None, :] != codes[None, :, :]).astype(float)
        self.eye = np.eye(self.n)

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        hyper = _unpack_theta(theta, self.d_cont, self.n_groups)
        n = self.n
        if self.d_cont:
            inv_l2 = 1.0 / hyper.lengthscales**2
            r = np.sqrt(self.raw_d2 @ inv_l2)
            matern = (1.0 + SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-SQRT5 * r)
        else:
            r = np.zeros((n, n))
            matern = np.ones((n, n))
        if self.n_groups:
            hamming = np.exp(-(self.mismatch @ hyper.cat_weights))
        else:
            hamming = np.ones((n, n))
        signal = hyper.signal_var * matern * hamming
        K = signal + hyper.noise_var * self.eye

        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            return 1e25, np.zeros_like(theta)
        alpha = cho_solve((L, True), self.y)
        lml = (
            -0.5 * float(self.y @ alpha)
            - float(np.log(np.diag(L)).sum())
            - 0.5 * n * math.log(2.0 * math.pi)
        )

        # dLML/dtheta_j = 0.5 tr((alpha alpha^T - K^-1) dK/dtheta_j)
        K_inv = cho_solve((L, True), self.eye)
        W = np.outer(alpha, alpha) - K_inv
        grad = np.zeros_like(theta)
        grad[0] = 0.5 * float((W * signal).sum())
        if self.d_cont:
            # dK/dlog l_d = sig * hamming * (5/3)(1+sqrt5 r)exp(-sqrt5 r) * d2_d/l_d^2
            base = W * (
                hyper.signal_var
                * hamming
                * (5.0 / 3.0)
                * (1.0 + SQRT5 * r)
                * np.exp(-SQRT5 * r)
            )
            scaled = np.tensordot(base, self.raw_d2, axes=([0, 1], [0, 1]))
            grad[1 : 1 + self.d_cont] = 0.5 * scaled * inv_l2
        if self.n_groups:
            ws = W * signal
            per_group = np.tensordot(ws, self.mismatch, axes=([0, 1], [0, 1]))
            grad[1 + self.d_cont : 1 + self.d_cont + self.n_groups] = (
                -0.5 * per_group * hyper.cat_weights
            )
        grad[-1] = 0.5 * float(np.trace(W)) * (hyper.noise_var - MIN_NOISE)
        return -lml, -grad


def _initial_theta(
    X: np.ndarray, cont_cols: Sequence[int], n_groups: int
) -> np.ndarray:
    """Heuristic start: median pairwise distance per continuous column."""
    parts = [0.0]  # log signal_var = 0 (standardized targets)
    for c in cont_cols:
        col = X[:, c]
        d = np.abs(col[:, None] - col[None, :])
        med = float(np.median(d[d > 0])) if np.any(d > 0) else 0.5
        parts.append(math.log(max(med, 1e-2)))
    parts.extend([0.0] * n_groups)
    parts.append(math.log(1e-4))  # noise
    return np.asarray(parts)


def _theta_bounds(d_cont: int, n_groups: int) -> list[tuple[float, float]]:
    bounds = [(math.log(1e-2), math.log(50.0))]  # signal variance
    bounds += [(math.log(5e-3), math.log(30.0))] * d_cont  # length-scales
    bounds += [(math.log(1e-4), math.log(30.0))] * n_groups  # hamming weights
    bounds += [(math.log(MIN_NOISE), math.log(1.0))]  # noise variance
    return bounds


def fit_gp(
    X: np.ndarray,
    y: np.ndarray,
    seed: int,
    cont_cols: Sequence[int] | None = None,
    cat_groups: Sequence[tuple[int, int]] = (),
    restarts: int = 10,
    maxiter: int = 100,
) -> GPModel:
    """Fit GP hyperparameters by multi-start maximization of the evidence.

    Targets are standardized internally; predictions are returned on the
    original scale.  Columns not covered by `cat_groups` are treated as
    continuous when `cont_cols` is omitted.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")

    cat_groups = tuple(tuple(g) for g in cat_groups)
    if cont_cols is None:
        covered = {c for off, w in cat_groups for c in range(off, off + w)}
        cont_cols = tuple(c for c in range(X.shape[1]) if c not in covered)
    else:
        cont_cols = tuple(cont_cols)

    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    constant = y_std < 1e-12
    if constant:
        y_std = 1.0
    y_n = (y - y_mean) / y_std

    d_cont, n_groups = len(cont_cols), len(cat_groups)
    bounds = _theta_bounds(d_cont, n_groups)
    rng = np.random.default_rng(seed)
    starts = [_initial_theta(X, cont_cols, n_groups)]
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    for _ in range(max(restarts - 1, 0)):
        starts.append(rng.uniform(lo, hi))

    objective = _GPObjective(X, y_n, cont_cols, cat_groups)
    best_theta, best_val = starts[0], np.inf
    for theta0 in starts:
        res = minimize(
            objective,
            np.clip(theta0, lo, hi),
            method="L-BFGS-B",
            jac=True,
            bounds=bounds,
            options={"maxiter": maxiter, "ftol": 1e-8},
        )
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = res.fun, res.x

    hyper = _unpack_theta(best_theta, d_cont, n_groups)
    return fit_gp_fixed(X, y, hyper, cont_cols, cat_groups)


def fit_gp_fixed(
    X: np.ndarray,
    y: np.ndarray,
    hyper: GPHyper,
    cont_cols: Sequence[int] | None = None,
    cat_groups: Sequence[tuple[int, int]] = (),
) -> GPModel:
    """Condition a GP on (X, y) at fixed hyperparameters (no evidence search)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    cat_groups = tuple(tuple(g) for g in cat_groups)
    if cont_cols is None:
        covered = {c for off, w in cat_groups for c in range(off, off + w)}
        cont_cols = tuple(c for c in range(X.shape[1]) if c not in covered)
    else:
        cont_cols = tuple(cont_cols)
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    constant = y_std < 1e-12
    if constant:
        y_std = 1.0
    y_n = (y - y_mean) / y_std

    K = _kernel(X, X, hyper, cont_cols, cat_groups) + hyper.noise_var * np.eye(len(y))
    L, jitter = None, 0.0
    while L is None:
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(len(y)))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-10)
            if jitter > 1.0:
                raise
    alpha = cho_solve((L, True), y_n)
    lml = (
        -0.5 * float(y_n @ alpha)
        - float(np.log(np.diag(L)).sum())
        - 0.5 * len(y) * math.log(2.0 * math.pi)
    )
    return GPModel(
        X=X,
        y_raw=y,
        hyper=hyper,
        cont_cols=cont_cols,
        cat_groups=cat_groups,
        y_mean=y_mean,
        y_std=y_std,
        chol=L,
        alpha=alpha,
        lml=lml,
        constant_target=constant,
    )


def log_marginal_likelihood(model: GPModel) -> float:
    """Evidence of the fitted model (standardized-target scale)."""
    return model.lml


# ---------------------------------------------------------------------------
# Probabilistic random forest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PRFParams:
    n_trees: int = 10
    min_split: int = 3
    feature_frac: float = 5.0 / 6.0


@dataclass(frozen=True)
class PRFModel:
    trees: tuple[DecisionTreeRegressor, ...]
    leaf_means: tuple[dict[int, float], ...]
    leaf_vars: tuple[dict[int, float], ...]
    input_dim: int

    def predict(self, x: np.ndarray) -> GaussianPrediction:
        mean, var = self.predict_batch(np.asarray(x, dtype=float).reshape(1, -1))
        return GaussianPrediction(float(mean[0]), float(var[0]))

    def predict_batch(self, X_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X_star = np.asarray(X_star, dtype=float)
        if X_star.ndim != 2 or X_star.shape[1] != self.input_dim:
            raise ValueError(
                f"dimension mismatch: expected (*, {self.input_dim}), got {X_star.shape}"
            )
        B = len(self.trees)
        means = np.zeros((B, X_star.shape[0]))
        variances = np.zeros((B, X_star.shape[0]))
        for b, tree in enumerate(self.trees):
            leaves = tree.apply(X_star)
            means[b] = [self.leaf_means[b][leaf] for leaf in leaves]
            variances[b] = [self.leaf_vars[b][leaf] for leaf in leaves]
        mean = means.mean(axis=0)
        within = variances.mean(axis=0)
        across = means.var(axis=0, ddof=1) if B > 1 else np.zeros(X_star.shape[0])
        return mean, within + across


def fit_prf(
    X: np.ndarray,
    y: np.ndarray,
    params: PRFParams | None = None,
    seed: int = 0,
) -> PRFModel:
    """Fit bootstrap regression trees storing per-leaf mean and variance."""
    params = params or PRFParams()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < params.min_split:
        raise ValueError(f"need at least {params.min_split} observations")
    if params.n_trees < 2:
        raise ValueError("need at least 2 trees")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")

    rng = np.random.default_rng(seed)
    n = X.shape[0]
    trees, leaf_means, leaf_vars = [], [], []
    for b in range(params.n_trees):
        idx = rng.integers(0, n, size=n)
        Xb, yb = X[idx], y[idx]
        tree = DecisionTreeRegressor(
            min_samples_split=params.min_split,
            max_features=max(1, int(round(params.feature_frac * X.shape[1]))),
            random_state=int(rng.integers(2**31 - 1)),
        )
        tree.fit(Xb, yb)
        leaves = tree.apply(Xb)
        means: dict[int, float] = {}
        variances: dict[int, float] = {}
        for leaf in np.unique(leaves):
            vals = yb[leaves == leaf]
            means[int(leaf)] = float(vals.mean())
            variances[int(leaf)] = float(vals.var())
        trees.append(tree)
        leaf_means.append(means)
        leaf_vars.append(variances)
    return PRFModel(tuple(trees), tuple(leaf_means), tuple(leaf_vars), X.shape[1])
