"""Leaf parameterizations: marginal likelihoods and conjugate draws.

Two leaf models are supported. The constant model gives every terminal node
a scalar mean with a N(0, sigma_mu^2) prior. The linear model gives every
terminal node a coefficient vector beta (intercept first) with a
N_q(0, sigma^2 V) prior, V diagonal.

Both log marginals are implemented exactly as used inside the
Metropolis-Hastings ratio, i.e. with data-only factors dropped:

* constant model: the (2*pi*sigma^2)^(-n/2) factor and the
  exp(-r'r / (2 sigma^2)) factor are omitted (both cancel between two trees
  evaluated on the same residuals);
* linear model: only the (2*pi)^(-n/2) factor is omitted.

The quadrature oracles in the test suite restore these factors before
comparing against brute-force integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .trees import Tree, ancestor_covariates, split_covariates

CONSTANT = "constant"
LINEAR = "linear"

TREE_SPLITS = "tree-splits"
ANCESTORS = "ancestors"


class LeafFactorizationError(RuntimeError):
    """Cholesky failure in a leaf posterior, after jittering."""

    def __init__(self, leaf_id, condition_estimate):
        self.leaf_id = leaf_id
        self.condition_estimate = condition_estimate
        super().__init__(
            f"posterior precision factorization failed at leaf {leaf_id} "
            f"(condition estimate {condition_estimate:.3e})"
        )


@dataclass
class LeafStats:
    """Sufficient statistics of one terminal node against the residuals.

    For linear leaves `xtx`/`xtr` are the Gram matrix and moment vector of
    the leaf design (intercept column of ones plus the leaf's covariates in
    ascending feature order).
    """

    leaf_id: int
    n: int
    r_sum: float
    r_sq_sum: float
    xtx: np.ndarray | None = None
    xtr: np.ndarray | None = None

    @property
    def q(self) -> int:
        return 0 if self.xtx is None else self.xtx.shape[0]


def build_leaf_design(rows: np.ndarray, features: np.ndarray,
                      covariates: list[int]) -> np.ndarray:
    """Leaf design matrix: a column of ones, then the covariates in index order."""
    n = rows.size
    X = np.empty((n, len(covariates) + 1))
    X[:, 0] = 1.0
    if covariates:
        X[:, 1:] = features[np.ix_(rows, covariates)]
    return X


def constant_leaf_stats(rows_by_leaf: dict[int, np.ndarray],
                        resid: np.ndarray) -> list[LeafStats]:
    out = []
    for leaf in sorted(rows_by_leaf):
        r = resid[rows_by_leaf[leaf]]
        out.append(LeafStats(leaf, r.size, float(r.sum()), float(r @ r)))
    return out


def linear_leaf_stats(rows_by_leaf: dict[int, np.ndarray], features: np.ndarray,
                      resid: np.ndarray,
                      covariates_by_leaf: dict[int, list[int]]) -> list[LeafStats]:
    out = []
    for leaf in sorted(rows_by_leaf):
        rows = rows_by_leaf[leaf]
        r = resid[rows]
        X = build_leaf_design(rows, features, covariates_by_leaf[leaf])
        out.append(LeafStats(leaf, r.size, float(r.sum()), float(r @ r),
                             xtx=X.T @ X, xtr=X.T @ r))
    return out


def bart_log_marginal(stats: list[LeafStats], sigma2: float, sigma_mu2: float) -> float:
    """Constant-leaf log marginal of the residuals given the tree, summed over leaves.

    Per leaf: 0.5*log(sigma^2 / (sigma_mu^2 n + sigma^2))
    + sigma_mu^2 (sum r)^2 / (2 sigma^2 (sigma_mu^2 n + sigma^2)).
    """
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    total = 0.0
    for st in stats:
        denom = sigma_mu2 * st.n + sigma2
        total += 0.5 * math.log(sigma2 / denom)
        total += sigma_mu2 * st.r_sum ** 2 / (2.0 * sigma2 * denom)
    return total


def bart_sample_mu(stats: list[LeafStats], sigma2: float, sigma_mu2: float,
                   rng: np.random.Generator) -> dict[int, float]:
    """Gibbs draw of every leaf mean from its Normal full conditional."""
    out = {}
    for st in stats:
        prec = st.n / sigma2 + 1.0 / sigma_mu2
        mean = (st.r_sum / sigma2) / prec
        out[st.leaf_id] = float(rng.normal(mean, math.sqrt(1.0 / prec)))
    return out


def _posterior_factor(st: LeafStats, v_diag: np.ndarray, leaf_id):
    """Cholesky of X'X + V^-1, with one jitter retry before giving up."""
    A = st.xtx + np.diag(1.0 / v_diag)
    try:
        return cholesky(A, lower=True)
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10 * np.trace(A) / A.shape[0]
    try:
        return cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
    except np.linalg.LinAlgError:
        raise LeafFactorizationError(leaf_id, float(np.linalg.cond(A))) from None


def linear_log_marginal(stats: list[LeafStats], sigma2: float,
                      v_diags: list[np.ndarray]) -> float:
    """Linear-leaf log marginal of the residuals given the tree.

    -(n/2) log sigma^2 plus, per leaf,
    -0.5 log|V| + 0.5 log|Lambda| - (r'r - mu' Lambda^-1 mu) / (2 sigma^2)
    with Lambda = (X'X + V^-1)^-1 and mu = Lambda X'r.
    """
    if sigma2 <= 0:
        raise ValueError(f"sigma2 must be positive, got {sigma2}")
    n_total = 0
    total = 0.0
    for st, v_diag in zip(stats, v_diags):
        n_total += st.n
        L = _posterior_factor(st, v_diag, st.leaf_id)
        # log|Lambda| = -log|A|, log|A| = 2 sum log diag(L)
        log_det_A = 2.0 * float(np.sum(np.log(np.diag(L))))
        log_det_V = float(np.sum(np.log(v_diag)))
        mu = cho_solve((L, True), st.xtr)
        quad = float(st.xtr @ mu)     # mu' Lambda^-1 mu
        total += -0.5 * log_det_V - 0.5 * log_det_A
        total += -(st.r_sq_sum - quad) / (2.0 * sigma2)
    return total - 0.5 * n_total * math.log(sigma2)


def linear_sample_beta(stats: list[LeafStats], sigma2: float,
                     v_diags: list[np.ndarray],
                     rng: np.random.Generator) -> dict[int, np.ndarray]:
    """Gibbs draw of every leaf coefficient vector from N_q(Lambda X'r, sigma^2 Lambda)."""
    out = {}
    for st, v_diag in zip(stats, v_diags):
        L = _posterior_factor(st, v_diag, st.leaf_id)
        mu = cho_solve((L, True), st.xtr)
        z = rng.standard_normal(st.q)
        # cov(L^-T z) = A^-1 = Lambda
        out[st.leaf_id] = mu + math.sqrt(sigma2) * solve_triangular(L.T, z, lower=False)
    return out


def leaf_covariate_sets(tree: Tree, covariate_rule: str) -> dict[int, list[int]]:
    """Per-leaf covariate index lists under the chosen selection rule.

    Under the tree-splits rule every leaf shares the features used anywhere
    in the tree; under the ancestors rule each leaf keeps only the features
    on its own root path.
    """
    if covariate_rule == TREE_SPLITS:
        covs = sorted(split_covariates(tree))
        return {leaf: list(covs) for leaf in tree.leaves()}
    if covariate_rule == ANCESTORS:
        return {leaf: sorted(ancestor_covariates(tree, leaf)) for leaf in tree.leaves()}
    raise ValueError(f"unknown covariate rule {covariate_rule!r}")


def leaf_parameter_count(tree: Tree, leaf_model: str,
                         covariate_rule: str = TREE_SPLITS) -> int:
    """Number of leaf parameters the tree contributes to the ensemble fit."""
    b = tree.n_leaves()
    if leaf_model == CONSTANT:
        return b
    if leaf_model == LINEAR:
        if covariate_rule == TREE_SPLITS:
            return b * (len(split_covariates(tree)) + 1)
        if covariate_rule == ANCESTORS:
            return sum(len(ancestor_covariates(tree, leaf)) + 1
                       for leaf in tree.leaves())
        raise ValueError(f"unknown covariate rule {covariate_rule!r}")
    raise ValueError(f"unknown leaf model {leaf_model!r}")
