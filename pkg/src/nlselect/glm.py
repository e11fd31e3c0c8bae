"""Canonical-link exponential-family likelihoods and Newton MLE fitting.

Families: Gaussian with known variance, binomial/logistic, Poisson.  All
log-likelihoods keep their full normalizing constants so marginal
likelihoods are comparable across models and against quadrature oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import gammaln

from .modelspace import ModelIndex
from .numerics import NotPositiveDefinite, SpdMatrix

SCORE_TOL_PER_OBS = 1e-8
MAX_NEWTON_ITER = 100
SEPARATION_CAP = 30.0


class FamilySupport(ValueError):
    """Response vector violates the support of the requested family."""


def _sigmoid(theta: np.ndarray) -> np.ndarray:
    out = np.empty_like(theta)
    pos = theta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-theta[pos]))
    e = np.exp(theta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class _Gaussian:
    name = "gaussian"

    def cumulant(self, theta):
        return 0.5 * theta * theta

    def mean(self, theta):
        return theta

    def variance(self, theta):
        return np.ones_like(theta)

    def scale(self, dispersion):
        return 1.0 / dispersion

    def log_base(self, y, dispersion):
        n = y.shape[0]
        return float(-0.5 * (y @ y) / dispersion - 0.5 * n * math.log(2 * math.pi * dispersion))

    def check_support(self, y):
        pass

    def sample(self, theta, dispersion, rng):
        return theta + math.sqrt(dispersion) * rng.normal(size=theta.shape[0])


class _Logistic:
    name = "logistic"

    def cumulant(self, theta):
        return np.logaddexp(0.0, theta)

    def mean(self, theta):
        return _sigmoid(theta)

    def variance(self, theta):
        p = _sigmoid(theta)
        return p * (1.0 - p)

    def scale(self, dispersion):
        return 1.0

    def log_base(self, y, dispersion):
        return 0.0

    def check_support(self, y):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise FamilySupport("logistic responses must be 0/1")

    def sample(self, theta, dispersion, rng):
        return (rng.uniform(size=theta.shape[0]) < _sigmoid(theta)).astype(float)


class _Poisson:
    name = "poisson"

    def cumulant(self, theta):
        with np.errstate(over="ignore"):
            return np.exp(theta)

    def mean(self, theta):
        with np.errstate(over="ignore"):
            return np.exp(theta)

    def variance(self, theta):
        with np.errstate(over="ignore"):
            return np.exp(theta)

    def scale(self, dispersion):
        return 1.0

    def log_base(self, y, dispersion):
        return float(-gammaln(y + 1.0).sum())

    def check_support(self, y):
        if not np.all((y >= 0) & (y == np.floor(y))):
            raise FamilySupport("poisson responses must be nonnegative integers")

    def sample(self, theta, dispersion, rng):
        return rng.poisson(np.exp(theta)).astype(float)


FAMILIES = {f.name: f for f in (_Gaussian(), _Logistic(), _Poisson())}


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable regression data: response, design, family tag, dispersion.

    ``dispersion`` is the known Gaussian variance and is ignored by the
    other families.  Model indices are 1-based positions into the columns
    of ``X``; no intercept is implicit, callers include a constant column
    explicitly when they want one.
    """

    y: np.ndarray
    X: np.ndarray
    family: str = "gaussian"
    dispersion: float = 1.0

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"y has {y.shape[0]} rows but X has {X.shape[0]}")
        if y.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("need n >= 1 and p >= 1")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("non-finite entries in y or X")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.dispersion <= 0:
            raise ValueError("dispersion must be positive")
        FAMILIES[self.family].check_support(y)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def _gram(self) -> tuple[np.ndarray, np.ndarray, float]:
        # sufficient statistics for the Gaussian fast path
        return self.X.T @ self.X, self.X.T @ self.y, float(self.y @ self.y)

    def _model_gram(self, J: ModelIndex) -> tuple[np.ndarray, np.ndarray]:
        """Memoized (X_J' X_J, X_J' y); model sweeps hit each slice many times."""
        cache = self.__dict__.setdefault("_model_gram_cache", {})
        hit = cache.get(J)
        if hit is None:
            xtx, xty, _ = self._gram
            cols = J.cols
            hit = (xtx[np.ix_(cols, cols)], xty[cols])
            cache[J] = hit
        return hit


@dataclass
class GlmFit:
    """Maximum-likelihood fit of one submodel."""

    model: ModelIndex
    beta_hat: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    neg_hessian: Optional[SpdMatrix]
    separation: bool = False


def design(d: Dataset, J: ModelIndex) -> np.ndarray:
    """Columns of the design selected by ``J`` (n x |J|)."""
    if J.size and J.indices[-1] > d.p:
        raise ValueError(f"model {J} indexes beyond p = {d.p}")
    return d.X[:, J.cols]


def log_likelihood(d: Dataset, J: ModelIndex, beta: np.ndarray) -> float:
    """Full log-likelihood of submodel ``J`` at ``beta``, constants included."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if beta.shape[0] != J.size:
        raise ValueError(f"beta has length {beta.shape[0]}, model has {J.size}")
    fam = FAMILIES[d.family]
    s = fam.scale(d.dispersion)
    if d.family == "gaussian":
        xtx_j, xty_j = d._model_gram(J)
        kernel = float(xty_j @ beta - 0.5 * beta @ xtx_j @ beta)
    else:
        theta = design(d, J) @ beta
        kernel = float(d.y @ theta - fam.cumulant(theta).sum())
    value = s * kernel + fam.log_base(d.y, d.dispersion)
    return value if np.isfinite(value) else -math.inf


def score(d: Dataset, J: ModelIndex, beta: np.ndarray) -> np.ndarray:
    """Gradient of the log-likelihood: X_J' (y - b'(X_J beta)), 1/sigma^2-scaled."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    fam = FAMILIES[d.family]
    s = fam.scale(d.dispersion)
    if d.family == "gaussian":
        xtx_j, xty_j = d._model_gram(J)
        return s * (xty_j - xtx_j @ beta)
    Xj = design(d, J)
    return s * (Xj.T @ (d.y - fam.mean(Xj @ beta)))


def _neg_hessian_entries(d: Dataset, J: ModelIndex, beta: np.ndarray) -> np.ndarray:
    fam = FAMILIES[d.family]
    s = fam.scale(d.dispersion)
    if d.family == "gaussian":
        xtx_j, _ = d._model_gram(J)
        return s * xtx_j
    Xj = design(d, J)
    w = fam.variance(Xj @ beta)
    return s * ((Xj.T * w) @ Xj)


def neg_hessian(d: Dataset, J: ModelIndex, beta: np.ndarray) -> SpdMatrix:
    """Negative log-likelihood Hessian X_J' W X_J with W = diag(b''(theta))."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    return SpdMatrix(_neg_hessian_entries(d, J, beta))


def fit_mle(d: Dataset, J: ModelIndex, max_iter: int = MAX_NEWTON_ITER,
            separation_cap: float = SEPARATION_CAP) -> GlmFit:
    """Damped Newton MLE from beta = 0 with step-halving.

    Stops when the score infinity-norm drops below 1e-8 * n or after
    ``max_iter`` iterations.  For logistic models a fitted coefficient
    exceeding ``separation_cap`` in magnitude sets the ``separation`` flag,
    signalling that the MLE likely does not exist; this is a flag, not an
    error, and the capped fit is still returned.
    """
    if J.size > d.n:
        raise ValueError(f"|J| = {J.size} exceeds n = {d.n}")
    tol = SCORE_TOL_PER_OBS * d.n
    if J.size == 0:
        return GlmFit(model=J, beta_hat=np.zeros(0),
                      loglik=log_likelihood(d, J, np.zeros(0)),
                      converged=True, iterations=0, neg_hessian=None)
    beta = np.zeros(J.size)
    ll = log_likelihood(d, J, beta)
    iterations = 0
    for _ in range(max_iter):
        g = score(d, J, beta)
        if float(np.abs(g).max()) <= tol:
            break
        h = _neg_hessian_entries(d, J, beta)
        try:
            np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(
                f"rank-deficient design for model {J}") from None
        step = np.linalg.solve(h, g)
        t = 1.0
        improved = False
        for _ in range(60):
            cand = beta + t * step
            cand_ll = log_likelihood(d, J, cand)
            if cand_ll >= ll:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        beta, ll = cand, cand_ll
        iterations += 1
    converged = float(np.abs(score(d, J, beta)).max()) <= tol
    separation = (d.family == "logistic"
                  and float(np.abs(beta).max()) > separation_cap)
    return GlmFit(model=J, beta_hat=beta, loglik=ll, converged=converged,
                  iterations=iterations, neg_hessian=neg_hessian(d, J, beta),
                  separation=separation)
