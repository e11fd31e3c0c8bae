"""Posterior-mode optimization within the MLE's orthant and the Laplace
approximation of the log marginal likelihood for a single submodel.

Nonlocal priors vanish on every coordinate plane, so the log posterior has
one local maximum per orthant and the global mode shares the MLE's orthant.
The mode finder therefore starts at the MLE (nudging exactly-zero
coordinates into the positive orthant by convention, since the two
orthant-restricted optima tie by symmetry there) and shortens any Newton
step that would let a coordinate cross zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .glm import Dataset, GlmFit, _neg_hessian_entries, fit_mle, log_likelihood
from .glm import score
from .modelspace import ModelIndex
from .numerics import NotPositiveDefinite, SpdMatrix, factor_logdet
from .priors import NonlocalPriorSpec, log_prior, log_prior_grad, log_prior_neg_hessian

GRAD_TOL_PER_OBS = 1e-8
MAX_MODE_ITER = 200
MIN_NUDGE = 1e-4


@dataclass(frozen=True)
class PriorFuncs:
    """Callable bundle the mode finder optimizes against.

    ``mode_scale(n)`` is the asymptotic scale of a null coordinate's mode,
    used to seed nudged starts.  ``barrier_at_origin`` disables the orthant
    step-shortening for priors that are finite at zero (the Gaussian
    reference prior used to validate the Laplace plumbing).
    """

    log_density: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    neg_hessian_diag: Callable[[np.ndarray], np.ndarray]
    mode_scale: Callable[[int], float]
    barrier_at_origin: bool = True


def _as_prior_funcs(spec: Union[NonlocalPriorSpec, PriorFuncs]) -> PriorFuncs:
    if isinstance(spec, PriorFuncs):
        return spec
    exponent = 1.0 / (2.0 + 2.0 * spec.zeta)

    return PriorFuncs(
        log_density=lambda b: log_prior(b, spec),
        grad=lambda b: log_prior_grad(b, spec),
        neg_hessian_diag=lambda b: log_prior_neg_hessian(b, spec),
        mode_scale=lambda n: (spec.scale / n) ** exponent,
        barrier_at_origin=True,
    )


def gaussian_reference_prior(sigma2: float) -> PriorFuncs:
    """Mean-zero Gaussian prior, for which Laplace is exact.

    Test-only plumbing hook: substituting it for a nonlocal prior makes the
    log posterior quadratic in the Gaussian family, so the Laplace marginal
    must match the conjugate closed form to rounding error.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")

    def logd(b: np.ndarray) -> float:
        b = np.asarray(b, dtype=float)
        return float(-0.5 * b.size * math.log(2 * math.pi * sigma2)
                     - 0.5 * (b @ b) / sigma2)

    return PriorFuncs(
        log_density=logd,
        grad=lambda b: -np.asarray(b, dtype=float) / sigma2,
        neg_hessian_diag=lambda b: np.full(np.asarray(b).size, 1.0 / sigma2),
        mode_scale=lambda n: MIN_NUDGE,
        barrier_at_origin=False,
    )


@dataclass
class PosteriorFit:
    """Posterior mode, curvature there, and (once computed) the marginal."""

    model: ModelIndex
    beta_pm: np.ndarray
    log_post_unnorm: float
    neg_hessian_logpost: Optional[SpdMatrix]
    converged: bool
    iterations: int
    log_marginal: Optional[float] = None
    saddle: bool = False


def find_posterior_mode(d: Dataset, J: ModelIndex,
                        spec: Union[NonlocalPriorSpec, PriorFuncs],
                        mle: GlmFit, max_iter: int = MAX_MODE_ITER) -> PosteriorFit:
    """Damped Newton ascent of log-likelihood + log-prior from the MLE.

    Zero MLE coordinates start at +delta0 with delta0 =
    max((scale/n)^(1/(2+2*zeta)), 1e-4), the theoretical scale of a null
    coordinate's mode.  Any Newton step that would flip a coordinate's sign
    is shortened so the coordinate stops halfway to zero, keeping the
    iterates inside the starting orthant where the prior is smooth.
    Non-convergence after ``max_iter`` iterations is flagged on the returned
    fit, never raised.
    """
    funcs = _as_prior_funcs(spec)
    if J.size == 0:
        ll = log_likelihood(d, J, np.zeros(0))
        return PosteriorFit(model=J, beta_pm=np.zeros(0), log_post_unnorm=ll,
                            neg_hessian_logpost=None, converged=True, iterations=0)
    tol = GRAD_TOL_PER_OBS * d.n
    beta = np.array(mle.beta_hat, dtype=float)
    if funcs.barrier_at_origin:
        nudge = max(funcs.mode_scale(d.n), MIN_NUDGE)
        beta[beta == 0.0] = nudge  # positive orthant by convention

    def objective(b: np.ndarray) -> float:
        return log_likelihood(d, J, b) + funcs.log_density(b)

    value = objective(beta)
    iterations = 0
    converged = False
    eye = np.eye(J.size)
    for _ in range(max_iter):
        g = score(d, J, beta) + funcs.grad(beta)
        if float(np.abs(g).max()) <= tol:
            converged = True
            break
        h = _neg_hessian_entries(d, J, beta) + np.diag(funcs.neg_hessian_diag(beta))
        step = None
        ridge = 0.0
        for _ in range(60):
            try:
                np.linalg.cholesky(h + ridge * eye)
                step = np.linalg.solve(h + ridge * eye, g)
                break
            except np.linalg.LinAlgError:
                # indefinite away from the mode; damp toward gradient ascent
                ridge = max(2.0 * ridge, 1e-8 * max(1.0, float(np.abs(h).max())))
        if step is None:
            break
        t = 1.0
        if funcs.barrier_at_origin:
            landing = beta + step
            flips = np.sign(landing) != np.sign(beta)
            if np.any(flips):
                caps = np.abs(beta[flips]) / (2.0 * np.abs(step[flips]))
                t = min(1.0, float(caps.min()))
        improved = False
        for _ in range(60):
            cand = beta + t * step
            cand_value = objective(cand)
            if cand_value >= value:
                improved = True
                break
            t *= 0.5
        if not improved:
            break
        beta, value = cand, cand_value
        iterations += 1
    h_star = _neg_hessian_entries(d, J, beta) + np.diag(funcs.neg_hessian_diag(beta))
    return PosteriorFit(model=J, beta_pm=beta, log_post_unnorm=value,
                        neg_hessian_logpost=SpdMatrix(h_star),
                        converged=converged, iterations=iterations)


def laplace_log_marginal(d: Dataset, J: ModelIndex,
                         spec: Union[NonlocalPriorSpec, PriorFuncs],
                         pm: PosteriorFit) -> float:
    """Laplace log marginal likelihood at the posterior mode.

    (|J|/2) log(2 pi) - (1/2) logdet(H*) + log posterior at the mode, with
    H* the negative log-posterior Hessian there.  The empty model has no
    parameters and no prior, so its marginal is the exact log-likelihood.

    Raises
    ------
    NotPositiveDefinite
        If H* fails to factor: the optimizer stopped at a saddle, the
        Laplace formula is invalid, and callers exclude the model by
        assigning it a -inf marginal.
    """
    if J.size == 0:
        return log_likelihood(d, J, np.zeros(0))
    _, logdet = factor_logdet(pm.neg_hessian_logpost)
    return (0.5 * J.size * math.log(2 * math.pi) - 0.5 * logdet
            + pm.log_post_unnorm)


def fit_model(d: Dataset, J: ModelIndex,
              spec: Union[NonlocalPriorSpec, PriorFuncs]) -> PosteriorFit:
    """MLE, posterior mode, and Laplace marginal for one submodel.

    Degenerate models (rank-deficient design, saddle curvature at the mode)
    come back with ``log_marginal = -inf`` and ``saddle`` set instead of
    raising, so model-space sweeps can score them uniformly.
    """
    try:
        mle = fit_mle(d, J)
        pm = find_posterior_mode(d, J, spec, mle)
        pm.log_marginal = laplace_log_marginal(d, J, spec, pm)
    except NotPositiveDefinite:
        return PosteriorFit(model=J, beta_pm=np.full(J.size, np.nan),
                            log_post_unnorm=-math.inf, neg_hessian_logpost=None,
                            converged=False, iterations=0,
                            log_marginal=-math.inf, saddle=True)
    return pm
