"""Deterministic numerical kernels shared across the package.

Dense symmetric factorization, adaptive Gauss-Kronrod quadrature (with a
documented change of variable for semi-infinite ranges), safeguarded scalar
root finding, extremal-eigenvalue estimation by power iteration, and seeded
random streams with reproducible substream derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np


class NotPositiveDefinite(Exception):
    """Symmetric factorization hit a nonpositive pivot."""


class NoConvergence(Exception):
    """An iterative routine exhausted its budget before reaching tolerance."""


class NoBracket(Exception):
    """Root finder called on an interval without a sign change."""


# =============================================================================
# Symmetric positive definite matrices
# =============================================================================


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """Dense symmetric matrix expected to be positive definite.

    Symmetry is validated on construction (1e-12 relative tolerance);
    positive definiteness is only established by a successful factorization,
    so a failed :func:`factor_logdet` is the detection mechanism for
    degenerate models.
    """

    entries: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.size:
            scale = float(np.abs(a).max())
            if float(np.abs(a - a.T).max()) > 1e-12 * scale:
                raise ValueError("matrix is not symmetric (1e-12 relative)")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def factor_logdet(m: SpdMatrix) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``m`` and its log-determinant.

    Returns ``(factor, logdet)`` with ``factor @ factor.T == m.entries`` and
    ``logdet = 2 * sum(log(diag(factor)))``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is nonpositive.  Callers treat this as model or
        posterior degeneracy (rank-deficient design, saddle point).
    """
    try:
        factor = np.linalg.cholesky(m.entries)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            f"nonpositive pivot while factoring a dim-{m.dim} matrix"
        ) from None
    if m.dim == 0:
        return factor, 0.0
    return factor, 2.0 * float(np.log(np.diag(factor)).sum())




# =============================================================================
# Adaptive quadrature (Gauss-Kronrod 7-15)
# =============================================================================

# Kronrod-15 abscissae on (-1, 1); odd-indexed entries are the embedded
# Gauss-7 nodes.  Values are the standard QUADPACK constants.
_GK_NODES = np.array([
    -0.991455371120813, -0.949107912342759, -0.864864423359769,
    -0.741531185599394, -0.586087235467691, -0.405845151377397,
    -0.207784955007898, 0.0, 0.207784955007898, 0.405845151377397,
    0.586087235467691, 0.741531185599394, 0.864864423359769,
    0.949107912342759, 0.991455371120813,
])
_GK_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728, 0.204432940075298,
    0.190350578064785, 0.169004726639267, 0.140653259715525,
    0.104790010322250, 0.063092092629979, 0.022935322010529,
])
_G_IDX = np.arange(1, 15, 2)
_G_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469, 0.381830050505119, 0.279705391489277,
    0.129484966168870,
])


def _gk_panel(f: Callable, a: float, b: float) -> tuple[float, float]:
    """One Gauss-Kronrod panel: (integral estimate, error estimate)."""
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    fx = np.asarray(f(mid + half * _GK_NODES), dtype=float)
    if fx.shape != _GK_NODES.shape:
        raise ValueError("integrand must map an array of abscissae elementwise")
    if not np.all(np.isfinite(fx)):
        raise ValueError(f"integrand not finite inside ({a}, {b})")
    k15 = half * float(fx @ _GK_WEIGHTS)
    g7 = half * float(fx[_G_IDX] @ _G_WEIGHTS)
    return k15, abs(k15 - g7)


def _adaptive_finite(f: Callable, lo: float, hi: float, tol: float,
                     max_panels: int) -> float:
    if hi == lo:
        return 0.0
    n0 = 8  # several seed panels so a narrow peak cannot hide from the error estimate
    edges = np.linspace(lo, hi, n0 + 1)
    panels = [(_gk_panel(f, edges[i], edges[i + 1]) + (edges[i], edges[i + 1]))
              for i in range(n0)]
    while True:
        err = sum(p[1] for p in panels)
        if err <= tol:
            return sum(p[0] for p in panels)
        if len(panels) >= max_panels:
            raise NoConvergence(
                f"quadrature error {err:.3e} > tol {tol:.3e} after "
                f"{len(panels)} panels"
            )
        worst = max(range(len(panels)), key=lambda i: panels[i][1])
        _, _, a, b = panels[worst]
        mid = 0.5 * (a + b)
        panels[worst] = _gk_panel(f, a, mid) + (a, mid)
        panels.append(_gk_panel(f, mid, b) + (mid, b))


def adaptive_quad(f: Callable, lo: float, hi: float, tol: float = 1e-8,
                  max_panels: int = 4000) -> float:
    """Integrate ``f`` over (lo, hi) to an estimated absolute error <= tol.

    ``f`` must accept a numpy array of abscissae and evaluate elementwise.
    Infinite endpoints are handled by the substitution t = u / (1 - u)
    mapping the tail onto (0, 1); a doubly infinite range is split at zero.
    Quadrature nodes are interior, so the endpoints themselves (including a
    singular or undefined origin) are never evaluated.

    Raises
    ------
    NoConvergence
        If the subdivision budget is exhausted first.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if lo > hi:
        return -adaptive_quad(f, hi, lo, tol, max_panels)
    lo_inf = math.isinf(lo)
    hi_inf = math.isinf(hi)
    if lo_inf and hi_inf:
        return (adaptive_quad(f, lo, 0.0, tol / 2, max_panels)
                + adaptive_quad(f, 0.0, hi, tol / 2, max_panels))
    if hi_inf:
        def g(u):
            w = 1.0 - u
            return f(lo + u / w) / (w * w)
        return _adaptive_finite(g, 0.0, 1.0, tol, max_panels)
    if lo_inf:
        def g(u):
            w = 1.0 - u
            return f(hi - u / w) / (w * w)
        return _adaptive_finite(g, 0.0, 1.0, tol, max_panels)
    return _adaptive_finite(f, lo, hi, tol, max_panels)


# =============================================================================
# Scalar root finding
# =============================================================================


def root_find(f: Callable[[float], float], lo: float, hi: float,
              tol: float = 1e-10, max_iter: int = 500) -> float:
    """Root of scalar ``f`` on [lo, hi]: bisection sharpened by secant steps.

    Requires a sign change over the interval and returns x with
    ``|f(x)| <= tol``.  A secant proposal is accepted only if it lands
    strictly inside the current bracket and the bracket has been shrinking;
    otherwise the step falls back to bisection, so convergence is guaranteed.

    Raises
    ------
    NoBracket
        If f(lo) and f(hi) have the same (nonzero) sign.
    """
    a, b = float(lo), float(hi)
    fa, fb = float(f(a)), float(f(b))
    if abs(fa) <= tol:
        return a
    if abs(fb) <= tol:
        return b
    if fa * fb > 0:
        raise NoBracket(f"f({a}) = {fa:.6g} and f({b}) = {fb:.6g} have the same sign")
    widths = [abs(b - a)]
    for _ in range(max_iter):
        width = abs(b - a)
        widths.append(width)
        x = 0.5 * (a + b)
        # secant through the bracket endpoints, safeguarded: keep it interior
        # and insist the bracket halved over the previous two iterations,
        # otherwise bisect, so convergence is never slower than bisection
        if fb != fa and width <= 0.5 * widths[max(0, len(widths) - 3)]:
            s = b - fb * (b - a) / (fb - fa)
            if a + 0.01 * width < s < b - 0.01 * width:
                x = s
        fx = float(f(x))
        if abs(fx) <= tol:
            return x
        if fa * fx < 0:
            b, fb = x, fx
        else:
            a, fa = x, fx
    raise NoConvergence(f"no root to |f| <= {tol} within {max_iter} iterations")


# =============================================================================
# Extremal eigenvalues (power iteration)
# =============================================================================


def _dominant_eigenvalue(a: np.ndarray, tol: float, max_iter: int) -> float:
    """Signed eigenvalue of largest magnitude of a symmetric matrix.

    Stops on the residual ||A v - lam v|| <= tol * max(1, |lam|), which for
    symmetric matrices bounds the eigenvalue error directly; the Rayleigh
    quotient is then accurate to about the residual squared.
    """
    n = a.shape[0]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(0x5EED)))
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    lam = float(v @ a @ v)
    for _ in range(max_iter):
        w = a @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        w = a @ v
        lam = float(v @ w)
        if float(np.linalg.norm(w - lam * v)) <= tol * max(1.0, abs(lam)):
            return lam
    return lam


def extremal_eigenvalues(a: np.ndarray, tol: float = 1e-8,
                         max_iter: int = 20000) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric matrix.

    Two power-iteration passes: the dominant eigenvalue first, then the
    dominant eigenvalue of the spectrum shifted by it, which recovers the
    eigenvalue farthest from the first.
    """
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return 0.0, 0.0
    if a.shape[0] == 1:
        return float(a[0, 0]), float(a[0, 0])
    lam1 = _dominant_eigenvalue(a, tol, max_iter)
    shifted = a - lam1 * np.eye(a.shape[0])
    lam2 = lam1 + _dominant_eigenvalue(shifted, tol, max_iter)
    return (min(lam1, lam2), max(lam1, lam2))


def spectral_norm(a: np.ndarray, tol: float = 1e-8) -> float:
    """Spectral norm of a symmetric matrix (largest absolute eigenvalue)."""
    lo, hi = extremal_eigenvalues(a, tol=tol)
    return max(abs(lo), abs(hi))


# =============================================================================
# Seeded random streams
# =============================================================================


@dataclass(frozen=True)
class RandomStream:
    """Deterministic random stream keyed by a seed and a derivation path.

    The generator is PCG64 seeded through ``SeedSequence(seed, spawn_key=path)``,
    so identical (seed, path) pairs reproduce the identical draw sequence on
    every platform.  A stream is single-consumer: concurrent work must draw
    from :func:`derive_stream` substreams, never from a shared stream.
    """

    seed: int
    path: tuple[int, ...] = ()

    @cached_property
    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        return np.random.Generator(np.random.PCG64(seq))


def make_stream(seed: int) -> RandomStream:
    """Root stream for a 64-bit seed."""
    return RandomStream(seed=int(seed))


def derive_stream(parent: RandomStream, index: int) -> RandomStream:
    """Reproducible substream, statistically independent of its siblings."""
    return RandomStream(seed=parent.seed, path=parent.path + (int(index),))
