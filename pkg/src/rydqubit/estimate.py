"""Numerical machinery shared by the fitting code.

Composite Gauss-Legendre quadrature, bounded Nelder-Mead in transformed
coordinates with seeded restarts, histogram log-likelihoods and a thin
least-squares wrapper.  Nothing here knows about atoms or photons.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .seeding import generator

LOG_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# quadrature


@lru_cache(maxsize=64)
def _leggauss(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def composite_nodes(a: float, b: float, n_nodes: int = 256, per_panel: int = 16):
    """Nodes and weights of a composite Gauss-Legendre rule on [a, b].

    ``n_nodes`` is rounded up to a whole number of panels of ``per_panel``
    points; with fewer than ``per_panel`` nodes a single panel is used.
    """
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if n_nodes < 2:
        raise ValueError("n_nodes must be >= 2")
    m = min(per_panel, n_nodes)
    panels = -(-n_nodes // m)
    x, w = _leggauss(m)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def quadrature(f: Callable, a: float, b: float, n_nodes: int = 256, per_panel: int = 16) -> float:
    """Integrate a vectorised ``f`` over [a, b]."""
    nodes, weights = composite_nodes(a, b, n_nodes, per_panel)
    values = np.asarray(f(nodes), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("integrand returned a non-finite value")
    return float(values @ weights)


# ---------------------------------------------------------------------------
# bound transforms


def _to_internal(x: float, lo: float, hi: float) -> float:
    if np.isfinite(lo) and np.isfinite(hi):
        s = (x - lo) / (hi - lo)
        s = min(max(s, 1e-15), 1 - 1e-15)
        return float(np.log(s / (1 - s)))
    if np.isfinite(lo):
        return float(np.log(max(x - lo, 1e-300)))
    if np.isfinite(hi):
        return float(np.log(max(hi - x, 1e-300)))
    return float(x)


def _to_external(u: float, lo: float, hi: float) -> float:
    if np.isfinite(lo) and np.isfinite(hi):
        return float(lo + (hi - lo) / (1.0 + np.exp(-u)))
    if np.isfinite(lo):
        return float(lo + np.exp(u))
    if np.isfinite(hi):
        return float(hi - np.exp(u))
    return float(u)


@dataclass
class Objective:
    """A scalar function of a parameter vector with box bounds.

    Bounds are ``(lo, hi)`` pairs; ``None`` or an infinite value means open on
    that side.  Internally, half-open intervals use a log map and closed ones
    a scaled logit, so the simplex never leaves the feasible region.
    """

    func: Callable[[np.ndarray], float]
    bounds: Sequence[tuple[float | None, float | None]]

    def __post_init__(self):
        self._lo = np.array([-np.inf if b[0] is None else b[0] for b in self.bounds], float)
        self._hi = np.array([np.inf if b[1] is None else b[1] for b in self.bounds], float)

    @property
    def dimension(self) -> int:
        return len(self.bounds)

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))

    def in_bounds(self, x) -> bool:
        x = np.asarray(x, float)
        return bool(np.all(x >= self._lo) and np.all(x <= self._hi))

    def to_internal(self, x) -> np.ndarray:
        return np.array([_to_internal(v, lo, hi) for v, lo, hi in zip(x, self._lo, self._hi)])

    def to_external(self, u) -> np.ndarray:
        return np.array([_to_external(v, lo, hi) for v, lo, hi in zip(u, self._lo, self._hi)])


@dataclass
class FitResult:
    point: np.ndarray
    value: float
    iterations: int
    converged: bool
    restart_index: int
    flags: tuple[str, ...] = field(default_factory=tuple)


def minimize(
    obj: Objective,
    x0,
    restarts: int = 0,
    tol: float = 1e-8,
    seed: int = 0,
    max_iter: int | None = None,
    spread: float = 0.5,
) -> FitResult:
    """Nelder-Mead in transformed coordinates, keeping the best of several starts.

    Start 0 is ``x0``; each further start perturbs the best internal point so
    far by a Gaussian of width ``spread`` drawn from a generator seeded with
    ``seed``.  Convergence requires both the simplex extent and the spread of
    objective values to fall below ``tol``.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (obj.dimension,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({obj.dimension},)")
    if not obj.in_bounds(x0):
        raise ValueError("x0 is outside the bounds")
    rng = generator(seed)
    max_iter = max_iter or 400 * obj.dimension

    def internal(u):
        val = obj(obj.to_external(u))
        return val if np.isfinite(val) else np.inf

    best_u = obj.to_internal(x0)
    best_val, best_idx, best_conv = np.inf, 0, False
    total_iter = 0
    for k in range(restarts + 1):
        start = best_u if k == 0 else best_u + spread * rng.standard_normal(obj.dimension)
        res = optimize.minimize(
            internal,
            start,
            method="Nelder-Mead",
            options={"xatol": tol, "fatol": tol, "maxiter": max_iter, "maxfev": 4 * max_iter,
                     "adaptive": obj.dimension > 2},
        )
        total_iter += int(res.nit)
        if k == 0 or res.fun < best_val:
            best_u, best_val, best_idx, best_conv = res.x, float(res.fun), k, bool(res.success)

    point = obj.to_external(best_u)
    # a start that is never beaten is returned exactly, not via the transform round trip
    if best_idx == 0 and obj(x0) <= obj(point):
        point = x0.copy()
    return FitResult(point=point, value=obj(point), iterations=total_iter,
                     converged=best_conv, restart_index=best_idx)


# ---------------------------------------------------------------------------
# likelihoods and least squares


def poisson_histogram_loglik(pmf, hist) -> float:
    """Multinomial log-likelihood ``sum_n hist[n] * log(pmf[n])``.

    Counts beyond the support of ``pmf`` are scored with a probability floor
    of 1e-300 rather than raising.
    """
    probs = np.asarray(getattr(pmf, "probs", pmf), dtype=float)
    h = np.asarray(hist, dtype=float)
    if h.size == 0:
        return 0.0
    p = np.full(h.size, LOG_FLOOR)
    k = min(h.size, probs.size)
    p[:k] = np.maximum(probs[:k], LOG_FLOOR)
    mask = h != 0
    return float(h[mask] @ np.log(p[mask]))


def numerical_hessian(f: Callable, x, rel_step: float = 1e-4) -> np.ndarray:
    x = np.asarray(x, float)
    h = rel_step * np.maximum(np.abs(x), 1e-3)
    n = x.size
    H = np.empty((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h[i] * h[j])
    return H


def hessian_standard_errors(nll: Callable, x, rel_step: float = 1e-4) -> np.ndarray:
    """Standard errors from the inverse curvature of a negative log-likelihood.

    Entries are NaN when the curvature matrix is not positive definite.
    """
    H = numerical_hessian(nll, x, rel_step)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return np.full(len(x), np.nan)
    d = np.diag(cov)
    return np.where(d > 0, np.sqrt(np.abs(d)), np.nan)


def least_squares_fit(
    model: Callable,
    x,
    y,
    x0,
    bounds=None,
    sigma=None,
    restarts: int = 0,
    tol: float = 1e-12,
    seed: int = 0,
) -> FitResult:
    """Minimise the (optionally weighted) sum of squared residuals."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w = 1.0 if sigma is None else 1.0 / np.asarray(sigma, float) ** 2
    bounds = bounds or [(None, None)] * len(x0)

    def ssr(params):
        r = y - model(params, x)
        return float(np.sum(w * r * r))

    res = minimize(Objective(ssr, bounds), x0, restarts=restarts, tol=tol, seed=seed)
    if y.size < len(x0):
        res.flags = res.flags + ("underdetermined",)
    return res


def least_squares_errors(model: Callable, x, y, params, sigma=None, rel_step: float = 1e-6) -> np.ndarray:
    """Parameter standard errors from the Jacobian at a least-squares optimum."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    p = np.asarray(params, float)
    base = model(p, x)
    J = np.empty((x.size, p.size))
    for i in range(p.size):
        h = rel_step * max(abs(p[i]), 1e-6)
        dp = p.copy()
        dp[i] += h
        J[:, i] = (model(dp, x) - base) / h
    if sigma is None:
        dof = max(x.size - p.size, 1)
        s2 = float(np.sum((y - base) ** 2)) / dof
        cov = s2 * np.linalg.pinv(J.T @ J)
    else:
        Jw = J / np.asarray(sigma, float)[:, None]
        cov = np.linalg.pinv(Jw.T @ Jw)
    return np.sqrt(np.abs(np.diag(cov)))
