"""Independent oracles: finite differences, grid brute-force inner solves,
the three-term hypergradient error decomposition, and truncation-bias curves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError
from .exact import exact_reward_grad
from .penalty import PenaltyConfig
from .rng import RngStream
from .vecs import as_vec


def central_fd_grad(f, x, eps: float) -> np.ndarray:
    """Coordinate-wise central differences (f(x + eps e_i) - f(x - eps e_i)) / 2 eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = as_vec(x)
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = eps
        hi, lo = f(x + e), f(x - e)
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise NonFiniteError(f"objective non-finite near coordinate {i}")
        grad[i] = (hi - lo) / (2.0 * eps)
    return grad


def relative_error(approx, reference) -> float:
    a, r = as_vec(approx), as_vec(reference)
    return float(np.linalg.norm(a - r) / (np.linalg.norm(a) + np.linalg.norm(r) + 1e-300))


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned search box for the inner brute force (lam dim <= 2).

    ``points`` grid nodes per axis; each refine round re-grids a one-cell
    window around the argmax, shrinking the resolution by (points - 1) / 2.
    """

    lo: tuple
    hi: tuple
    points: int = 201
    refine_rounds: int = 2

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or not 1 <= len(self.lo) <= 2:
            raise ValueError("grid must be 1- or 2-dimensional")
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise ValueError("empty grid box")
        if self.points < 3:
            raise ValueError("need at least 3 points per axis")


@dataclass
class BruteForceResult:
    lam_star: np.ndarray
    lam_sigma_star: np.ndarray
    phi_sigma: float
    lower_at_star: float
    boundary_flag: bool
    resolution: float


def _grid_points(lo, hi, points):
    axes = [np.linspace(l, h, points) for l, h in zip(lo, hi)]
    if len(axes) == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _argmax_refine(problem, phi, objective, grid: GridSpec):
    """Maximize a scalar objective('j' or callable on (J, G)) over the box."""
    lo = np.asarray(grid.lo, dtype=np.float64)
    hi = np.asarray(grid.hi, dtype=np.float64)
    best = None
    boundary = False
    resolution = 0.0
    for round_idx in range(grid.refine_rounds + 1):
        cell = (hi - lo) / (grid.points - 1)
        resolution = float(np.max(cell))
        pts = _grid_points(lo, hi, grid.points)
        j_vals, g_vals = problem.value_curves(phi, pts)
        obj = objective(j_vals, g_vals)
        idx = int(np.argmax(obj))
        best = pts[idx]
        if round_idx == 0:
            on_edge = np.isclose(best, grid.lo) | np.isclose(best, grid.hi)
            boundary = bool(on_edge.any())
        lo = np.maximum(best - cell, grid.lo)
        hi = np.minimum(best + cell, grid.hi)
    return best, float(obj[idx]), boundary, resolution


def brute_force_inner(problem, phi, sigma: float, grid: GridSpec) -> BruteForceResult:
    """Grid argmaxes of J and of J - sigma*G, and the penalty proxy value
    Phi_sigma(phi) = G(lam*_sigma) + (J(lam*) - J(lam*_sigma)) / sigma.

    Needs a problem exposing deterministic ``value_curves``; flags when an
    argmax lands on the box boundary (grid too coarse / box too small).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    lam_star, j_star, edge1, res = _argmax_refine(problem, phi, lambda j, g: j, grid)
    lam_sig, _, edge2, _ = _argmax_refine(problem, phi, lambda j, g: j - sigma * g, grid)
    j_at_sig, g_at_sig = problem.value_curves(phi, lam_sig[None, :])
    phi_sigma = float(g_at_sig[0] + (j_star - j_at_sig[0]) / sigma)
    return BruteForceResult(lam_star=lam_star, lam_sigma_star=lam_sig,
                            phi_sigma=phi_sigma, lower_at_star=j_star,
                            boundary_flag=edge1 or edge2, resolution=res)


def brute_force_proxy_value(problem, phi, sigma: float, grid: GridSpec) -> float:
    return brute_force_inner(problem, phi, sigma, grid).phi_sigma


@dataclass
class ErrorDecomposition:
    """Squared estimation errors of the three outer-gradient pieces against
    exact gradients at the grid argmaxes, plus the sigma-weighted bound
    surrogate term_g + (term_lower_star + term_lower_sigma) / sigma."""

    term_upper: float
    term_lower_star: float
    term_lower_sigma: float
    weighted_sum: float


def error_decomposition(problem, phi, lam_k, lam_k_prime, cfg: PenaltyConfig,
                        grid: GridSpec, rng: RngStream) -> ErrorDecomposition:
    exact = problem.exact_variant()
    bf = brute_force_inner(exact, phi, cfg.sigma, grid)
    ref_upper = exact.grad_upper_phi(phi, bf.lam_sigma_star, cfg, rng)
    ref_lower_star = exact.grad_lower_phi(phi, bf.lam_star, cfg, rng)
    ref_lower_sigma = exact.grad_lower_phi(phi, bf.lam_sigma_star, cfg, rng)

    est_upper = problem.grad_upper_phi(phi, lam_k_prime, cfg, rng.child(0))
    est_lower_star = problem.grad_lower_phi(phi, lam_k, cfg, rng.child(1))
    est_lower_sigma = problem.grad_lower_phi(phi, lam_k_prime, cfg, rng.child(2))

    t_u = float(np.sum((ref_upper - est_upper) ** 2))
    t_s = float(np.sum((ref_lower_star - est_lower_star) ** 2))
    t_g = float(np.sum((ref_lower_sigma - est_lower_sigma) ** 2))
    return ErrorDecomposition(term_upper=t_u, term_lower_star=t_s, term_lower_sigma=t_g,
                              weighted_sum=t_u + (t_s + t_g) / cfg.sigma)


@dataclass
class TruncationCurve:
    horizons: np.ndarray
    errors: np.ndarray
    log_slope: float


def truncation_curve(env, policy, reward, horizons, h_max: int) -> TruncationCurve:
    """Truncation error of the exact-occupancy reward gradient:
    ||grad(H) - grad(h_max)|| per H, with the fitted slope of log error vs H
    (geometric decay at rate gamma gives slope ln gamma)."""
    horizons = np.asarray(sorted(horizons), dtype=np.int64)
    if horizons[-1] > h_max:
        raise ValueError("horizons must not exceed h_max")
    ref = exact_reward_grad(env, policy, reward, horizon=h_max)
    errors = np.array([
        float(np.linalg.norm(exact_reward_grad(env, policy, reward, horizon=int(h)) - ref))
        for h in horizons
    ])
    positive = errors > 1e-300
    if positive.sum() >= 2:
        slope = float(np.polyfit(horizons[positive], np.log(errors[positive]), 1)[0])
    else:
        slope = float("nan")
    return TruncationCurve(horizons=horizons, errors=errors, log_slope=slope)
