"""Biased SGD on PL functions: executable convergence certificates.

For an L-smooth function with PL constant mu (||grad f||^2 >= 2 mu (f - f*))
and a gradient oracle whose mean-squared error is uniformly below beta, SGD
with step eta <= 1/L keeps the optimality gap under the envelope

    (1 - mu*eta)^t * gap_0 + (L*eta^2 + eta) * beta / (2*mu*eta).

``run_biased_sgd`` records the gap and that envelope; ``measure_pl_constant``
estimates the PL ratio inf ||grad f||^2 / (f - f*) on a grid (note the ratio
equals 2*mu in the convention above).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import RngStream
from .vecs import as_vec

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class ScalarPlFn:
    """A scalar function with its gradient and known minimum."""

    fn: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    f_star: float
    minimizer: float


def quadratic_fn() -> ScalarPlFn:
    return ScalarPlFn(fn=lambda x: float(x[0] ** 2),
                      grad=lambda x: np.array([2.0 * x[0]]),
                      f_star=0.0, minimizer=0.0)


def quartic_fn() -> ScalarPlFn:
    return ScalarPlFn(fn=lambda x: float(x[0] ** 4),
                      grad=lambda x: np.array([4.0 * x[0] ** 3]),
                      f_star=0.0, minimizer=0.0)


def sinsq_fn() -> ScalarPlFn:
    """x^2 + 3 sin^2 x: non-convex, PL, L = 8."""
    return ScalarPlFn(fn=lambda x: float(x[0] ** 2 + 3.0 * np.sin(x[0]) ** 2),
                      grad=lambda x: np.array([2.0 * x[0] + 3.0 * np.sin(2.0 * x[0])]),
                      f_star=0.0, minimizer=0.0)


@dataclass(frozen=True)
class BiasedOracle:
    """grad f + deterministic bias field + isotropic Gaussian noise."""

    grad: Callable[[np.ndarray], np.ndarray]
    bias_fn: Callable[[np.ndarray], np.ndarray] = lambda x: np.zeros_like(x)
    noise_std: float = 0.0

    def draw(self, x: np.ndarray, gen: np.random.Generator) -> np.ndarray:
        g = self.grad(x) + self.bias_fn(x)
        if self.noise_std > 0.0:
            g = g + gen.normal(0.0, self.noise_std, size=g.shape)
        return g

    def mse_bound(self, points: np.ndarray) -> float:
        """sup over the given points of ||bias||^2 + dim * noise_var; this is
        the beta that must dominate E||oracle - grad||^2 uniformly."""
        worst = 0.0
        for x in np.atleast_2d(points):
            x = as_vec(x)
            worst = max(worst, float(np.sum(self.bias_fn(x) ** 2)))
        dim = np.atleast_2d(points).shape[1]
        return worst + dim * self.noise_std**2


def constant_bias_oracle(fn: ScalarPlFn, bias: float, noise_std: float) -> BiasedOracle:
    return BiasedOracle(grad=fn.grad,
                        bias_fn=lambda x, b=bias: np.full_like(x, b),
                        noise_std=noise_std)


def lemma_envelope(step: np.ndarray, gap0: float, mu: float, L: float, eta: float,
                   beta: float) -> np.ndarray:
    floor = (L * eta**2 + eta) * beta / (2.0 * mu * eta)
    return (1.0 - mu * eta) ** step * gap0 + floor


@dataclass
class LemmaReport:
    """Gap trajectory against the theoretical envelope."""

    mu: float
    L: float
    eta: float
    beta: float
    gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    envelope: np.ndarray = field(default_factory=lambda: np.zeros(0))
    violations: int = 0
    floor_estimate: float = 0.0
    theory_floor: float = 0.0
    diverged: bool = False

    @property
    def steps(self) -> int:
        return len(self.gaps)


def run_biased_sgd(fn: ScalarPlFn, oracle: BiasedOracle, x0, eta: float, steps: int,
                   rng: RngStream, mu: float, L: float, beta: float,
                   floor_window: int = 100) -> LemmaReport:
    """x <- x - eta * oracle(x); records gap_t = f(x_t) - f* for t = 1..steps.

    Requires eta <= 1/L.  Aborts (diverged flag, partial record) if the gap
    exceeds 1e6 times the initial gap.  The floor estimate is the mean gap
    over the trailing window.
    """
    if eta > 1.0 / L:
        raise ValueError(f"step size {eta} exceeds 1/L = {1.0 / L}")
    x = as_vec(x0).copy()
    gen = rng.generator()
    gap0 = fn.fn(x) - fn.f_star
    gaps = np.empty(steps)
    report = LemmaReport(mu=mu, L=L, eta=eta, beta=beta,
                         theory_floor=(L * eta**2 + eta) * beta / (2.0 * mu * eta))
    for t in range(steps):
        x = x - eta * oracle.draw(x, gen)
        gaps[t] = fn.fn(x) - fn.f_star
        if gaps[t] > DIVERGENCE_FACTOR * max(gap0, 1.0):
            report.diverged = True
            gaps = gaps[: t + 1]
            break
    report.gaps = gaps
    t_axis = np.arange(1, len(gaps) + 1)
    report.envelope = lemma_envelope(t_axis, gap0, mu, L, eta, beta)
    report.violations = int((gaps > report.envelope).sum())
    tail = gaps[-min(floor_window, len(gaps)):]
    report.floor_estimate = float(tail.mean())
    return report


def mean_gap_trajectory(fn: ScalarPlFn, oracle: BiasedOracle, x0, eta: float, steps: int,
                        n_seeds: int, rng: RngStream, mu: float, L: float,
                        beta: float) -> LemmaReport:
    """Seed-averaged report: the envelope bounds the gap in expectation, so
    certification averages trajectories rather than testing per seed."""
    total = np.zeros(steps)
    for s in range(n_seeds):
        rep = run_biased_sgd(fn, oracle, x0, eta, steps, rng.child(s), mu, L, beta)
        if rep.diverged or rep.steps != steps:
            raise RuntimeError(f"seed {s} diverged; cannot certify")
        total += rep.gaps
    mean = total / n_seeds
    gap0 = fn.fn(as_vec(x0)) - fn.f_star
    report = LemmaReport(mu=mu, L=L, eta=eta, beta=beta,
                         theory_floor=(L * eta**2 + eta) * beta / (2.0 * mu * eta))
    report.gaps = mean
    report.envelope = lemma_envelope(np.arange(1, steps + 1), gap0, mu, L, eta, beta)
    report.violations = int((mean > report.envelope).sum())
    report.floor_estimate = float(mean[-min(100, steps):].mean())
    return report


@dataclass(frozen=True)
class PlMeasurement:
    value: float
    not_pl_on_box: bool


def measure_pl_constant(fn: ScalarPlFn, lo: float, hi: float, step: float) -> PlMeasurement:
    """Grid infimum of ||grad f||^2 / (f - f*), excluding gaps below 1e-12.

    Flags ``not_pl_on_box`` when the infimum collapses near the exclusion
    boundary (ratio at small gaps far below the ratio at well-separated
    points, as for x^4 whose ratio vanishes at the minimum).
    """
    xs = np.arange(lo, hi + step / 2, step)
    vals = np.array([fn.fn(np.array([x])) for x in xs])
    grads = np.array([fn.grad(np.array([x]))[0] for x in xs])
    gap = vals - fn.f_star
    ok = gap >= 1e-12
    if not ok.any():
        raise ValueError("no admissible grid points (all gaps below 1e-12)")
    ratio = grads[ok] ** 2 / gap[ok]
    value = float(ratio.min())
    far = gap[ok] >= 1e-2 * gap.max()
    flagged = bool(far.any() and value < 1e-2 * ratio[far].min())
    return PlMeasurement(value=value, not_pl_on_box=flagged)


def write_lemma_csv(report: LemmaReport, path) -> None:
    """CSV with header, one row per step, and a trailing floor-summary row."""
    with open(path, "w") as fh:
        fh.write("step,gap,envelope\n")
        for t in range(report.steps):
            fh.write(f"{t + 1},{float(report.gaps[t])!r},{float(report.envelope[t])!r}\n")
        fh.write(f"floor,{float(report.floor_estimate)!r},{float(report.theory_floor)!r}\n")
