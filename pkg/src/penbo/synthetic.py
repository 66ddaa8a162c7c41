"""Closed-form bilevel instances with non-convex PL lower levels.

Two scalar instances share the upper loss G = (phi-1)^2 + (lam-1)^2:

* ``quad``:  J = -(lam - phi)^2, strongly concave in lam.
* ``sinsq``: J = -((lam-phi)^2 + 3 sin^2(lam-phi)), non-convex in lam but PL
  for maximization with a grid-measured constant.

Gradient oracles return the exact gradient plus averaged isotropic Gaussian
noise, so the unbiased-oracle assumptions hold by construction.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .penalty import PenaltyConfig, RunRecord, ScheduleConstants, run_penalty_method, schedule_from_epsilon
from .problems import BilevelProblem
from .rng import RngStream
from .vecs import as_vec


@dataclass(frozen=True)
class SyntheticProblem(BilevelProblem):
    name: str
    upper_fn: Callable
    lower_fn: Callable
    grad_upper_phi_fn: Callable
    grad_upper_lam_fn: Callable
    grad_lower_phi_fn: Callable
    grad_lower_lam_fn: Callable
    noise_g: float = 0.0
    noise_j: float = 0.0
    pl_mu: float = 0.0       # measured inf ||grad_lam J||^2 / (J* - J)
    smooth_l: float = 0.0
    phi_dim: int = 1
    lam_dim: int = 1

    def with_noise(self, noise_g: float, noise_j: float) -> "SyntheticProblem":
        return replace(self, noise_g=noise_g, noise_j=noise_j)

    def upper_value(self, phi, lam, rng: RngStream | None = None) -> float:
        return float(self.upper_fn(as_vec(phi), as_vec(lam)))

    def lower_value(self, phi, lam, rng: RngStream | None = None) -> float:
        return float(self.lower_fn(as_vec(phi), as_vec(lam)))

    def _noisy(self, exact: np.ndarray, stdev: float, batch: int, rng: RngStream) -> np.ndarray:
        if stdev == 0.0:
            return exact
        gen = rng.generator()
        draws = exact[None, :] + gen.normal(0.0, stdev, size=(batch, exact.shape[0]))
        return draws.mean(axis=0)

    def grad_upper_phi(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        return self._noisy(as_vec(self.grad_upper_phi_fn(as_vec(phi), as_vec(lam))),
                           self.noise_g, cfg.B, rng)

    def grad_upper_lam(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        return self._noisy(as_vec(self.grad_upper_lam_fn(as_vec(phi), as_vec(lam))),
                           self.noise_g, cfg.B, rng)

    def grad_lower_phi(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        return self._noisy(as_vec(self.grad_lower_phi_fn(as_vec(phi), as_vec(lam))),
                           self.noise_j, cfg.B, rng)

    def grad_lower_lam(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        return self._noisy(as_vec(self.grad_lower_lam_fn(as_vec(phi), as_vec(lam))),
                           self.noise_j, cfg.B, rng)

    def exact_grad(self, which: str, phi, lam) -> np.ndarray:
        fns = {"upper_phi": self.grad_upper_phi_fn, "upper_lam": self.grad_upper_lam_fn,
               "lower_phi": self.grad_lower_phi_fn, "lower_lam": self.grad_lower_lam_fn}
        return as_vec(fns[which](as_vec(phi), as_vec(lam)))

    def value_curves(self, phi, lam_points: np.ndarray):
        """Vectorized (J, G) over an (M, 1) array of lam points (grid sweeps)."""
        p = float(as_vec(phi)[0])
        lam = np.asarray(lam_points, dtype=np.float64).reshape(-1)
        u = lam - p
        if self.name == "quad":
            j = -(u**2)
        elif self.name == "sinsq":
            j = -(u**2 + 3.0 * np.sin(u) ** 2)
        else:
            raise ValueError(f"no vectorized curve for instance {self.name!r}")
        g = (p - 1.0) ** 2 + (lam - 1.0) ** 2
        return j, g


def noisy_grad(problem: SyntheticProblem, which: str, phi, lam, batch: int,
               rng: RngStream) -> np.ndarray:
    """Average of ``batch`` independent noisy draws of the named gradient.

    ``which`` is one of upper_phi, upper_lam, lower_phi, lower_lam.
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    cfg_like = _BatchOnly(batch)
    method = {"upper_phi": problem.grad_upper_phi, "upper_lam": problem.grad_upper_lam,
              "lower_phi": problem.grad_lower_phi, "lower_lam": problem.grad_lower_lam}
    try:
        fn = method[which]
    except KeyError:
        raise ValueError(f"unknown gradient name {which!r}") from None
    return fn(phi, lam, cfg_like, rng)


@dataclass(frozen=True)
class _BatchOnly:
    B: int


def measure_lower_pl_ratio(lower_fn, grad_fn, phi: float, lo: float, hi: float,
                           step: float = 1e-4) -> float:
    """inf over a lam grid of ||grad_lam J||^2 / (max J - J), skipping points
    within 1e-12 of the maximum."""
    lam = np.arange(lo, hi + step / 2, step)
    phi_vec = np.full(1, phi)
    vals = np.array([lower_fn(phi_vec, np.array([x])) for x in lam])
    grads = np.array([grad_fn(phi_vec, np.array([x]))[0] for x in lam])
    gap = vals.max() - vals
    ok = gap >= 1e-12
    return float((grads[ok] ** 2 / gap[ok]).min())


def measure_penalized_pl_ratio(problem: SyntheticProblem, phi: float, sigma: float,
                               lo: float, hi: float, step: float = 1e-3) -> float:
    """Grid infimum of ||grad_lam h_sigma||^2 / (h* - h) with h = J - sigma*G,
    skipping points within 1e-12 of the maximum (the penalized analogue of the
    lower-level PL measurement)."""
    lam = np.arange(lo, hi + step / 2, step)
    j, g = problem.value_curves(np.array([phi]), lam[:, None])
    h = j - sigma * g
    phi_vec = np.array([phi])
    grads = np.array([
        problem.grad_lower_lam_fn(phi_vec, np.array([x]))[0]
        - sigma * problem.grad_upper_lam_fn(phi_vec, np.array([x]))[0]
        for x in lam
    ])
    gap = h.max() - h
    ok = gap >= 1e-12
    return float((grads[ok] ** 2 / gap[ok]).min())


@functools.lru_cache(maxsize=None)
def make_pl_instance(name: str) -> SyntheticProblem:
    if name == "quad":
        return SyntheticProblem(
            name="quad",
            upper_fn=lambda p, l: (p[0] - 1.0) ** 2 + (l[0] - 1.0) ** 2,
            lower_fn=lambda p, l: -((l[0] - p[0]) ** 2),
            grad_upper_phi_fn=lambda p, l: np.array([2.0 * (p[0] - 1.0)]),
            grad_upper_lam_fn=lambda p, l: np.array([2.0 * (l[0] - 1.0)]),
            grad_lower_phi_fn=lambda p, l: np.array([2.0 * (l[0] - p[0])]),
            grad_lower_lam_fn=lambda p, l: np.array([-2.0 * (l[0] - p[0])]),
            pl_mu=4.0,  # ||-2u||^2 / u^2 exactly
            smooth_l=2.0,
        )
    if name == "sinsq":
        def lower(p, l):
            u = l[0] - p[0]
            return -(u * u + 3.0 * np.sin(u) ** 2)

        def dlower_du(u):
            return 2.0 * u + 3.0 * np.sin(2.0 * u)

        inst = SyntheticProblem(
            name="sinsq",
            upper_fn=lambda p, l: (p[0] - 1.0) ** 2 + (l[0] - 1.0) ** 2,
            lower_fn=lower,
            grad_upper_phi_fn=lambda p, l: np.array([2.0 * (p[0] - 1.0)]),
            grad_upper_lam_fn=lambda p, l: np.array([2.0 * (l[0] - 1.0)]),
            grad_lower_phi_fn=lambda p, l: np.array([dlower_du(l[0] - p[0])]),
            grad_lower_lam_fn=lambda p, l: np.array([-dlower_du(l[0] - p[0])]),
            smooth_l=8.0,
        )
        mu = measure_lower_pl_ratio(inst.lower_fn, inst.grad_lower_lam_fn, 0.0, -10.0, 10.0)
        return replace(inst, pl_mu=mu)
    raise ValueError(f"unknown instance {name!r}; expected 'quad' or 'sinsq'")


def hyper_grad_quad(phi) -> np.ndarray:
    """Closed-form grad of Phi(phi) = G(phi, argmax_lam J) = 2 (phi-1)^2."""
    return np.array([4.0 * (as_vec(phi)[0] - 1.0)])


def hyper_grad_grid(problem: SyntheticProblem, phi, lo: float = -12.0, hi: float = 12.0,
                    step: float = 1e-4, fd_eps: float = 1e-4) -> np.ndarray:
    """Grid-based hyper-gradient: central differences of G(phi, argmax_lam J)."""
    def hyper(p: float) -> float:
        lam = np.arange(lo, hi + step / 2, step)
        vals = -((lam - p) ** 2 + (3.0 * np.sin(lam - p) ** 2 if problem.name == "sinsq" else 0.0))
        best = lam[int(np.argmax(vals))]
        return problem.upper_value(np.array([p]), np.array([best]))

    p0 = float(as_vec(phi)[0])
    return np.array([(hyper(p0 + fd_eps) - hyper(p0 - fd_eps)) / (2.0 * fd_eps)])


def run_epsilon_schedule(problem: SyntheticProblem, eps: float, base: PenaltyConfig,
                         rng: RngStream, constants: ScheduleConstants = ScheduleConstants(),
                         phi0=None) -> RunRecord:
    """Target-accuracy run: schedule the config from eps (standard regime),
    run the penalty method on the synthetic oracles, and record the true
    squared hyper-gradient norm per iterate (closed form for quad, grid for
    sinsq)."""
    cfg = schedule_from_epsilon(eps, "standard", base, constants)
    oracle = hyper_grad_quad if problem.name == "quad" else (
        lambda p: hyper_grad_grid(problem, p))
    return run_penalty_method(problem, cfg, rng, regime="standard", phi0=phi0,
                              hyper_grad_oracle=oracle)


def mean_hyper_sq(record: RunRecord) -> float:
    """(1/T) sum_t ||grad Phi(phi_t)||^2 from a recorded run."""
    vals = record.extra.get("hyper_sq", [])
    if not vals:
        raise ValueError("record has no hyper_sq column")
    return float(np.mean(vals))
