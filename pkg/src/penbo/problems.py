"""Abstract bilevel problem interface.

A bilevel problem bundles an upper objective (minimized over phi), a lower
objective (maximized over lam) and stochastic oracles for the four gradients
the penalty method needs.  Oracles are pure given their inputs and stream, so
evaluations with equal streams share randomness (common random numbers) and
may run concurrently on distinct streams.
"""

from __future__ import annotations

import abc

import numpy as np

from .rng import RngStream


class BilevelProblem(abc.ABC):
    """Upper objective G(phi, lam) to minimize; lower return J(phi, lam) to maximize."""

    phi_dim: int
    lam_dim: int

    @abc.abstractmethod
    def upper_value(self, phi, lam, rng: RngStream | None = None) -> float:
        """G(phi, lam); deterministic where an exact evaluator exists."""

    @abc.abstractmethod
    def lower_value(self, phi, lam, rng: RngStream | None = None) -> float:
        """J(phi, lam); deterministic where an exact evaluator exists."""

    def penalized_lower_value(self, phi, lam, sigma: float, rng: RngStream | None = None) -> float:
        """h_sigma = J - sigma * G, the objective whose maximizer the second
        inner stream tracks."""
        return self.lower_value(phi, lam, rng) - sigma * self.upper_value(phi, lam, rng)

    @abc.abstractmethod
    def grad_upper_phi(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        """Estimate of grad_phi G(phi, lam)."""

    @abc.abstractmethod
    def grad_upper_lam(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        """Estimate of grad_lam G(phi, lam)."""

    @abc.abstractmethod
    def grad_lower_phi(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        """Estimate of grad_phi J(phi, lam)."""

    @abc.abstractmethod
    def grad_lower_lam(self, phi, lam, cfg, rng: RngStream) -> np.ndarray:
        """Estimate of grad_lam J(phi, lam)."""

    def init_phi(self) -> np.ndarray:
        return np.zeros(self.phi_dim)

    def init_lam(self) -> np.ndarray:
        return np.zeros(self.lam_dim)

    def clip_lam(self, lam: np.ndarray) -> np.ndarray:
        """Project onto the compact policy-parameter set; identity when the
        problem leaves lam unconstrained."""
        return lam
