#!/usr/bin/env python3
"""Sweep sigma on the quad instance with exact oracles and print how the
penalty hypergradient approaches the closed-form hyper-gradient 4 (phi - 1)."""

import numpy as np

from penbo.diagnostics import GridSpec, brute_force_proxy_value, central_fd_grad
from penbo.penalty import PenaltyConfig, inner_loops, penalty_hypergradient
from penbo.rng import RngStream
from penbo.synthetic import hyper_grad_quad, make_pl_instance


def main():
    quad = make_pl_instance("quad")
    grid = GridSpec(lo=(-3.0,), hi=(3.0,), points=301, refine_rounds=3)
    phi = np.array([0.5])
    rng = RngStream(0)
    lam = lam_p = np.zeros(1)
    print(f"phi = {phi[0]}, closed-form hyper-gradient = {hyper_grad_quad(phi)[0]:+.6f}")
    for sigma in (0.4, 0.2, 0.1, 0.05, 0.025):
        cfg = PenaltyConfig(sigma=sigma, eta=0.0, tau=5e-5, tau_prime=5e-5,
                            K=40_000, T=1, B=1)
        inner = inner_loops(quad, phi, lam, lam_p, cfg, rng)
        lam, lam_p = inner.lam, inner.lam_prime  # warm start across sigmas
        hg = penalty_hypergradient(quad, phi, inner.lam, inner.lam_prime, cfg, rng)
        fd = central_fd_grad(lambda p: brute_force_proxy_value(quad, p, sigma, grid),
                             phi, 1e-4)
        dev = abs(hg[0] - hyper_grad_quad(phi)[0])
        print(f"sigma={sigma:6.3f}: hypergrad={hg[0]:+.6f}  fd(brute Phi_sigma)={fd[0]:+.6f}"
              f"  |dev from closed form|={dev:.4f}")


if __name__ == "__main__":
    main()
