"""Continuous-environment paths, alternate outer modes, plots, entry point."""

import subprocess
import sys

import numpy as np
import pytest
import yaml

from penbo.brl import lq1d_brl_instance
from penbo.config import config_from_mapping
from penbo.errors import UnsupportedEnvError
from penbo.estimators import mc_q_estimate, policy_grad_estimate, reward_grad_estimate
from penbo.harness import execute, make_plots, report
from penbo.penalty import PenaltyConfig, run_penalty_method
from penbo.rng import RngStream


@pytest.fixture(autouse=True)
def _out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("PENBO_OUT_ROOT", str(tmp_path / "runs"))
    return tmp_path


def _cfg(**kw):
    base = dict(sigma=0.5, eta=0.1, tau=0.05, tau_prime=0.05, K=2, T=3, n=8, B=16, H=12,
                gamma=0.9)
    base.update(kw)
    return PenaltyConfig(**base)


def test_lq1d_estimators_run_and_are_finite():
    inst = lq1d_brl_instance(gamma=0.9, beta=0.1)
    phi, lam = np.array([0.5, -0.3]), np.array([0.2, 0.1])
    pol = inst.policy.with_params(lam)
    rew = inst.reward.with_params(phi)
    q = mc_q_estimate(inst.env, pol, inst.policy_ref, rew, 0.5, 0.1, 32, 20, RngStream(0))
    assert np.isfinite(q)
    pg = policy_grad_estimate(inst.env, pol, inst.policy_ref, rew, 32, 16, 20, RngStream(1))
    assert pg.grad.shape == (2,) and np.all(np.isfinite(pg.grad))
    rg = reward_grad_estimate(inst.env, pol, inst.policy_ref, rew, 16, 20, RngStream(2))
    assert rg.grad.shape == (2,) and np.all(np.isfinite(rg.grad))


def test_lq1d_values_need_rng_and_are_deterministic():
    inst = lq1d_brl_instance()
    phi, lam = np.zeros(2), np.zeros(2)
    with pytest.raises(ValueError):
        inst.upper_value(phi, lam)
    a = inst.lower_value(phi, lam, rng=RngStream(3))
    b = inst.lower_value(phi, lam, rng=RngStream(3))
    assert a == b
    assert -1.0 <= inst.upper_value(phi, lam, rng=RngStream(4)) <= 0.0


def test_lq1d_exact_oracles_unsupported():
    inst = lq1d_brl_instance().exact_variant()
    with pytest.raises(UnsupportedEnvError):
        inst.grad_lower_lam(np.zeros(2), np.zeros(2), _cfg(), RngStream(0))


def test_lq1d_penalty_run_is_deterministic():
    inst = lq1d_brl_instance(gamma=0.9)
    cfg = _cfg(T=2, K=2, n=8, B=8, H=10)
    rec1 = run_penalty_method(inst, cfg, RngStream(5), regime="brl")
    rec2 = run_penalty_method(inst, cfg, RngStream(5), regime="brl")
    assert rec1.d_norm == rec2.d_norm
    assert rec1.upper_loss == rec2.upper_loss
    assert not rec1.aborted


def test_lq1d_through_harness(tmp_path):
    raw = {
        "schema_version": 1, "kind": "brl", "seed": 2, "out_dir": "lq", "plots": False,
        "env": {"name": "lq1d", "gamma": 0.9},
        "pair_horizon": 4,
        "penalty": {"sigma": 0.5, "eta": 0.1, "tau": 0.05, "tau_prime": 0.05,
                    "K": 2, "T": 2, "n": 8, "B": 8, "H": 10},
    }
    cfg = config_from_mapping(raw)
    out = tmp_path / "lq"
    assert execute(cfg, out) == 0
    assert (out / "record.csv").exists()
    assert "MATCH" in report(out, plots=False)


def test_simplified_outer_mode_learns_on_brl():
    from penbo.brl import chain2_brl_instance
    inst = chain2_brl_instance(gamma=0.9)
    cfg = _cfg(T=4, K=3, n=16, B=64, H=20, outer_mode="simplified", eta=0.05,
               warm_start=False)
    rec = run_penalty_method(inst, cfg, RngStream(0), regime="brl")
    assert len(rec.t) == 4
    assert all(np.isnan(v) for v in rec.inner_dp_norm)
    assert np.all(np.isfinite(rec.final_phi))


def test_eta_backtracking_halves_on_rising_loss():
    # adversarial problem: ascending the upper loss triggers the eta cap
    from penbo.problems import BilevelProblem

    class Riser(BilevelProblem):
        phi_dim = lam_dim = 1

        def __init__(self):
            self.calls = 0

        def upper_value(self, phi, lam, rng=None):
            self.calls += 1
            return float(self.calls)  # strictly rising recorded loss

        def lower_value(self, phi, lam, rng=None):
            return 0.0

        def grad_upper_phi(self, phi, lam, cfg, rng):
            return np.array([1.0])

        grad_upper_lam = grad_upper_phi
        grad_lower_phi = grad_upper_phi
        grad_lower_lam = grad_upper_phi

    cfg = _cfg(T=12, K=1, eta=0.8, eta_backtracking=True, sigma=0.5)
    rec = run_penalty_method(Riser(), cfg, RngStream(0), regime="standard")
    steps = np.abs(np.diff([p[0] for p in rec.phi]))
    assert steps[-1] < steps[0]  # the step size was halved at least once


def test_plots_written_and_stable(tmp_path):
    raw = {
        "schema_version": 1, "kind": "standard", "seed": 0, "out_dir": "p",
        "plots": True, "instance": "quad", "noise": {"upper": 0.2, "lower": 0.2},
        "phi0": [2.0],
        "penalty": {"sigma": 0.3, "eta": 0.1, "tau": 0.05, "tau_prime": 0.05,
                    "K": 3, "T": 4, "B": 4},
    }
    cfg = config_from_mapping(raw)
    out = tmp_path / "p"
    execute(cfg, out)
    assert (out / "grad_norm.png").exists()
    assert (out / "upper_loss.png").exists()
    first = (out / "grad_norm.png").read_bytes()
    make_plots(out)
    assert (out / "grad_norm.png").read_bytes() == first  # regeneration is stable


def test_lemma_plot_and_report(tmp_path):
    raw = {
        "schema_version": 1, "kind": "lemma1", "seed": 0, "out_dir": "lm", "plots": True,
        "lemma1": {"fn": "quad", "eta": 0.25, "steps": 20, "seeds": 3,
                   "bias": 0.05, "noise": 0.0, "x0": 1.0, "smooth_l": 2.0,
                   "pl_lo": -2.0, "pl_hi": 2.0, "pl_step": 1e-2},
    }
    cfg = config_from_mapping(raw)
    out = tmp_path / "lm"
    execute(cfg, out)
    assert (out / "gap_envelope.png").exists()
    text = report(out, plots=False)
    assert "empirical floor" in text and "theoretical floor" in text


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "penbo.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "gradcheck" in proc.stdout
