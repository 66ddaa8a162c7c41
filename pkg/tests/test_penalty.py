import math

import numpy as np
import pytest

from penbo.errors import ConfigError, NonFiniteError
from penbo.penalty import (PenaltyConfig, RunRecord, ScheduleConstants, inner_loops,
                           penalty_hypergradient, run_penalty_method, schedule_from_epsilon,
                           write_record_csv)
from penbo.problems import BilevelProblem
from penbo.rng import RngStream
from penbo.synthetic import make_pl_instance


def _cfg(**kw):
    base = dict(sigma=0.2, eta=0.1, tau=0.05, tau_prime=0.05, K=5, T=4, n=2, B=4, H=6)
    base.update(kw)
    return PenaltyConfig(**base)


def test_config_validation():
    with pytest.raises(ConfigError):
        _cfg(sigma=-0.1)
    with pytest.raises(ConfigError):
        _cfg(sigma=2.0, sigma0=1.0)
    with pytest.raises(ConfigError):
        _cfg(B=0)
    with pytest.raises(ConfigError):
        _cfg(K=-1)
    with pytest.raises(ConfigError):
        _cfg(penalty_term_sign="sometimes")
    _cfg(eta=0.0, K=0, T=0)  # boundary values are allowed


def test_sample_total_formulas():
    cfg = _cfg(K=3, T=7, n=5, B=11, H=13)
    assert cfg.sample_total("brl") == 7 * (3 * (5 + 11 * 13) + 11 * 13)
    assert cfg.sample_total("standard") == 11 * 3 * 7 + 11 * 7
    with pytest.raises(ConfigError):
        cfg.sample_total("other")


def test_schedule_halving_epsilon():
    base = _cfg()
    consts = ScheduleConstants(c_sigma=0.25, c_B=2.0, c_n=3.0, c_T=1.5, c_K=4.0, c_H=5.0)
    for eps in (0.4, 0.2, 0.1):
        a = schedule_from_epsilon(eps, "brl", base, consts)
        b = schedule_from_epsilon(eps / 2, "brl", base, consts)
        assert b.B == math.ceil(consts.c_B / (eps / 2) ** 2)
        assert a.B == math.ceil(consts.c_B / eps**2)
        assert b.n == math.ceil(consts.c_n / (eps / 2) ** 2)
        assert b.T == math.ceil(consts.c_T / (eps / 2))
        # K and H grow by about c * ln 2 under halving
        assert abs((b.K - a.K) - consts.c_K * math.log(2)) <= 1.0
        assert abs((b.H - a.H) - consts.c_H * math.log(2)) <= 1.0
        assert np.isclose(a.sigma, math.sqrt(consts.c_sigma * eps))


def test_schedule_boundary_and_errors():
    base = _cfg()
    unit = ScheduleConstants(c_sigma=1.0, c_B=1.0, c_n=1.0, c_T=1.0, c_K=1.0, c_H=1.0)
    cfg = schedule_from_epsilon(1.0, "brl", base, unit)
    assert cfg.B == 1 and cfg.n == 1 and cfg.T == 1 and cfg.K == 1 and cfg.H == 1
    with pytest.raises(ConfigError):
        schedule_from_epsilon(0.0, "brl", base, unit)
    with pytest.raises(ConfigError):
        schedule_from_epsilon(1.5, "brl", base, unit)
    # standard regime leaves n alone
    cfg2 = schedule_from_epsilon(0.5, "standard", base, unit)
    assert cfg2.n == base.n


def test_inner_loops_zero_iterations_is_identity():
    quad = make_pl_instance("quad")
    cfg = _cfg(K=0)
    res = inner_loops(quad, np.array([0.3]), np.array([1.2]), np.array([-0.4]),
                      cfg, RngStream(0))
    assert np.array_equal(res.lam, [1.2])
    assert np.array_equal(res.lam_prime, [-0.4])


def test_inner_loops_sigma_zero_streams_coincide():
    prob = make_pl_instance("quad").with_noise(0.3, 0.3)
    cfg = _cfg(sigma=0.0, K=25, tau=0.07, tau_prime=0.07)
    res = inner_loops(prob, np.array([0.5]), np.zeros(1), np.zeros(1), cfg, RngStream(3))
    assert np.array_equal(res.lam, res.lam_prime)  # bit-exact under shared streams


def test_inner_steps_have_exact_length():
    prob = make_pl_instance("quad").with_noise(0.2, 0.2)
    cfg = _cfg(K=1, tau=0.03, tau_prime=0.05)
    lam = np.array([1.0])
    lamp = np.array([-1.0])
    res = inner_loops(prob, np.array([0.0]), lam, lamp, cfg, RngStream(1))
    assert np.isclose(np.linalg.norm(res.lam - lam), 0.03, atol=1e-15)
    assert np.isclose(np.linalg.norm(res.lam_prime - lamp), 0.05, atol=1e-15)


def test_inner_skips_zero_gradient():
    quad = make_pl_instance("quad")
    cfg = _cfg(K=3)
    # lam at the exact maximizer of J: gradient is exactly zero, steps skipped
    res = inner_loops(quad, np.array([0.7]), np.array([0.7]), np.array([0.7]),
                      cfg, RngStream(0))
    assert np.array_equal(res.lam, [0.7])


def test_hypergradient_cancellation_and_sigma_guard():
    prob = make_pl_instance("quad").with_noise(0.5, 0.5)
    cfg = _cfg(sigma=0.3)
    lam = np.array([0.9])
    hg = penalty_hypergradient(prob, np.array([0.4]), lam, lam, cfg, RngStream(7))
    g_only = prob.grad_upper_phi(np.array([0.4]), lam, cfg, RngStream(7).child(0))
    assert np.array_equal(hg, g_only)  # penalty difference cancels exactly under CRN
    with pytest.raises(ConfigError):
        penalty_hypergradient(prob, np.array([0.4]), lam, lam, _cfg(sigma=0.0), RngStream(0))


def test_hypergradient_sign_flag():
    quad = make_pl_instance("quad")
    cfg_plus = _cfg(sigma=0.25)
    cfg_minus = _cfg(sigma=0.25, penalty_term_sign="minus")
    phi = np.array([0.3])
    lam, lamp = np.array([0.31]), np.array([0.35])
    plus = penalty_hypergradient(quad, phi, lam, lamp, cfg_plus, RngStream(0))
    minus = penalty_hypergradient(quad, phi, lam, lamp, cfg_minus, RngStream(0))
    g = quad.grad_upper_phi(phi, lamp, cfg_plus, RngStream(0).child(0))
    assert np.allclose(plus + minus, 2 * g, atol=1e-14)
    assert not np.allclose(plus, minus)


def test_run_zero_iterations_empty_record():
    quad = make_pl_instance("quad")
    rec = run_penalty_method(quad, _cfg(T=0), RngStream(0), regime="standard")
    assert rec.t == [] and rec.sample_total == 0
    assert np.array_equal(rec.final_phi, quad.init_phi())


def test_run_eta_zero_keeps_phi_fixed():
    prob = make_pl_instance("quad").with_noise(0.2, 0.2)
    rec = run_penalty_method(prob, _cfg(eta=0.0, T=5), RngStream(0), regime="standard",
                             phi0=np.array([2.0]))
    assert all(np.array_equal(p, [2.0]) for p in rec.phi)
    assert len(rec.inner_d_norm) == 5
    assert all(np.isfinite(v) for v in rec.inner_d_norm)


def test_run_deterministic_and_accounting():
    prob = make_pl_instance("sinsq").with_noise(0.4, 0.4)
    cfg = _cfg(T=6, K=4, B=9)
    rec1 = run_penalty_method(prob, cfg, RngStream(42), regime="standard")
    rec2 = run_penalty_method(prob, cfg, RngStream(42), regime="standard")
    assert rec1.d_norm == rec2.d_norm
    assert all(np.array_equal(a, b) for a, b in zip(rec1.phi, rec2.phi))
    assert rec1.sample_total == cfg.sample_total("standard")


def test_accounting_matches_formula_for_random_configs():
    gen = np.random.default_rng(0)
    quad = make_pl_instance("quad")
    for _ in range(10):
        cfg = _cfg(K=int(gen.integers(1, 5)), T=int(gen.integers(1, 5)),
                   n=int(gen.integers(1, 6)), B=int(gen.integers(1, 6)),
                   H=int(gen.integers(1, 6)))
        for regime in ("brl", "standard"):
            rec = run_penalty_method(quad, cfg, RngStream(1), regime=regime)
            assert rec.sample_total == cfg.sample_total(regime)


def test_warm_and_cold_start_both_progress():
    prob = make_pl_instance("quad").with_noise(0.1, 0.1)
    for warm in (True, False):
        cfg = _cfg(T=10, K=20, tau=0.05, tau_prime=0.05, eta=0.1,
                   warm_start=warm, sigma=0.25)
        rec = run_penalty_method(prob, cfg, RngStream(2), regime="standard",
                                 phi0=np.array([2.5]))
        assert len(rec.t) == 10
        assert rec.sample_total == cfg.sample_total("standard")
        assert abs(rec.final_phi[0] - 1.0) < abs(2.5 - 1.0)


def test_simplified_outer_mode_runs():
    prob = make_pl_instance("quad").with_noise(0.1, 0.1)
    cfg = _cfg(T=4, outer_mode="simplified")
    rec = run_penalty_method(prob, cfg, RngStream(0), regime="standard")
    assert len(rec.t) == 4
    assert all(math.isnan(v) for v in rec.inner_dp_norm)


class _NanProblem(BilevelProblem):
    phi_dim = 1
    lam_dim = 1

    def upper_value(self, phi, lam, rng=None):
        return 0.0

    def lower_value(self, phi, lam, rng=None):
        return 0.0

    def grad_upper_phi(self, phi, lam, cfg, rng):
        return np.array([0.0])

    def grad_upper_lam(self, phi, lam, cfg, rng):
        return np.array([0.0])

    def grad_lower_phi(self, phi, lam, cfg, rng):
        return np.array([0.0])

    def grad_lower_lam(self, phi, lam, cfg, rng):
        return np.array([np.nan])


def test_non_finite_gradient_aborts_with_partial_record():
    rec = run_penalty_method(_NanProblem(), _cfg(T=3), RngStream(0), regime="standard")
    assert rec.aborted
    assert "non-finite" in rec.abort_reason
    assert rec.t == []
    with pytest.raises(NonFiniteError):
        inner_loops(_NanProblem(), np.zeros(1), np.zeros(1), np.zeros(1), _cfg(), RngStream(0))


def test_record_csv_round_trip(tmp_path):
    prob = make_pl_instance("quad").with_noise(0.2, 0.2)
    rec = run_penalty_method(prob, _cfg(T=3), RngStream(5), regime="standard",
                             hyper_grad_oracle=lambda p: 4 * (p - 1))
    path = tmp_path / "record.csv"
    write_record_csv(rec, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,phi_0,d_norm,upper_loss,inner_d_norm,inner_dp_norm,samples_cum,hyper_sq"
    assert len(lines) == 4
    # values parse back exactly through repr round-trip
    row = lines[1].split(",")
    assert float(row[2]) == rec.d_norm[0]
