"""First-order penalty method for bilevel problems.

The outer loop descends the proxy objective
Phi_sigma(phi) = min_lam [G(phi, lam) + (J(phi, lam*(phi)) - J(phi, lam)) / sigma]
using only first-order oracles.  Two inner streams of normalized ascent steps
track lam*(phi) (maximizing J) and lam*_sigma(phi) (maximizing J - sigma*G);
the outer direction combines grad_phi G at the penalized stream with the
sigma-scaled difference of grad_phi J between the two streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, NonFiniteError
from .problems import BilevelProblem
from .rng import RngStream
from .vecs import as_vec, norm

ZERO_GRAD_TOL = 1e-12


@dataclass(frozen=True)
class PenaltyConfig:
    """Full hyperparameter tuple of the penalty method.

    ``penalty_term_sign`` selects the sign of the (1/sigma) J-difference in
    the outer direction: "plus" is the derivation-consistent default, "minus"
    the alternate listed sign kept for comparison runs.  ``outer_mode``
    "simplified" drops the penalized inner stream and adds (1/sigma) times the
    best-response value gradient to the outer loss instead (heuristic
    upper-bound variant).
    """

    sigma: float
    eta: float
    tau: float
    tau_prime: float
    K: int
    T: int
    n: int = 1
    B: int = 1
    H: int = 1
    gamma: float = 0.9
    beta: float = 0.0
    warm_start: bool = True
    sigma0: float = 1.0
    penalty_term_sign: str = "plus"
    outer_mode: str = "penalty"
    eta_backtracking: bool = False

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.sigma > self.sigma0:
            raise ConfigError(f"sigma {self.sigma} exceeds ceiling sigma0 {self.sigma0}")
        if min(self.eta, self.tau, self.tau_prime) < 0:
            raise ConfigError("step sizes must be >= 0")
        if self.K < 0 or self.T < 0:
            raise ConfigError("K and T must be >= 0")
        if min(self.n, self.B, self.H) < 1:
            raise ConfigError("n, B and H must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")
        if self.penalty_term_sign not in ("plus", "minus"):
            raise ConfigError("penalty_term_sign must be 'plus' or 'minus'")
        if self.outer_mode not in ("penalty", "simplified"):
            raise ConfigError("outer_mode must be 'penalty' or 'simplified'")

    def sample_total(self, regime: str) -> int:
        """Declared per-run sample count.

        brl: n*K*T + B*K*H*T + B*H*T (inner score/Q draws, inner KL steps,
        outer reward-gradient steps).  standard: B*K*T + B*T (one oracle batch
        per inner and per outer stage).  Constant factors from evaluating
        several oracles per stage are absorbed into the batch unit; the CSV
        also reports this cumulative figure per iteration.
        """
        if regime == "brl":
            return self.T * (self.K * (self.n + self.B * self.H) + self.B * self.H)
        if regime == "standard":
            return self.T * (self.K * self.B + self.B)
        raise ConfigError(f"unknown regime {regime!r}")


@dataclass(frozen=True)
class ScheduleConstants:
    c_sigma: float = 0.25
    c_B: float = 1.0
    c_n: float = 1.0
    c_T: float = 1.0
    c_K: float = 1.0
    c_H: float = 1.0


def schedule_from_epsilon(eps: float, regime: str, base: PenaltyConfig,
                          constants: ScheduleConstants = ScheduleConstants()) -> PenaltyConfig:
    """Target-accuracy schedule: sigma = sqrt(c_sigma*eps), B = ceil(c_B/eps^2),
    T = ceil(c_T/eps), K = ceil(c_K*ln(1/eps)), H = ceil(c_H*ln(1/eps)), and
    (brl only) n = ceil(c_n/eps^2); each count clamped to at least 1."""
    if not 0.0 < eps <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {eps}")
    if regime not in ("brl", "standard"):
        raise ConfigError(f"unknown regime {regime!r}")
    log_term = math.log(1.0 / eps)
    updates = dict(
        sigma=math.sqrt(constants.c_sigma * eps),
        B=max(1, math.ceil(constants.c_B / eps**2)),
        T=max(1, math.ceil(constants.c_T / eps)),
        K=max(1, math.ceil(constants.c_K * log_term)),
        H=max(1, math.ceil(constants.c_H * log_term)),
    )
    if regime == "brl":
        updates["n"] = max(1, math.ceil(constants.c_n / eps**2))
    return replace(base, **updates)


@dataclass
class InnerResult:
    lam: np.ndarray
    lam_prime: np.ndarray
    d_norm: float
    dp_norm: float


def inner_loops(problem: BilevelProblem, phi, lam_init, lam_prime_init,
                cfg: PenaltyConfig, rng: RngStream, run_prime: bool = True) -> InnerResult:
    """K normalized ascent steps on J (lam stream) and on J - sigma*G (lam'
    stream).  Steps with direction norm below 1e-12 are skipped.  The two
    streams share the J-oracle random stream at each k (common random
    numbers), so with sigma = 0 and equal inits/steps they coincide exactly.
    """
    phi = as_vec(phi)
    lam = as_vec(lam_init).copy()
    lam_prime = as_vec(lam_prime_init).copy()
    d_norm = dp_norm = 0.0
    for k in range(cfg.K):
        rk = rng.child(k)
        stream_j, stream_g = rk.child(0), rk.child(1)
        d = problem.grad_lower_lam(phi, lam, cfg, stream_j)
        if not np.all(np.isfinite(d)):
            raise NonFiniteError(f"non-finite lower gradient at inner step {k}")
        d_norm = norm(d)
        if d_norm >= ZERO_GRAD_TOL:
            lam = problem.clip_lam(lam + cfg.tau * d / d_norm)
        if run_prime:
            dp = problem.grad_lower_lam(phi, lam_prime, cfg, stream_j)
            if cfg.sigma != 0.0:
                dp = dp - cfg.sigma * problem.grad_upper_lam(phi, lam_prime, cfg, stream_g)
            if not np.all(np.isfinite(dp)):
                raise NonFiniteError(f"non-finite penalized gradient at inner step {k}")
            dp_norm = norm(dp)
            if dp_norm >= ZERO_GRAD_TOL:
                lam_prime = problem.clip_lam(lam_prime + cfg.tau_prime * dp / dp_norm)
    return InnerResult(lam=lam, lam_prime=lam_prime, d_norm=d_norm, dp_norm=dp_norm)


def penalty_hypergradient(problem: BilevelProblem, phi, lam, lam_prime,
                          cfg: PenaltyConfig, rng: RngStream) -> np.ndarray:
    """Hessian-free outer direction:
    grad_phi G(phi, lam') +/- (1/sigma) (grad_phi J(phi, lam) - grad_phi J(phi, lam')).

    Both J gradients draw from the same stream, so the penalty term cancels
    exactly when lam == lam'.
    """
    if cfg.sigma == 0.0:
        raise ConfigError("penalty hypergradient needs sigma > 0")
    stream_g, stream_j = rng.child(0), rng.child(1)
    g = problem.grad_upper_phi(phi, lam_prime, cfg, stream_g)
    j_at_lam = problem.grad_lower_phi(phi, lam, cfg, stream_j)
    j_at_prime = problem.grad_lower_phi(phi, lam_prime, cfg, stream_j)
    pen = (j_at_lam - j_at_prime) / cfg.sigma
    return g + pen if cfg.penalty_term_sign == "plus" else g - pen


@dataclass
class RunRecord:
    """Per-outer-iteration metrics plus config echo and seed."""

    config: PenaltyConfig
    regime: str
    seed: int
    t: list[int] = field(default_factory=list)
    phi: list[np.ndarray] = field(default_factory=list)
    d_norm: list[float] = field(default_factory=list)
    upper_loss: list[float] = field(default_factory=list)
    inner_d_norm: list[float] = field(default_factory=list)
    inner_dp_norm: list[float] = field(default_factory=list)
    samples_cum: list[int] = field(default_factory=list)
    extra: dict[str, list[float]] = field(default_factory=dict)
    final_phi: np.ndarray | None = None
    final_lam: np.ndarray | None = None
    final_lam_prime: np.ndarray | None = None
    aborted: bool = False
    abort_reason: str = ""

    @property
    def sample_total(self) -> int:
        return self.samples_cum[-1] if self.samples_cum else 0

    def columns(self) -> list[str]:
        d = len(self.phi[0]) if self.phi else 0
        cols = ["t"] + [f"phi_{i}" for i in range(d)]
        cols += ["d_norm", "upper_loss", "inner_d_norm", "inner_dp_norm", "samples_cum"]
        cols += sorted(self.extra)
        return cols

    def rows(self):
        for i in range(len(self.t)):
            row = [self.t[i]] + [v for v in self.phi[i]]
            row += [self.d_norm[i], self.upper_loss[i], self.inner_d_norm[i],
                    self.inner_dp_norm[i], self.samples_cum[i]]
            row += [self.extra[k][i] for k in sorted(self.extra)]
            yield row


def _inner_samples(cfg: PenaltyConfig, regime: str) -> int:
    return cfg.K * (cfg.n + cfg.B * cfg.H) if regime == "brl" else cfg.K * cfg.B


def _outer_samples(cfg: PenaltyConfig, regime: str) -> int:
    return cfg.B * cfg.H if regime == "brl" else cfg.B


def run_penalty_method(problem: BilevelProblem, cfg: PenaltyConfig, rng: RngStream,
                       regime: str = "brl", phi0=None, lam0=None, lam_prime0=None,
                       hyper_grad_oracle=None) -> RunRecord:
    """T outer iterations of inner_loops + penalty_hypergradient + descent.

    Deterministic under (config, seed).  ``hyper_grad_oracle(phi)``, when
    given, adds a ``hyper_sq`` column with the true squared hyper-gradient
    norm at each iterate.  Non-finite gradients or iterates abort, returning
    the record accumulated so far with ``aborted`` set.
    """
    cfg.sample_total(regime)  # validates the regime name
    phi = as_vec(problem.init_phi() if phi0 is None else phi0).copy()
    lam_start = as_vec(problem.init_lam() if lam0 is None else lam0).copy()
    lam_prime_start = lam_start.copy() if lam_prime0 is None else as_vec(lam_prime0).copy()
    lam, lam_prime = lam_start, lam_prime_start

    record = RunRecord(config=cfg, regime=regime, seed=rng.seed)
    if hyper_grad_oracle is not None:
        record.extra["hyper_sq"] = []
    eta = cfg.eta
    samples = 0
    rising = 0
    run_prime = cfg.outer_mode == "penalty"
    for t in range(cfg.T):
        rt = rng.child(t)
        try:
            inner = inner_loops(problem, phi, lam, lam_prime, cfg, rt.child(0), run_prime)
            samples += _inner_samples(cfg, regime)
            if run_prime:
                d = penalty_hypergradient(problem, phi, inner.lam, inner.lam_prime,
                                          cfg, rt.child(1))
                eval_lam = inner.lam_prime
            else:
                if cfg.sigma == 0.0:
                    raise ConfigError("simplified outer mode needs sigma > 0")
                ro = rt.child(1)
                d = problem.grad_upper_phi(phi, inner.lam, cfg, ro.child(0))
                d = d + problem.grad_lower_phi(phi, inner.lam, cfg, ro.child(1)) / cfg.sigma
                eval_lam = inner.lam
            samples += _outer_samples(cfg, regime)
            upper = problem.upper_value(phi, eval_lam, rng=rt.child(2))
        except NonFiniteError as err:
            record.aborted = True
            record.abort_reason = str(err)
            break

        record.t.append(t)
        record.phi.append(phi.copy())
        record.d_norm.append(norm(d))
        record.upper_loss.append(upper)
        record.inner_d_norm.append(inner.d_norm)
        record.inner_dp_norm.append(inner.dp_norm if run_prime else math.nan)
        record.samples_cum.append(samples)
        if hyper_grad_oracle is not None:
            record.extra["hyper_sq"].append(float(np.sum(as_vec(hyper_grad_oracle(phi)) ** 2)))

        if cfg.eta_backtracking and len(record.upper_loss) >= 2:
            rising = rising + 1 if upper > record.upper_loss[-2] else 0
            if rising >= 3:
                eta *= 0.5
                rising = 0

        phi_next = phi - eta * d
        if not np.all(np.isfinite(phi_next)):
            record.aborted = True
            record.abort_reason = f"non-finite phi after outer step {t}"
            break
        phi = phi_next
        if cfg.warm_start:
            lam, lam_prime = inner.lam, inner.lam_prime
        else:
            lam, lam_prime = lam_start, lam_prime_start

    record.final_phi = phi
    record.final_lam = lam
    record.final_lam_prime = lam_prime
    return record


def _fmt_cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_record_csv(record: RunRecord, path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(record.columns()) + "\n")
        for row in record.rows():
            fh.write(",".join(_fmt_cell(v) for v in row) + "\n")
