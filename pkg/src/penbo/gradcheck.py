"""Registry of analytic-gradient vs finite-difference checks.

Each check draws a handful of random evaluation points, compares an analytic
gradient against central differences of its deterministic objective, and
reports the worst relative error.  The CLI ``gradcheck`` verb and the
acceptance suite both run this registry.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import exact as ex
from . import preference as pref
from .brl import chain2_brl_instance
from .diagnostics import central_fd_grad, relative_error
from .rng import RngStream
from .synthetic import make_pl_instance

DEFAULT_TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    points: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _draw(gen, dim, scale=1.5):
    return gen.uniform(-scale, scale, size=dim)


def _check_preference_reward_grad(rng, points, scale):
    inst = chain2_brl_instance()
    gen = rng.generator()
    pairs = pref.make_pairs(inst.env, inst.policy.with_params([0.4, -0.3]), inst.policy_ref,
                            inst.labeler, count=40, horizon=3, rng=rng.child(0))
    worst = 0.0
    for _ in range(points):
        phi = _draw(gen, 2)
        rew = inst.reward.with_params(phi)
        grad = scale * pref.preference_reward_grad(rew, pairs)
        fd = central_fd_grad(lambda p: pref.preference_loss(rew.with_params(p), pairs), phi, 1e-5)
        worst = max(worst, relative_error(grad, fd))
    return worst


def _check_preference_policy_grad(rng, points, scale):
    inst = chain2_brl_instance()
    gen = rng.generator()
    worst = 0.0
    for _ in range(points):
        phi, lam = _draw(gen, 2), _draw(gen, 2)
        rew = inst.reward.with_params(phi)
        grad = scale * pref.exact_preference_policy_grad(
            inst.env, inst.policy.with_params(lam), rew, inst.labeler, 2)
        fd = central_fd_grad(
            lambda l: pref.exact_preference_value(inst.env, inst.policy.with_params(l),
                                                  rew, inst.labeler, 2), lam, 1e-5)
        worst = max(worst, relative_error(grad, fd))
    return worst


def _check_return_reward_grad(rng, points, scale):
    inst = chain2_brl_instance()
    gen = rng.generator()
    worst = 0.0
    for _ in range(points):
        phi, lam = _draw(gen, 2), _draw(gen, 2)
        pol = inst.policy.with_params(lam)
        rew = inst.reward.with_params(phi)
        grad = scale * ex.exact_reward_grad(inst.env, pol, rew)
        fd = central_fd_grad(
            lambda p: ex.exact_return(inst.env, pol, inst.policy_ref, rew.with_params(p)),
            phi, 1e-5)
        worst = max(worst, relative_error(grad, fd))
    return worst


def _policy_grad_worst(beta, rng, points, scale):
    inst = chain2_brl_instance(beta=beta)
    gen = rng.generator()
    worst = 0.0
    for _ in range(points):
        phi, lam = _draw(gen, 2), _draw(gen, 2)
        rew = inst.reward.with_params(phi)
        grad = scale * ex.exact_policy_grad(inst.env, inst.policy.with_params(lam),
                                            inst.policy_ref, rew)
        fd = central_fd_grad(
            lambda l: ex.exact_return(inst.env, inst.policy.with_params(l), inst.policy_ref, rew),
            lam, 1e-5)
        worst = max(worst, relative_error(grad, fd))
    return worst


def _synthetic_worst(name, rng, points, scale):
    prob = make_pl_instance(name)
    gen = rng.generator()
    worst = 0.0
    for _ in range(points):
        phi, lam = _draw(gen, 1, 2.0), _draw(gen, 1, 2.0)
        for which, objective, wrt in (
            ("upper_phi", prob.upper_value, "phi"),
            ("upper_lam", prob.upper_value, "lam"),
            ("lower_phi", prob.lower_value, "phi"),
            ("lower_lam", prob.lower_value, "lam"),
        ):
            grad = scale * prob.exact_grad(which, phi, lam)
            if wrt == "phi":
                fd = central_fd_grad(lambda p: objective(p, lam), phi, 1e-6)
            else:
                fd = central_fd_grad(lambda l: objective(phi, l), lam, 1e-6)
            worst = max(worst, relative_error(grad, fd))
    return worst


CHECKS = {
    "preference_reward_grad": _check_preference_reward_grad,
    "preference_policy_grad": _check_preference_policy_grad,
    "return_reward_grad": _check_return_reward_grad,
    "return_policy_grad": lambda rng, points, scale: _policy_grad_worst(0.0, rng, points, scale),
    "return_policy_grad_kl": lambda rng, points, scale: _policy_grad_worst(0.3, rng, points, scale),
    "synthetic_quad": lambda rng, points, scale: _synthetic_worst("quad", rng, points, scale),
    "synthetic_sinsq": lambda rng, points, scale: _synthetic_worst("sinsq", rng, points, scale),
}


def run_gradchecks(seed: int = 0, names=None, points: int = 20,
                   tolerance: float = DEFAULT_TOLERANCE,
                   corrupt: str | None = None) -> list[CheckResult]:
    """Run the named checks (all by default) at the given tolerance.

    ``corrupt`` scales the named check's analytic gradient by 1.1 as a
    negative control, verifying the harness fails loudly on a wrong gradient.
    """
    names = list(CHECKS) if names is None else list(names)
    results = []
    for i, name in enumerate(names):
        if name not in CHECKS:
            raise KeyError(f"unknown gradcheck {name!r}; known: {sorted(CHECKS)}")
        scale = 1.1 if corrupt == name else 1.0
        err = CHECKS[name](RngStream(seed).child(i), points, scale)
        results.append(CheckResult(name=name, max_rel_error=err, points=points,
                                   tolerance=tolerance))
    return results
