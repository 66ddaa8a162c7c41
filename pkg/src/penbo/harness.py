"""Experiment orchestration: config -> problem -> run -> artifacts.

Every experiment owns one output directory (guarded by a lockfile) and writes
a manifest echoing the validated config, a record CSV, and optional plots.
All writes stay inside the declared output directory.
"""

from __future__ import annotations

import functools
import os
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import preference as pref
from .brl import BrlInstance, chain2_brl_instance, lq1d_brl_instance
from .config import RunConfig, SCHEMA_VERSION, config_from_mapping, write_manifest
from .errors import ConfigError
from .penalty import (PenaltyConfig, RunRecord, ScheduleConstants, run_penalty_method,
                      schedule_from_epsilon, write_record_csv)
from .plsgd import (constant_bias_oracle, measure_pl_constant, mean_gap_trajectory,
                    quadratic_fn, sinsq_fn, write_lemma_csv)
from .rng import RngStream
from .synthetic import hyper_grad_grid, hyper_grad_quad, make_pl_instance

OUT_ROOT_ENV = "PENBO_OUT_ROOT"


def resolve_out_dir(cfg: RunConfig, override: str | None = None) -> Path:
    out = Path(override if override is not None else cfg.out_dir)
    if not out.is_absolute():
        out = Path(os.environ.get(OUT_ROOT_ENV, "runs")) / out
    return out


@contextmanager
def run_lock(out_dir: Path):
    """One experiment per output directory at a time."""
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out_dir} is locked by another run "
                          f"(remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def schedule_constants(cfg: RunConfig) -> ScheduleConstants:
    s = cfg.schedule
    return ScheduleConstants(c_sigma=s.c_sigma, c_B=s.c_B, c_n=s.c_n,
                             c_T=s.c_T, c_K=s.c_K, c_H=s.c_H)


def build_penalty_config(cfg: RunConfig, regime: str) -> PenaltyConfig:
    p = cfg.penalty
    gamma = cfg.env.gamma if regime == "brl" else 0.9
    pc = PenaltyConfig(sigma=p.sigma, eta=p.eta, tau=p.tau, tau_prime=p.tau_prime,
                       K=p.K, T=p.T, n=p.n, B=p.B, H=p.H,
                       gamma=gamma, beta=cfg.reward.beta if regime == "brl" else 0.0,
                       warm_start=p.warm_start, sigma0=p.sigma0,
                       penalty_term_sign=p.penalty_term_sign, outer_mode=p.outer_mode,
                       eta_backtracking=p.eta_backtracking)
    if cfg.epsilon is not None:
        pc = schedule_from_epsilon(cfg.epsilon, regime, pc, schedule_constants(cfg))
    return pc


def build_brl_instance(cfg: RunConfig, pair_sink=None) -> BrlInstance:
    if cfg.env.name == "chain":
        if cfg.env.n_states != 2:
            raise ConfigError("the built-in BRL instance uses the 2-state chain")
        return chain2_brl_instance(gamma=cfg.env.gamma, beta=cfg.reward.beta,
                                   slip=cfg.env.slip, eps_floor=cfg.policy.eps_floor,
                                   pair_horizon=cfg.pair_horizon,
                                   labeler_mode=cfg.labeler.mode,
                                   true_phi=cfg.labeler.true_phi, pair_sink=pair_sink)
    return lq1d_brl_instance(gamma=cfg.env.gamma, beta=cfg.reward.beta,
                             pair_horizon=cfg.pair_horizon, labeler_mode=cfg.labeler.mode,
                             true_phi=cfg.labeler.true_phi, pair_sink=pair_sink)


def _phi0(cfg: RunConfig):
    return None if cfg.phi0 is None else np.asarray(cfg.phi0, dtype=np.float64)


def run_brl(cfg: RunConfig, out_dir: Path) -> RunRecord:
    sink = None
    if cfg.persist_pairs:
        sink = functools.partial(_persist_batch, out_dir / "pairs.txt")
    problem = build_brl_instance(cfg, pair_sink=sink)
    pc = build_penalty_config(cfg, "brl")
    record = run_penalty_method(problem, pc, RngStream(cfg.seed), regime="brl",
                                phi0=_phi0(cfg))
    write_record_csv(record, out_dir / "record.csv")
    return record


def _persist_batch(path, batch):
    pref.append_pair_batch(path, batch)


def run_standard(cfg: RunConfig, out_dir: Path) -> RunRecord:
    problem = make_pl_instance(cfg.instance).with_noise(cfg.noise.upper, cfg.noise.lower)
    pc = build_penalty_config(cfg, "standard")
    oracle = hyper_grad_quad if cfg.instance == "quad" else (
        lambda p: hyper_grad_grid(problem, p))
    record = run_penalty_method(problem, pc, RngStream(cfg.seed), regime="standard",
                                phi0=_phi0(cfg), hyper_grad_oracle=oracle)
    write_record_csv(record, out_dir / "record.csv")
    return record


def run_lemma1(cfg: RunConfig, out_dir: Path):
    lc = cfg.lemma1
    fn = {"sinsq": sinsq_fn, "quad": quadratic_fn}.get(lc.fn)
    if fn is None:
        raise ConfigError(f"lemma1.fn must be 'sinsq' or 'quad', got {lc.fn!r}")
    fn = fn()
    measured = measure_pl_constant(fn, lc.pl_lo, lc.pl_hi, lc.pl_step)
    mu = measured.value / 2.0  # ratio convention: ||grad||^2 >= 2 mu gap
    oracle = constant_bias_oracle(fn, lc.bias, lc.noise)
    beta = lc.bias**2 + lc.noise**2
    report = mean_gap_trajectory(fn, oracle, np.array([lc.x0]), lc.eta, lc.steps,
                                 lc.seeds, RngStream(cfg.seed), mu, lc.smooth_l, beta)
    write_lemma_csv(report, out_dir / "record.csv")
    return report


def run_gradcheck_cfg(cfg: RunConfig, out_dir: Path):
    from .gradcheck import run_gradchecks
    gc = cfg.gradcheck
    results = run_gradchecks(seed=cfg.seed, names=gc.names, points=gc.points,
                             tolerance=gc.tolerance, corrupt=gc.corrupt)
    lines = ["check,max_rel_error,tolerance,passed"]
    for r in results:
        lines.append(f"{r.name},{float(r.max_rel_error)!r},{float(r.tolerance)!r},{int(r.passed)}")
    (out_dir / "record.csv").write_text("\n".join(lines) + "\n")
    return results


def run_sweep(cfg: RunConfig, out_dir: Path) -> list[Path]:
    """Fan out the base config over one axis; one child directory per value
    plus an aggregate CSV of final metrics."""
    base_raw = dict(cfg.sweep_base)
    base_raw.setdefault("schema_version", SCHEMA_VERSION)
    child_dirs = []
    agg = ["value,final_d_norm,final_upper_loss,sample_total"]
    for value in cfg.sweep.values:
        raw = dict(base_raw)
        penalty = dict(raw.get("penalty", {}))
        penalty[cfg.sweep.axis] = value
        raw["penalty"] = penalty
        child_cfg = config_from_mapping(raw)
        child_cfg = replace(child_cfg, seed=cfg.seed)
        child_dir = out_dir / f"{cfg.sweep.axis}_{value}"
        child_dir.mkdir(parents=True, exist_ok=True)
        write_manifest(child_cfg, child_dir / "manifest.yaml")
        if child_cfg.kind == "brl":
            rec = run_brl(child_cfg, child_dir)
        else:
            rec = run_standard(child_cfg, child_dir)
        agg.append(f"{value},{float(rec.d_norm[-1])!r},{float(rec.upper_loss[-1])!r},"
                   f"{rec.sample_total}")
        child_dirs.append(child_dir)
    (out_dir / "aggregate.csv").write_text("\n".join(agg) + "\n")
    return child_dirs


def execute(cfg: RunConfig, out_dir: Path) -> int:
    """Run the configured experiment into out_dir; returns the exit status."""
    with run_lock(out_dir):
        write_manifest(cfg, out_dir / "manifest.yaml")
        status = 0
        if cfg.kind == "brl":
            record = run_brl(cfg, out_dir)
            status = 1 if record.aborted else 0
        elif cfg.kind == "standard":
            record = run_standard(cfg, out_dir)
            status = 1 if record.aborted else 0
        elif cfg.kind == "lemma1":
            run_lemma1(cfg, out_dir)
        elif cfg.kind == "gradcheck":
            results = run_gradcheck_cfg(cfg, out_dir)
            status = 0 if all(r.passed for r in results) else 1
        elif cfg.kind == "sweep":
            run_sweep(cfg, out_dir)
        else:
            raise ConfigError(f"unknown kind {cfg.kind!r}")
        if cfg.plots and cfg.kind in ("brl", "standard", "lemma1"):
            make_plots(out_dir)
        return status


# --- reporting -----------------------------------------------------------


def read_csv(path) -> dict[str, list[str]]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"empty CSV {path}")
    header = lines[0].split(",")
    cols = {h: [] for h in header}
    trailer = []
    for line in lines[1:]:
        cells = line.split(",")
        if cells[0] and not cells[0].lstrip("-").replace(".", "").isdigit():
            trailer.append(cells)
            continue
        for h, c in zip(header, cells):
            cols[h].append(c)
    cols["_trailer"] = trailer
    return cols


def make_plots(run_dir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    cols = read_csv(run_dir / "record.csv")
    written = []
    if "d_norm" in cols:
        t = [int(v) for v in cols["t"]]
        for name, series in (("grad_norm", "d_norm"), ("upper_loss", "upper_loss")):
            vals = [float(v) for v in cols[series]]
            fig, ax = plt.subplots(figsize=(5, 3.2))
            ax.plot(t, vals)
            ax.set_xlabel("outer iteration")
            ax.set_ylabel(series)
            if series == "d_norm" and min(vals) > 0:
                ax.set_yscale("log")
            fig.tight_layout()
            out = run_dir / f"{name}.png"
            fig.savefig(out)
            plt.close(fig)
            written.append(out)
    elif "gap" in cols:
        steps = [int(v) for v in cols["step"]]
        gap = [float(v) for v in cols["gap"]]
        env = [float(v) for v in cols["envelope"]]
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.semilogy(steps, gap, label="mean gap")
        ax.semilogy(steps, env, label="envelope")
        ax.set_xlabel("step")
        ax.legend()
        fig.tight_layout()
        out = run_dir / "gap_envelope.png"
        fig.savefig(out)
        plt.close(fig)
        written.append(out)
    return written


def report(run_dir, plots: bool = True) -> str:
    """Human-readable summary of a finished run; idempotent."""
    from .config import load_manifest

    run_dir = Path(run_dir)
    manifest = run_dir / "manifest.yaml"
    csv_path = run_dir / "record.csv"
    if not manifest.exists() or not csv_path.exists():
        raise FileNotFoundError(f"{run_dir} lacks manifest.yaml or record.csv")
    cfg = load_manifest(manifest)
    cols = read_csv(csv_path)
    lines = [f"kind: {cfg.kind}", f"seed: {cfg.seed}"]
    if cfg.kind in ("brl", "standard"):
        regime = "brl" if cfg.kind == "brl" else "standard"
        pc = build_penalty_config(cfg, regime)
        expected = pc.sample_total(regime)
        recorded = int(cols["samples_cum"][-1]) if cols["samples_cum"] else 0
        rows = len(cols["t"])
        lines.append(f"outer iterations recorded: {rows} of T={pc.T}")
        if rows:
            lines.append(f"final d_norm: {float(cols['d_norm'][-1]):.6g}")
            lines.append(f"final upper_loss: {float(cols['upper_loss'][-1]):.6g}")
        formula = ("n*K*T + B*K*H*T + B*H*T" if regime == "brl" else "B*K*T + B*T")
        lines.append(f"sample total: recorded {recorded}, {formula} = {expected} "
                     f"-> {'MATCH' if recorded == expected else 'MISMATCH'}")
        phi_cols = [k for k in cols if k.startswith("phi_")]
        if rows and phi_cols:
            stationary = all(len(set(cols[k])) == 1 for k in phi_cols)
            if pc.eta == 0.0 or stationary:
                lines.append("phi stationary (eta = 0 or iterates never moved)")
        if "hyper_sq" in cols and cols["hyper_sq"]:
            vals = [float(v) for v in cols["hyper_sq"]]
            lines.append(f"mean hyper-gradient norm^2: {sum(vals) / len(vals):.6g}")
    elif cfg.kind == "lemma1":
        floor = cols["_trailer"][-1] if cols["_trailer"] else None
        lines.append(f"steps: {len(cols['step'])}")
        if floor is not None:
            lines.append(f"empirical floor: {float(floor[1]):.6g}")
            lines.append(f"theoretical floor: {float(floor[2]):.6g}")
    text = "\n".join(lines) + "\n"
    (run_dir / "summary.txt").write_text(text)
    if plots:
        make_plots(run_dir)
    return text
