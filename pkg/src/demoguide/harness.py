"""Experiment orchestration: seed sweeps, per-epoch CSV logs, step-efficiency
ratios between guided and vanilla runs, and the over-fitting ablation report.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import demo as demo_io
from . import envs
from .approximator import (
    AgentCheckpoint,
    default_critic_spec,
    default_policy_spec,
    init_params,
    init_policy,
)
from .errors import ConfigError
from .ppo_lfd import Learner, TrainConfig, update
from .rollout import build_batch, collect, completed_returns
from .similarity import GuidanceConfig, fit_cluster_model, select_similar

log = logging.getLogger(__name__)

MODES = ("vanilla", "guided", "ablation_40")
CSV_COLUMNS = ("epoch", "env_steps", "mean_episode_reward", "pi_loss", "vf_loss",
               "approx_kl", "demo_frames_used")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_CUTOFF_FRACTION = 0.3
SMOOTH_WINDOW = 10
LEVELS = (0.85, 0.70, 0.50, 0.20)


def default_out_dir():
    return os.environ.get("DEMOGUIDE_OUT", "runs")


@dataclass
class ExperimentConfig:
    """Flat experiment settings; every field is also a JSON config key."""

    env: str = "point_reach"
    mode: str = "vanilla"
    demo_path: Optional[str] = None
    seeds: tuple = DEFAULT_SEEDS
    out_dir: str = field(default_factory=default_out_dir)
    epochs: int = 50
    steps_per_epoch: int = 1000
    pi_lr: float = 3e-4
    vf_lr: float = 1e-3
    gamma: float = 0.99
    lam: float = 0.97
    clip_ratio: float = 0.2
    target_kl: float = 0.01
    update_iters: int = 40
    hidden: tuple = (64, 64)
    k_obs: int = 16
    k_act: int = 16
    threshold_mode: str = "adaptive_median"
    H_obs: float = 1.0
    H_act: float = 1.0
    demo_ratio: float = 0.2
    # None means 30% of the epochs in guided mode
    cutoff_epoch: Optional[int] = None
    guidance_weight: float = 1.0
    kmeans_iters: int = 100
    demo_adv_estimator: str = "mc"
    demo_adv_norm: str = "explore"
    save_epoch_checkpoints: bool = False
    dump_clusters: Optional[str] = None
    jobs: int = 1

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("seeds", "hidden"):
            if key in d and d[key] is not None:
                d[key] = tuple(int(x) for x in d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        d["hidden"] = list(self.hidden)
        return d

    def guidance(self):
        ratio, cutoff = self.demo_ratio, self.cutoff_epoch
        if self.mode == "vanilla":
            cutoff = 0
        elif self.mode == "ablation_40":
            ratio, cutoff = 0.4, self.epochs
        elif cutoff is None:
            cutoff = int(round(DEFAULT_CUTOFF_FRACTION * self.epochs))
        return GuidanceConfig(
            k_obs=self.k_obs, k_act=self.k_act, threshold_mode=self.threshold_mode,
            H_obs=self.H_obs, H_act=self.H_act, demo_ratio=ratio, cutoff_epoch=cutoff,
            weight=self.guidance_weight, kmeans_iters=self.kmeans_iters,
            demo_adv_estimator=self.demo_adv_estimator, demo_adv_norm=self.demo_adv_norm,
        )

    def train_config(self, seed):
        return TrainConfig(
            pi_lr=self.pi_lr, vf_lr=self.vf_lr, gamma=self.gamma, lam=self.lam,
            clip_ratio=self.clip_ratio, target_kl=self.target_kl,
            update_iters=self.update_iters, epochs=self.epochs,
            steps_per_epoch=self.steps_per_epoch, hidden=tuple(self.hidden), seed=seed,
            guidance=self.guidance(),
        )

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        envs.make_env(self.env)
        if self.mode != "vanilla" and not self.demo_path:
            raise ConfigError(f"mode {self.mode!r} needs a demonstration file (demo_path)")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        self.train_config(0).validate()
        return self


@dataclass
class RunRecord:
    rows: list

    @property
    def env_steps(self):
        return np.array([r["env_steps"] for r in self.rows], dtype=np.float64)

    @property
    def rewards(self):
        return np.array([r["mean_episode_reward"] for r in self.rows], dtype=np.float64)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=np.float64)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(record, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in record.rows:
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def read_csv(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        rows = []
        for raw in reader:
            rows.append({
                "epoch": int(raw["epoch"]),
                "env_steps": int(raw["env_steps"]),
                "mean_episode_reward": float(raw["mean_episode_reward"]),
                "pi_loss": float(raw["pi_loss"]),
                "vf_loss": float(raw["vf_loss"]),
                "approx_kl": float(raw["approx_kl"]),
                "demo_frames_used": int(raw["demo_frames_used"]),
            })
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return RunRecord(rows)


def seed_paths(out_dir, seed):
    out = Path(out_dir)
    return {
        "csv": out / f"seed_{seed}.csv",
        "checkpoint": out / f"seed_{seed}_final.json",
        "epochs": out / f"seed_{seed}_checkpoints",
        "error": out / f"seed_{seed}.error.json",
    }


def train_seed(cfg, seed, demo=None, out_dir=None):
    """Train one seed; returns ``(RunRecord, final AgentCheckpoint)``.

    RNG streams for initialization, collection and guidance are independent,
    so switching guidance off leaves the vanilla trajectory untouched.
    """
    tcfg = cfg.train_config(seed).validate()
    env_spec = envs.make_env(cfg.env)
    init_ss, collect_ss, guide_ss = np.random.SeedSequence(seed).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    collect_rng = np.random.default_rng(collect_ss)
    guide_rng = np.random.default_rng(guide_ss)

    pspec = default_policy_spec(env_spec.obs_dim, env_spec.act_dim, tcfg.hidden)
    cspec = default_critic_spec(env_spec.obs_dim, tcfg.hidden)
    learner = Learner(pspec, init_policy(pspec, init_rng), cspec, init_params(cspec, init_rng))

    guided = cfg.mode != "vanilla" and demo is not None and len(demo) > 0
    gcfg = tcfg.guidance
    paths = seed_paths(out_dir, seed) if out_dir is not None else None
    if paths and cfg.save_epoch_checkpoints:
        paths["epochs"].mkdir(parents=True, exist_ok=True)

    demo_ret = None
    if guided and gcfg.demo_adv_estimator == "mc":
        demo_ret = demo_io.returns_to_go(demo, tcfg.gamma)

    rows = []
    for epoch in range(tcfg.epochs):
        trajs = collect(env_spec, learner.policy, pspec, learner.critic, cspec,
                        tcfg.steps_per_epoch, collect_rng)
        batch = build_batch(trajs, learner.critic, cspec, tcfg.gamma, tcfg.lam)
        dp = dp_ret = None
        if guided and epoch < gcfg.cutoff_epoch:
            explore_actions = np.clip(batch.frames.a, env_spec.act_low, env_spec.act_high)
            obs_model = fit_cluster_model(batch.frames.s, gcfg.k_obs, guide_rng, gcfg.kmeans_iters)
            act_model = fit_cluster_model(explore_actions, gcfg.k_act, guide_rng, gcfg.kmeans_iters)
            sel = select_similar(demo, obs_model, act_model, gcfg, guide_rng, n_explore=len(batch.frames))
            dp = sel.frames
            dp_ret = demo_ret[sel.indices] if demo_ret is not None else None
            if cfg.dump_clusters:
                _dump_clusters(cfg.dump_clusters, seed, epoch, obs_model, act_model, sel)
        stats = update(learner, batch, dp, tcfg, dp_ret)
        returns = completed_returns(trajs)
        rows.append({
            "epoch": epoch,
            "env_steps": (epoch + 1) * tcfg.steps_per_epoch,
            "mean_episode_reward": float(np.mean(returns)) if returns else float("nan"),
            "pi_loss": stats.pi_loss,
            "vf_loss": stats.vf_loss,
            "approx_kl": stats.approx_kl,
            "demo_frames_used": stats.demo_frames_used,
        })
        log.debug("seed %d epoch %d: %s", seed, epoch, rows[-1])
        if paths and cfg.save_epoch_checkpoints:
            _checkpoint(learner, cfg, seed, epoch).save(paths["epochs"] / f"epoch_{epoch:04d}.json")
    return RunRecord(rows), _checkpoint(learner, cfg, seed, tcfg.epochs - 1)


def _checkpoint(learner, cfg, seed, epoch):
    return AgentCheckpoint(learner.pspec, learner.policy.copy(), learner.cspec,
                           learner.critic.copy(),
                           {"env": cfg.env, "mode": cfg.mode, "seed": seed, "epoch": epoch})


def _dump_clusters(base, seed, epoch, obs_model, act_model, sel):
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    with open(path / f"seed_{seed}_epoch_{epoch:04d}.json", "w") as f:
        json.dump({
            "obs": obs_model.to_dict(),
            "act": act_model.to_dict(),
            "n_passing": sel.n_passing,
            "selected": sel.indices.tolist(),
        }, f)


def load_demo_for(cfg):
    if cfg.mode == "vanilla" or not cfg.demo_path:
        return None
    data = demo_io.load(cfg.demo_path)
    report = demo_io.validate(data, envs.make_env(cfg.env))
    if not report.passed:
        raise ConfigError(f"demonstration file {cfg.demo_path} failed validation: "
                          f"{report.summary()}; first problems {report.failures[:5]}")
    return data


def _run_one(cfg, seed):
    paths = seed_paths(cfg.out_dir, seed)
    try:
        demo = load_demo_for(cfg)
        record, ckpt = train_seed(cfg, seed, demo, cfg.out_dir)
        write_csv(record, paths["csv"])
        ckpt.save(paths["checkpoint"])
        if paths["error"].exists():
            paths["error"].unlink()
        return seed, None
    except Exception as exc:  # one failing seed must not sink the sweep
        with open(paths["error"], "w") as f:
            json.dump({"seed": seed, "error": type(exc).__name__, "message": str(exc),
                       "traceback": traceback.format_exc()}, f, indent=2)
        log.error("seed %d failed: %s: %s", seed, type(exc).__name__, exc)
        return seed, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    out_dir: str
    completed: list
    failed: dict

    @property
    def ok(self):
        return not self.failed

    def csv_paths(self):
        return [seed_paths(self.out_dir, s)["csv"] for s in self.completed]


def run(cfg):
    """Run every seed of ``cfg``, writing one CSV and final checkpoint per seed."""
    cfg.validate()
    if cfg.mode != "vanilla":
        load_demo_for(cfg)  # fail fast before spawning seeds
    Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
    with open(Path(cfg.out_dir) / "config.json", "w") as f:
        json.dump(cfg.to_dict(), f, indent=2, sort_keys=True)
    if cfg.jobs > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_run_one, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_run_one(cfg, s) for s in cfg.seeds]
    completed = [s for s, err in results if err is None]
    failed = {s: err for s, err in results if err is not None}
    return SweepResult(cfg.out_dir, completed, failed)


def train_expert(env_name="point_reach", epochs=100, seed=0, steps_per_epoch=1000, **overrides):
    """Train a vanilla PPO policy to serve as the demonstrator."""
    cfg = ExperimentConfig(env=env_name, mode="vanilla", seeds=(seed,), epochs=epochs,
                           steps_per_epoch=steps_per_epoch, **overrides)
    record, ckpt = train_seed(cfg, seed)
    return ckpt, record


# -- analysis ------------------------------------------------------------------


def smooth(values, window=SMOOTH_WINDOW):
    """Trailing mean over the last ``window`` entries (fewer at the start)."""
    values = np.asarray(values, dtype=np.float64)
    c = np.concatenate([[0.0], np.cumsum(values)])
    idx = np.arange(1, len(values) + 1)
    lo = np.maximum(0, idx - window)
    return (c[idx] - c[lo]) / (idx - lo)


def _aligned(records, window):
    n = min(len(r.rows) for r in records)
    steps = records[0].env_steps[:n]
    curves = np.array([smooth(r.rewards, window)[:n] for r in records])
    return steps, curves


def first_crossing(steps, curve, threshold):
    hit = np.flatnonzero(curve >= threshold)
    return float(steps[hit[0]]) if len(hit) else math.inf


def level_thresholds(vanilla_records, levels=LEVELS, window=SMOOTH_WINDOW, baseline="min"):
    """Reward level for each fraction ``x`` of the vanilla maximum.

    ``baseline="zero"`` uses ``x * max`` directly, which only makes sense for
    positive rewards. ``baseline="min"`` measures the fraction of the way from
    the vanilla minimum to its maximum, which also works for the negative
    rewards of the reaching tasks.
    """
    _, curves = _aligned(vanilla_records, window)
    median_curve = np.median(curves, axis=0)
    top = float(median_curve.max())
    floor = 0.0 if baseline == "zero" else float(median_curve.min())
    return {lvl: floor + lvl * (top - floor) for lvl in levels}


def efficiency_ratios(guided_records, vanilla_records, levels=LEVELS, window=SMOOTH_WINDOW,
                      baseline="min", thresholds=None):
    """Steps guided runs need to reach each reward level, relative to vanilla.

    Per level, each seed's first crossing of the smoothed curve is found and
    the median over seeds is taken; ratio = guided median / vanilla median.
    Returns a list of row dicts; ``ratio`` is None when a level is not reached.
    """
    if not guided_records or not vanilla_records:
        raise ValueError("both record sets must be non-empty")
    if thresholds is None:
        thresholds = level_thresholds(vanilla_records, levels, window, baseline)
    g_steps, g_curves = _aligned(guided_records, window)
    v_steps, v_curves = _aligned(vanilla_records, window)
    rows = []
    for lvl in levels:
        thr = thresholds[lvl]
        g_cross = [first_crossing(g_steps, c, thr) for c in g_curves]
        v_cross = [first_crossing(v_steps, c, thr) for c in v_curves]
        g_med = float(np.median(g_cross))
        v_med = float(np.median(v_cross))
        ratio = g_med / v_med if math.isfinite(g_med) and math.isfinite(v_med) else None
        rows.append({
            "level": lvl,
            "threshold": thr,
            "guided_steps": g_med,
            "vanilla_steps": v_med,
            "ratio": ratio,
            "guided_per_seed": g_cross,
            "vanilla_per_seed": v_cross,
        })
    return rows


def format_ratio_table(rows):
    lines = [f"{'level':>6}  {'threshold':>10}  {'guided':>10}  {'vanilla':>10}  ratio"]
    for r in rows:
        ratio = "not reached" if r["ratio"] is None else f"{r['ratio']:.2f}"
        lines.append(
            f"{int(round(r['level'] * 100)):>5}%  {r['threshold']:>10.3f}  "
            f"{r['guided_steps']:>10.0f}  {r['vanilla_steps']:>10.0f}  {ratio}"
        )
    return "\n".join(lines)


def reward_at_fraction(records, fraction, window=SMOOTH_WINDOW):
    """Median over seeds of the smoothed reward at ``fraction`` of the run's steps."""
    steps, curves = _aligned(records, window)
    idx = max(0, int(math.ceil(fraction * len(steps))) - 1)
    return float(np.median(curves[:, idx])), curves[:, idx].tolist()


def ablation_report(ablation_records, guided_records, window=SMOOTH_WINDOW):
    """Compare final smoothed rewards of the 40%-ratio ablation against the default guided run."""
    abl = [float(smooth(r.rewards, window)[-1]) for r in ablation_records]
    gui = [float(smooth(r.rewards, window)[-1]) for r in guided_records]
    abl_med = float(np.median(abl))
    gui_med = float(np.median(gui))
    return {
        "ablation_final_reward": abl_med,
        "guided_final_reward": gui_med,
        "ablation_per_seed": abl,
        "guided_per_seed": gui,
        "overfit_flag": bool(abl_med < gui_med),
    }


ABLATION_REPORT_KEYS = ("ablation_final_reward", "guided_final_reward", "ablation_per_seed",
                        "guided_per_seed", "overfit_flag")


def records_from(paths):
    """Load records from CSV files and/or directories of ``seed_*.csv``."""
    out = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            files = sorted(p.glob("seed_*.csv"))
            if not files:
                raise ValueError(f"{p}: no seed_*.csv files")
            out.extend(read_csv(f) for f in files)
        else:
            out.append(read_csv(p))
    return out

