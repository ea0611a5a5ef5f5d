"""Command line entry point: ``demoguide {train,record-demo,validate-demo,compare,plot}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import demo as demo_io
from . import envs
from .approximator import AgentCheckpoint
from .curves import emit_curves
from .harness import (
    ABLATION_REPORT_KEYS,
    LEVELS,
    MODES,
    ExperimentConfig,
    ablation_report,
    default_out_dir,
    efficiency_ratios,
    format_ratio_table,
    records_from,
    run,
)

# CLI flag -> config key; only flags given on the command line override the file
_TRAIN_OVERRIDES = {
    "env": "env", "mode": "mode", "demo": "demo_path", "seeds": "seeds", "out": "out_dir",
    "epochs": "epochs", "steps_per_epoch": "steps_per_epoch", "demo_ratio": "demo_ratio",
    "cutoff_epoch": "cutoff_epoch", "k_obs": "k_obs", "k_act": "k_act",
    "threshold_mode": "threshold_mode", "guidance_weight": "guidance_weight",
    "save_epoch_checkpoints": "save_epoch_checkpoints", "dump_clusters": "dump_clusters",
    "jobs": "jobs",
}


def _seeds(text):
    return tuple(int(s) for s in text.split(",") if s.strip())


def cmd_train(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    for flag, key in _TRAIN_OVERRIDES.items():
        val = getattr(args, flag)
        if val is not None:
            setattr(cfg, key, val)
    result = run(cfg)
    for s in result.completed:
        print(f"seed {s}: ok")
    for s, err in result.failed.items():
        print(f"seed {s}: FAILED ({err})", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_record_demo(args):
    env_spec = envs.make_env(args.env)
    ckpt = AgentCheckpoint.load(args.checkpoint)
    data = demo_io.record(env_spec, ckpt, args.episodes, deterministic=not args.stochastic,
                          rng=np.random.default_rng(args.seed))
    demo_io.save(data, args.out)
    print(f"wrote {len(data)} frames from {args.episodes} episodes to {args.out} "
          f"(mean episode reward {data.meta['mean_episode_reward']:.3f})")
    return 0


def cmd_validate_demo(args):
    report = demo_io.validate(demo_io.load(args.path), envs.make_env(args.env))
    print(report.summary())
    for idx, reason in report.failures[:20]:
        print(f"  frame {idx}: {reason}" if idx is not None else f"  {reason}")
    return 0 if report.passed else 1


def cmd_compare(args):
    guided = records_from(args.guided)
    vanilla = records_from(args.vanilla)
    levels = tuple(float(x) / 100 for x in args.levels.split(",")) if args.levels else LEVELS
    rows = efficiency_ratios(guided, vanilla, levels=levels, baseline=args.baseline)
    print(format_ratio_table(rows))
    report = {"ratios": rows}
    if args.ablation:
        abl = ablation_report(records_from(args.ablation), guided)
        report["ablation"] = {k: abl[k] for k in ABLATION_REPORT_KEYS}
        flag = "yes" if abl["overfit_flag"] else "no"
        print(f"ablation final reward {abl['ablation_final_reward']:.3f} vs guided "
              f"{abl['guided_final_reward']:.3f}; fell below guided: {flag}")
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2, default=lambda x: None)
    return 0


def cmd_plot(args):
    emit_curves(args.inputs, args.out)
    print(f"wrote {args.out}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="demoguide", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one or more seeds")
    t.add_argument("--config", help="JSON file with ExperimentConfig keys")
    t.add_argument("--env", choices=envs.ENV_NAMES)
    t.add_argument("--mode", choices=MODES)
    t.add_argument("--demo", help="demonstration JSONL file")
    t.add_argument("--seeds", type=_seeds, help="comma-separated, e.g. 0,1,2")
    t.add_argument("--out", help=f"output directory (default: $DEMOGUIDE_OUT or {default_out_dir()!r})")
    t.add_argument("--epochs", type=int)
    t.add_argument("--steps-per-epoch", type=int)
    t.add_argument("--demo-ratio", type=float)
    t.add_argument("--cutoff-epoch", type=int)
    t.add_argument("--k-obs", type=int)
    t.add_argument("--k-act", type=int)
    t.add_argument("--threshold-mode", choices=("adaptive_median", "absolute"))
    t.add_argument("--guidance-weight", type=float)
    t.add_argument("--save-epoch-checkpoints", action="store_const", const=True)
    t.add_argument("--dump-clusters", metavar="DIR")
    t.add_argument("--jobs", type=int)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("record-demo", help="record demonstrations from a trained checkpoint")
    r.add_argument("--env", choices=envs.ENV_NAMES, required=True)
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--episodes", type=int, default=100)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--stochastic", action="store_true", help="sample actions instead of the mean")
    r.set_defaults(func=cmd_record_demo)

    v = sub.add_parser("validate-demo", help="check a demonstration file against an environment")
    v.add_argument("path")
    v.add_argument("--env", choices=envs.ENV_NAMES, required=True)
    v.set_defaults(func=cmd_validate_demo)

    c = sub.add_parser("compare", help="step-efficiency ratios of guided vs vanilla runs")
    c.add_argument("--guided", nargs="+", required=True, help="run directories or CSV files")
    c.add_argument("--vanilla", nargs="+", required=True)
    c.add_argument("--ablation", nargs="+", help="ablation_40 runs to check for over-fitting")
    c.add_argument("--levels", help="percent levels, default 85,70,50,20")
    c.add_argument("--baseline", choices=("min", "zero"), default="min")
    c.add_argument("--out", help="write the report as JSON")
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plot", help="render learning curves to SVG")
    pl.add_argument("inputs", nargs="+", help="run directories (one curve each) or CSV files")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
