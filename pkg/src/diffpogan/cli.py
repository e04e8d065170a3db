"""Command-line entry points: dataset generation, training, eval, ablations.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error, 3 numeric
failure mid-run (partial metrics are preserved in the run directory).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .autodiff import NumericError
from .data import FormatError, load_dataset, save_dataset
from .envs import gen_bandit2d, gen_pointmaze, make_env, reference_returns
from .trainer import (
    ConfigError,
    TrainConfig,
    evaluate,
    final_normalized_score,
    load_policy,
    train,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="diffpogan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate an offline dataset", parents=[], add_help=True)
    g.add_argument("--env", required=True, choices=["bandit2d", "pointmaze"])
    g.add_argument("--n", required=True, type=int)
    g.add_argument("--quality-mix", type=float, default=0.3,
                   help="fraction of expert transitions (pointmaze only)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, type=Path)

    t = sub.add_parser("train", help="train on a dataset")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--data", required=True, type=Path)
    t.add_argument("--out-dir", required=True, type=Path)
    t.add_argument("--resume", action="store_true")

    e = sub.add_parser("eval", help="evaluate a checkpointed policy")
    e.add_argument("--checkpoint", required=True, type=Path, help="run directory")
    e.add_argument("--env", required=True, choices=["bandit2d", "pointmaze"])
    e.add_argument("--episodes", type=int, default=20)
    e.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("ablate-t", help="sweep the diffusion step count")
    a.add_argument("--config", required=True, type=Path)
    a.add_argument("--data", required=True, type=Path)
    a.add_argument("--t-list", required=True, help="comma-separated step counts, e.g. 2,5,8,10,15,20")
    a.add_argument("--out-dir", required=True, type=Path)
    a.add_argument("--eval-window", type=int, default=3)

    d = sub.add_parser("ablate-downweight", help="train with and without the down-weight factor")
    d.add_argument("--config", required=True, type=Path)
    d.add_argument("--data", required=True, type=Path)
    d.add_argument("--out-dir", required=True, type=Path)
    d.add_argument("--eval-window", type=int, default=3)

    r = sub.add_parser("report", help="aggregate run directories into one CSV")
    r.add_argument("--run-dirs", required=True, nargs="+", type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--eval-window", type=int, default=3)
    return p


def cmd_gen_data(args) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    if not 0.0 <= args.quality_mix <= 1.0:
        raise ConfigError(f"--quality-mix must be in [0, 1], got {args.quality_mix}")
    rng = np.random.default_rng(args.seed)
    if args.env == "bandit2d":
        ds = gen_bandit2d(args.n, rng)
    else:
        ds = gen_pointmaze(args.n, args.quality_mix, rng)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(ds, args.out)
    print(f"wrote {ds.n} transitions ({ds.meta['env']}) to {args.out}")
    return 0


def _require_files(*paths: Path) -> None:
    for path in paths:
        if not path.exists():
            raise FileNotFoundError(f"no such file: {path}")


def cmd_train(args) -> int:
    _require_files(args.config, args.data)
    config = TrainConfig.from_json(args.config)
    ds = load_dataset(args.data)
    summary = train(config, ds, args.out_dir, resume=args.resume)
    print(json.dumps(summary))
    return 0


def cmd_eval(args) -> int:
    _require_files(args.checkpoint / "config.json")
    policy, schedule, _ = load_policy(args.checkpoint)
    env = make_env(args.env)
    refs = reference_returns(args.env)
    ret, score = evaluate(policy, env, schedule, args.episodes, args.seed, refs)
    print(json.dumps({"mean_return": ret, "normalized_score": score, "episodes": args.episodes}))
    return 0


def _write_summary(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def run_ablate_t(config: TrainConfig, ds, t_values, out_dir: Path, eval_window: int = 3) -> list[list]:
    rows = []
    for t in t_values:
        sub_cfg = TrainConfig.from_dict({**config.to_dict(), "diffusion_steps": t})
        run_dir = out_dir / f"t{t}"
        train(sub_cfg, ds, run_dir)
        rows.append([t, final_normalized_score(run_dir, eval_window)])
    _write_summary(out_dir / "summary.csv", ["t", "final_normalized_score"], rows)
    return rows


def cmd_ablate_t(args) -> int:
    _require_files(args.config, args.data)
    config = TrainConfig.from_json(args.config)
    try:
        t_values = [int(x) for x in args.t_list.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --t-list: {e}") from e
    if not t_values or any(t < 1 for t in t_values):
        raise ConfigError(f"--t-list needs positive integers, got {args.t_list!r}")
    ds = load_dataset(args.data)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_ablate_t(config, ds, t_values, args.out_dir, args.eval_window)
    for t, score in rows:
        print(f"t={t}: final normalized score {score:.2f}")
    return 0


def run_ablate_downweight(config: TrainConfig, ds, out_dir: Path, eval_window: int = 3) -> list[list]:
    rows = []
    for label, flag in (("with", True), ("without", False)):
        sub_cfg = TrainConfig.from_dict({**config.to_dict(), "use_down_weight": flag})
        run_dir = out_dir / f"{label}_downweight"
        train(sub_cfg, ds, run_dir)
        rows.append([label, final_normalized_score(run_dir, eval_window)])
    _write_summary(out_dir / "summary.csv", ["variant", "final_normalized_score"], rows)
    return rows


def cmd_ablate_downweight(args) -> int:
    _require_files(args.config, args.data)
    config = TrainConfig.from_json(args.config)
    ds = load_dataset(args.data)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    rows = run_ablate_downweight(config, ds, args.out_dir, args.eval_window)
    for label, score in rows:
        print(f"{label} down-weight: final normalized score {score:.2f}")
    return 0


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.run_dirs:
        _require_files(run_dir / "metrics.csv", run_dir / "config.json")
        config = TrainConfig.from_json(run_dir / "config.json")
        rows.append(
            [
                str(run_dir),
                config.total_steps,
                config.seed,
                final_normalized_score(run_dir, args.eval_window),
            ]
        )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    _write_summary(args.out, ["run_dir", "total_steps", "seed", "final_normalized_score"], rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate-t": cmd_ablate_t,
    "ablate-downweight": cmd_ablate_downweight,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (FormatError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
