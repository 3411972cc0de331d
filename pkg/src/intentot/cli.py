"""Batch command-line frontend for the whole pipeline.

Subcommands: gen-data (datasets from toy envs), pipeline (train intents,
relabel, train policy, evaluate), diagnose (embedding diagnostics CSVs),
sweep (hyperparameter ablations). Every command writes a manifest with
sha256 checksums of its artifacts. Exit codes: 0 success, 1 runtime
failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import itertools
import json
import os
import sys
import time

import numpy as np

from . import envs
from .data import (Dataset, load_dataset, save_dataset)
from .intents import (IntentTrainConfig, load_intent_model, save_intent_model,
                      temporal_linearity_report, train_intents,
                      value_bound_report, write_bound_csv, write_linearity_csv)
from .iql import IqlConfig, evaluate, iql_train, write_eval_csv
from .policy import save_policy
from .relabel import (RelabelConfig, relabel_dataset, rescale_rewards,
                      write_provenance)

SWEEP_PARAMS = ("K", "alpha", "tau", "k", "epsilon", "aggregator")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command: str, config: dict, inputs: list,
                    artifacts: list, seed: int, started: float) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": {os.path.basename(str(p)): _sha256(p) for p in artifacts},
        "seed": seed,
        "duration_sec": time.monotonic() - started,
    }
    path = os.path.join(out_dir, "manifest.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _load_env(spec: str, max_episode_len: int):
    """Grid file path, or "chain:<length>" for the 1-D corridor."""
    if spec.startswith("chain:"):
        return envs.ChainMDP(length=int(spec.split(":", 1)[1]),
                             max_episode_len=max_episode_len)
    return envs.parse_grid_file(spec, max_episode_len=max_episode_len)


# --- gen-data -------------------------------------------------------------

def cmd_gen_data(args) -> int:
    started = time.monotonic()
    env = _load_env(args.env, args.max_episode_len)
    if args.policy == "expert":
        if not isinstance(env, envs.GridWorld):
            raise ValueError("expert policy generation needs a gridworld")
        dataset = envs.rollout(env, envs.expert_policy(env), args.seed,
                               args.n, expert=True)
    else:
        dataset = envs.rollout(env, "random", args.seed, args.n)
    save_dataset(dataset, args.out)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    _write_manifest(out_dir, "gen-data",
                    {"env": args.env, "policy": args.policy, "n": args.n,
                     "max_episode_len": args.max_episode_len},
                    [args.env], [args.out], args.seed, started)
    return 0


# --- pipeline -------------------------------------------------------------

def _relabel_config_from_args(args) -> RelabelConfig:
    fields: dict = {}
    if args.config:
        fields.update(dataclasses.asdict(RelabelConfig.from_file(args.config)))
    for key in ("alpha", "tau", "k", "epsilon", "max_iters", "aggregator",
                "rescale"):
        flag = getattr(args, key)
        if flag is not None:
            fields[key] = flag
    return RelabelConfig(**fields)


def _intent_config_from_args(args, seed: int) -> IntentTrainConfig:
    return IntentTrainConfig(
        d=args.intent_d, steps=args.intent_steps,
        learning_rate=args.intent_lr, gamma=args.intent_gamma,
        expectile=args.intent_expectile, batch_size=args.intent_batch,
        target_update_period=args.target_period,
        future_geometric_p=args.geometric_p, seed=seed)


def _iql_config_from_args(args, seed: int) -> IqlConfig:
    return IqlConfig(
        gamma=args.iql_gamma, expectile=args.iql_expectile,
        temperature=args.iql_temperature, learning_rate=args.iql_lr,
        steps=args.iql_steps, batch_size=args.iql_batch, seed=seed)


class PipelineStageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


def run_pipeline(agent_dataset: Dataset, expert_dataset: Dataset, env,
                 out_dir, relabel_cfg: RelabelConfig,
                 intent_cfg: IntentTrainConfig, iql_cfg: IqlConfig,
                 eval_episodes: int, eval_seed: int,
                 zero_rewards: bool = False) -> dict:
    """train-intents -> relabel -> train-policy -> evaluate.

    Returns evaluation results and the artifact paths written under
    out_dir. zero_rewards skips relabeling in favor of all-zero rewards
    (baseline for comparison runs).
    """
    os.makedirs(out_dir, exist_ok=True)
    artifacts: list = []
    stage = "train-intents"
    try:
        model = train_intents(agent_dataset, intent_cfg)
        intents_path = os.path.join(out_dir, "intents.json")
        save_intent_model(model, intents_path)
        artifacts.append(intents_path)

        stage = "relabel"
        results = _relabel_and_train(agent_dataset, expert_dataset, env,
                                     out_dir, relabel_cfg, iql_cfg,
                                     eval_episodes, eval_seed, zero_rewards,
                                     model, artifacts)
    except PipelineStageError:
        raise
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc
    return results


def _relabel_and_train(agent_dataset, expert_dataset, env, out_dir,
                       relabel_cfg, iql_cfg, eval_episodes, eval_seed,
                       zero_rewards, model, artifacts) -> dict:
    stage = "relabel"
    try:
        if zero_rewards:
            relabeled_ds = Dataset(
                trajectories=tuple(
                    dataclasses.replace(t, rewards=(0.0,) * len(t))
                    for t in agent_dataset.trajectories),
                meta=agent_dataset.meta)
            provenance = None
        else:
            relabeled = relabel_dataset(agent_dataset, expert_dataset, model,
                                        relabel_cfg)
            if relabel_cfg.rescale != "none":
                relabeled = rescale_rewards(relabeled, relabel_cfg.rescale,
                                            alpha=relabel_cfg.alpha)
            relabeled_ds = relabeled.dataset
            provenance = relabeled
        relabeled_path = os.path.join(out_dir, "relabeled.jsonl")
        save_dataset(relabeled_ds, relabeled_path)
        artifacts.append(relabeled_path)
        if provenance is not None:
            provenance_path = os.path.join(out_dir, "provenance.jsonl")
            write_provenance(provenance, provenance_path)
            artifacts.append(provenance_path)

        stage = "train-policy"
        _tables, policy = iql_train(relabeled_ds, iql_cfg)
        policy_path = os.path.join(out_dir, "policy.json")
        save_policy(policy, policy_path)
        artifacts.append(policy_path)

        stage = "evaluate"
        success_rate, mean_length = evaluate(policy, env, eval_episodes,
                                             eval_seed)
        eval_path = os.path.join(out_dir, "eval.csv")
        write_eval_csv(eval_path, eval_episodes, success_rate, mean_length)
        artifacts.append(eval_path)
    except Exception as exc:
        raise PipelineStageError(stage, exc) from exc
    return {"success_rate": success_rate, "mean_length": mean_length,
            "artifacts": artifacts}


def cmd_pipeline(args) -> int:
    started = time.monotonic()
    relabel_cfg = _relabel_config_from_args(args)
    intent_cfg = _intent_config_from_args(args, args.seed)
    iql_cfg = _iql_config_from_args(args, args.seed + 1)
    resolved = {
        "relabel": dataclasses.asdict(relabel_cfg),
        "intents": dataclasses.asdict(intent_cfg),
        "iql": dataclasses.asdict(iql_cfg),
        "eval_episodes": args.eval_episodes,
        "max_episode_len": args.max_episode_len,
    }
    if args.dry_run:
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    env = _load_env(args.env, args.max_episode_len)
    agent_dataset = load_dataset(args.agent_data)
    expert_dataset = load_dataset(args.expert_data)
    results = run_pipeline(agent_dataset, expert_dataset, env, args.out,
                           relabel_cfg, intent_cfg, iql_cfg,
                           args.eval_episodes, args.seed + 2)
    _write_manifest(args.out, "pipeline", resolved,
                    [args.agent_data, args.expert_data, args.env],
                    results["artifacts"], args.seed, started)
    print(f"success_rate={results['success_rate']} "
          f"mean_length={results['mean_length']}")
    return 0


# --- diagnose -------------------------------------------------------------

def cmd_diagnose(args) -> int:
    started = time.monotonic()
    model = load_intent_model(args.intents)
    dataset = load_dataset(args.data)
    os.makedirs(args.out, exist_ok=True)
    rows = temporal_linearity_report(model, dataset, args.k_max)
    linearity_path = os.path.join(args.out, "linearity.csv")
    write_linearity_csv(rows, linearity_path, footer_pearson=True)
    report = value_bound_report(model, dataset, args.n_pairs,
                                np.random.default_rng(args.seed))
    bound_path = os.path.join(args.out, "bound.csv")
    write_bound_csv(report, bound_path)
    _write_manifest(args.out, "diagnose",
                    {"k_max": args.k_max, "n_pairs": args.n_pairs},
                    [args.intents, args.data],
                    [linearity_path, bound_path], args.seed, started)
    return 0


# --- sweep ----------------------------------------------------------------

def _parse_sweep_param(text: str) -> tuple[str, list]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected NAME=v1,v2,..., got {text!r}")
    name, values = text.split("=", 1)
    if name not in SWEEP_PARAMS:
        raise argparse.ArgumentTypeError(
            f"unknown sweep parameter {name!r}; allowed: {', '.join(SWEEP_PARAMS)}")
    casts = {"K": int, "alpha": float, "tau": float, "k": int,
             "epsilon": float, "aggregator": str}
    return name, [casts[name](v) for v in values.split(",")]


def cmd_sweep(args) -> int:
    started = time.monotonic()
    env = _load_env(args.env, args.max_episode_len)
    agent_dataset = load_dataset(args.agent_data)
    expert_dataset = load_dataset(args.expert_data)
    base_relabel = _relabel_config_from_args(args)
    params = args.param or []
    names = [name for name, _ in params]
    grids = [values for _, values in params]
    cells = list(itertools.product(*grids)) if grids else [()]
    os.makedirs(args.out, exist_ok=True)
    summary_path = os.path.join(args.out, "summary.csv")
    summary_rows = []
    for cell_index, cell in enumerate(cells):
        overrides = dict(zip(names, cell))
        k_experts = overrides.pop("K", None)
        relabel_cfg = dataclasses.replace(base_relabel, **overrides)
        expert_cell = expert_dataset
        if k_experts is not None:
            if k_experts > len(expert_dataset):
                raise ValueError(
                    f"K={k_experts} but expert dataset has "
                    f"{len(expert_dataset)} trajectories")
            expert_cell = Dataset(
                trajectories=expert_dataset.trajectories[:k_experts],
                meta=expert_dataset.meta)
        cell_seed = args.seed + cell_index
        cell_dir = os.path.join(args.out, f"cell_{cell_index:03d}")
        results = run_pipeline(
            agent_dataset, expert_cell, env, cell_dir, relabel_cfg,
            _intent_config_from_args(args, cell_seed),
            _iql_config_from_args(args, cell_seed + 1),
            args.eval_episodes, cell_seed + 2)
        summary_rows.append((cell, results["success_rate"]))
    with open(summary_path, "w") as fh:
        fh.write(",".join(names + ["success_rate"]) + "\n")
        for cell, rate in summary_rows:
            fh.write(",".join([str(v) for v in cell] + [repr(rate)]) + "\n")
    _write_manifest(args.out, "sweep",
                    {"params": {n: g for n, g in zip(names, grids)},
                     "base": dataclasses.asdict(base_relabel)},
                    [args.agent_data, args.expert_data, args.env],
                    [summary_path], args.seed, started)
    return 0


# --- parser ---------------------------------------------------------------

def _add_pipeline_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--agent-data", required=True)
    parser.add_argument("--expert-data", required=True)
    parser.add_argument("--env", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--config", help="key=value relabel config file")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--aggregator", choices=("max", "min"))
    parser.add_argument("--rescale",
                        choices=("none", "iql-range", "iql-range-minus-one"))
    parser.add_argument("--intent-d", type=int, default=8)
    parser.add_argument("--intent-steps", type=int, default=20000)
    parser.add_argument("--intent-lr", type=float, default=0.05)
    parser.add_argument("--intent-gamma", type=float, default=0.99)
    parser.add_argument("--intent-expectile", type=float, default=0.9)
    parser.add_argument("--intent-batch", type=int, default=128)
    parser.add_argument("--target-period", type=int, default=100)
    parser.add_argument("--geometric-p", type=float, default=0.1)
    parser.add_argument("--iql-steps", type=int, default=20000)
    parser.add_argument("--iql-lr", type=float, default=0.1)
    parser.add_argument("--iql-gamma", type=float, default=0.99)
    parser.add_argument("--iql-expectile", type=float, default=0.7)
    parser.add_argument("--iql-temperature", type=float, default=6.0)
    parser.add_argument("--iql-batch", type=int, default=64)
    parser.add_argument("--eval-episodes", type=_positive_int, default=20)
    parser.add_argument("--max-episode-len", type=_positive_int, default=100)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="intentot",
        description="Intent-space OT reward relabeling pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate datasets from a toy env")
    p.add_argument("--env", required=True,
                   help="grid spec file, or chain:<length>")
    p.add_argument("--policy", choices=("expert", "random"), required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-episode-len", type=_positive_int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pipeline", help="run the full relabeling pipeline")
    _add_pipeline_flags(p)
    p.add_argument("--dry-run", action="store_true",
                   help="print the resolved config and write nothing")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("diagnose", help="embedding diagnostics CSVs")
    p.add_argument("--intents", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--k-max", dest="k_max", type=_positive_int, default=10)
    p.add_argument("--n-pairs", dest="n_pairs", type=_positive_int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("sweep", help="Cartesian hyperparameter sweep")
    _add_pipeline_flags(p)
    p.add_argument("--param", action="append", type=_parse_sweep_param,
                   help="NAME=v1,v2 with NAME in "
                        f"{{{', '.join(SWEEP_PARAMS)}}}; repeatable")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failures -> exit 1 with a message
        print(f"error: {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
