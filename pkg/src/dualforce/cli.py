"""Command-line pipeline: gen-data, fit-disc, gen-rewards, pretrain-fre, train, eval, recall, export."""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .discriminator import Discriminator, fit_discriminator
from .evaluation import accept_skills, evaluate_bank, export_metrics, rollout_eval
from .fre import FreModel, RewardFunction, generate_reward_family, heldout_decode_errors, pretrain_fre
from .mdp import ExpertDataset, OfflineDataset, ValidationError, check_expert_coverage, read_json, write_json
from .scenarios import Scenario, build_scenario
from .skills import SkillBank, recall_skill
from .trainer import dual_force_train, skill_successor_features, smodice_baseline_train

HELDOUT_SEED_OFFSET = 1_000_003

COMMANDS = ("gen-data", "fit-disc", "gen-rewards", "pretrain-fre", "train", "eval", "recall", "export")


class _TextLog:
    def __init__(self, text: str):
        self.text = text

    def to_csv(self) -> str:
        return self.text


def scenario_from_config(cfg: RunConfig) -> Scenario:
    sc = cfg.scenario
    kwargs = {}
    if sc.gamma is not None:
        kwargs["gamma"] = sc.gamma
    if sc.name.startswith("random"):
        kwargs["seed"] = cfg.seed
        if sc.num_actions is not None:
            kwargs["num_actions"] = sc.num_actions
    elif sc.slip is not None:
        kwargs["slip"] = sc.slip
    return build_scenario(sc.name, **kwargs)


def _need(path: Path) -> Path:
    if not path.exists():
        raise ValidationError(f"missing input {path.name}; run the earlier pipeline stage first")
    return path


def _datasets(out: Path):
    offline = OfflineDataset.from_json(read_json(_need(out / "offline.json")))
    expert = ExpertDataset.from_json(read_json(_need(out / "expert.json")))
    check_expert_coverage(expert, offline)
    return offline, expert


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ----------------------------------------------------------------------------- stages


def cmd_gen_data(cfg: RunConfig, out: Path, args) -> None:
    scenario = scenario_from_config(cfg)
    offline, expert = scenario.generate(cfg.datasets.episodes, cfg.datasets.expert_samples, cfg.seed)
    write_json(out / "offline.json", offline.to_json())
    write_json(out / "expert.json", expert.to_json())
    write_json(out / "config.json", cfg.to_json())


def cmd_fit_disc(cfg: RunConfig, out: Path, args) -> None:
    offline, expert = _datasets(out)
    scenario = scenario_from_config(cfg)
    disc = fit_discriminator(expert, offline, cfg.discriminator, cfg.seed, None, scenario.mdp.num_states)
    write_json(out / "discriminator.json", disc.to_json())


def cmd_gen_rewards(cfg: RunConfig, out: Path, args) -> None:
    scenario = scenario_from_config(cfg)
    features = scenario.features.normalized()
    train = generate_reward_family(cfg.fre, cfg.seed, features, scenario.grid_shape)
    held_cfg = cfg.fre
    if cfg.eval.heldout_rewards:
        total = sum(cfg.fre.counts.values())
        scale = cfg.eval.heldout_rewards / total
        held_cfg = replace(cfg.fre, counts={k: max(1, round(v * scale)) for k, v in cfg.fre.counts.items()})
    heldout = generate_reward_family(held_cfg, cfg.seed + HELDOUT_SEED_OFFSET, features, scenario.grid_shape)
    write_json(out / "rewards.json", {"train": [r.to_json() for r in train], "heldout": [r.to_json() for r in heldout]})


def cmd_pretrain_fre(cfg: RunConfig, out: Path, args) -> None:
    offline, _ = _datasets(out)
    scenario = scenario_from_config(cfg)
    doc = read_json(_need(out / "rewards.json"))
    train = [RewardFunction.from_json(r) for r in doc["train"]]
    heldout = [RewardFunction.from_json(r) for r in doc["heldout"]]
    pool = np.unique(offline.states)
    fre = pretrain_fre(pool, train, cfg.fre, cfg.seed, scenario.features.normalized())
    write_json(out / "fre.json", fre.to_json())
    errs = heldout_decode_errors(fre, heldout, pool, cfg.seed + HELDOUT_SEED_OFFSET)
    beats = [m < b for m, b in errs]
    write_json(out / "fre_report.json", {
        "heldout": [{"model_mse": m, "baseline_mse": b} for m, b in errs],
        "fraction_beating_baseline": float(np.mean(beats)) if beats else 0.0,
        "fingerprint": fre.fingerprint(),
    })


def cmd_train(cfg: RunConfig, out: Path, args) -> None:
    offline, expert = _datasets(out)
    scenario = scenario_from_config(cfg)
    disc = Discriminator.from_json(read_json(_need(out / "discriminator.json")))
    tcfg = cfg.trainer
    fre = None
    if tcfg.mode == "amortized":
        fre = FreModel.from_json(read_json(_need(out / "fre.json")))
    mdp = scenario.mdp if tcfg.td_mode == "exact" else None
    smodice = args.algorithm == "smodice"
    if smodice:
        bank, log = smodice_baseline_train(tcfg, offline, expert, disc, cfg.seed, scenario.features, None, mdp, fre)
        suffix = "_smodice"
    else:
        bank, log = dual_force_train(tcfg, offline, expert, disc, fre, cfg.seed, scenario.features, None, mdp)
        suffix = ""
    bank.save(out / f"bank{suffix}")
    _write_text(out / f"metrics{suffix}.csv", log.to_csv())
    write_json(out / f"train{suffix}_summary.json", {
        "algorithm": args.algorithm,
        "iterations": len(log.weight_deltas),
        "stopped_early": log.stopped_early,
        "td_clips": log.td_clips,
        "ell0": bank.config["ell0"],
        "fre_fingerprint": None if fre is None else fre.fingerprint(),
    })


def _load_bank(out: Path, name: str, cfg: RunConfig):
    scenario = scenario_from_config(cfg)
    inputs = np.eye(scenario.mdp.num_states)
    return SkillBank.load(_need(out / name), inputs), scenario


def cmd_eval(cfg: RunConfig, out: Path, args) -> None:
    bank, scenario = _load_bank(out, "bank", cfg)
    ev = cfg.eval
    iterations = max((h.iteration + 1 for s in bank.slots for h in s.history), default=0)
    start = math.ceil(ev.start_fraction * iterations)
    entries = evaluate_bank(bank, scenario.mdp, scenario.hidden_reward, ev.horizon, ev.episodes,
                            cfg.seed, ev.every, start, scenario.features)
    if (out / "bank_smodice").exists():
        base, _ = _load_bank(out, "bank_smodice", cfg)
        z = base.slots[0].history[-1].z if base.slots[0].history else None
        pi = recall_skill(base, 0, z)
        source = "smodice-baseline"
    else:
        pi = scenario.expert_policy
        source = "expert-policy"
    ref = rollout_eval(scenario.mdp, pi, scenario.hidden_reward, ev.episodes, ev.horizon, seed=[cfg.seed, 0xE7])
    accepted = accept_skills(entries, ref.mean_return, ev.threshold) if ref.mean_return > 0 else []
    write_json(out / "evaluation.json", {
        "expert_return": ref.mean_return,
        "expert_source": source,
        "threshold": ev.threshold,
        "start_iteration": start,
        "entries": entries,
        "accepted": [{k: e[k] for k in ("skill", "iteration")} for e in accepted],
    })


def cmd_recall(cfg: RunConfig, out: Path, args) -> None:
    bank, scenario = _load_bank(out, "bank", cfg)
    if not 0 <= args.skill < bank.n:
        raise ValidationError(f"unknown skill slot {args.skill}")
    hist = {h.iteration: h for h in bank.slots[args.skill].history}
    if args.iteration not in hist:
        raise ValidationError(f"no stored embedding at iteration {args.iteration} for skill {args.skill}")
    pi = recall_skill(bank, args.skill, hist[args.iteration].z)
    S = scenario.mdp.num_states
    states = range(S) if args.states is None else [int(s) for s in args.states.split(",")]
    rows = {}
    for s in states:
        if not 0 <= s < S:
            raise ValidationError(f"state {s} out of range")
        rows[str(s)] = [float(p) for p in pi(s)]
    print(json.dumps({"skill": args.skill, "iteration": args.iteration, "distributions": rows}, sort_keys=True))


def cmd_export(cfg: RunConfig, out: Path, args) -> None:
    bank, scenario = _load_bank(out, "bank", cfg)
    offline, _ = _datasets(out)
    metrics = _need(out / "metrics.csv").read_text()
    psis = skill_successor_features(bank, offline, scenario.features)
    accepted = []
    if (out / "evaluation.json").exists():
        doc = read_json(out / "evaluation.json")
        keys = {(a["skill"], a["iteration"]) for a in doc["accepted"]}
        accepted = [e for e in doc["entries"] if (e["skill"], e["iteration"]) in keys]
    export_metrics(_TextLog(metrics), bank, out, psis, accepted)


HANDLERS = {
    "gen-data": cmd_gen_data,
    "fit-disc": cmd_fit_disc,
    "gen-rewards": cmd_gen_rewards,
    "pretrain-fre": cmd_pretrain_fre,
    "train": cmd_train,
    "eval": cmd_eval,
    "recall": cmd_recall,
    "export": cmd_export,
}


# ----------------------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="run config JSON")
    common.add_argument("--out-dir", default="out", help="directory for every output file")
    common.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    common.add_argument("--mode", choices=("amortized", "exact"), default=None, help="overrides trainer.mode")
    common.add_argument("--threads", type=int, default=1, help="worker cap (the pipeline itself is sequential)")
    common.add_argument("--print-config", action="store_true", help="print the resolved config and exit")

    parser = _Parser(prog="dualforce", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "train":
            p.add_argument("--algorithm", choices=("dual-force", "smodice"), default="dual-force")
        if name == "recall":
            p.add_argument("--skill", type=int, required=True)
            p.add_argument("--iteration", type=int, required=True)
            p.add_argument("--states", default=None, help="comma-separated states (default: all)")
    return parser


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be >= 1")
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.mode is not None:
            cfg.trainer.mode = args.mode
        if args.print_config:
            print(json.dumps(asdict(cfg), sort_keys=True, indent=2))
            return 0
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](cfg, out, args)
    except ValidationError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
