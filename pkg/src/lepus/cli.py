"""Command-line entry point wiring the pipeline stages.

    lepus gen-experts|train-rnd|pretrain|train|eval|ablate
          [--config PATH] [--preset NAME] [--seed S] [--out DIR]
          [--no-pretrain] [--force] [--axes a,b,...]

Every stage is a pure function of (config, input artifacts, seed); outputs
land in the config's out_dir with fixed names.  Each artifact records the
run-config digest and downstream stages refuse mismatched inputs unless
--force is passed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
from pathlib import Path


from . import evaluation, expert, pretrain, rnd, trainer
from .artifact_io import ArtifactError
from .config import RunConfig, component_seed, preset

DATASET = "expert_dataset.lep"
DATASET_SUMMARY = "expert_summary.json"
RND_MODEL = "rnd_model.lep"
RND_CURVE = "rnd_loss.csv"
POLICY = "policy_pretrained.lep"
DISCRIMINATOR = "discriminator.lep"
PRETRAIN_CURVE = "pretrain_curves.csv"
ENSEMBLE = "ensemble.lep"
TRAIN_METRICS = "train_metrics.csv"
EVAL_REPORT = "eval_report"


class StageError(Exception):
    pass


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _check_digest(meta: dict, cfg: RunConfig, what: str, force: bool) -> None:
    found = meta.get("run_config_digest")
    if found is not None and found != cfg.digest() and not force:
        raise StageError(
            f"{what} was produced under a different configuration "
            f"(digest {found[:12]} != {cfg.digest()[:12]}); re-run the "
            f"upstream stage or pass --force")


def _write_curve_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


def cmd_gen_experts(cfg: RunConfig) -> Path:
    cfg.validate()
    out = _out(cfg)
    track = cfg.scenario.make_track()
    dataset, summary = expert.generate_dataset(
        track, cfg.scenario.n_agents, cfg.expert.n_rounds,
        cfg.expert.max_steps_keep, component_seed(cfg.seed, "expert"),
        cfg.scenario.sim_params(), cfg.expert.gains, cfg.scenario.spacing,
        cfg.scenario.obs_dim, cfg.expert.min_keep_fraction)
    dataset.meta["run_config_digest"] = cfg.digest()
    path = out / DATASET
    expert.save_dataset(path, dataset)
    summary["config_digest"] = cfg.digest()
    with open(out / DATASET_SUMMARY, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    return path


def cmd_train_rnd(cfg: RunConfig, dataset_path=None, force=False) -> Path:
    cfg.validate()
    out = _out(cfg)
    ds = expert.load_dataset(dataset_path or out / DATASET)
    _check_digest(ds.meta, cfg, "expert dataset", force)
    model = rnd.build_rnd(cfg.scenario.n_agents, cfg.scenario.obs_dim,
                          cfg.rnd.v, component_seed(cfg.seed, "rnd"))
    if ds.n_rounds > 1:
        train_ds, _ = ds.split_rounds(cfg.rnd.holdout_fraction)
    else:
        train_ds = ds
    curve = []
    if cfg.rnd.iters > 0:
        curve = rnd.train_distillation(model, train_ds, cfg.rnd.iters,
                                       cfg.rnd.minibatch, cfg.rnd.lr,
                                       component_seed(cfg.seed, "rnd-train"))
        if cfg.rnd.auto_calibrate_v:
            rnd.calibrate_v(model, train_ds, cfg.rnd.calibrate_target)
    else:
        rnd.fit_normalization(model, train_ds)
    path = out / RND_MODEL
    rnd.save_rnd(path, model, {"run_config_digest": cfg.digest()})
    _write_curve_csv(out / RND_CURVE, ["iteration", "mse_loss"],
                     [(i, v) for i, v in enumerate(curve)])
    return path


def cmd_pretrain(cfg: RunConfig, dataset_path=None, force=False) -> Path:
    cfg.validate()
    out = _out(cfg)
    ds = expert.load_dataset(dataset_path or out / DATASET)
    _check_digest(ds.meta, cfg, "expert dataset", force)
    ds = ds.take_fraction(cfg.pretrain.expert_fraction)
    policy = pretrain.build_policy(cfg.scenario.obs_dim,
                                   component_seed(cfg.seed, "policy-init"))
    hidden, act = (((300, 600), "tanh") if cfg.pretrain.discriminator == "A"
                   else ((128, 64, 32), "leaky_relu"))
    dis = pretrain.build_discriminator(
        cfg.scenario.n_agents, cfg.scenario.obs_dim,
        component_seed(cfg.seed, "discriminator"), hidden, act)
    curve = pretrain.adversarial_pretrain(
        policy, dis, ds, cfg.pretrain.dis_iter, cfg.pretrain.batch,
        cfg.pretrain.dis_lr, cfg.pretrain.policy_lr,
        component_seed(cfg.seed, "pretrain"))
    from .nets import save_net
    path = out / POLICY
    save_net(path, policy, {"run_config_digest": cfg.digest()})
    pretrain.save_discriminator(out / DISCRIMINATOR, dis,
                                {"run_config_digest": cfg.digest()})
    _write_curve_csv(out / PRETRAIN_CURVE,
                     ["iteration", "dis_objective", "policy_loss"],
                     [(i, o, l) for i, (o, l) in enumerate(curve)])
    return path


def cmd_train(cfg: RunConfig, no_pretrain=False, force=False) -> Path:
    cfg.validate()
    out = _out(cfg)
    model = rnd.load_rnd(out / RND_MODEL)
    if (model.n_agents, model.obs_dim) != (cfg.scenario.n_agents,
                                           cfg.scenario.obs_dim):
        raise StageError("RND model dimensions do not match scenario")
    policy_init = None
    if not no_pretrain:
        from .nets import load_net
        policy_init, meta = load_net(out / POLICY)
        _check_digest(meta, cfg, "pre-trained policy", force)
    ens = trainer.build_ensemble(
        cfg.scenario.n_agents, cfg.scenario.obs_dim,
        component_seed(cfg.seed, "ensemble"), cfg.trainer.policy_lr,
        cfg.trainer.q_lr, cfg.trainer.gamma, cfg.trainer.ell, policy_init)
    settings = trainer.TrainSettings(
        episodes=cfg.trainer.episodes, spacing=cfg.scenario.spacing,
        buffer_capacity=cfg.trainer.buffer_capacity, warmup=cfg.trainer.warmup,
        batch=cfg.trainer.batch, ou_theta=cfg.trainer.ou_theta,
        ou_sigma=cfg.trainer.ou_sigma, ou_mu=cfg.trainer.ou_mu)
    metrics = trainer.train(cfg.scenario.make_track(), model, ens, settings,
                            component_seed(cfg.seed, "train"),
                            cfg.scenario.sim_params())
    path = out / ENSEMBLE
    trainer.save_ensemble(path, ens, {"run_config_digest": cfg.digest(),
                                      "pretrained": not no_pretrain})
    if metrics:
        header = list(metrics[0])
        _write_curve_csv(out / TRAIN_METRICS, header,
                         [[m[k] for k in header] for m in metrics])
    else:
        _write_curve_csv(out / TRAIN_METRICS, ["episode"], [])
    return path


def cmd_eval(cfg: RunConfig, ensemble_path=None, force=False) -> Path:
    cfg.validate()
    out = _out(cfg)
    path = Path(ensemble_path or out / ENSEMBLE)
    if not path.exists():
        raise StageError(f"ensemble checkpoint not found: {path}")
    ens = trainer.load_ensemble(path)
    stats = evaluation.run_rounds(
        evaluation.ensemble_policy_fn(ens), cfg.scenario.make_track(),
        cfg.scenario.n_agents, cfg.eval.rounds,
        component_seed(cfg.seed, "eval"), cfg.scenario.sim_params(),
        cfg.scenario.obs_dim, cfg.scenario.spacing)
    report = evaluation.aggregate(stats, cfg.scenario.n_agents)
    report.extra = {"config_digest": cfg.digest(),
                    "terminations": [s.termination for s in stats]}
    evaluation.emit_report(report, out / EVAL_REPORT)
    return out / (EVAL_REPORT + ".json")


def _variant_cfgs(cfg: RunConfig, axes: list[str]) -> dict:
    """Variant map for the ablation axes; 'pretrain' (Lepus vs Lepus-p) is
    always included."""
    variants = {"lepus": (copy.deepcopy(cfg), False),
                "lepus_p": (copy.deepcopy(cfg), True)}
    for axis in axes:
        if axis == "pretrain":
            continue
        if axis == "expert_fraction":
            for frac in (0.3, 0.5, 1.0):
                c = copy.deepcopy(cfg)
                c.pretrain.expert_fraction = frac
                variants[f"expert_{int(frac * 100)}"] = (c, False)
        elif axis == "pretrain_steps":
            base = cfg.pretrain.dis_iter
            for mult in (0.5, 1.0, 2.5):
                c = copy.deepcopy(cfg)
                c.pretrain.dis_iter = int(base * mult)
                variants[f"steps_{c.pretrain.dis_iter}"] = (c, False)
        elif axis == "discriminator":
            c = copy.deepcopy(cfg)
            c.pretrain.discriminator = "B"
            variants["discriminator_b"] = (c, False)
        else:
            raise StageError(f"unknown ablation axis {axis!r}")
    return variants


def run_variant(cfg: RunConfig, no_pretrain: bool, seed: int,
                out_dir: str) -> "evaluation.EvalReport":
    """Full pipeline for one ablation cell, in its own output directory."""
    c = copy.deepcopy(cfg)
    c.seed = seed
    c.out_dir = out_dir
    cmd_gen_experts(c)
    cmd_train_rnd(c)
    if not no_pretrain:
        cmd_pretrain(c)
    cmd_train(c, no_pretrain=no_pretrain)
    report_path = cmd_eval(c)
    return evaluation.load_report(report_path)


def cmd_ablate(cfg: RunConfig, axes: list[str] | None = None,
               n_seeds: int = 3) -> Path:
    cfg.validate()
    out = _out(cfg) / "ablation"
    variants = _variant_cfgs(cfg, axes or ["pretrain"])
    seeds = [cfg.seed + k for k in range(n_seeds)]

    def train_and_eval(name, variant, seed):
        vcfg, no_pre = variant
        return run_variant(vcfg, no_pre, seed, str(out / f"{name}_seed{seed}"))

    evaluation.ablation_run(variants, seeds, out, train_and_eval)
    return out / "index.json"


def _build_config(args) -> RunConfig:
    if args.preset and args.config:
        raise StageError("--preset and --config are mutually exclusive")
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        cfg = RunConfig.load_json(args.config)
    else:
        cfg = RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lepus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    commands = ["gen-experts", "train-rnd", "pretrain", "train", "eval", "ablate"]
    for name in commands:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--preset", default=None,
                       help="desk3 | desk4 | paper3 | paper4")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="ignore config-digest mismatches on inputs")
        if name == "train":
            p.add_argument("--no-pretrain", action="store_true",
                           help="skip the pre-trained policy (Lepus-p)")
        if name == "ablate":
            p.add_argument("--axes", default="pretrain",
                           help="comma list: pretrain,expert_fraction,"
                                "pretrain_steps,discriminator")
            p.add_argument("--n-seeds", type=int, default=3)
    args = parser.parse_args(argv)
    try:
        cfg = _build_config(args)
        if args.command == "gen-experts":
            out = cmd_gen_experts(cfg)
        elif args.command == "train-rnd":
            out = cmd_train_rnd(cfg, force=args.force)
        elif args.command == "pretrain":
            out = cmd_pretrain(cfg, force=args.force)
        elif args.command == "train":
            out = cmd_train(cfg, no_pretrain=args.no_pretrain, force=args.force)
        elif args.command == "eval":
            out = cmd_eval(cfg, force=args.force)
        else:
            out = cmd_ablate(cfg, args.axes.split(","), args.n_seeds)
        print(out)
        return 0
    except (StageError, ArtifactError, ValueError, RuntimeError, OSError) as e:
        json.dump({"error": str(e), "type": type(e).__name__}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
