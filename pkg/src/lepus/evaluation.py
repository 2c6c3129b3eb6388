"""Round-based evaluation: distance and collision accounting, the stability
metric, report emission, and the ablation runner.

Aggregation convention (matches the reference tables' arithmetic):
avg_distance is per agent-round (total distance / (M * R)); avg_collisions
is per round, summed over agents; every collision event increments both
involved agents' counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sim as simulator
from .sim import SimParams, Termination
from .track import TrackSpec
from .seeding import as_seed_sequence
from .trainer import AgentEnsemble, select_actions


@dataclass
class RoundStats:
    distances: np.ndarray           # (M,) meters of centerline progress
    collisions: np.ndarray          # (M,) per-agent collision increments
    termination: str
    steps: int


@dataclass
class EvalReport:
    n_agents: int
    n_rounds: int
    agent_distances: np.ndarray     # (M,) totals over all rounds
    agent_collisions: np.ndarray    # (M,) totals over all rounds
    avg_distance: float
    avg_max_distance: float
    avg_collisions: float
    stability: float
    extra: dict = field(default_factory=dict)


def stability(avg_distance: float, avg_collisions: float) -> float:
    """Driving distance per unit (1 + collisions)."""
    if avg_distance < 0 or avg_collisions < 0:
        raise ValueError("inputs must be nonnegative")
    return avg_distance / (1.0 + avg_collisions)


def run_rounds(policy_fn, track: TrackSpec, n_agents: int, n_rounds: int,
               seed, sim_params: SimParams | None = None, obs_dim: int = 65,
               spacing: float = 20.0) -> list[RoundStats]:
    """Deterministic evaluation rounds; policy_fn maps (M, D) obs -> (M, 3)."""
    if n_rounds < 1:
        raise ValueError("need at least one round")
    sim_params = sim_params or SimParams()
    seeds = as_seed_sequence(seed).spawn(n_rounds)
    stats = []
    for r in range(n_rounds):
        state = simulator.reset(track, n_agents, spacing, seeds[r],
                                sim_params, obs_dim)
        obs = state._last_obs
        col = np.zeros(n_agents, dtype=np.int64)
        steps = 0
        term: Termination | None = None
        while term is None:
            out = simulator.step(state, policy_fn(obs))
            obs = out.observations
            for i, j in out.collisions:
                col[i] += 1
                col[j] += 1
            steps += 1
            term = out.termination
        stats.append(RoundStats(np.maximum(state.progress, 0.0).copy(), col,
                                term.reason, steps))
    return stats


def ensemble_policy_fn(ens: AgentEnsemble):
    return lambda obs: select_actions(ens, obs, explore=False)


def aggregate(stats: list[RoundStats], n_agents: int) -> EvalReport:
    if not stats:
        raise ValueError("no round stats to aggregate")
    R = len(stats)
    dist = np.sum([s.distances for s in stats], axis=0)
    col = np.sum([s.collisions for s in stats], axis=0)
    avg_distance = float(dist.sum() / (n_agents * R))
    avg_max = float(np.mean([s.distances.max() for s in stats]))
    avg_col = float(col.sum() / R)
    return EvalReport(
        n_agents=n_agents, n_rounds=R,
        agent_distances=dist.astype(np.float64), agent_collisions=col,
        avg_distance=avg_distance, avg_max_distance=avg_max,
        avg_collisions=avg_col, stability=stability(avg_distance, avg_col))


def report_rows(report: EvalReport) -> list[tuple[str, float]]:
    rows = []
    for i in range(report.n_agents):
        rows.append((f"Agent-{i + 1} Distance", float(report.agent_distances[i])))
        rows.append((f"Agent-{i + 1} Collision", float(report.agent_collisions[i])))
    rows.append(("Avg. Distance", report.avg_distance))
    rows.append(("Avg. Max. Distance", report.avg_max_distance))
    rows.append(("Avg. Collision No.", report.avg_collisions))
    rows.append(("Stability", report.stability))
    return rows


def emit_report(report: EvalReport, path_base) -> dict:
    """Write CSV and JSON renderings; returns the JSON document."""
    base = Path(path_base)
    doc = {
        "n_agents": report.n_agents, "n_rounds": report.n_rounds,
        "agent_distances": report.agent_distances.tolist(),
        "agent_collisions": report.agent_collisions.tolist(),
        "avg_distance": report.avg_distance,
        "avg_max_distance": report.avg_max_distance,
        "avg_collisions": report.avg_collisions,
        "stability": report.stability,
        "extra": report.extra,
    }
    with open(base.with_suffix(".json"), "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
    with open(base.with_suffix(".csv"), "w", newline="") as f:
        w = csv.writer(f)
        for label, value in report_rows(report):
            w.writerow([label, repr(value)])
    return doc


def load_report(path_json) -> EvalReport:
    with open(path_json) as f:
        doc = json.load(f)
    return EvalReport(
        n_agents=doc["n_agents"], n_rounds=doc["n_rounds"],
        agent_distances=np.asarray(doc["agent_distances"]),
        agent_collisions=np.asarray(doc["agent_collisions"]),
        avg_distance=doc["avg_distance"],
        avg_max_distance=doc["avg_max_distance"],
        avg_collisions=doc["avg_collisions"], stability=doc["stability"],
        extra=doc.get("extra", {}))


def ablation_run(variants: dict, seeds: list, out_dir, train_and_eval) -> dict:
    """Train and evaluate each variant under each seed with identical budgets.

    variants maps name -> variant config (opaque to this function);
    train_and_eval(name, variant, seed) must return an EvalReport.
    Emits one report per (variant, seed), an index JSON, and pairwise mean
    stability deltas.
    """
    if len(variants) < 2:
        raise ValueError("ablation needs at least two variants")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {"variants": {}, "stability_deltas": {}}
    mean_stab = {}
    for name, variant in variants.items():
        paths, stabs = [], []
        for seed in seeds:
            report = train_and_eval(name, variant, seed)
            base = out_dir / f"{name}_seed{seed}"
            emit_report(report, base)
            paths.append(str(base.with_suffix(".json")))
            stabs.append(report.stability)
        mean_stab[name] = float(np.mean(stabs))
        index["variants"][name] = {
            "reports": paths, "stabilities": stabs,
            "mean_stability": mean_stab[name],
        }
    names = list(variants)
    for a in names:
        for b in names:
            if a < b:
                index["stability_deltas"][f"{a} - {b}"] = mean_stab[a] - mean_stab[b]
    with open(out_dir / "index.json", "w") as f:
        json.dump(index, f, indent=2, sort_keys=True)
    return index
