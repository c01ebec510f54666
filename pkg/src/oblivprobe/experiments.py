"""Seeded experiment runners behind the CLI subcommands.

Each runner takes a validated :class:`ExperimentConfig` and returns a plain
JSON-serializable record. Given the same config (seed included) the record is
identical byte for byte once serialized with :func:`dumps_record`.
"""

from __future__ import annotations

import copy
import json
import random
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import adversary, analysis
from .ann import AnnParams, Point, exhaustive_min_expansion, neighborhood
from .hard import (
    EpochPlan,
    build_prefixes,
    epoch_plan,
    min_pairwise_distance,
    outside_query,
    sample_update_script,
)
from .machine import dump_trace
from .structures import (
    Insert,
    Query,
    bucketed_machine,
    cost_account,
    dynamized_machine,
)

KINDS = ("oblivcheck", "attack", "dynbench", "lemmas", "expansion", "resolve")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    trials: Optional[int] = None
    # ANN / machine
    d: int = 16
    r: int = 2
    c: float = 2.0
    w: Optional[int] = None
    m: int = 0
    # operation sequences (oblivcheck, dynbench)
    n_ops: int = 256
    insert_fraction: float = 0.5
    # hard distribution (attack, resolve)
    d_prime: Optional[int] = None
    epochs: int = 3
    n_total: Optional[int] = None
    floor: Optional[int] = None
    beta: Optional[int] = None
    t_u: int = 1
    threshold: Optional[int] = None
    # lemmas
    pinsker_instances: int = 10_000
    pinsker_max_side: int = 8
    sampling_max_population: int = 200
    sampling_max_t: int = 5
    sampling_mc_draws: int = 100_000
    dis_points: int = 256
    dis_dimension: int = 1024
    dis_fraction: float = 0.4
    # expansion
    expansion_d: int = 4
    expansion_radii: list[int] = field(default_factory=lambda: [1, 2])
    # resolve
    sample_fractions: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75, 1.0])
    probe_cap: Optional[int] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        cfg = cls(**{**KIND_DEFAULTS.get(data.get("kind"), {}), **data})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        errors = []
        if self.kind not in KINDS:
            errors.append(f"kind: must be one of {', '.join(KINDS)}")
        if not 0 <= self.seed < 2**64:
            errors.append("seed: must be an unsigned 64-bit integer")
        if self.trials is not None and self.trials < 1:
            errors.append("trials: must be positive")
        try:
            AnnParams(self.d, self.r, self.c)
        except ValueError as e:
            errors.append(f"d/r/c: {e}")
        if self.n_ops < 0:
            errors.append("n_ops: must be non-negative")
        if not 0.0 <= self.insert_fraction <= 1.0:
            errors.append("insert_fraction: must lie in [0, 1]")
        if self.kind in ("attack", "resolve"):
            dp = self.d_prime if self.d_prime is not None else self.d // 4
            if dp < 1 or self.d < 4 * dp:
                errors.append(f"d_prime: need 1 <= d' and d >= 4*d' (d={self.d}, d'={dp})")
            if self.epochs < 1:
                errors.append("epochs: must be positive")
            if self.floor is not None and self.floor < 1:
                errors.append("floor: must be positive")
            if self.beta is not None and self.beta < 2:
                errors.append("beta: must be at least 2")
        if self.kind == "expansion" and not 1 <= self.expansion_d <= 4:
            errors.append("expansion_d: exhaustive oracle needs 1 <= d <= 4")
        if self.kind == "resolve":
            dp = self.d_prime if self.d_prime is not None else self.d // 4
            if dp > 16:
                errors.append("d_prime: resolve enumerates the subcube, needs d' <= 16")
            if any(not 0 <= f <= 1 for f in self.sample_fractions):
                errors.append("sample_fractions: must lie in [0, 1]")
        if errors:
            raise ConfigError("; ".join(errors))

    @property
    def params(self) -> AnnParams:
        return AnnParams(self.d, self.r, self.c)

    def n_trials(self) -> int:
        return self.trials if self.trials is not None else DEFAULT_TRIALS[self.kind]


KIND_DEFAULTS = {
    "attack": {"d": 16, "d_prime": 4, "r": 0, "floor": 4, "beta": 2},
    "resolve": {"d": 32, "d_prime": 8, "r": 0, "floor": 8, "beta": 2, "epochs": 2},
    "dynbench": {"n_ops": 1024},
}

DEFAULT_TRIALS = {
    "oblivcheck": 100,
    "attack": 1000,
    "dynbench": 1,
    "lemmas": 200,
    "expansion": 200,
    "resolve": 1,
}


def trial_seed(base: int, *parts) -> int:
    """Independent per-trial seed derived from the base seed."""
    return random.Random(":".join(str(p) for p in (base, *parts))).getrandbits(63)


def random_operations(n: int, d: int, rng: random.Random, insert_fraction: float = 0.5):
    return [
        (Insert if rng.random() < insert_fraction else Query)(Point(d, rng.getrandbits(d)))
        for _ in range(n)
    ]


def run_session(ops, cfg: ExperimentConfig, seed: int):
    s = dynamized_machine(len(ops) + 1, cfg.params, seed=seed, word_bits=cfg.w)
    answers = [s.operate(op) for op in ops]
    return s, answers


# -- oblivcheck ---------------------------------------------------------------


def run_oblivcheck(cfg: ExperimentConfig) -> dict:
    trials = []
    for t in range(cfg.n_trials()):
        rng_a = random.Random(trial_seed(cfg.seed, "seq", t, 0))
        rng_b = random.Random(trial_seed(cfg.seed, "seq", t, 1))
        ops_a = random_operations(cfg.n_ops, cfg.d, rng_a, cfg.insert_fraction)
        ops_b = random_operations(cfg.n_ops, cfg.d, rng_b, cfg.insert_fraction)
        sa, _ = run_session(ops_a, cfg, cfg.seed)
        sb, _ = run_session(ops_b, cfg, cfg.seed)
        va, vb = sa.machine.adversary_view(), sb.machine.adversary_view()
        da, db = va.dumps(), vb.dumps()
        tv = adversary.tv_distance({da: 1.0}, {db: 1.0}, "exact")
        trials.append({
            "trial": t,
            "identical": da == db,
            "tv": tv.value,
            "probes": va.total_probes(),
        })
    return {
        "trials": trials,
        "aggregates": {
            "pairs": len(trials),
            "identical_pairs": sum(r["identical"] for r in trials),
            "max_tv": max((r["tv"] for r in trials), default=0.0),
        },
    }


# -- attack --------------------------------------------------------------------


def _attack_histograms(structure_kind: str, cfg, family, plan, trials):
    params = AnnParams(cfg.d, cfg.r, cfg.c)
    ins = [[] for _ in range(plan.k)]
    outs = []
    for t in range(trials):
        seed = trial_seed(cfg.seed, "attack", t)
        script = sample_update_script(family, plan, seed)
        if structure_kind == "bucketed":
            s = bucketed_machine(family, max(plan.sizes), params, seed=seed)
            for _, x in script.ordered():
                s.insert(x)
        else:
            s = dynamized_machine(plan.total + 2, params, seed=seed, word_bits=cfg.w)
            for _, x in script.ordered():
                s.operate(Insert(x))
        tagger = adversary.tag_writes(s.machine.adversary_view(), plan)

        def observe(q: Point):
            probe = copy.deepcopy(s)
            if structure_kind == "bucketed":
                probe.query(q)
            else:
                probe.operate(Query(q))
            return adversary.count_epoch_probes(probe.machine.adversary_view().operations[-1], tagger)

        rng = random.Random(seed)
        for i in range(plan.k):
            ins[i].append(observe(family.member(i, rng.getrandbits(family.d_prime))))
        outs.append(observe(outside_query(family, seed)))
    return ins, outs


def run_attack(cfg: ExperimentConfig) -> dict:
    dp = cfg.d_prime if cfg.d_prime is not None else cfg.d // 4
    family = build_prefixes(cfg.d, dp, cfg.epochs, trial_seed(cfg.seed, "prefixes"))
    n_total = cfg.n_total
    if n_total is None:
        floor = cfg.floor or 1
        beta = cfg.beta or (cfg.w or 1) ** 2 * cfg.t_u**2
        n_total = sum(floor * beta**i for i in range(cfg.epochs))
    plan = epoch_plan(n_total, cfg.m, cfg.w or cfg.d + 1, cfg.t_u, cfg.floor, cfg.beta)
    if plan.k < cfg.epochs:
        raise ConfigError(f"epochs: budget {n_total} fits only {plan.k} epochs")
    plan = EpochPlan(plan.beta, plan.floor, plan.sizes[: cfg.epochs])
    trials = cfg.n_trials()
    out = {
        "family": {"d": family.d, "d_prime": family.d_prime,
                   "prefixes": [format(p, f"0{family.prefix_len}b") for p in family.prefixes]},
        "plan": {"beta": plan.beta, "floor": plan.floor, "sizes": list(plan.sizes)},
        "structures": {},
    }
    for kind in ("bucketed", "dynamized"):
        ins, outs = _attack_histograms(kind, cfg, family, plan, trials)
        rows = []
        for i in range(plan.k):
            thr = cfg.threshold if cfg.threshold is not None else adversary.default_threshold(ins[i], i)
            adv = adversary.distinguish(ins[i], outs, i, thr)
            t_in = [h.t[i] for h in ins[i]]
            tv = adversary.tv_distance(t_in, [h.t[i] for h in outs]).value
            rows.append({
                "epoch": i,
                "t_i_mean": statistics.fmean(t_in),
                "t_i_median": statistics.median(t_in),
                "advantage": adv,
                "threshold": thr,
                "t_i_tv": tv,
                "sound": adv <= 2 * tv + 1e-12,
            })
        out["structures"][kind] = rows
    out["aggregates"] = {
        kind: {
            "min_advantage": min(r["advantage"] for r in rows),
            "max_abs_advantage": max(abs(r["advantage"]) for r in rows),
        }
        for kind, rows in out["structures"].items()
    }
    return out


def attack_csv(record: dict, structure: str) -> str:
    lines = ["epoch,t_i_mean,t_i_median,advantage,threshold"]
    for r in record["structures"][structure]:
        lines.append(f"{r['epoch']},{r['t_i_mean']!r},{r['t_i_median']!r},{r['advantage']!r},{r['threshold']}")
    return "\n".join(lines) + "\n"


# -- dynbench ------------------------------------------------------------------


def run_dynbench(cfg: ExperimentConfig) -> dict:
    trials = []
    for t in range(cfg.n_trials()):
        rng = random.Random(trial_seed(cfg.seed, "bench", t))
        ops = random_operations(cfg.n_ops, cfg.d, rng, cfg.insert_fraction)
        s, _ = run_session(ops, cfg, cfg.seed)
        report = cost_account(s.machine.adversary_view(), s)
        rec = report.to_json()
        rec.pop("per_op_probes")
        rec["trial"] = t
        trials.append(rec)
    return {
        "trials": trials,
        "aggregates": {"all_exact": all(r["exact_match"] for r in trials)},
    }


# -- lemmas --------------------------------------------------------------------


def random_pinsker_pair(rng: np.random.Generator, max_side: int = 8):
    """Random joint pmfs, mixing in the p = q, disjoint and near-identical extremes."""
    a, b = rng.integers(1, max_side + 1, size=2)
    p = rng.dirichlet(np.full(a * b, rng.choice([0.1, 1.0, 5.0]))).reshape(a, b)
    style = rng.integers(0, 5)
    if style == 0:
        q = p.copy()
    elif style == 1 and a * b > 1:
        mask = rng.random(a * b) < 0.5
        if mask.all() or not mask.any():
            mask[0] = not mask[0]
        pv = rng.dirichlet(np.ones(a * b)) * mask
        qv = rng.dirichlet(np.ones(a * b)) * ~mask
        p = (pv / pv.sum()).reshape(a, b)
        q = (qv / qv.sum()).reshape(a, b)
    elif style == 2:
        q = p + rng.normal(0, 1e-3, size=p.shape)
        q = np.clip(q, 0, None)
        q /= q.sum()
    else:
        q = rng.dirichlet(np.ones(a * b)).reshape(a, b)
    return p / p.sum(), q


def run_lemmas(cfg: ExperimentConfig) -> dict:
    rng = np.random.default_rng(trial_seed(cfg.seed, "pinsker"))
    violations = 0
    worst = 0.0
    for _ in range(cfg.pinsker_instances):
        p, q = random_pinsker_pair(rng, cfg.pinsker_max_side)
        res = analysis.reverse_pinsker_check(p, q)
        violations += not res.holds
        if res.l1 > 0:
            worst = max(worst, res.p_S / (2 * res.l1))
    pinsker = {"instances": cfg.pinsker_instances, "violations": violations, "max_ratio": worst}

    bound_failures = 0
    cases = 0
    for N in range(1, cfg.sampling_max_population + 1):
        for t in range(cfg.sampling_max_t + 1):
            for s in range(2 * t, N + 1):
                exact, bound = analysis.resolution_probability(analysis.SamplingParams(N, s, t))
                cases += 1
                bound_failures += exact < bound * (1 - 1e-12)
    spot = analysis.resolution_probability(analysis.SamplingParams(100, 10, 1))
    mc_rng = np.random.default_rng(trial_seed(cfg.seed, "sampling"))
    draws = cfg.sampling_mc_draws
    hits = _mc_resolution_hits(100, 10, 2, draws, mc_rng)
    sigma = (spot[0] * (1 - spot[0]) / draws) ** 0.5
    sampling = {
        "cases": cases,
        "bound_failures": bound_failures,
        "spot": {"population": 100, "sample": 10, "t": 1, "exact": spot[0], "bound": spot[1]},
        "monte_carlo": {"draws": draws, "frequency": hits / draws,
                        "z": (hits / draws - spot[0]) / sigma},
    }

    trials = []
    dis_rng = random.Random(trial_seed(cfg.seed, "dis"))
    for t in range(cfg.n_trials()):
        pts = [Point(cfg.dis_dimension, dis_rng.getrandbits(cfg.dis_dimension)) for _ in range(cfg.dis_points)]
        dist = min_pairwise_distance(pts)
        trials.append({"trial": t, "min_distance": dist,
                       "ok": dist >= cfg.dis_fraction * cfg.dis_dimension})
    return {
        "pinsker": pinsker,
        "sampling": sampling,
        "trials": trials,
        "aggregates": {
            "pinsker_violations": violations,
            "sampling_bound_failures": bound_failures,
            "distance_violations": sum(not r["ok"] for r in trials),
            "min_distance": min(r["min_distance"] for r in trials),
        },
    }


def _mc_resolution_hits(population: int, s: int, covered: int, draws: int, rng, chunk: int = 10_000) -> int:
    """How many uniform s-subsets of range(population) contain cells 0..covered-1."""
    hits = 0
    for start in range(0, draws, chunk):
        n = min(chunk, draws - start)
        chosen = np.argpartition(rng.random((n, population)), s - 1, axis=1)[:, :s]
        hits += int(((chosen < covered).sum(axis=1) == covered).sum())
    return hits


# -- expansion -----------------------------------------------------------------


def run_expansion(cfg: ExperimentConfig) -> dict:
    d = cfg.expansion_d
    rng = random.Random(trial_seed(cfg.seed, "expansion"))
    rows = []
    for r in cfg.expansion_radii:
        for size in range(1, min(4, 2**d) + 1):
            floor_ = exhaustive_min_expansion(d, size, r)
            below = 0
            ratios = []
            for _ in range(cfg.n_trials()):
                V = {Point(d, x) for x in rng.sample(range(2**d), size)}
                g = len(neighborhood(V, r, d))
                below += g < floor_
                ratios.append(g / size)
            rows.append({"r": r, "set_size": size, "exhaustive_min": floor_,
                         "violations": below, "mean_ratio": statistics.fmean(ratios),
                         "min_ratio": min(ratios)})
    return {"rows": rows, "aggregates": {"violations": sum(r["violations"] for r in rows)}}


# -- resolve -------------------------------------------------------------------


def run_resolve(cfg: ExperimentConfig) -> dict:
    from .analysis import MachineReplayer, resolved_queries, sample_cells

    dp = cfg.d_prime if cfg.d_prime is not None else cfg.d // 4
    family = build_prefixes(cfg.d, dp, cfg.epochs, trial_seed(cfg.seed, "prefixes"))
    floor = cfg.floor or 1
    beta = cfg.beta or 2
    plan = epoch_plan(sum(floor * beta**i for i in range(cfg.epochs)), cfg.m, 1, 1, floor, beta)
    params = cfg.params
    results = []
    for t in range(cfg.n_trials()):
        seed = trial_seed(cfg.seed, "resolve", t)
        script = sample_update_script(family, plan, seed)
        structures = {
            "bucketed": bucketed_machine(family, max(plan.sizes), params, seed=seed),
            "dynamized": dynamized_machine(plan.total + 2, params, seed=seed, word_bits=cfg.w),
        }
        for name, s in structures.items():
            for _, x in script.ordered():
                if name == "bucketed":
                    s.insert(x)
                else:
                    s.operate(Insert(x))
            tagger = adversary.tag_writes(s.machine.adversary_view(), plan)
            replayer = MachineReplayer(s.machine, s.query_on)
            for i in range(plan.k):
                C = sorted(tagger.cells(i))
                for frac in cfg.sample_fractions:
                    size = round(frac * len(C))
                    T = sample_cells(C, size, trial_seed(seed, name, i, frac))
                    rs = resolved_queries(replayer, T, C, family, i, cfg.probe_cap)
                    results.append({
                        "trial": t, "structure": name, "epoch": i, "cells": len(C),
                        "sample": size, "resolved": len(rs), "bitmap": rs.bitmap(),
                    })
    return {
        "plan": {"beta": plan.beta, "floor": plan.floor, "sizes": list(plan.sizes)},
        "results": results,
        "aggregates": dict(sorted(Counter(
            f"{r['structure']}:{r['sample'] == r['cells']}:{r['resolved'] == 2**dp}" for r in results
        ).items())),
    }


RUNNERS = {
    "oblivcheck": run_oblivcheck,
    "attack": run_attack,
    "dynbench": run_dynbench,
    "lemmas": run_lemmas,
    "expansion": run_expansion,
    "resolve": run_resolve,
}


def run(cfg: ExperimentConfig) -> dict:
    cfg.validate()
    body = RUNNERS[cfg.kind](cfg)
    return {
        "experiment": f"{cfg.kind}-{cfg.seed}",
        "config": asdict(cfg),
        **body,
    }


def dumps_record(record: dict) -> str:
    return json.dumps(record, sort_keys=True, indent=2) + "\n"


def session_trace_text(cfg: ExperimentConfig) -> str:
    """Trace dump of the first oblivcheck session for ``cfg``."""
    rng = random.Random(trial_seed(cfg.seed, "seq", 0, 0))
    s, _ = run_session(random_operations(cfg.n_ops, cfg.d, rng, cfg.insert_fraction), cfg, cfg.seed)
    return dump_trace(s.machine.adversary_view())
