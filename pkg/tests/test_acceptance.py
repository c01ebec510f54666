"""Acceptance criteria, one test each, at the stated tolerances and runtime budgets.

Every test records a PASS/FAIL line; conftest.py prints them in the terminal summary.
Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import random
import time
from fractions import Fraction

from oblivprobe.adversary import tag_writes
from oblivprobe.analysis import MachineReplayer, resolved_queries
from oblivprobe.ann import AnnParams, Point, ann_oracle, answer_valid
from oblivprobe.experiments import ExperimentConfig, run
from oblivprobe.hard import EpochPlan, build_prefixes, sample_update_script
from oblivprobe.structures import ACK, Insert, Query, bucketed_machine, dynamized_machine

REPORT = []


def check(number, name, ok, budget, elapsed, detail):
    ok = bool(ok) and elapsed < budget
    REPORT.append(f"{'PASS' if ok else 'FAIL'} criterion {number} {name}: {detail} "
                  f"({elapsed:.2f}s, budget {budget:g}s)")
    assert ok, REPORT[-1]


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def experiment(kind, **fields):
    return run(ExperimentConfig.from_dict({"kind": kind, "seed": 20240601, **fields}))


def carry_chain_total(n):
    # rebuild cost of op j is 2^(index of lowest zero bit of j)
    return sum(1 << ((~j) & (j + 1)).bit_length() - 1 for j in range(n))


def test_c1_dynamization_obliviousness():
    rec, dt = timed(lambda: experiment("oblivcheck", n_ops=256, d=16, trials=100))
    agg = rec["aggregates"]
    check(1, "dynamization obliviousness", agg["pairs"] == 100 and agg["identical_pairs"] == 100
          and agg["max_tv"] == 0.0, 10, dt,
          f"{agg['identical_pairs']}/{agg['pairs']} pairs byte-identical, TV={agg['max_tv']}")


def test_c2_dynamization_cost_formula():
    rec, dt = timed(lambda: experiment("dynbench", n_ops=1024, d=16))
    r = rec["trials"][0]
    ok = (r["operations"] == 1024
          and r["rebuild_probe_total"] == r["predicted_rebuild_total"] == carry_chain_total(1024)
          and r["query_probe_total"] == r["predicted_query_total"] == 1024 * 1023 // 2
          and r["exact_match"])
    check(2, "dynamization cost formula", ok, 10, dt,
          f"rebuild {r['rebuild_probe_total']} vs {r['predicted_rebuild_total']}, "
          f"query {r['query_probe_total']} vs {r['predicted_query_total']}, deviation 0")


def test_c3_chronogram_attack_separation():
    rec, dt = timed(lambda: experiment("attack", d=16, d_prime=4, epochs=3, trials=1000))
    b = [row["advantage"] for row in rec["structures"]["bucketed"]]
    y = [row["advantage"] for row in rec["structures"]["dynamized"]]
    ok = len(b) == len(y) == 3 and min(b) >= 0.25 and all(a == 0 for a in y)
    check(3, "chronogram attack separation", ok, 60, dt,
          f"bucketed advantages {b}, dynamized advantages {y}")


def test_c4_cell_sampling_bound():
    rec, dt = timed(lambda: experiment("lemmas", trials=1, pinsker_instances=1))
    s = rec["sampling"]
    spot = s["spot"]
    oracle = Fraction(math.comb(98, 8), math.comb(100, 10))
    z = s["monte_carlo"]["z"]
    ok = (s["bound_failures"] == 0
          and s["monte_carlo"]["draws"] == 100_000 and abs(z) <= 3
          and oracle == Fraction(1, 110)
          and math.isclose(spot["exact"], 1 / 110, rel_tol=1e-12)
          and math.isclose(spot["bound"], 0.0064, rel_tol=1e-12))
    check(4, "cell-sampling bound", ok, 30, dt,
          f"{s['cases']} cases, {s['bound_failures']} failures, spot exact={spot['exact']:.6g} "
          f"bound={spot['bound']:.6g}, MC z={z:.3f}")


def test_c5_reverse_pinsker():
    rec, dt = timed(lambda: experiment("lemmas", trials=1, pinsker_instances=10_000,
                                       sampling_max_population=1, sampling_mc_draws=1))
    p = rec["pinsker"]
    check(5, "reverse Pinsker", p["instances"] == 10_000 and p["violations"] == 0, 10, dt,
          f"{p['violations']} violations in {p['instances']} pairs, max p(S)/(2 l1)={p['max_ratio']:.3f}")


def test_c6_pairwise_far_points():
    rec, dt = timed(lambda: experiment("lemmas", trials=200, dis_points=256, dis_dimension=1024,
                                       pinsker_instances=1, sampling_max_population=1,
                                       sampling_mc_draws=1))
    agg = rec["aggregates"]
    ok = len(rec["trials"]) == 200 and agg["distance_violations"] == 0 and agg["min_distance"] >= 0.4 * 1024
    check(6, "pairwise-far random points", ok, 30, dt,
          f"min distance {agg['min_distance']} >= {0.4 * 1024}, {agg['distance_violations']} violations")


def test_c7_expansion_oracle():
    rec, dt = timed(lambda: experiment("expansion", expansion_d=4, expansion_radii=[1, 2], trials=200))
    rows = rec["rows"]
    spot = next(r["exhaustive_min"] for r in rows if r["r"] == 2 and r["set_size"] == 1)
    ok = (rec["aggregates"]["violations"] == 0 and spot == 11
          and {(r["r"], r["set_size"]) for r in rows} == {(r, s) for r in (1, 2) for s in range(1, 5)})
    check(7, "expansion oracle", ok, 10, dt,
          f"{rec['aggregates']['violations']} violations over {len(rows)} (r, size) cells, spot={spot}")


def _read_cells(structure, family):
    probe = structure.machine.snapshot()
    probe.begin_operation("q")
    structure.query_on(probe, family.member(0, 0))
    probe.end_operation()
    return set(probe.adversary_view().operations[0].addresses)


def _resolved_sanity():
    d, dp = 32, 8
    family = build_prefixes(d, dp, 2, seed=8)
    plan = EpochPlan(2, 8, (8, 16))
    script = sample_update_script(family, plan, seed=8)
    params = AnnParams(d, 0, 1)
    findings = []

    linear = dynamized_machine(plan.total + 2, params)
    for _, x in script.ordered():
        linear.operate(Insert(x))
    tagger = tag_writes(linear.machine.adversary_view(), plan)
    replayer = MachineReplayer(linear.machine, linear.query_on)
    read = _read_cells(linear, family)
    for i in range(plan.k):
        C = tagger.cells(i)
        live = sorted(read & C)
        for drop in live:
            findings.append(("linear", i, len(resolved_queries(replayer, C - {drop}, C, family, i, None))))

    bucketed = bucketed_machine(family, max(plan.sizes), params)
    for _, x in script.ordered():
        bucketed.insert(x)
    tagger = tag_writes(bucketed.machine.adversary_view(), plan)
    replayer = MachineReplayer(bucketed.machine, bucketed.query_on)
    for i in range(plan.k):
        rs = resolved_queries(replayer, set(bucketed.region(i)), tagger.cells(i), family, i, None)
        full = set(rs.points()) == set(family.subcube_points(i))
        findings.append(("bucketed", i, len(rs) if full else -1))
    return findings


def test_c8_resolved_query_sanity():
    findings, dt = timed(_resolved_sanity)
    linear = [n for kind, _, n in findings if kind == "linear"]
    bucketed = [n for kind, _, n in findings if kind == "bucketed"]
    ok = linear and all(n == 0 for n in linear) and bucketed == [256, 256]
    check(8, "resolved-query sanity", ok, 30, dt,
          f"linear scan: {len(linear)} proper subsets T, max resolved {max(linear, default=None)}; "
          f"bucketed with T = region: resolved {bucketed} of 256")


def _ann_instances(sessions=10_000, queries=10, d=16):
    params = AnnParams(d, 2, 2)
    rng = random.Random(91)
    failures = instances = near = 0
    for _ in range(sessions):
        s = dynamized_machine(2 * queries + 2, params)
        real = []
        for _ in range(queries):
            x = Point(d, rng.getrandbits(d))
            assert s.operate(Insert(x)) == ACK
            real.append(x)
            if real and rng.random() < 0.5:
                base = rng.choice(real).bits
                for b in rng.sample(range(d), rng.randint(0, 3)):
                    base ^= 1 << b
                q = Point(d, base)
            else:
                q = Point(d, rng.getrandbits(d))
            S = set(real)
            got = s.operate(Query(q))
            want = ann_oracle(S, q, params)
            near += want is not None
            instances += 1
            failures += not (answer_valid(S, q, params, got) and answer_valid(S, q, params, want))
    return instances, failures, near


def test_c9_ann_correctness():
    (instances, failures, near), dt = timed(_ann_instances)
    check(9, "ANN correctness", instances >= 100_000 and failures == 0, 60, dt,
          f"{instances} instances, {failures} invalid answers, {near} with a point within r")
