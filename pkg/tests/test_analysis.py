import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oblivprobe.adversary import tag_writes
from oblivprobe.analysis import (
    EncodingParams,
    MachineReplayer,
    SamplingParams,
    encoding_lengths,
    resolution_probability,
    resolved_queries,
    reverse_pinsker_check,
    sample_cells,
)
from oblivprobe.ann import AnnParams
from oblivprobe.hard import EpochPlan, build_prefixes, sample_update_script
from oblivprobe.structures import Insert, bucketed_machine, dynamized_machine


# -- reverse Pinsker


def test_pinsker_identical():
    p = np.full((3, 2), 1 / 6)
    res = reverse_pinsker_check(p, p)
    assert res.S == [] and res.p_S == 0 and res.l1 == 0 and res.holds


def test_pinsker_point_mass_example():
    # four values of a under a single b: q(a0|b0) = 1/4, so the ratio is 4
    p = np.array([[1.0], [0.0], [0.0], [0.0]])
    q = np.full((4, 1), 0.25)
    res = reverse_pinsker_check(p, q)
    assert res.S == [(0, 0)]
    assert res.p_S == 1.0
    assert res.l1 == pytest.approx(1.5)
    assert res.holds


def test_pinsker_ratio_exactly_two_not_in_S():
    p = np.array([[1.0, 0.0], [0.0, 0.0]])
    q = np.full((2, 2), 0.25)  # q(a0|b0) = 1/2, log ratio exactly 1
    assert reverse_pinsker_check(p, q).S == []


def test_pinsker_zero_conditional_joins_S():
    p = np.array([[0.5, 0.0], [0.0, 0.5]])
    q = np.array([[0.0, 0.0], [0.0, 1.0]])  # q(b0) = 0: conditional undefined
    res = reverse_pinsker_check(p, q)
    assert (0, 0) in res.S and res.holds


def test_pinsker_rejects_bad_masses():
    with pytest.raises(ValueError):
        reverse_pinsker_check([[0.5, 0.6]], [[0.5, 0.5]])
    with pytest.raises(ValueError):
        reverse_pinsker_check([[1.0]], [[0.5, 0.5]])
    with pytest.raises(ValueError):
        reverse_pinsker_check([[1.5, -0.5]], [[0.5, 0.5]])


def _normalize(x):
    x = np.asarray(x, dtype=float)
    return x / x.sum()


@st.composite
def pmf_pairs(draw):
    a, b = draw(st.integers(1, 8)), draw(st.integers(1, 8))
    elems = st.floats(0, 1, allow_nan=False) | st.just(0.0)
    p = draw(arrays(float, (a, b), elements=elems))
    q = draw(arrays(float, (a, b), elements=elems))
    if p.sum() == 0:
        p[0, 0] = 1.0
    if q.sum() == 0:
        q[-1, -1] = 1.0
    p = _normalize(p)
    return p, (p.copy() if draw(st.booleans()) and draw(st.booleans()) else _normalize(q))


@settings(max_examples=500)
@given(pmf_pairs())
def test_pinsker_property(pair):
    p, q = pair
    res = reverse_pinsker_check(p, q)
    assert res.holds
    assert 0 <= res.l1 <= 2 + 1e-9


# -- resolution probability


def exact_fraction(N, s, t):
    return Fraction(math.comb(N - 2 * t, s - 2 * t), math.comb(N, s))


def test_resolution_spot_value():
    exact, bound = resolution_probability(SamplingParams(100, 10, 1))
    assert exact == pytest.approx(1 / 110, rel=1e-12)
    assert float(exact_fraction(100, 10, 1)) == pytest.approx(10 * 9 / (100 * 99), rel=1e-15)
    assert bound == pytest.approx(0.0064, rel=1e-12)


def test_resolution_trivial_cases():
    assert resolution_probability(SamplingParams(50, 7, 0)) == (1.0, 1.0)
    assert resolution_probability(SamplingParams(30, 30, 4))[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        SamplingParams(100, 3, 2)
    with pytest.raises(ValueError):
        SamplingParams(5, 6, 1)


def test_resolution_matches_exact_fractions():
    for N in range(1, 60):
        for t in range(0, 4):
            for s in range(2 * t, N + 1):
                exact, _ = resolution_probability(SamplingParams(N, s, t))
                assert exact == pytest.approx(float(exact_fraction(N, s, t)), rel=1e-9)


def test_sampling_params_from_epoch():
    assert SamplingParams.from_epoch(500, 4000, 2, 3).sample_size == 20


def test_resolution_monte_carlo():
    rng = random.Random(7)
    N, s, t = 20, 8, 1
    exact, _ = resolution_probability(SamplingParams(N, s, t))
    draws = 20_000
    hits = sum(1 for _ in range(draws) if {0, 1} <= set(rng.sample(range(N), s)))
    sigma = math.sqrt(exact * (1 - exact) / draws)
    assert abs(hits / draws - exact) <= 3 * sigma


# -- cell sampling


def test_sample_cells_examples():
    C = list(range(10, 30))
    assert sample_cells(C, len(C), 1) == set(C)
    assert sample_cells(C, 0, 1) == set()
    assert sample_cells(C, 5, 3) == sample_cells(C, 5, 3)
    with pytest.raises(ValueError):
        sample_cells(C, 21, 0)


def test_sample_cells_inclusion_frequency():
    C = list(range(40))
    s, draws = 10, 10_000
    hits = sum(1 for seed in range(draws) if 17 in sample_cells(C, s, seed))
    p = s / len(C)
    assert abs(hits / draws - p) <= 3 * math.sqrt(p * (1 - p) / draws)


# -- resolved queries


@pytest.fixture(scope="module")
def hard_instance():
    fam = build_prefixes(32, 8, 2, seed=4)
    plan = EpochPlan(2, 8, (8, 16))
    return fam, plan, sample_update_script(fam, plan, 1)


def _loaded(kind, fam, plan, script):
    params = AnnParams(32, 0, 1)
    if kind == "bucketed":
        s = bucketed_machine(fam, 16, params)
        for _, x in script.ordered():
            s.insert(x)
    else:
        s = dynamized_machine(plan.total + 2, params)
        for _, x in script.ordered():
            s.operate(Insert(x))
    return s, tag_writes(s.machine.adversary_view(), plan)


def test_linear_scan_missing_cell_resolves_nothing(hard_instance):
    fam, plan, script = hard_instance
    s, tagger = _loaded("dynamized", fam, plan, script)
    replayer = MachineReplayer(s.machine, s.query_on)
    probe = s.machine.snapshot()
    probe.begin_operation("q")
    s.query_on(probe, fam.member(0, 0))
    probe.end_operation()
    read = set(probe.adversary_view().operations[0].addresses)
    for i in range(2):
        C = sorted(tagger.cells(i))
        live = sorted(read & set(C))
        if not live:
            continue  # the whole epoch was overwritten by later rebuilds
        T = set(C) - {live[0]}
        assert len(resolved_queries(replayer, T, C, fam, i, None)) == 0
        assert len(resolved_queries(replayer, C, C, fam, i, None)) == 2**8


def test_bucketed_full_sample_resolves_subcube(hard_instance):
    fam, plan, script = hard_instance
    s, tagger = _loaded("bucketed", fam, plan, script)
    replayer = MachineReplayer(s.machine, s.query_on)
    for i in range(2):
        C = tagger.cells(i)
        assert C == set(s.region(i))
        rs = resolved_queries(replayer, set(s.region(i)), C, fam, i, None)
        assert len(rs) == 2**8
        assert rs.bitmap() == "1" * 256
        assert fam.contains(i, rs.points()[0])


def test_probe_cap_zero(hard_instance):
    fam, plan, script = hard_instance
    s, tagger = _loaded("bucketed", fam, plan, script)
    replayer = MachineReplayer(s.machine, s.query_on)
    C = tagger.cells(0)
    assert len(resolved_queries(replayer, C, C, fam, 0, 0)) == 0
    assert len(resolved_queries(replayer, C, C, fam, 0, plan.sizes[0])) == 256
    assert len(resolved_queries(replayer, C, C, fam, 0, plan.sizes[0] - 1)) == 0


def test_replay_does_not_touch_original(hard_instance):
    fam, plan, script = hard_instance
    s, tagger = _loaded("dynamized", fam, plan, script)
    before = (list(s.machine.cells), s.machine.adversary_view().dumps())
    replayer = MachineReplayer(s.machine, s.query_on)
    resolved_queries(replayer, set(), tagger.cells(0), fam, 0, None)
    assert before == (list(s.machine.cells), s.machine.adversary_view().dumps())


def test_resolved_rejects_large_subcube():
    fam = build_prefixes(80, 17, 2, seed=0)
    with pytest.raises(ValueError):
        resolved_queries(None, set(), set(), fam, 0, None)


def test_resolved_monotone_in_T(hard_instance):
    fam, plan, script = hard_instance
    # queries of a partly filled bucket structure touch different cell subsets
    s, tagger = _loaded("bucketed", fam, plan, script)
    replayer = MachineReplayer(s.machine, s.query_on)
    C = sorted(tagger.cells(1))
    rng = random.Random(0)
    for _ in range(10):
        T = set(rng.sample(C, rng.randrange(len(C) + 1)))
        T2 = T | set(rng.sample(C, rng.randrange(len(C) + 1)))
        for cap in (None, 5, 16):
            a = resolved_queries(replayer, T, C, fam, 1, cap).suffixes
            b = resolved_queries(replayer, T2, C, fam, 1, cap).suffixes
            assert a <= b


# -- encoding lengths


def test_weak_branch_no_savings_when_F_zero():
    p = EncodingParams(n_i=64, d_prime=10, w=8, m=5, sample_cells=3, newer_cells=4, F=0)
    out = encoding_lengths(p, "weak")
    assert out.case1_bits == 1 + 2 * 8 * 7 + 5 + 64 + 64 * 10
    assert out.case0_bits == 1 + 64 * 10
    assert out.entropy_floor == 640


@pytest.mark.parametrize("n,d", [(16, 7), (16, 20), (64, 9), (1024, 13), (1024, 12)])
def test_weak_branch_full_F_crossover(n, d):
    p = EncodingParams(n_i=n, d_prime=d, w=8, m=0, sample_cells=0, newer_cells=0, F=n)
    out = encoding_lengths(p, "weak")
    assert out.case1_bits == pytest.approx(1 + n + n * math.log2(n))
    if d > math.log2(n) + 2:
        assert out.case1_bits < out.entropy_floor


def test_extract_branch_saves_one_bit_per_outside_point():
    d = 10
    base = dict(n_i=100, d_prime=d, w=4, m=0, sample_cells=0, newer_cells=0, F=30)
    half = encoding_lengths(EncodingParams(**base, gamma_size=2 ** (d - 1)), "extract")
    empty = encoding_lengths(EncodingParams(**base, gamma_size=0), "extract")
    assert empty.case1_bits - half.case1_bits == pytest.approx(70 * 1.0)
    expected = 1 + math.log2(100) + math.log2(math.comb(100, 30)) + 30 * d + 70 * (d - 1)
    assert half.case1_bits == pytest.approx(expected)


def test_extract_branch_errors():
    p = EncodingParams(n_i=4, d_prime=3, w=1, m=0, sample_cells=0, newer_cells=0, F=1, gamma_size=8)
    with pytest.raises(ValueError):
        encoding_lengths(p, "extract")
    with pytest.raises(ValueError):
        encoding_lengths(p, "other")
    with pytest.raises(ValueError):
        EncodingParams(n_i=4, d_prime=3, w=1, m=0, sample_cells=0, newer_cells=0, F=5)


def test_case0_constant_in_F_and_case1_tracks_complement():
    rows = [
        encoding_lengths(EncodingParams(50, 12, 4, 3, 2, 2, F, 1000), b)
        for b in ("weak", "extract") for F in range(0, 51, 5)
    ]
    assert len({r.case0_bits for r in rows}) == 1
    weak = [r.case1_bits for r in rows[:11]]
    # each F point swaps a d'-bit code for a log2(n_i)-bit index
    assert all(a > b for a, b in zip(weak, weak[1:]))
