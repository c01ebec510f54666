"""Standalone inequalities and counting arguments.

Reverse-Pinsker checking, exact cell-sampling resolution probabilities,
resolved-query enumeration by replaying queries against a frozen memory
image, and the bit lengths of the two compression arguments.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .ann import Point
from .hard import SubcubeFamily
from .machine import Machine

MASS_TOL = 1e-12


@dataclass
class PinskerResult:
    S: list[tuple[int, int]]
    p_S: float
    l1: float
    holds: bool


def _check_pmf(x: np.ndarray, name: str) -> None:
    if x.ndim != 2:
        raise ValueError(f"{name} must be a 2-D joint mass table")
    if (x < 0).any() or abs(x.sum() - 1.0) > MASS_TOL:
        raise ValueError(f"{name} is not a probability mass function")


def reverse_pinsker_check(p, q) -> PinskerResult:
    """Check p(S) <= 2|p - q|_1 for S = {(a, b): log2 p(a|b)/q(a|b) > 1}.

    Rows index a, columns index b. Where p(a|b) > 0 but q(a|b) is zero or
    undefined the ratio is infinite and (a, b) belongs to S.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError("p and q must share a grid")
    _check_pmf(p, "p")
    _check_pmf(q, "q")
    pb = p.sum(axis=0)
    qb = q.sum(axis=0)
    S = []
    p_S = 0.0
    for a, b in zip(*np.nonzero(p)):
        p_cond = p[a, b] / pb[b]
        q_cond = q[a, b] / qb[b] if qb[b] > 0 else 0.0
        # log2(p/q) > 1  <=>  p > 2q
        if q_cond == 0.0 or p_cond > 2.0 * q_cond:
            S.append((int(a), int(b)))
            p_S += p[a, b]
    l1 = float(np.abs(p - q).sum())
    return PinskerResult(S, p_S, l1, p_S <= 2.0 * l1 + MASS_TOL)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


@dataclass(frozen=True)
class SamplingParams:
    population: int
    sample_size: int
    probes: int

    def __post_init__(self):
        if 2 * self.probes > self.sample_size:
            raise ValueError(f"2t = {2 * self.probes} exceeds the sample size {self.sample_size}")
        if self.probes < 0 or self.sample_size > self.population:
            raise ValueError("need 0 <= 2t <= s <= population")

    @classmethod
    def from_epoch(cls, population: int, n_i: int, w: int, probes: int) -> "SamplingParams":
        return cls(population, n_i // (100 * w), probes)


def resolution_probability(params: SamplingParams) -> tuple[float, float]:
    """(exact, bound): probability that a uniform s-subset covers 2t fixed cells.

    exact = C(N - 2t, s - 2t) / C(N, s), bound = ((s - 2t) / N) ** (2t).
    """
    N, s, t2 = params.population, params.sample_size, 2 * params.probes
    if N == 0:
        return 1.0, 1.0
    exact = math.exp(_log_comb(N - t2, s - t2) - _log_comb(N, s))
    bound = ((s - t2) / N) ** t2
    return min(exact, 1.0), bound


def sample_cells(c_addresses: Iterable[int], s: int, seed: int) -> set[int]:
    pool = sorted(set(c_addresses))
    if not 0 <= s <= len(pool):
        raise ValueError(f"cannot sample {s} of {len(pool)} cells")
    return set(random.Random(seed).sample(pool, s))


class _Halt(Exception):
    pass


class MachineReplayer:
    """Re-executes queries against a frozen copy of a post-update memory image.

    ``run_query(machine, q)`` must perform the query's probes on the machine it
    is given (e.g. ``structure.query_on``).
    """

    def __init__(self, machine: Machine, run_query: Callable[[Machine, Point], object]):
        if machine.in_operation:
            raise ValueError("freeze the image between operations")
        self.image = machine.snapshot()
        self.run_query = run_query

    def resolves(self, q: Point, forbidden: set[int], probe_cap: Optional[int]) -> bool:
        m = self.image.snapshot()
        count = 0

        def hook(address: int, kind: str) -> None:
            nonlocal count
            count += 1
            if address in forbidden or (probe_cap is not None and count > probe_cap):
                raise _Halt

        m.probe_hook = hook
        m.begin_operation("replay")
        try:
            self.run_query(m, q)
        except _Halt:
            return False
        finally:
            m.end_operation()
        return True


@dataclass
class ResolvedSet:
    family: SubcubeFamily
    subcube: int
    suffixes: frozenset[int]

    def points(self) -> list[Point]:
        return [self.family.member(self.subcube, s) for s in sorted(self.suffixes)]

    def __len__(self) -> int:
        return len(self.suffixes)

    def bitmap(self) -> str:
        """Bit j (left to right) set iff suffix j is resolved."""
        return "".join("1" if j in self.suffixes else "0" for j in range(1 << self.family.d_prime))


def resolved_queries(
    replayer: MachineReplayer,
    t_addresses: Iterable[int],
    c_i_addresses: Iterable[int],
    family: SubcubeFamily,
    subcube: int,
    probe_cap: Optional[int],
) -> ResolvedSet:
    """Queries of subcube ``subcube`` that finish without leaving T inside C_i.

    Each query halts when it probes an address of C_i outside T, or when its
    probe count exceeds ``probe_cap`` (None means no cap).
    """
    if family.d_prime > 16:
        raise ValueError(f"d' = {family.d_prime} too large to enumerate the subcube")
    forbidden = set(c_i_addresses) - set(t_addresses)
    good = frozenset(
        s for s in range(1 << family.d_prime)
        if replayer.resolves(family.member(subcube, s), forbidden, probe_cap)
    )
    return ResolvedSet(family, subcube, good)


@dataclass(frozen=True)
class EncodingParams:
    n_i: int
    d_prime: int
    w: int
    m: int
    sample_cells: int
    newer_cells: int
    F: int
    gamma_size: int = 0

    def __post_init__(self):
        if not 0 <= self.F <= self.n_i:
            raise ValueError("need 0 <= F <= n_i")
        if self.gamma_size > 2**self.d_prime:
            raise ValueError("the neighborhood cannot exceed the subcube")


@dataclass
class EncodingLengths:
    case0_bits: float
    case1_bits: float
    entropy_floor: float


def encoding_lengths(params: EncodingParams, branch: str) -> EncodingLengths:
    """Bit lengths of the two encodings, against the n_i*d' entropy floor."""
    n, d, F = params.n_i, params.d_prime, params.F
    shared = 1 + 2 * params.w * (params.sample_cells + params.newer_cells) + params.m
    case0 = 1 + n * d
    if branch == "extract":
        outside = 2**d - params.gamma_size
        if outside <= 0:
            raise ValueError("gamma_size must be smaller than the subcube")
        case1 = (
            shared
            + (math.log2(n) if n > 0 else 0.0)
            + _log_comb(n, F) / math.log(2)
            + F * d
            + (n - F) * math.log2(outside)
        )
    elif branch == "weak":
        case1 = shared + n + (n - F) * d + (F * math.log2(n) if n > 0 else 0.0)
    else:
        raise ValueError(f"unknown branch {branch!r}")
    return EncodingLengths(case0, case1, n * d)
