"""The hard update/query distribution for oblivious ANN.

``k`` prefixes that are pairwise far apart carve ``k`` disjoint d'-dimensional
subcubes of the d-cube. Epoch ``i`` inserts ``n_i`` uniform points of subcube
``i``; epoch sizes grow by a factor ``beta`` going back in time, so epoch 0 is
the most recent and smallest. The query is a fixed point outside every
subcube.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

from .ann import Point, hamming


@dataclass(frozen=True)
class SubcubeFamily:
    d: int
    d_prime: int
    prefixes: tuple[int, ...]

    def __post_init__(self):
        if self.d < 4 * self.d_prime:
            raise ValueError(f"need d >= 4*d' (d={self.d}, d'={self.d_prime})")
        plen = self.prefix_len
        for a, b in combinations(self.prefixes, 2):
            if (a ^ b).bit_count() <= self.d_prime:
                raise ValueError(
                    f"prefixes {a:0{plen}b} and {b:0{plen}b} are within distance d'"
                )

    @property
    def k(self) -> int:
        return len(self.prefixes)

    @property
    def prefix_len(self) -> int:
        return self.d - self.d_prime

    def member(self, i: int, suffix: int) -> Point:
        return Point(self.d, (self.prefixes[i] << self.d_prime) | suffix)

    def index_of(self, p: Point) -> Optional[int]:
        """Subcube containing ``p``, or None if it lies outside all of them."""
        pre = p.prefix(self.prefix_len)
        try:
            return self.prefixes.index(pre)
        except ValueError:
            return None

    def contains(self, i: int, p: Point) -> bool:
        return p.d == self.d and p.prefix(self.prefix_len) == self.prefixes[i]

    def subcube_points(self, i: int) -> list[Point]:
        return [self.member(i, s) for s in range(1 << self.d_prime)]


class PrefixSearchError(RuntimeError):
    pass


def build_prefixes(
    d: int, d_prime: Optional[int], k: int, seed: int, max_attempts: int = 10_000
) -> SubcubeFamily:
    """Rejection-sample k prefixes whose pairwise distance exceeds d'.

    ``d_prime=None`` picks ``d // 4``.
    """
    if d_prime is None:
        d_prime = d // 4
    if d_prime < 1:
        raise ValueError("d' must be at least 1")
    if d < 4 * d_prime:
        raise ValueError(f"need d >= 4*d' (d={d}, d'={d_prime})")
    if k < 1:
        raise ValueError("k must be at least 1")
    rng = random.Random(seed)
    plen = d - d_prime
    bad = 0
    for _ in range(max_attempts):
        prefixes = tuple(rng.getrandbits(plen) for _ in range(k))
        bad = sum(1 for a, b in combinations(prefixes, 2) if (a ^ b).bit_count() <= d_prime)
        if bad == 0:
            return SubcubeFamily(d, d_prime, prefixes)
    raise PrefixSearchError(
        f"no valid prefix family after {max_attempts} attempts "
        f"({bad} close pairs in the last attempt)"
    )


@dataclass(frozen=True)
class EpochPlan:
    beta: int
    floor: int
    sizes: tuple[int, ...]  # sizes[i] = beta**i * floor, epoch 0 most recent

    @property
    def k(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    def epoch_of(self, op_index: int) -> int:
        """Epoch owning update ``op_index`` when updates run oldest epoch first."""
        if not 0 <= op_index < self.total:
            raise IndexError(f"update index {op_index} outside the plan")
        for i in range(self.k - 1, -1, -1):
            if op_index < self.sizes[i]:
                return i
            op_index -= self.sizes[i]
        raise AssertionError("unreachable")


def default_floor(n_total: int, m: int) -> int:
    return max(math.isqrt(n_total - 1) + 1 if n_total > 0 else 0, m * m, 1)


def epoch_plan(
    n_total: int,
    m: int = 0,
    w: int = 1,
    t_u: int = 1,
    floor_override: Optional[int] = None,
    beta_override: Optional[int] = None,
) -> EpochPlan:
    floor = default_floor(n_total, m) if floor_override is None else floor_override
    beta = (w * t_u) ** 2 if beta_override is None else beta_override
    if floor < 1:
        raise ValueError("epoch floor must be at least 1")
    if beta < 2:
        raise ValueError(f"beta must be at least 2 (got {beta})")
    if floor > n_total:
        raise ValueError(f"epoch floor {floor} exceeds the update budget {n_total}")
    sizes = []
    used = 0
    size = floor
    while used + size <= n_total:
        sizes.append(size)
        used += size
        size *= beta
    return EpochPlan(beta, floor, tuple(sizes))


def sample_epoch_updates(family: SubcubeFamily, plan: EpochPlan, i: int, seed: int) -> list[Point]:
    if not 0 <= i < plan.k:
        raise ValueError(f"epoch {i} not in plan with k={plan.k}")
    if i >= family.k:
        raise ValueError(f"epoch {i} has no subcube (family has k={family.k})")
    rng = random.Random(f"epoch:{seed}:{i}")
    return [family.member(i, rng.getrandbits(family.d_prime)) for _ in range(plan.sizes[i])]


def outside_query(family: SubcubeFamily, seed: int) -> Point:
    plen = family.prefix_len
    if (1 << plen) <= family.k:
        raise ValueError("every prefix is used by a subcube")
    rng = random.Random(f"outside:{seed}")
    used = set(family.prefixes)
    while True:
        pre = rng.getrandbits(plen)
        if pre not in used:
            return Point(family.d, (pre << family.d_prime) | rng.getrandbits(family.d_prime))


@dataclass
class UpdateScript:
    family: SubcubeFamily
    plan: EpochPlan
    epochs: dict[int, list[Point]] = field(default_factory=dict)

    def ordered(self) -> list[tuple[int, Point]]:
        """(epoch, point) pairs in execution order: oldest epoch first."""
        return [(i, p) for i in range(self.plan.k - 1, -1, -1) for p in self.epochs[i]]

    def to_json(self) -> dict:
        return {
            "d": self.family.d,
            "d_prime": self.family.d_prime,
            "prefixes": [format(p, f"0{self.family.prefix_len}b") for p in self.family.prefixes],
            "epochs": [
                {"index": i, "points": [str(p) for p in self.epochs[i]]}
                for i in range(self.plan.k - 1, -1, -1)
            ],
        }


def sample_update_script(family: SubcubeFamily, plan: EpochPlan, seed: int) -> UpdateScript:
    return UpdateScript(
        family, plan, {i: sample_epoch_updates(family, plan, i, seed) for i in range(plan.k)}
    )


def min_pairwise_distance(points: Sequence[Point]) -> int:
    if len(points) < 2:
        raise ValueError("need at least two points")
    return min(hamming(a, b) for a, b in combinations(points, 2))
