"""Hamming-cube points, (c, r)-ANN semantics and neighborhood expansion."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Optional


@dataclass(frozen=True, order=True)
class Point:
    """A point of ``{0,1}^d`` stored as an integer, most significant coordinate first.

    Ordering on points of equal dimension is lexicographic on the bit string,
    which coincides with integer order.
    """

    d: int
    bits: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be at least 1")
        if not 0 <= self.bits < (1 << self.d):
            raise ValueError(f"bits {self.bits:#x} do not fit in dimension {self.d}")

    def __str__(self) -> str:
        return format(self.bits, f"0{self.d}b")

    def to_json(self) -> str:
        return str(self)

    @classmethod
    def from_str(cls, s: str) -> "Point":
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"not a binary string: {s!r}")
        return cls(len(s), int(s, 2))

    def prefix(self, length: int) -> int:
        return self.bits >> (self.d - length)

    def suffix(self, length: int) -> int:
        return self.bits & ((1 << length) - 1)


def hamming(p: Point, q: Point) -> int:
    if p.d != q.d:
        raise ValueError(f"dimension mismatch: {p.d} vs {q.d}")
    return (p.bits ^ q.bits).bit_count()


@dataclass(frozen=True)
class AnnParams:
    d: int
    r: int
    c: float = 1.0

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("radius must be non-negative")
        if self.c < 1:
            raise ValueError("approximation factor must be at least 1")
        if self.c * self.r > self.d:
            raise ValueError(f"c*r = {self.c * self.r} exceeds d = {self.d}")

    @classmethod
    def for_subcube(cls, d_prime: int, c: float = 2.0) -> "AnnParams":
        """Default lower-bound parameters: r = round(0.01 d'), c*r <= 0.24 d'."""
        r = round(0.01 * d_prime)
        if c * r > 0.24 * d_prime:
            raise ValueError("c*r must not exceed 0.24*d'")
        return cls(d_prime, r, c)


def nearest(points: Iterable[Point], q: Point) -> Optional[Point]:
    """Closest point to ``q``; ties go to the lexicographically smallest."""
    best = None
    best_key = None
    for p in points:
        key = (hamming(p, q), p.bits)
        if best_key is None or key < best_key:
            best, best_key = p, key
    return best


def ann_oracle(S: Iterable[Point], q: Point, params: AnnParams) -> Optional[Point]:
    """Brute-force (c, r)-ANN: the nearest point if it lies within r, else None (⊥)."""
    p = nearest(S, q)
    if p is None or hamming(p, q) > params.r:
        return None
    return p


def answer_valid(S: Iterable[Point], q: Point, params: AnnParams, answer: Optional[Point]) -> bool:
    S = set(S)
    dists = [hamming(p, q) for p in S]
    within_r = sum(1 for x in dists if x <= params.r)
    member_ok = answer is not None and answer in S and hamming(answer, q) <= params.c * params.r
    if within_r == 0:
        return answer is None
    if within_r == 1:
        return member_ok
    # uniqueness promise broken: either reply is acceptable if well formed
    return answer is None or member_ok


def _check_dim(d: int, limit: int) -> None:
    if d > limit:
        raise ValueError(f"dimension {d} too large for enumeration (limit {limit})")


def _ball_offsets(d: int, r: int) -> list[int]:
    masks = []
    for k in range(min(r, d) + 1):
        for idx in combinations(range(d), k):
            m = 0
            for i in idx:
                m |= 1 << i
            masks.append(m)
    return masks


def neighborhood(V: Iterable[Point], r: int, d: int) -> set[Point]:
    """All points of the d-cube within distance r of some point of V."""
    _check_dim(d, 24)
    offsets = _ball_offsets(d, r)
    out = set()
    for v in V:
        if v.d != d:
            raise ValueError(f"point of dimension {v.d} in a {d}-cube")
        out.update(v.bits ^ m for m in offsets)
    return {Point(d, x) for x in out}


def expansion_ratio(V: Iterable[Point], r: int, d: int) -> float:
    V = set(V)
    if not V:
        raise ValueError("expansion of the empty set is undefined")
    return len(neighborhood(V, r, d)) / len(V)


def exhaustive_min_expansion(d: int, set_size: int, r: int) -> int:
    """min |Γ_r(V)| over every V of the given size in the d-cube (d <= 4)."""
    _check_dim(d, 4)
    n = 1 << d
    if not 0 <= set_size <= n:
        raise ValueError(f"set_size must be in [0, {n}]")
    if set_size == 0:
        return 0
    offsets = _ball_offsets(d, r)
    balls = []
    for x in range(n):
        mask = 0
        for m in offsets:
            mask |= 1 << (x ^ m)
        balls.append(mask)
    best = n
    for V in combinations(range(n), set_size):
        cover = 0
        for x in V:
            cover |= balls[x]
        best = min(best, cover.bit_count())
    return best
