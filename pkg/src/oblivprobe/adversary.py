"""The honest-but-curious observer.

After the update phase the adversary tags every written address with the
epoch of its last write. For a query it then counts how many probes land in
cells of each epoch, and guesses "the query lies in subcube i" when the count
for epoch i reaches a threshold.
"""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Optional, Sequence

from .hard import EpochPlan
from .machine import WRITE, OperationTrace, SessionTrace


@dataclass
class EpochTagger:
    k: int
    tags: dict[int, int] = field(default_factory=dict)  # address -> epoch of last write

    def cells(self, i: int) -> set[int]:
        """C_i: addresses whose last update-phase write happened in epoch i."""
        return {a for a, e in self.tags.items() if e == i}

    def sizes(self) -> list[int]:
        counts = Counter(self.tags.values())
        return [counts.get(i, 0) for i in range(self.k)]


def tag_writes(update_trace: SessionTrace, plan: EpochPlan) -> EpochTagger:
    if len(update_trace.operations) != plan.total:
        raise ValueError(
            f"update trace has {len(update_trace.operations)} operations, plan expects {plan.total}"
        )
    tagger = EpochTagger(plan.k)
    op_index = 0
    for i in range(plan.k - 1, -1, -1):
        for op in update_trace.operations[op_index: op_index + plan.sizes[i]]:
            for address, kind in zip(op.addresses, op.kinds):
                if kind == WRITE:
                    tagger.tags[address] = i
        op_index += plan.sizes[i]
    return tagger


@dataclass
class ProbeHistogram:
    t: list[int]
    untagged: int = 0

    @property
    def total(self) -> int:
        return sum(self.t) + self.untagged


def count_epoch_probes(query_trace: OperationTrace, tagger: EpochTagger) -> ProbeHistogram:
    t = [0] * tagger.k
    untagged = 0
    tags = tagger.tags
    for address in query_trace.addresses:
        e = tags.get(address)
        if e is None:
            untagged += 1
        else:
            t[e] += 1
    return ProbeHistogram(t, untagged)


def default_threshold(in_histograms: Sequence[ProbeHistogram], epoch: int) -> int:
    """Median of t_i over in-subcube calibration queries, rounded up."""
    med = statistics.median(h.t[epoch] for h in in_histograms)
    return int(-(-med // 1))


def distinguish(
    in_histograms: Sequence[ProbeHistogram],
    out_histograms: Sequence[ProbeHistogram],
    epoch: int,
    threshold: Optional[int] = None,
) -> float:
    """Advantage of "output 1 iff t_i >= threshold" at telling in-subcube queries from outside ones."""
    if not in_histograms or not out_histograms:
        raise ValueError("both sample sets must be non-empty")
    if threshold is None:
        threshold = default_threshold(in_histograms, epoch)
    hit_in = sum(1 for h in in_histograms if h.t[epoch] >= threshold)
    hit_out = sum(1 for h in out_histograms if h.t[epoch] >= threshold)
    return hit_in / len(in_histograms) - hit_out / len(out_histograms)


@dataclass
class TvEstimate:
    value: float
    mode: str
    samples: tuple[int, int] = (0, 0)


def _half_l1(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def _view_key(v) -> Hashable:
    if isinstance(v, SessionTrace):
        return v.digest()
    return v


def tv_distance(samples_1, samples_2, mode: str = "empirical") -> TvEstimate:
    """Statistical distance between two distributions of adversary views.

    ``exact``: both arguments are fully enumerated ``{view: probability}``
    mappings. ``empirical``: both are sequences of sampled views (traces are
    hashed), and the plug-in estimate is returned.
    """
    if mode == "exact":
        if not isinstance(samples_1, Mapping) or not isinstance(samples_2, Mapping):
            raise ValueError("exact mode needs fully enumerated distributions")
        p = {_view_key(k): float(v) for k, v in samples_1.items()}
        q = {_view_key(k): float(v) for k, v in samples_2.items()}
        for dist in (p, q):
            if any(v < 0 for v in dist.values()) or abs(sum(dist.values()) - 1.0) > 1e-12:
                raise ValueError("exact mode needs probability mass functions")
        return TvEstimate(min(1.0, _half_l1(p, q)), "exact")
    if mode == "empirical":
        a = Counter(_view_key(v) for v in samples_1)
        b = Counter(_view_key(v) for v in samples_2)
        if not a or not b:
            raise ValueError("empirical mode needs at least one sample per side")
        na, nb = sum(a.values()), sum(b.values())
        p = {k: c / na for k, c in a.items()}
        q = {k: c / nb for k, c in b.items()}
        return TvEstimate(_half_l1(p, q), "empirical", (na, nb))
    raise ValueError(f"unknown mode {mode!r}")


def point_mass(view) -> dict:
    """Exact distribution of a deterministic structure's view."""
    return {_view_key(view): 1.0}
