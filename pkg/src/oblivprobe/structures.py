"""Data structures that run on the probe machine.

* :class:`LinearScan` -- the oblivious static ANN structure: one point per
  cell, every query reads every cell in ascending order.
* :class:`DynamicStructure` -- the logarithmic-method dynamization of any
  oblivious static structure. Every operation runs a query phase and then an
  insert phase, one of them fake, so the schedule of probes never depends on
  the operation kind or its argument.
* :class:`BucketedBaseline` -- a deliberately leaky structure that keeps one
  address region per subcube; the chronogram adversary reads the subcube off
  its trace.

Cells store ``point.bits + 1``; the word 0 is the null item used by fake
inserts and duplicate inserts.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

from .ann import AnnParams, Point, hamming
from .hard import SubcubeFamily
from .machine import Machine, MachineError

Answer = Optional[Point]
ACK = "ack"
NULL_WORD = 0


class CapacityError(RuntimeError):
    pass


def encode(item: Optional[Point]) -> int:
    return NULL_WORD if item is None else item.bits + 1


def decode(word: int, d: int) -> Optional[Point]:
    return None if word == NULL_WORD else Point(d, word - 1)


def ann_combine(q: Point, a: Answer, b: Answer) -> Answer:
    """Keep the answer closer to q; ties go to the lexicographically smaller; ⊥ is the identity."""
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b, key=lambda p: (hamming(p, q), p.bits))


@contextmanager
def _operation(machine: Machine, label: str):
    # reuse an already open operation (phases of one logical operation)
    if machine.in_operation:
        yield
        return
    machine.begin_operation(label)
    try:
        yield
    finally:
        machine.end_operation()


# -- static structures -------------------------------------------------------


@dataclass(frozen=True)
class LinearHandle:
    base: int
    size: int
    d: int


class StaticStructure(Protocol):
    """Preprocess/query contract composed by the dynamization."""

    def preprocess(self, machine: Machine, items: Sequence[Optional[Point]], base: int): ...

    def query(self, machine: Machine, handle, key, q: Point) -> Answer: ...

    def storage(self, n: int) -> int: ...

    def preprocess_cost(self, n: int) -> int: ...

    def query_cost(self, n: int) -> int: ...


def _check_width(machine: Machine, d: int) -> None:
    if d >= machine.word_bits:
        raise MachineError(f"{d}-bit points plus the null word need more than {machine.word_bits} bits")


def linear_preprocess(machine: Machine, items: Sequence[Optional[Point]], base: int, d: int) -> tuple[LinearHandle, None]:
    """Write ``items`` to ``base, base+1, ...``; returns (handle, query key).

    The key is None: contents are stored in the clear (identity encoding).
    """
    _check_width(machine, d)
    if base < 0 or base + len(items) > machine.cell_count:
        raise MachineError(f"out of server memory: need cells [{base}, {base + len(items)})")
    for item in items:
        if item is not None and item.d != d:
            raise ValueError(f"item of dimension {item.d} in a {d}-dimensional structure")
    machine.write_range(base, [encode(item) for item in items])
    return LinearHandle(base, len(items), d), None


def linear_query(machine: Machine, handle: LinearHandle, q: Point, params: AnnParams) -> Answer:
    if not isinstance(handle, LinearHandle):
        raise TypeError("invalid linear-scan handle")
    if q.d != handle.d:
        raise ValueError(f"query of dimension {q.d} against a {handle.d}-dimensional structure")
    words = machine.read_range(handle.base, handle.size)
    qb = q.bits + 1  # compare in the shifted encoding
    best_key = None
    for word in words:
        if word == NULL_WORD:
            continue
        key = (((word - 1) ^ (qb - 1)).bit_count(), word)
        if best_key is None or key < best_key:
            best_key = key
    if best_key is None or best_key[0] > params.r:
        return None
    return decode(best_key[1], handle.d)


@dataclass
class LinearScan:
    params: AnnParams

    def preprocess(self, machine, items, base):
        return linear_preprocess(machine, items, base, self.params.d)

    def query(self, machine, handle, key, q):
        return linear_query(machine, handle, q, self.params)

    def storage(self, n: int) -> int:
        return n

    def preprocess_cost(self, n: int) -> int:
        return n

    def query_cost(self, n: int) -> int:
        return n


# -- dynamization ------------------------------------------------------------


@dataclass
class Level:
    handle: object
    key: object
    items: list[Optional[Point]]


@dataclass
class PhaseCost:
    kind: str  # "insert" or "query"
    query_probes: int
    rebuild_probes: int
    rebuilt_level: Optional[int]

    @property
    def total(self) -> int:
        return self.query_probes + self.rebuild_probes


@dataclass(frozen=True)
class Insert:
    x: Point


@dataclass(frozen=True)
class Query:
    q: Point


Operation = Union[Insert, Query]


def level_count(n_max: int) -> int:
    """ceil(log2 n_max) levels, at least one."""
    return max(1, (n_max - 1).bit_length())


class DynamicStructure:
    """Oblivious dynamic structure built from ``log n`` static levels.

    Level ``k`` (1-based) holds exactly ``2**(k-1)`` items when occupied and
    lives at the fixed address range ``[base + 2**(k-1) - 1, base + 2**k - 1)``.
    """

    def __init__(
        self,
        machine: Machine,
        n_max: int,
        static: StaticStructure,
        d: int,
        base_address: int = 0,
        dummy: Optional[Point] = None,
    ):
        self.machine = machine
        self.n_max = n_max
        self.static = static
        self.d = d
        self.base_address = base_address
        self.dummy = dummy if dummy is not None else Point(d, 0)
        self.levels: list[Optional[Level]] = [None] * level_count(n_max)
        self.inserts = 0
        self.real_items: set[Point] = set()
        self.cost_log: list[PhaseCost] = []
        need = base_address + self.cells_needed()
        if need > machine.cell_count:
            raise MachineError(f"dynamization needs {need} cells, machine has {machine.cell_count}")

    def cells_needed(self) -> int:
        return sum(self.static.storage(2**k) for k in range(len(self.levels)))

    def level_base(self, k: int) -> int:
        return self.base_address + sum(self.static.storage(2**j) for j in range(k - 1))

    def occupied(self) -> list[int]:
        return [k + 1 for k, lvl in enumerate(self.levels) if lvl is not None]

    def level_sizes(self) -> dict[int, int]:
        return {k + 1: len(lvl.items) for k, lvl in enumerate(self.levels) if lvl is not None}

    # phases; each probes self.machine inside an already open operation

    def _query_phase(self, machine: Machine, q: Point) -> Answer:
        r = None
        for lvl in self.levels:
            if lvl is not None:
                r = ann_combine(q, r, self.static.query(machine, lvl.handle, lvl.key, q))
        return r

    def _insert_phase(self, x: Optional[Point]) -> int:
        try:
            k = self.levels.index(None) + 1
        except ValueError:
            raise CapacityError(f"all {len(self.levels)} levels full after {self.inserts} inserts") from None
        if x is not None and x in self.real_items:
            x = None  # a repeated insert is ignored; the null item keeps the schedule
        items = [x]
        for lvl in self.levels[: k - 1]:
            items.extend(lvl.items)
        handle, key = self.static.preprocess(self.machine, items, self.level_base(k))
        self.levels[k - 1] = Level(handle, key, items)
        for j in range(k - 1):
            self.levels[j] = None
        if x is not None:
            self.real_items.add(x)
        self.inserts += 1
        return k

    def operate(self, op: Operation):
        """One oblivious operation: a query phase followed by an insert phase."""
        with _operation(self.machine, "op"):
            start = self.machine.open_probe_count()
            if isinstance(op, Query):
                answer = self._query_phase(self.machine, op.q)
                mid = self.machine.open_probe_count()
                k = self._insert_phase(None)
                kind = "query"
            elif isinstance(op, Insert):
                self._query_phase(self.machine, self.dummy)
                mid = self.machine.open_probe_count()
                k = self._insert_phase(op.x)
                answer = ACK
                kind = "insert"
            else:
                raise TypeError(f"unknown operation {op!r}")
            end = self.machine.open_probe_count()
        self.cost_log.append(PhaseCost(kind, mid - start, end - mid, k))
        return answer

    def insert(self, x: Point) -> None:
        """Bare insert phase (not oblivious on its own; use :meth:`operate`)."""
        with _operation(self.machine, "insert"):
            self._insert_phase(x)

    def query(self, q: Point) -> Answer:
        """Bare query phase."""
        with _operation(self.machine, "query"):
            return self._query_phase(self.machine, q)

    def query_on(self, machine: Machine, q: Point) -> Answer:
        """Run the query phase against another machine holding the same layout."""
        return self._query_phase(machine, q)


def dyn_preprocess(machine: Machine, n_max: int, params: AnnParams, base_address: int = 0) -> DynamicStructure:
    return DynamicStructure(machine, n_max, LinearScan(params), params.d, base_address)


def dyn_insert(structure: DynamicStructure, x: Point) -> DynamicStructure:
    structure.insert(x)
    return structure


def dyn_query(structure: DynamicStructure, q: Point) -> Answer:
    return structure.query(q)


def dyn_operate(structure: DynamicStructure, op: Operation):
    return structure.operate(op)


def dynamized_machine(n_max: int, params: AnnParams, seed: int = 0, word_bits: Optional[int] = None) -> DynamicStructure:
    """Machine sized exactly for a linear-scan dynamization."""
    L = level_count(n_max)
    cells = 2**L - 1
    w = word_bits or max(params.d + 1, (cells - 1).bit_length(), 1)
    return dyn_preprocess(Machine(cells, w, 0, seed), n_max, params)


# -- cost accounting ---------------------------------------------------------


def _ops_with_bit(n: int, j: int) -> int:
    """How many c in [0, n) have bit j set."""
    period = 1 << (j + 1)
    return (n // period) * (1 << j) + max(0, n % period - (1 << j))


def _ops_with_lowbit(n: int, j: int) -> int:
    """How many c in [1, n] have lowest set bit j."""
    return n // (1 << j) - n // (1 << (j + 1))


@dataclass
class CostReport:
    operations: int
    per_op_probes: list[int]
    query_probe_total: int
    rebuild_probe_total: int
    amortized_insert_probes: float
    amortized_query_probes: float
    worst_update_probes: int  # t_u
    expected_query_probes: float  # t_q
    predicted_query_total: int
    predicted_rebuild_total: int
    predicted_amortized_sum_form: float
    predicted_amortized_informal: float
    rebuilds_per_level: dict[int, int] = field(default_factory=dict)

    @property
    def exact_match(self) -> bool:
        return (
            self.query_probe_total == self.predicted_query_total
            and self.rebuild_probe_total == self.predicted_rebuild_total
        )

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["rebuilds_per_level"] = {str(k): v for k, v in self.rebuilds_per_level.items()}
        out["exact_match"] = self.exact_match
        return out


def predicted_totals(n: int, static: StaticStructure, levels: int) -> tuple[int, int]:
    """Closed-form query and rebuild probe totals for n operations from empty."""
    query = sum(static.query_cost(2**j) * _ops_with_bit(n, j) for j in range(levels))
    rebuild = sum(static.preprocess_cost(2**j) * _ops_with_lowbit(n, j) for j in range(levels))
    return query, rebuild


def cost_account(session, structure: DynamicStructure) -> CostReport:
    """Measured costs of a finished session next to the closed-form predictions.

    ``session`` is the machine's SessionTrace; its per-operation probe counts
    must agree with the structure's phase log.
    """
    log = structure.cost_log
    per_op = [len(op) for op in session.operations]
    if per_op != [c.total for c in log]:
        raise ValueError("session trace does not match the structure's operation log")
    n = len(log)
    static = structure.static
    q_total = sum(c.query_probes for c in log)
    r_total = sum(c.rebuild_probes for c in log)
    pq, pr = predicted_totals(n, static, len(structure.levels))
    rebuilds: dict[int, int] = {}
    for c in log:
        rebuilds[c.rebuilt_level] = rebuilds.get(c.rebuilt_level, 0) + 1
    inserts = [c.total for c in log if c.kind == "insert"]
    queries = [c.total for c in log if c.kind == "query"]
    L = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    sum_form = sum(static.query_cost(2**i) for i in range(1, L + 1)) + sum(
        static.preprocess_cost(2**i) / 2**i for i in range(1, L + 1)
    )
    informal = math.log2(n) * static.query_cost(n) + math.log2(n) * static.preprocess_cost(n) / n if n > 1 else 0.0
    return CostReport(
        operations=n,
        per_op_probes=per_op,
        query_probe_total=q_total,
        rebuild_probe_total=r_total,
        amortized_insert_probes=r_total / n if n else 0.0,
        amortized_query_probes=q_total / n if n else 0.0,
        worst_update_probes=max(inserts, default=0),
        expected_query_probes=sum(queries) / len(queries) if queries else 0.0,
        predicted_query_total=pq,
        predicted_rebuild_total=pr,
        predicted_amortized_sum_form=sum_form if n else 0.0,
        predicted_amortized_informal=informal,
        rebuilds_per_level=dict(sorted(rebuilds.items())),
    )


# -- leaky baseline ----------------------------------------------------------


class BucketedBaseline:
    """One append-only region per subcube; queries scan only their own region."""

    def __init__(self, machine: Machine, family: SubcubeFamily, capacity: int, params: AnnParams, base_address: int = 0):
        _check_width(machine, family.d)
        if base_address + family.k * capacity > machine.cell_count:
            raise MachineError("machine too small for the bucket regions")
        self.machine = machine
        self.family = family
        self.capacity = capacity
        self.params = params
        self.base_address = base_address
        self.sizes = [0] * family.k

    def region(self, i: int) -> range:
        start = self.base_address + i * self.capacity
        return range(start, start + self.sizes[i])

    def full_region(self, i: int) -> range:
        start = self.base_address + i * self.capacity
        return range(start, start + self.capacity)

    def insert(self, x: Point) -> None:
        i = self.family.index_of(x)
        if i is None:
            raise ValueError(f"point {x} lies outside every subcube")
        if self.sizes[i] >= self.capacity:
            raise CapacityError(f"bucket {i} is full")
        with _operation(self.machine, "insert"):
            self.machine.write(self.base_address + i * self.capacity + self.sizes[i], encode(x))
        self.sizes[i] += 1

    def query_on(self, machine: Machine, q: Point) -> Answer:
        i = self.family.index_of(q)
        if i is None:
            return None  # no bucket to scan
        handle = LinearHandle(self.base_address + i * self.capacity, self.sizes[i], self.family.d)
        return linear_query(machine, handle, q, self.params)

    def query(self, q: Point) -> Answer:
        with _operation(self.machine, "query"):
            return self.query_on(self.machine, q)


def bucketed_machine(family: SubcubeFamily, capacity: int, params: AnnParams, seed: int = 0) -> BucketedBaseline:
    cells = max(1, family.k * capacity)
    w = max(family.d + 1, (cells - 1).bit_length())
    return BucketedBaseline(Machine(cells, w, 0, seed), family, capacity, params)


def bucketed_insert(structure: BucketedBaseline, x: Point) -> None:
    structure.insert(x)


def bucketed_query(structure: BucketedBaseline, q: Point) -> Answer:
    return structure.query(q)

