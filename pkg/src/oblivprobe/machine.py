"""Two-party oblivious cell-probe machine.

The server holds ``cell_count`` cells of ``word_bits`` bits each, the client
holds ``client_bits`` bits of private memory, and every probe the client makes
is appended to a :class:`SessionTrace`. The trace is exactly what the
honest-but-curious server observes: the address and kind of each probe, and
where one operation ends and the next begins. Cell contents never enter it.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from itertools import repeat
from typing import Callable, NamedTuple, Optional

READ = "R"
WRITE = "W"


class MachineError(Exception):
    """Raised when the cell-probe protocol is violated."""


class ProbeRecord(NamedTuple):
    address: int
    kind: str  # READ or WRITE


@dataclass
class OperationTrace:
    """Probes of one operation, kept as parallel address and kind columns."""

    label: str
    addresses: list[int] = field(default_factory=list)
    kinds: list[str] = field(default_factory=list)

    @classmethod
    def from_records(cls, label: str, records) -> "OperationTrace":
        records = list(records)
        return cls(label, [r[0] for r in records], [r[1] for r in records])

    @property
    def probes(self) -> list[ProbeRecord]:
        return list(map(ProbeRecord, self.addresses, self.kinds))

    def __len__(self) -> int:
        return len(self.addresses)


@dataclass
class SessionTrace:
    operations: list[OperationTrace] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.operations)

    def total_probes(self) -> int:
        return sum(len(op) for op in self.operations)

    def address_lists(self) -> list[list[int]]:
        return [list(op.addresses) for op in self.operations]

    def key(self) -> tuple:
        """Hashable canonical form (labels excluded; the adversary sees boundaries only)."""
        return tuple((tuple(op.addresses), "".join(op.kinds)) for op in self.operations)

    def dumps(self) -> str:
        return dump_trace(self)

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


class RandomTape:
    """Seeded, lazily expanded random bit string.

    Bit ``i`` depends only on ``(seed, i)``; blocks of 512 bits are derived
    with BLAKE2b so any position can be read without generating a prefix.
    Reads are free and never recorded.
    """

    BLOCK_BITS = 512

    def __init__(self, seed: int):
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed
        self._blocks: dict[int, int] = {}

    def _block(self, index: int) -> int:
        block = self._blocks.get(index)
        if block is None:
            h = hashlib.blake2b(
                self.seed.to_bytes(8, "little") + index.to_bytes(8, "little"),
                digest_size=64,
            )
            block = int.from_bytes(h.digest(), "little")
            self._blocks[index] = block
        return block

    def bit(self, position: int) -> int:
        if position < 0:
            raise IndexError("tape positions are non-negative")
        block, offset = divmod(position, self.BLOCK_BITS)
        return (self._block(block) >> offset) & 1

    def bits(self, start: int, count: int) -> int:
        """Bits ``start .. start+count-1`` packed little-endian into an int."""
        out = 0
        for j in range(count):
            out |= self.bit(start + j) << j
        return out


ProbeHook = Callable[[int, str], None]


class Machine:
    """Simulated server memory plus client state and trace recorder."""

    def __init__(self, cell_count: int, word_bits: int, client_bits: int = 0, seed: int = 0):
        if cell_count < 1:
            raise MachineError("cell_count must be at least 1")
        if client_bits < 0:
            raise MachineError("client_bits must be non-negative")
        need = (cell_count - 1).bit_length()  # ceil(log2 K)
        if word_bits < max(1, need):
            raise MachineError(
                f"word too narrow: {word_bits} bits cannot address {cell_count} cells "
                f"(need {need})"
            )
        self.cell_count = cell_count
        self.word_bits = word_bits
        self.client_bits = client_bits
        self.cells = [0] * cell_count
        self.client_memory = 0
        self.tape = RandomTape(seed)
        self._limit = 1 << word_bits
        self._trace = SessionTrace()
        self._open: Optional[OperationTrace] = None
        self.probe_hook: Optional[ProbeHook] = None

    @property
    def in_operation(self) -> bool:
        return self._open is not None

    def open_probe_count(self) -> int:
        if self._open is None:
            raise MachineError("no open operation")
        return len(self._open.addresses)

    def begin_operation(self, label: str = "") -> None:
        if self._open is not None:
            raise MachineError("operation already open")
        self._open = OperationTrace(label)
        self._trace.operations.append(self._open)

    def end_operation(self) -> None:
        if self._open is None:
            raise MachineError("end_operation without begin_operation")
        self._open = None

    def probe(self, address: int, kind: str, word: Optional[int] = None) -> Optional[int]:
        op = self._open
        if op is None:
            raise MachineError("probe outside an open operation")
        if not 0 <= address < self.cell_count:
            raise MachineError(f"address {address} out of range [0, {self.cell_count})")
        if kind == WRITE:
            if word is None or not 0 <= word < self._limit:
                raise MachineError(f"word {word!r} does not fit in {self.word_bits} bits")
        elif kind != READ:
            raise MachineError(f"unknown probe kind {kind!r}")
        if self.probe_hook is not None:
            self.probe_hook(address, kind)
        op.addresses.append(address)
        op.kinds.append(kind)
        if kind == WRITE:
            self.cells[address] = word
            return None
        return self.cells[address]

    def read_range(self, start: int, count: int) -> list[int]:
        """Read ``start .. start+count-1`` in ascending order, one probe per cell."""
        if self.probe_hook is not None:
            return [self.probe(a, READ) for a in range(start, start + count)]
        op = self._open
        if op is None:
            raise MachineError("probe outside an open operation")
        if count < 0 or start < 0 or start + count > self.cell_count:
            raise MachineError(f"range [{start}, {start + count}) out of range [0, {self.cell_count})")
        op.addresses.extend(range(start, start + count))
        op.kinds.extend(repeat(READ, count))
        return self.cells[start: start + count]

    def write_range(self, start: int, words: list[int]) -> None:
        """Write ``words`` to consecutive cells from ``start``, one probe per cell."""
        if self.probe_hook is not None:
            for j, word in enumerate(words):
                self.probe(start + j, WRITE, word)
            return
        op = self._open
        if op is None:
            raise MachineError("probe outside an open operation")
        count = len(words)
        if start < 0 or start + count > self.cell_count:
            raise MachineError(f"range [{start}, {start + count}) out of range [0, {self.cell_count})")
        limit = self._limit
        for word in words:
            if not 0 <= word < limit:
                raise MachineError(f"word {word!r} does not fit in {self.word_bits} bits")
        op.addresses.extend(range(start, start + count))
        op.kinds.extend(repeat(WRITE, count))
        self.cells[start: start + count] = words

    def read(self, address: int) -> int:
        return self.probe(address, READ)

    def write(self, address: int, word: int) -> None:
        self.probe(address, WRITE, word)

    def set_client_memory(self, value: int) -> None:
        if not 0 <= value < (1 << self.client_bits):
            raise MachineError(f"client memory holds only {self.client_bits} bits")
        self.client_memory = value

    def adversary_view(self) -> SessionTrace:
        if self._open is not None:
            raise MachineError("adversary_view with an operation still open")
        return SessionTrace(
            [OperationTrace(op.label, list(op.addresses), list(op.kinds))
             for op in self._trace.operations]
        )

    def snapshot(self) -> "Machine":
        """Copy of memory, client state and tape with an empty trace."""
        clone = Machine.__new__(Machine)
        clone.cell_count = self.cell_count
        clone.word_bits = self.word_bits
        clone.client_bits = self.client_bits
        clone.cells = list(self.cells)
        clone.client_memory = self.client_memory
        clone.tape = self.tape
        clone._limit = self._limit
        clone._trace = SessionTrace()
        clone._open = None
        clone.probe_hook = None
        return clone


def new_machine(K: int, w: int, m: int = 0, seed: int = 0) -> Machine:
    return Machine(K, w, m, seed)


TRACE_HEADER = "op_index,op_label,address,kind"


def dump_trace(trace: SessionTrace) -> str:
    """Serialize a trace: header, one line per probe, blank line between operations."""
    blocks = []
    for i, op in enumerate(trace.operations):
        if "," in op.label or "\n" in op.label:
            raise ValueError(f"operation label {op.label!r} may not contain ',' or newlines")
        prefix = f"{i},{op.label},"
        blocks.append("\n".join(map(prefix.__add__, map(",".join, zip(map(str, op.addresses), op.kinds)))))
    if not blocks:
        return TRACE_HEADER + "\n"
    return TRACE_HEADER + "\n" + "\n\n".join(blocks) + "\n"


def write_trace(trace: SessionTrace, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(dump_trace(trace))


def load_trace(text: str) -> SessionTrace:
    if not text.startswith(TRACE_HEADER):
        raise ValueError("missing trace header")
    body = text[len(TRACE_HEADER) + 1:]
    if not body:
        return SessionTrace()
    if body.endswith("\n"):
        body = body[:-1]
    ops = []
    for block in body.split("\n\n"):
        op = OperationTrace("")
        for line in io.StringIO(block):
            _, op.label, addr, kind = line.rstrip("\n").split(",")
            op.addresses.append(int(addr))
            op.kinds.append(kind)
        ops.append(op)
    return SessionTrace(ops)

