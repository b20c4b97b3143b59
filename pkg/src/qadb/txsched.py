"""Conflict-free transaction scheduling as slot assignment.

Two transactions conflict under serializability when they share an object
that at least one of them writes, and under snapshot isolation when they
both write a shared object. Conflicting transactions should not run in the
same slot. The QUBO uses one-hot variables ``y[i, s]`` (transaction ``i`` in
slot ``s``) with hard penalties for the one-hot and conflict constraints and
a unit-slope soft cost ``s`` that prefers early slots.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable, Sequence

from .qubo import QuboModel, add_squared
from .sampler import Sample

__all__ = [
    "Isolation",
    "Transaction",
    "Workload",
    "ConflictGraph",
    "Schedule",
    "SlotVarMap",
    "MAX_ORACLE_TRANSACTIONS",
    "conflicts",
    "greedy_slot_bound",
    "schedule_penalty",
    "schedule_terms",
    "encode_schedule",
    "decode_schedule",
    "evaluate_slots",
    "oracle_schedule",
]

MAX_ORACLE_TRANSACTIONS = 10
MAX_ORACLE_ASSIGNMENTS = 10**7


class Isolation(str, Enum):
    SERIALIZABLE = "serializable"
    SNAPSHOT = "snapshot"


@dataclass(frozen=True)
class Transaction:
    id: str
    reads: frozenset[str] = frozenset()
    writes: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "reads", frozenset(self.reads))
        object.__setattr__(self, "writes", frozenset(self.writes))


@dataclass(frozen=True)
class Workload:
    transactions: tuple[Transaction, ...]
    isolation: Isolation = Isolation.SERIALIZABLE

    def __post_init__(self) -> None:
        object.__setattr__(self, "transactions", tuple(self.transactions))
        object.__setattr__(self, "isolation", Isolation(self.isolation))
        ids = [t.id for t in self.transactions]
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        if dupes:
            raise ValueError(f"duplicate transaction ids: {dupes}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Workload":
        txs = [
            Transaction(str(t["id"]), frozenset(t.get("reads", [])), frozenset(t.get("writes", [])))
            for t in data["transactions"]
        ]
        return cls(tuple(txs), Isolation(data.get("isolation", "serializable")))

    def to_dict(self) -> dict[str, Any]:
        return {
            "isolation": self.isolation.value,
            "transactions": [
                {"id": t.id, "reads": sorted(t.reads), "writes": sorted(t.writes)} for t in self.transactions
            ],
        }


@dataclass(frozen=True)
class ConflictGraph:
    n: int
    edges: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self) -> None:
        norm = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-edge on transaction {a}")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge ({a}, {b}) out of range for n={self.n}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "ConflictGraph":
        return cls(n, frozenset(edges))

    def neighbors(self, i: int) -> list[int]:
        return sorted({b if a == i else a for a, b in self.edges if i in (a, b)})

    def degree(self, i: int) -> int:
        return len(self.neighbors(i))


@dataclass(frozen=True)
class Schedule:
    slot: tuple[int, ...]
    violations: int
    makespan: int
    repaired: bool = False

    @property
    def slot_sum(self) -> int:
        return sum(self.slot)


@dataclass(frozen=True)
class SlotVarMap:
    n: int
    slots: int

    def index(self, transaction: int, slot: int) -> int:
        if not (0 <= transaction < self.n and 0 <= slot < self.slots):
            raise IndexError(f"(transaction={transaction}, slot={slot}) out of range")
        return transaction * self.slots + slot

    @property
    def num_variables(self) -> int:
        return self.n * self.slots

    def as_dict(self) -> dict[tuple[int, int], int]:
        return {(i, s): self.index(i, s) for i in range(self.n) for s in range(self.slots)}


def _conflicting(a: Transaction, b: Transaction, isolation: Isolation) -> bool:
    if isolation is Isolation.SNAPSHOT:
        return bool(a.writes & b.writes)
    shared = (a.reads | a.writes) & (b.reads | b.writes)
    return bool(shared & (a.writes | b.writes))


def conflicts(w: Workload, isolation: Isolation | str | None = None) -> ConflictGraph:
    """Conflict graph of a workload under its (or an overriding) isolation level."""
    iso = w.isolation if isolation is None else Isolation(isolation)
    txs = w.transactions
    edges = {
        (i, j)
        for i, j in itertools.combinations(range(len(txs)), 2)
        if _conflicting(txs[i], txs[j], iso)
    }
    return ConflictGraph(len(txs), frozenset(edges))


def greedy_slot_bound(g: ConflictGraph) -> int:
    """Colors used by largest-degree-first greedy coloring (at least 1)."""
    order = sorted(range(g.n), key=lambda i: (-g.degree(i), i))
    color: dict[int, int] = {}
    for i in order:
        taken = {color[j] for j in g.neighbors(i) if j in color}
        color[i] = next(c for c in itertools.count() if c not in taken)
    return max(color.values(), default=0) + 1


def schedule_penalty(g: ConflictGraph, slots: int) -> float:
    """``1 + n (S - 1)``, above the largest possible soft cost."""
    return 1.0 + g.n * (slots - 1)


def schedule_terms(
    g: ConflictGraph, slots: int, penalty: float | None = None
) -> tuple[QuboModel, QuboModel, SlotVarMap]:
    """Soft objective and hard-penalty models; their sum is the encoding."""
    if isinstance(slots, bool) or int(slots) != slots or slots < 1:
        raise ValueError(f"slot count must be a positive integer, got {slots!r}")
    a = schedule_penalty(g, slots) if penalty is None else float(penalty)
    if not (math.isfinite(a) and a > 0):
        raise ValueError(f"penalty must be positive, got {penalty!r}")
    vm = SlotVarMap(g.n, int(slots))
    soft = QuboModel(vm.num_variables)
    for i in range(g.n):
        for s in range(1, vm.slots):
            soft.add_term(vm.index(i, s), vm.index(i, s), float(s))
    hard = QuboModel(vm.num_variables)
    for i in range(g.n):
        add_squared(hard, {vm.index(i, s): 1.0 for s in range(vm.slots)}, -1.0, a)
    for i, j in sorted(g.edges):
        for s in range(vm.slots):
            hard.add_term(vm.index(i, s), vm.index(j, s), a)
    return soft, hard, vm


def encode_schedule(g: ConflictGraph, slots: int | None = None, penalty: float | None = None) -> tuple[QuboModel, SlotVarMap]:
    """QUBO for slot assignment; ``slots=None`` uses :func:`greedy_slot_bound`."""
    slots = greedy_slot_bound(g) if slots is None else slots
    soft, hard, vm = schedule_terms(g, slots, penalty)
    return soft + hard, vm


def evaluate_slots(g: ConflictGraph, slot: Sequence[int], repaired: bool = False) -> Schedule:
    slot = tuple(int(s) for s in slot)
    if len(slot) != g.n:
        raise ValueError(f"expected {g.n} slots, got {len(slot)}")
    violations = sum(1 for a, b in g.edges if slot[a] == slot[b])
    makespan = 1 + max(slot) if slot else 0
    return Schedule(slot, violations, makespan, repaired)


def decode_schedule(vm: SlotVarMap, s: Sample | Sequence[int], g: ConflictGraph) -> Schedule:
    """Read slots from a sample.

    A transaction with exactly one set slot keeps it; with several it keeps
    the lowest. Transactions with none are then placed, in index order, in
    the lowest slot free of already-placed neighbors; when every slot
    conflicts, the slot with the fewest such neighbors (lowest on ties).
    """
    bits = s.bits if isinstance(s, Sample) else tuple(s)
    if len(bits) != vm.num_variables:
        raise ValueError(f"sample has {len(bits)} bits, expected {vm.num_variables}")
    if vm.n != g.n:
        raise ValueError(f"variable map covers {vm.n} transactions, graph has {g.n}")
    slot: list[int | None] = [None] * g.n
    repaired = False
    for i in range(g.n):
        chosen = [k for k in range(vm.slots) if bits[vm.index(i, k)]]
        if chosen:
            slot[i] = chosen[0]
            repaired |= len(chosen) > 1
    for i in range(g.n):
        if slot[i] is None:
            repaired = True
            placed = [slot[j] for j in g.neighbors(i) if slot[j] is not None]
            slot[i] = min(range(vm.slots), key=lambda k: (placed.count(k), k))
    return evaluate_slots(g, slot, repaired)


def oracle_schedule(g: ConflictGraph, slots: int) -> Schedule:
    """Exhaustive minimum of (violations, slot sum); lexicographic on ties."""
    if g.n > MAX_ORACLE_TRANSACTIONS:
        raise ValueError(f"exhaustive scheduling supports up to {MAX_ORACLE_TRANSACTIONS} transactions, got {g.n}")
    if slots < 1:
        raise ValueError(f"slot count must be positive, got {slots}")
    if slots**g.n > MAX_ORACLE_ASSIGNMENTS:
        raise ValueError(f"{slots}^{g.n} assignments exceed the enumeration limit of {MAX_ORACLE_ASSIGNMENTS}")
    edges = sorted(g.edges)
    best, best_key = None, None
    for assign in itertools.product(range(slots), repeat=g.n):
        key = (sum(1 for a, b in edges if assign[a] == assign[b]), sum(assign))
        if best_key is None or key < best_key:
            best, best_key = assign, key
    return evaluate_slots(g, best)
