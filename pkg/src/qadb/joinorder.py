"""Left-deep join ordering as a QUBO.

Pipeline: :func:`log_coefficients` (preprocessing), :func:`encode_join_order`
(encoding), any sampler (optimisation), :func:`decode_join_order` (readout).

Variables ``x[i, p]`` say that relation ``i`` sits at position ``p`` of the
join sequence. The objective is the sum of log intermediate-result sizes over
prefixes of length ``2 .. n-1``; the scan of the first relation and the final
result do not depend on the order and are dropped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .qubo import QuboModel, add_squared
from .sampler import Sample

__all__ = [
    "Relation",
    "Predicate",
    "Query",
    "LogCoeffs",
    "JoinOrder",
    "JoVarMap",
    "MAX_ENCODE_RELATIONS",
    "MAX_ORACLE_RELATIONS",
    "log_coefficients",
    "log_cost",
    "true_cost",
    "prefix_weight",
    "auto_penalty",
    "join_order_terms",
    "encode_join_order",
    "embed_order",
    "decode_join_order",
    "oracle_best_order",
    "random_query",
]

MAX_ENCODE_RELATIONS = 12
MAX_ORACLE_RELATIONS = 10


@dataclass(frozen=True)
class Relation:
    name: str
    cardinality: float


@dataclass(frozen=True)
class Predicate:
    a: int
    b: int
    selectivity: float


@dataclass(frozen=True)
class Query:
    """Relations plus join predicates between pairs of them.

    Structural rules (indices, no self-joins, one predicate per pair) are
    checked here; value ranges are checked by :func:`log_coefficients`.
    """

    relations: tuple[Relation, ...]
    predicates: tuple[Predicate, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "relations", tuple(self.relations))
        object.__setattr__(self, "predicates", tuple(self.predicates))
        n = len(self.relations)
        if n < 2:
            raise ValueError(f"a query needs at least 2 relations, got {n}")
        for k, rel in enumerate(self.relations):
            if not math.isfinite(rel.cardinality):
                raise ValueError(f"relations[{k}] ({rel.name!r}): cardinality must be finite")
        seen = set()
        for k, p in enumerate(self.predicates):
            if not (0 <= p.a < n and 0 <= p.b < n):
                raise ValueError(f"predicates[{k}]: relation index out of range for {n} relations")
            if p.a == p.b:
                raise ValueError(f"predicates[{k}]: a predicate must join two different relations")
            key = (min(p.a, p.b), max(p.a, p.b))
            if key in seen:
                raise ValueError(f"predicates[{k}]: duplicate predicate for pair {key}")
            seen.add(key)

    @property
    def n(self) -> int:
        return len(self.relations)

    def selectivity(self, i: int, j: int) -> float:
        for p in self.predicates:
            if {p.a, p.b} == {i, j}:
                return p.selectivity
        return 1.0

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Query":
        rels = [Relation(str(r["name"]), float(r["cardinality"])) for r in data["relations"]]
        preds = [Predicate(int(p["a"]), int(p["b"]), float(p["selectivity"])) for p in data.get("predicates", [])]
        return cls(tuple(rels), tuple(preds))

    def to_dict(self) -> dict[str, Any]:
        return {
            "relations": [{"name": r.name, "cardinality": r.cardinality} for r in self.relations],
            "predicates": [{"a": p.a, "b": p.b, "selectivity": p.selectivity} for p in self.predicates],
        }


@dataclass(frozen=True)
class LogCoeffs:
    lc: tuple[float, ...]
    ls: dict[tuple[int, int], float]

    def pair(self, i: int, j: int) -> float:
        return self.ls.get((min(i, j), max(i, j)), 0.0)


@dataclass(frozen=True)
class JoinOrder:
    order: tuple[int, ...]
    repaired: bool = False

    def names(self, q: Query) -> list[str]:
        return [q.relations[i].name for i in self.order]


@dataclass(frozen=True)
class JoVarMap:
    n: int

    def index(self, relation: int, position: int) -> int:
        if not (0 <= relation < self.n and 0 <= position < self.n):
            raise IndexError(f"(relation={relation}, position={position}) out of range for n={self.n}")
        return relation * self.n + position

    @property
    def num_variables(self) -> int:
        return self.n * self.n


def log_coefficients(q: Query) -> LogCoeffs:
    """Natural logs of cardinalities and predicate selectivities."""
    lc = []
    for k, rel in enumerate(q.relations):
        if not rel.cardinality >= 1:
            raise ValueError(f"relations[{k}] ({rel.name!r}): cardinality must be >= 1, got {rel.cardinality}")
        lc.append(math.log(rel.cardinality))
    ls = {}
    for k, p in enumerate(q.predicates):
        if not 0 < p.selectivity <= 1:
            raise ValueError(
                f"predicates[{k}] ({p.a}, {p.b}): selectivity must be in (0, 1], got {p.selectivity}"
            )
        ls[(min(p.a, p.b), max(p.a, p.b))] = math.log(p.selectivity)
    return LogCoeffs(tuple(lc), ls)


def _check_order(q: Query, order: Sequence[int]) -> tuple[int, ...]:
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(q.n)):
        raise ValueError(f"{order} is not a permutation of 0..{q.n - 1}")
    return order


def _as_order(o: JoinOrder | Sequence[int]) -> Sequence[int]:
    return o.order if isinstance(o, JoinOrder) else o


def log_cost(q: Query, o: JoinOrder | Sequence[int], coeffs: LogCoeffs | None = None) -> float:
    """Sum of ``ln |I_t|`` over prefixes ``t = 2 .. n-1`` of a left-deep order."""
    order = _check_order(q, _as_order(o))
    c = coeffs or log_coefficients(q)
    total = 0.0
    size = c.lc[order[0]]
    for t in range(1, q.n - 1):
        r = order[t]
        size += c.lc[r] + sum(c.pair(r, s) for s in order[:t])
        total += size
    return total


def true_cost(q: Query, o: JoinOrder | Sequence[int]) -> float:
    """Sum of intermediate result sizes ``|I_t|`` for ``t = 2 .. n-1``."""
    order = _check_order(q, _as_order(o))
    total = 0.0
    size = q.relations[order[0]].cardinality
    for t in range(1, q.n - 1):
        r = order[t]
        size *= q.relations[r].cardinality
        for s in order[:t]:
            size *= q.selectivity(r, s)
        total += size
    return total


def prefix_weight(n: int, position: int) -> int:
    """Number of costed prefixes containing the relation at ``position`` (0-based)."""
    return max(0, n - max(position + 1, 2))


def auto_penalty(q: Query, coeffs: LogCoeffs | None = None) -> float:
    c = coeffs or log_coefficients(q)
    return 1.0 + (q.n - 2) * (sum(c.lc) + sum(abs(v) for v in c.ls.values()))


def join_order_terms(
    q: Query, penalty: float | None = None, coeffs: LogCoeffs | None = None
) -> tuple[QuboModel, QuboModel, JoVarMap]:
    """Objective and penalty models separately; their sum is the encoding."""
    if q.n > MAX_ENCODE_RELATIONS:
        raise ValueError(f"join order encoding supports up to {MAX_ENCODE_RELATIONS} relations, got {q.n}")
    c = coeffs or log_coefficients(q)
    a = auto_penalty(q, c) if penalty is None else float(penalty)
    if not (math.isfinite(a) and a > 0):
        raise ValueError(f"penalty must be positive, got {penalty!r}")
    n = q.n
    vm = JoVarMap(n)
    objective = QuboModel(n * n)
    for i in range(n):
        if c.lc[i] != 0.0:
            for p in range(n):
                w = prefix_weight(n, p)
                if w:
                    objective.add_term(vm.index(i, p), vm.index(i, p), c.lc[i] * w)
    for (i, j), lsij in sorted(c.ls.items()):
        if lsij == 0.0:
            continue
        for p in range(n):
            for r in range(n):
                w = prefix_weight(n, max(p, r))
                if w:
                    objective.add_term(vm.index(i, p), vm.index(j, r), lsij * w)

    penalties = QuboModel(n * n)
    for i in range(n):
        add_squared(penalties, {vm.index(i, p): 1.0 for p in range(n)}, -1.0, a)
    for p in range(n):
        add_squared(penalties, {vm.index(i, p): 1.0 for i in range(n)}, -1.0, a)
    return objective, penalties, vm


def encode_join_order(q: Query, penalty: float | None = None) -> tuple[QuboModel, JoVarMap]:
    """QUBO whose energy on a permutation assignment equals :func:`log_cost`.

    ``penalty=None`` selects :func:`auto_penalty`, which bounds the objective
    range so that every non-permutation assignment costs more than the best
    order.
    """
    objective, penalties, vm = join_order_terms(q, penalty)
    return objective + penalties, vm


def embed_order(vm: JoVarMap, o: JoinOrder | Sequence[int]) -> list[int]:
    bits = [0] * vm.num_variables
    for p, i in enumerate(_as_order(o)):
        bits[vm.index(i, p)] = 1
    return bits


def decode_join_order(vm: JoVarMap, s: Sample | Sequence[int]) -> JoinOrder:
    """Read a join order from a sample, repairing it if needed.

    Positions are scanned in ascending order; a position holding exactly one
    not-yet-placed relation keeps it. Relations still unplaced then fill the
    free positions, both in ascending index order.
    """
    bits = s.bits if isinstance(s, Sample) else tuple(s)
    n = vm.n
    if len(bits) != n * n:
        raise ValueError(f"sample has {len(bits)} bits, expected {n * n}")
    at = [[i for i in range(n) if bits[vm.index(i, p)]] for p in range(n)]
    if all(len(rels) == 1 for rels in at):
        order = tuple(rels[0] for rels in at)
        if len(set(order)) == n:
            return JoinOrder(order, repaired=False)
    slots: list[int | None] = [None] * n
    placed: set[int] = set()
    for p, rels in enumerate(at):
        if len(rels) == 1 and rels[0] not in placed:
            slots[p] = rels[0]
            placed.add(rels[0])
    free = iter(i for i in range(n) if i not in placed)
    order = tuple(r if r is not None else next(free) for r in slots)
    return JoinOrder(order, repaired=True)


def _permutation_costs(perms: np.ndarray, lc: np.ndarray, ls: np.ndarray, w: np.ndarray) -> np.ndarray:
    cost = lc[perms] @ w
    for r in range(1, perms.shape[1]):
        if w[r]:
            cost += w[r] * ls[perms[:, :r], perms[:, r:r + 1]].sum(axis=1)
    return cost


def oracle_best_order(q: Query) -> JoinOrder:
    """Exhaustive minimum of :func:`log_cost`; lexicographically first on ties.

    Permutations are scored in numpy blocks that share a two-relation
    prefix, visited in lexicographic order. Costs within a relative 1e-12 of
    the minimum count as ties.
    """
    if q.n > MAX_ORACLE_RELATIONS:
        raise ValueError(f"exhaustive join ordering supports up to {MAX_ORACLE_RELATIONS} relations, got {q.n}")
    n = q.n
    c = log_coefficients(q)
    lc = np.asarray(c.lc)
    ls = np.zeros((n, n))
    for (i, j), v in c.ls.items():
        ls[i, j] = ls[j, i] = v
    w = np.array([prefix_weight(n, p) for p in range(n)], dtype=float)
    head = min(2, n - 1)
    tail = np.array(list(itertools.permutations(range(n - head))), dtype=np.intp).reshape(-1, n - head)
    best_cost = math.inf
    candidates: list[tuple[int, ...]] = []
    costs: list[float] = []
    for prefix in itertools.permutations(range(n), head):
        rest = np.array([r for r in range(n) if r not in prefix], dtype=np.intp)
        block = np.hstack([np.tile(np.array(prefix, dtype=np.intp), (len(tail), 1)), rest[tail]])
        cost = _permutation_costs(block, lc, ls, w)
        k = int(np.argmin(cost))
        best_cost = min(best_cost, float(cost[k]))
        tol = 1e-12 * max(1.0, abs(best_cost))
        first = int(np.flatnonzero(cost <= cost[k] + tol)[0])
        candidates.append(tuple(int(v) for v in block[first]))
        costs.append(float(cost[first]))
    tol = 1e-12 * max(1.0, abs(best_cost))
    best = next(o for o, v in zip(candidates, costs) if v <= best_cost + tol)
    return JoinOrder(best)


def random_query(n: int, rng, edge_prob: float = 0.6, max_log10_card: float = 4.0) -> Query:
    """Seeded random query: a connecting chain plus extra random predicates."""
    rels = [Relation(f"R{i}", float(round(10 ** rng.uniform(0.0, max_log10_card)))) for i in range(n)]
    preds = []
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or rng.random() < edge_prob * 0.5:
                preds.append(Predicate(i, j, float(10 ** rng.uniform(-3.0, 0.0))))
    return Query(tuple(rels), tuple(preds))
