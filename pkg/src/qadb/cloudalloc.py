"""Task -> VM -> PM allocation with a carbon objective.

Variable families:

* ``x[t, v, p]``: task ``t`` runs on VM ``v`` hosted by PM ``p``;
* ``z[v, p]``: VM ``v`` is placed on PM ``p``;
* ``a[p]``: PM ``p`` is switched on;
* slack bits turning each capacity inequality into an equality.

Resources are a single integer dimension. :meth:`CloudInstance.from_dict`
quantizes file values by a unit: demands and footprints round up,
capacities round down.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

from .qubo import QuboModel, add_squared
from .sampler import Sample

__all__ = [
    "Task",
    "VirtualMachine",
    "PhysicalMachine",
    "CloudInstance",
    "Allocation",
    "AllocVarMap",
    "AllocMetrics",
    "MAX_ORACLE_COMBINATIONS",
    "slack_bits",
    "allocation_penalty",
    "allocation_terms",
    "encode_allocation",
    "decode_allocation",
    "allocation_metrics",
    "oracle_best_allocation",
]

MAX_ORACLE_COMBINATIONS = 10**6
INFEASIBLE = "instance infeasible: no allocation satisfies every hard constraint"


@dataclass(frozen=True)
class Task:
    id: str
    demand: int


@dataclass(frozen=True)
class VirtualMachine:
    id: str
    capacity: int
    footprint: int


@dataclass(frozen=True)
class PhysicalMachine:
    id: str
    capacity: int
    carbon_rate: float


def _positive_int(value: float, what: str) -> int:
    if not (isinstance(value, (int, float)) and math.isfinite(value)) or value != int(value) or value <= 0:
        raise ValueError(f"{what} must be a positive integer amount of resource units, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class CloudInstance:
    tasks: tuple[Task, ...]
    vms: tuple[VirtualMachine, ...]
    pms: tuple[PhysicalMachine, ...]

    def __post_init__(self) -> None:
        for name in ("tasks", "vms", "pms"):
            items = tuple(getattr(self, name))
            object.__setattr__(self, name, items)
            ids = [it.id for it in items]
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            if dupes:
                raise ValueError(f"{name}: duplicate ids {dupes}")
        for k, t in enumerate(self.tasks):
            _positive_int(t.demand, f"tasks[{k}].demand")
        for k, v in enumerate(self.vms):
            _positive_int(v.capacity, f"vms[{k}].capacity")
            _positive_int(v.footprint, f"vms[{k}].footprint")
        for k, p in enumerate(self.pms):
            _positive_int(p.capacity, f"pms[{k}].capacity")
            if not (math.isfinite(p.carbon_rate) and p.carbon_rate >= 0):
                raise ValueError(f"pms[{k}].carbon_rate must be finite and non-negative, got {p.carbon_rate!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.tasks), len(self.vms), len(self.pms)

    @classmethod
    def from_dict(cls, data: dict[str, Any], unit: float = 1.0) -> "CloudInstance":
        def up(v: float) -> int:
            return math.ceil(float(v) / unit - 1e-9)

        def down(v: float) -> int:
            return math.floor(float(v) / unit + 1e-9)

        return cls(
            tuple(Task(str(t["id"]), up(t["demand"])) for t in data["tasks"]),
            tuple(VirtualMachine(str(v["id"]), down(v["capacity"]), up(v["footprint"])) for v in data["vms"]),
            tuple(PhysicalMachine(str(p["id"]), down(p["capacity"]), float(p["carbon_rate"])) for p in data["pms"]),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "tasks": [{"id": t.id, "demand": t.demand} for t in self.tasks],
            "vms": [{"id": v.id, "capacity": v.capacity, "footprint": v.footprint} for v in self.vms],
            "pms": [{"id": p.id, "capacity": p.capacity, "carbon_rate": p.carbon_rate} for p in self.pms],
        }


def slack_bits(capacity: int) -> int:
    """Bits needed to represent every slack value ``0 .. capacity``."""
    return math.ceil(math.log2(capacity + 1))


@dataclass(frozen=True)
class AllocVarMap:
    tasks: int
    vms: int
    pms: int
    pm_slack_bits: tuple[int, ...]
    vm_slack_bits: tuple[int, ...]

    @classmethod
    def for_instance(cls, c: CloudInstance) -> "AllocVarMap":
        return cls(
            *c.shape,
            tuple(slack_bits(p.capacity) for p in c.pms),
            tuple(slack_bits(v.capacity) for v in c.vms),
        )

    def x(self, t: int, v: int, p: int) -> int:
        return (t * self.vms + v) * self.pms + p

    @property
    def z_start(self) -> int:
        return self.tasks * self.vms * self.pms

    def z(self, v: int, p: int) -> int:
        return self.z_start + v * self.pms + p

    @property
    def a_start(self) -> int:
        return self.z_start + self.vms * self.pms

    def a(self, p: int) -> int:
        return self.a_start + p

    @property
    def slack_start(self) -> int:
        return self.a_start + self.pms

    def pm_slack(self, p: int) -> list[int]:
        start = self.slack_start + sum(self.pm_slack_bits[:p])
        return list(range(start, start + self.pm_slack_bits[p]))

    def vm_slack(self, v: int) -> list[int]:
        start = self.slack_start + sum(self.pm_slack_bits) + sum(self.vm_slack_bits[:v])
        return list(range(start, start + self.vm_slack_bits[v]))

    @property
    def num_variables(self) -> int:
        return self.slack_start + sum(self.pm_slack_bits) + sum(self.vm_slack_bits)


@dataclass(frozen=True)
class Allocation:
    """Decoded allocation.

    ``violations`` lists breached domain constraints. ``slack_violations``
    lists capacity equalities whose slack bits do not close the gap even
    though the load fits; these cost energy but are not domain breaches.
    """

    task_assign: dict[str, tuple[str, str]] = field(default_factory=dict)
    vm_place: dict[str, str] = field(default_factory=dict)
    active_pms: frozenset[str] = frozenset()
    violations: tuple[str, ...] = ()
    slack_violations: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_assign": {t: list(vp) for t, vp in sorted(self.task_assign.items())},
            "vm_place": dict(sorted(self.vm_place.items())),
            "active_pms": sorted(self.active_pms),
            "violations": list(self.violations),
            "slack_violations": list(self.slack_violations),
        }


@dataclass(frozen=True)
class AllocMetrics:
    carbon: float
    pm_loads: tuple[int, ...]
    vm_loads: tuple[int, ...]
    feasible: bool


def allocation_penalty(c: CloudInstance, carbon_weight: float = 1.0) -> float:
    """``1 + carbon_weight * sum(carbon rates)``: above any carbon objective."""
    return 1.0 + carbon_weight * sum(p.carbon_rate for p in c.pms)


def _check_placeable(c: CloudInstance) -> None:
    for t in c.tasks:
        if not any(t.demand <= v.capacity and any(v.footprint <= p.capacity for p in c.pms) for v in c.vms):
            raise ValueError(f"task {t.id!r} (demand {t.demand}) fits no VM that fits any PM")


def allocation_terms(
    c: CloudInstance, penalty: float | None = None, carbon_weight: float = 1.0
) -> tuple[QuboModel, QuboModel, AllocVarMap]:
    """Carbon objective and hard-penalty models; their sum is the encoding."""
    if not (math.isfinite(carbon_weight) and carbon_weight > 0):
        raise ValueError(f"carbon_weight must be positive, got {carbon_weight!r}")
    big = allocation_penalty(c, carbon_weight) if penalty is None else float(penalty)
    if not (math.isfinite(big) and big > 0):
        raise ValueError(f"penalty must be positive, got {penalty!r}")
    _check_placeable(c)
    vm = AllocVarMap.for_instance(c)
    T, V, P = c.shape
    n = vm.num_variables

    carbon = QuboModel(n)
    for p, pm in enumerate(c.pms):
        if pm.carbon_rate:
            carbon.add_linear(vm.a(p), carbon_weight * pm.carbon_rate)

    hard = QuboModel(n)
    for t in range(T):
        add_squared(hard, {vm.x(t, v, p): 1.0 for v in range(V) for p in range(P)}, -1.0, big)
    for t, v, p in itertools.product(range(T), range(V), range(P)):
        hard.add_linear(vm.x(t, v, p), big)
        hard.add_term(vm.x(t, v, p), vm.z(v, p), -big)
    for v in range(V):
        for p, q in itertools.combinations(range(P), 2):
            hard.add_term(vm.z(v, p), vm.z(v, q), big)
    for v, p in itertools.product(range(V), range(P)):
        hard.add_linear(vm.z(v, p), big)
        hard.add_term(vm.z(v, p), vm.a(p), -big)
    for p, pm in enumerate(c.pms):
        coeffs = {vm.z(v, p): float(c.vms[v].footprint) for v in range(V)}
        coeffs.update({k: float(2**b) for b, k in enumerate(vm.pm_slack(p))})
        add_squared(hard, coeffs, -float(pm.capacity), big)
    for v, vmach in enumerate(c.vms):
        coeffs = {vm.x(t, v, p): float(c.tasks[t].demand) for t in range(T) for p in range(P)}
        coeffs.update({k: float(2**b) for b, k in enumerate(vm.vm_slack(v))})
        add_squared(hard, coeffs, -float(vmach.capacity), big)
    return carbon, hard, vm


def encode_allocation(
    c: CloudInstance, penalty: float | None = None, carbon_weight: float = 1.0
) -> tuple[QuboModel, AllocVarMap]:
    carbon, hard, vm = allocation_terms(c, penalty, carbon_weight)
    return carbon + hard, vm


def _slack_value(bits: Sequence[int], idx: list[int]) -> int:
    return sum(2**b for b, k in enumerate(idx) if bits[k])


def decode_allocation(vm: AllocVarMap, s: Sample | Sequence[int], c: CloudInstance) -> Allocation:
    """Read x, z and a bits and audit every hard constraint.

    Breaches are reported, never repaired. A task's PM is taken from its
    VM's placement (z), so the maps stay consistent when x and z disagree.
    """
    bits = s.bits if isinstance(s, Sample) else tuple(s)
    if len(bits) != vm.num_variables:
        raise ValueError(f"sample has {len(bits)} bits, expected {vm.num_variables}")
    if (vm.tasks, vm.vms, vm.pms) != c.shape:
        raise ValueError("variable map does not match the instance")
    T, V, P = c.shape
    tid = [t.id for t in c.tasks]
    vid = [v.id for v in c.vms]
    pid = [p.id for p in c.pms]
    breaches: list[str] = []
    slack_breaches: list[str] = []

    active = frozenset(pid[p] for p in range(P) if bits[vm.a(p)])
    vm_place: dict[str, str] = {}
    for v in range(V):
        hosts = [p for p in range(P) if bits[vm.z(v, p)]]
        if len(hosts) > 1:
            breaches.append(f"vm multiplacement: {vid[v]} on {', '.join(pid[p] for p in hosts)}")
        if hosts:
            vm_place[vid[v]] = pid[hosts[0]]
        for p in hosts:
            if not bits[vm.a(p)]:
                breaches.append(f"vm on inactive pm: {vid[v]} on {pid[p]}")

    task_assign: dict[str, tuple[str, str]] = {}
    for t in range(T):
        chosen = [(v, p) for v in range(V) for p in range(P) if bits[vm.x(t, v, p)]]
        if not chosen:
            breaches.append(f"task unassigned: {tid[t]}")
        elif len(chosen) > 1:
            breaches.append(f"task multiply assigned: {tid[t]}")
        for v, p in chosen:
            if not bits[vm.z(v, p)]:
                breaches.append(f"task-vm link broken: {tid[t]} on {vid[v]} but {vid[v]} not placed on {pid[p]}")
        if chosen and vid[chosen[0][0]] in vm_place:
            v = chosen[0][0]
            task_assign[tid[t]] = (vid[v], vm_place[vid[v]])

    for p, pm in enumerate(c.pms):
        load = sum(c.vms[v].footprint for v in range(V) if bits[vm.z(v, p)])
        if load > pm.capacity:
            breaches.append(f"pm capacity exceeded: {pm.id} (load {load} > {pm.capacity})")
        elif load + _slack_value(bits, vm.pm_slack(p)) != pm.capacity:
            slack_breaches.append(f"slack mismatch: pm {pm.id}")
    for v, vmach in enumerate(c.vms):
        load = sum(c.tasks[t].demand for t in range(T) for p in range(P) if bits[vm.x(t, v, p)])
        if load > vmach.capacity:
            breaches.append(f"vm capacity exceeded: {vmach.id} (load {load} > {vmach.capacity})")
        elif load + _slack_value(bits, vm.vm_slack(v)) != vmach.capacity:
            slack_breaches.append(f"slack mismatch: vm {vmach.id}")

    return Allocation(task_assign, vm_place, active, tuple(breaches), tuple(slack_breaches))


def allocation_metrics(c: CloudInstance, a: Allocation) -> AllocMetrics:
    """Carbon of the active PMs, per-machine loads and a feasibility verdict."""
    tasks = {t.id: t for t in c.tasks}
    vms = {v.id: k for k, v in enumerate(c.vms)}
    pms = {p.id: k for k, p in enumerate(c.pms)}
    for t, (v, p) in a.task_assign.items():
        if t not in tasks or v not in vms or p not in pms:
            raise ValueError(f"allocation references unknown ids: task {t!r} -> ({v!r}, {p!r})")
    for v, p in a.vm_place.items():
        if v not in vms or p not in pms:
            raise ValueError(f"allocation references unknown ids: vm {v!r} -> pm {p!r}")
    for p in a.active_pms:
        if p not in pms:
            raise ValueError(f"allocation references unknown pm {p!r}")

    pm_loads = [0] * len(c.pms)
    for v, p in a.vm_place.items():
        pm_loads[pms[p]] += c.vms[vms[v]].footprint
    vm_loads = [0] * len(c.vms)
    for t, (v, _) in a.task_assign.items():
        vm_loads[vms[v]] += tasks[t].demand
    carbon = sum(c.pms[pms[p]].carbon_rate for p in sorted(a.active_pms))
    feasible = (
        not a.violations
        and len(a.task_assign) == len(c.tasks)
        and all(a.vm_place.get(v) == p for v, p in a.task_assign.values())
        and all(p in a.active_pms for p in a.vm_place.values())
        and all(load <= pm.capacity for load, pm in zip(pm_loads, c.pms))
        and all(load <= vm.capacity for load, vm in zip(vm_loads, c.vms))
    )
    return AllocMetrics(float(carbon), tuple(pm_loads), tuple(vm_loads), feasible)


def oracle_best_allocation(c: CloudInstance, carbon_weight: float = 1.0) -> Allocation:
    """Exhaustive minimum-carbon feasible allocation.

    Enumerates one ``(vm, pm)`` choice per task in lexicographic order; only
    VMs that host tasks are placed and only their PMs are switched on. An
    infeasible instance yields an empty allocation whose violation report
    says so.
    """
    if not (math.isfinite(carbon_weight) and carbon_weight > 0):
        raise ValueError(f"carbon_weight must be positive, got {carbon_weight!r}")
    T, V, P = c.shape
    if (V * P) ** T > MAX_ORACLE_COMBINATIONS:
        raise ValueError(f"{(V * P) ** T} task combinations exceed the enumeration limit of {MAX_ORACLE_COMBINATIONS}")
    best, best_carbon = None, math.inf
    for choice in itertools.product(itertools.product(range(V), range(P)), repeat=T):
        place: dict[int, int] = {}
        ok = True
        for v, p in choice:
            if place.setdefault(v, p) != p:
                ok = False
                break
        if not ok:
            continue
        vm_load = [0] * V
        for t, (v, _) in enumerate(choice):
            vm_load[v] += c.tasks[t].demand
        if any(vm_load[v] > c.vms[v].capacity for v in range(V)):
            continue
        pm_load = [0] * P
        for v, p in place.items():
            pm_load[p] += c.vms[v].footprint
        if any(pm_load[p] > c.pms[p].capacity for p in range(P)):
            continue
        carbon = carbon_weight * sum(c.pms[p].carbon_rate for p in sorted(set(place.values())))
        if carbon < best_carbon:
            best, best_carbon = (choice, place), carbon
    if best is None:
        return Allocation(violations=(INFEASIBLE,))
    choice, place = best
    return Allocation(
        task_assign={c.tasks[t].id: (c.vms[v].id, c.pms[p].id) for t, (v, p) in enumerate(choice)},
        vm_place={c.vms[v].id: c.pms[p].id for v, p in sorted(place.items())},
        active_pms=frozenset(c.pms[p].id for p in place.values()),
    )
