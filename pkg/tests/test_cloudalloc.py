import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qadb.cloudalloc import (
    INFEASIBLE,
    Allocation,
    AllocVarMap,
    CloudInstance,
    PhysicalMachine,
    Task,
    VirtualMachine,
    allocation_metrics,
    allocation_penalty,
    allocation_terms,
    decode_allocation,
    encode_allocation,
    oracle_best_allocation,
    slack_bits,
)
from qadb.sampler import enumerate_energies, solve_exhaustive

from conftest import forced_instance, random_tiny_instance


def carbon_of_bits(c, vm, bits, weight=1.0):
    return weight * sum(p.carbon_rate for k, p in enumerate(c.pms) if bits[vm.a(k)])


def solve(c, weight=1.0):
    m, vm = encode_allocation(c, carbon_weight=weight)
    best = solve_exhaustive(m).best
    return best, decode_allocation(vm, best, c)


def naive_feasible(c, alloc):
    """Re-check an allocation against the instance without the metrics helper."""
    if len(alloc.task_assign) != len(c.tasks):
        return False
    for t, (v, p) in alloc.task_assign.items():
        if alloc.vm_place.get(v) != p or p not in alloc.active_pms:
            return False
    for vmach in c.vms:
        load = sum(t.demand for t in c.tasks if alloc.task_assign[t.id][0] == vmach.id)
        if load > vmach.capacity:
            return False
    for pm in c.pms:
        load = sum(v.footprint for v in c.vms if alloc.vm_place.get(v.id) == pm.id)
        if load > pm.capacity:
            return False
    return True


class TestInstance:
    def test_shape(self):
        assert forced_instance().shape == (1, 1, 1)

    @pytest.mark.parametrize("demand", [0, -1, 1.5])
    def test_rejects_non_positive_demand(self, demand):
        with pytest.raises(ValueError, match="tasks\\[0\\].demand"):
            CloudInstance((Task("t0", demand),), (VirtualMachine("v0", 2, 1),), (PhysicalMachine("p0", 2, 1.0),))

    def test_rejects_negative_rate(self):
        with pytest.raises(ValueError, match="carbon_rate"):
            CloudInstance((Task("t0", 1),), (VirtualMachine("v0", 2, 1),), (PhysicalMachine("p0", 2, -1.0),))

    def test_rejects_duplicate_ids(self):
        with pytest.raises(ValueError, match="duplicate"):
            CloudInstance((Task("t0", 1), Task("t0", 1)), (VirtualMachine("v0", 2, 1),), (PhysicalMachine("p0", 2, 0.0),))

    def test_quantization(self):
        data = {
            "tasks": [{"id": "t0", "demand": 1.2}],
            "vms": [{"id": "v0", "capacity": 3.9, "footprint": 0.5}],
            "pms": [{"id": "p0", "capacity": 4.0, "carbon_rate": 1.5}],
        }
        c = CloudInstance.from_dict(data, unit=0.5)
        assert (c.tasks[0].demand, c.vms[0].capacity, c.vms[0].footprint, c.pms[0].capacity) == (3, 7, 1, 8)

    def test_dict_round_trip(self):
        c = forced_instance()
        assert CloudInstance.from_dict(c.to_dict()) == c

    @pytest.mark.parametrize("cap,bits", [(1, 1), (2, 2), (3, 2), (4, 3), (7, 3), (8, 4)])
    def test_slack_bits(self, cap, bits):
        assert slack_bits(cap) == bits
        assert 2**bits - 1 >= cap


class TestEncoding:
    def test_unplaceable_task_rejected(self):
        c = CloudInstance((Task("t0", 5),), (VirtualMachine("v0", 2, 1),), (PhysicalMachine("p0", 2, 1.0),))
        with pytest.raises(ValueError, match="t0"):
            encode_allocation(c)

    def test_vm_too_big_for_every_pm_rejected(self):
        c = CloudInstance((Task("t0", 1),), (VirtualMachine("v0", 2, 3),), (PhysicalMachine("p0", 2, 1.0),))
        with pytest.raises(ValueError):
            encode_allocation(c)

    @pytest.mark.parametrize("kw", [{"carbon_weight": 0.0}, {"penalty": -1.0}])
    def test_bad_parameters(self, kw):
        with pytest.raises(ValueError):
            encode_allocation(forced_instance(), **kw)

    @pytest.mark.parametrize("rate", [0.0, 3.0])
    @pytest.mark.parametrize("weight", [1.0, 2.5])
    def test_forced_instance(self, rate, weight):
        c = forced_instance(rate)
        best, alloc = solve(c, weight)
        assert best.energy == pytest.approx(weight * rate, abs=1e-9)
        assert alloc.violations == () and alloc.slack_violations == ()
        assert alloc.task_assign == {"t0": ("v0", "p0")}

    def test_prefers_low_carbon_pm(self):
        c = CloudInstance(
            (Task("t0", 1),),
            (VirtualMachine("v0", 2, 1),),
            (PhysicalMachine("p0", 2, 5.0), PhysicalMachine("p1", 2, 1.0)),
        )
        _, alloc = solve(c)
        assert alloc.vm_place == {"v0": "p1"}
        assert allocation_metrics(c, alloc).carbon == 1.0

    def test_two_tasks_one_small_vm_infeasible(self):
        c = CloudInstance(
            (Task("t0", 2), Task("t1", 2)),
            (VirtualMachine("v0", 3, 1),),
            (PhysicalMachine("p0", 2, 1.0),),
        )
        _, alloc = solve(c)
        assert alloc.violations
        assert oracle_best_allocation(c).violations == (INFEASIBLE,)

    def test_two_tasks_two_vms_feasible(self):
        c = CloudInstance(
            (Task("t0", 2), Task("t1", 2)),
            (VirtualMachine("v0", 3, 1), VirtualMachine("v1", 3, 1)),
            (PhysicalMachine("p0", 2, 1.0),),
        )
        _, alloc = solve(c)
        assert alloc.violations == ()
        assert {v for v, _ in alloc.task_assign.values()} == {"v0", "v1"}
        assert allocation_metrics(c, alloc).feasible

    def test_split_across_pms(self):
        # each PM holds exactly one VM, so both must be on
        c = CloudInstance(
            (Task("t0", 2), Task("t1", 2)),
            (VirtualMachine("v0", 2, 2), VirtualMachine("v1", 2, 2)),
            (PhysicalMachine("p0", 2, 1.0), PhysicalMachine("p1", 2, 2.0)),
        )
        oracle = oracle_best_allocation(c)
        assert allocation_metrics(c, oracle).carbon == 3.0
        _, alloc = solve(c)
        m = allocation_metrics(c, alloc)
        assert m.feasible and m.carbon == 3.0

    def test_energy_of_feasible_assignment_is_carbon(self):
        c = forced_instance(3.0)
        carbon, hard, vm = allocation_terms(c)
        bits = [0] * vm.num_variables
        for k in (vm.x(0, 0, 0), vm.z(0, 0), vm.a(0)):
            bits[k] = 1
        # pm slack 1 and vm slack 1 close both equalities
        bits[vm.pm_slack(0)[0]] = 1
        bits[vm.vm_slack(0)[0]] = 1
        assert hard.energy(bits) == 0.0
        assert carbon.energy(bits) == 3.0

    @pytest.mark.parametrize("cap", [1, 2, 3, 5, 6])
    def test_slack_closes_every_gap(self, cap):
        vm = AllocVarMap(0, 0, 1, (slack_bits(cap),), ())
        idx = vm.pm_slack(0)
        reachable = {sum(2**b for b in range(len(idx)) if code >> b & 1) for code in range(1 << len(idx))}
        assert set(range(cap + 1)) <= reachable


class TestDecode:
    def test_all_zero_reports_unassigned(self):
        c = forced_instance()
        vm = AllocVarMap.for_instance(c)
        alloc = decode_allocation(vm, [0] * vm.num_variables, c)
        assert alloc.violations == ("task unassigned: t0",)

    def test_multiplacement(self):
        c = CloudInstance(
            (Task("t0", 1),),
            (VirtualMachine("v0", 2, 1),),
            (PhysicalMachine("p0", 2, 1.0), PhysicalMachine("p1", 2, 1.0)),
        )
        vm = AllocVarMap.for_instance(c)
        bits = [0] * vm.num_variables
        for k in (vm.x(0, 0, 0), vm.z(0, 0), vm.z(0, 1), vm.a(0), vm.a(1)):
            bits[k] = 1
        alloc = decode_allocation(vm, bits, c)
        assert any(b.startswith("vm multiplacement: v0") for b in alloc.violations)

    def test_inactive_pm_and_broken_link(self):
        c = forced_instance()
        vm = AllocVarMap.for_instance(c)
        bits = [0] * vm.num_variables
        bits[vm.x(0, 0, 0)] = 1
        alloc = decode_allocation(vm, bits, c)
        assert any(b.startswith("task-vm link broken: t0") for b in alloc.violations)
        bits[vm.z(0, 0)] = 1
        alloc = decode_allocation(vm, bits, c)
        assert any(b.startswith("vm on inactive pm: v0") for b in alloc.violations)

    def test_capacity_breach(self):
        c = CloudInstance((Task("t0", 2),), (VirtualMachine("v0", 2, 3),), (PhysicalMachine("p0", 4, 0.0),))
        vm = AllocVarMap.for_instance(c)
        bits = [0] * vm.num_variables
        for k in (vm.x(0, 0, 0), vm.z(0, 0), vm.a(0)):
            bits[k] = 1
        assert decode_allocation(vm, bits, c).violations == ()
        small = CloudInstance((Task("t0", 2),), (VirtualMachine("v0", 2, 3),), (PhysicalMachine("p0", 2, 0.0),))
        assert any("pm capacity exceeded: p0" in b for b in decode_allocation(vm, bits, small).violations)

    def test_wrong_length(self):
        c = forced_instance()
        with pytest.raises(ValueError):
            decode_allocation(AllocVarMap.for_instance(c), [0], c)

    def test_audit_completeness_exhaustive(self):
        # every assignment: clean report iff all penalty energy is gone
        c = CloudInstance(
            (Task("t0", 1),),
            (VirtualMachine("v0", 2, 1),),
            (PhysicalMachine("p0", 1, 2.0), PhysicalMachine("p1", 2, 1.0)),
        )
        m, vm = encode_allocation(c)
        n = vm.num_variables
        for bits in itertools.product((0, 1), repeat=n):
            alloc = decode_allocation(vm, bits, c)
            clean = not alloc.violations and not alloc.slack_violations
            gap = m.energy(bits) - carbon_of_bits(c, vm, bits)
            assert clean == (abs(gap) < 1e-9), (bits, alloc, gap)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_audit_completeness_random(self, seed):
        rng = np.random.default_rng(seed)
        c = random_tiny_instance(rng, max_vars=40)
        m, vm = encode_allocation(c)
        for _ in range(20):
            bits = tuple(int(b) for b in rng.integers(0, 2, vm.num_variables))
            alloc = decode_allocation(vm, bits, c)
            clean = not alloc.violations and not alloc.slack_violations
            assert clean == (abs(m.energy(bits) - carbon_of_bits(c, vm, bits)) < 1e-9)


class TestMetrics:
    def test_overloaded_pm(self):
        c = CloudInstance(
            (Task("t0", 1), Task("t1", 1)),
            (VirtualMachine("v0", 1, 2), VirtualMachine("v1", 1, 3)),
            (PhysicalMachine("p0", 4, 1.0),),
        )
        a = Allocation({"t0": ("v0", "p0"), "t1": ("v1", "p0")}, {"v0": "p0", "v1": "p0"}, frozenset({"p0"}))
        m = allocation_metrics(c, a)
        assert m.pm_loads == (5,) and not m.feasible

    def test_unknown_ids(self):
        with pytest.raises(ValueError, match="vx"):
            allocation_metrics(forced_instance(), Allocation({"t0": ("vx", "p0")}, {}, frozenset()))

    def test_penalty_formula(self):
        assert allocation_penalty(forced_instance(3.0), 2.0) == 7.0


class TestOracle:
    def test_forced(self):
        a = oracle_best_allocation(forced_instance())
        assert a.task_assign == {"t0": ("v0", "p0")} and a.active_pms == {"p0"}

    def test_guard(self):
        c = CloudInstance(
            tuple(Task(f"t{i}", 1) for i in range(7)),
            tuple(VirtualMachine(f"v{i}", 7, 1) for i in range(4)),
            tuple(PhysicalMachine(f"p{i}", 7, 1.0) for i in range(2)),
        )
        with pytest.raises(ValueError, match="limit"):
            oracle_best_allocation(c)

    def test_oracle_solutions_feasible(self):
        rng = np.random.default_rng(31)
        for _ in range(30):
            c = random_tiny_instance(rng)
            a = oracle_best_allocation(c)
            if a.violations:
                assert a.violations == (INFEASIBLE,)
            else:
                assert naive_feasible(c, a) and allocation_metrics(c, a).feasible

    def test_exhaustive_decode_matches_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(5):
            c = random_tiny_instance(rng, max_vars=22)
            _, alloc = solve(c)
            oracle = oracle_best_allocation(c)
            if oracle.violations:
                assert alloc.violations
            else:
                m = allocation_metrics(c, alloc)
                assert m.feasible
                assert m.carbon == pytest.approx(allocation_metrics(c, oracle).carbon, abs=1e-9)


class TestPenaltyDominance:
    def test_tiny_instances(self):
        rng = np.random.default_rng(99)
        checked = 0
        while checked < 4:
            c = random_tiny_instance(rng, max_vars=20)
            carbon, hard, _ = allocation_terms(c)
            feas, viol = math.inf, math.inf
            for _, (e, h) in enumerate_energies([carbon + hard, hard]):
                ok = np.abs(h) < 1e-9
                feas = min(feas, e[ok].min(initial=math.inf))
                viol = min(viol, e[~ok].min(initial=math.inf))
            if math.isfinite(feas):
                assert viol > feas
                checked += 1
