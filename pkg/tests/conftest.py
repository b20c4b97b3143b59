import itertools

import numpy as np
import pytest

from qadb.cloudalloc import (
    AllocVarMap,
    CloudInstance,
    PhysicalMachine,
    Task,
    VirtualMachine,
    allocation_terms,
)
from qadb.joinorder import Predicate, Query, Relation
from qadb.qubo import QuboModel


def random_model(rng, n, density=0.5, scale=1.0):
    m = QuboModel(n)
    for i in range(n):
        for j in range(i, n):
            if rng.random() < density:
                m.add_term(i, j, float(rng.normal(scale=scale)))
    m.offset = float(rng.normal())
    return m


def naive_energy(model, bits):
    """Double loop over the dense upper matrix, independent of QuboModel.energy."""
    total = model.offset
    for i in range(model.n):
        for j in range(i, model.n):
            total += model.terms.get((i, j), 0.0) * bits[i] * bits[j]
    return total


def all_assignments(n):
    return [tuple(b) for b in itertools.product((0, 1), repeat=n)]


def chain_query():
    """Three relations of sizes 10, 100, 1000 joined in a chain."""
    return Query(
        (Relation("A", 10.0), Relation("B", 100.0), Relation("C", 1000.0)),
        (Predicate(0, 1, 0.1), Predicate(1, 2, 0.01)),
    )


def two_query():
    return Query((Relation("A", 50.0), Relation("B", 20.0)), (Predicate(0, 1, 0.5),))


def forced_instance(rate=3.0):
    return CloudInstance(
        (Task("t0", 1),),
        (VirtualMachine("v0", 2, 1),),
        (PhysicalMachine("p0", 2, rate),),
    )


def random_tiny_instance(rng, max_vars=26):
    """Tiny seeded cloud instance that the encoder accepts; may be infeasible."""
    while True:
        T, V, P = int(rng.integers(1, 4)), int(rng.integers(1, 3)), int(rng.integers(1, 3))
        c = CloudInstance(
            tuple(Task(f"t{i}", int(rng.integers(1, 3))) for i in range(T)),
            tuple(VirtualMachine(f"v{i}", int(rng.integers(1, 4)), int(rng.integers(1, 3))) for i in range(V)),
            tuple(PhysicalMachine(f"p{i}", int(rng.integers(1, 4)), float(rng.integers(0, 6))) for i in range(P)),
        )
        if AllocVarMap.for_instance(c).num_variables > max_vars:
            continue
        try:
            allocation_terms(c)
        except ValueError:
            continue
        return c


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
