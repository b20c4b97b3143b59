"""Preprocess, encode, optimise and read out: the pipeline shared by every problem."""

from __future__ import annotations

import csv
import io
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from . import cloudalloc, joinorder, txsched
from .io import load_instance
from .qubo import QuboModel
from .sampler import AnnealParams, ExhaustiveSampler, Sample, SimulatedAnnealingSampler

__all__ = [
    "PHASES",
    "RunOptions",
    "RunReport",
    "Problem",
    "make_problem",
    "run_pipeline",
    "run_oracle",
    "bench",
    "BENCH_COLUMNS",
    "row_seed",
]

PHASES = ("preprocess", "encode", "optimize", "readout")
BENCH_COLUMNS = (
    "instance",
    "repetition",
    "seed",
    "sampler",
    "variables",
    "best_energy",
    "decoded_objective",
    "oracle_objective",
    "optimal_hit",
    "repaired",
    "feasible",
)


@dataclass
class RunOptions:
    sampler: str = "sa"
    reads: int = 1000
    sweeps: int = 200
    t_initial: float | None = None
    t_final: float | None = None
    seed: int = 0
    workers: int = 1
    slots: int | None = None
    penalty: float | None = None
    carbon_weight: float = 1.0
    oracle: bool = False

    def make_sampler(self):
        if self.sampler == "exhaustive":
            return ExhaustiveSampler(keep=1)
        if self.sampler == "sa":
            params = AnnealParams(self.reads, self.sweeps, self.t_initial, self.t_final, self.seed)
            return SimulatedAnnealingSampler(params, self.workers)
        raise ValueError(f"unknown sampler {self.sampler!r}; expected 'sa' or 'exhaustive'")


@dataclass
class RunReport:
    problem: str
    instance: str
    sampler: str
    seed: int
    solution: dict[str, Any]
    best_energy: float | None
    oracle: dict[str, Any] | None
    timings_ms: dict[str, float] = field(default_factory=dict)
    variables: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class _Clock:
    def __init__(self) -> None:
        self.ms = {p: 0.0 for p in PHASES}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.ms[name] += (time.perf_counter() - start) * 1e3


class Problem:
    """Adapter giving the three problem modules one pipeline interface."""

    kind: str

    def preprocess(self, opts: RunOptions) -> None: ...

    def encode(self, opts: RunOptions) -> QuboModel: ...

    def readout(self, sample: Sample) -> dict[str, Any]: ...

    def oracle(self, opts: RunOptions) -> dict[str, Any]: ...

    def objective(self, solution: dict[str, Any]) -> float: ...


class JoinProblem(Problem):
    kind = "join"

    def __init__(self, query: joinorder.Query) -> None:
        self.q = query

    def preprocess(self, opts: RunOptions) -> None:
        self.coeffs = joinorder.log_coefficients(self.q)

    def encode(self, opts: RunOptions) -> QuboModel:
        objective, penalties, self.vm = joinorder.join_order_terms(self.q, opts.penalty, self.coeffs)
        return objective + penalties

    def _describe(self, o: joinorder.JoinOrder) -> dict[str, Any]:
        return {
            "order": o.names(self.q),
            "order_indices": list(o.order),
            "log_cost": joinorder.log_cost(self.q, o),
            "true_cost": joinorder.true_cost(self.q, o),
            "repaired": o.repaired,
            "feasible": True,
        }

    def readout(self, sample: Sample) -> dict[str, Any]:
        return self._describe(joinorder.decode_join_order(self.vm, sample))

    def oracle(self, opts: RunOptions) -> dict[str, Any]:
        return self._describe(joinorder.oracle_best_order(self.q))

    def objective(self, solution: dict[str, Any]) -> float:
        return solution["log_cost"]


class TxProblem(Problem):
    kind = "tx"

    def __init__(self, workload: txsched.Workload) -> None:
        self.w = workload

    def preprocess(self, opts: RunOptions) -> None:
        self.g = txsched.conflicts(self.w)
        self.slots = opts.slots if opts.slots is not None else txsched.greedy_slot_bound(self.g)

    def encode(self, opts: RunOptions) -> QuboModel:
        model, self.vm = txsched.encode_schedule(self.g, self.slots, opts.penalty)
        return model

    def _describe(self, s: txsched.Schedule) -> dict[str, Any]:
        return {
            "slots": {t.id: k for t, k in zip(self.w.transactions, s.slot)},
            "slot_count": self.slots,
            "conflicts": [[self.w.transactions[a].id, self.w.transactions[b].id] for a, b in sorted(self.g.edges)],
            "violations": s.violations,
            "makespan": s.makespan,
            "slot_sum": s.slot_sum,
            "repaired": s.repaired,
            "feasible": s.violations == 0,
        }

    def readout(self, sample: Sample) -> dict[str, Any]:
        return self._describe(txsched.decode_schedule(self.vm, sample, self.g))

    def oracle(self, opts: RunOptions) -> dict[str, Any]:
        if not hasattr(self, "g"):
            self.preprocess(opts)
        return self._describe(txsched.oracle_schedule(self.g, self.slots))

    def objective(self, solution: dict[str, Any]) -> float:
        # violations dominate the slot sum, mirroring the encoding's penalty
        return float(solution["violations"] * (self.g.n * (self.slots - 1) + 1) + solution["slot_sum"])


class CloudProblem(Problem):
    kind = "cloud"

    def __init__(self, instance: cloudalloc.CloudInstance) -> None:
        self.c = instance

    def preprocess(self, opts: RunOptions) -> None:
        self.penalty = (
            cloudalloc.allocation_penalty(self.c, opts.carbon_weight) if opts.penalty is None else opts.penalty
        )

    def encode(self, opts: RunOptions) -> QuboModel:
        model, self.vm = cloudalloc.encode_allocation(self.c, self.penalty, opts.carbon_weight)
        return model

    def _describe(self, a: cloudalloc.Allocation) -> dict[str, Any]:
        m = cloudalloc.allocation_metrics(self.c, a)
        out = a.to_dict()
        out.update(carbon=m.carbon, pm_loads=list(m.pm_loads), vm_loads=list(m.vm_loads), feasible=m.feasible)
        return out

    def readout(self, sample: Sample) -> dict[str, Any]:
        return self._describe(cloudalloc.decode_allocation(self.vm, sample, self.c))

    def oracle(self, opts: RunOptions) -> dict[str, Any]:
        return self._describe(cloudalloc.oracle_best_allocation(self.c, opts.carbon_weight))

    def objective(self, solution: dict[str, Any]) -> float:
        return solution["carbon"] if solution["feasible"] else float("inf")


def make_problem(kind: str, instance: Any) -> Problem:
    if kind == "join":
        return JoinProblem(instance)
    if kind == "tx":
        return TxProblem(instance)
    if kind == "cloud":
        return CloudProblem(instance)
    raise ValueError(f"unknown problem {kind!r}; expected join, tx or cloud")


def run_pipeline(kind: str, path: str | Path, opts: RunOptions | None = None) -> RunReport:
    """Run the four phases on one instance file."""
    opts = opts or RunOptions()
    clock = _Clock()
    with clock.phase("preprocess"):
        problem = make_problem(kind, load_instance(kind, path))
        problem.preprocess(opts)
    with clock.phase("encode"):
        model = problem.encode(opts)
    with clock.phase("optimize"):
        samples = opts.make_sampler().sample(model)
    with clock.phase("readout"):
        solution = problem.readout(samples.best)
    oracle = problem.oracle(opts) if opts.oracle else None
    return RunReport(
        problem=kind,
        instance=str(path),
        sampler=opts.sampler,
        seed=opts.seed,
        solution=solution,
        best_energy=samples.best.energy,
        oracle=oracle,
        timings_ms=clock.ms,
        variables=model.n,
    )


def run_oracle(kind: str, path: str | Path, opts: RunOptions | None = None) -> RunReport:
    """Brute-force reference only; the encode phase is skipped and timed as zero."""
    opts = opts or RunOptions()
    clock = _Clock()
    with clock.phase("preprocess"):
        problem = make_problem(kind, load_instance(kind, path))
        problem.preprocess(opts)
    with clock.phase("optimize"):
        solution = problem.oracle(opts)
    return RunReport(kind, str(path), "oracle", opts.seed, solution, None, solution, clock.ms)


def row_seed(seed: int, instance: int, repetition: int) -> int:
    """64-bit seed of one bench row, derived from the master seed."""
    state = np.random.SeedSequence(seed, spawn_key=(instance, repetition)).generate_state(2, np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def bench(
    kind: str,
    directory: str | Path,
    repetitions: int = 1,
    opts: RunOptions | None = None,
    timings: bool = False,
) -> str:
    """CSV with one row per (instance, repetition).

    Without ``timings`` the output is a pure function of the inputs and the
    seed. Phase timing columns are appended only on request because
    wall-clock values differ between runs.
    """
    opts = opts or RunOptions()
    directory = Path(directory)
    if not directory.is_dir():
        raise ValueError(f"{directory}: not a readable directory")
    if repetitions < 1:
        raise ValueError(f"repetitions must be positive, got {repetitions}")
    files = sorted(p for p in directory.iterdir() if p.suffix == ".json" and p.is_file())
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    columns = list(BENCH_COLUMNS) + ([f"{p}_ms" for p in PHASES] if timings else [])
    writer.writerow(columns)
    for k, path in enumerate(files):
        oracle_obj = None
        for rep in range(repetitions):
            seed = row_seed(opts.seed, k, rep)
            row_opts = RunOptions(**{**asdict(opts), "seed": seed, "oracle": False})
            report = run_pipeline(kind, path, row_opts)
            problem = make_problem(kind, load_instance(kind, path))
            problem.preprocess(row_opts)
            decoded = problem.objective(report.solution)
            if rep == 0:
                try:
                    oracle_obj = problem.objective(problem.oracle(row_opts))
                except ValueError:
                    oracle_obj = None
            hit = None if oracle_obj is None else (
                decoded == oracle_obj or abs(decoded - oracle_obj) <= 1e-6
            )
            row = [
                path.name,
                rep,
                seed,
                opts.sampler,
                report.variables,
                report.best_energy,
                decoded,
                oracle_obj,
                hit,
                report.solution.get("repaired", False),
                report.solution["feasible"],
            ]
            if timings:
                row += [report.timings_ms[p] for p in PHASES]
            writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()
