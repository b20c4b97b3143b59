"""Samplers for QUBO models: exhaustive enumeration and simulated annealing.

Both return a :class:`SampleSet` sorted by energy with ties broken by the
lexicographic order of the bitstrings. A sampler is anything with a
``sample(model) -> SampleSet`` method, so a remote annealer client can be
dropped in without touching the encoders.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Protocol, Sequence

import numpy as np

from .qubo import QuboModel

__all__ = [
    "AnnealParams",
    "Sample",
    "SampleSet",
    "Sampler",
    "ExhaustiveSampler",
    "SimulatedAnnealingSampler",
    "MAX_EXHAUSTIVE_VARIABLES",
    "solve_exhaustive",
    "simulated_annealing",
    "flip_delta",
    "auto_temperatures",
    "read_seed_sequence",
    "enumerate_energies",
]

MAX_EXHAUSTIVE_VARIABLES = 26
_LOW_BITS = 16
_BATCH_READS = 256
_DRAW_BUDGET = 1 << 21
# spawn-key slot reserved for the auto-schedule probe; reads use 0..reads-1
_SCHEDULE_STREAM = 2**63


@dataclass(frozen=True)
class Sample:
    bits: tuple[int, ...]
    energy: float
    occurrences: int = 1

    @property
    def bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)

    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.int8)


@dataclass(frozen=True)
class SampleSet:
    samples: tuple[Sample, ...]
    model_n: int

    @classmethod
    def from_assignments(
        cls,
        model: QuboModel,
        assignments: np.ndarray,
        occurrences: Sequence[int] | np.ndarray | None = None,
    ) -> "SampleSet":
        """Merge duplicate rows, evaluate energies and sort.

        Energies always come from :meth:`QuboModel.energies`, never from
        a sampler's running bookkeeping.
        """
        x = np.asarray(assignments, dtype=np.int8)
        x = x.reshape(-1, model.n) if model.n else x.reshape(len(x), 0)
        counts = np.ones(x.shape[0], dtype=np.int64) if occurrences is None else np.asarray(occurrences, dtype=np.int64)
        if x.shape[0] == 0:
            return cls((), model.n)
        if model.n == 0:
            return cls((Sample((), float(model.offset), int(counts.sum())),), 0)
        uniq, inverse = np.unique(x, axis=0, return_inverse=True)
        merged = np.zeros(uniq.shape[0], dtype=np.int64)
        np.add.at(merged, inverse.reshape(-1), counts)
        energies = model.energies(uniq)
        # np.unique sorts rows lexicographically; a stable sort keeps that for ties
        order = np.argsort(energies, kind="stable")
        samples = tuple(
            Sample(tuple(int(b) for b in uniq[k]), float(energies[k]), int(merged[k]))
            for k in order
        )
        return cls(samples, model.n)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, k: int) -> Sample:
        return self.samples[k]

    @property
    def best(self) -> Sample:
        if not self.samples:
            raise ValueError("empty sample set")
        return self.samples[0]

    @property
    def total_occurrences(self) -> int:
        return sum(s.occurrences for s in self.samples)

    def to_text(self) -> str:
        """One ``<bitstring> <energy> <occurrences>`` line per sample."""
        return "".join(f"{s.bitstring or '-'} {s.energy!r} {s.occurrences}\n" for s in self.samples)

    @classmethod
    def from_text(cls, text: str, model_n: int) -> "SampleSet":
        samples = []
        for ln in text.splitlines():
            if not ln.strip():
                continue
            bits, e, occ = ln.split()
            bits = "" if bits == "-" else bits
            if len(bits) != model_n:
                raise ValueError(f"bitstring {bits!r} does not have length {model_n}")
            samples.append(Sample(tuple(int(c) for c in bits), float(e), int(occ)))
        return cls(tuple(samples), model_n)

    def to_records(self) -> list[dict]:
        return [
            {"bits": s.bitstring, "energy": s.energy, "occurrences": s.occurrences}
            for s in self.samples
        ]


@dataclass(frozen=True)
class AnnealParams:
    """Simulated annealing settings.

    ``t_initial``/``t_final`` left as ``None`` are derived from the model by
    :func:`auto_temperatures`.
    """

    reads: int = 1000
    sweeps: int = 200
    t_initial: float | None = None
    t_final: float | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if int(self.reads) != self.reads or self.reads < 1:
            raise ValueError(f"reads must be a positive integer, got {self.reads!r}")
        if int(self.sweeps) != self.sweeps or self.sweeps < 1:
            raise ValueError(f"sweeps must be a positive integer, got {self.sweeps!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        for name in ("t_initial", "t_final"):
            t = getattr(self, name)
            if t is not None and not (math.isfinite(t) and t > 0):
                raise ValueError(f"{name} must be a positive finite temperature, got {t!r}")
        if self.t_initial is not None and self.t_final is not None and not self.t_final < self.t_initial:
            raise ValueError(f"t_final ({self.t_final}) must be below t_initial ({self.t_initial})")


class Sampler(Protocol):
    def sample(self, model: QuboModel) -> SampleSet: ...


def flip_delta(model: QuboModel, bits: Sequence[int] | np.ndarray, i: int) -> float:
    """Energy change from flipping bit ``i``, in time linear in its degree."""
    if isinstance(i, bool) or int(i) != i or not 0 <= i < model.n:
        raise IndexError(f"variable index {i!r} out of range for n={model.n}")
    if len(bits) != model.n:
        raise ValueError(f"assignment has length {len(bits)}, model has n={model.n}")
    field = model.terms.get((i, i), 0.0)
    for k, w in model.neighbors(i).items():
        if bits[k]:
            field += w
    return field if bits[i] == 0 else -field


def read_seed_sequence(seed: int, read: int) -> np.random.SeedSequence:
    """Random stream of one annealing read.

    Each read gets ``SeedSequence(seed, spawn_key=(read,))`` feeding a Philox
    counter-based generator, so its draws do not depend on which worker runs
    it or in what order.
    """
    return np.random.SeedSequence(seed, spawn_key=(read,))


def _rng(seq: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seq))


def auto_temperatures(model: QuboModel, seed: int = 0) -> tuple[float, float]:
    """Default schedule endpoints.

    The initial temperature is the largest absolute single-flip delta at a
    random assignment; the final one is 1e-3 of it.
    """
    rng = _rng(np.random.SeedSequence(seed, spawn_key=(_SCHEDULE_STREAM,)))
    x = rng.integers(0, 2, model.n).astype(float)
    lin = model.linear()
    field = lin + x @ model.couplings()
    deltas = np.abs(field)
    t0 = float(deltas.max()) if deltas.size else 0.0
    if not t0 > 0.0:
        t0 = 1.0
    return t0, t0 * 1e-3


def _anneal_batch(
    lin: np.ndarray,
    coup: np.ndarray,
    betas: np.ndarray,
    seed: int,
    reads: range,
) -> np.ndarray:
    n = lin.shape[0]
    sweeps = betas.shape[0]
    gens = [_rng(read_seed_sequence(seed, r)) for r in reads]
    x = np.stack([g.integers(0, 2, n) for g in gens]).astype(float)
    field = x @ coup
    chunk = max(1, _DRAW_BUDGET // (len(gens) * n))
    for c0 in range(0, sweeps, chunk):
        c1 = min(c0 + chunk, sweeps)
        # Metropolis acceptance u < exp(-beta d) rewritten as beta d < -ln u
        thresholds = -np.log1p(-np.stack([g.random((c1 - c0, n)) for g in gens], axis=1))
        for s in range(c0, c1):
            beta = betas[s]
            t = thresholds[s - c0]
            for i in range(n):
                sign = 1.0 - 2.0 * x[:, i]
                delta = sign * (lin[i] + field[:, i])
                rows = np.flatnonzero(beta * delta <= t[:, i])
                if rows.size:
                    step = sign[rows]
                    x[rows, i] += step
                    field[rows] += step[:, None] * coup[i]
    return x.astype(np.int8)


def simulated_annealing(model: QuboModel, params: AnnealParams | None = None, workers: int = 1) -> SampleSet:
    """Single-flip Metropolis annealing with a geometric inverse-temperature ramp.

    Every read starts from a uniformly random assignment and performs
    ``params.sweeps`` passes over the variables in index order. The inverse
    temperature moves geometrically from ``1/t_initial`` to ``1/t_final``.
    Results are identical for any ``workers`` count.
    """
    params = params or AnnealParams()
    if model.n < 1:
        raise ValueError("simulated annealing needs at least one variable")
    if workers < 1:
        raise ValueError(f"workers must be positive, got {workers}")
    t0, t1 = params.t_initial, params.t_final
    if t0 is None or t1 is None:
        auto0, auto1 = auto_temperatures(model, params.seed)
        t0 = auto0 if t0 is None else t0
        t1 = min(auto1, t0 * 1e-3) if t1 is None else t1
    if not t1 < t0:
        raise ValueError(f"t_final ({t1}) must be below t_initial ({t0})")
    if params.sweeps == 1:
        betas = np.array([1.0 / t1])
    else:
        betas = np.geomspace(1.0 / t0, 1.0 / t1, params.sweeps)

    lin = model.linear()
    coup = model.couplings()
    batches = [range(s, min(s + _BATCH_READS, params.reads)) for s in range(0, params.reads, _BATCH_READS)]
    if workers == 1 or len(batches) == 1:
        results = [_anneal_batch(lin, coup, betas, params.seed, b) for b in batches]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda b: _anneal_batch(lin, coup, betas, params.seed, b), batches))
    return SampleSet.from_assignments(model, np.concatenate(results, axis=0))


def _bit_table(k: int) -> np.ndarray:
    """All 2**k patterns, row ``r`` holding the bits of ``r`` with column 0 as MSB."""
    r = np.arange(2**k, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1, dtype=np.int64)
    return ((r[:, None] >> shifts) & 1).astype(float)


def enumerate_energies(models: Sequence[QuboModel], block: int = 1 << 22) -> Iterator[tuple[np.ndarray, list[np.ndarray]]]:
    """Stream energies of every assignment for models sharing ``n``.

    Yields ``(codes, energies)`` blocks where ``codes`` are integers whose
    binary expansion (variable 0 as MSB) is the assignment, so integer order
    equals lexicographic bit order. The variables are split into a low and a
    high group; each block is one dense product, keeping ``n = 26`` tractable.
    """
    if not models:
        return
    n = models[0].n
    if any(m.n != n for m in models):
        raise ValueError("models must share the variable count")
    if n > MAX_EXHAUSTIVE_VARIABLES:
        raise ValueError(f"exhaustive enumeration is limited to {MAX_EXHAUSTIVE_VARIABLES} variables, model has {n}")
    if n == 0:
        yield np.zeros(1, dtype=np.int64), [np.array([m.offset]) for m in models]
        return
    hi_n = max(0, n - _LOW_BITS)
    lo_n = n - hi_n
    # variables [0, hi_n) are the high group, [hi_n, n) the low group
    lo = _bit_table(lo_n)
    hi = _bit_table(hi_n)
    lo_codes = np.arange(2**lo_n, dtype=np.int64)
    parts = []
    for m in models:
        u = m.upper()
        u_ll = u[hi_n:, hi_n:]
        u_hh = u[:hi_n, :hi_n]
        u_hl = u[:hi_n, hi_n:]
        e_lo = np.einsum("ij,jk,ik->i", lo, u_ll, lo)
        e_hi = np.einsum("ij,jk,ik->i", hi, u_hh, hi) + m.offset
        parts.append((e_lo, e_hi, u_hl))
    per = max(1, block // lo.shape[0])
    for start in range(0, hi.shape[0], per):
        stop = min(start + per, hi.shape[0])
        h = hi[start:stop]
        codes = (np.arange(start, stop, dtype=np.int64)[None, :] << lo_n) + lo_codes[:, None]
        out = []
        for e_lo, e_hi, u_hl in parts:
            cross = lo @ (h @ u_hl).T
            out.append((e_lo[:, None] + e_hi[None, start:stop] + cross).reshape(-1))
        yield codes.reshape(-1), out


def _codes_to_bits(codes: np.ndarray, n: int) -> np.ndarray:
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.int8)


def solve_exhaustive(model: QuboModel, keep: int = 1) -> SampleSet:
    """The ``keep`` lowest-energy assignments out of all ``2**n``."""
    if int(keep) != keep or keep < 1:
        raise ValueError(f"keep must be a positive integer, got {keep!r}")
    if model.n > MAX_EXHAUSTIVE_VARIABLES:
        raise ValueError(
            f"exhaustive solve is limited to {MAX_EXHAUSTIVE_VARIABLES} variables, model has {model.n}"
        )
    pool_codes = np.zeros(0, dtype=np.int64)
    pool_e = np.zeros(0)
    for codes, (e,) in enumerate_energies([model]):
        codes = np.concatenate([pool_codes, codes])
        e = np.concatenate([pool_e, e])
        if e.shape[0] > keep:
            part = np.argpartition(e, keep - 1)[:keep]
            # keep near-ties of the cut so the final lexicographic rule sees them
            cut = e[part].max()
            tied = np.flatnonzero(np.abs(e - cut) <= 1e-9 * max(1.0, abs(cut)))
            if tied.shape[0] > 4 * keep + 4096:
                tied = tied[np.argsort(codes[tied], kind="stable")[: 4 * keep + 4096]]
            part = np.union1d(np.flatnonzero(e < cut - 1e-9 * max(1.0, abs(cut))), tied)
            codes, e = codes[part], e[part]
        pool_codes, pool_e = codes, e
    bits = _codes_to_bits(pool_codes, model.n) if model.n else np.zeros((1, 0), dtype=np.int8)
    full = SampleSet.from_assignments(model, bits)
    return SampleSet(full.samples[:keep], model.n)


@dataclass
class ExhaustiveSampler:
    keep: int = 1

    def sample(self, model: QuboModel) -> SampleSet:
        return solve_exhaustive(model, self.keep)


@dataclass
class SimulatedAnnealingSampler:
    params: AnnealParams = AnnealParams()
    workers: int = 1

    def sample(self, model: QuboModel) -> SampleSet:
        return simulated_annealing(model, self.params, self.workers)
