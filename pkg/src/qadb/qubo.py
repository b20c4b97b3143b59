"""QUBO models, energy evaluation and the Ising convention.

A QUBO model stores each coefficient once per unordered variable pair, keyed
``(i, j)`` with ``i <= j``. Diagonal keys act as linear terms because
``x * x == x`` for binary ``x``. The energy of an assignment ``x`` is::

    E(x) = offset + sum_{i <= j} q[i, j] * x[i] * x[j]
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "QuboModel",
    "IsingModel",
    "new_model",
    "add_term",
    "energy",
    "to_ising",
    "from_ising",
    "add_squared",
]


def _check_finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{what} must be finite, got {value!r}")
    return value


@dataclass
class QuboModel:
    """Sparse upper-triangular QUBO over ``n`` binary variables.

    Parameters
    ----------
    n : int
        Number of variables.
    terms : dict[tuple[int, int], float]
        Coefficients keyed by ``(i, j)`` with ``0 <= i <= j < n``.
    offset : float
        Constant added to every energy.
    """

    n: int
    terms: dict[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 0:
            raise ValueError(f"variable count must be a non-negative integer, got {self.n!r}")
        self.n = int(self.n)
        self.offset = _check_finite(self.offset, "offset")
        raw, self.terms = self.terms, {}
        for (i, j), w in raw.items():
            self.add_term(i, j, w)
        self._adjacency: list[dict[int, float]] | None = None

    def _check_index(self, i: int) -> int:
        if isinstance(i, bool) or int(i) != i or not 0 <= i < self.n:
            raise IndexError(f"variable index {i!r} out of range for n={self.n}")
        return int(i)

    def add_term(self, i: int, j: int, w: float) -> "QuboModel":
        """Accumulate ``w`` onto the coefficient of ``x_i * x_j``.

        The key is normalized so the smaller index comes first. Returns the
        model to allow chaining.
        """
        i = self._check_index(i)
        j = self._check_index(j)
        w = _check_finite(w, f"coefficient for ({i}, {j})")
        if i > j:
            i, j = j, i
        self.terms[(i, j)] = self.terms.get((i, j), 0.0) + w
        self._adjacency = None
        return self

    def add_linear(self, i: int, w: float) -> "QuboModel":
        return self.add_term(i, i, w)

    def add_offset(self, w: float) -> "QuboModel":
        self.offset += _check_finite(w, "offset increment")
        return self

    @classmethod
    def from_symmetric(cls, matrix: Sequence[Sequence[float]] | np.ndarray, offset: float = 0.0) -> "QuboModel":
        """Fold a full square matrix into canonical form.

        Off-diagonal entries are combined as ``q[i, j] = M[i, j] + M[j, i]``
        so that ``x @ M @ x`` and the folded model agree on every assignment.
        """
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        model = cls(m.shape[0], offset=offset)
        for i in range(m.shape[0]):
            if m[i, i] != 0.0:
                model.add_term(i, i, m[i, i])
            for j in range(i + 1, m.shape[0]):
                w = m[i, j] + m[j, i]
                if w != 0.0:
                    model.add_term(i, j, w)
        return model

    def copy(self) -> "QuboModel":
        return QuboModel(self.n, dict(self.terms), self.offset)

    def __add__(self, other: "QuboModel") -> "QuboModel":
        if not isinstance(other, QuboModel):
            return NotImplemented
        if other.n != self.n:
            raise ValueError(f"cannot add models over {self.n} and {other.n} variables")
        out = self.copy()
        for (i, j), w in other.terms.items():
            out.add_term(i, j, w)
        out.offset += other.offset
        return out

    def iter_terms(self) -> Iterable[tuple[int, int, float]]:
        """Yield ``(i, j, w)`` sorted by key."""
        for (i, j) in sorted(self.terms):
            yield i, j, self.terms[(i, j)]

    def linear(self) -> np.ndarray:
        lin = np.zeros(self.n)
        for (i, j), w in self.terms.items():
            if i == j:
                lin[i] += w
        return lin

    def upper(self) -> np.ndarray:
        """Dense upper-triangular coefficient matrix."""
        u = np.zeros((self.n, self.n))
        for (i, j), w in self.terms.items():
            u[i, j] = w
        return u

    def couplings(self) -> np.ndarray:
        """Symmetric dense matrix of off-diagonal couplings, zero diagonal."""
        w = np.zeros((self.n, self.n))
        for (i, j), c in self.terms.items():
            if i != j:
                w[i, j] = c
                w[j, i] = c
        return w

    def neighbors(self, i: int) -> dict[int, float]:
        """Coupled variables of ``i`` and their coefficients (diagonal excluded)."""
        if self._adjacency is None:
            adj: list[dict[int, float]] = [{} for _ in range(self.n)]
            for (a, b), w in self.terms.items():
                if a != b:
                    adj[a][b] = w
                    adj[b][a] = w
            self._adjacency = adj
        return self._adjacency[self._check_index(i)]

    def _bits(self, bits: Sequence[int] | np.ndarray) -> np.ndarray:
        x = np.asarray(bits)
        if x.ndim != 1 or x.shape[0] != self.n:
            raise ValueError(f"assignment has length {x.shape[0] if x.ndim == 1 else x.shape}, model has n={self.n}")
        if x.size and not np.isin(x, (0, 1)).all():
            raise ValueError("assignment entries must be 0 or 1")
        return x.astype(np.int8)

    def energy(self, bits: Sequence[int] | np.ndarray) -> float:
        """Energy of a single 0/1 assignment."""
        x = self._bits(bits)
        total = self.offset
        for i, j, w in self.iter_terms():
            if x[i] and x[j]:
                total += w
        return float(total)

    def energies(self, assignments: np.ndarray) -> np.ndarray:
        """Vectorized energies for a ``(m, n)`` 0/1 array.

        This is the canonical evaluator used to build sample sets, so equal
        bitstrings always receive bit-identical energies.
        """
        x = np.asarray(assignments)
        if x.ndim != 2 or x.shape[1] != self.n:
            raise ValueError(f"expected shape (m, {self.n}), got {x.shape}")
        out = np.full(x.shape[0], self.offset, dtype=float)
        if not self.terms or x.shape[0] == 0:
            return out
        keys = sorted(self.terms)
        rows = np.fromiter((k[0] for k in keys), dtype=np.intp, count=len(keys))
        cols = np.fromiter((k[1] for k in keys), dtype=np.intp, count=len(keys))
        w = np.fromiter((self.terms[k] for k in keys), dtype=float, count=len(keys))
        xf = x.astype(float)
        chunk = max(1, 4_000_000 // max(1, len(keys)))
        for start in range(0, x.shape[0], chunk):
            block = xf[start:start + chunk]
            out[start:start + chunk] += (block[:, rows] * block[:, cols]) @ w
        return out

    def to_text(self) -> str:
        """Serialize as ``qubo <n> <offset>`` followed by ``i j w`` lines."""
        lines = [f"qubo {self.n} {self.offset!r}"]
        lines.extend(f"{i} {j} {w!r}" for i, j, w in self.iter_terms())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "QuboModel":
        lines = [ln.strip() for ln in text.splitlines()]
        lines = [ln for ln in lines if ln and not ln.startswith("#")]
        if not lines:
            raise ValueError("empty QUBO text")
        head = lines[0].split()
        if len(head) != 3 or head[0] != "qubo":
            raise ValueError(f"bad QUBO header: {lines[0]!r}")
        try:
            model = cls(int(head[1]), offset=float(head[2]))
        except ValueError as exc:
            raise ValueError(f"bad QUBO header: {lines[0]!r}") from exc
        for lineno, ln in enumerate(lines[1:], start=2):
            parts = ln.split()
            if len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'i j w', got {ln!r}")
            try:
                i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as exc:
                raise ValueError(f"line {lineno}: cannot parse {ln!r}") from exc
            model.add_term(i, j, w)
        return model


@dataclass
class IsingModel:
    """Ising model over spins in {-1, +1}.

    ``E(s) = offset + sum_i h[i] s[i] + sum_{i<j} J[i, j] s[i] s[j]``.
    The spin image of a binary assignment is ``s = 2 x - 1``.
    """

    h: np.ndarray
    j: dict[tuple[int, int], float] = field(default_factory=dict)
    offset: float = 0.0

    def __post_init__(self) -> None:
        self.h = np.asarray(self.h, dtype=float).reshape(-1)
        if not np.isfinite(self.h).all():
            raise ValueError("linear fields must be finite")
        self.offset = _check_finite(self.offset, "offset")
        n = self.h.shape[0]
        for (a, b), w in self.j.items():
            if not 0 <= a < b < n:
                raise ValueError(f"coupling key ({a}, {b}) must satisfy 0 <= i < j < {n}")
            _check_finite(w, f"coupling ({a}, {b})")

    @property
    def n(self) -> int:
        return int(self.h.shape[0])

    def energy(self, spins: Sequence[int] | np.ndarray) -> float:
        s = np.asarray(spins, dtype=float)
        if s.shape != (self.n,):
            raise ValueError(f"spin vector has shape {s.shape}, model has n={self.n}")
        total = self.offset + float(self.h @ s)
        for (a, b), w in self.j.items():
            total += w * s[a] * s[b]
        return float(total)


def new_model(n: int) -> QuboModel:
    return QuboModel(n)


def add_term(model: QuboModel, i: int, j: int, w: float) -> QuboModel:
    return model.add_term(i, j, w)


def energy(model: QuboModel, bits: Sequence[int] | np.ndarray) -> float:
    return model.energy(bits)


def to_ising(model: QuboModel) -> IsingModel:
    """Convert via ``x = (1 + s) / 2``; energies agree on every assignment."""
    h = np.zeros(model.n)
    j: dict[tuple[int, int], float] = {}
    offset = model.offset
    for a, b, w in model.iter_terms():
        if a == b:
            h[a] += w / 2.0
            offset += w / 2.0
        else:
            j[(a, b)] = j.get((a, b), 0.0) + w / 4.0
            h[a] += w / 4.0
            h[b] += w / 4.0
            offset += w / 4.0
    return IsingModel(h, j, offset)


def from_ising(model: IsingModel) -> QuboModel:
    """Inverse of :func:`to_ising`, substituting ``s = 2 x - 1``."""
    out = QuboModel(model.n, offset=model.offset)
    for i, hi in enumerate(model.h):
        if hi != 0.0:
            out.add_term(i, i, 2.0 * hi)
            out.offset -= hi
    for (a, b), w in sorted(model.j.items()):
        if w != 0.0:
            out.add_term(a, b, 4.0 * w)
            out.add_term(a, a, -2.0 * w)
            out.add_term(b, b, -2.0 * w)
            out.offset += w
    return out


def add_squared(
    model: QuboModel,
    coeffs: Mapping[int, float],
    constant: float = 0.0,
    scale: float = 1.0,
) -> QuboModel:
    """Add ``scale * (sum_k coeffs[k] * x_k + constant) ** 2`` to ``model``.

    Used for one-hot constraints (``coeffs`` all ones, ``constant = -1``) and
    slack-expanded capacity equalities.
    """
    items = sorted((int(k), float(c)) for k, c in coeffs.items() if c != 0.0)
    for idx, (k, ck) in enumerate(items):
        model.add_term(k, k, scale * (ck * ck + 2.0 * constant * ck))
        for l, cl in items[idx + 1:]:
            model.add_term(k, l, scale * 2.0 * ck * cl)
    model.offset += scale * constant * constant
    return model
