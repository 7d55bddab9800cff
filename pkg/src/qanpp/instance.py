"""Random Number Partitioning instances with exact integer arithmetic.

An instance holds n random b-bit numbers ``a_j = w_j * 2^-b`` with integer
weights ``w_j`` drawn uniformly from [1, 2^b].  A bit-string ``z`` (a plain
Python int, bit j being z_j) selects the spin configuration S_j = 1 - 2*z_j
and the signed partition residue is

    Omega_z = a_0 + sum_j a_j * S_j,          E_z = |Omega_z|.

All residue arithmetic is done on the raw integer weights (units of 2^-b);
floats only appear at module boundaries that need physical units.  The
optional ``a0_weight`` is the symmetry-breaking extra number: with it the
multiset of residues is no longer symmetric under global spin flip.
"""

from __future__ import annotations

import json
import heapq
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

MAX_N = 30
MAX_B = 40
TABLE_MAX_N = 26  # residue_table allocates 2^n int64


class PreconditionError(ValueError):
    """A documented precondition was violated; names the offending parameter."""


@dataclass(frozen=True)
class NppInstance:
    """Immutable NPP instance; weights are exact integers in units of 2^-b."""

    n: int
    b: int
    seed: int
    weights: tuple[int, ...]
    a0_weight: int | None = None

    def __post_init__(self):
        if len(self.weights) != self.n:
            raise PreconditionError("weights: expected %d entries" % self.n)
        top = 1 << self.b
        if any(w < 1 or w > top for w in self.weights):
            raise PreconditionError("weights: every w_j must lie in [1, 2^b]")
        a0 = self.a0_weight or 0
        if self.n * top + a0 >= 1 << 62:
            raise PreconditionError("n*2^b + a0 must stay below 2^62")

    @property
    def scale(self) -> float:
        """Conversion factor from raw integer residues to physical units."""
        return 2.0 ** -self.b

    @property
    def a0(self) -> float:
        return (self.a0_weight or 0) * self.scale

    def values(self) -> np.ndarray:
        """The numbers a_j as floats in (0, 1]."""
        return np.asarray(self.weights, dtype=np.float64) * self.scale

    def sigma0(self) -> float:
        """sigma(0) = (n^-1 sum a_j^2)^(1/2), the self-averaging width scale."""
        ssq = sum(w * w for w in self.weights)  # exact
        return (ssq / self.n) ** 0.5 * self.scale

    def total(self) -> float:
        """B = a_0 + sum_j a_j, the top of the residue range."""
        return (sum(self.weights) + (self.a0_weight or 0)) * self.scale


@dataclass(frozen=True)
class Residue:
    """Signed residue: ``raw`` is exact (units of 2^-b), E = |Omega|."""

    raw: int
    scale: float

    @property
    def omega(self) -> float:
        return self.raw * self.scale

    @property
    def energy(self) -> float:
        return abs(self.raw) * self.scale


def generate(n: int, b: int, seed: int, with_a0: bool = False) -> NppInstance:
    """Draw a fresh instance from a counter-based (Philox) stream.

    Identical (n, b, seed) always produce identical weights, independent of
    platform or thread schedule: the weights are the low b bits (+1) of the
    raw Philox words, so only the documented-stable bit stream is consumed.
    ``with_a0`` additionally draws the symmetry-breaking a_0 from word n.
    """
    if not 1 <= n <= MAX_N:
        raise PreconditionError("n must lie in [1, %d]" % MAX_N)
    if not 1 <= b <= MAX_B:
        raise PreconditionError("b must lie in [1, %d]" % MAX_B)
    if n * (1 << b) >= 1 << 62:
        raise PreconditionError("n*2^b must stay below 2^62")
    words = np.random.Philox(seed).random_raw(n + 1)
    mask = (1 << b) - 1  # 2^64 % 2^b == 0, so masking has no modulo bias
    weights = tuple(int(w & mask) + 1 for w in words[:n])
    a0 = int(words[n] & mask) + 1 if with_a0 else None
    return NppInstance(n=n, b=b, seed=seed, weights=weights, a0_weight=a0)


def spins(instance: NppInstance, z: int) -> np.ndarray:
    """Spin view S_j = 1 - 2*z_j of a bit-string."""
    bits = (z >> np.arange(instance.n)) & 1
    return 1 - 2 * bits


def residue(instance: NppInstance, z: int) -> Residue:
    """Exact signed residue a_0 + sum_j w_j (1 - 2 z_j), no rounding."""
    if not 0 <= z < (1 << instance.n):
        raise PreconditionError("z out of range for n=%d" % instance.n)
    raw = instance.a0_weight or 0
    for j, w in enumerate(instance.weights):
        raw += w if not (z >> j) & 1 else -w
    return Residue(raw=raw, scale=instance.scale)


def residue_table(instance: NppInstance) -> np.ndarray:
    """All 2^n raw residues as int64, table[z] = residue(z).raw.

    Built by doubling over bits (one vectorized integer addition per state,
    like a Gray-code sweep): the block with bit j set is the block without
    it shifted by -2*w_j.
    """
    n = instance.n
    if n > TABLE_MAX_N:
        raise PreconditionError("residue_table limited to n <= %d" % TABLE_MAX_N)
    table = np.empty(1 << n, dtype=np.int64)
    table[0] = (instance.a0_weight or 0) + sum(instance.weights)
    for j, w in enumerate(instance.weights):
        half = 1 << j
        np.subtract(table[:half], 2 * w, out=table[half : 2 * half])
    return table


def hamming(z1: int, z2: int) -> int:
    """Number of differing bits."""
    return bin(z1 ^ z2).count("1")


def overlap(n: int, z1: int, z2: int) -> Fraction:
    """Spin overlap q = 1 - 2r/n as an exact rational."""
    return Fraction(n - 2 * hamming(z1, z2), n)


def karmarkar_karp(instance: NppInstance) -> Residue:
    """Largest-two differencing baseline on the n weights (a_0 excluded).

    Repeatedly replaces the two largest numbers by their difference; the
    final survivor is the residue of the implied partition.
    """
    heap = [-w for w in instance.weights]
    heapq.heapify(heap)
    while len(heap) > 1:
        x = -heapq.heappop(heap)
        y = -heapq.heappop(heap)
        heapq.heappush(heap, -(x - y))
    return Residue(raw=-heap[0], scale=instance.scale)


def to_json(instance: NppInstance) -> str:
    payload = {
        "n": instance.n,
        "b": instance.b,
        "seed": instance.seed,
        "weights": list(instance.weights),
        "a0": instance.a0_weight,
    }
    return json.dumps(payload)


def from_json(text: str) -> NppInstance:
    raw = json.loads(text)
    return NppInstance(
        n=int(raw["n"]),
        b=int(raw["b"]),
        seed=int(raw["seed"]),
        weights=tuple(int(w) for w in raw["weights"]),
        a0_weight=None if raw.get("a0") is None else int(raw["a0"]),
    )


def save(instance: NppInstance, path: str | Path) -> None:
    Path(path).write_text(to_json(instance) + "\n")


def load(path: str | Path) -> NppInstance:
    return from_json(Path(path).read_text())
