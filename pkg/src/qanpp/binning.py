"""Log-binned oracle cost for the adiabatic algorithm.

The quasi-continuous residue spectrum is replaced by a small-integer cost,

    c(x) = eps_k = -M + k    for omega_k <= |x| < omega_{k+1},
    omega_k = (2^k - 1) * Delta,        k = 0 .. M,

with everything at or above the cutoff omega_M costing eps_M = 0.  The bin
width parameter is tied to the density of residues near zero,
Delta = 2^-n K / P(0) with P(0) = (2 pi n sigma^2(0))^(-1/2), so the solution
bin L_0 holds ~2K strings on average regardless of n.

Two cutoff modes:

- "paper-default": M is the integer nearest log2(a_0 + sum a_j), the choice
  used in the reference numerical experiments.
- "small-cutoff":  the largest M with omega_M <= min(1, <E>/2), keeping the
  residue density nearly uniform over all nonzero bins so that
  d_k ~ d_0 2^k.

Bin membership is decided on exact integer |raw| residues against
integer-rounded thresholds; a residue exactly on a boundary goes to the
higher bin, matching the half-open intervals above.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .instance import NppInstance, PreconditionError, residue_table

MODES = ("paper-default", "small-cutoff")


@dataclass(frozen=True)
class BinnedCost:
    """Frozen bin ladder; immutable and safe for shared concurrent reads."""

    M: int
    delta_bin: float
    omega: tuple[float, ...]        # omega_k = (2^k - 1) * Delta, k = 0..M
    epsilon: tuple[int, ...]        # eps_k = -M + k
    K: int
    mode: str
    b: int
    thresholds_raw: tuple[int, ...]  # round(omega_k * 2^b), k = 0..M

    @property
    def cutoff(self) -> float:
        return self.omega[-1]


@dataclass(frozen=True)
class SubspaceDims:
    """Exact subspace dimensions d_k = |L_k|; sum d_k = 2^n."""

    d: tuple[int, ...]

    @property
    def d0(self) -> int:
        return self.d[0]


def p_zero(instance: NppInstance) -> float:
    """Gaussian density of signed residues at the origin."""
    s0 = instance.sigma0()
    return 1.0 / math.sqrt(2.0 * math.pi * instance.n * s0 * s0)


def mean_energy(instance: NppInstance) -> float:
    """<E> = sigma(0) sqrt(2n/pi)."""
    return instance.sigma0() * math.sqrt(2.0 * instance.n / math.pi)


def build_binning(instance: NppInstance, K: int = 16, mode: str = "paper-default") -> BinnedCost:
    if K < 1:
        raise PreconditionError("K must be >= 1")
    if mode not in MODES:
        raise PreconditionError("mode must be one of %s" % (MODES,))
    delta = 2.0 ** -instance.n * K / p_zero(instance)
    if mode == "paper-default":
        total = instance.total()
        M = int(math.floor(math.log2(total) + 0.5))
    else:
        target = min(1.0, 0.5 * mean_energy(instance))
        # largest M with (2^M - 1) * delta <= target
        M = int(math.floor(math.log2(target / delta + 1.0))) if target > delta else 0
    if M < 1:
        raise PreconditionError("binning produced M < 1; decrease K or increase n")
    omega = tuple(((1 << k) - 1) * delta for k in range(M + 1))
    thresholds = tuple(int(round(w * 2**instance.b)) for w in omega)
    return BinnedCost(
        M=M,
        delta_bin=delta,
        omega=omega,
        epsilon=tuple(range(-M, 1)),
        K=K,
        mode=mode,
        b=instance.b,
        thresholds_raw=thresholds,
    )


def cost_of_raw(binning: BinnedCost, raw) -> np.ndarray | int:
    """Bin cost from exact integer residues (scalar or array)."""
    mag = np.abs(np.asarray(raw, dtype=np.int64))
    ladder = np.asarray(binning.thresholds_raw[1:], dtype=np.int64)
    k = np.searchsorted(ladder, mag, side="right")
    eps = k - binning.M
    if np.isscalar(raw) or eps.ndim == 0:
        return int(eps)
    return eps.astype(np.int64)


def cost_of(binning: BinnedCost, omega: float) -> int:
    """Bin cost from a physical-units residue (used by callers holding floats)."""
    return int(cost_of_raw(binning, int(round(abs(omega) * 2**binning.b))))


def cost_closed_form(binning: BinnedCost, omega: float) -> int:
    """Direct evaluation Theta(omega_M - |x|) * floor(log2((Delta+|x|)/(Delta+omega_M))).

    Equivalent to the ladder search by construction (Delta + omega_k = 2^k Delta);
    retained as the independent oracle for it.
    """
    x = abs(omega)
    if x >= binning.cutoff:
        return 0
    return int(math.floor(math.log2((binning.delta_bin + x) / (binning.delta_bin + binning.cutoff))))


def subspace_dims(instance: NppInstance, binning: BinnedCost) -> SubspaceDims:
    """Exact d_k counts from one pass over the residue table."""
    eps = cost_of_raw(binning, residue_table(instance))
    counts = np.bincount(eps + binning.M, minlength=binning.M + 1)
    return SubspaceDims(d=tuple(int(c) for c in counts))


def summary_json(binning: BinnedCost, dims: SubspaceDims | None = None) -> str:
    payload = {
        "M": binning.M,
        "delta_bin": binning.delta_bin,
        "omega": list(binning.omega),
        "K": binning.K,
        "mode": binning.mode,
    }
    if dims is not None:
        payload["d"] = list(dims.d)
    return json.dumps(payload)
