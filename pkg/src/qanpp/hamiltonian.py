"""Matrix-free kernels over the 2^n computational basis.

A state is a flat ndarray of 2^n amplitudes indexed by the bit-string z
(complex128 for dynamics; the eigensolver feeds real vectors through the
same kernels, since H is real symmetric).  All operators are O(n 2^n):

    H(tau)      = (1-tau) V + tau H_P,   V = -sum_j sigma_x^j
    (V psi)_z   = -sum_j psi_{z XOR e_j}
    (H_P psi)_z = eps(z) psi_z

The driver exponential factorizes exactly over qubits (the sigma_x terms
commute): e^{-i theta V} = prod_j e^{+i theta sigma_x^j}, each factor a
2x2 rotation on (z, z XOR e_j) amplitude pairs.  The problem exponential
is a phase gather: eps(z) takes only M+1 distinct small-integer values, so
the M+1 phases are precomputed per step instead of exponentiating 2^n
entries.  eps is kept as int8 (diagonal table stays in cache at n = 17)
plus a uint8 bin index for the phase lookup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import NppInstance, PreconditionError, residue_table, hamming
from .binning import BinnedCost, cost_of_raw


@dataclass(frozen=True)
class DiagonalCost:
    """Binned cost of every basis state: eps(z) = c(Omega_z) in {-M, ..., 0}."""

    n: int
    M: int
    eps: np.ndarray        # int8, shape (2^n,)
    bin_index: np.ndarray  # uint8, eps + M

    @property
    def dim(self) -> int:
        return 1 << self.n

    def l0_mask(self) -> np.ndarray:
        return self.bin_index == 0


def diagonal_cost(instance: NppInstance, binning: BinnedCost) -> DiagonalCost:
    eps = cost_of_raw(binning, residue_table(instance))
    return DiagonalCost(
        n=instance.n,
        M=binning.M,
        eps=eps.astype(np.int8),
        bin_index=(eps + binning.M).astype(np.uint8),
    )


def uniform_state(n: int, dtype=np.complex128) -> np.ndarray:
    psi = np.full(1 << n, 2.0 ** (-n / 2.0), dtype=dtype)
    return psi


def norm(state: np.ndarray) -> float:
    return float(np.linalg.norm(state))


def _pair_view(state: np.ndarray, n: int, j: int) -> np.ndarray:
    """View with axis 1 enumerating bit j: shape (2^(n-1-j), 2, 2^j)."""
    return state.reshape(1 << (n - 1 - j), 2, 1 << j)


def apply_h(state: np.ndarray, tau: float, diag: DiagonalCost) -> np.ndarray:
    """out_z = tau * eps(z) * in_z - (1-tau) * sum_j in_{z XOR e_j}."""
    n = diag.n
    if state.shape != (diag.dim,):
        raise PreconditionError("state length must be 2^%d" % n)
    out = (tau * diag.eps) * state
    alpha = 1.0 - tau
    for j in range(n):
        v = _pair_view(state, n, j)
        o = _pair_view(out, n, j)
        o[:, 0, :] -= alpha * v[:, 1, :]
        o[:, 1, :] -= alpha * v[:, 0, :]
    return out


def exp_driver(state: np.ndarray, theta: float) -> np.ndarray:
    """e^{-i theta V} psi, one exact 2x2 rotation per qubit.

    Per pair: (u, v) -> (u cos + i v sin, v cos + i u sin); each factor is
    unitary, so norm drift is pure rounding.
    """
    out = state.astype(np.complex128, copy=True)
    _exp_driver_inplace(out, theta)
    return out


def _exp_driver_inplace(state: np.ndarray, theta: float) -> None:
    n = int(state.shape[0]).bit_length() - 1
    c = math.cos(theta)
    s = 1j * math.sin(theta)
    for j in range(n):
        v = _pair_view(state, n, j)
        u0 = v[:, 0, :].copy()
        v[:, 0, :] *= c
        v[:, 0, :] += s * v[:, 1, :]
        v[:, 1, :] *= c
        v[:, 1, :] += s * u0


def exp_problem(state: np.ndarray, theta: float, diag: DiagonalCost) -> np.ndarray:
    """e^{-i theta H_P} psi: phase-only, |out_z| = |in_z|."""
    out = state.astype(np.complex128, copy=True)
    _exp_problem_inplace(out, theta, diag)
    return out


def _exp_problem_inplace(state: np.ndarray, theta: float, diag: DiagonalCost) -> None:
    eps_values = np.arange(-diag.M, 1, dtype=np.float64)
    lut = np.exp(-1j * theta * eps_values)
    state *= lut[diag.bin_index]


def dense_h(diag: DiagonalCost, tau: float) -> np.ndarray:
    """Dense H(tau) for oracle tests (n <= 12)."""
    if diag.n > 12:
        raise PreconditionError("dense_h limited to n <= 12")
    dim = diag.dim
    h = np.zeros((dim, dim))
    h[np.arange(dim), np.arange(dim)] = tau * diag.eps
    idx = np.arange(dim)
    for j in range(diag.n):
        h[idx, idx ^ (1 << j)] = -(1.0 - tau)
    return h


def xbasis_projector_check(n: int, m: int, tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Build I^m densely in the z basis and extract I^m_r.

    I^m projects onto Hamming weight m in the x basis; its z-basis matrix
    elements are 2^-n sum_{|x|=m} (-1)^{popcount(z AND x)} and must depend
    on (z, z') only through their Hamming distance.  A violation beyond
    `tol` means a transform bug and raises.  Returns (matrix, I^m_r vector).
    """
    if n > 6:
        raise PreconditionError("dense projector check limited to n <= 6")
    dim = 1 << n
    mat = np.zeros((dim, dim))
    for x in range(dim):
        if bin(x).count("1") != m:
            continue
        signs = np.array([(-1) ** bin(z & x).count("1") for z in range(dim)], dtype=np.float64)
        mat += np.outer(signs, signs)
    mat *= 2.0**-n
    imr = np.zeros(n + 1)
    seen = np.full(n + 1, False)
    for z in range(dim):
        for zp in range(dim):
            r = hamming(z, zp)
            val = mat[z, zp]
            if not seen[r]:
                imr[r] = val
                seen[r] = True
            elif abs(val - imr[r]) > tol:
                raise AssertionError(
                    "I^%d matrix element varies at fixed Hamming distance %d" % (m, r)
                )
    return mat, imr
