"""Sub-harmonic resonances: approximate common divisors of the a_j.

If some q > 2^-b nearly divides every a_j, the Fourier transform of the
residue distribution picks up resonances at multiples of pi/q.  Their
strength at the m-th resonance goes as prod_j |cos(pi m a_j/q)|, i.e. it is
controlled by the distance of each a_j/q to its *nearest* integer.  With
d_j the signed distance (d_j in [-1/2,1/2)) and c_j = a_j / sqrt(pi n
sigma^2(0)), the dephasing exponent is

    gamma(q) = (pi^2/2) sum_j ( d_j^2 - c_j d_j ),

and the parity p = sum_j round(a_j/q) mod 2 enters the resonance sum as
(-1)^{mp}.  (The quadratic term is often written with the one-sided
fractional part {a_j/q}; that form is its small-{x} expansion and misses
divisors approached from below, which empirically wipes out the
const*2^-n scaling of q_max beyond n ~ 11 at b = 30.  The symmetric
distance is used throughout.)  gamma = 0 exactly on planted-divisor
instances; gamma ~ O(n) for random q.

q_max is the largest q on the 2^-b grid with gamma(q) <= gamma_c.  gamma
oscillates violently in q, so this is a threshold scan, not root-finding.
A dense scan of 2^b grid points is avoided by a provable pruning:
sum_j c_j^2 = 1/pi exactly, so for any single index J

    gamma(q) >= (pi^2/2) [ (d_J - c_J/2)^2 - 1/(4 pi) ].

Taking J = argmax a_j, every q with gamma(q) <= gamma_c must put a_J/q
within R = sqrt(2 gamma_c/pi^2 + 1/(4 pi)) of an integer (shifted by
c_J/2); only those harmonic windows around a_J/k are scanned, in exact
integer arithmetic (a_J/q = w_J/g for grid q = g 2^-b).  The result
matches the dense descending scan, skipping only points that provably
fail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instance import NppInstance, PreconditionError, generate

DEFAULT_GAMMA_C = 0.5


def _coeffs(instance: NppInstance) -> np.ndarray:
    return instance.values() / math.sqrt(math.pi * instance.n * instance.sigma0() ** 2)


def gamma_of_q(instance: NppInstance, q: float) -> tuple[float, int]:
    """(gamma(q), parity p); q must exceed the grid floor 2^-b."""
    if q <= 2.0 ** -instance.b:
        raise PreconditionError("q must exceed 2^-b")
    ratio = instance.values() / q
    nearest = np.round(ratio)
    d = np.abs(ratio - nearest)
    c = _coeffs(instance)
    gamma = 0.5 * math.pi**2 * float(np.sum(d * d - c * d))
    parity = int(np.sum(nearest)) & 1
    return gamma, parity


def gamma_profile(instance: NppInstance, q_grid: np.ndarray) -> np.ndarray:
    """Vectorized gamma over a float q grid."""
    a = instance.values()[:, None]
    c = _coeffs(instance)[:, None]
    ratio = a / np.asarray(q_grid, dtype=float)[None, :]
    d = np.abs(ratio - np.round(ratio))
    return 0.5 * math.pi**2 * np.sum(d * d - c * d, axis=0)


def _gamma_on_grid_ints(instance: NppInstance, g: np.ndarray) -> np.ndarray:
    """gamma at q = g * 2^-b via exact integer mods (w_j mod g is exact)."""
    w = np.asarray(instance.weights, dtype=np.int64)[:, None]
    gg = g[None, :]
    frac = np.mod(w, gg) / gg
    d = np.where(frac > 0.5, 1.0 - frac, frac)
    c = _coeffs(instance)[:, None]
    return 0.5 * math.pi**2 * np.sum(d * d - c * d, axis=0)


@dataclass(frozen=True)
class QmaxResult:
    q_max: float
    gamma_at_qmax: float
    parity: int
    resolution: float
    boundary: bool                 # True when no q passed and the floor is reported
    planted_recovered: bool | None  # vs the supplied planted q, if any
    windows_scanned: int
    points_evaluated: int


_WINDOW_POINT_CAP = 4096


def q_max(
    instance: NppInstance,
    gamma_c: float = DEFAULT_GAMMA_C,
    planted_q: float | None = None,
    max_windows: int | None = None,
) -> QmaxResult:
    """Largest grid q with gamma(q) <= gamma_c (see module docstring).

    Descends the harmonic windows of the largest number until a window
    yields a passing q.  Thin windows (the small-q regime where q_max
    typically lives) are scanned at full 2^-b resolution; wide windows are
    pre-scanned at step width/4096 -- still ~1e3 times finer than any
    comfortably-passing region, whose width scales as q^2 like the window
    itself -- and a hit is re-scanned at full resolution one step around.
    Only marginal passes (within ~0.1% of threshold) can be missed.
    """
    if gamma_c <= 0:
        raise PreconditionError("gamma_c must be positive")
    n = instance.n
    w_big = max(instance.weights)
    sigma0 = instance.sigma0()
    c_big = (w_big * instance.scale) / math.sqrt(math.pi * n * sigma0**2)
    radius = math.sqrt(2.0 * gamma_c / math.pi**2 + 1.0 / (4.0 * math.pi))
    # band around each harmonic: |d_J| <= c_J/2 + R, symmetric in the distance
    hi_ext = min(c_big / 2.0 + radius, 0.5)
    lo_ext = min(c_big / 2.0 + radius, 0.5 - 1e-12)
    scale = instance.scale

    windows = 0
    points = 0

    def result_from(g_best: int) -> QmaxResult:
        q_best = g_best * scale
        gamma_best, parity = gamma_of_q(instance, q_best)
        recovered = None if planted_q is None else bool(q_best >= planted_q - 0.5 * scale)
        return QmaxResult(
            q_max=q_best, gamma_at_qmax=gamma_best, parity=parity,
            resolution=scale, boundary=False, planted_recovered=recovered,
            windows_scanned=windows, points_evaluated=points,
        )

    # windows stop paying off once their width drops to ~32 grid points;
    # below that the union of windows is nearly dense and a filtered dense
    # descent (exact) takes over
    k_dense = max(16, int(math.sqrt((hi_ext + lo_ext) * w_big / 32.0)))
    k_cap = min(max_windows, k_dense) if max_windows is not None else k_dense
    g_floor = 2
    for k in range(1, k_cap + 1):
        g_hi = min(w_big, int(math.floor(w_big / (k - lo_ext))))
        g_lo = max(g_floor, int(math.ceil(w_big / (k + hi_ext))))
        if g_hi < g_floor:
            break
        if g_lo > g_hi:
            continue
        windows += 1
        width = g_hi - g_lo + 1
        step = max(1, width // _WINDOW_POINT_CAP)
        g = np.arange(g_hi, g_lo - 1, -step, dtype=np.int64)
        points += g.size
        ok = np.flatnonzero(_gamma_on_grid_ints(instance, g) <= gamma_c)
        if ok.size == 0:
            continue
        g_hit = int(g[ok[0]])  # descending grid: first hit is the largest
        if step == 1:
            return result_from(g_hit)
        fine = np.arange(min(g_hi, g_hit + step), max(g_lo, g_hit - step) - 1, -1, dtype=np.int64)
        points += fine.size
        ok = np.flatnonzero(_gamma_on_grid_ints(instance, fine) <= gamma_c)
        return result_from(int(fine[ok[0]]))

    if max_windows is None or k_cap >= k_dense:
        g_top = min(w_big, int(math.floor(w_big / (k_cap + 1 - lo_ext))))
        block = 1 << 20
        for hi in range(g_top, 1, -block):
            lo = max(g_floor, hi - block + 1)
            g = np.arange(hi, lo - 1, -1, dtype=np.int64)
            fr = np.mod(w_big, g) / g
            d_abs = np.where(fr > 0.5, 1.0 - fr, fr)
            g = g[d_abs <= c_big / 2.0 + radius]  # necessary condition on |d|
            if g.size == 0:
                continue
            windows += 1
            points += g.size
            ok = np.flatnonzero(_gamma_on_grid_ints(instance, g) <= gamma_c)
            if ok.size:
                return result_from(int(g[ok[0]]))

    recovered = None if planted_q is None else False
    return QmaxResult(
        q_max=scale, gamma_at_qmax=math.inf, parity=0, resolution=scale,
        boundary=True, planted_recovered=recovered,
        windows_scanned=windows, points_evaluated=points,
    )


def plant_divisor_instance(
    n: int, b: int, divisor_weight: int, seed: int, max_multiplier: int | None = None
) -> NppInstance:
    """Instance whose weights are exact multiples of divisor_weight."""
    if divisor_weight < 1:
        raise PreconditionError("divisor weight must be >= 1")
    top = (1 << b) // divisor_weight
    if top < 1:
        raise PreconditionError("divisor exceeds 2^b")
    cap = min(top, max_multiplier) if max_multiplier is not None else top
    words = np.random.Philox(seed).random_raw(n)
    ks = [int(wd % np.uint64(cap)) + 1 for wd in words]
    return NppInstance(n=n, b=b, seed=seed, weights=tuple(divisor_weight * k for k in ks))


@dataclass(frozen=True)
class QmaxEnsembleRow:
    n: int
    mean_log2_qmax: float       # over instances with a root above the floor
    var_log2_qmax: float
    boundary_count: int         # instances clamped at the 2^-b floor
    mean_log2_clamped: float    # including the clamped values

    @property
    def total(self) -> int:
        return self.boundary_count + self._found

    _found: int = 0


def qmax_ensemble(
    n_range: list[int],
    b: int,
    gamma_c: float = DEFAULT_GAMMA_C,
    instances_per_n: int = 25,
    master_seed: int = 77,
) -> list[QmaxEnsembleRow]:
    """Per-n mean and variance of log2 q_max over fresh instances (n < b).

    The mean is taken over instances whose root lies above the grid floor;
    floor clamps (an artifact of finite b, frequent once the typical q_max
    approaches 2^-b) are counted separately and a clamped-inclusive mean is
    also reported.  The variance is over all instances, clamps included:
    its blow-up near the floor is itself one of the observables.
    """
    from .spectrum import derive_instance_seed

    rows = []
    for n in n_range:
        if n >= b:
            raise PreconditionError("ensemble needs n < b")
        found = []
        clamped = []
        for idx in range(instances_per_n):
            inst = generate(n, b, derive_instance_seed(master_seed, n, idx))
            res = q_max(inst, gamma_c=gamma_c)
            (clamped if res.boundary else found).append(math.log2(res.q_max))
        alllogs = np.asarray(found + clamped)
        rows.append(
            QmaxEnsembleRow(
                n=n,
                mean_log2_qmax=float(np.mean(found)) if found else -float(b),
                var_log2_qmax=float(alllogs.var(ddof=1)) if alllogs.size > 1 else 0.0,
                boundary_count=len(clamped),
                mean_log2_clamped=float(alllogs.mean()),
                _found=len(found),
            )
        )
    return rows


def zeta(x: np.ndarray | float) -> np.ndarray | float:
    """Window function sin(x)/x with the removable singularity filled."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.sin(x[nz]) / x[nz]
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class ResonanceCorrection:
    relative: float       # correction / Gaussian P(0)
    absolute: float
    gamma: float
    parity: int
    m_max: int


def p0_correction(
    instance: NppInstance, q: float, m_max: int = 200, window: float = 0.3
) -> ResonanceCorrection:
    """Resonance contribution to P(0) from divisor q, relative to the
    Gaussian term: e^-gamma(q) sum_m zeta(m pi eta / (2q)) (-1)^(m p),
    eta being the coarse-graining window.

    The relative form carries no 2^n: that factor belongs to the
    unnormalized level count 2^n P(0), and with it neither limiting
    behavior (negligible at large gamma, order one on in-window planted
    divisors) comes out right (see decisions ledger).
    """
    gamma, parity = gamma_of_q(instance, q)
    m = np.arange(1, m_max + 1, dtype=float)
    signs = np.where((m * parity) % 2 == 0, 1.0, -1.0)
    total = float(np.sum(zeta(m * math.pi * window / (2.0 * q)) * signs))
    rel = math.exp(-gamma) * total
    p_gauss = 1.0 / math.sqrt(2.0 * math.pi * instance.n * instance.sigma0() ** 2)
    return ResonanceCorrection(
        relative=rel, absolute=rel * p_gauss, gamma=gamma, parity=parity, m_max=m_max
    )
