"""Numerical adiabatic spectra: lowest eigenpairs, gap scans, state counting.

Eigenpairs come from ARPACK (implicitly restarted Lanczos with full
reorthogonalization) on the matrix-free real-symmetric H(tau); every
returned pair is residual-checked.  tau = 1 is special-cased exactly: H is
then diagonal with integer entries.

Gap definition under degeneracy.  With d_0 > 1 the lowest d_0 levels all
converge to tau*eps_0 as tau -> 1, so lambda_1 - lambda_0 collapses to an
intra-manifold splitting that has nothing to do with the avoided crossing.
The scanned gap is therefore measured from lambda_0 to the first level
*above the ground manifold*: eigenvectors are classified as localized when
they carry the majority of their weight on the solution subspace L_0, and
the initial run of localized levels (the manifold, empty while the ground
state is still extended) is skipped.  At the crossing itself the two hybrid
states share their weight, the run length is 0 or 1, and the estimator
reduces to the two-level gap lambda_1 - lambda_0.  Points where all six
computed levels are localized lie deep in the post-crossing regime; there
the gap exceeds the manifold spread, the point cannot carry the minimum,
and it is excluded (kept=False) with the spread recorded as a lower bound.
The scan also records where the L_0 weight of phi_0 jumps through 1/2 --
the localization transition -- as a cross-check on the bracketing of tau*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh, ArpackNoConvergence

from functools import lru_cache

from scipy.sparse import csr_matrix

from .instance import NppInstance, PreconditionError
from .binning import BinnedCost, subspace_dims
from .hamiltonian import DiagonalCost, diagonal_cost, apply_h, dense_h

EIG_MAX_N = 22
ADJ_MAX_N = 18  # hypercube adjacency kept as CSR up to ~3M nonzeros
DENSE_MAX_N = 12
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@lru_cache(maxsize=4)
def _hypercube_adjacency(n: int) -> csr_matrix:
    """CSR of the n-cube edge matrix; (A x)_z = sum_j x_{z XOR e_j}.

    One SpMV replaces the n strided pair sweeps of apply_h inside the
    eigensolver's hot loop (identical result, same O(n 2^n) work).
    """
    dim = 1 << n
    rows = np.repeat(np.arange(dim, dtype=np.int64), n)
    cols = np.empty(dim * n, dtype=np.int64)
    idx = np.arange(dim, dtype=np.int64)
    for j in range(n):
        cols[j::n] = idx ^ (1 << j)
    data = np.ones(dim * n)
    return csr_matrix((data, (rows, cols)), shape=(dim, dim))


def _h_matvec(diag: DiagonalCost, tau: float):
    """Fast H(tau) action for the eigensolver; falls back to apply_h."""
    if diag.n > ADJ_MAX_N:
        return lambda x: apply_h(x, tau, diag)
    adj = _hypercube_adjacency(diag.n)
    d = tau * diag.eps
    alpha = 1.0 - tau
    return lambda x: d * x - alpha * (adj @ x)


class NumericalError(RuntimeError):
    """Iterative solver failed to converge; message carries achieved residuals."""


def default_tau_grid() -> np.ndarray:
    """51 uniform points on [0,1] plus 41 points on [0.4, 0.6]."""
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, 51), np.linspace(0.4, 0.6, 41)]))


def sweep_tau_grid() -> np.ndarray:
    """Sweep grid: fine window widened to [0.45, 0.85], where the
    small-cutoff crossings sit at desk-scale n (tau* ~ 0.55-0.75)."""
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, 51), np.linspace(0.45, 0.85, 41)]))


def lowest_eigenpairs(
    diag: DiagonalCost,
    tau: float,
    k: int = 2,
    tol: float = 1e-10,
    v0: np.ndarray | None = None,
    maxiter: int | None = None,
    residual_tol: float = 1e-8,
) -> tuple[np.ndarray, np.ndarray]:
    """k lowest eigenpairs of H(tau), ascending; residual-checked.

    Returns (values[k], vectors[dim, k]).
    """
    n = diag.n
    if n > EIG_MAX_N:
        raise PreconditionError("eigensolver limited to n <= %d" % EIG_MAX_N)
    if k > 6:
        raise PreconditionError("k limited to 6")
    dim = diag.dim
    if tau >= 1.0:
        order = np.argsort(diag.eps, kind="stable")[:k]
        vals = diag.eps[order].astype(np.float64)
        vecs = np.zeros((dim, k))
        vecs[order, np.arange(k)] = 1.0
        return vals, vecs
    op = LinearOperator((dim, dim), matvec=_h_matvec(diag, tau), dtype=np.float64)
    if v0 is None:
        # deterministic start independent of ARPACK internals
        v0 = np.full(dim, dim**-0.5)
    # clustered low levels near tau=1 need a roomy subspace
    ncv = min(dim, max(6 * k + 8, 32))
    try:
        vals, vecs = eigsh(
            op, k=k, which="SA", ncv=ncv, tol=tol, v0=v0,
            maxiter=maxiter if maxiter is not None else 40 * dim,
        )
    except ArpackNoConvergence as exc:
        raise NumericalError("ARPACK did not converge at tau=%.6f: %s" % (tau, exc)) from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    res = [
        float(np.linalg.norm(apply_h(vecs[:, i], tau, diag) - vals[i] * vecs[:, i]))
        for i in range(k)
    ]
    if max(res) > residual_tol:
        raise NumericalError(
            "eigenpair residual %.2e exceeds %.0e at tau=%.6f" % (max(res), residual_tol, tau)
        )
    return vals, vecs


def _l0_weight(vec: np.ndarray, l0_mask: np.ndarray) -> float:
    return float(np.sum(np.abs(vec[l0_mask]) ** 2))


@dataclass
class GapScan:
    taus: np.ndarray
    lam0: np.ndarray
    lam1: np.ndarray
    gap: np.ndarray             # manifold-skipping gap (see module docstring)
    support0: np.ndarray        # L_0 weight of phi_0 per grid point
    support1: np.ndarray
    kept: np.ndarray            # False deep in the post-crossing manifold regime
    tau_star: float = math.nan
    g_min: float = math.nan
    matrix_element: float = math.nan
    tau_localization: float = math.nan  # where support0 crosses 1/2
    degenerate: bool = False


def _hp_minus_v(vec: np.ndarray, diag: DiagonalCost) -> np.ndarray:
    # H_P - V = H(tau=1) - H(tau=0) action
    return apply_h(vec, 1.0, diag) - apply_h(vec, 0.0, diag)


_KMAX = 6


def _manifold_gap(diag: DiagonalCost, l0: np.ndarray, tau: float, v0=None, assume_deep=False):
    """(gap above the localized run, eigenvalues, weights, kept, vecs).

    Starts at k=2 and escalates to k=6 only when both low states are
    localized; run length 6 means the point is deep post-crossing.  With
    ``assume_deep`` (a smaller tau already was deep) a doubly-localized
    point is excluded without the k=6 solve: localization is monotone past
    the crossing.
    """
    if assume_deep:
        # quasi-degenerate pair: resolving its 1e-9-scale splitting tightly
        # is pointless, the point is excluded once both states are localized
        vals, vecs = lowest_eigenpairs(diag, tau, k=2, v0=v0, tol=1e-6, residual_tol=1e-4)
        w = [_l0_weight(vecs[:, i], l0) for i in range(2)]
        if w[0] >= 0.5 and w[1] >= 0.5:
            return float(vals[1] - vals[0]), vals, w, False, vecs
    vals, vecs = lowest_eigenpairs(diag, tau, k=2, v0=v0)
    w = [_l0_weight(vecs[:, i], l0) for i in range(2)]
    if not (w[0] >= 0.5 and w[1] >= 0.5):
        # run length is 0 or 1; either way the first level above it is lam1
        return float(vals[1] - vals[0]), vals, w, True, vecs
    if assume_deep:
        return float(vals[1] - vals[0]), vals, w, False, vecs
    # classification of the localized run tolerates loose eigenpairs; the
    # crossing gap itself always comes from the tight k=2 branch above
    vals, vecs = lowest_eigenpairs(diag, tau, k=_KMAX, v0=v0, tol=1e-6, residual_tol=1e-4)
    w = [_l0_weight(vecs[:, i], l0) for i in range(_KMAX)]
    run = 0
    while run < _KMAX and w[run] >= 0.5:
        run += 1
    if run == _KMAX:
        return float(vals[-1] - vals[0]), vals, w, False, vecs
    return float(vals[run] - vals[0]), vals, w, True, vecs


def gap_scan(
    instance: NppInstance,
    binning: BinnedCost,
    grid: np.ndarray | None = None,
    refine_tol: float = 1e-6,
) -> GapScan:
    """g(tau) over the grid plus golden-section refinement of the minimum.

    The refined point also evaluates |<phi_1 | H_P - V | phi_0>|, the driving
    matrix element of the adiabatic condition, between the two crossing
    states.
    """
    taus = np.asarray(grid, dtype=float) if grid is not None else default_tau_grid()
    if taus.ndim != 1 or taus.size < 3:
        raise PreconditionError("grid must hold at least 3 tau values")
    diag = diagonal_cost(instance, binning)
    l0 = diag.l0_mask()
    m = taus.size
    lam0 = np.empty(m)
    lam1 = np.empty(m)
    gap = np.empty(m)
    s0 = np.empty(m)
    s1 = np.empty(m)
    kept = np.empty(m, dtype=bool)
    v0 = None
    deep = False
    for i, tau in enumerate(taus):
        g, vals, w, keep, vecs = _manifold_gap(diag, l0, tau, v0=v0, assume_deep=deep)
        lam0[i], lam1[i] = vals[0], vals[1]
        gap[i] = g
        s0[i], s1[i] = w[0], w[1]
        kept[i] = keep
        deep = deep or not keep
        v0 = vecs[:, 0]
    scan = GapScan(taus=taus, lam0=lam0, lam1=lam1, gap=gap, support0=s0, support1=s1, kept=kept)

    # localization transition of phi_0
    above = np.flatnonzero(s0 >= 0.5)
    if above.size and above[0] > 0:
        j = above[0]
        scan.tau_localization = float(0.5 * (taus[j - 1] + taus[j]))

    if not np.any(kept):
        raise NumericalError("no grid point outside the ground manifold region")
    kept_idx = np.flatnonzero(kept)
    best = kept_idx[int(np.argmin(gap[kept_idx]))]
    lo = taus[best - 1] if best > 0 else taus[best]
    hi = taus[best + 1] if best < m - 1 else taus[best]

    def gap_at(tau: float) -> float:
        return _manifold_gap(diag, l0, tau)[0]

    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = gap_at(c), gap_at(d)
    while b - a > refine_tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = gap_at(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = gap_at(d)
    scan.tau_star = float(0.5 * (a + b))
    g, vals, w, _, vecs = _manifold_gap(diag, l0, scan.tau_star)
    scan.g_min = g
    if scan.g_min < 1e-13:
        scan.degenerate = True
    run = 0
    while run < len(w) - 1 and w[run] >= 0.5:
        run += 1
    scan.matrix_element = float(abs(vecs[:, run if run >= 1 else 1] @ _hp_minus_v(vecs[:, 0], diag)))
    return scan


def refine_parabolic(instance: NppInstance, binning: BinnedCost, scan: GapScan) -> float:
    """Independent tau* refinement: successive parabolic interpolation on the
    same manifold-skipping gap, started from the bracketing triple."""
    diag = diagonal_cost(instance, binning)
    l0 = diag.l0_mask()
    kept_idx = np.flatnonzero(scan.kept)
    best = kept_idx[int(np.argmin(scan.gap[kept_idx]))]
    best = min(max(best, 1), scan.taus.size - 2)
    xs = scan.taus[best - 1 : best + 2].astype(float)
    for _ in range(40):
        ys = [_manifold_gap(diag, l0, float(x))[0] for x in xs]
        denom = (xs[0] - xs[1]) * (ys[0] - ys[2]) - (xs[0] - xs[2]) * (ys[0] - ys[1])
        if abs(denom) < 1e-30:
            break
        num = (xs[0] - xs[1]) ** 2 * (ys[0] - ys[2]) - (xs[0] - xs[2]) ** 2 * (ys[0] - ys[1])
        x_new = xs[0] - 0.5 * num / denom
        if not (min(xs) - 1e-12 <= x_new <= max(xs) + 1e-12):
            break
        width = max(xs) - min(xs)
        order = np.argsort(ys)
        xs = np.sort(np.array([xs[order[0]], xs[order[1]], x_new]))
        if width < 1e-7:
            break
    return float(xs[1])


@dataclass(frozen=True)
class CumulativeDensity:
    lams: np.ndarray
    c0: float
    c1: float
    eta_m: float
    r_squared: float


def full_spectrum(instance: NppInstance, binning: BinnedCost, tau: float) -> CumulativeDensity:
    """All 2^n eigenvalues at tau (dense, n <= 12) with the square-root fit
    lambda_eta ~ c0 + c1 eta^(1/2) over eta = 1..2^n."""
    if instance.n > DENSE_MAX_N:
        raise PreconditionError("full_spectrum limited to n <= %d" % DENSE_MAX_N)
    diag = diagonal_cost(instance, binning)
    lams = np.linalg.eigvalsh(dense_h(diag, tau))
    eta = np.arange(1, lams.size + 1, dtype=float)
    x = np.sqrt(eta)
    design = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(design, lams, rcond=None)
    fit = design @ coef
    ss_res = float(np.sum((lams - fit) ** 2))
    ss_tot = float(np.sum((lams - lams.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot
    c0, c1 = float(coef[0]), float(coef[1])
    return CumulativeDensity(lams=lams, c0=c0, c1=c1, eta_m=c1**-2 if c1 > 0 else math.inf, r_squared=r2)


def ground_amplitude_profile(
    instance: NppInstance, binning: BinnedCost, tau: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(|Omega_z|, |phi_0(z)|, in_L0 flag) for amplitude-vs-residue plots."""
    from .instance import residue_table

    diag = diagonal_cost(instance, binning)
    _, vecs = lowest_eigenpairs(diag, tau, k=2)
    omegas = np.abs(residue_table(instance)) * instance.scale
    return omegas, np.abs(vecs[:, 0]), diag.l0_mask()


@dataclass
class GminSweep:
    ns: list[int]
    gmins: dict[int, list[float]]           # per-n successful g_min values
    tau_stars: dict[int, list[float]]
    theory_tau_stars: dict[int, list[float]]
    theory_gmins: dict[int, list[float]]
    failures: list[str] = field(default_factory=list)

    def medians(self) -> np.ndarray:
        return np.array([float(np.median(self.gmins[n])) for n in self.ns])

    def slope(self) -> tuple[float, float]:
        """Least-squares slope/intercept of log2(median g_min) vs n."""
        y = np.log2(self.medians())
        coef = np.polyfit(np.asarray(self.ns, dtype=float), y, 1)
        return float(coef[0]), float(coef[1])


def derive_instance_seed(master_seed: int, n: int, index: int) -> int:
    """Deterministic per-instance seed; worker count never changes results."""
    ss = np.random.SeedSequence([master_seed & 0xFFFFFFFFFFFFFFFF, n, index])
    return int(ss.generate_state(1, np.uint64)[0])


def _gmin_one(args) -> tuple[int, int, dict | str]:
    from .binning import build_binning
    from .gap_theory import branch_params, crossing_point, gmin_estimate

    n, idx, b, k_bins, master_seed, grid_pts, refine_tol = args
    seed = derive_instance_seed(master_seed, n, idx)
    from .instance import generate

    try:
        instance = generate(n, b, seed, with_a0=True)
        binning = build_binning(instance, K=k_bins, mode="small-cutoff")
        dims = subspace_dims(instance, binning)
        if dims.d0 < 1:
            return n, idx, "d0=0"
        grid = np.asarray(grid_pts, dtype=float)
        scan = gap_scan(instance, binning, grid=grid, refine_tol=refine_tol)
        if scan.degenerate:
            return n, idx, "degenerate"
        params = branch_params(instance, binning, dims)
        cp = crossing_point(params)
        return n, idx, {
            "g_min": scan.g_min,
            "tau_star": scan.tau_star,
            "tau_theory": cp.tau_star,
            "g_theory": gmin_estimate(params, cp.tau_star),
        }
    except (PreconditionError, NumericalError) as exc:
        return n, idx, "%s: %s" % (type(exc).__name__, exc)


def gmin_scaling_sweep(
    n_range: list[int],
    b: int,
    instances_per_n: int,
    K: int = 16,
    master_seed: int = 2024,
    workers: int = 1,
    grid: np.ndarray | None = None,
    refine_tol: float = 1e-4,
) -> GminSweep:
    """Median g_min per n and the slope of log2(median) vs n.

    Per-instance failures (empty solution bin, non-convergence) are recorded
    and excluded; results are reduced in fixed (n, index) order so the worker
    count never changes the output.
    """
    taus = grid if grid is not None else sweep_tau_grid()
    jobs = [
        (n, i, b, K, master_seed, tuple(taus), refine_tol)
        for n in n_range
        for i in range(instances_per_n)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_gmin_one, jobs, chunksize=1))
    else:
        raw = [_gmin_one(j) for j in jobs]
    raw.sort(key=lambda t: (t[0], t[1]))
    sweep = GminSweep(ns=list(n_range), gmins={n: [] for n in n_range},
                      tau_stars={n: [] for n in n_range},
                      theory_tau_stars={n: [] for n in n_range},
                      theory_gmins={n: [] for n in n_range})
    for n, idx, res in raw:
        if isinstance(res, str):
            sweep.failures.append("n=%d idx=%d: %s" % (n, idx, res))
        else:
            sweep.gmins[n].append(res["g_min"])
            sweep.tau_stars[n].append(res["tau_star"])
            sweep.theory_tau_stars[n].append(res["tau_theory"])
            sweep.theory_gmins[n].append(res["g_theory"])
    return sweep
