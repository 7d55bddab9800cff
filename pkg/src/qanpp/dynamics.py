"""Time-dependent Schrodinger integration of the adiabatic algorithm.

The state starts in the uniform superposition (ground state of the driver)
and evolves under H(t) = (1 - t/T) V + (t/T) H_P for one run time T.  The
stepper is symmetric (Strang) splitting with the schedule frozen at each
step midpoint:

    psi <- D((1-tau_mid) dt/2) P(tau_mid dt) D((1-tau_mid) dt/2),

with D the exact factorized driver exponential and P the diagonal phase.
Every factor is unitary, so norm drift measures rounding only, and the
stepper is second order in dt.  Adjacent driver half-steps commute (same
generator) and are merged into one rotation per step on the fast path.

The figure of merit is the population of the solution bin,
p0(T) = sum_{z in L0} |psi_z(T)|^2, and the complexity metric
C(T) = (1+T) d0 / p0(T): the expected total time to hit the solution bin
with repeated length-T runs.  C(T) falls steeply from its ~2^n small-T
plateau, bottoms out at T_min, then grows once longer runs stop paying for
themselves; C_min = C(T_min) is the per-instance cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instance import NppInstance, PreconditionError
from .binning import BinnedCost, build_binning, subspace_dims
from .hamiltonian import (
    DiagonalCost,
    diagonal_cost,
    uniform_state,
    _exp_driver_inplace,
    _exp_problem_inplace,
)

NORM_DRIFT_LIMIT = 1e-6
P0_FLOOR = 1e-14
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class StepSizeError(RuntimeError):
    pass


try:  # compiled stepping kernel; the numpy path below is the reference
    from numba import njit

    @njit(cache=True)
    def _segment_jit(psi, bin_index, M, T, dt, k0, k1, pending):
        dim = psi.shape[0]
        n = 0
        d = dim
        while d > 1:
            d >>= 1
            n += 1
        lut = np.empty(M + 1, dtype=np.complex128)
        for k in range(k0, k1):
            tau_mid = (k + 0.5) * dt / T
            half = (1.0 - tau_mid) * dt / 2.0
            theta = pending + half
            c = math.cos(theta)
            si = 1j * math.sin(theta)
            for j in range(n):
                stride = 1 << j
                step2 = stride << 1
                for base in range(0, dim, step2):
                    for i in range(base, base + stride):
                        u = psi[i]
                        v = psi[i + stride]
                        psi[i] = u * c + v * si
                        psi[i + stride] = v * c + u * si
            phase = tau_mid * dt
            for m in range(M + 1):
                ang = -phase * (m - M)
                lut[m] = complex(math.cos(ang), math.sin(ang))
            for i in range(dim):
                psi[i] = psi[i] * lut[bin_index[i]]
            pending = half
        return pending

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def default_dt(n: int, M: int) -> float:
    """dt = min(0.1, 0.5/(n+M)): resolves the fastest phase in H."""
    return min(0.1, 0.5 / (n + M))


def _run_segment(psi: np.ndarray, diag: DiagonalCost, T: float, dt: float,
                 k0: int, k1: int, pending: float) -> float:
    """Steps [k0, k1) of the merged-driver Strang loop; returns the driver
    half-angle still pending after step k1-1."""
    if _HAVE_NUMBA:
        return float(_segment_jit(psi, diag.bin_index, diag.M, T, dt, k0, k1, pending))
    for k in range(k0, k1):
        tau_mid = (k + 0.5) * dt / T
        half = (1.0 - tau_mid) * dt / 2.0
        _exp_driver_inplace(psi, pending + half)
        _exp_problem_inplace(psi, tau_mid * dt, diag)
        pending = half
    return pending


@dataclass(frozen=True)
class EvolutionResult:
    T: float
    steps: int
    dt: float
    p0: float
    norm_drift: float
    trace: tuple[tuple[float, float], ...] = ()  # (t, p0(t)) checkpoints


def evolve(
    instance: NppInstance,
    binning: BinnedCost,
    T: float,
    dt: float | None = None,
    trace_points: int = 0,
    diag: DiagonalCost | None = None,
) -> EvolutionResult:
    """Integrate one run of length T and return p0(T).

    `trace_points` > 0 additionally records p0 at that many evenly spaced
    checkpoints.  Raises StepSizeError when the norm drifts beyond 1e-6
    (cannot happen for sane dt; the factors are unitary).
    """
    if T <= 0:
        raise PreconditionError("T must be positive")
    d = diag if diag is not None else diagonal_cost(instance, binning)
    dt_step = dt if dt is not None else default_dt(instance.n, binning.M)
    steps = max(1, int(math.ceil(T / dt_step - 1e-12)))
    dt_step = T / steps
    psi = uniform_state(instance.n)
    l0 = d.l0_mask()

    marks = {int(round(s)) for s in np.linspace(1, steps, trace_points)} if trace_points > 0 else set()
    trace: list[tuple[float, float]] = []

    # merged-driver stepping: D(a_k) P(b_k) pairs, a_k the sum of the
    # trailing half-step of step k-1 and the leading half-step of step k
    pending = 0.0
    k0 = 0
    for k1 in sorted(marks | {steps}):
        pending = _run_segment(psi, d, T, dt_step, k0, k1, pending)
        k0 = k1
        _exp_driver_inplace(psi, pending)
        pending = 0.0
        if k1 in marks:
            trace.append((k1 * dt_step, float(np.sum(np.abs(psi[l0]) ** 2))))

    nrm = float(np.linalg.norm(psi))
    drift = abs(nrm - 1.0)
    if drift > NORM_DRIFT_LIMIT:
        raise StepSizeError("norm drift %.2e exceeds %.0e (dt=%g)" % (drift, NORM_DRIFT_LIMIT, dt_step))
    p0 = float(np.sum(np.abs(psi[l0]) ** 2))
    return EvolutionResult(T=T, steps=steps, dt=dt_step, p0=p0, norm_drift=drift, trace=tuple(trace))


def default_t_grid(n: int, points: int = 40, t_max_factor: float = 4.0) -> np.ndarray:
    """Log-spaced run times from 0.5 up to t_max_factor * 2^(n/2)."""
    return np.geomspace(0.5, t_max_factor * 2.0 ** (n / 2.0), points)


@dataclass
class ComplexityCurve:
    ts: np.ndarray
    p0s: np.ndarray
    cs: np.ndarray
    capped: np.ndarray          # True where p0 underflowed and C is a floor value
    evaluated: np.ndarray       # False for grid points skipped by early stopping
    d0: int
    T_min: float = math.nan
    C_min: float = math.nan
    p0_at_min: float = math.nan


def complexity_curve(
    instance: NppInstance,
    binning: BinnedCost,
    t_grid: np.ndarray | None = None,
    dt: float | None = None,
    refine: bool = True,
    early_stop: bool = True,
) -> ComplexityCurve:
    """C(T) over a log grid, T_min by grid minimum plus golden refinement.

    With `early_stop`, grid evaluation halts after three consecutive points
    exceed 1.08x the running minimum at T > 1.5x its location: past the
    minimum C grows ~linearly in T, so the skipped tail cannot contain it,
    and the threshold bounds any C_min understatement by a few percent.
    """
    dims = subspace_dims(instance, binning)
    if dims.d0 < 1:
        raise PreconditionError("complexity metric needs d0 >= 1")
    diag = diagonal_cost(instance, binning)
    ts = np.asarray(t_grid, dtype=float) if t_grid is not None else default_t_grid(instance.n)
    m = ts.size
    p0s = np.full(m, math.nan)
    cs = np.full(m, math.nan)
    capped = np.zeros(m, dtype=bool)
    evaluated = np.zeros(m, dtype=bool)

    def c_of(T: float) -> tuple[float, float, bool]:
        res = evolve(instance, binning, T, dt=dt, diag=diag)
        p0 = res.p0
        if p0 < P0_FLOOR:
            return (1.0 + T) * dims.d0 / P0_FLOOR, p0, True
        return (1.0 + T) * dims.d0 / p0, p0, False

    best_c, best_t = math.inf, ts[0]
    over = 0
    for i, T in enumerate(ts):
        cs[i], p0s[i], capped[i] = c_of(float(T))
        evaluated[i] = True
        if cs[i] < best_c:
            best_c, best_t = cs[i], float(T)
            over = 0
        else:
            over = over + 1 if (cs[i] > 1.08 * best_c and T > 1.5 * best_t) else 0
            if early_stop and over >= 3:
                break

    curve = ComplexityCurve(ts=ts, p0s=p0s, cs=cs, capped=capped, evaluated=evaluated, d0=dims.d0)
    done = np.flatnonzero(evaluated)
    best = done[int(np.argmin(cs[done]))]
    lo = ts[best - 1] if best > 0 else ts[best] * 0.5
    hi = ts[best + 1] if best + 1 < m and evaluated[best + 1] else ts[best] * 1.5

    if refine:
        # golden section on log T; C is smooth near its single coarse minimum,
        # and C_min is insensitive to T_min at this resolution (flat bottom)
        a, b = math.log(lo), math.log(hi)
        c = b - GOLDEN * (b - a)
        d_ = a + GOLDEN * (b - a)
        fc, _, _ = c_of(math.exp(c))
        fd, _, _ = c_of(math.exp(d_))
        for _ in range(7):
            if fc < fd:
                b, d_, fd = d_, c, fc
                c = b - GOLDEN * (b - a)
                fc, _, _ = c_of(math.exp(c))
            else:
                a, c, fc = c, d_, fd
                d_ = a + GOLDEN * (b - a)
                fd, _, _ = c_of(math.exp(d_))
        t_min = math.exp(0.5 * (a + b))
        c_min, p0_min, _ = c_of(t_min)
        if c_min > cs[best]:  # refinement must never lose to the grid
            t_min, c_min, p0_min = float(ts[best]), float(cs[best]), float(p0s[best])
    else:
        t_min, c_min, p0_min = float(ts[best]), float(cs[best]), float(p0s[best])
    curve.T_min, curve.C_min, curve.p0_at_min = t_min, c_min, p0_min
    return curve


@dataclass
class ScalingFit:
    ns: list[int]
    cmins: dict[int, list[float]]
    slope: float = math.nan           # of ln(median C_min) vs n
    intercept: float = math.nan
    slope_all_points: float = math.nan
    failures: list[str] = field(default_factory=list)

    def medians(self) -> np.ndarray:
        return np.array([float(np.median(self.cmins[n])) for n in self.ns])


def _fit_scaling(fit: ScalingFit) -> None:
    ns = np.asarray(fit.ns, dtype=float)
    med = np.log(fit.medians())
    coef = np.polyfit(ns, med, 1)
    fit.slope, fit.intercept = float(coef[0]), float(coef[1])
    xs = np.concatenate([[n] * len(fit.cmins[n]) for n in fit.ns])
    ys = np.log(np.concatenate([fit.cmins[n] for n in fit.ns]))
    fit.slope_all_points = float(np.polyfit(xs, ys, 1)[0])


def _cmin_one(args) -> tuple[int, int, float | str]:
    from .spectrum import derive_instance_seed
    from .instance import generate

    n, idx, b, k_bins, master_seed, grid_points = args
    seed = derive_instance_seed(master_seed, n, idx)
    try:
        instance = generate(n, b, seed, with_a0=True)
        binning = build_binning(instance, K=k_bins, mode="paper-default")
        dims = subspace_dims(instance, binning)
        if dims.d0 < 1:
            return n, idx, "d0=0"
        curve = complexity_curve(
            instance, binning, t_grid=default_t_grid(n, points=grid_points)
        )
        return n, idx, float(curve.C_min)
    except (PreconditionError, StepSizeError) as exc:
        return n, idx, "%s: %s" % (type(exc).__name__, exc)


def cmin_scaling_sweep(
    n_range: list[int],
    b: int,
    trials_per_n: int,
    K: int = 16,
    master_seed: int = 2024,
    workers: int = 1,
    grid_points: int = 40,
) -> ScalingFit:
    """Median C_min per n and the linear fit of ln C_min vs n.

    Instances use paper-default binning with the symmetry-breaking a_0, as
    in the reference complexity experiments.  Failures are excluded from
    medians and logged; reduction order is fixed by (n, index).
    """
    if trials_per_n < 10:
        raise PreconditionError("trials_per_n must be >= 10")
    jobs = [
        (n, i, b, K, master_seed, grid_points)
        for n in n_range
        for i in range(trials_per_n)
    ]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            raw = list(pool.map(_cmin_one, jobs, chunksize=1))
    else:
        raw = [_cmin_one(j) for j in jobs]
    raw.sort(key=lambda t: (t[0], t[1]))
    fit = ScalingFit(ns=list(n_range), cmins={n: [] for n in n_range})
    for n, idx, res in raw:
        if isinstance(res, str):
            fit.failures.append("n=%d idx=%d: %s" % (n, idx, res))
        else:
            fit.cmins[n].append(res)
    if any(len(fit.cmins[n]) < 3 for n in fit.ns):
        raise PreconditionError("too many failures: fewer than 3 C_min values at some n")
    _fit_scaling(fit)
    return fit
