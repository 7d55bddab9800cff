"""Distributions of signed partition residues, empirical and theoretical.

Two families of objects live here.  The coarse-grained one-point density

    P(Omega) ~ (2 pi n sigma^2(0))^(-1/2) exp(-Omega^2 / (2 n sigma^2(0)))

describes the residues of all 2^n strings of an instance through the single
self-averaging scale sigma(0).  The conditional distribution P_{r,z}(Omega')
over the C(n,r) strings at Hamming distance r from an ancestor z is, for an
instance without the a_0 offset, characterized exactly by

    mean     = q * Omega_z,                         q = 1 - 2r/n,
    variance = n sigma^2(q) (1 + 1/(n-1)) (1 - Omega_z^2 / (n <E^2>)),
    sigma(q) = sigma(0) (1 - q^2)^(1/2),

which are combinatorial identities, not asymptotics.  With a_0 present the
same identities hold after the substitution Omega_z -> Omega_z - a_0 plus an
a_0 (1 - q) shift of the mean (a_0 never flips); the helpers below apply
the generalized form, which reduces to the above at a_0 = 0.

Empirical moments in exact mode are accumulated in Python integers over raw
residues, so they are exact to the final float conversion.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .instance import NppInstance, PreconditionError, residue_table, residue

EXACT_ENUM_CAP = 10_000_000
DEFAULT_SAMPLES = 100_000
_CHUNK = 200_000


class WindowTooNarrowError(PreconditionError):
    """Coarse-graining window below the level-spacing self-consistency bound."""


@dataclass(frozen=True)
class GaussTheory:
    """Scales of the one-point residue distribution for a given instance."""

    sigma0: float
    n: int

    @property
    def mean_sq_energy(self) -> float:
        """<E^2> = n sigma^2(0)."""
        return self.n * self.sigma0**2

    @property
    def mean_energy(self) -> float:
        """<E> = (2 n sigma^2(0) / pi)^(1/2); note <E^2> = (pi/2) <E>^2."""
        return math.sqrt(2.0 * self.mean_sq_energy / math.pi)

    @property
    def e_min_scale(self) -> float:
        """Typical spacing of the lowest energies, sigma(0) n^(1/2) 2^-n."""
        return self.sigma0 * math.sqrt(self.n) * 2.0**-self.n

    def density(self, omega) -> np.ndarray:
        var = self.mean_sq_energy
        return np.exp(-np.asarray(omega, dtype=float) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)

    def cdf(self, omega) -> np.ndarray:
        s = math.sqrt(self.mean_sq_energy)
        return 0.5 * (1.0 + erf(np.asarray(omega, dtype=float) / (s * math.sqrt(2.0))))

    @classmethod
    def from_instance(cls, instance: NppInstance) -> "GaussTheory":
        return cls(sigma0=instance.sigma0(), n=instance.n)


def sigma_q(sigma0: float, q: float) -> float:
    """Conditional width sigma(q) = sigma(0) sqrt(1 - q^2)."""
    return sigma0 * math.sqrt(max(0.0, 1.0 - q * q))


@dataclass(frozen=True)
class Histogram:
    """Fixed-width histogram normalized as a probability density."""

    edges: np.ndarray
    counts: np.ndarray
    width: float
    n_samples: int
    mode: str  # "exact" or "sampled"

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_samples * self.width)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def integral(self) -> float:
        return float(self.density.sum() * self.width)


def _histogram(omegas: np.ndarray, width: float, mode: str) -> Histogram:
    hi = float(np.max(np.abs(omegas))) if omegas.size else width
    k = max(1, int(math.ceil(hi / width + 1e-9)))
    edges = np.arange(-k, k + 1) * width
    counts, _ = np.histogram(omegas, bins=edges)
    return Histogram(edges=edges, counts=counts, width=width, n_samples=int(omegas.size), mode=mode)


def min_window(instance: NppInstance) -> float:
    """Self-consistency floor 2^-n / P(0): one mean level spacing near zero."""
    t = GaussTheory.from_instance(instance)
    return 2.0**-instance.n * math.sqrt(2 * math.pi) * math.sqrt(t.mean_sq_energy)


def _rng(instance: NppInstance, *tags: int) -> np.random.Generator:
    """Task-local stream: deterministic in (instance seed, tags), schedule-free."""
    ss = np.random.SeedSequence([instance.seed, instance.n, instance.b, *[t & 0xFFFFFFFF for t in tags]])
    return np.random.Generator(np.random.Philox(ss))


def coarse_p_omega(
    instance: NppInstance,
    window: float,
    sample_budget: int = 1 << 22,
    mode: str = "auto",
) -> Histogram:
    """Coarse-grained density of signed residues.

    "auto" enumerates all 2^n strings when they fit the budget and samples
    `sample_budget` uniform strings otherwise; "exact"/"sampled" force one
    path.
    """
    floor = min_window(instance)
    if window < floor:
        raise WindowTooNarrowError(
            "window %.3g below level-spacing floor %.3g (>= 10x the floor recommended)" % (window, floor)
        )
    exact = (1 << instance.n) <= sample_budget if mode == "auto" else mode == "exact"
    if exact:
        omegas = residue_table(instance) * instance.scale
        used = "exact"
    else:
        rng = _rng(instance, 0xC0A5)
        zs = rng.integers(0, 1 << instance.n, size=sample_budget, dtype=np.uint64)
        omegas = _residues_of(instance, zs) * instance.scale
        used = "sampled"
    return _histogram(omegas, window, used)


def _residues_of(instance: NppInstance, zs: np.ndarray) -> np.ndarray:
    raw = np.full(zs.shape, instance.a0_weight or 0, dtype=np.int64)
    z = zs.astype(np.uint64)
    for j, w in enumerate(instance.weights):
        bit = ((z >> np.uint64(j)) & np.uint64(1)).astype(np.int64)
        raw += w * (1 - 2 * bit)
    return raw


def gaussian_cdf_distance(instance: NppInstance, n_sigmas: float = 3.0) -> float:
    """Sup distance between the empirical residue CDF and the Gaussian law.

    Evaluated at every distinct residue within |Omega| <= n_sigmas*sigma(0)*sqrt(n),
    using full enumeration (n <= 26).
    """
    theory = GaussTheory.from_instance(instance)
    omegas = np.sort(residue_table(instance) * instance.scale)
    total = omegas.size
    lim = n_sigmas * math.sqrt(theory.mean_sq_energy)
    lo, hi = np.searchsorted(omegas, [-lim, lim])
    xs = omegas[lo:hi]
    ecdf_hi = (np.arange(lo, hi) + 1) / total
    ecdf_lo = np.arange(lo, hi) / total
    tcdf = theory.cdf(xs)
    return float(np.max(np.maximum(np.abs(ecdf_hi - tcdf), np.abs(ecdf_lo - tcdf))))


# ---------------------------------------------------------------------------
# conditional distributions over r-flip neighborhoods
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CondMoments:
    r: int
    q: float
    mean: float
    variance: float
    omega_z: float
    sigma_q: float
    mode: str
    n_samples: int


def _flip_deltas(instance: NppInstance, z: int) -> np.ndarray:
    """delta_j = 2 w_j S_j(z); flipping subset J changes raw residue by -sum_J delta_j."""
    w = np.asarray(instance.weights, dtype=np.int64)
    s = 1 - 2 * ((z >> np.arange(instance.n)) & 1)
    return 2 * w * s


def iter_exact_neighbor_residues(instance: NppInstance, z: int, r: int):
    """Yield int64 chunks of raw residues over all C(n,r) flip sets."""
    n = instance.n
    base = residue(instance, z).raw
    if r == 0:
        yield np.array([base], dtype=np.int64)
        return
    deltas = _flip_deltas(instance, z)
    combos = itertools.combinations(range(n), r)
    while True:
        block = list(itertools.islice(combos, _CHUNK))
        if not block:
            return
        idx = np.array(block, dtype=np.intp)
        yield base - deltas[idx].sum(axis=1)


def sample_neighbor_residues(
    instance: NppInstance, z: int, r: int, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    """Raw residues over uniformly random r-subsets (with replacement across draws)."""
    n = instance.n
    base = residue(instance, z).raw
    if r == 0:
        return np.full(n_samples, base, dtype=np.int64)
    if r == n:
        return np.full(n_samples, base - int(_flip_deltas(instance, z).sum()), dtype=np.int64)
    deltas = _flip_deltas(instance, z)
    out = np.empty(n_samples, dtype=np.int64)
    for start in range(0, n_samples, _CHUNK):
        count = min(_CHUNK, n_samples - start)
        keys = rng.random((count, n))
        idx = np.argpartition(keys, r - 1, axis=1)[:, :r]
        out[start : start + count] = base - deltas[idx].sum(axis=1)
    return out


def _neighbor_residues(instance, z, r, mode, n_samples, rng_tag):
    n = instance.n
    if not 0 <= r <= n:
        raise PreconditionError("r must lie in [0, n]")
    if mode == "exact":
        if math.comb(n, r) > EXACT_ENUM_CAP:
            raise PreconditionError("exact mode refused: C(%d,%d) exceeds %d" % (n, r, EXACT_ENUM_CAP))
        return np.concatenate(list(iter_exact_neighbor_residues(instance, z, r)))
    if mode == "sampled":
        return sample_neighbor_residues(instance, z, r, n_samples, _rng(instance, rng_tag, z, r))
    raise PreconditionError("mode must be 'exact' or 'sampled'")


def cond_moments(
    instance: NppInstance,
    z: int,
    r: int,
    mode: str = "exact",
    n_samples: int = DEFAULT_SAMPLES,
) -> CondMoments:
    """Empirical mean/variance of Omega' over the r-neighborhood of z.

    Exact mode accumulates Python integers: the returned floats are the
    correctly rounded values of exact rationals.
    """
    n = instance.n
    om_z = residue(instance, z)
    q = 1.0 - 2.0 * r / n
    if mode == "exact":
        if math.comb(n, r) > EXACT_ENUM_CAP:
            raise PreconditionError("exact mode refused: C(%d,%d) exceeds %d" % (n, r, EXACT_ENUM_CAP))
        count = 0
        s1 = 0
        s2 = 0
        for chunk in iter_exact_neighbor_residues(instance, z, r):
            vals = chunk.tolist()
            count += len(vals)
            s1 += sum(vals)
            s2 += sum(v * v for v in vals)
        mean_raw = s1 / count
        var_raw = (count * s2 - s1 * s1) / count**2
        scale = instance.scale
        return CondMoments(
            r=r, q=q, mean=mean_raw * scale, variance=var_raw * scale**2,
            omega_z=om_z.omega, sigma_q=sigma_q(instance.sigma0(), q),
            mode="exact", n_samples=count,
        )
    vals = _neighbor_residues(instance, z, r, mode, n_samples, 0xC0DE) * instance.scale
    return CondMoments(
        r=r, q=q, mean=float(vals.mean()), variance=float(vals.var()),
        omega_z=om_z.omega, sigma_q=sigma_q(instance.sigma0(), q),
        mode="sampled", n_samples=vals.size,
    )


def cond_moment_theory(instance: NppInstance, omega_z: float, r: int) -> CondMoments:
    """Closed-form conditional moments (exact identity, see module docstring)."""
    n = instance.n
    if n < 2:
        raise PreconditionError("conditional moment theory needs n >= 2")
    if not 0 <= r <= n:
        raise PreconditionError("r must lie in [0, n]")
    q = 1.0 - 2.0 * r / n
    a0 = instance.a0
    t = GaussTheory.from_instance(instance)
    centered = omega_z - a0
    mean = q * centered + a0
    variance = (
        n * sigma_q(t.sigma0, q) ** 2
        * (1.0 + 1.0 / (n - 1))
        * (1.0 - centered**2 / (n * t.mean_sq_energy))
    )
    return CondMoments(
        r=r, q=q, mean=mean, variance=variance, omega_z=omega_z,
        sigma_q=sigma_q(t.sigma0, q), mode="theory", n_samples=0,
    )


def cond_hist(
    instance: NppInstance,
    z: int,
    r: int,
    window: float,
    mode: str = "exact",
    n_samples: int = DEFAULT_SAMPLES,
) -> Histogram:
    """Density of Omega' over the r-neighborhood of z."""
    vals = _neighbor_residues(instance, z, r, mode, n_samples, 0xB157) * instance.scale
    return _histogram(vals, window, mode)


def q_integral(
    instance: NppInstance,
    z: int,
    r: int,
    omega_prime: float,
    mode: str = "sampled",
    n_samples: int = DEFAULT_SAMPLES,
) -> float:
    """Integrated conditional weight Q(Omega') = P(|Omega_neighbor| <= Omega').

    The two-sided cumulative of P_{r,z}; for ancestors with Omega_z ~ 0 the
    Gaussian conditional law gives exactly erf(Omega'/(sigma(q) sqrt(2n))),
    the curve `q_integral_theory` returns.
    """
    vals = _neighbor_residues(instance, z, r, mode, n_samples, 0x01E7) * instance.scale
    return float(np.mean(np.abs(vals) <= omega_prime))


def q_integral_curve(
    instance: NppInstance,
    z: int,
    r: int,
    grid: np.ndarray,
    mode: str = "sampled",
    n_samples: int = DEFAULT_SAMPLES,
) -> np.ndarray:
    """Q(Omega') on a grid, one shared neighbor draw (CSV/figure helper)."""
    vals = np.abs(_neighbor_residues(instance, z, r, mode, n_samples, 0x01E7)) * instance.scale
    vals.sort()
    return np.searchsorted(vals, np.asarray(grid, dtype=float), side="right") / vals.size


def q_integral_theory(q: float, omega_prime, sigma0: float, n: int) -> np.ndarray:
    sq = sigma_q(sigma0, q)
    x = np.asarray(omega_prime, dtype=float)
    if sq == 0.0:
        return np.where(x > 0, 1.0, 0.0)
    return erf(x / (sq * math.sqrt(2.0 * n)))


def select_ancestors(
    instance: NppInstance, count: int, abs_window: float = 0.3, seed_tag: int = 0
) -> list[int]:
    """Random strings with |Omega_z| inside the window (enumerated for n <= 26)."""
    table = residue_table(instance)
    limit = int(math.floor(abs_window / instance.scale))
    candidates = np.flatnonzero(np.abs(table) <= limit)
    if candidates.size == 0:
        raise PreconditionError("no strings with |Omega| <= %g" % abs_window)
    rng = _rng(instance, 0xA2CE, seed_tag)
    take = min(count, candidates.size)
    return sorted(int(c) for c in rng.choice(candidates, size=take, replace=False))


def scaled_density_profile(
    instance: NppInstance,
    ancestors: list[int],
    window: float = 0.3,
    r_values: list[int] | None = None,
    mode: str = "sampled",
    n_samples: int = DEFAULT_SAMPLES,
) -> list[dict]:
    """Scaled conditional weight s near zero residue, per ancestor and r.

    s = sigma(0) (2 pi n)^(1/2) (DeltaOmega)^(-1) * P(0 <= Omega' < DeltaOmega),
    to be compared against sigma(0)/sigma(q).
    """
    n = instance.n
    sigma0 = instance.sigma0()
    rs = r_values if r_values is not None else list(range(1, n))
    rows = []
    pref = sigma0 * math.sqrt(2.0 * math.pi * n) / window
    lim = int(math.floor(window / instance.scale))
    for z in ancestors:
        om_z = residue(instance, z).omega
        for r in rs:
            vals = _neighbor_residues(instance, z, r, mode, n_samples, 0x5CA1)
            frac = float(np.mean((vals >= 0) & (vals < lim)))
            q = 1.0 - 2.0 * r / n
            sq = sigma_q(sigma0, q)
            rows.append({
                "r": r,
                "q": q,
                "ancestor_id": z,
                "omega_z": om_z,
                "s_value": pref * frac,
                "theory_value": sigma0 / sq if sq > 0 else math.inf,
            })
    return rows


# ---------------------------------------------------------------------------
# local-search bound and random-search baseline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalSearchBound:
    q_bar: float
    r_int: int
    r_continuous: float
    boundary: bool


def local_search_bound(energy: float, n: int, sigma0: float) -> LocalSearchBound:
    """Typical overlap reachable at energy scale E: solve E C(n,r) Pbar_r = 1.

    Pbar_r = (2 pi n sigma^2(q))^(-1/2) with q = 1 - 2r/n; the left side is
    monotone in r on [1, n/2], treated continuously (log-Gamma binomial),
    then reported at the bracketing integer r.
    """
    if energy <= 0:
        raise PreconditionError("energy must be positive")

    def logf(r: float) -> float:
        q = 1.0 - 2.0 * r / n
        sq = sigma_q(sigma0, q)
        lc = math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1)
        return math.log(energy) + lc - 0.5 * math.log(2 * math.pi * n * sq * sq)

    half = n / 2.0
    if logf(half) < 0.0:
        return LocalSearchBound(q_bar=0.0, r_int=n // 2, r_continuous=half, boundary=True)
    lo, hi = 1e-6, half
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if logf(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    r_int = min(int(math.ceil(hi - 1e-12)), n // 2)
    return LocalSearchBound(q_bar=1.0 - 2.0 * r_int / n, r_int=r_int, r_continuous=hi, boundary=False)


def best_of_m_check(
    instance: NppInstance, m_values: list[int], trials: int = 20
) -> list[tuple[int, float]]:
    """Mean best energy over M uniform strings, confirming the ~1/M decay."""
    rng = _rng(instance, 0xBE57)
    out = []
    for m in m_values:
        best = np.empty(trials)
        for t in range(trials):
            zs = rng.integers(0, 1 << instance.n, size=m, dtype=np.uint64)
            best[t] = np.min(np.abs(_residues_of(instance, zs))) * instance.scale
        out.append((m, float(best.mean())))
    return out
