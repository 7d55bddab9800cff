"""Green-function theory of the avoided crossing.

The driver resolvent decomposes over x-basis weight sectors: with
V_m = 2m - n and I^m the projector onto Hamming weight m in the x basis,
matrix elements of (lambda - alpha V)^-1 between z-strings at Hamming
distance r are governed by

    I^m_r = 2^-n sum_{q=0}^{n-r} sum_{p=0}^{r} C(n-r,q) C(r,p) (-1)^p delta_{m,q+p}
    G_r(lambda) = sum_{m=1}^{n} I^m_r / (lambda - alpha V_m),

the m = 0 channel being split off as the symmetric term.  I^m_r is
2^-n K_m(r) with K_m the Krawtchouk polynomial, a polynomial in r, which is
what lets the entropic sum

    s(lambda) = int_0^n dr [sigma(0)/sigma(1-2r/n)] C(n,r) G_r(lambda)

be evaluated at real r.  Substituting q = cos(theta) absorbs the
(1-q^2)^(-1/2) endpoint singularity exactly:

    s(lambda) = (n/2) int_0^pi C(n, r(theta)) G_{r(theta)}(lambda) dtheta,
    r(theta) = n (1 - cos theta) / 2,

leaving a smooth integrand for composite Simpson.  Near lambda = alpha V_0
one has s(lambda) ~ -ln2/(2 alpha), and the eigenvalue of the extended state
solves

    1 + 2 tau mu (1/(lambda - alpha V_0) + s(lambda)) = 0,

with mu = 2 omega_M / (pi <E>).  Its expansion gives the initial branch
lambda_0^i; the localized branch is lambda_0^f ~ tau eps_0 - 1/2; the two
intersect at tau*, where the level repulsion gives

    g_min = n * Delta_gap * 2^(-n/2),
    Delta_gap = d_0^(1/2) (1 + mu tau* ln 2).

`Delta_gap` here is the gap prefactor of the two-level crossing form, not
the bin width Delta of the cost ladder (named delta_bin in `binning`).

Integer-r coefficient tables are built in exact integer arithmetic and
converted to float once; an exact `fractions.Fraction` table is available
for n <= 20 cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .instance import NppInstance, PreconditionError
from .binning import BinnedCost, SubspaceDims, mean_energy

EULER_GAMMA = 0.5772156649015329
IMR_MAX_N = 40


class PoleProximityError(ValueError):
    """lambda too close to a driver pole alpha*V_m."""


# ---------------------------------------------------------------------------
# I^m_r coefficients
# ---------------------------------------------------------------------------


def _krawtchouk_int(n: int, m: int, r: int) -> int:
    """K_m(r) = sum_p (-1)^p C(r,p) C(n-r,m-p), exact."""
    return sum(
        (-1) ** p * math.comb(r, p) * math.comb(n - r, m - p)
        for p in range(max(0, m - (n - r)), min(r, m) + 1)
    )


@dataclass(frozen=True)
class ImrTable:
    n: int
    table: np.ndarray  # shape (n+1, n+1), [m, r]

    def exact(self) -> list[list[Fraction]]:
        """Exact rational I^m_r for cross-checks (n <= 20)."""
        if self.n > 20:
            raise PreconditionError("exact rational table kept for n <= 20")
        den = 1 << self.n
        return [
            [Fraction(_krawtchouk_int(self.n, m, r), den) for r in range(self.n + 1)]
            for m in range(self.n + 1)
        ]


def imr_table(n: int) -> ImrTable:
    """All I^m_r for m, r in [0, n], exact integers scaled by 2^-n."""
    if not 1 <= n <= IMR_MAX_N:
        raise PreconditionError("imr_table supports 1 <= n <= %d" % IMR_MAX_N)
    t = np.empty((n + 1, n + 1))
    for m in range(n + 1):
        for r in range(n + 1):
            t[m, r] = _krawtchouk_int(n, m, r)
    return ImrTable(n=n, table=t * 2.0**-n)


def _gen_binom(x: float, j: int) -> float:
    """C(x, j) for real x, integer j >= 0 (product form, sign-correct)."""
    out = 1.0
    for i in range(j):
        out *= (x - i) / (i + 1)
    return out


def krawtchouk_real(n: int, m: int, x: float) -> float:
    """Polynomial extension of K_m(r) to real r."""
    return math.fsum(
        (-1) ** p * _gen_binom(x, p) * _gen_binom(n - x, m - p) for p in range(m + 1)
    )


# ---------------------------------------------------------------------------
# Green function
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GreenEval:
    lam: float
    alpha: float
    g: np.ndarray       # G_r for r = 0..n
    v_m: np.ndarray     # V_m = 2m - n


def _check_poles(n: int, lam: float, alpha: float) -> np.ndarray:
    v = 2.0 * np.arange(n + 1) - n
    dist = np.abs(lam - alpha * v[1:])
    if np.min(dist) < 1e-12:
        m_bad = int(np.argmin(dist)) + 1
        raise PoleProximityError("lambda within 1e-12 of pole alpha*V_%d" % m_bad)
    return v


def green_r(table: ImrTable, lam: float, alpha: float) -> GreenEval:
    """G_r(lambda) for all r; the m = 0 symmetric channel is excluded."""
    n = table.n
    v = _check_poles(n, lam, alpha)
    denom = lam - alpha * v[1:]
    g = table.table[1:, :].T @ (1.0 / denom)
    return GreenEval(lam=lam, alpha=alpha, g=g, v_m=v)


def green_r_real(n: int, lam: float, alpha: float, r: float) -> float:
    """G_r at real r via the Krawtchouk extension."""
    v = _check_poles(n, lam, alpha)
    scale = 2.0**-n
    return math.fsum(
        scale * krawtchouk_real(n, m, r) / (lam - alpha * v[m]) for m in range(1, n + 1)
    )


def jr_closed_form(n: int, r: int) -> float:
    """-2 alpha G_r at lambda -> alpha V_0:
    C(n,r)^-1 sum_{m=1}^{n-r} 2^-n C(n,m+r)/m  -  2^-n (ln r + gamma_E)."""
    if r < 1:
        raise PreconditionError("closed form needs r >= 1")
    s = math.fsum(math.comb(n, m + r) / m for m in range(1, n - r + 1))
    return s / (math.comb(n, r) * 2.0**n) - 2.0**-n * (math.log(r) + EULER_GAMMA)


def jr_midrange(n: int, r: int) -> float:
    """Mid-range decay form -[(n/2 - r) C(n,r)]^-1 (valid for n/2 - r >> 1)."""
    return -1.0 / ((n / 2.0 - r) * math.comb(n, r))


def neg_two_alpha_g(table: ImrTable, r: int) -> float:
    """-2 alpha G_r evaluated exactly at lambda = alpha V_0 (alpha-independent)."""
    n = table.n
    return math.fsum(table.table[m, r] / m for m in range(1, n + 1))


# ---------------------------------------------------------------------------
# entropic sum s(lambda)
# ---------------------------------------------------------------------------


def _log_binom_real(n: int, r: float) -> float:
    return math.lgamma(n + 1) - math.lgamma(r + 1) - math.lgamma(n - r + 1)


def s_lambda(table: ImrTable, lam: float, alpha: float, num_nodes: int | None = None) -> float:
    """Quadrature of the entropic integral (see module docstring).

    The sigma(0)/sigma(q) weight cancels against the theta substitution, so
    no instance scale enters.  `num_nodes` must be odd (Simpson); default 4n+1.
    """
    n = table.n
    v = _check_poles(n, lam, alpha)
    denom = 1.0 / (lam - alpha * v[1:])
    nodes = num_nodes if num_nodes is not None else 4 * n + 1
    if nodes % 2 == 0:
        nodes += 1
    thetas = np.linspace(0.0, math.pi, nodes)
    vals = np.empty(nodes)
    scale = 2.0**-n
    for i, th in enumerate(thetas):
        r = n * (1.0 - math.cos(th)) / 2.0
        g = math.fsum(
            scale * krawtchouk_real(n, m, r) * denom[m - 1] for m in range(1, n + 1)
        )
        vals[i] = math.exp(_log_binom_real(n, r)) * g
    h = thetas[1] - thetas[0]
    simpson = (h / 3.0) * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum() + 2.0 * vals[2:-2:2].sum())
    return (n / 2.0) * simpson


def s_lambda_approx(alpha: float) -> float:
    """Closed approximation s ~ -ln2/(2 alpha), valid |lambda - alpha V_0| << 1."""
    return -math.log(2.0) / (2.0 * alpha)


# ---------------------------------------------------------------------------
# branches, crossing point, gap estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BranchParams:
    """Instance-level inputs of the two-branch crossing analysis."""

    n: int
    mu: float        # 2 omega_M / (pi <E>)
    eps0: int        # -M
    d0: int
    K: int

    @property
    def v0(self) -> float:
        return -float(self.n)


def branch_params(instance: NppInstance, binning: BinnedCost, dims: SubspaceDims) -> BranchParams:
    """mu is computed from sigma(0) via <E> = sigma(0) sqrt(2n/pi), not from
    empirical histograms: the theory is stated in terms of sigma(0)."""
    mu = 2.0 * binning.cutoff / (math.pi * mean_energy(instance))
    if dims.d0 < 1:
        raise PreconditionError("branch analysis needs d0 >= 1")
    return BranchParams(n=instance.n, mu=mu, eps0=-binning.M, d0=dims.d0, K=binning.K)


def branch_initial(params: BranchParams, tau: float) -> float:
    """Extended-state branch lambda_0^i = alpha V_0 - 2 tau mu - 2 (tau mu)^2 ln2 / alpha."""
    alpha = 1.0 - tau
    if alpha <= params.mu:
        raise PreconditionError("branch_initial expansion needs alpha >> mu")
    tm = tau * params.mu
    return alpha * params.v0 - 2.0 * tm - 2.0 * tm * tm * math.log(2.0) / alpha


def branch_final(params: BranchParams, tau: float) -> float:
    """Localized-state branch lambda_0^f = tau eps_0 - 1/2 (|tau - 1/2| small)."""
    return tau * params.eps0 - 0.5


@dataclass(frozen=True)
class CrossingPoint:
    tau_star: float          # numerical intersection of the two branch formulas
    tau_star_closed: float   # 1/2 + (1/4n) log2(d0/mu)


def crossing_closed_form(params: BranchParams) -> float:
    """tau* ~ 1/2 + (1/4n) log2(d0/mu)."""
    return 0.5 + math.log2(params.d0 / params.mu) / (4.0 * params.n)


def crossing_point(params: BranchParams) -> CrossingPoint:
    """Both forms of tau*; the bisection intersection is the primary value,
    the closed form is its large-n simplification."""
    closed = crossing_closed_form(params)

    def f(tau: float) -> float:
        return branch_initial(params, tau) - branch_final(params, tau)

    lo, hi = 1e-6, min(0.999, 1.0 - 1.001 * params.mu)
    if f(lo) >= 0.0 or f(hi) <= 0.0:
        raise PreconditionError("branch formulas fail to intersect in (0, %g)" % hi)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return CrossingPoint(tau_star=0.5 * (lo + hi), tau_star_closed=closed)


def delta_gap(params: BranchParams, tau_star: float) -> float:
    """Gap prefactor d0^(1/2) (1 + mu tau* ln 2)."""
    return math.sqrt(params.d0) * (1.0 + params.mu * tau_star * math.log(2.0))


def gmin_estimate(params: BranchParams, tau_star: float | None = None) -> float:
    """g_min = n Delta_gap 2^(-n/2)."""
    ts = tau_star if tau_star is not None else crossing_point(params).tau_star
    return params.n * delta_gap(params, ts) * 2.0 ** (-params.n / 2.0)


def runtime_bound(params: BranchParams, matrix_element: float, tau_star: float | None = None) -> float:
    """Adiabatic run-time scale T ~ d0 |H_tau,01| / g_min^2 = O((n d0)^-1 2^n)."""
    g = gmin_estimate(params, tau_star)
    return params.d0 * abs(matrix_element) / (g * g)


def transcendental_root(
    params: BranchParams,
    tau: float,
    s_provider="approx",
    table: ImrTable | None = None,
) -> float:
    """Root of 1 + 2 tau mu (1/(lambda - alpha V_0) + s(lambda)) = 0.

    Bracketed bisection on lambda in (alpha V_0 - 1, alpha V_0); the interval
    contains no driver pole (the nearest, alpha V_1, lies 2 alpha above).
    `s_provider` is "approx", "numerical", or a callable lambda -> s.
    """
    if not 0.0 < tau < 1.0:
        raise PreconditionError("tau must lie in (0, 1)")
    alpha = 1.0 - tau
    av0 = alpha * params.v0

    if callable(s_provider):
        s_of = s_provider
    elif s_provider == "approx":
        s_of = lambda lam: s_lambda_approx(alpha)
    elif s_provider == "numerical":
        tab = table if table is not None else imr_table(params.n)
        s_of = lambda lam: s_lambda(tab, lam, alpha)
    else:
        raise PreconditionError("s_provider must be 'approx', 'numerical', or callable")

    def f(lam: float) -> float:
        return 1.0 + 2.0 * tau * params.mu * (1.0 / (lam - av0) + s_of(lam))

    lo, hi = av0 - 1.0, av0 - 1e-13
    flo = f(lo)
    if flo <= 0.0 or f(hi) >= 0.0:
        raise PreconditionError("no sign change in bracket (alpha V0 - 1, alpha V0)")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
