import math

import numpy as np
import pytest

from qanpp import instance as npi
from qanpp import residue_stats as rs


def test_gauss_theory_identities(inst12):
    t = rs.GaussTheory.from_instance(inst12)
    assert t.mean_sq_energy == pytest.approx(math.pi / 2.0 * t.mean_energy**2, rel=1e-14)
    assert t.e_min_scale == pytest.approx(t.sigma0 * math.sqrt(12) * 2.0**-12)


def test_coarse_p_omega_n1_two_bins():
    inst = npi.NppInstance(n=1, b=4, seed=0, weights=(12,))
    a1 = 12 / 16
    hist = rs.coarse_p_omega(inst, window=1.5 * a1)
    occupied = np.flatnonzero(hist.counts)
    assert occupied.size == 2
    centers = hist.centers[occupied]
    assert centers[0] < 0 < centers[1]
    assert hist.integral() == pytest.approx(1.0, abs=1e-9)


def test_coarse_p_omega_rejects_narrow_window(inst12):
    with pytest.raises(rs.WindowTooNarrowError):
        rs.coarse_p_omega(inst12, window=0.1 * rs.min_window(inst12))


def test_histogram_is_density(inst12):
    hist = rs.coarse_p_omega(inst12, window=0.3)
    assert np.all(hist.density >= 0)
    assert hist.integral() == pytest.approx(1.0, abs=1e-9)


def test_sampled_histogram_agrees_with_enumeration():
    inst = npi.generate(12, 25, 5)
    exact = rs.coarse_p_omega(inst, window=0.5, mode="exact")
    sampled = rs.coarse_p_omega(inst, window=0.5, sample_budget=1_000_000, mode="sampled")
    n_s = sampled.n_samples
    # align bins: both are centered on multiples of the window
    for center, count in zip(sampled.centers, sampled.counts):
        j = np.argmin(np.abs(exact.centers - center))
        p = exact.counts[j] / exact.n_samples
        se = math.sqrt(max(p * (1 - p) / n_s, 1e-12))
        assert abs(count / n_s - p) <= 3.0 * se + 1e-9


def test_gaussian_cdf_distance_small_n():
    inst = npi.generate(16, 25, 11)
    assert rs.gaussian_cdf_distance(inst) < 0.02


def test_cond_moments_r0_and_rn(inst10):
    m0 = rs.cond_moments(inst10, z=393, r=0)
    assert m0.mean == pytest.approx(m0.omega_z) and m0.variance == 0.0
    mn = rs.cond_moments(inst10, z=393, r=10)
    assert mn.mean == pytest.approx(-m0.omega_z) and mn.variance == pytest.approx(0.0, abs=1e-20)


def test_cond_moments_n2_hand_case():
    inst = npi.NppInstance(n=2, b=4, seed=0, weights=(5, 3))
    m = rs.cond_moments(inst, z=0, r=1)
    th = rs.cond_moment_theory(inst, m.omega_z, 1)
    assert m.mean == 0.0
    assert m.variance == pytest.approx((5 - 3) ** 2 * inst.scale**2, rel=1e-14)
    assert th.mean == pytest.approx(m.mean, abs=1e-15)
    assert th.variance == pytest.approx(m.variance, rel=1e-12)


@pytest.mark.parametrize("r", range(0, 11))
def test_cond_moment_identities_exact(inst10, r):
    for z in (0, 17, 393, 800):
        emp = rs.cond_moments(inst10, z, r, mode="exact")
        th = rs.cond_moment_theory(inst10, emp.omega_z, r)
        assert emp.mean == pytest.approx(th.mean, rel=1e-9, abs=1e-15)
        assert emp.variance == pytest.approx(th.variance, rel=1e-9, abs=1e-18)


def test_cond_moment_identities_with_a0(inst10_a0):
    for r in (1, 3, 7):
        emp = rs.cond_moments(inst10_a0, 55, r, mode="exact")
        th = rs.cond_moment_theory(inst10_a0, emp.omega_z, r)
        assert emp.mean == pytest.approx(th.mean, rel=1e-9)
        assert emp.variance == pytest.approx(th.variance, rel=1e-9)


def test_cond_moments_half_r_mean_zero():
    inst = npi.generate(10, 25, 9)  # a0 = 0
    emp = rs.cond_moments(inst, 123, 5, mode="exact")
    assert emp.q == 0.0
    assert abs(emp.mean) < 1e-12


def test_exact_mode_cap():
    inst = npi.generate(30, 25, 1)
    with pytest.raises(npi.PreconditionError):
        rs.cond_moments(inst, 0, 15, mode="exact")


def test_cond_hist_mirror_involution(inst12):
    """With a0 = 0 the r and n-r neighborhoods mirror under negation."""
    z = 100
    h_r = rs.cond_hist(inst12, z, 3, window=0.4, mode="exact")
    h_c = rs.cond_hist(inst12, z, 12 - 3, window=0.4, mode="exact")
    assert np.array_equal(h_r.counts, h_c.counts[::-1])


def test_cond_hist_r1_step_law():
    """r=1 conditional density ~ 1/4 on Omega_z - Omega' in [-2, 2], zero out.

    Checked on an ensemble average (single instances have only n atoms)."""
    total_in = []
    dens = []
    for seed in range(30):
        inst = npi.generate(24, 25, 600 + seed)
        z = 0
        om_z = npi.residue(inst, z).omega
        vals = rs._neighbor_residues(inst, z, 1, "exact", 0, 0) * inst.scale
        diff = om_z - vals
        assert np.all(np.abs(diff) <= 2.0 + 1e-12)
        dens.append(np.mean(np.abs(diff) <= 1.0) / 2.0)  # density on [-1, 1]
    # Eq.-level constant is 1/4
    assert np.mean(dens) == pytest.approx(0.25, abs=0.05)


def test_cond_hist_exact_vs_sampled():
    inst = npi.generate(12, 25, 3)
    z = 77
    exact = rs.cond_hist(inst, z, 4, window=0.5, mode="exact")
    sampled = rs.cond_hist(inst, z, 4, window=0.5, mode="sampled", n_samples=100_000)
    for center, count in zip(sampled.centers, sampled.counts):
        j = int(np.argmin(np.abs(exact.centers - center)))
        p = exact.counts[j] / exact.n_samples
        se = math.sqrt(max(p * (1 - p) / sampled.n_samples, 1e-12))
        assert abs(count / sampled.n_samples - p) <= 3.0 * se + 1e-9


def test_cond_hist_broad_maximum():
    """Mid-range r: density near zero ~ (2 pi n sigma^2(q))^(-1/2)."""
    inst = npi.generate(20, 25, 11)
    z = rs.select_ancestors(inst, 1, abs_window=0.1)[0]
    r = 10
    hist = rs.cond_hist(inst, z, r, window=0.3, mode="sampled", n_samples=200_000)
    j = int(np.argmin(np.abs(hist.centers)))
    q = 1.0 - 2.0 * r / inst.n
    theory = 1.0 / math.sqrt(2 * math.pi * inst.n * rs.sigma_q(inst.sigma0(), q) ** 2)
    assert hist.density[j] == pytest.approx(theory, rel=0.15)


def test_q_integral_trivial_limits(inst12):
    assert rs.q_integral(inst12, 5, 3, 0.0, mode="exact") == 0.0
    assert rs.q_integral_theory(0.4, np.inf, 0.5, 12) == pytest.approx(1.0)
    assert rs.q_integral_theory(1.0, 0.5, 0.5, 12) == 1.0  # sigma(q)=0 step
    assert rs.q_integral_theory(0.4, 0.0, 0.5, 12) == 0.0


def test_q_integral_monotone_bounded(inst12):
    z = 9
    grid = np.linspace(0.0, 6.0, 30)
    curve = rs.q_integral_curve(inst12, z, 4, grid, mode="exact")
    assert np.all(np.diff(curve) >= 0)
    assert curve[0] >= 0.0 and curve[-1] <= 1.0
    theory = rs.q_integral_theory(1 - 8 / 12, grid, inst12.sigma0(), 12)
    assert np.all(np.diff(theory) >= 0) and theory[-1] <= 1.0


def test_scaled_profile_theory_column():
    inst = npi.generate(16, 25, 21)
    anc = rs.select_ancestors(inst, 2, abs_window=0.3)
    rows = rs.scaled_density_profile(inst, anc, r_values=[4, 8, 12], mode="sampled", n_samples=50_000)
    for row in rows:
        expected = 1.0 / math.sqrt(1.0 - row["q"] ** 2)
        assert row["theory_value"] == pytest.approx(expected, rel=1e-12)
        if row["r"] == 8:
            assert row["theory_value"] == 1.0


def test_scaled_profile_midrange_scatter():
    inst = npi.generate(16, 25, 21)
    anc = rs.select_ancestors(inst, 6, abs_window=0.3)
    rows = rs.scaled_density_profile(inst, anc, r_values=[8], mode="sampled", n_samples=100_000)
    vals = [row["s_value"] for row in rows]
    spread = (max(vals) - min(vals)) / np.median(vals)
    assert spread < 0.25  # cross-ancestor scatter at mid-range r stays small


def test_local_search_bound_small_q_at_low_energy():
    """E ~ E_min gives |q_bar| = O(1/n): below the n/2 crossing threshold
    the boundary value 0 is reported; just above it q_bar is within ~2/n
    of zero (the r grid is integer)."""
    inst = npi.generate(16, 25, 3)
    t = rs.GaussTheory.from_instance(inst)
    lb = rs.local_search_bound(t.e_min_scale, 16, t.sigma0)
    assert abs(lb.q_bar) <= 4.0 / 16.0
    e_threshold = 1.0 / (math.comb(16, 8) / math.sqrt(2 * math.pi * 16 * t.sigma0**2))
    lb_just = rs.local_search_bound(1.5 * e_threshold, 16, t.sigma0)
    assert abs(lb_just.q_bar) <= 4.0 / 16.0 and not lb_just.boundary


def test_local_search_bound_boundary():
    lb = rs.local_search_bound(1e-30, 16, 0.5)
    assert lb.boundary and lb.q_bar == 0.0


def test_local_search_bound_moderate_energy():
    # at E ~ <E> strings of similar energy can be close: q_bar well above 0
    inst = npi.generate(16, 25, 3)
    t = rs.GaussTheory.from_instance(inst)
    lb = rs.local_search_bound(t.mean_energy, 16, t.sigma0)
    assert lb.q_bar > 0.5


def test_best_of_m_decay():
    inst = npi.generate(16, 25, 8)
    rows = rs.best_of_m_check(inst, [100, 1000, 10000], trials=20)
    c = rows[0][1] * rows[0][0]
    for m, mean_best in rows[1:]:
        assert 0.5 * c / m <= mean_best <= 2.0 * c / m
