import math

import numpy as np
import pytest

from qanpp import binning as bn
from qanpp import dynamics as dyn
from qanpp import instance as npi
from qanpp.hamiltonian import diagonal_cost, uniform_state, exp_driver, exp_problem


@pytest.fixture(scope="module")
def sys6():
    inst = npi.generate(6, 20, 5, with_a0=True)
    binning = bn.build_binning(inst, K=2, mode="paper-default")
    return inst, binning


def test_small_t_projection(sys6):
    inst, binning = sys6
    d0 = bn.subspace_dims(inst, binning).d0
    res = dyn.evolve(inst, binning, T=1e-3)
    assert res.p0 == pytest.approx(d0 * 2.0**-6, rel=1e-3)


def test_adiabatic_limit(sys6):
    inst, binning = sys6
    res = dyn.evolve(inst, binning, T=500.0)
    assert res.p0 >= 0.99
    assert res.norm_drift <= 1e-8


def test_second_order_convergence(sys6):
    inst, binning = sys6
    p = [dyn.evolve(inst, binning, 10.0, dt=dt).p0 for dt in (0.04, 0.02, 0.01, 0.005, 0.0025)]
    d1, d2, d3 = abs(p[1] - p[0]), abs(p[2] - p[1]), abs(p[3] - p[2])
    assert 3.5 <= d1 / d2 <= 4.5
    assert 3.5 <= d2 / d3 <= 4.5
    # at dt = 0.005 a further halving moves p0 by less than 1e-6
    assert abs(p[4] - p[3]) < 1e-6


def test_merged_stepper_matches_three_factor(sys6):
    inst, binning = sys6
    diag = diagonal_cost(inst, binning)
    T, dt = 7.3, 0.02
    steps = int(math.ceil(T / dt - 1e-12))
    dt = T / steps
    psi = uniform_state(6)
    for k in range(steps):
        tau = (k + 0.5) * dt / T
        psi = exp_driver(psi, (1 - tau) * dt / 2)
        psi = exp_problem(psi, tau * dt, diag)
        psi = exp_driver(psi, (1 - tau) * dt / 2)
    p0_plain = float(np.sum(np.abs(psi[diag.l0_mask()]) ** 2))
    res = dyn.evolve(inst, binning, T=7.3, dt=0.02)
    assert abs(res.p0 - p0_plain) < 1e-12


@pytest.mark.skipif(not dyn._HAVE_NUMBA, reason="numba unavailable")
def test_numba_matches_numpy_path(sys6, monkeypatch):
    # same algebra, different rounding order (LUT exp vs cos/sin pairs)
    inst, binning = sys6
    res_jit = dyn.evolve(inst, binning, T=9.1, dt=0.03)
    monkeypatch.setattr(dyn, "_HAVE_NUMBA", False)
    res_np = dyn.evolve(inst, binning, T=9.1, dt=0.03)
    assert res_jit.p0 == pytest.approx(res_np.p0, abs=1e-11)


def test_trace_checkpoints(sys6):
    inst, binning = sys6
    res = dyn.evolve(inst, binning, T=50.0, trace_points=5)
    assert len(res.trace) == 5
    ts = [t for t, _ in res.trace]
    assert ts == sorted(ts) and ts[-1] == pytest.approx(50.0)
    plain = dyn.evolve(inst, binning, T=50.0)
    assert abs(res.trace[-1][1] - plain.p0) < 1e-12
    assert abs(res.p0 - plain.p0) < 1e-12


def test_invalid_t_rejected(sys6):
    inst, binning = sys6
    with pytest.raises(npi.PreconditionError):
        dyn.evolve(inst, binning, T=0.0)


def test_complexity_small_t_limit(sys6):
    inst, binning = sys6
    curve = dyn.complexity_curve(inst, binning, t_grid=np.array([0.05, 0.1, 0.2]),
                                 refine=False, early_stop=False)
    for t, c in zip(curve.ts, curve.cs):
        plateau = (1.0 + t) * 2.0**6
        assert 0.5 * plateau <= c <= 2.0 * plateau


def test_complexity_single_minimum_then_growth():
    inst = npi.generate(8, 25, 4, with_a0=True)
    binning = bn.build_binning(inst, K=4, mode="paper-default")
    curve = dyn.complexity_curve(inst, binning, early_stop=False)
    cs = curve.cs
    best = int(np.argmin(cs))
    assert 0 < best < cs.size - 1
    # beyond ~1.5 T_min the trend is growth: last grid value well above C_min
    tail = cs[curve.ts > 1.5 * curve.T_min]
    assert tail[-1] > 1.5 * curve.C_min
    assert curve.C_min <= cs.min() + 1e-12
    assert not curve.capped.any()
    assert curve.C_min >= (1.0 + curve.T_min) * curve.d0 - 1e-9


def test_complexity_early_stop_matches_full():
    inst = npi.generate(9, 25, 6, with_a0=True)
    binning = bn.build_binning(inst, K=4, mode="paper-default")
    full = dyn.complexity_curve(inst, binning, early_stop=False)
    fast = dyn.complexity_curve(inst, binning, early_stop=True)
    assert fast.C_min == pytest.approx(full.C_min, rel=0.03)


def test_adiabatic_monotone_median():
    ts = np.array([2.0, 8.0, 32.0, 128.0])
    p0s = []
    for seed in range(5):
        inst = npi.generate(8, 25, 40 + seed, with_a0=True)
        binning = bn.build_binning(inst, K=4, mode="paper-default")
        p0s.append([dyn.evolve(inst, binning, float(t)).p0 for t in ts])
    med = np.median(np.asarray(p0s), axis=0)
    assert np.all(np.diff(med) > 0)


def test_t_min_regression_n15():
    """Order-of-magnitude regression of (T_min, p0) for one n=15 instance;
    reference experiments report T_min ~ 22.7 with p0 ~ 0.15."""
    inst = npi.generate(15, 25, 7, with_a0=True)
    binning = bn.build_binning(inst, K=16, mode="paper-default")
    curve = dyn.complexity_curve(inst, binning)
    assert 5.0 <= curve.T_min <= 80.0
    assert 0.01 <= curve.p0_at_min <= 0.6


def test_cmin_sweep_validates_trials():
    with pytest.raises(npi.PreconditionError):
        dyn.cmin_scaling_sweep([8], b=20, trials_per_n=5)
