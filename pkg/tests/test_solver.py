import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nslab import initial_data as ic
from nslab.exceptions import DomainError, NumericDivergence
from nslab.flux import ARRHENIUS, LWR
from nslab.kernels import Boundary, Grid1D, KernelSpec
from nslab.riccati import RiccatiProblem, riccati_compare
from nslab.solver import (Criterion, DetectorConfig, NonlocalSolver, make_state, run,
                          stable_dt, step)
from nslab.thresholds import threshold_constant

K1 = KernelSpec.constant(1.0)


def periodic(n, length=10.0):
    return Grid1D.uniform(n, 0.0, length, Boundary.PERIODIC)


def front_grid(n=800):
    return Grid1D.uniform(n, -2.0, 4.0, Boundary.CONSTANT_EXTENSION)


def start(grid, profile, kernel=K1):
    return make_state(grid, ic.cell_averages(profile, grid), kernel)


# --- single steps ------------------------------------------------------------

@pytest.mark.parametrize("kernel", [K1, KernelSpec.linear(0.7)])
@pytest.mark.parametrize("order", [1, 2])
def test_constant_state_is_fixed(kernel, order):
    s = make_state(periodic(200), np.full(200, 0.3), kernel)
    for _ in range(5):
        s1 = step(s, ARRHENIUS, kernel, order=order)
        assert np.max(np.abs(s1.u - s.u)) <= 1e-14
        s = s1


@pytest.mark.parametrize("order", [1, 2])
def test_mass_conserved_per_step(order):
    g = periodic(400)
    s = start(g, ic.random_smooth(seed=3, period=10.0))
    m0 = s.mass
    for _ in range(50):
        s = step(s, ARRHENIUS, K1, order=order)
    assert abs(s.mass - m0) <= 1e-14 * abs(m0) * 50


def test_dt_respects_caps():
    g = periodic(400)
    s = start(g, ic.sine(0.5, 0.25, 10.0))
    dt = stable_dt(s, ARRHENIUS, K1, 0.45)
    assert dt <= 0.45 * g.dx + 1e-15
    assert dt <= 0.1 * K1.gamma
    zero = make_state(g, np.full(400, 0.5), K1)  # F_u = 0 everywhere
    assert stable_dt(zero, ARRHENIUS, K1, 0.45) == pytest.approx(0.45 * g.dx)


def test_short_kernel_caps_dt():
    g = periodic(100, length=100.0)
    k = KernelSpec.constant(0.05)
    s = make_state(g, np.full(100, 0.2), k)
    assert stable_dt(s, ARRHENIUS, k, 0.45) <= 0.005 + 1e-15


@pytest.mark.parametrize("cfl", [0.0, -0.1, 0.95])
def test_bad_cfl(cfl):
    s = make_state(periodic(50), np.full(50, 0.3), K1)
    with pytest.raises(DomainError):
        step(s, ARRHENIUS, K1, cfl=cfl)


def test_nonfinite_state_raises_with_last_state():
    s = make_state(periodic(50), np.full(50, 0.3), K1)
    bad = s.__class__(**{**s.__dict__, "u": np.full(50, np.nan)})
    with pytest.raises(NumericDivergence) as exc:
        step(bad, ARRHENIUS, K1)
    assert exc.value.last_state is bad


def test_overshoot_raises():
    # a uniform overshoot persists; an isolated spike would be diffused back inside
    s = make_state(periodic(50), np.full(50, 0.3), K1)
    bad = s.__class__(**{**s.__dict__, "u": np.full(50, 1.2)})
    with pytest.raises(NumericDivergence, match="maximum principle"):
        step(bad, ARRHENIUS, K1)


def test_make_state_validation():
    with pytest.raises(DomainError):
        make_state(periodic(50), np.zeros(49), K1)
    with pytest.raises(DomainError):
        make_state(periodic(50), np.full(50, np.inf), K1)


# --- runs ----------------------------------------------------------------------

def test_constant_run_no_blowup():
    s0 = make_state(periodic(200), np.full(200, 0.7), K1)
    s, ev, tr, _ = run(s0, ARRHENIUS, K1, 10.0)
    assert not ev.detected and ev.t_blowup is None
    assert ev.criterion is Criterion.NONE
    np.testing.assert_allclose(s.u, 0.7, atol=1e-13)
    assert s.t == 10.0
    arr = tr.as_array()
    assert np.all(arr[:, 1] == 0) and np.all(arr[:, 2] == 0)


def test_rejects_past_final_time():
    s0 = make_state(periodic(50), np.full(50, 0.3), K1)
    with pytest.raises(DomainError):
        run(s0, ARRHENIUS, K1, 0.0)


def test_above_threshold_front_blows_up():
    g = front_grid(800)
    s0 = start(g, ic.tanh_front(0.2, 0.8, 2.0))
    _, ev, _, _ = run(s0, ARRHENIUS, K1, 20.0)
    assert ev.detected and ev.criterion is Criterion.SLOPE_CEILING
    assert ev.peak_slope >= DetectorConfig().ceiling(s0.max_abs_slope, g.dx)
    assert 0 < ev.t_blowup < 20.0


def test_full_ramp_blows_up():
    g = Grid1D.uniform(800, -4.0, 8.0, Boundary.CONSTANT_EXTENSION)
    _, ev, _, _ = run(start(g, ic.full_ramp(-1.0, 1.0)), ARRHENIUS, K1, 20.0)
    assert ev.detected


def test_invariants_along_run():
    g = periodic(400)
    s0 = start(g, ic.random_smooth(seed=11, period=10.0, amplitude=0.4))
    s, ev, tr, _ = run(s0, ARRHENIUS, K1, 2.0, detector=DetectorConfig(enabled=False))
    arr = tr.as_array()
    assert arr[:, 4].min() >= -1e-10 and arr[:, 5].max() <= 1 + 1e-10
    assert np.all(arr[:, 1] >= 0) and np.all(arr[:, 2] <= 0)


def test_slope_trace_jumps_are_bounded():
    g = periodic(800)
    s0 = start(g, ic.sine(0.5, 0.2, 10.0))
    _, _, tr, _ = run(s0, ARRHENIUS, K1, 1.0)
    arr = tr.as_array()
    dt = np.diff(arr[:, 0])
    jump = np.maximum(np.abs(np.diff(arr[:, 1])), np.abs(np.diff(arr[:, 2])))
    growth = 1 + arr[:-1, 1] ** 2 + arr[:-1, 2] ** 2
    assert np.all(jump <= 10 * dt * growth)


def test_snapshots_land_on_requested_times():
    g = periodic(200)
    s0 = start(g, ic.sine(0.5, 0.2, 10.0))
    s, _, _, snaps = run(s0, ARRHENIUS, K1, 1.0, snapshot_times=(0.0, 0.25, 0.5, 1.0))
    assert [sn.t for sn in snaps] == [0.0, 0.25, 0.5, 1.0]
    np.testing.assert_array_equal(snaps[-1].u, s.u)


def test_trace_stride():
    g = periodic(200)
    p = ic.sine(0.5, 0.2, 10.0)
    _, _, tr, _ = run(start(g, p), ARRHENIUS, K1, 0.5, trace_stride=5)
    _, _, full, _ = run(start(g, p), ARRHENIUS, K1, 0.5)
    assert len(tr.t) < len(full.t) / 3
    assert tr.t[-1] == full.t[-1] == 0.5


def test_detector_ceiling_rules():
    d = DetectorConfig()
    assert d.ceiling(1.0, 1e-6) == 1e3
    assert d.ceiling(50.0, 1e-6) == 5e3
    assert d.ceiling(1.0, 0.01) == pytest.approx(5.0)
    assert DetectorConfig(slope_ceiling=42.0).ceiling(1.0, 0.01) == 42.0
    assert DetectorConfig(grid_fraction=None).ceiling(1.0, 0.01) == 1e3


def test_steep_but_stationary_profile_not_flagged():
    # a falling front rarefies: it sits above the ceiling but never steepens
    g = front_grid(400)
    s0 = start(g, ic.tanh_front(0.8, 0.2, -0.3))
    det = DetectorConfig(slope_ceiling=0.1)
    _, ev, _, _ = run(s0, ARRHENIUS, K1, 0.5, detector=det)
    assert not ev.detected


# --- convergence and limits -------------------------------------------------------

def _solve(n, order, t=1.0):
    g = periodic(n)
    s0 = start(g, ic.sine(0.5, 0.2, 10.0))
    s, _, _, _ = run(s0, ARRHENIUS, K1, t, order=order, detector=DetectorConfig(enabled=False))
    return s.u


@pytest.mark.parametrize("order, min_rate", [(1, 0.8), (2, 1.5)])
def test_smooth_convergence(order, min_rate):
    ref = _solve(3200, order)
    errs = []
    for n in (100, 200, 400):
        errs.append(np.abs(_solve(n, order) - ref.reshape(n, -1).mean(axis=1)).sum() * 10 / n)
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates >= min_rate), rates


def test_scale_invariance():
    # u solves the gamma = 1 problem iff u(t/gamma, x/gamma) solves the gamma problem
    gam = 2.5
    p1 = ic.sine(0.5, 0.2, 10.0)
    p2 = ic.sine(0.5, 0.2, 10.0 * gam)
    g1, g2 = periodic(400, 10.0), periodic(400, 10.0 * gam)
    k2 = KernelSpec.constant(gam)
    s1, _, _, _ = run(start(g1, p1), ARRHENIUS, K1, 1.0)
    s2, _, _, _ = run(start(g2, p2, k2), ARRHENIUS, k2, gam)
    np.testing.assert_allclose(s2.u, s1.u, atol=1e-12)
    assert s2.M * gam == pytest.approx(s1.M, rel=1e-9)


def test_lwr_blowup_time_matches_characteristics():
    g = Grid1D.uniform(1600, 0.0, 1.0, Boundary.PERIODIC)
    p = ic.sine(0.5, 0.25, 1.0)
    s0 = start(g, p, KernelSpec.constant(0.1))
    _, ev, _, _ = run(s0, LWR, KernelSpec.constant(0.1), 2.0)
    t_star = 1 / (2 * p.sup_slope)
    assert ev.detected
    assert abs(ev.t_blowup - t_star) <= 0.1 * t_star


def test_slope_dominates_riccati_comparison():
    # M' >= (2/e)(M - lambda)^2 while M is above lambda; compare on the resolved part
    g = front_grid(800)
    s0 = start(g, ic.tanh_front(0.2, 0.8, 3.0))
    _, _, tr, _ = run(s0, ARRHENIUS, K1, 3.0, detector=DetectorConfig(enabled=False))
    arr = tr.as_array()
    t, M = arr[:, 0], arr[:, 1]
    lam = threshold_constant(1.0, 0.0)
    prob = RiccatiProblem(2 / math.e, lam, lam, M[0], t_max=t[-1])
    resolved = np.cumprod(M <= 0.2 / g.dx).astype(bool)
    rep = riccati_compare(prob, t[resolved], M[resolved])
    assert rep.ok, rep.violations[:3]
    assert rep.n_points > 100


# --- estimator ---------------------------------------------------------------------

def test_estimator_api():
    g = front_grid(400)
    u0 = ic.cell_averages(ic.tanh_front(0.2, 0.8, 2.0), g)
    est = NonlocalSolver(kernel=K1, grid=g, t_final=20.0).fit(u0)
    assert est.predict()[0] == 1
    assert est.transform().shape == (1, 400)
    assert est.get_params()["t_final"] == 20.0
    with pytest.raises(DomainError):
        NonlocalSolver(t_final=1.0).fit(u0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_data_keeps_bounds_and_mass(seed):
    g = periodic(200)
    s0 = start(g, ic.random_smooth(seed=seed, period=10.0, amplitude=0.45))
    s, _, tr, _ = run(s0, ARRHENIUS, K1, 1.0, max_steps=300,
                      detector=DetectorConfig(enabled=False))
    arr = tr.as_array()
    assert arr[:, 4].min() >= -1e-10 and arr[:, 5].max() <= 1 + 1e-10
    assert abs(s.mass - s0.mass) <= 1e-12 * s0.mass
