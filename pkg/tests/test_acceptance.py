"""Acceptance suite: one PASS/FAIL line per criterion, with its runtime budget.

The lines are printed in the terminal summary of ``pytest tests/test_acceptance.py``.
"""
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from nslab import harness, presets
from nslab import initial_data as ic
from nslab.flux import ARRHENIUS
from nslab.kernels import Boundary, Grid1D, KernelSpec
from nslab.riccati import RiccatiProblem, closed_form_blowup_time, riccati_solve
from nslab.solver import DetectorConfig, make_state, run, step
from nslab.thresholds import (general_lambda, n1_scaled, omega_box, omega_box_maxima,
                              sharp_v_bound, threshold_constant, threshold_linear)

RESULTS = []


@contextmanager
def criterion(number, title, budget_s):
    """Time the block, print one PASS/FAIL line and re-raise any failure."""
    t0 = time.perf_counter()
    detail = {}
    err = None
    try:
        yield detail
    except AssertionError as exc:
        err = exc
    elapsed = time.perf_counter() - t0
    if err is None and elapsed > budget_s:
        err = AssertionError(f"runtime {elapsed:.1f}s exceeds budget {budget_s}s")
    status = "PASS" if err is None else "FAIL"
    info = ", ".join(f"{k}={v}" for k, v in detail.items())
    line = f"[{status}] criterion {number:>2}: {title} ({elapsed:.2f}s / {budget_s}s) {info}"
    if err is not None:
        line += f" -- {err}"
    RESULTS.append(line)
    if err is not None:
        raise err


def test_c01_threshold_formulas():
    with criterion(1, "closed-form thresholds", 1.0) as d:
        c, l = threshold_constant(1, 0), threshold_linear(1, 0)
        d["constant"], d["linear"] = f"{c:.6f}", f"{l:.6f}"
        assert abs(c - 1.207107) <= 1e-6
        assert abs(l - 2.414214) <= 1e-6
        ordered = all(threshold_linear(g, s) > threshold_constant(g, s)
                      for g in np.logspace(-2, 2, 50) for s in np.linspace(-100, 0, 50))
        d["linear>constant on 50x50"] = ordered
        assert ordered


def test_c02_omega_box_maxima():
    with criterion(2, "Omega-box maxima at 2001^2", 10.0) as d:
        c1, c2 = omega_box_maxima("constant", 2001)
        l1, _ = omega_box_maxima("linear", 2001)
        d["constant"], d["constant_2nd"], d["linear"] = f"{c1:.6f}", f"{c2:.6f}", f"{l1:.6f}"
        assert abs(c1 - 2.0) <= 1e-3
        assert abs(l1 - 4.0) <= 1e-3
        U, V = omega_box("constant", 2001)
        q = U * (1 - U)
        for nt in (-1.0, -2.0, -5.0, -20.0):
            assert np.all(8 * q * (V * V - nt) <= 2 * (1 - nt) + 1e-12), nt


def test_c03_n1_lower_bounds():
    with criterion(3, "N1 lower bounds on Omega", 10.0) as d:
        worst = {}
        for kind, bound in (("constant", 1.0), ("linear", 2.0)):
            U, V = omega_box(kind, 2001)
            n1 = n1_scaled(U, V)
            for g in (0.1, 1.0, 7.5):
                assert (n1 / g).min() >= -bound / g - 1e-9, (kind, g)
            worst[kind] = float(n1.min())
        d["min gamma*N1"] = {k: round(v, 6) for k, v in worst.items()}


def test_c04_general_lambda_specialisation():
    with criterion(4, "general lambda vs closed form", 30.0) as d:
        k = KernelSpec.constant(1.0)
        rep = general_lambda(ARRHENIUS, k, -1.0, resolution=2001, v_bound=sharp_v_bound(k))
        closed = threshold_constant(1.0, -1.0)
        d["lambda"], d["closed"] = f"{rep.threshold:.6f}", f"{closed:.6f}"
        d["ratio"] = f"{rep.threshold / closed:.4f}"
        d["maximizer"] = tuple(round(x, 4) for x in rep.maximizer)
        assert rep.threshold <= closed + 1e-9
        assert rep.threshold >= 0.8 * closed


def test_c05_riccati_oracle():
    with criterion(5, "Riccati blow-up time oracle", 5.0) as d:
        rng = np.random.default_rng(20240501)
        worst = 0.0
        for _ in range(20):
            a = rng.uniform(0.1, 5.0)
            b1 = rng.uniform(-5.0, 5.0)
            b2 = b1 + rng.uniform(0.01, 5.0)
            A0 = b2 + rng.uniform(0.01, 5.0)
            exact = closed_form_blowup_time(a, b1, b2, A0)
            sol = riccati_solve(RiccatiProblem(a, b1, b2, A0, t_max=3 * exact + 1))
            assert sol.blew_up
            worst = max(worst, abs(sol.t_blowup - exact) / exact)
        d["worst rel err"] = f"{worst:.2e}"
        assert worst <= 1e-4
        sol = riccati_solve(RiccatiProblem(1.0, -1.0, 1.0, 0.0, t_max=50.0))
        assert not sol.blew_up
        assert sol.A.min() >= min(0.0, -1.0) - 1e-9 and sol.A.max() <= 1.0 + 1e-9


def test_c06_solver_invariants():
    with criterion(6, "solver invariants over 1e4 steps", 60.0) as d:
        g = Grid1D.uniform(800, 0.0, 10.0, Boundary.PERIODIC)
        k = KernelSpec.constant(1.0)
        off = DetectorConfig(enabled=False)
        drift, lo, hi = 0.0, 1.0, 0.0
        for seed in range(10):
            p = ic.random_smooth(seed=seed, modes=5, mean=0.5, amplitude=0.3, period=10.0)
            s0 = make_state(g, ic.cell_averages(p, g), k)
            s, _, tr, _ = run(s0, ARRHENIUS, k, 1e9, detector=off, max_steps=10_000,
                              trace_stride=100)
            assert s.step_count == 10_000
            arr = tr.as_array()
            drift = max(drift, abs(s.mass - s0.mass) / s0.mass)
            lo, hi = min(lo, arr[:, 4].min()), max(hi, arr[:, 5].max())
        d["max mass drift"] = f"{drift:.1e}"
        d["u range"] = f"[{lo:.4f}, {hi:.4f}]"
        assert drift <= 1e-12
        assert lo >= -1e-10 and hi <= 1 + 1e-10
        for c in (0.0, 0.3, 0.7, 1.0):
            s = make_state(g, np.full(800, c), k)
            for _ in range(20):
                s1 = step(s, ARRHENIUS, k)
                assert np.max(np.abs(s1.u - s.u)) <= 1e-14
                s = s1


def test_c07_lwr_limit():
    with criterion(7, "LWR limit blow-up time", 120.0) as d:
        cfg = presets.get_run("lwr_limit")
        assert cfg["grid"]["n_cells"] == 3200
        res = harness.run_single(cfg)
        t_star = 1.0 / (2.0 * res.sup_slope)
        d["t_detect"], d["t_characteristics"] = f"{res.event.t_blowup:.4f}", f"{t_star:.4f}"
        assert res.event.detected
        rel = abs(res.event.t_blowup - t_star) / t_star
        d["rel err"] = f"{rel:.3f}"
        assert rel <= 0.10


def test_c08_constant_kernel_soundness_sweep():
    with criterion(8, "constant-kernel soundness sweep", 600.0) as d:
        sweep = presets.get_sweep("constant_front_sweep")
        assert sweep["fixed"]["grid"]["n_cells"] == 1600
        res = harness.run_sweep(sweep)
        above = [p for p in res.points if p.sup_slope > 1.2072]
        d["points"] = len(res.points)
        d["above"] = len(above)
        d["detected above"] = sum(p.detected for p in above)
        d["soundness"] = res.soundness
        d["failed"] = res.failed
        assert len(res.points) == 20 and not res.failed
        assert all(p.detected for p in above)
        assert res.soundness == 1.0


def test_c09_full_ramp_scenario():
    with criterion(9, "0-to-1 ramp blow-up", 180.0) as d:
        times = {}
        for gamma in (0.5, 1.0, 2.0):
            cfg = presets.get_run("full_ramp")
            cfg["kernel"]["gamma"] = gamma
            res = harness.run_single(cfg)
            assert res.exit_code == harness.EXIT_BLOWUP, gamma
            times[gamma] = round(res.event.t_blowup, 3)
        d["t_blowup"] = times


def test_c10_red_light_dichotomy():
    with criterion(10, "red-light refinement dichotomy", 600.0) as d:
        far = harness.refinement_study(presets.get_run("red_light_gamma1"), levels=3)
        near = harness.refinement_study(presets.get_run("red_light_gamma01"), levels=3)
        d["gamma=1 ratios"] = [round(r, 3) for r in far.ratios]
        d["gamma=0.1 ratios"] = [round(r, 3) for r in near.ratios]
        assert far.diverging, far.ratios
        assert near.converged, near.ratios


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
