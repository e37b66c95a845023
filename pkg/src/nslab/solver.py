"""Finite-volume integration of u_t + (F(u, K*u))_x = 0 with blow-up detection.

The interface flux is local Lax-Friedrichs with the nonlocal argument frozen
per interface, ``ubar_{i+1/2} = (ubar_i + ubar_{i+1}) / 2``.  Because
``F(0, .) = F(m, .) = 0`` this keeps the densities inside ``[0, m]`` under the
usual CFL restriction.
"""
from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from nslab.exceptions import DomainError, NumericDivergence
from nslab.flux import FluxModel
from nslab.kernels import Grid1D, KernelSpec, centered_slope, convolve, nonlocal_gradient

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-10
MAX_CFL = 0.9


class Criterion(str, enum.Enum):
    SLOPE_CEILING = "SlopeCeiling"
    REFINEMENT_DIVERGENCE = "RefinementDivergence"
    NONE = "None"


@dataclass(frozen=True)
class SimState:
    grid: Grid1D
    u: np.ndarray
    t: float
    ubar: np.ndarray
    ubar_x: np.ndarray
    ux: np.ndarray
    M: float
    N: float
    step_count: int = 0
    # ubar including one ghost cell per side, reused by the next step
    ubar_ext: np.ndarray | None = field(default=None, repr=False, compare=False)
    kernel: KernelSpec | None = field(default=None, repr=False, compare=False)

    def cached_ubar(self, kernel: KernelSpec):
        return self.ubar_ext if kernel == self.kernel else None

    @property
    def mass(self) -> float:
        return float(np.sum(self.u) * self.grid.dx)

    @property
    def max_abs_slope(self) -> float:
        return max(self.M, -self.N)


@dataclass
class BlowupEvent:
    detected: bool = False
    t_blowup: float | None = None
    x_location: float | None = None
    peak_slope: float = 0.0
    criterion: Criterion = Criterion.NONE

    def to_dict(self) -> dict:
        return {
            "detected": self.detected,
            "t_blowup": self.t_blowup,
            "x_location": self.x_location,
            "peak_slope": self.peak_slope,
            "criterion": self.criterion.value,
        }


@dataclass
class DetectorConfig:
    """Slope-ceiling detector.

    The ceiling is ``slope_ceiling`` when given, otherwise
    ``max(factor * s0, floor)`` with ``s0`` the initial max |u_x|, capped at
    ``grid_fraction / dx`` so that it stays reachable on the grid at hand.
    Detection also requires max |u_x| to exceed its value ``growth_window``
    steps earlier.
    """

    slope_ceiling: float | None = None
    growth_window: int = 20
    factor: float = 100.0
    floor: float = 1e3
    grid_fraction: float | None = 0.05
    enabled: bool = True

    def ceiling(self, initial_slope: float, dx: float) -> float:
        if self.slope_ceiling is not None:
            return float(self.slope_ceiling)
        c = max(self.factor * initial_slope, self.floor)
        if self.grid_fraction is not None:
            c = min(c, self.grid_fraction / dx)
        return c


@dataclass
class Trace:
    t: list = field(default_factory=list)
    M: list = field(default_factory=list)
    N: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    umin: list = field(default_factory=list)
    umax: list = field(default_factory=list)

    COLUMNS = ("t", "M", "N", "mass", "umin", "umax")

    def record(self, s: SimState) -> None:
        self.t.append(s.t)
        self.M.append(s.M)
        self.N.append(s.N)
        self.mass.append(s.mass)
        self.umin.append(float(s.u.min()))
        self.umax.append(float(s.u.max()))

    def as_array(self) -> np.ndarray:
        return np.column_stack([getattr(self, c) for c in self.COLUMNS])


@dataclass
class Snapshot:
    t: float
    x: np.ndarray
    u: np.ndarray
    ubar: np.ndarray
    ux: np.ndarray


def make_state(grid: Grid1D, u0, kernel: KernelSpec, t: float = 0.0) -> SimState:
    u = np.array(u0, dtype=float)
    if u.shape != (grid.n_cells,):
        raise DomainError(f"initial data must have {grid.n_cells} cells, got {u.shape}")
    if not np.all(np.isfinite(u)):
        raise DomainError("initial data must be finite")
    grid.check_kernel(kernel)
    return _refresh(grid, u, kernel, t, 0)


def _refresh(grid: Grid1D, u: np.ndarray, kernel: KernelSpec, t: float, steps: int) -> SimState:
    ux = centered_slope(grid, u)
    ubar_ext = convolve(kernel, grid, u, extra=1)
    return SimState(grid, u, t, ubar_ext[1:-1], nonlocal_gradient(kernel, grid, u),
                    ux, float(ux.max()), float(ux.min()), steps, ubar_ext, kernel)


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def _interface_states(grid: Grid1D, u: np.ndarray, order: int):
    """Left/right states at the n + 1 interfaces x_{i-1/2}, i = 0..n."""
    ext = grid.pad(u, 2, 2)
    if order == 1:
        return ext[1:-2], ext[2:-1]
    d = np.diff(ext)
    sigma = _minmod(d[:-1], d[1:])  # slopes for ext[1:-1]
    rec = ext[1:-1]
    left = rec[:-1] + 0.5 * sigma[:-1]
    right = rec[1:] - 0.5 * sigma[1:]
    return left, right


def _numerical_flux(f: FluxModel, kernel: KernelSpec, grid: Grid1D, u: np.ndarray, order: int,
                    ubar=None):
    """Interface fluxes at x_{i-1/2}, i = 0..n, and the largest local wave speed."""
    if ubar is None:
        ubar = convolve(kernel, grid, u, extra=1)
    ubar_face = 0.5 * (ubar[:-1] + ubar[1:])
    uL, uR = _interface_states(grid, u, order)
    alpha = np.maximum(np.abs(f.F_u(uL, ubar_face)), np.abs(f.F_u(uR, ubar_face)))
    flux = 0.5 * (f.F(uL, ubar_face) + f.F(uR, ubar_face)) - 0.5 * alpha * (uR - uL)
    if grid.periodic:
        # identical interface on both ends so the update telescopes exactly
        flux[-1] = flux[0]
    return flux, float(alpha.max())


def _rhs(f, kernel, grid, u, order, ubar=None):
    flux, amax = _numerical_flux(f, kernel, grid, u, order, ubar)
    return -(flux[1:] - flux[:-1]) / grid.dx, amax


def stable_dt(s: SimState, f: FluxModel, kernel: KernelSpec, cfl: float, order: int = 1) -> float:
    _, amax = _numerical_flux(f, kernel, s.grid, s.u, order, s.cached_ubar(kernel))
    return _dt_from_speed(amax, s.grid.dx, kernel.gamma, cfl)


def _dt_from_speed(amax: float, dx: float, gamma: float, cfl: float) -> float:
    dt = cfl * dx / amax if amax > 0 else cfl * dx
    return min(dt, cfl * dx, 0.1 * gamma)


def _check_cfl(cfl):
    if not 0 < cfl <= MAX_CFL:
        raise DomainError(f"cfl must lie in (0, {MAX_CFL}], got {cfl}")


def step(s: SimState, f: FluxModel, kernel: KernelSpec, cfl: float = 0.45, order: int = 1,
         dt: float | None = None, check_bounds: bool = True) -> SimState:
    """Advance one time step (forward Euler for order 1, two-stage SSP RK for order 2)."""
    _check_cfl(cfl)
    grid = s.grid
    L1, amax = _rhs(f, kernel, grid, s.u, order, s.cached_ubar(kernel))
    dt_max = _dt_from_speed(amax, grid.dx, kernel.gamma, cfl)
    dt = dt_max if dt is None else min(dt, dt_max)
    u1 = s.u + dt * L1
    if order == 2:
        L2, _ = _rhs(f, kernel, grid, u1, order)
        u1 = 0.5 * (s.u + u1 + dt * L2)
    elif order != 1:
        raise DomainError(f"order must be 1 or 2, got {order}")
    if not np.all(np.isfinite(u1)):
        raise NumericDivergence(f"non-finite density at t={s.t + dt:.6g}", last_state=s)
    if check_bounds and (u1.min() < -BOUND_TOL or u1.max() > f.m + BOUND_TOL):
        raise NumericDivergence(
            f"maximum principle violated at t={s.t + dt:.6g}: "
            f"u in [{u1.min():.3e}, {u1.max():.3e}]", last_state=s)
    return _refresh(grid, u1, kernel, s.t + dt, s.step_count + 1)


def run(s0: SimState, f: FluxModel, kernel: KernelSpec, t_final: float, cfl: float = 0.45,
        detector: DetectorConfig | None = None, order: int = 1, trace_stride: int = 1,
        snapshot_times=(), stop_on_detect: bool = True, max_steps: int | None = None,
        check_bounds: bool | None = None):
    """Advance to ``t_final`` or until gradient blow-up is detected.

    Returns ``(state, event, trace, snapshots)``.  With ``stop_on_detect=False``
    the run continues to ``t_final`` and the event records the first detection.
    """
    if not t_final > s0.t:
        raise DomainError(f"t_final={t_final} must exceed the start time {s0.t}")
    _check_cfl(cfl)
    detector = detector or DetectorConfig()
    if check_bounds is None:
        check_bounds = bool(s0.u.min() >= -BOUND_TOL and s0.u.max() <= f.m + BOUND_TOL)
    ceiling = detector.ceiling(s0.max_abs_slope, s0.grid.dx)
    window = deque(maxlen=detector.growth_window + 1)
    window.append(s0.max_abs_slope)

    pending = sorted(t for t in snapshot_times if s0.t <= t <= t_final)
    snapshots = []
    trace = Trace()
    trace.record(s0)
    event = BlowupEvent()
    s = s0
    while s.t < t_final:
        if max_steps is not None and s.step_count - s0.step_count >= max_steps:
            break
        while pending and pending[0] <= s.t:
            snapshots.append(_snapshot(s))
            pending.pop(0)
        target = min(t_final, pending[0]) if pending else t_final
        s = step(s, f, kernel, cfl, order, dt=target - s.t, check_bounds=check_bounds)
        if math.isclose(s.t, target, rel_tol=0, abs_tol=1e-14 * max(1.0, abs(target))):
            s = replace(s, t=target)
        if s.step_count % trace_stride == 0:
            trace.record(s)
        slope = s.max_abs_slope
        window.append(slope)
        if detector.enabled and not event.detected and slope >= ceiling and _growing(window):
            i = int(np.argmax(np.abs(s.ux)))
            event = BlowupEvent(True, s.t, float(s.grid.centers[i]), slope, Criterion.SLOPE_CEILING)
            logger.info("blow-up detected at t=%.6g, x=%.4g, slope=%.4g",
                        s.t, event.x_location, slope)
            if stop_on_detect:
                break
    while pending and pending[0] <= s.t:
        snapshots.append(_snapshot(s))
        pending.pop(0)
    if trace.t[-1] != s.t:
        trace.record(s)
    if not event.detected:
        event.peak_slope = max(max(trace.M), -min(trace.N))
    return s, event, trace, snapshots


def _growing(window) -> bool:
    # net growth across the window; a captured front's discrete max slope
    # oscillates as it crosses cells, so step-by-step monotonicity is too strict
    return len(window) == window.maxlen and window[-1] > window[0]


def _snapshot(s: SimState) -> Snapshot:
    return Snapshot(s.t, s.grid.centers, s.u.copy(), s.ubar.copy(), s.ux.copy())


class NonlocalSolver(BaseEstimator):
    """Estimator-style front end: ``fit(u0)`` runs one simulation.

    Fitted attributes: ``state_``, ``event_``, ``trace_`` and ``snapshots_``.
    ``predict`` returns 1 if blow-up was detected, per fitted run.
    """

    def __init__(self, flux=None, kernel=None, grid=None, t_final=1.0, cfl=0.45, order=1,
                 detector=None, trace_stride=1, stop_on_detect=True):
        self.flux = flux
        self.kernel = kernel
        self.grid = grid
        self.t_final = t_final
        self.cfl = cfl
        self.order = order
        self.detector = detector
        self.trace_stride = trace_stride
        self.stop_on_detect = stop_on_detect

    def fit(self, u0, y=None, snapshot_times=()):
        from nslab.flux import ARRHENIUS
        flux = self.flux or ARRHENIUS
        if self.kernel is None or self.grid is None:
            raise DomainError("NonlocalSolver needs both a kernel and a grid")
        s0 = make_state(self.grid, u0, self.kernel)
        self.state_, self.event_, self.trace_, self.snapshots_ = run(
            s0, flux, self.kernel, self.t_final, self.cfl, self.detector, self.order,
            self.trace_stride, snapshot_times, self.stop_on_detect)
        return self

    def predict(self, X=None):
        from nslab.validation import check_is_fitted
        check_is_fitted(self, "event_")
        return np.array([int(self.event_.detected)])

    def transform(self, X=None):
        """Final density field, as a single-row array."""
        from nslab.validation import check_is_fitted
        check_is_fitted(self, "state_")
        return self.state_.u[None, :]
