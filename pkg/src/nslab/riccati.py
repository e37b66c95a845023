"""Riccati comparison equations dA/dt = a(t) (A - b1(t)) (A - b2(t))."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.integrate import solve_ivp

from nslab.exceptions import DomainError, IntegrationError

Coefficient = Union[float, Callable[[float], float]]

BLOWUP_CEILING = 1e9


def _as_function(c: Coefficient) -> Callable[[float], float]:
    if callable(c):
        return c
    value = float(c)
    return lambda t: value


@dataclass
class RiccatiProblem:
    a: Coefficient
    b1: Coefficient
    b2: Coefficient
    A0: float
    t_max: float
    n_check: int = 1001

    def __post_init__(self):
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise DomainError(f"t_max must be positive and finite, got {self.t_max}")
        ts = np.linspace(0.0, self.t_max, self.n_check)
        a, b1, b2 = self.coefficients()
        av = np.array([a(t) for t in ts])
        b1v = np.array([b1(t) for t in ts])
        b2v = np.array([b2(t) for t in ts])
        if not np.all(np.isfinite(np.concatenate([av, b1v, b2v]))):
            raise DomainError("coefficients must be bounded on [0, t_max]")
        if np.any(av <= 0):
            raise DomainError("coefficient a(t) must be positive")
        if np.any(b1v > b2v):
            raise DomainError("coefficients must satisfy b1(t) <= b2(t)")
        self._b1_min = float(b1v.min())
        self._b2_max = float(b2v.max())

    def coefficients(self):
        return _as_function(self.a), _as_function(self.b1), _as_function(self.b2)

    @property
    def b1_min(self) -> float:
        return self._b1_min

    @property
    def b2_max(self) -> float:
        return self._b2_max

    def rhs(self, t, A):
        a, b1, b2 = self.coefficients()
        return a(t) * (A - b1(t)) * (A - b2(t))


@dataclass
class RiccatiSolution:
    t: np.ndarray
    A: np.ndarray
    t_blowup: float | None = None
    dense: Callable | None = field(default=None, repr=False)

    @property
    def blew_up(self) -> bool:
        return self.t_blowup is not None


def closed_form_blowup_time(a: float, b1: float, b2: float, A0: float) -> float:
    """Blow-up time of the constant-coefficient problem when A0 > b2 > b1."""
    if not (A0 > b2 and b2 > b1 and a > 0):
        raise DomainError("closed form needs a > 0 and A0 > b2 > b1")
    return math.log((A0 - b1) / (A0 - b2)) / (a * (b2 - b1))


def extrapolate_blowup(t: np.ndarray, A: np.ndarray) -> float:
    """Fit A ~ c / (t* - t) on the last decade of growth and return t*.

    Uses a least-squares line through 1/A, whose root is t*.
    """
    t, A = np.asarray(t, float), np.asarray(A, float)
    top = abs(A[-1])
    tail = np.abs(A) >= top / 10
    # the tail must be the contiguous end of the trace
    start = len(A) - int(np.argmin(tail[::-1])) if not tail.all() else 0
    tt, inv = t[start:], 1.0 / A[start:]
    if len(tt) < 2:
        return float(t[-1])
    slope, intercept = np.polyfit(tt - tt[-1], inv, 1)
    if slope == 0:
        return float(t[-1])
    return float(tt[-1] - intercept / slope)


def riccati_solve(p: RiccatiProblem, rtol: float = 1e-10, atol: float = 1e-12,
                  ceiling: float = BLOWUP_CEILING) -> RiccatiSolution:
    """Integrate with an adaptive RK4(5) scheme until t_max or |A| >= ceiling."""

    def hit_ceiling(t, y):
        return abs(y[0]) - ceiling

    hit_ceiling.terminal = True
    hit_ceiling.direction = 1

    sol = solve_ivp(lambda t, y: [p.rhs(t, y[0])], (0.0, p.t_max), [p.A0], method="RK45",
                    rtol=rtol, atol=atol, events=hit_ceiling, dense_output=True)
    if sol.status == -1:
        raise IntegrationError(f"Riccati integration failed: {sol.message}")
    t, A = sol.t, sol.y[0]
    if sol.status == 1 and len(sol.t_events[0]):
        t_star = extrapolate_blowup(t, A)
        return RiccatiSolution(t, A, t_blowup=t_star, dense=sol.sol)
    return RiccatiSolution(t, A, dense=sol.sol)


@dataclass
class ComparisonReport:
    n_points: int
    violations: list[tuple[float, float, float]]  # (t, B, A)
    t_end: float

    @property
    def ok(self) -> bool:
        return not self.violations


def riccati_compare(p: RiccatiProblem, t_B, B, atol: float = 1e-6,
                    rtol: float = 1e-3) -> ComparisonReport:
    """Check B(t) >= A(t) on the common time range, A solving the equality problem."""
    t_B, B = np.asarray(t_B, float), np.asarray(B, float)
    if B[0] < p.A0 - atol:
        raise DomainError(f"comparison needs B(0) >= A0, got {B[0]} < {p.A0}")
    sol = riccati_solve(p)
    t_end = sol.t[-1] if sol.t_blowup is None else sol.t[-1]
    mask = t_B <= min(t_end, p.t_max)
    A = sol.dense(t_B[mask])[0]
    bad = B[mask] < A - (atol + rtol * np.abs(A))
    viol = [(float(t), float(b), float(a)) for t, b, a in zip(t_B[mask][bad], B[mask][bad], A[bad])]
    return ComparisonReport(int(mask.sum()), viol, float(t_end))
