"""Flux functions F(u, ubar) with analytic partials up to second order."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from nslab.exceptions import NumericError

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

OVERSHOOT_TOL = 1e-8

PARTIALS = ("F", "F_u", "F_ub", "F_uu", "F_uub", "F_ubub")


@dataclass(frozen=True)
class FluxModel:
    """A flux ``F(u, ubar)`` on the density range ``[0, m]``.

    Evaluators take broadcastable arrays ``(u, ubar)``; ``ub`` in a name stands
    for a derivative in ``ubar``.
    """

    name: str
    m: float
    F: Evaluator
    F_u: Evaluator
    F_ub: Evaluator
    F_uu: Evaluator
    F_uub: Evaluator
    F_ubub: Evaluator
    h2_checked: bool = False
    # bound on |F_u| over [0, m] given the minimum of ubar, for the CFL step
    wavespeed_bound: Callable[[float], float] | None = field(default=None, compare=False)

    def partials(self, u, ubar) -> dict[str, np.ndarray]:
        return {name: getattr(self, name)(u, ubar) for name in PARTIALS}


def _arrhenius(m: float = 1.0) -> FluxModel:
    # u (m - u) e^{-ubar}; m = 1 is the normalised traffic model
    return FluxModel(
        name="arrhenius",
        m=m,
        F=lambda u, b: u * (m - u) * np.exp(-b),
        F_u=lambda u, b: (m - 2.0 * u) * np.exp(-b),
        F_ub=lambda u, b: -u * (m - u) * np.exp(-b),
        F_uu=lambda u, b: -2.0 * np.exp(-b) * np.ones_like(np.asarray(u, dtype=float)),
        F_uub=lambda u, b: -(m - 2.0 * u) * np.exp(-b),
        F_ubub=lambda u, b: u * (m - u) * np.exp(-b),
        wavespeed_bound=lambda ubar_min: m * math.exp(-ubar_min),
    )


def _lwr(m: float = 1.0) -> FluxModel:
    def zero(u, b):
        return np.zeros(np.broadcast(np.asarray(u), np.asarray(b)).shape)

    return FluxModel(
        name="lwr",
        m=m,
        F=lambda u, b: u * (m - u) + zero(u, b),
        F_u=lambda u, b: (m - 2.0 * u) + zero(u, b),
        F_ub=zero,
        F_uu=lambda u, b: -2.0 + zero(u, b),
        F_uub=zero,
        F_ubub=zero,
        wavespeed_bound=lambda ubar_min: m,
    )


_REGISTRY: dict[str, Callable[..., FluxModel]] = {
    "arrhenius": _arrhenius,
    "lwr": _lwr,
}

ARRHENIUS = _arrhenius()
LWR = _lwr()


def register_flux(name: str, factory: Callable[..., FluxModel]) -> None:
    """Make a programmatic flux selectable by name (e.g. from a config file)."""
    _REGISTRY[name] = factory


def get_flux(name: str, m: float | None = None) -> FluxModel:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown flux {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory() if m is None else factory(float(m))


def available_fluxes() -> list[str]:
    return sorted(_REGISTRY)


def flux_and_wavespeed(f: FluxModel, u: float, ubar: float) -> tuple[float, float]:
    """Return ``(F(u, ubar), F_u(u, ubar))`` for a single state."""
    if not (math.isfinite(u) and math.isfinite(ubar)):
        raise NumericError(f"non-finite flux argument u={u}, ubar={ubar}")
    if u < -OVERSHOOT_TOL or u > f.m + OVERSHOOT_TOL:
        raise NumericError(f"density u={u} outside [0, {f.m}]")
    return float(f.F(u, ubar)), float(f.F_u(u, ubar))


# (partial, its antiderivative level, variable differentiated)
_FD_PAIRS = (
    ("F_u", "F", "u"),
    ("F_ub", "F", "ub"),
    ("F_uu", "F_u", "u"),
    ("F_uub", "F_u", "ub"),
    ("F_ubub", "F_ub", "ub"),
)


def check_partials(f: FluxModel, ubar_bound: float = 1.0, n_points: int = 100,
                   rtol: float = 1e-6, seed: int = 0) -> dict[str, float]:
    """Compare each partial with central differences of the level below.

    Returns the worst relative error per partial, measured as
    ``|analytic - fd| / max(1, |analytic|)`` at random points of
    ``[0, m] x [-ubar_bound, ubar_bound]``.
    """
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, f.m, n_points)
    b = rng.uniform(-ubar_bound, ubar_bound, n_points)
    h = 1e-5
    worst = {}
    for name, base, var in _FD_PAIRS:
        g = getattr(f, base)
        if var == "u":
            fd = (g(u + h, b) - g(u - h, b)) / (2 * h)
        else:
            fd = (g(u, b + h) - g(u, b - h)) / (2 * h)
        exact = getattr(f, name)(u, b)
        err = np.abs(exact - fd) / np.maximum(1.0, np.abs(exact))
        worst[name] = float(np.max(err))
    return worst


@dataclass
class ClauseResult:
    clause: str
    status: str  # "pass", "weak" or "fail"
    detail: str = ""


@dataclass
class ValidationReport:
    model: str
    clauses: list[ClauseResult]

    @property
    def status(self) -> str:
        states = {c.status for c in self.clauses}
        if "fail" in states:
            return "fail"
        return "weak" if "weak" in states else "pass"

    @property
    def ok(self) -> bool:
        """True for pass or weak-pass."""
        return self.status != "fail"

    def __getitem__(self, clause: str) -> str:
        for c in self.clauses:
            if c.clause == clause:
                return c.status
        raise KeyError(clause)


def _sign_clause(name, interior, closed, sign):
    # sign = -1 for "< 0", +1 for "> 0"
    strict_in = np.all(sign * interior > 0)
    weak_in = np.all(sign * interior >= 0)
    strict_closed = np.all(sign * closed > 0)
    if strict_in and strict_closed:
        return ClauseResult(name, "pass")
    if strict_in:
        return ClauseResult(name, "weak", "degenerate at u in {0, m}")
    if weak_in:
        return ClauseResult(name, "fail", "vanishes inside (0, m)")
    return ClauseResult(name, "fail", "wrong sign inside (0, m)")


def validate_h2(f: FluxModel, u_samples: int = 201,
                ubar_range: tuple[float, float] = (-1.0, 1.0),
                ubar_samples: int = 21) -> ValidationReport:
    """Check F(0,.) = F(m,.) = 0 and the signs F_uu < 0, F_ubub > 0, F_ub < 0."""
    b = np.linspace(ubar_range[0], ubar_range[1], ubar_samples)
    u_open = np.linspace(0.0, f.m, u_samples + 2)[1:-1]
    U, B = np.meshgrid(u_open, b, indexing="ij")
    Ue = np.array([0.0, f.m])[:, None] * np.ones_like(b)[None, :]
    Be = np.broadcast_to(b, Ue.shape)

    clauses = []
    end_vals = np.abs(f.F(Ue, Be))
    if np.all(end_vals <= 1e-12):
        clauses.append(ClauseResult("F(0)=F(m)=0", "pass"))
    else:
        clauses.append(ClauseResult("F(0)=F(m)=0", "fail", f"max |F| = {end_vals.max():.3g}"))
    for name, attr, sign in (("F_uu<0", "F_uu", -1), ("F_ubub>0", "F_ubub", 1),
                             ("F_ub<0", "F_ub", -1)):
        g = getattr(f, attr)
        clauses.append(_sign_clause(name, np.asarray(g(U, B)), np.asarray(g(Ue, Be)), sign))
    return ValidationReport(f.name, clauses)
