"""Blow-up sub-thresholds for look-ahead traffic models.

Closed forms exist for the Arrhenius flux with the constant and linear
potentials.  For a general flux/kernel pair the threshold is the maximum of
the larger Riccati root ``M2`` over the admissible ``(u, ubar_x)`` box, found
here by a two-stage grid search.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from nslab.exceptions import DomainError, FormulaError
from nslab.flux import ARRHENIUS, FluxModel, validate_h2
from nslab.kernels import KernelKind, KernelSpec
from nslab.validation import check_is_fitted, check_positive, check_slopes

DISCRIMINANT_CLAMP = 1e-12


class Potential(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    GENERAL = "general"


@dataclass
class ThresholdReport:
    threshold: float
    ntilde0: float
    sup_slope: float | None = None
    maximizer: tuple[float, ...] | None = None
    grid_resolution: int | None = None
    model: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def above(self) -> bool | None:
        if self.sup_slope is None:
            return None
        return bool(self.sup_slope > self.threshold)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "threshold": self.threshold,
            "ntilde0": self.ntilde0,
            "sup_slope": self.sup_slope,
            "above": self.above,
            "maximizer": None if self.maximizer is None else list(self.maximizer),
            "grid_resolution": self.grid_resolution,
            **self.extra,
        }


# ---------------------------------------------------------------------------
# closed forms

def ntilde0_constant(gamma: float, inf_slope: float) -> float:
    """Scaled lower bound for inf u_x under the constant potential."""
    return min(-1.0, gamma * inf_slope)


def ntilde0_linear(gamma: float, inf_slope: float) -> float:
    return min(-2.0, gamma * inf_slope)


def threshold_constant(gamma: float, inf_slope: float) -> float:
    """sup u0' above this value forces blow-up (Arrhenius flux, constant potential)."""
    gamma = check_positive("gamma", gamma)
    nt = ntilde0_constant(gamma, inf_slope)
    return (0.5 + math.sqrt(2.0) / 4.0 * math.sqrt(3.0 - nt)) / gamma


def threshold_linear(gamma: float, inf_slope: float) -> float:
    """sup u0' above this value forces blow-up (Arrhenius flux, linear potential)."""
    gamma = check_positive("gamma", gamma)
    nt = ntilde0_linear(gamma, inf_slope)
    return (1.0 + 0.5 * math.sqrt(6.0 - nt)) / gamma


def threshold(model: Potential | str, gamma: float, inf_slope: float) -> float:
    model = Potential(model)
    if model is Potential.CONSTANT:
        return threshold_constant(gamma, inf_slope)
    if model is Potential.LINEAR:
        return threshold_linear(gamma, inf_slope)
    raise DomainError("use general_lambda for the general model")


# ---------------------------------------------------------------------------
# scaled Riccati roots over the Omega boxes (v = gamma * ubar_x)

def _sqrt_clamped(disc):
    disc = np.asarray(disc, dtype=float)
    if np.any(disc < -DISCRIMINANT_CLAMP):
        raise FormulaError(f"negative discriminant {disc.min():.3g}; hypotheses violated")
    return np.sqrt(np.maximum(disc, 0.0))


def n1_scaled(u, v):
    """gamma * N1 for the Arrhenius flux; same expression for both potentials."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    a = (1 - 2 * u) * v
    return (-a - _sqrt_clamped(a * a + 2 * u * (1 - u) * v * v)) / 2


def m2_scaled(u, v, ntilde0: float, potential: Potential | str = Potential.CONSTANT):
    """gamma * M2 for the Arrhenius flux with the given potential."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    p = Potential(potential)
    q = u * (1 - u)
    if p is Potential.CONSTANT:
        b = 2 * (1 - 2 * u) * v - q
        disc = b * b + 8 * q * (v * v - ntilde0)
    elif p is Potential.LINEAR:
        b = 2 * (1 - 2 * u) * v - 2 * q
        disc = b * b + 8 * q * (v * v - 2 * ntilde0)
    else:
        raise DomainError("m2_scaled covers the constant and linear potentials only")
    return (-b + _sqrt_clamped(disc)) / 4


def omega_box(potential: Potential | str, resolution: int = 2001):
    """Meshgrid over Omega: u in [0, 1], |v| <= 1 (constant) or 2 (linear)."""
    vmax = 1.0 if Potential(potential) is Potential.CONSTANT else 2.0
    u = np.linspace(0.0, 1.0, resolution)
    v = np.linspace(-vmax, vmax, resolution)
    return np.meshgrid(u, v, indexing="ij")


def omega_box_maxima(potential: Potential | str, resolution: int = 2001,
                     ntilde0: float | None = None) -> tuple[float, float]:
    """Brute-force the two box maxima used to bound M2.

    Returns ``(max of the linear-in-v coefficient, max of the 8 u (1-u) (...) term)``;
    the second uses ``ntilde0`` = -1 (constant) or -2 (linear) unless given.
    """
    p = Potential(potential)
    U, V = omega_box(p, resolution)
    q = U * (1 - U)
    if p is Potential.CONSTANT:
        nt = -1.0 if ntilde0 is None else ntilde0
        first = -2 * (1 - 2 * U) * V + q
        second = 8 * q * (V * V - nt)
    elif p is Potential.LINEAR:
        nt = -2.0 if ntilde0 is None else ntilde0
        first = -2 * (1 - 2 * U) * V + 2 * q
        second = 8 * q * (V * V - 2 * nt)
    else:
        raise DomainError("omega_box_maxima covers the constant and linear potentials only")
    return float(first.max()), float(second.max())


# ---------------------------------------------------------------------------
# general flux / kernel

def n1_general(f: FluxModel, u, ubar, v):
    """Lower Riccati root of the N inequality at (u, ubar, ubar_x = v)."""
    F_uu = np.asarray(f.F_uu(u, ubar), float)
    F_uub = np.asarray(f.F_uub(u, ubar), float)
    F_ubub = np.asarray(f.F_ubub(u, ubar), float)
    _check_concave(F_uu)
    disc = (F_uub ** 2 - F_uu * F_ubub) * v * v
    return (F_uub * v - _sqrt_clamped(disc)) / (-F_uu)


def m2_general(f: FluxModel, k_zero: float, u, ubar, v, ntilde0: float):
    """Upper Riccati root of the M inequality; ``k_zero`` is K(0-)."""
    F_uu = np.asarray(f.F_uu(u, ubar), float)
    F_uub = np.asarray(f.F_uub(u, ubar), float)
    F_ubub = np.asarray(f.F_ubub(u, ubar), float)
    F_ub = np.asarray(f.F_ub(u, ubar), float)
    _check_concave(F_uu)
    b = 2 * F_uub * v - F_ub * k_zero
    disc = b * b - 4 * (F_uu * F_ubub * v * v + F_uu * F_ub * k_zero * ntilde0)
    return (b + _sqrt_clamped(disc)) / (-2 * F_uu)


def _check_concave(F_uu):
    if np.any(F_uu == 0):
        raise FormulaError("F_uu vanishes on the box; the Riccati roots are undefined")


def sharp_v_bound(kernel: KernelSpec, m: float = 1.0) -> float | None:
    """Bound on |ubar_x| from 0 <= u <= m for the built-in kernels."""
    if kernel.kind is KernelKind.CONSTANT:
        return m * kernel.k0 / kernel.gamma
    if kernel.kind is KernelKind.LINEAR:
        return 2.0 * m * kernel.k0 / kernel.gamma
    return None


def _grid_search(func, u_rng, v_rng, b_vals, resolution, sense):
    """Two-stage search of func(u, ubar, v) over a box; sense is +1 (max) or -1 (min).

    Ties resolve to the lexicographically smallest (ubar, u, v) grid point.
    """
    def best_on(us, vs):
        B, U, V = np.meshgrid(b_vals, us, vs, indexing="ij")
        vals = sense * func(U, B, V)
        idx = int(np.argmax(vals))
        i = np.unravel_index(idx, vals.shape)
        return sense * float(vals[i]), (float(U[i]), float(B[i]), float(V[i]))

    us = np.linspace(*u_rng, resolution)
    vs = np.linspace(*v_rng, resolution)
    val, (u0, b0, v0) = best_on(us, vs)
    hu, hv = us[1] - us[0], vs[1] - vs[0]
    # 10x refinement over a +-2 coarse cell neighbourhood
    uf = np.clip(np.linspace(u0 - 2 * hu, u0 + 2 * hu, 41), *u_rng)
    vf = np.clip(np.linspace(v0 - 2 * hv, v0 + 2 * hv, 41), *v_rng)
    val_f, arg_f = best_on(np.unique(uf), np.unique(vf))
    if sense * val_f > sense * val:
        return val_f, arg_f
    return val, (u0, b0, v0)


def general_lambda(f: FluxModel, kernel: KernelSpec, n0: float, resolution: int = 401,
                   v_bound: float | None = None, ubar_samples: int = 3,
                   sup_slope: float | None = None) -> ThresholdReport:
    """Threshold lambda(n0) for a general flux and one-sided kernel.

    ``v_bound`` defaults to ``m * ||K||_{W11}``; pass :func:`sharp_v_bound` for
    the tighter built-in ranges.  The partials are sampled at ``ubar_samples``
    values of ubar in ``[0, m * ||K||_L1]`` (irrelevant for Arrhenius, where
    e^{-ubar} cancels from the roots).
    """
    if resolution < 101:
        raise DomainError("resolution must be at least 101")
    m = f.m
    h2 = validate_h2(f, ubar_range=(0.0, m * kernel.l1_norm))
    if not h2.ok:
        failed = [c.clause for c in h2.clauses if c.status == "fail"]
        raise FormulaError(f"flux {f.name!r} violates H2 ({', '.join(failed)}); lambda undefined")
    if v_bound is None:
        v_bound = m * kernel.w11_norm
    k_zero = kernel.k_at_zero
    b_vals = np.linspace(0.0, m * kernel.l1_norm, ubar_samples) if ubar_samples > 1 \
        else np.array([0.0])
    u_rng, v_rng = (0.0, m), (-v_bound, v_bound)

    n1_min, n1_arg = _grid_search(lambda u, b, v: n1_general(f, u, b, v),
                                  u_rng, v_rng, b_vals, resolution, sense=-1)
    ntilde0 = min(n0, n1_min)
    lam, arg = _grid_search(lambda u, b, v: m2_general(f, k_zero, u, b, v, ntilde0),
                            u_rng, v_rng, b_vals, resolution, sense=+1)
    return ThresholdReport(
        threshold=lam,
        ntilde0=ntilde0,
        sup_slope=sup_slope,
        maximizer=(arg[0], arg[2]),
        grid_resolution=resolution,
        model=f"general:{f.name}/{kernel.kind.value}",
        extra={"v_bound": v_bound, "n1_min": n1_min, "maximizer_ubar": arg[1],
               "n1_argmin": [n1_arg[0], n1_arg[2]]},
    )


def threshold_report(model: Potential | str, gamma: float, inf_slope: float,
                     sup_slope: float | None = None, resolution: int = 401,
                     flux: FluxModel = ARRHENIUS, kernel: KernelSpec | None = None) -> ThresholdReport:
    """Single entry point used by the CLI and the sweep harness."""
    model = Potential(model)
    if inf_slope > 0 or (sup_slope is not None and sup_slope < 0):
        raise DomainError("slopes must satisfy inf_slope <= 0 <= sup_slope")
    if model is Potential.GENERAL:
        kernel = kernel or KernelSpec.constant(gamma)
        rep = general_lambda(flux, kernel, inf_slope, resolution, sup_slope=sup_slope)
        sharp = sharp_v_bound(kernel, flux.m)
        if sharp is not None:
            alt = general_lambda(flux, kernel, inf_slope, resolution, v_bound=sharp)
            rep.extra["threshold_sharp_box"] = alt.threshold
        return rep
    if model is Potential.CONSTANT:
        lam, nt = threshold_constant(gamma, inf_slope), ntilde0_constant(gamma, inf_slope)
    else:
        lam, nt = threshold_linear(gamma, inf_slope), ntilde0_linear(gamma, inf_slope)
    return ThresholdReport(threshold=lam, ntilde0=nt, sup_slope=sup_slope,
                           model=model.value, extra={"gamma": gamma, "inf_slope": inf_slope})


class ThresholdClassifier(ClassifierMixin, BaseEstimator):
    """Predict whether initial data is guaranteed to blow up.

    ``X`` has two columns, ``(inf u0', sup u0')``.  Class 1 means the data lies
    strictly above the sub-threshold, so gradient blow-up is certain; class 0
    means the criterion is silent (the data may still blow up).
    """

    def __init__(self, potential="constant", gamma=1.0):
        self.potential = potential
        self.gamma = gamma

    def fit(self, X=None, y=None):
        check_positive("gamma", self.gamma)
        self.potential_ = Potential(self.potential)
        if self.potential_ is Potential.GENERAL:
            raise DomainError("ThresholdClassifier supports the constant and linear potentials")
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        """Signed margin ``sup_slope - threshold``."""
        check_is_fitted(self, "potential_")
        X = check_slopes(X)
        lam = np.array([threshold(self.potential_, self.gamma, s) for s in X[:, 0]])
        return X[:, 1] - lam

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)
