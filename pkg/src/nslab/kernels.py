"""Look-ahead interaction kernels and the nonlocal average on a 1-D grid.

A kernel ``K`` is supported on ``[-gamma, 0]`` so that ``(K * u)(x)`` only sees
the road ahead of ``x``.  Cell averages are treated as a piecewise-constant
reconstruction and integrated exactly against ``K``; this gives second-order
accuracy for smooth data and handles ``gamma`` that is not a multiple of ``dx``
through fractional end-cell weights.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from nslab.exceptions import DomainError, KernelValidationError

H1_MONOTONE_TOL = 1e-12


class KernelKind(str, enum.Enum):
    CONSTANT = "constant"
    LINEAR = "linear"
    TABULATED = "tabulated"


class Boundary(str, enum.Enum):
    PERIODIC = "periodic"
    CONSTANT_EXTENSION = "constant_extension"


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a one-sided kernel.

    ``table`` holds ``(offset, value)`` samples for the tabulated kind; offsets
    must cover ``[-gamma, 0]``.  Between samples the kernel is linear.
    """

    kind: KernelKind
    gamma: float
    k0: float = 1.0
    table: tuple[tuple[float, float], ...] | None = None
    _r: np.ndarray = field(init=False, repr=False, compare=False)
    _k: np.ndarray = field(init=False, repr=False, compare=False)
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind(self.kind))
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise KernelValidationError(f"gamma must be positive and finite, got {self.gamma}")
        if not (math.isfinite(self.k0) and self.k0 > 0):
            raise KernelValidationError(f"k0 must be positive and finite, got {self.k0}")
        if self.kind is KernelKind.TABULATED:
            if self.table is None or len(self.table) < 2:
                raise KernelValidationError("tabulated kernel needs at least two samples")
            arr = np.asarray(self.table, dtype=float)
            order = np.argsort(arr[:, 0], kind="stable")
            r, k = arr[order, 0], arr[order, 1]
            if np.any(np.diff(r) <= 0):
                raise KernelValidationError("tabulated offsets must be distinct")
            if abs(r[0] + self.gamma) > 1e-12 * max(1.0, self.gamma) or abs(r[-1]) > 1e-12:
                raise KernelValidationError(
                    f"support: table offsets must span [-gamma, 0] = [{-self.gamma}, 0], "
                    f"got [{r[0]}, {r[-1]}]"
                )
            r[0], r[-1] = -self.gamma, 0.0
            if np.any(k < 0):
                raise KernelValidationError("H1 nonnegativity: tabulated kernel has negative values")
            if np.any(np.diff(k) < -H1_MONOTONE_TOL):
                i = int(np.argmin(np.diff(k)))
                raise KernelValidationError(
                    f"H1 monotonicity: kernel decreases between r={r[i]} and r={r[i + 1]}"
                )
            # cumulative integral of the piecewise-linear interpolant
            seg = 0.5 * (k[1:] + k[:-1]) * np.diff(r)
            cum = np.concatenate([[0.0], np.cumsum(seg)])
            object.__setattr__(self, "_r", r)
            object.__setattr__(self, "_k", k)
            object.__setattr__(self, "_cum", cum)
        elif self.table is not None:
            raise KernelValidationError(f"table given for non-tabulated kind {self.kind.value}")

    # -- pointwise evaluation -------------------------------------------------

    def __call__(self, r):
        """Evaluate K(r); zero outside [-gamma, 0]."""
        r = np.asarray(r, dtype=float)
        inside = (r >= -self.gamma) & (r <= 0.0)
        return np.where(inside, self._interior(np.clip(r, -self.gamma, 0.0)), 0.0)

    def _interior(self, r):
        # continuous extension of K from the open support to its closure
        g = self.gamma
        if self.kind is KernelKind.CONSTANT:
            return np.full_like(r, self.k0 / g)
        if self.kind is KernelKind.LINEAR:
            return self.k0 * (2.0 / g) * (1.0 + r / g)
        return np.interp(r, self._r, self._k)

    def antiderivative(self, z):
        """Return the integral of K from -gamma to z, with z clipped to the support."""
        z = np.clip(np.asarray(z, dtype=float), -self.gamma, 0.0)
        g = self.gamma
        s = z + g
        if self.kind is KernelKind.CONSTANT:
            return self.k0 * s / g
        if self.kind is KernelKind.LINEAR:
            return self.k0 * (s / g) ** 2
        idx = np.clip(np.searchsorted(self._r, z, side="right") - 1, 0, len(self._r) - 2)
        r0 = self._r[idx]
        k0 = self._k[idx]
        slope = (self._k[idx + 1] - k0) / (self._r[idx + 1] - r0)
        d = z - r0
        return self._cum[idx] + k0 * d + 0.5 * slope * d * d

    # -- norms ---------------------------------------------------------------

    @property
    def k_at_zero(self) -> float:
        """K(0-), the jump coefficient at the origin."""
        return float(self._interior(np.array(0.0)))

    @property
    def k_at_left(self) -> float:
        """K(-gamma+); nonzero for kernels that jump at the far end."""
        return float(self._interior(np.array(-self.gamma)))

    @property
    def l1_norm(self) -> float:
        return float(self.antiderivative(0.0))

    @property
    def w11_seminorm(self) -> float:
        """Integral of |K'| over the open support (boundary jumps excluded)."""
        if self.kind is KernelKind.CONSTANT:
            return 0.0
        if self.kind is KernelKind.LINEAR:
            return 2.0 * self.k0 / self.gamma
        return float(np.sum(np.abs(np.diff(self._k))))

    @property
    def w11_norm(self) -> float:
        return self.l1_norm + self.w11_seminorm

    # -- constructors --------------------------------------------------------

    @classmethod
    def constant(cls, gamma: float, k0: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.CONSTANT, gamma, k0)

    @classmethod
    def linear(cls, gamma: float, k0: float = 1.0) -> "KernelSpec":
        return cls(KernelKind.LINEAR, gamma, k0)

    @classmethod
    def tabulated(cls, offsets: Sequence[float], values: Sequence[float]) -> "KernelSpec":
        offsets = [float(r) for r in offsets]
        table = tuple(zip(offsets, (float(v) for v in values)))
        return cls(KernelKind.TABULATED, -min(offsets), 1.0, table)

    @classmethod
    def from_table_file(cls, path: str | Path) -> "KernelSpec":
        """Read a two-column text file of ``offset value`` rows."""
        data = np.loadtxt(path, dtype=float, comments="#", ndmin=2)
        if data.shape[1] != 2:
            raise KernelValidationError(f"{path}: expected two columns, got {data.shape[1]}")
        return cls.tabulated(data[:, 0], data[:, 1])

    def to_tabulated(self, n_samples: int) -> "KernelSpec":
        r = np.linspace(-self.gamma, 0.0, n_samples)
        return KernelSpec.tabulated(r, self._interior(r))


@dataclass(frozen=True)
class Grid1D:
    n_cells: int
    x_left: float
    dx: float
    boundary: Boundary = Boundary.PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        if int(self.n_cells) != self.n_cells or self.n_cells < 3:
            raise DomainError(f"n_cells must be an integer >= 3, got {self.n_cells}")
        if not (math.isfinite(self.dx) and self.dx > 0):
            raise DomainError(f"dx must be positive, got {self.dx}")

    @classmethod
    def uniform(cls, n_cells: int, x_left: float, length: float,
                boundary: Boundary | str = Boundary.PERIODIC) -> "Grid1D":
        return cls(int(n_cells), float(x_left), float(length) / n_cells, Boundary(boundary))

    @property
    def length(self) -> float:
        return self.n_cells * self.dx

    @property
    def centers(self) -> np.ndarray:
        return self.x_left + (np.arange(self.n_cells) + 0.5) * self.dx

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    def check_kernel(self, kernel: KernelSpec) -> None:
        if self.periodic and kernel.gamma >= 0.5 * self.length:
            raise DomainError(
                f"look-ahead gamma={kernel.gamma} must be below half the periodic "
                f"domain length {self.length}"
            )

    def pad(self, u: np.ndarray, left: int, right: int) -> np.ndarray:
        mode = "wrap" if self.periodic else "edge"
        return np.pad(u, (left, right), mode=mode)


def kernel_mass(kernel: KernelSpec) -> float:
    """Return the integral of K over its support."""
    if kernel.kind is KernelKind.CONSTANT:
        return float(kernel.k0)
    if kernel.kind is KernelKind.LINEAR:
        return float(kernel.k0)
    r, k = kernel._r, kernel._k
    return float(np.sum(0.5 * (k[1:] + k[:-1]) * np.diff(r)))


def _cell_weights(kernel: KernelSpec, dx: float) -> np.ndarray:
    """Integral of K over each cell overlap, for cell offsets j = 0, 1, ... ahead.

    Cell ``i + j`` covers ``y - x_i`` in ``[(j - 1/2) dx, (j + 1/2) dx]``; with
    ``z = x_i - y`` that is ``z`` in ``[-(j + 1/2) dx, -(j - 1/2) dx]``.
    """
    n = int(math.ceil(kernel.gamma / dx + 0.5)) + 1
    j = np.arange(n)
    hi = np.minimum(-(j - 0.5) * dx, 0.0)
    lo = -(j + 0.5) * dx
    w = kernel.antiderivative(hi) - kernel.antiderivative(lo)
    return np.trim_zeros(np.where(w > 0, w, 0.0), "b")


def _derivative_weights(kernel: KernelSpec, dx: float) -> np.ndarray:
    """Integral of K' (open support only) over each cell overlap."""
    n = int(math.ceil(kernel.gamma / dx + 0.5)) + 1
    j = np.arange(n)
    hi = np.clip(-(j - 0.5) * dx, -kernel.gamma, 0.0)
    lo = np.clip(-(j + 0.5) * dx, -kernel.gamma, 0.0)
    return kernel._interior(hi) - kernel._interior(lo)


def _correlate_ahead(weights: np.ndarray, grid: Grid1D, u: np.ndarray, extra: int) -> np.ndarray:
    """sum_j w_j u_{i+j} for i in [-extra, n + extra)."""
    m = len(weights)
    ext = grid.pad(u, extra, extra + m)
    # np.correlate is a direct (sequential) sum, so results do not depend on threading
    out = np.correlate(ext, weights, mode="valid")
    return out[: grid.n_cells + 2 * extra]


def _check_inputs(kernel: KernelSpec, grid: Grid1D, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] != grid.n_cells:
        raise DomainError(f"expected {grid.n_cells} cell averages, got shape {u.shape}")
    grid.check_kernel(kernel)
    return u


def convolve(kernel: KernelSpec, grid: Grid1D, u, extra: int = 0) -> np.ndarray:
    """Nonlocal average ubar = K * u at cell centers.

    ``extra`` additionally returns that many ghost-cell values on each side,
    which the solver uses for boundary interfaces.
    """
    u = _check_inputs(kernel, grid, u)
    return _correlate_ahead(_cell_weights(kernel, grid.dx), grid, u, extra)


def windowed_average(grid: Grid1D, u, gamma: float, extra: int = 0) -> np.ndarray:
    """(1/gamma) * integral of u over [x, x + gamma], via the cumulative integral.

    Independent of the kernel-weight path in :func:`convolve`; used to cross-check
    the constant kernel and as the building block for the linear kernel identities.
    """
    u = np.asarray(u, dtype=float)
    if grid.periodic and gamma >= 0.5 * grid.length:
        raise DomainError("gamma must be below half the periodic domain length")
    m = int(math.ceil(gamma / grid.dx)) + 2
    ext = grid.pad(u, extra + 1, extra + m)
    # cumulative integral at cell faces of the extended array
    faces = np.concatenate([[0.0], np.cumsum(ext) * grid.dx])
    xf = np.arange(len(faces)) * grid.dx
    xc = (np.arange(grid.n_cells + 2 * extra) + 1 + 0.5) * grid.dx
    upper = np.interp(xc + gamma, xf, faces)
    lower = np.interp(xc, xf, faces)
    return (upper - lower) / gamma


def interpolate_ahead(grid: Grid1D, f: np.ndarray, shift: float, extra: int = 0) -> np.ndarray:
    """Linear interpolation of cell-centred values at x_i + shift."""
    m = int(math.ceil(shift / grid.dx)) + 2
    ext = grid.pad(f, extra, extra + m)
    q = shift / grid.dx
    k = int(math.floor(q))
    theta = q - k
    n = grid.n_cells + 2 * extra
    return (1.0 - theta) * ext[k:k + n] + theta * ext[k + 1:k + 1 + n]


def centered_slope(grid: Grid1D, u: np.ndarray) -> np.ndarray:
    """u_x by centered differences; one-sided at non-periodic boundaries."""
    if grid.periodic:
        return (np.roll(u, -1) - np.roll(u, 1)) / (2.0 * grid.dx)
    ux = np.empty_like(u)
    ux[1:-1] = (u[2:] - u[:-2]) / (2.0 * grid.dx)
    ux[0] = (u[1] - u[0]) / grid.dx
    ux[-1] = (u[-1] - u[-2]) / grid.dx
    return ux


def _quadrature_derivative(kernel: KernelSpec, grid: Grid1D, f: np.ndarray) -> np.ndarray:
    # d/dx (K * f) = int K'(z) f(x - z) dz - K(0) f(x) + K(-gamma) f(x + gamma)
    body = _correlate_ahead(_derivative_weights(kernel, grid.dx), grid, f, 0)
    ahead = interpolate_ahead(grid, f, kernel.gamma)
    return body - kernel.k_at_zero * f + kernel.k_at_left * ahead


def nonlocal_gradient(kernel: KernelSpec, grid: Grid1D, u) -> np.ndarray:
    """ubar_x alone; cheaper than :func:`nonlocal_derivatives` inside a time loop."""
    u = _check_inputs(kernel, grid, u)
    g, c = kernel.gamma, kernel.k0
    if kernel.kind is KernelKind.CONSTANT:
        return c * (interpolate_ahead(grid, u, g) - u) / g
    if kernel.kind is KernelKind.LINEAR:
        return -c * (2.0 / g) * (u - convolve(KernelSpec.constant(g), grid, u))
    return _quadrature_derivative(kernel, grid, u)


def nonlocal_derivatives(kernel: KernelSpec, grid: Grid1D, u,
                         method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Return (ubar_x, ubar_xx) at cell centers.

    ``method="auto"`` uses the closed-form identities of the built-in kernels;
    ``method="quadrature"`` forces the generic path through K' for any kind.
    """
    u = _check_inputs(kernel, grid, u)
    ux = centered_slope(grid, u)
    if method == "quadrature" or kernel.kind is KernelKind.TABULATED:
        return (_quadrature_derivative(kernel, grid, u),
                _quadrature_derivative(kernel, grid, ux))
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    g = kernel.gamma
    c = kernel.k0
    if kernel.kind is KernelKind.CONSTANT:
        ubar_x = c * (interpolate_ahead(grid, u, g) - u) / g
        ubar_xx = c * (interpolate_ahead(grid, ux, g) - ux) / g
        return ubar_x, ubar_xx
    # linear kernel: derivatives expressed through the constant-kernel average
    box_k = KernelSpec.constant(g)
    box = convolve(box_k, grid, u)
    # d/dx of the box average, taken as the box average of the discrete slope
    box_x = convolve(box_k, grid, ux)
    return -c * (2.0 / g) * (u - box), -c * (2.0 / g) * (ux - box_x)


class NonlocalAverage(TransformerMixin, BaseEstimator):
    """Transformer wrapping :func:`convolve` so it can sit in a pipeline.

    Each row of ``X`` is one field of cell averages on a uniform grid with the
    given spacing and boundary.  ``fit`` only validates and builds the kernel.
    """

    def __init__(self, kind="constant", gamma=1.0, k0=1.0, dx=0.01,
                 boundary="periodic", derivatives=False):
        self.kind = kind
        self.gamma = gamma
        self.k0 = k0
        self.dx = dx
        self.boundary = boundary
        self.derivatives = derivatives

    def fit(self, X, y=None):
        from nslab.validation import check_fields
        X = check_fields(X)
        if self.kind == "tabulated":
            raise ValueError("use KernelSpec.tabulated directly for tabulated kernels")
        self.kernel_ = KernelSpec(KernelKind(self.kind), self.gamma, self.k0)
        self.grid_ = Grid1D(X.shape[1], 0.0, self.dx, Boundary(self.boundary))
        self.grid_.check_kernel(self.kernel_)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        from nslab.validation import check_fields, check_is_fitted
        check_is_fitted(self, "kernel_")
        X = check_fields(X, n_cells=self.n_features_in_)
        if not self.derivatives:
            return np.vstack([convolve(self.kernel_, self.grid_, row) for row in X])
        return np.vstack([
            np.concatenate(nonlocal_derivatives(self.kernel_, self.grid_, row)) for row in X
        ])
