"""Initial densities with analytically known extreme slopes.

Every profile is a callable ``u0(x)`` carrying ``sup_slope`` and ``inf_slope``
attributes; :func:`cell_averages` turns it into finite-volume data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from nslab.exceptions import ConfigError
from nslab.kernels import Grid1D


@dataclass(frozen=True)
class Profile:
    name: str
    sup_slope: float
    inf_slope: float

    def __call__(self, x):
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Profile):
    value: float = 0.5

    def __call__(self, x):
        return np.full_like(np.asarray(x, float), self.value)


@dataclass(frozen=True)
class Sine(Profile):
    mean: float = 0.5
    amplitude: float = 0.25
    period: float = 1.0

    def __call__(self, x):
        return self.mean + self.amplitude * np.sin(2 * np.pi * np.asarray(x, float) / self.period)


@dataclass(frozen=True)
class TanhFronts(Profile):
    """base + sum of tanh steps; each step is (position, jump, width)."""

    base: float = 0.0
    steps: tuple[tuple[float, float, float], ...] = ()

    def __call__(self, x):
        x = np.asarray(x, float)
        out = np.full_like(x, self.base)
        for x0, jump, width in self.steps:
            out += 0.5 * jump * (1.0 + np.tanh((x - x0) / width))
        return out


@dataclass(frozen=True)
class SmoothRamp(Profile):
    """Quintic smoothstep from ``low`` at ``x1`` to ``high`` at ``x2`` (C2, flat ends)."""

    x1: float = -1.0
    x2: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __call__(self, x):
        s = np.clip((np.asarray(x, float) - self.x1) / (self.x2 - self.x1), 0.0, 1.0)
        return self.low + (self.high - self.low) * s ** 3 * (10 - 15 * s + 6 * s * s)


@dataclass(frozen=True)
class FourierSum(Profile):
    mean: float = 0.5
    period: float = 1.0
    coeffs: tuple[tuple[int, float, float], ...] = ()  # (mode, amplitude, phase)

    def __call__(self, x):
        x = np.asarray(x, float)
        out = np.full_like(x, self.mean)
        for j, a, ph in self.coeffs:
            out += a * np.sin(2 * np.pi * j * x / self.period + ph)
        return out

    def derivative(self, x):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        for j, a, ph in self.coeffs:
            k = 2 * np.pi * j / self.period
            out += a * k * np.cos(k * x + ph)
        return out


def constant(value: float = 0.5) -> Profile:
    return Constant("constant", 0.0, 0.0, value)


def sine(mean: float = 0.5, amplitude: float = 0.25, period: float = 1.0) -> Profile:
    s = 2 * math.pi * abs(amplitude) / period
    return Sine("sine", s, -s, mean, amplitude, period)


def tanh_front(u_left: float, u_right: float, sup_slope: float, x0: float = 0.0) -> Profile:
    """Single monotone front; rising fronts have ``inf u0' = 0``."""
    jump = u_right - u_left
    if jump == 0:
        return constant(u_left)
    if sup_slope <= 0 and jump > 0:
        raise ConfigError("ic.sup_slope: a rising front needs a positive slope")
    width = abs(jump) / (2.0 * sup_slope) if jump > 0 else abs(jump) / (2.0 * abs(sup_slope))
    peak = abs(jump) / (2.0 * width)
    sup, inf = (peak, 0.0) if jump > 0 else (0.0, -peak)
    return TanhFronts("tanh_front", sup, inf, u_left, ((x0, jump, width),))


def two_front(base: float, peak: float, sup_slope: float, inf_slope: float,
              x_up: float, x_down: float) -> Profile:
    """A plateau at ``peak`` rising at ``x_up`` and falling at ``x_down``.

    The two slopes are set independently.  Fronts must be separated by many
    widths so that their tails do not alter the extreme slopes.
    """
    h = peak - base
    if h <= 0 or sup_slope <= 0 or inf_slope >= 0:
        raise ConfigError("ic: two_front needs peak > base, sup_slope > 0 > inf_slope")
    w_up, w_down = h / (2 * sup_slope), h / (2 * -inf_slope)
    sep = abs(x_down - x_up)
    if sep < 12 * max(w_up, w_down):
        raise ConfigError("ic: fronts overlap; increase their separation or the slopes")
    steps = ((x_up, h, w_up), (x_down, -h, w_down))
    return TanhFronts("two_front", sup_slope, inf_slope, base, steps)


def red_light(c: float = 0.2, sup_slope: float = 2.0, x0: float = 0.0) -> Profile:
    """Traffic at density ``c`` running into a stopped queue (u = 1) ahead of ``x0``.

    On a constant-extension grid the queue reaches the right boundary, where
    the zero flux of a full road acts as a red light.
    """
    p = tanh_front(c, 1.0, sup_slope, x0)
    return TanhFronts("red_light", p.sup_slope, p.inf_slope, p.base, p.steps)


def full_ramp(x1: float = -1.0, x2: float = 1.0) -> Profile:
    """Rises from exactly 0 at ``x1`` to exactly 1 at ``x2``."""
    if not x2 > x1:
        raise ConfigError("ic: full ramp needs x1 < x2")
    return SmoothRamp("full_ramp", 1.875 / (x2 - x1), 0.0, x1, x2, 0.0, 1.0)


def random_smooth(seed: int = 0, modes: int = 5, mean: float = 0.5,
                  amplitude: float = 0.3, period: float = 1.0) -> Profile:
    """Random periodic Fourier sum confined to ``mean +- amplitude``.

    Extreme slopes come from the analytic derivative sampled on a fine grid.
    """
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=modes) / np.arange(1, modes + 1)
    amps *= amplitude / np.sum(np.abs(amps))
    phases = rng.uniform(0, 2 * np.pi, modes)
    coeffs = tuple((j + 1, float(a), float(p)) for j, (a, p) in enumerate(zip(amps, phases)))
    probe = FourierSum("random_smooth", 0.0, 0.0, mean, period, coeffs)
    d = probe.derivative(np.linspace(0, period, 200 * modes + 1))
    return FourierSum("random_smooth", float(d.max()), float(d.min()), mean, period, coeffs)


BUILDERS = {
    "constant": constant,
    "sine": sine,
    "tanh_front": tanh_front,
    "two_front": two_front,
    "red_light": red_light,
    "full_ramp": full_ramp,
    "random_smooth": random_smooth,
}


def build(name: str, **params) -> Profile:
    try:
        builder = BUILDERS[name]
    except KeyError:
        raise ConfigError(f"ic.name: unknown profile {name!r}; known: {sorted(BUILDERS)}") from None
    try:
        return builder(**params)
    except TypeError as exc:
        raise ConfigError(f"ic: bad parameters for {name!r}: {exc}") from None


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def cell_averages(profile, grid: Grid1D) -> np.ndarray:
    """Cell averages of ``profile`` by 4-point Gauss-Legendre quadrature per cell."""
    xc = grid.centers
    pts = xc[:, None] + 0.5 * grid.dx * _GL_NODES[None, :]
    return 0.5 * (profile(pts) @ _GL_WEIGHTS)
