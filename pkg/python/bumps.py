"""
Smooth compactly supported test functions used by the generator, resolvent and
Monte Carlo checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Bump:
    """a * exp(1 - 1 / (1 - |(x - c) / w|^2)) on the ball |x - c| < w, zero outside."""

    center: tuple
    width: float = 1.0
    amplitude: float = 1.0

    @property
    def d(self) -> int:
        return len(self.center)

    @property
    def sup_norm(self) -> float:
        return abs(self.amplitude)

    @property
    def support_radius(self) -> float:
        """Radius of a ball about the origin containing the support."""

        return float(np.linalg.norm(self.center)) + self.width

    def _scaled(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if self.d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        return (pts - np.asarray(self.center, dtype=float)) / self.width

    def __call__(self, x) -> np.ndarray:
        u = self._scaled(x)
        s = np.sum(u * u, axis=-1)
        out = np.zeros(s.shape)
        inside = s < 1.0
        out[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
        return out

    def gradient(self, x) -> np.ndarray:
        u = self._scaled(x)
        s = np.sum(u * u, axis=-1)
        value = np.zeros(s.shape)
        inside = s < 1.0
        value[inside] = self.amplitude * np.exp(1.0 - 1.0 / (1.0 - s[inside]))
        factor = np.zeros(s.shape)
        factor[inside] = -2.0 * value[inside] / (1.0 - s[inside]) ** 2 / self.width
        return factor[..., None] * u

    def integral(self) -> float:
        """Exact mass, by one-dimensional radial quadrature."""

        from scipy import integrate

        d = self.d
        omega = 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
        radial, _ = integrate.quad(
            lambda r: r ** (d - 1) * math.exp(1.0 - 1.0 / (1.0 - r * r)), 0.0, 1.0, limit=200
        )
        return self.amplitude * omega * radial * self.width ** d


class ConstantFunction:
    """g = value everywhere; its resolvent is value / lambda."""

    def __init__(self, d: int, value: float = 1.0) -> None:
        self.d = d
        self.value = float(value)
        self.sup_norm = abs(self.value)
        self.support_radius = None

    def __call__(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if self.d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            return np.full(pts.shape, self.value)
        return np.full(pts.shape[:-1], self.value)

    def gradient(self, x) -> np.ndarray:
        pts = np.asarray(x, dtype=float)
        if self.d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            pts = pts[..., None]
        return np.zeros(pts.shape)


def bump(center: Sequence[float] | float = 0.0, width: float = 1.0, amplitude: float = 1.0) -> Bump:
    if np.ndim(center) == 0:
        center = (float(center),)
    return Bump(center=tuple(float(c) for c in center), width=float(width), amplitude=float(amplitude))


def bump_family(d: int = 1, count: int = 3) -> list:
    """Shifted bumps used as the default resolvent test functions."""

    shifts = np.linspace(-0.5, 0.5, count)
    return [bump(tuple([float(s)] + [0.0] * (d - 1)), width=1.0 + 0.25 * i) for i, s in enumerate(shifts)]
