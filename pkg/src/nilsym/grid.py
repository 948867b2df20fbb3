"""Rectangular sample grids in the z-plane and centered finite differences."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import GridTooSmall


@dataclass(frozen=True)
class Grid:
    """Regular grid center + [-hw_x, hw_x] x [-hw_y, hw_y]; arrays are indexed [row=y, col=x]."""

    center: complex = 0j
    half_widths: Tuple[float, float] = (0.4, 0.4)
    resolution: Tuple[int, int] = (41, 41)

    def __post_init__(self):
        nx, ny = self.resolution
        if nx < 3 or ny < 3:
            raise GridTooSmall(f"grid resolution {self.resolution} is below 3x3")

    @classmethod
    def from_steps(cls, center: complex, steps: Tuple[float, float], counts: Tuple[int, int]) -> "Grid":
        """Grid with given spacing and 2*count+1 nodes per axis."""
        return cls(complex(center), (steps[0] * counts[0], steps[1] * counts[1]),
                   (2 * counts[0] + 1, 2 * counts[1] + 1))

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(-self.half_widths[0], self.half_widths[0], self.resolution[0])

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(-self.half_widths[1], self.half_widths[1], self.resolution[1])

    @property
    def steps(self) -> Tuple[float, float]:
        nx, ny = self.resolution
        return 2 * self.half_widths[0] / (nx - 1), 2 * self.half_widths[1] / (ny - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.resolution[1], self.resolution[0]

    @property
    def z(self) -> np.ndarray:
        x, y = np.meshgrid(self.xs, self.ys)
        return self.center + x + 1j * y

    def shifted(self, dz: complex) -> "Grid":
        return Grid(self.center + dz, self.half_widths, self.resolution)

    def refined(self) -> "Grid":
        """Same extent, half the step."""
        nx, ny = self.resolution
        return Grid(self.center, self.half_widths, (2 * nx - 1, 2 * ny - 1))

    def interior(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[1:-1, 1:-1] = True
        return m

    def nearest_index(self, z: complex) -> Tuple[int, int]:
        hx, hy = self.steps
        dz = complex(z) - self.center
        i = int(round((dz.real + self.half_widths[0]) / hx))
        j = int(round((dz.imag + self.half_widths[1]) / hy))
        return j, i

    def to_json(self) -> dict:
        return {"center": [self.center.real, self.center.imag],
                "half_widths": list(self.half_widths),
                "resolution": list(self.resolution)}


def check_field(f, min_size: int = 3) -> np.ndarray:
    f = np.asarray(f)
    if f.ndim < 2 or f.shape[0] < min_size or f.shape[1] < min_size:
        raise GridTooSmall(f"field of shape {f.shape[:2]} is below {min_size}x{min_size}")
    return f


def d_x(f, hx: float) -> np.ndarray:
    return np.gradient(check_field(f), hx, axis=1, edge_order=2)


def d_y(f, hy: float) -> np.ndarray:
    return np.gradient(check_field(f), hy, axis=0, edge_order=2)


def d_z(f, steps) -> np.ndarray:
    hx, hy = steps
    return 0.5 * (d_x(f, hx) - 1j * d_y(f, hy))


def d_zbar(f, steps) -> np.ndarray:
    hx, hy = steps
    return 0.5 * (d_x(f, hx) + 1j * d_y(f, hy))


def laplace_zzbar(f, steps) -> np.ndarray:
    """f_{z zbar} = (f_xx + f_yy)/4 with the compact 5-point stencil."""
    f = check_field(f)
    hx, hy = steps
    fxx = np.gradient(np.gradient(f, hx, axis=1, edge_order=2), hx, axis=1, edge_order=2)
    fyy = np.gradient(np.gradient(f, hy, axis=0, edge_order=2), hy, axis=0, edge_order=2)
    inner = np.zeros_like(f)
    inner[1:-1, :] = (f[2:, :] - 2 * f[1:-1, :] + f[:-2, :]) / hy ** 2
    fyy[1:-1, :] = inner[1:-1, :]
    inner = np.zeros_like(f)
    inner[:, 1:-1] = (f[:, 2:] - 2 * f[:, 1:-1] + f[:, :-2]) / hx ** 2
    fxx[:, 1:-1] = inner[:, 1:-1]
    return 0.25 * (fxx + fyy)


def interior_max(f, mask=None, rings: int = 1) -> float:
    """Max of |f| over points at least ``rings`` nodes from the edge (and inside an optional mask); NaNs ignored."""
    a = np.abs(np.asarray(f))
    while a.ndim > 2:
        a = a.max(axis=-1)
    sel = np.zeros(a.shape, dtype=bool)
    sel[rings:a.shape[0] - rings, rings:a.shape[1] - rings] = True
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    vals = a[sel]
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else 0.0
