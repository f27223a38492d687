"""Volume quadrature for weakly singular kernels on domain grids.

Midpoint rule away from the singular point; a disk of radius patch*h around
the singularity is removed (straddling cells get sub-sampled clipped
weights) and re-integrated with a local polar rule whose r dr weight kills
|x-y|^-1 singularities.
"""

from __future__ import annotations

import numpy as np

__all__ = ["SingularQuadrature", "log_cell_integral"]


def _corner_primitive(x: float, y: float) -> float:
    """F with d2F/dxdy = log sqrt(x^2+y^2); used for exact log-cell integrals."""
    if x == 0.0 and y == 0.0:
        return 0.0
    r2 = x * x + y * y
    val = 0.5 * x * y * (np.log(r2) - 3.0)
    if x != 0.0:
        val += 0.5 * x * x * np.arctan(y / x)
    if y != 0.0:
        val += 0.5 * y * y * np.arctan(x / y)
    return val


def log_cell_integral(x0: float, x1: float, y0: float, y1: float, px: float, py: float) -> float:
    """Exact integral of log|y - p| over the rectangle [x0,x1]x[y0,y1]."""
    c = 0.0
    for sx, xx in ((1.0, x1 - px), (-1.0, x0 - px)):
        for sy, yy in ((1.0, y1 - py), (-1.0, y0 - py)):
            c += sx * sy * _corner_primitive(xx, yy)
    return c


class SingularQuadrature:
    """Quadrature over a grid for integrands with one weak singularity."""

    def __init__(self, grid, domain=None, patch: float = 2.0, n_r: int = 12, n_t: int = 32,
                 clip_subsamples: int = 8):
        self.grid = grid
        self.domain = domain if domain is not None else getattr(grid, "domain", None)
        self.centers = grid.flat_centers()
        self.volumes = grid.flat_volumes()
        self.h = grid.h if grid.kind == "masked" else max(grid.dr, float(np.max(grid.radii)) * grid.dtheta)
        self.delta = patch * self.h
        xg, wg = np.polynomial.legendre.leggauss(n_r)
        self.r_nodes = 0.5 * self.delta * (xg + 1.0)
        self.r_weights = 0.5 * self.delta * wg
        self.t_nodes = 2.0 * np.pi * np.arange(n_t) / n_t
        self.t_weight = 2.0 * np.pi / n_t
        self.n_sub = clip_subsamples
        # local polar nodes relative to the singular point, with r dr dtheta weights
        rr, tt = np.meshgrid(self.r_nodes, self.t_nodes, indexing="ij")
        ww = np.outer(self.r_weights, np.full(n_t, self.t_weight)) * rr
        self.patch_offsets = (rr * np.exp(1j * tt)).ravel()
        self.patch_weights = ww.ravel()

    def plain(self, F) -> float:
        """Midpoint rule for integrands without singularities in the domain."""
        return float(np.sum(F(self.centers) * self.volumes))

    def _clipped_weights(self, x: complex) -> np.ndarray:
        d = np.abs(self.centers - x)
        w = self.volumes.copy()
        half_diag = 0.75 * self.h  # > h/sqrt(2), safe for polar cells too
        inside = d <= self.delta - half_diag
        w[inside] = 0.0
        straddle = np.where((d > self.delta - half_diag) & (d < self.delta + half_diag))[0]
        if len(straddle):
            s = self.n_sub
            off = (np.arange(s) + 0.5) / s - 0.5
            ox, oy = np.meshgrid(off, off, indexing="ij")
            sub = (ox + 1j * oy).ravel() * self.h
            for idx in straddle:
                frac_in = float(np.mean(np.abs(self.centers[idx] + sub - x) <= self.delta))
                w[idx] = self.volumes[idx] * (1.0 - frac_in)
        return w

    def integrate(self, F, x: complex) -> float:
        """Integral over the domain of F(y) dy with F weakly singular at y=x.

        F must be vectorized over complex points and integrable against the
        local polar rule (at worst |y-x|^-1 times a bounded factor).
        """
        x = complex(x)
        if self.domain is not None and not bool(self.domain.contains(np.array([x]))[0]):
            raise ValueError("singular point lies outside the domain")
        w = self._clipped_weights(x)
        keep = w > 0
        far = float(np.sum(F(self.centers[keep]) * w[keep]))
        pts = x + self.patch_offsets
        pw = self.patch_weights
        if self.domain is not None:
            mask = self.domain.contains(pts)
            pts, pw = pts[mask], pw[mask]
        near = float(np.sum(F(pts) * pw))
        return far + near

    def integrate_many(self, F, xs) -> np.ndarray:
        return np.array([self.integrate(F, x) for x in np.asarray(xs, dtype=complex).ravel()])

    def integrate_complex(self, F, x: complex) -> complex:
        """Complex-valued variant of integrate()."""
        re = self.integrate(lambda y: np.real(F(y)), x)
        im = self.integrate(lambda y: np.imag(F(y)), x)
        return complex(re, im)
