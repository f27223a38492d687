"""Geometry of k-connected planar domains: circular domains, smooth-curve
domains, structured grids, boundary frames and projections.

Points are complex numbers z = x + iy throughout; vectors returned as
(2,)-arrays use the (x, y) ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

__all__ = [
    "DomainError",
    "CircularDomain",
    "SmoothDomain",
    "PolarGrid",
    "MaskedGrid",
    "build_grid",
    "load_domain",
]

_CENTER_EPS = 1e-13


class DomainError(ValueError):
    """Invalid domain geometry or an operation violating its preconditions."""


def _as_complex(p) -> complex:
    if isinstance(p, complex):
        return p
    arr = np.asarray(p, dtype=float).ravel()
    if arr.size == 1:
        return complex(arr[0], 0.0)
    return complex(arr[0], arr[1])


@dataclass(frozen=True)
class CircularDomain:
    """Unit disc minus k-1 disjoint closed sub-discs.

    The outer boundary component Gamma_0 is the unit circle centered at the
    origin; hole j (1-based) is the circle |z - b_j| = r_j.
    """

    holes: tuple[tuple[complex, float], ...] = ()

    def __init__(self, holes=()):
        normalized = tuple((_as_complex(b), float(r)) for b, r in holes)
        object.__setattr__(self, "holes", normalized)
        self._validate()

    def _validate(self) -> None:
        for b, r in self.holes:
            if r <= 0:
                raise DomainError(f"hole radius must be positive, got {r}")
            if abs(b) + r >= 1.0:
                raise DomainError(
                    f"hole (center={b}, radius={r}) is not strictly inside the unit disc"
                )
        for i, (bi, ri) in enumerate(self.holes):
            for bj, rj in self.holes[i + 1 :]:
                if abs(bi - bj) <= ri + rj:
                    raise DomainError("hole closures overlap or touch")
        if self.holes and self.gap() <= 0:
            raise DomainError("domain gap is not strictly positive")

    @property
    def k(self) -> int:
        """Number of boundary components."""
        return len(self.holes) + 1

    @property
    def centers(self) -> np.ndarray:
        return np.array([b for b, _ in self.holes], dtype=complex)

    @property
    def radii(self) -> np.ndarray:
        return np.array([r for _, r in self.holes], dtype=float)

    def component_center(self, j: int) -> complex:
        return 0.0 + 0.0j if j == 0 else self.holes[j - 1][0]

    def component_radius(self, j: int) -> float:
        return 1.0 if j == 0 else self.holes[j - 1][1]

    def boundary_length(self) -> float:
        return 2.0 * np.pi * (1.0 + float(np.sum(self.radii)))

    def gap(self) -> float:
        """Minimum distance between distinct boundary circles."""
        gaps = [1.0 - (abs(b) + r) for b, r in self.holes]
        for i, (bi, ri) in enumerate(self.holes):
            for bj, rj in self.holes[i + 1 :]:
                gaps.append(abs(bi - bj) - ri - rj)
        if not gaps:
            return 1.0  # simply connected disc: use the radius as the scale
        g = min(gaps)
        if g <= 0:
            raise DomainError("non-positive gap")
        return g

    def contains(self, z) -> np.ndarray:
        """Strict interior test, vectorized over z."""
        z = np.asarray(z, dtype=complex)
        inside = np.abs(z) < 1.0
        for b, r in self.holes:
            inside &= np.abs(z - b) > r
        return inside

    def dist_to_component(self, z, j: int) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        if j == 0:
            return np.abs(1.0 - np.abs(z))
        b, r = self.holes[j - 1]
        return np.abs(np.abs(z - b) - r)

    def dist_to_boundary(self, z) -> np.ndarray:
        d = self.dist_to_component(z, 0)
        for j in range(1, self.k):
            d = np.minimum(d, self.dist_to_component(z, j))
        return d

    def boundary_point(self, j: int, theta):
        """Point on component j at angle parameter theta (vectorized)."""
        theta = np.asarray(theta, dtype=float)
        return self.component_center(j) + self.component_radius(j) * np.exp(1j * theta)

    def boundary_frame(self, j: int, theta):
        """(point, outer normal n, tangent n_perp) at angle theta on component j.

        The outer normal points out of the fluid: radially outward on Gamma_0
        and toward the hole center on Gamma_j.  n_perp = (n2, -n1).
        """
        if not 0 <= j < self.k:
            raise DomainError(f"unknown boundary component {j}")
        theta = np.asarray(theta, dtype=float)
        e = np.exp(1j * theta)
        point = self.component_center(j) + self.component_radius(j) * e
        sign = 1.0 if j == 0 else -1.0
        n = np.stack([sign * e.real, sign * e.imag], axis=-1)
        n_perp = np.stack([n[..., 1], -n[..., 0]], axis=-1)
        return point, n, n_perp

    def project_to_component(self, x, j: int):
        """Radial projection of the interior point x onto component j."""
        x = _as_complex(x)
        c = self.component_center(j)
        if abs(x - c) < _CENTER_EPS:
            raise DomainError(f"degenerate projection: point coincides with center of component {j}")
        return c + self.component_radius(j) * (x - c) / abs(x - c)

    def is_concentric_annulus(self, tol: float = 1e-8) -> bool:
        return len(self.holes) == 1 and abs(self.holes[0][0]) <= tol

    def boundary_quadrature(self, j: int, n: int):
        """Trapezoid (spectral on circles) nodes, weights, frames on component j."""
        theta = 2.0 * np.pi * np.arange(n) / n
        point, normal, tangent = self.boundary_frame(j, theta)
        w = np.full(n, 2.0 * np.pi * self.component_radius(j) / n)
        return point, w, normal, tangent


def _fft_derivative(samples: np.ndarray, order: int = 1) -> np.ndarray:
    """Derivative of a periodic sample table w.r.t. the [0, 2pi) parameter."""
    n = len(samples)
    coef = np.fft.fft(samples)
    kvec = np.fft.fftfreq(n, d=1.0 / n) * 1j
    if n % 2 == 0 and order % 2 == 1:
        kvec[n // 2] = 0.0  # Nyquist mode has no consistent odd derivative
    return np.fft.ifft(coef * kvec**order)


class _Curve:
    """Closed smooth curve from uniform samples with trigonometric interpolation."""

    def __init__(self, samples: np.ndarray):
        z = np.asarray(samples, dtype=complex).ravel()
        if len(z) < 64:
            raise DomainError("smooth curves need at least 64 uniform samples")
        self.z = z
        self.n = len(z)
        self.dz = _fft_derivative(z, 1)
        self.d2z = _fft_derivative(z, 2)
        self._coef = np.fft.fft(z) / self.n
        # signed area > 0 for counterclockwise parametrization
        self.signed_area = 0.5 * float(np.sum(np.imag(np.conj(z) * self.dz))) * (2 * np.pi / self.n)

    def reversed(self) -> "_Curve":
        return _Curve(self.z[::-1])

    def at(self, t):
        """Evaluate the trigonometric interpolant at parameter t in [0, 2pi)."""
        t = np.asarray(t, dtype=float)
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.exp(1j * np.outer(t, k)) @ self._coef

    def second_difference_defect(self) -> float:
        """Max mismatch between FFT second derivative and second differences."""
        h = 2 * np.pi / self.n
        fd = (np.roll(self.z, -1) - 2 * self.z + np.roll(self.z, 1)) / h**2
        return float(np.max(np.abs(fd - self.d2z)))

    def contains(self, pts) -> np.ndarray:
        """Winding-number interior test for the closed curve."""
        pts = np.asarray(pts, dtype=complex)
        w = self.z[None, :] - pts.ravel()[:, None]
        ang = np.angle(w[:, np.concatenate([np.arange(1, self.n), [0]])] / w)
        wind = np.sum(ang, axis=1) / (2 * np.pi)
        return (np.abs(wind) > 0.5).reshape(pts.shape)


class SmoothDomain:
    """k-connected domain bounded by smooth closed curves.

    Curves are ingested as >=64 uniformly spaced samples; the outer curve is
    normalized counterclockwise, hole curves clockwise, so that the rotated
    tangent (t2, -t1) is the domain-outer normal on every component.
    """

    def __init__(self, outer, holes=()):
        curve = _Curve(outer)
        if curve.signed_area < 0:
            curve = curve.reversed()
        self.curves: list[_Curve] = [curve]
        for samples in holes:
            c = _Curve(samples)
            if c.signed_area > 0:
                c = c.reversed()
            self.curves.append(c)
        self._validate()

    def _validate(self) -> None:
        outer = self.curves[0]
        for j, hole in enumerate(self.curves[1:], start=1):
            if not np.all(outer.contains(hole.z)):
                raise DomainError(f"hole {j} does not lie inside the outer curve")
        for i in range(1, len(self.curves)):
            for j in range(i + 1, len(self.curves)):
                if np.all(self.curves[i].contains(self.curves[j].z[:4])) or np.all(
                    self.curves[j].contains(self.curves[i].z[:4])
                ):
                    raise DomainError("hole curves are nested")
        for c in self.curves:
            if c.second_difference_defect() > 1e-2 * np.max(np.abs(c.dz)):
                raise DomainError("curve samples are not C^2-smooth to tolerance")

    @property
    def k(self) -> int:
        return len(self.curves)

    def contains(self, pts) -> np.ndarray:
        inside = self.curves[0].contains(pts)
        for hole in self.curves[1:]:
            inside &= ~hole.contains(pts)
        return inside

    def boundary_frame(self, j: int, t):
        """(point, outer normal, tangent n_perp) at parameter t on component j."""
        if not 0 <= j < self.k:
            raise DomainError(f"unknown boundary component {j}")
        c = self.curves[j]
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pts = c.at(t)
        k = np.fft.fftfreq(c.n, d=1.0 / c.n)
        dz = np.exp(1j * np.outer(t, k)) @ (np.fft.fft(c.z) / c.n * (1j * k))
        tan = dz / np.abs(dz)
        n = np.stack([tan.imag, -tan.real], axis=-1)
        n_perp = np.stack([n[..., 1], -n[..., 0]], axis=-1)
        return pts, n, n_perp

    def boundary_quadrature(self, j: int):
        """Trapezoid nodes/weights in arclength on component j (spectral)."""
        c = self.curves[j]
        w = np.abs(c.dz) * (2 * np.pi / c.n)
        tan = c.dz / np.abs(c.dz)
        n = np.stack([tan.imag, -tan.real], axis=-1)
        return c.z, w, n, tan


@dataclass
class PolarGrid:
    """Cell-centered polar grid on a concentric annulus r_in < |z| < r_out."""

    r_in: float
    r_out: float
    nr: int
    ntheta: int
    radii: np.ndarray = field(init=False)
    thetas: np.ndarray = field(init=False)

    def __post_init__(self):
        self.dr = (self.r_out - self.r_in) / self.nr
        self.dtheta = 2.0 * np.pi / self.ntheta
        self.radii = self.r_in + (np.arange(self.nr) + 0.5) * self.dr
        self.thetas = (np.arange(self.ntheta) + 0.5) * self.dtheta

    @property
    def kind(self) -> str:
        return "polar"

    @property
    def h(self) -> float:
        return min(self.dr, self.r_in * self.dtheta)

    @property
    def shape(self):
        return (self.nr, self.ntheta)

    def centers(self) -> np.ndarray:
        R, T = np.meshgrid(self.radii, self.thetas, indexing="ij")
        return R * np.exp(1j * T)

    def volumes(self) -> np.ndarray:
        R, _ = np.meshgrid(self.radii, self.thetas, indexing="ij")
        return R * self.dr * self.dtheta

    def flat_centers(self) -> np.ndarray:
        return self.centers().ravel()

    def flat_volumes(self) -> np.ndarray:
        return self.volumes().ravel()

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(np.asarray(values) * self.volumes()))


@dataclass
class MaskedGrid:
    """Masked Cartesian grid over [-1,1]^2 for general circular domains."""

    domain: CircularDomain
    n: int  # cells per unit length; h = 1/n

    def __post_init__(self):
        self.h = 1.0 / self.n
        axis = -1.0 + (np.arange(2 * self.n) + 0.5) * self.h
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        self.zgrid = X + 1j * Y
        self.mask = self.domain.contains(self.zgrid)
        # deep-interior mask: cells whose full h-neighbourhood stays inside
        self.core = self.mask & (self.domain.dist_to_boundary(self.zgrid) > 2.0 * self.h)

    @property
    def kind(self) -> str:
        return "masked"

    @property
    def shape(self):
        return self.zgrid.shape

    def flat_centers(self) -> np.ndarray:
        return self.zgrid[self.mask]

    def flat_volumes(self) -> np.ndarray:
        return np.full(int(np.count_nonzero(self.mask)), self.h**2)

    def integrate(self, values: np.ndarray) -> float:
        v = np.asarray(values)
        if v.shape == self.zgrid.shape:
            v = v[self.mask]
        return float(np.sum(v) * self.h**2)


def build_grid(domain: CircularDomain, resolution: int):
    """Grid covering the domain; exact polar grid on the concentric annulus.

    Refuses resolutions that under-resolve the gap (gap < 4h).
    """
    if resolution < 8:
        raise DomainError("resolution must be at least 8")
    if domain.is_concentric_annulus():
        r = domain.holes[0][1]
        grid = PolarGrid(r, 1.0, resolution, 4 * resolution)
        if domain.gap() < 4 * grid.dr:
            raise DomainError("grid too coarse for the domain gap")
        return grid
    grid = MaskedGrid(domain, resolution)
    if domain.gap() < 4 * grid.h:
        raise DomainError("grid too coarse for the domain gap")
    return grid


def load_domain(path):
    """Load a domain description file (YAML with `holes:` or `curves:` keys)."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise DomainError(f"malformed domain file {path}")
    if "curves" in data:
        curves = [np.array([complex(x, y) for x, y in c]) for c in data["curves"]]
        return SmoothDomain(curves[0], curves[1:])
    holes = []
    for hole in data.get("holes", []):
        cx, cy = hole["center"]
        holes.append((complex(cx, cy), float(hole["radius"])))
    outer = data.get("outer", "unit")
    if outer not in ("unit", None):
        # general outer circles are rescaled on ingest
        cx, cy = outer.get("center", (0.0, 0.0))
        rad = float(outer.get("radius", 1.0))
        c0 = complex(cx, cy)
        holes = [((b - c0) / rad, r / rad) for b, r in holes]
    return CircularDomain(holes)
