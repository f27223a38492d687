"""Neumann Green's function N(z,w) = Gamma(z,w) + H(z,w) on circular domains.

H is assembled as a sum of closed-form image parts, one per boundary
circle, plus a collocation-solved remainder whose Neumann data stays smooth
uniformly in the source position.  The image parts carry the whole
near-boundary singularity (disc reflection on the outer circle,
exterior-disc reflection on each hole), so evaluations and the cancellation
diagnostics remain accurate for sources arbitrarily close to the boundary.

Derivatives in the field point are exact (complex-analytic); mixed
source-field derivatives are exact for Gamma and the images and use central
differences in the source only for the smooth remainder.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .geometry import CircularDomain, DomainError
from .laplace import CollocationSystem, SeriesHarmonic

__all__ = ["NeumannGreen", "GreenSplit", "singularity_ladder", "fit_slope"]

_QUANTUM = 1e-9
_SOURCE_BAND = 1e-6
_FD_SOURCE = 1e-4


def _gamma(z, w):
    return np.log(np.abs(np.asarray(z, dtype=complex) - w)) / (2 * np.pi)


def _dz_gamma(z, w):
    """Wirtinger d/dz of Gamma; the gradient of Gamma is 2*(Re, -Im) of this."""
    return 1.0 / (4 * np.pi * (np.asarray(z, dtype=complex) - w))


class _ImagePart:
    """Closed-form image contribution of one boundary circle.

    Outer circle: H_0 = (1/2pi) Re log(1 - z conj(w)).
    Hole (b, r):  H_j = (1/2pi) Re log(1 - r^2 / ((z-b)(conj(w)-conj(b)))).
    Both are harmonic in z throughout the domain and symmetric in (z, w).
    """

    def __init__(self, center: complex, radius: float, outer: bool):
        self.b = center
        self.r = radius
        self.outer = outer

    def value(self, z, w):
        z = np.asarray(z, dtype=complex)
        if self.outer:
            arg = 1.0 - z * np.conj(w)
        else:
            arg = 1.0 - self.r**2 / ((z - self.b) * (np.conj(w) - np.conj(self.b)))
        return np.log(np.abs(arg)) / (2 * np.pi)

    def reflection(self, w) -> complex:
        """Image of the source across this circle."""
        if self.outer:
            return 1.0 / np.conj(w)
        return self.b + self.r**2 / (np.conj(w) - np.conj(self.b))

    def circle_mean(self, center: complex, radius: float, w) -> float:
        """Arclength mean of the image value over the circle (center, radius).

        Uses |1 - z conj(w)| = |w| |z - 1/conj(w)| and the mean-value identity
        mean_{|z-c|=r} log|z-a| = log max(|a-c|, r).
        """
        zs = self.reflection(w)
        if self.outer:
            c1 = np.log(abs(w)) if abs(w) > 0 else -np.inf
            return (c1 + np.log(max(abs(zs - center), radius))) / (2 * np.pi)
        # hole image: value = (1/2pi)(log|z - z*| - log|z - b|)
        return (
            np.log(max(abs(zs - center), radius)) - np.log(max(abs(self.b - center), radius))
        ) / (2 * np.pi)

    def dz(self, z, w):
        """Wirtinger d/dz (value is Re f with analytic f; this is f'/2)."""
        z = np.asarray(z, dtype=complex)
        if self.outer:
            return -np.conj(w) / (4 * np.pi * (1.0 - z * np.conj(w)))
        u = z - self.b
        vb = np.conj(w) - np.conj(self.b)
        return self.r**2 / (4 * np.pi * u * (u * vb - self.r**2))

    def dz2(self, z, w):
        z = np.asarray(z, dtype=complex)
        if self.outer:
            return -np.conj(w) ** 2 / (4 * np.pi * (1.0 - z * np.conj(w)) ** 2)
        u = z - self.b
        vb = np.conj(w) - np.conj(self.b)
        return -self.r**2 * (2.0 * u * vb - self.r**2) / (4 * np.pi * (u * (u * vb - self.r**2)) ** 2)

    def dwbar(self, z, w):
        z = np.asarray(z, dtype=complex)
        if self.outer:
            return -z / (4 * np.pi * (1.0 - z * np.conj(w)))
        u = z - self.b
        vb = np.conj(w) - np.conj(self.b)
        return self.r**2 / (4 * np.pi * vb * (u * vb - self.r**2))

    def dz_dwbar(self, z, w):
        z = np.asarray(z, dtype=complex)
        if self.outer:
            return -1.0 / (4 * np.pi * (1.0 - z * np.conj(w)) ** 2)
        u = z - self.b
        vb = np.conj(w) - np.conj(self.b)
        return -self.r**2 / (4 * np.pi * (u * vb - self.r**2) ** 2)
    # d/dzbar d/dwbar vanishes for both image types


@dataclass
class GreenSplit:
    """Near-boundary split N = N_j + R_j with gradients of both parts."""

    component: int
    principal: np.ndarray
    remainder: np.ndarray
    principal_gradient: np.ndarray
    remainder_gradient: np.ndarray

    @property
    def total(self):
        return self.principal + self.remainder


class _Corrector:
    """H(., w) = sum of image parts + series remainder + additive constant."""

    def __init__(self, green: "NeumannGreen", w: complex, series: SeriesHarmonic, const: float):
        self.green = green
        self.w = w
        self.series = series
        self.const = const

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = self.series(z) + self.const
        for img in self.green.images:
            out = out + img.value(z, self.w)
        return out

    def dz(self, z):
        """Wirtinger d/dz of H(., w)."""
        z = np.asarray(z, dtype=complex)
        out = 0.5 * self.series.analytic_derivative(z)
        for img in self.green.images:
            out = out + img.dz(z, self.w)
        return out

    def dz2(self, z):
        z = np.asarray(z, dtype=complex)
        out = 0.5 * self.series.analytic_second(z)
        for img in self.green.images:
            out = out + img.dz2(z, self.w)
        return out

    def analytic_derivative(self, z):
        """g' with H = Re g; the gradient of H is (Re g', -Im g')."""
        return 2.0 * self.dz(z)

    def analytic_second(self, z):
        return 2.0 * self.dz2(z)

    def gradient(self, z):
        gp = self.analytic_derivative(z)
        return np.stack([np.real(gp), -np.imag(gp)], axis=-1)


class NeumannGreen:
    """Evaluator for the Neumann Green's function and its derivatives.

    Sources are solved on demand and cached (LRU keyed by the source point
    quantized to 1e-9, internally locked); the collocation factorization is
    shared across all sources of the domain.
    """

    def __init__(self, domain: CircularDomain, degree: int = 24, cache_size: int = 1024):
        self.domain = domain
        self.degree = degree
        self.l = domain.boundary_length()
        self.system = CollocationSystem(domain, degree, "neumann")
        self.images = [_ImagePart(0.0 + 0.0j, 1.0, True)] + [
            _ImagePart(b, r, False) for b, r in domain.holes
        ]
        self._cache: OrderedDict[tuple, _Corrector] = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()
        self._bq = [domain.boundary_quadrature(j, 8 * degree) for j in range(domain.k)]

    # -- solving -----------------------------------------------------------

    def _smooth_data(self, pts, nu, w):
        data = -2.0 * np.real(_dz_gamma(pts, w) * nu) + 1.0 / self.l
        for img in self.images:
            data = data - 2.0 * np.real(img.dz(pts, w) * nu)
        return data

    def _check_compatibility(self, w: complex) -> None:
        total = 0.0
        for pts, wts, normals, _ in self._bq:
            nu = normals[:, 0] + 1j * normals[:, 1]
            total += float(np.sum(self._smooth_data(pts, nu, w) * wts))
        if abs(total) > 1e-8:
            raise RuntimeError(f"internal consistency: Neumann data flux {total:.2e} != 0")

    def solve_H(self, w) -> _Corrector:
        """Harmonic corrector H(., w); refuses sources within 1e-6 of the boundary."""
        w = complex(w)
        if not bool(self.domain.contains(np.array([w]))[0]):
            raise DomainError("source must lie strictly inside the domain")
        if float(self.domain.dist_to_boundary(np.array([w]))[0]) < _SOURCE_BAND:
            raise DomainError("source too close to the boundary; evaluate the principal part instead")
        key = (round(w.real / _QUANTUM), round(w.imag / _QUANTUM))
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        self._check_compatibility(w)
        rhs = np.concatenate([self._smooth_data(self.system.points, self.system.normals, w), [0.0]])
        series = SeriesHarmonic(self.domain, self.degree, self.system.solve(rhs))
        corr = _Corrector(self, w, series, -self._boundary_mean_closed(w))
        with self._lock:
            self._cache[key] = corr
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return corr

    def _boundary_mean_closed(self, w: complex) -> float:
        """Arclength mean over the boundary of Gamma + all image parts.

        Closed form via the mean-value identity; the series remainder has
        zero mean by the solve constraint.  Normalizing by this mean makes
        the boundary mean of N(., w) vanish, the symmetric normalization of
        the Neumann function, and keeps the constant exactly smooth in w.
        """
        total = 0.0
        for j in range(self.domain.k):
            c = self.domain.component_center(j)
            r = self.domain.component_radius(j)
            length = 2 * np.pi * r
            # Gamma: mean of log|z-w| over the circle
            mean_j = np.log(max(abs(w - c), r)) / (2 * np.pi)
            for img in self.images:
                mean_j += img.circle_mean(c, r, w)
            total += length * mean_j
        return total / self.l

    # -- evaluation ---------------------------------------------------------

    def eval_N(self, z, w):
        """N(z,w); z vectorized, z != w."""
        z = np.asarray(z, dtype=complex)
        if np.any(np.abs(z - w) < 1e-14):
            raise DomainError("singular evaluation: z == w")
        return _gamma(z, w) + self.solve_H(w)(z)

    def grad_z_N(self, z, w):
        """Gradient of N in its first argument, stacked (d/dx, d/dy)."""
        z = np.asarray(z, dtype=complex)
        gp = 2.0 * _dz_gamma(z, w) + self.solve_H(w).analytic_derivative(z)
        return np.stack([np.real(gp), -np.imag(gp)], axis=-1)

    def hess_z_N(self, z, w):
        """(N_xx, N_xy, N_yy) in the first argument."""
        z = np.asarray(z, dtype=complex)
        gpp = -1.0 / (2 * np.pi * (z - w) ** 2) + self.solve_H(w).analytic_second(z)
        return np.real(gpp), -np.imag(gpp), -np.real(gpp)

    def eval_H(self, z, w):
        return self.solve_H(w)(z)

    def dz_H(self, z, w):
        return self.solve_H(w).dz(z)

    def _series_source_fd(self, z, w, order: int, delta: float = _FD_SOURCE):
        """Central source-derivatives (d/dw1, d/dw2) of the smooth remainder's
        exact z-derivative of the given order (0: value, 1: dz, 2: dz2)."""
        z = np.asarray(z, dtype=complex)

        def part(ww):
            corr = self.solve_H(ww)
            if order == 0:
                return corr.series(z) + corr.const
            if order == 1:
                return 0.5 * corr.series.analytic_derivative(z)
            return 0.5 * corr.series.analytic_second(z)

        d1 = (part(w + delta) - part(w - delta)) / (2 * delta)
        d2 = (part(w + 1j * delta) - part(w - 1j * delta)) / (2 * delta)
        return d1, d2

    def dwbar_H(self, z, w):
        """d/d(conj w) of H(z,w): exact images + source FD on the remainder."""
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for img in self.images:
            out = out + img.dwbar(z, w)
        d1, d2 = self._series_source_fd(z, w, order=0)
        return out + 0.5 * (d1 + 1j * d2)

    def mixed_H(self, z, w):
        """(M1, M2) = (d/dwbar d/dz H, d/dwbar d/dzbar H)."""
        z = np.asarray(z, dtype=complex)
        m1 = np.zeros(z.shape, dtype=complex)
        for img in self.images:
            m1 = m1 + img.dz_dwbar(z, w)
        a1, a2 = self._series_source_fd(z, w, order=1)
        m1 = m1 + 0.5 * (a1 + 1j * a2)
        m2 = 0.5 * (np.conj(a1) + 1j * np.conj(a2))
        return m1, m2

    def mixed_N(self, z, w):
        """(M1, M2) for the full N; M2 picks up the Gamma term."""
        z = np.asarray(z, dtype=complex)
        m1, m2 = self.mixed_H(z, w)
        m2 = m2 + 1.0 / (4 * np.pi * (np.conj(z) - np.conj(w)) ** 2)
        return m1, m2

    def cross_kernel(self, x, ys):
        """2x2 kernels K[i][j] = d/dx_i d/dy_j N(x, y) over the y array.

        x plays the source (w) slot, ys the field (z) slot.
        """
        m1, m2 = self.mixed_N(ys, x)
        s, d = m1 + m2, m1 - m2
        return np.stack(
            [
                np.stack([2 * np.real(s), -2 * np.imag(d)], axis=-1),
                np.stack([2 * np.imag(s), 2 * np.real(d)], axis=-1),
            ],
            axis=-2,
        )

    def hess_y_kernel(self, x, ys):
        """2x2 kernels d/dy_i d/dy_j N(x, y) over the y array (exact)."""
        ys = np.asarray(ys, dtype=complex)
        dz2 = -1.0 / (4 * np.pi * (ys - x) ** 2) + self.solve_H(x).dz2(ys)
        h11 = 2 * np.real(dz2)
        h12 = -2 * np.imag(dz2)
        return np.stack(
            [np.stack([h11, h12], axis=-1), np.stack([h12, -h11], axis=-1)], axis=-2
        )

    # -- near-boundary structure ---------------------------------------------

    def near_component(self, w) -> int | None:
        d4 = self.domain.gap() / 4
        for j in range(self.domain.k):
            if float(self.domain.dist_to_component(np.array([complex(w)]), j)[0]) <= d4 + 1e-12:
                return j
        return None

    def _require_near(self, point, j: int) -> None:
        d4 = self.domain.gap() / 4
        if float(self.domain.dist_to_component(np.array([complex(point)]), j)[0]) > d4 + 1e-12:
            raise DomainError(f"point is not within d/4 of component {j}")

    def principal_part(self, j: int, z, w) -> GreenSplit:
        """Split N = N_j + R_j for a source within d/4 of component j.

        The remainder and its gradient are assembled without the log term,
        so they stay finite at z = w.
        """
        self._require_near(w, j)
        img = self.images[j]
        z = np.asarray(z, dtype=complex)
        corr = self.solve_H(w)
        principal = _gamma(z, w) + img.value(z, w)
        gp_p = 2.0 * (_dz_gamma(z, w) + img.dz(z, w))
        rem = corr(z) - img.value(z, w)
        gp_r = corr.analytic_derivative(z) - 2.0 * img.dz(z, w)
        return GreenSplit(
            component=j,
            principal=principal,
            remainder=rem,
            principal_gradient=np.stack([np.real(gp_p), -np.imag(gp_p)], axis=-1),
            remainder_gradient=np.stack([np.real(gp_r), -np.imag(gp_r)], axis=-1),
        )

    def tangent_at_projection(self, j: int, w) -> complex:
        """tau = i (w - b_j): tangent of Gamma_j at the projection of w."""
        return 1j * (complex(w) - self.domain.component_center(j))

    def cancellation_first_order(self, j: int, z, w):
        """|tau dz H + conj(tau) dwbar H| with tau = i(w - b_j), and |grad H|."""
        self._require_near(w, j)
        tau = self.tangent_at_projection(j, w)
        combo = tau * self.dz_H(z, w) + np.conj(tau) * self.dwbar_H(z, w)
        return np.abs(combo), 2.0 * np.abs(self.dz_H(z, w))

    def cancellation_second_complex(self, j: int, z, w):
        """(tau d/dz + conj(tau) d/dwbar) dz H with tau = i(w - b_j)."""
        self._require_near(w, j)
        tau = self.tangent_at_projection(j, w)
        m1, _ = self.mixed_H(z, w)
        return tau * self.solve_H(w).dz2(z) + np.conj(tau) * m1

    def cancellation_second_order(self, j: int, x, y, p: int):
        """|sum_s tau_s (d/dx_s + d/dy_s) d/dy_p N(x,y)| for p in {1,2}.

        The translation-invariant Gamma part drops out identically; the image
        and remainder parts are assembled from exact and source-FD Wirtinger
        derivatives, so the cancellation happens analytically.
        """
        self._require_near(x, j)
        if p not in (1, 2):
            raise DomainError("p must be 1 or 2")
        tau = self.tangent_at_projection(j, x)
        tau = tau / abs(tau)
        y = np.asarray(y, dtype=complex)
        dz2 = self.solve_H(x).dz2(y)  # d^2/dz^2 of H only; Gamma cancels
        m1, m2 = self.mixed_H(y, x)
        if p == 1:
            val = tau * dz2 + np.conj(tau) * (m1 + m2)
        else:
            val = 1j * (tau * dz2 + np.conj(tau) * (m1 - m2))
        return np.abs(2.0 * np.real(val))


def fit_slope(distances, values) -> float:
    """Log-log least-squares slope."""
    lx = np.log(np.asarray(distances, dtype=float))
    ly = np.log(np.asarray(values, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    slope, _ = np.linalg.lstsq(A, ly, rcond=None)[0]
    return float(slope)


def singularity_ladder(green: NeumannGreen, j: int, levels: int = 5, n_field: int = 600,
                       seed: int = 0):
    """Dyadic source ladder d/4 * 2^-i toward component j.

    Records sup |grad H|, sup |hess H|, sup of both cancellation combos and
    sup |grad R_j| over a field sample biased toward the projection point,
    plus fitted log-log slopes.
    """
    dom = green.domain
    d = dom.gap()
    rng = np.random.default_rng(seed)
    z = rng.uniform(-1, 1, 6 * n_field) + 1j * rng.uniform(-1, 1, 6 * n_field)
    z = z[dom.contains(z) & (np.abs(dom.dist_to_boundary(z)) > 1e-3)][:n_field]
    theta0 = 0.7
    b = dom.component_center(j)
    r = dom.component_radius(j)
    sign = -1.0 if j == 0 else 1.0  # inward offset from the circle
    distances = []
    rows = {"grad_H": [], "hess_H": [], "combo1": [], "combo2": [], "grad_R": []}
    for i in range(levels):
        dist = d / 4 * 0.5**i
        w = b + (r + sign * dist) * np.exp(1j * theta0)
        ang = theta0 + np.linspace(-4, 4, 33) * dist / r
        local = np.concatenate(
            [b + (r + sign * s * dist) * np.exp(1j * ang) for s in (0.125, 0.25, 0.5, 1.0, 2.0)]
        )
        local = local[dom.contains(local) & (np.abs(local - w) > 1e-9)]
        zs = np.concatenate([z, local])
        corr = green.solve_H(w)
        combo1, _ = green.cancellation_first_order(j, zs, w)
        combo2 = np.maximum(
            green.cancellation_second_order(j, w, zs, 1),
            green.cancellation_second_order(j, w, zs, 2),
        )
        split = green.principal_part(j, zs, w)
        distances.append(dist)
        rows["grad_H"].append(float(np.max(np.abs(corr.analytic_derivative(zs)))))
        rows["hess_H"].append(float(np.max(np.abs(corr.analytic_second(zs)))))
        rows["combo1"].append(float(np.max(combo1)))
        rows["combo2"].append(float(np.max(combo2)))
        rows["grad_R"].append(float(np.max(np.linalg.norm(split.remainder_gradient, axis=-1))))
    slopes = {key: fit_slope(distances, vals) for key, vals in rows.items()}
    return np.array(distances), rows, slopes
