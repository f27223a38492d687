"""Laplace solves on circular domains by log-source + Laurent collocation.

A harmonic function is represented as h = Re g(z) with

    g(z) = c0 + sum_j alpha_j log(z - b_j) + sum_m a_m z^m
              + sum_j sum_m c_{jm} (z - b_j)^{-m},

alpha_j real, a_m and c_{jm} complex.  Every basis element is harmonic, so
the representation is exactly harmonic regardless of the fitted
coefficients; only boundary data is approximated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CircularDomain, DomainError, MaskedGrid

__all__ = [
    "CollocationError",
    "IndexCountError",
    "SeriesHarmonic",
    "CollocationSystem",
    "solve_dirichlet",
    "harmonic_measure",
    "CriticalPoint",
    "find_critical_points",
    "period_matrix",
    "PeriodMatrix",
]

DEFAULT_DEGREE = 24


class CollocationError(RuntimeError):
    """Collocation residual above tolerance; increase the truncation degree M."""


class IndexCountError(RuntimeError):
    """Critical-point index sum does not close; carries the points found."""

    def __init__(self, message, points):
        super().__init__(message)
        self.points = points


class _Basis:
    """Real harmonic basis on a circular domain, complex-analytic under the hood.

    Each real basis element is Re(g_b) for an analytic g_b; complex modes are
    split into the pair g_b = mode and g_b = 1j*mode.
    """

    def __init__(self, domain: CircularDomain, degree: int):
        self.domain = domain
        self.M = int(degree)
        self.centers = domain.centers
        self.n_log = len(domain.holes)
        # layout: [const, logs..., outer modes (Re/Im pairs), hole modes (Re/Im pairs)]
        self.size = 1 + self.n_log + 2 * self.M + 2 * self.M * self.n_log

    @staticmethod
    def _powers(w: np.ndarray, mmax: int) -> np.ndarray:
        """[w^1, ..., w^mmax] by cumulative products (complex pow is slow)."""
        out = np.empty((len(w), mmax), dtype=complex)
        out[:, 0] = w
        for m in range(1, mmax):
            np.multiply(out[:, m - 1], w, out=out[:, m])
        return out

    def _mode_matrix(self, z: np.ndarray, order: int) -> np.ndarray:
        """Complex matrix of the order-th analytic derivative of every mode."""
        z = np.asarray(z, dtype=complex).ravel()
        n = len(z)
        g = np.zeros((n, self.size), dtype=complex)
        if order == 0:
            g[:, 0] = 1.0
        col = 1
        for b in self.centers:
            w = z - b
            if order == 0:
                g[:, col] = np.log(w)
            elif order == 1:
                g[:, col] = 1.0 / w
            else:
                g[:, col] = -1.0 / w**2
            col += 1
        m = np.arange(1, self.M + 1)
        zp = self._powers(z, self.M)
        if order == 0:
            block = zp
        elif order == 1:
            block = np.concatenate([np.ones((n, 1)), zp[:, : self.M - 1]], axis=1) * m[None, :]
        else:
            low = np.concatenate([np.zeros((n, 2)), zp[:, : self.M - 2]], axis=1)
            block = (m * (m - 1))[None, :] * low
        g[:, col : col + 2 * self.M : 2] = block
        g[:, col + 1 : col + 2 * self.M : 2] = 1j * block
        col += 2 * self.M
        for b in self.centers:
            winv = 1.0 / (z - b)
            wp = self._powers(winv, self.M + 2)
            if order == 0:
                block = wp[:, : self.M]
            elif order == 1:
                block = -m[None, :] * wp[:, 1 : self.M + 1]
            else:
                block = (m * (m + 1))[None, :] * wp[:, 2 : self.M + 2]
            g[:, col : col + 2 * self.M : 2] = block
            g[:, col + 1 : col + 2 * self.M : 2] = 1j * block
            col += 2 * self.M
        return g

    def value_matrix(self, z):
        return self._mode_matrix(z, 0).real

    def deriv1_matrix(self, z):
        return self._mode_matrix(z, 1)

    def deriv2_matrix(self, z):
        return self._mode_matrix(z, 2)


@dataclass
class SeriesHarmonic:
    """Harmonic function h = Re g(z) with fitted series coefficients."""

    domain: CircularDomain
    degree: int
    coef: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        self._basis = _Basis(self.domain, self.degree)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        vals = self._basis.value_matrix(z.ravel()) @ self.coef
        return vals.reshape(z.shape) if z.shape else float(vals[0])

    def analytic_derivative(self, z):
        """g'(z); the gradient of h is (Re g', -Im g')."""
        z = np.asarray(z, dtype=complex)
        out = self._basis.deriv1_matrix(z.ravel()) @ self.coef.astype(complex)
        return out.reshape(z.shape) if z.shape else complex(out[0])

    def analytic_second(self, z):
        z = np.asarray(z, dtype=complex)
        out = self._basis.deriv2_matrix(z.ravel()) @ self.coef.astype(complex)
        return out.reshape(z.shape) if z.shape else complex(out[0])

    def gradient(self, z):
        """(h_x, h_y) stacked along the last axis."""
        gp = self.analytic_derivative(z)
        return np.stack([np.real(gp), -np.imag(gp)], axis=-1)

    def second_derivatives(self, z):
        """(h_xx, h_xy, h_yy) from the analytic second derivative."""
        gpp = self.analytic_second(z)
        return np.real(gpp), -np.imag(gpp), -np.real(gpp)

    def grad_perp(self, z):
        """Rotated gradient (-h_y, h_x) stacked along the last axis."""
        gp = self.analytic_derivative(z)
        return np.stack([np.imag(gp), np.real(gp)], axis=-1)


class CollocationSystem:
    """Reusable least-squares collocation for one (domain, degree) pair.

    The factorization depends only on the geometry, so repeated solves with
    new right-hand sides (e.g. many Green's-function sources) cost one
    matrix-vector product each.
    """

    def __init__(self, domain: CircularDomain, degree: int = DEFAULT_DEGREE, mode: str = "dirichlet"):
        if mode not in ("dirichlet", "neumann"):
            raise ValueError(mode)
        self.domain = domain
        self.degree = degree
        self.mode = mode
        self.basis = _Basis(domain, degree)
        pts, nu, weights, comp = [], [], [], []
        n_per = 8 * degree
        for j in range(domain.k):
            p, w, n, _ = domain.boundary_quadrature(j, n_per)
            pts.append(p)
            weights.append(w)
            nu.append(n[:, 0] + 1j * n[:, 1])
            comp.append(np.full(n_per, j))
        self.points = np.concatenate(pts)
        self.normals = np.concatenate(nu)
        self.weights = np.concatenate(weights)
        self.component = np.concatenate(comp)
        # held-out residual points at half-spacing offsets
        off = []
        for j in range(domain.k):
            theta = 2 * np.pi * (np.arange(n_per) + 0.5) / n_per
            off.append(domain.boundary_point(j, theta))
        self.offset_points = np.concatenate(off)

        if mode == "dirichlet":
            A = self.basis.value_matrix(self.points)
        else:
            g1 = self.basis.deriv1_matrix(self.points)
            A = np.real(g1 * self.normals[:, None])
            # pin the free additive constant: arclength mean of h over the boundary
            mean_row = (self.weights[:, None] * self.basis.value_matrix(self.points)).sum(axis=0)
            A = np.vstack([A, mean_row / self.weights.sum()])
        self.col_scale = np.maximum(np.max(np.abs(A), axis=0), 1e-300)
        A = A / self.col_scale[None, :]
        self._U, self._s, self._Vt = np.linalg.svd(A, full_matrices=False)
        self.condition = float(self._s[0] / self._s[-1])

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Least-squares coefficients for one RHS (or a batch, columns)."""
        rhs = np.asarray(rhs, dtype=float)
        cutoff = self._s[0] * 1e-14
        inv_s = np.where(self._s > cutoff, 1.0 / self._s, 0.0)
        x = self._Vt.T @ (inv_s[:, None] * (self._U.T @ rhs.reshape(len(self._U), -1)))
        x = x / self.col_scale[:, None]
        return x[:, 0] if rhs.ndim == 1 else x


def _boundary_values(domain, data, points, component):
    """Per-point boundary data from constants or callables g_j(theta)."""
    vals = np.zeros(len(points))
    for j in range(domain.k):
        sel = component == j
        gj = data[j]
        if callable(gj):
            c = domain.component_center(j)
            theta = np.angle(points[sel] - c)
            vals[sel] = gj(theta)
        else:
            vals[sel] = float(gj)
    return vals


def solve_dirichlet(domain: CircularDomain, data, degree: int = DEFAULT_DEGREE, tol: float = 1e-8,
                    system: CollocationSystem | None = None) -> SeriesHarmonic:
    """Solve the Dirichlet problem with per-component data (constants or callables).

    Raises CollocationError if the held-out boundary residual exceeds tol.
    """
    if len(data) != domain.k:
        raise DomainError(f"need {domain.k} boundary data entries, got {len(data)}")
    sys_ = system or CollocationSystem(domain, degree, "dirichlet")
    rhs = _boundary_values(domain, data, sys_.points, sys_.component)
    coef = sys_.solve(rhs)
    h = SeriesHarmonic(domain, degree, coef)
    # held-out residual, never the collocation points themselves
    off_comp = sys_.component  # offsets are generated per component in the same order
    target = _boundary_values(domain, data, sys_.offset_points, off_comp)
    res = float(np.max(np.abs(h(sys_.offset_points) - target)))
    h.residual = res
    if res > tol:
        raise CollocationError(
            f"boundary residual {res:.3e} exceeds {tol:.1e}; increase the degree M (currently {degree})"
        )
    return h


def harmonic_measure(domain: CircularDomain, j: int, degree: int = DEFAULT_DEGREE,
                     system: CollocationSystem | None = None) -> SeriesHarmonic:
    """Harmonic function equal to 1 on component j and 0 on the others."""
    if not 0 <= j < domain.k:
        raise DomainError(f"unknown boundary component {j}")
    if domain.k == 1:
        coef = np.zeros(_Basis(domain, degree).size)
        coef[0] = 1.0
        return SeriesHarmonic(domain, degree, coef)
    data = [1.0 if i == j else 0.0 for i in range(domain.k)]
    return solve_dirichlet(domain, data, degree, system=system)


@dataclass
class PeriodMatrix:
    matrix: np.ndarray
    condition: float
    symmetry_defect: float


def period_matrix(domain: CircularDomain, degree: int = DEFAULT_DEGREE, n_quad: int = 2048,
                  measures=None) -> PeriodMatrix:
    """Circulation periods a_jl of the rotated harmonic-measure gradients.

    a_jl equals the flux of grad omega_l through Gamma_j taken with the
    hole-outward normal; on the annulus with inner radius r this gives
    a_11 = 2*pi/log(r) < 0.
    """
    if domain.k < 2:
        raise DomainError("period matrix needs at least one hole")
    k1 = domain.k - 1
    if measures is None:
        system = CollocationSystem(domain, degree, "dirichlet")
        measures = [harmonic_measure(domain, j, degree, system=system) for j in range(1, domain.k)]
    a = np.zeros((k1, k1))
    theta = 2 * np.pi * np.arange(n_quad) / n_quad
    for j in range(1, domain.k):
        b = domain.component_center(j)
        r = domain.component_radius(j)
        z = b + r * np.exp(1j * theta)
        nu = np.exp(1j * theta)  # hole-outward normal (into the fluid)
        for l, om in enumerate(measures):
            gp = om.analytic_derivative(z)
            # grad.n = Re(g' * nu)
            a[j - 1, l] = float(np.sum(np.real(gp * nu)) * (2 * np.pi * r / n_quad))
    defect = float(np.max(np.abs(a - a.T))) if k1 > 1 else 0.0
    if defect > 1e-8:
        raise CollocationError(f"period matrix symmetry defect {defect:.2e} exceeds 1e-8")
    cond = float(np.linalg.cond(a))
    if cond > 1e12:
        raise CollocationError("period matrix singular to tolerance; solver failure")
    return PeriodMatrix(a, cond, defect)


@dataclass
class CriticalPoint:
    location: complex
    multiplicity: int
    on_boundary: bool


def _winding(h: SeriesHarmonic, center: complex, radius: float, n: int = 256,
             arc=(0.0, 2 * np.pi)) -> float:
    """Increment of arg g' along the circular arc, in turns."""
    phi = np.linspace(arc[0], arc[1], n)
    vals = h.analytic_derivative(center + radius * np.exp(1j * phi))
    ang = np.unwrap(np.angle(vals))
    return (ang[-1] - ang[0]) / (2 * np.pi)


def find_critical_points(h: SeriesHarmonic, domain: CircularDomain,
                         scan_resolution: int = 160, grad_tol: float = 1e-9) -> list[CriticalPoint]:
    """Zeros of grad h with multiplicities; the weighted count must be k-2.

    Interior zeros are located by a cell scan of |g'| plus complex Newton
    refinement; multiplicities are winding numbers of g' on small circles.
    Boundary zeros are detected by dips of |g'| along each circle and carry
    weight 1/2 in the index sum.
    """
    gap = domain.gap()
    if np.max(np.abs(h.coef[1:])) <= 1e-13 * max(abs(h.coef[0]), 1.0):
        raise DomainError("harmonic function is constant; no critical-point structure")

    grid = MaskedGrid(domain, scan_resolution)
    zc = grid.zgrid
    inside = grid.mask & (domain.dist_to_boundary(zc) > 0.75 * grid.h)
    gp = np.full(zc.shape, np.inf)
    gp[inside] = np.abs(h.analytic_derivative(zc[inside]))

    # local minima of |g'| on the scan grid
    cand = []
    m = gp
    local_min = np.ones(m.shape, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx == dy == 0:
                continue
            local_min &= m <= np.roll(np.roll(m, dx, axis=0), dy, axis=1)
    local_min &= np.isfinite(m)
    med = float(np.median(m[np.isfinite(m)]))
    vals = m[local_min]
    order = np.argsort(vals)
    # genuine zeros sit orders of magnitude below the field median on the scan
    for z, v in zip(zc[local_min][order[:32]], vals[order[:32]]):
        if v < 0.05 * med:
            cand.append(complex(z))

    # Newton refinement on g'(z) = 0 using the exact series Hessian
    refined = []
    for z in cand:
        zk = z
        ok = False
        for _ in range(60):
            g1 = h.analytic_derivative(zk)
            g2 = h.analytic_second(zk)
            if abs(g1) < grad_tol:
                ok = True
                break
            if abs(g2) < 1e-14:
                break
            step = g1 / g2
            if abs(step) > gap:
                break
            zk = zk - step
        if ok and domain.contains(np.array([zk]))[0] and domain.dist_to_boundary(np.array([zk]))[0] > gap / 16:
            refined.append(zk)

    # merge clustered candidates (within 2*rho_c) before winding
    interior: list[CriticalPoint] = []
    used = np.zeros(len(refined), dtype=bool)
    for i, z in enumerate(refined):
        if used[i]:
            continue
        cluster = [z]
        used[i] = True
        for jj in range(i + 1, len(refined)):
            if not used[jj] and abs(refined[jj] - z) < gap / 4:
                cluster.append(refined[jj])
                used[jj] = True
        zc_mean = complex(np.mean(cluster))
        others = [abs(zc_mean - p.location) for p in interior]
        rho = min(gap / 8, *(d / 2 for d in others)) if others else gap / 8
        rho = min(rho, float(domain.dist_to_boundary(np.array([zc_mean]))[0]) / 2)
        mult = int(round(_winding(h, zc_mean, rho)))
        if mult > 0:
            interior.append(CriticalPoint(zc_mean, mult, False))

    # boundary zeros: dips of |g'| along each circle
    boundary: list[CriticalPoint] = []
    n_scan = 4096
    for j in range(domain.k):
        theta = 2 * np.pi * np.arange(n_scan) / n_scan
        zb = domain.boundary_point(j, theta)
        vals = np.abs(h.analytic_derivative(zb))
        med = float(np.median(vals))
        dips = vals < 1e-6 * med
        if not np.any(dips):
            continue
        idx = np.where(dips)[0]
        groups = np.split(idx, np.where(np.diff(idx) > 4)[0] + 1)
        if len(groups) > 1 and groups[0][0] == 0 and groups[-1][-1] == n_scan - 1:
            groups[0] = np.concatenate([groups[-1], groups[0]])
            groups = groups[:-1]
        for grp in groups:
            tbest = theta[grp[np.argmin(vals[grp])]]
            zb0 = domain.boundary_point(j, float(tbest))
            rho = gap / 8
            _, n_vec, _ = domain.boundary_frame(j, float(tbest))
            inward = -complex(n_vec[0], n_vec[1])
            base = np.angle(inward) - np.pi / 2
            wind = _winding(h, zb0, rho, arc=(base, base + np.pi))
            mult = max(int(round(2 * wind)), 1)
            boundary.append(CriticalPoint(complex(zb0), mult, True))

    points = interior + boundary
    weighted2 = 2 * sum(p.multiplicity for p in interior) + sum(p.multiplicity for p in boundary)
    if weighted2 != 2 * (domain.k - 2):
        raise IndexCountError(
            f"critical-point index sum {weighted2 / 2} != k-2 = {domain.k - 2}; "
            "unresolved or near-degenerate points",
            points,
        )
    return points
