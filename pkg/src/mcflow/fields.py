"""Closed-form planar fields built from z/zbar polynomials and harmonic series.

ZPoly stores a real-valued polynomial sum c_mn z^m zbar^n (with conjugate
coefficient symmetry) so products and Wirtinger derivatives are exact; slip
velocity fields assembled from such potentials have exact divergence, curl
and gradient, which the div-curl diagnostics rely on.
"""

from __future__ import annotations

import numpy as np

from .geometry import CircularDomain
from .laplace import SeriesHarmonic

__all__ = ["ZPoly", "SlipField", "random_slip_field", "nullspace_field"]


class ZPoly:
    """Polynomial sum_{m,n} c_mn z^m zbar^n with real values on C."""

    def __init__(self, coef: dict | None = None):
        self.coef = dict(coef or {})

    @staticmethod
    def constant(c: float) -> "ZPoly":
        return ZPoly({(0, 0): complex(c)})

    @staticmethod
    def abs2_minus(center: complex, offset: float) -> "ZPoly":
        """|z - center|^2 - offset, expanded in (z, zbar)."""
        b = complex(center)
        return ZPoly(
            {
                (1, 1): 1.0 + 0.0j,
                (1, 0): -np.conj(b),
                (0, 1): -b,
                (0, 0): abs(b) ** 2 - offset,
            }
        )

    @staticmethod
    def real_mode(c: complex, m: int, n: int) -> "ZPoly":
        """c z^m zbar^n + conj(c) z^n zbar^m (a real-valued pair)."""
        out = {}
        out[(m, n)] = out.get((m, n), 0.0) + c
        out[(n, m)] = out.get((n, m), 0.0) + np.conj(c)
        return ZPoly(out)

    def __add__(self, other: "ZPoly") -> "ZPoly":
        out = dict(self.coef)
        for k, v in other.coef.items():
            out[k] = out.get(k, 0.0) + v
        return ZPoly(out)

    def __mul__(self, other):
        if np.isscalar(other):
            return ZPoly({k: v * other for k, v in self.coef.items()})
        out = {}
        for (m1, n1), c1 in self.coef.items():
            for (m2, n2), c2 in other.coef.items():
                k = (m1 + m2, n1 + n2)
                out[k] = out.get(k, 0.0) + c1 * c2
        return ZPoly(out)

    __rmul__ = __mul__

    def dz(self) -> "ZPoly":
        return ZPoly({(m - 1, n): m * c for (m, n), c in self.coef.items() if m > 0})

    def dzbar(self) -> "ZPoly":
        return ZPoly({(m, n - 1): n * c for (m, n), c in self.coef.items() if n > 0})

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for (m, n), c in self.coef.items():
            out = out + c * z**m * np.conj(z) ** n
        return np.real(out)

    def eval_complex(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for (m, n), c in self.coef.items():
            out = out + c * z**m * np.conj(z) ** n
        return out


class SlipField:
    """u = grad_perp(psi) + grad(chi) + sum_l c_l grad_perp(omega_l).

    psi and chi are ZPoly potentials; psi is constant on every boundary
    circle and chi has vanishing normal derivative there, so u.n = 0 exactly.
    The harmonic-measure part contributes the circulation null space.
    """

    def __init__(self, psi: ZPoly | None, chi: ZPoly | None,
                 measures: list[SeriesHarmonic] | None = None, c: np.ndarray | None = None):
        self.psi = psi or ZPoly()
        self.chi = chi or ZPoly()
        self.measures = measures or []
        self.c = np.zeros(len(self.measures)) if c is None else np.asarray(c, dtype=float)
        # Wirtinger derivative tables
        self._psi_z = self.psi.dz()
        self._chi_z = self.chi.dz()
        self._psi_zz = self._psi_z.dz()
        self._chi_zz = self._chi_z.dz()
        self._psi_zzb = self._psi_z.dzbar()
        self._chi_zzb = self._chi_z.dzbar()

    def _uc(self, z):
        """Complex velocity u1 + i u2."""
        z = np.asarray(z, dtype=complex)
        # grad f = 2 conj(df/dz) as a complex vector; grad_perp f = i * grad f
        out = 2j * np.conj(self._psi_z.eval_complex(z)) + 2.0 * np.conj(self._chi_z.eval_complex(z))
        for cl, om in zip(self.c, self.measures):
            gp = om.analytic_derivative(z)  # grad omega = (Re g', -Im g') = conj(g')
            out = out + cl * 1j * np.conj(gp)
        return out

    def velocity(self, z):
        uc = self._uc(z)
        return np.stack([np.real(uc), np.imag(uc)], axis=-1)

    def div(self, z):
        return 4.0 * self._chi_zzb(np.asarray(z, dtype=complex))

    def curl(self, z):
        """Standard curl d1 u2 - d2 u1 = Laplacian of psi."""
        return 4.0 * self._psi_zzb(np.asarray(z, dtype=complex))

    def grad(self, z):
        """Velocity gradient [du_i/dx_j] stacked as (..., 2, 2)."""
        z = np.asarray(z, dtype=complex)
        # For u = u1 + i u2: du/dz and du/dzbar encode the full Jacobian.
        u_z = 2j * np.conj(self._psi_zzb.eval_complex(z)) + 2.0 * np.conj(self._chi_zzb.eval_complex(z))
        u_zb = 2j * np.conj(self._psi_zz.eval_complex(z)) + 2.0 * np.conj(self._chi_zz.eval_complex(z))
        for cl, om in zip(self.c, self.measures):
            gpp = om.analytic_second(z)
            u_zb = u_zb + cl * 1j * np.conj(gpp)
        du_dx = u_z + u_zb
        du_dy = 1j * (u_z - u_zb)
        return np.stack(
            [
                np.stack([np.real(du_dx), np.real(du_dy)], axis=-1),
                np.stack([np.imag(du_dx), np.imag(du_dy)], axis=-1),
            ],
            axis=-2,
        )

    def grad_norm2(self, z):
        g = self.grad(z)
        return np.sum(g**2, axis=(-2, -1))


def _boundary_window(domain: CircularDomain) -> ZPoly:
    """Polynomial vanishing on every boundary circle."""
    w = ZPoly.abs2_minus(0.0, 1.0)
    for b, r in domain.holes:
        w = w * ZPoly.abs2_minus(b, r**2)
    return w


def _random_poly(rng, degree: int, scale: float) -> ZPoly:
    out = ZPoly()
    for m in range(degree + 1):
        for n in range(m + 1):
            c = scale * (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + m + n)
            out = out + ZPoly.real_mode(c, m, n)
    return out


def random_slip_field(domain: CircularDomain, seed: int,
                      measures: list[SeriesHarmonic] | None = None,
                      degree: int = 3, amplitude: float = 1.0) -> SlipField:
    """Random smooth field with u.n = 0 exactly on every boundary circle.

    psi = sum_l a_l omega_l + W * S1 (constant per component), chi = W^2 * S2
    (zero normal derivative), W the boundary window polynomial.
    """
    rng = np.random.default_rng(seed)
    w = _boundary_window(domain)
    psi = w * _random_poly(rng, degree, amplitude)
    chi = (w * w) * _random_poly(rng, degree, amplitude)
    measures = measures if measures is not None else []
    c = amplitude * rng.standard_normal(len(measures)) if measures else None
    return SlipField(psi, chi, measures, c)


def nullspace_field(om: SeriesHarmonic) -> SlipField:
    """grad_perp of a harmonic measure: div = curl = 0, u.n = 0."""
    return SlipField(None, None, [om], np.array([1.0]))
