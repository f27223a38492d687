"""Div-curl systems with slip boundary and point constraints on circular
domains, the Cauchy-Riemann null space, and empirical inequality surveys.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import SlipField, nullspace_field, random_slip_field
from .geometry import CircularDomain, DomainError, build_grid
from .laplace import CollocationSystem, SeriesHarmonic, harmonic_measure
from .quadrature import SingularQuadrature

__all__ = [
    "cr_nullspace",
    "solve_divcurl",
    "DivCurlSolution",
    "inequality_ensemble",
    "weighted_divcurl_check",
    "lp_norm",
]


def cr_nullspace(domain: CircularDomain, degree: int = 24,
                 measures: list[SeriesHarmonic] | None = None) -> list[SlipField]:
    """Basis of the homogeneous div-curl slip system: grad_perp(omega_l)."""
    if measures is None:
        system = CollocationSystem(domain, degree, "dirichlet")
        measures = [harmonic_measure(domain, j, degree, system=system) for j in range(1, domain.k)]
    return [nullspace_field(om) for om in measures]


def lp_norm(grid, values, p: float) -> float:
    v = np.abs(np.asarray(values, dtype=float))
    return float(grid.integrate(v**p) ** (1.0 / p))


@dataclass
class DivCurlSolution:
    """u = u_particular + grad(h) + sum c_l grad_perp(omega_l)."""

    domain: CircularDomain
    quad: SingularQuadrature
    f: object
    g: object
    corrector: SeriesHarmonic
    measures: list[SeriesHarmonic]
    c: np.ndarray
    unique: bool
    boundary_residual: float = 0.0
    constraint_residual: float = 0.0

    def particular(self, z):
        """Newtonian-potential particular solution grad N_f + grad_perp N_g."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        out = np.empty(z.shape + (2,), dtype=float)
        for i, x in enumerate(z.ravel()):
            def kern(y, x=x):
                d = x - y
                sel = np.abs(d) > 1e-14
                k = np.zeros(y.shape, dtype=complex)
                k[sel] = d[sel] / (2 * np.pi * np.abs(d[sel]) ** 2)
                return k

            gf = self.quad.integrate_complex(lambda y: kern(y) * self.f(y), x)
            gg = self.quad.integrate_complex(lambda y: kern(y) * self.g(y), x)
            out.reshape(-1, 2)[i] = [gf.real - gg.imag, gf.imag + gg.real]
        return out.reshape(np.asarray(z).shape + (2,)) if np.asarray(z).shape else out[0]

    def velocity(self, z):
        z = np.asarray(z, dtype=complex)
        up = self.particular(z)
        gp = self.corrector.analytic_derivative(z)
        out = up + np.stack([np.real(gp), -np.imag(gp)], axis=-1)
        for cl, om in zip(self.c, self.measures):
            out = out + cl * om.grad_perp(z)
        return out


def solve_divcurl(domain: CircularDomain, f, g, point_constraints=None,
                  interval_constraints=None, resolution: int = 64, degree: int = 24,
                  constraint_weight: float = 1e6):
    """Solve div u = f, curl u = g, u.n = 0 with 2k-3 constraints.

    f, g are callables on complex points with zero mean for f.  Point
    constraints are (location, target 2-vector) pairs; interval constraints
    are (component j, theta0, theta1, target circulation) tuples.  Without
    constraints the solution is returned modulo the null space (flagged).
    """
    grid = build_grid(domain, resolution)
    quad = SingularQuadrature(grid, domain)
    centers = grid.flat_centers()
    f_vals = np.asarray(f(centers), dtype=float)
    g_vals = np.asarray(g(centers), dtype=float)
    total_f = float(np.sum(f_vals * grid.flat_volumes()))
    if abs(total_f) > 1e-6 * (1.0 + np.max(np.abs(f_vals))):
        raise DomainError(f"div data violates zero-mean compatibility: integral {total_f:.2e}")

    n_constraints = (0 if point_constraints is None else len(point_constraints)) + (
        0 if interval_constraints is None else len(interval_constraints)
    )
    need = 2 * domain.k - 3
    unique = n_constraints > 0
    if unique and n_constraints != need:
        raise DomainError(f"need exactly {need} constraints for a unique solve, got {n_constraints}")

    system = CollocationSystem(domain, degree, "neumann")
    measures = [harmonic_measure(domain, j, degree) for j in range(1, domain.k)]
    sol = DivCurlSolution(domain, quad, f, g,
                          SeriesHarmonic(domain, degree, np.zeros(system.basis.size)),
                          measures, np.zeros(domain.k - 1), unique)

    # Neumann rows: d/dn h = -u_p . n at the collocation points
    up_bdry = sol.particular(system.points)
    nvec = np.stack([system.normals.real, system.normals.imag], axis=-1)
    rhs_bc = -np.sum(up_bdry * nvec, axis=-1)
    g1 = system.basis.deriv1_matrix(system.points)
    A_bc = np.real(g1 * system.normals[:, None])
    mean_row = system.basis.value_matrix(system.points).mean(axis=0)
    n_series = system.basis.size
    n_c = domain.k - 1
    blocks = [np.hstack([A_bc, np.zeros((len(A_bc), n_c))])]
    rhs = [rhs_bc]
    blocks.append(np.hstack([mean_row[None, :], np.zeros((1, n_c))]))
    rhs.append(np.zeros(1))

    if point_constraints:
        for xi, target in point_constraints:
            xi = complex(xi)
            up = sol.particular(np.array([xi]))[0]
            g1p = system.basis.deriv1_matrix(np.array([xi]))[0]
            rows = np.zeros((2, n_series + n_c))
            rows[0, :n_series] = np.real(g1p)
            rows[1, :n_series] = -np.imag(g1p)
            for l, om in enumerate(measures):
                gperp = om.grad_perp(np.array([xi]))[0]
                rows[0, n_series + l] = gperp[0]
                rows[1, n_series + l] = gperp[1]
            blocks.append(constraint_weight * rows)
            rhs.append(constraint_weight * (np.asarray(target, dtype=float) - up))
    if interval_constraints:
        for j, th0, th1, target in interval_constraints:
            nq = 64
            theta = th0 + (th1 - th0) * (np.arange(nq) + 0.5) / nq
            pts, nrm, nperp = domain.boundary_frame(j, theta)
            wq = (th1 - th0) / nq * domain.component_radius(j)
            up = sol.particular(pts)
            base = float(np.sum(np.sum(up * nperp, axis=-1)) * wq)
            g1p = system.basis.deriv1_matrix(pts)
            row = np.zeros(n_series + n_c)
            # grad h . nperp with grad h = (Re g1, -Im g1)
            row[:n_series] = (np.real(g1p) * nperp[:, 0:1] - np.imag(g1p) * nperp[:, 1:2]).sum(axis=0) * wq
            for l, om in enumerate(measures):
                gperp = om.grad_perp(pts)
                row[n_series + l] = float(np.sum(np.sum(gperp * nperp, axis=-1)) * wq)
            blocks.append(constraint_weight * row[None, :])
            rhs.append(np.array([constraint_weight * (target - base)]))

    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    scale = np.maximum(np.max(np.abs(A), axis=0), 1e-300)
    x, *_ = np.linalg.lstsq(A / scale[None, :], b, rcond=None)
    x = x / scale
    sol.corrector = SeriesHarmonic(domain, degree, x[:n_series])
    sol.c = x[n_series:]
    sol.boundary_residual = float(np.max(np.abs(A_bc @ x[:n_series] - rhs_bc)))
    return sol


def inequality_ensemble(domain: CircularDomain, p: float, n_fields: int, seed: int = 0,
                        resolution: int = 48, degree: int = 24) -> dict:
    """Empirical constants for the gradient inequality with point anchors.

    For each random slip field computes |grad u|_p / (|div u|_p + |curl u|_p
    + sum_j |u(xi_j)|) at 2k-3 fixed random points; reports the running and
    second-half maxima plus a null-space blow-up witness with the point
    terms deleted.
    """
    if n_fields < 2:
        raise DomainError("ensemble needs at least 2 fields")
    grid = build_grid(domain, resolution)
    z = grid.flat_centers()
    vol = grid.flat_volumes()
    system = CollocationSystem(domain, degree, "dirichlet")
    measures = [harmonic_measure(domain, j, degree, system=system) for j in range(1, domain.k)]
    rng = np.random.default_rng(seed)
    n_pts = 2 * domain.k - 3
    anchors = []
    while len(anchors) < n_pts:
        cand = rng.uniform(-1, 1) + 1j * rng.uniform(-1, 1)
        if domain.contains(np.array([cand]))[0] and domain.dist_to_boundary(np.array([cand]))[0] > 0.05:
            anchors.append(cand)
    anchors = np.array(anchors)

    def ratio(field: SlipField, with_points: bool) -> float:
        grad_p = float(np.sum(field.grad_norm2(z) ** (p / 2) * vol) ** (1 / p))
        div_p = float(np.sum(np.abs(field.div(z)) ** p * vol) ** (1 / p))
        curl_p = float(np.sum(np.abs(field.curl(z)) ** p * vol) ** (1 / p))
        denom = div_p + curl_p
        if with_points:
            denom += float(np.sum(np.linalg.norm(field.velocity(anchors), axis=-1)))
        if denom == 0.0:
            return 0.0
        return grad_p / denom

    ratios = np.array([
        ratio(random_slip_field(domain, seed=seed * 100003 + i, measures=measures), True)
        for i in range(n_fields)
    ])
    half = n_fields // 2
    report = {
        "p": p,
        "ratios": ratios,
        "max_ratio": float(np.max(ratios)),
        "second_half_max": float(np.max(ratios[half:])),
        "anchors": anchors,
    }
    # blow-up witness: pure null-space field plus shrinking noise, points deleted
    witness = []
    for eps in (1e-1, 1e-2, 1e-3):
        noise = random_slip_field(domain, seed=seed + 7, measures=[], amplitude=eps)
        fld = SlipField(noise.psi, noise.chi, measures[:1], np.array([1.0]))
        witness.append(ratio(fld, False))
    report["witness_ratios"] = np.array(witness)
    report["witness_max"] = float(np.max(witness))
    return report


def weighted_divcurl_check(domain: CircularDomain, field: SlipField, nu: float, rho,
                           resolution: int = 48) -> dict:
    """Both sides of the weighted gradient inequality for small nu.

    LHS = int |u|^nu |grad u|^2; RHS terms are the weighted div/curl energy
    and the momentum-type term int rho |u|^{2+nu}.
    """
    if not 0 < nu <= 0.2:
        raise DomainError("nu must lie in (0, 0.2]")
    grid = build_grid(domain, resolution)
    z = grid.flat_centers()
    vol = grid.flat_volumes()
    speed = np.linalg.norm(field.velocity(z), axis=-1)
    rho_vals = rho(z) if callable(rho) else np.full(len(z), float(rho))
    if np.any(rho_vals < 0):
        raise DomainError("weight rho must be non-negative")
    lhs = float(np.sum(speed**nu * field.grad_norm2(z) * vol))
    rhs_vort = float(np.sum(speed**nu * (field.div(z) ** 2 + field.curl(z) ** 2) * vol))
    rhs_mom = float(np.sum(rho_vals * speed ** (2 + nu) * vol))
    rhs = rhs_vort + rhs_mom
    return {
        "lhs": lhs,
        "rhs_divcurl": rhs_vort,
        "rhs_momentum": rhs_mom,
        "ratio": lhs / rhs if rhs > 0 else 0.0,
    }
