"""Reference Caputo derivative and the manufactured test problems.

The oracle evaluates D^alpha u(t) directly from the defining convolution
of u' with the singular kernel. Substituting sigma = t - tau and then
sigma = s^(1/(1-alpha)) removes the endpoint singularity exactly, leaving
a regular integrand for adaptive Gauss-Kronrod panels:

    D^alpha u(t) = 1/Gamma(2-alpha) * int_0^{t^(1-alpha)} u'(t - s^(1/(1-alpha))) ds.

The experiment factories build their inhomogeneities through this oracle
(or, for the half-order trigonometric factors needed at very many times,
through a cumulative-panel table cross-checked against it), so no symbolic
algebra or special-function library is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.interpolate import CubicSpline

from .errors import AccuracyError, ConfigError, DomainError
from .operators import (
    CallableInhomogeneity,
    ConstantInhomogeneity,
    Problem,
    SeparableInhomogeneity,
    dense_operator,
    periodic_compact_fd_3d,
    schrodinger_tbc_1d,
)

_SQRT5 = math.sqrt(5.0)
_ORACLE_TOL = 1e-11


def caputo_oracle(u_prime, alpha: float, t: float, tol: float = 1e-12):
    """Caputo derivative of order alpha at time t > 0, given u'.

    u_prime may return a scalar or an array; the result has the same shape.
    Raises AccuracyError when the panel refinement cannot certify tol.
    """
    if t <= 0.0:
        raise DomainError(f"the oracle needs t > 0, got t={t}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if tol < 1e-12:
        raise DomainError(f"tolerances below 1e-12 are not supported, got {tol}")
    p = 1.0 / (1.0 - alpha)
    s_max = t ** (1.0 - alpha)

    def integrand(s):
        return np.asarray(u_prime(t - s**p))

    value, err = quad_vec(
        integrand, 0.0, s_max, epsabs=tol, epsrel=tol, quadrature="gk21", limit=10000
    )
    scale = max(1.0, float(np.max(np.abs(value))))
    if err > 100.0 * tol * scale:
        raise AccuracyError(
            f"quadrature stalled at estimated error {err:.3e} (requested {tol:.3e})",
            achieved=err,
        )
    return value / math.gamma(2.0 - alpha)


@dataclass(frozen=True)
class ManufacturedProblem:
    """A Problem with known exact solution plus a provenance note."""

    problem: Problem
    description: str


# ---------------------------------------------------------------------------
# Example 1: dense 2x2 system, alpha = 1/2


def _example1_u(t):
    return np.array(
        [np.sin(2.0 * t) ** 6, (0.5 - 0.5 * np.cos(_SQRT5 * t)) ** 6]
    )


def _example1_u_prime(t):
    q = 0.5 - 0.5 * np.cos(_SQRT5 * t)
    return np.array(
        [
            12.0 * np.sin(2.0 * t) ** 5 * np.cos(2.0 * t),
            3.0 * _SQRT5 * np.sin(_SQRT5 * t) * q**5,
        ]
    )


EXAMPLE1_MATRIX = np.array([[-1.0, 1.0], [-1.0, -1.0]])


def example1_problem(oracle_tol: float = _ORACLE_TOL) -> ManufacturedProblem:
    """2x2 system with alpha = 1/2 and a smooth manufactured solution.

    Both solution components are sixth powers of oscillations vanishing at
    t = 0, so the inhomogeneity is five times continuously differentiable
    with all those derivatives zero at the origin.
    """
    family = dense_operator(None, EXAMPLE1_MATRIX)

    def g(t):
        if t == 0.0:
            return np.zeros(2)
        frac = caputo_oracle(_example1_u_prime, 0.5, t, tol=oracle_tol)
        return frac - EXAMPLE1_MATRIX @ _example1_u(t)

    problem = Problem(
        family=family,
        alpha=0.5,
        g=CallableInhomogeneity(g, dim=2),
        u_exact=_example1_u,
    )
    return ManufacturedProblem(problem, "dense 2x2, alpha=1/2, sixth-power oscillations")


# ---------------------------------------------------------------------------
# Example 2: 3D periodic subdiffusion, alpha = 1/2


class HalfOrderTrigTable:
    """Vectorized D^(1/2) of sin(pi t) and 1 - cos(pi t) at many times.

    Both reduce to the cumulative integrals
        C(t) = 2 int_0^sqrt(t) cos(pi s^2) ds,
        S(t) = 2 int_0^sqrt(t) sin(pi s^2) ds,
    which are tabulated once with composite 3-point Gauss panels and then
    spline-evaluated. Accuracy is ~1e-12 absolute; the adaptive oracle is
    the reference this table is tested against.
    """

    _PANELS_PER_UNIT = 16384

    def __init__(self, t_max: float):
        self._t_max = float(t_max)
        s_max = math.sqrt(max(self._t_max, 1e-6)) * 1.000001
        panels = max(4096, int(self._PANELS_PER_UNIT * s_max))
        edges = np.linspace(0.0, s_max, panels + 1)
        hw = (edges[1] - edges[0]) / 2.0
        mids = edges[:-1] + hw
        # 3-point Gauss-Legendre on each panel
        offs = hw * math.sqrt(3.0 / 5.0)
        wts = np.array([5.0, 8.0, 5.0]) / 9.0 * hw
        pts = np.stack([mids - offs, mids, mids + offs])
        cos_panels = wts @ np.cos(np.pi * pts**2)
        sin_panels = wts @ np.sin(np.pi * pts**2)
        c_vals = np.concatenate(([0.0], 2.0 * np.cumsum(cos_panels)))
        s_vals = np.concatenate(([0.0], 2.0 * np.cumsum(sin_panels)))
        self._c = CubicSpline(edges, c_vals)
        self._s = CubicSpline(edges, s_vals)

    def _cs(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self._t_max * 1.0000001):
            raise DomainError("time outside the tabulated range")
        root = np.sqrt(t)
        return self._c(root), self._s(root)

    def dhalf_sin(self, t):
        """D^(1/2) of sin(pi .) at the times t (array)."""
        c, s = self._cs(t)
        return math.sqrt(np.pi) * (np.cos(np.pi * t) * c + np.sin(np.pi * t) * s)

    def dhalf_one_minus_cos(self, t):
        """D^(1/2) of 1 - cos(pi .) at the times t (array)."""
        c, s = self._cs(t)
        return math.sqrt(np.pi) * (np.sin(np.pi * t) * c - np.cos(np.pi * t) * s)

    def f1(self, t):
        t = np.asarray(t, dtype=float)
        return self.dhalf_sin(t) + np.sin(np.pi * t)

    def f2(self, t):
        t = np.asarray(t, dtype=float)
        return self.dhalf_one_minus_cos(t) + 1.0 - np.cos(np.pi * t)


def example2_fields(n_per_dim: int):
    """Grid samples of h_minus and h_plus on the periodic cube."""
    family = periodic_compact_fd_3d(n_per_dim)
    x, y, z = family.grid()
    trig_cos = np.cos(x) + np.cos(y) + np.cos(z)
    trig_sin = np.sin(x) + np.sin(y) + np.sin(z)
    return family, trig_cos - trig_sin, trig_cos + trig_sin


def example2_problem(n_per_dim: int, t_max: float = 130.0) -> ManufacturedProblem:
    """3D periodic subdiffusion with alpha = 1/2 on an n^3 compact-FD grid.

    The inhomogeneity separates into two fixed grid fields times the scalar
    factors f1, f2, which are precomputed for every stage time; the grid
    fields are stored in mass form, as consumed by the resolvent solves.
    """
    if n_per_dim < 8:
        raise ConfigError(f"need n_per_dim >= 8, got {n_per_dim}")
    family, h_minus, h_plus = example2_fields(n_per_dim)
    spatial = np.stack(
        [family.apply_mass(h_minus).real, family.apply_mass(h_plus).real]
    )
    table = HalfOrderTrigTable(t_max)

    def factors(ts):
        return np.stack([table.f1(ts), table.f2(ts)], axis=-1)

    def u_exact(t):
        return h_minus * np.sin(np.pi * t) + h_plus * (1.0 - np.cos(np.pi * t))

    problem = Problem(
        family=family,
        alpha=0.5,
        g=SeparableInhomogeneity(spatial, factors),
        u_exact=u_exact,
    )
    return ManufacturedProblem(
        problem, f"periodic subdiffusion {n_per_dim}^3, alpha=1/2, separable data"
    )


# ---------------------------------------------------------------------------
# Example 3: fractional Schroedinger with transparent boundaries


def example3_initial(n_points: int, a_half: float) -> np.ndarray:
    """Gaussian wave packet 10 exp(-(4x)^2 + 10 i x) sampled on the grid.

    The packet must be numerically supported inside the domain: the two
    cells next to each boundary carry at most 1e-20 in modulus.
    """
    if a_half < 1.0:
        raise ConfigError(f"need a_half >= 1 for a contained packet, got {a_half}")
    family = schrodinger_tbc_1d(a_half, n_points, 0.75)
    u0 = 10.0 * np.exp(-((4.0 * family.x) ** 2) + 10j * family.x)
    family.validate_initial(u0)
    return u0


def example3_problem(n_points: int, a_half: float, alpha: float = 0.75) -> Problem:
    """Homogeneous fractional Schroedinger problem with nonzero initial data.

    Pass the result through fastcq.transform_initial to obtain the
    zero-initial-data form consumed by the solver.
    """
    family = schrodinger_tbc_1d(a_half, n_points, alpha)
    u0 = 10.0 * np.exp(-((4.0 * family.x) ** 2) + 10j * family.x)
    family.validate_initial(u0)
    return Problem(
        family=family,
        alpha=alpha,
        g=ConstantInhomogeneity(np.zeros(family.dim, dtype=complex)),
        u0=u0,
    )
