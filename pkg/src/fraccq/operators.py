"""Operator families (resolvent providers) and problem containers.

A family answers solve(nu, y) for the system (nu*M - A) x = y at complex
frequencies nu = lambda^alpha. Three backends: dense matrices, a 3D
periodic compact-finite-difference Laplacian solved spectrally, and a 1D
free-space Schroedinger operator closed with transparent boundary rows.
"""

from __future__ import annotations

import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import contour, smallmat
from .errors import ConfigError, DomainError, SingularMatrixError, SolverError, SupportError

_SUPPORT_ABS = 1e-20


class OperatorFamily(ABC):
    """Resolvent provider: solve (nu*M - A) x = y for complex nu.

    Implementations must be safe to call from several threads after
    construction; caches may only synchronize on insertion.
    """

    dim: int
    theta1_hint: float
    has_mass: bool

    @abstractmethod
    def solve(self, nu, y):
        """Solve (nu*M - A) x = y; y may be (dim,) or (dim, m)."""

    def apply_op(self, y):
        """Apply the evolution operator A (mass form), used to shift
        inhomogeneities when transforming away initial data."""
        raise NotImplementedError(f"{type(self).__name__} does not expose A")

    def apply_mass(self, y):
        """Apply the mass operator M (identity when has_mass is False)."""
        return np.asarray(y)

    def validate_initial(self, u0):
        """Hook for backends with constraints on admissible initial data."""


class DenseOperator(OperatorFamily):
    """(nu*M - A) with explicit matrices, LU-factored and cached per nu."""

    def __init__(self, A, M=None, theta1_hint=np.pi / 2):
        self.A = np.asarray(A, dtype=complex)
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ConfigError(f"A must be square, got shape {self.A.shape}")
        self.has_mass = M is not None
        self.M = np.eye(n, dtype=complex) if M is None else np.asarray(M, dtype=complex)
        if self.M.shape != (n, n):
            raise ConfigError(f"M must match A, got shape {self.M.shape}")
        self.dim = n
        self.theta1_hint = float(theta1_hint)
        self._cache = {}
        self._lock = threading.Lock()

    def _factor(self, nu):
        fac = self._cache.get(nu)
        if fac is None:
            try:
                fac = smallmat.LUFactor(nu * self.M - self.A)
            except SingularMatrixError as exc:
                raise SolverError(f"nu*M - A singular at nu={nu}", frequency=nu) from exc
            with self._lock:
                fac = self._cache.setdefault(nu, fac)
        return fac

    def solve(self, nu, y):
        return self._factor(complex(nu)).solve(y)

    def apply_op(self, y):
        return self.A @ np.asarray(y, dtype=complex)

    def apply_mass(self, y):
        return self.M @ np.asarray(y, dtype=complex) if self.has_mass else np.asarray(y)


def dense_operator(M, A, theta1_hint=np.pi / 2) -> DenseOperator:
    """Dense backend; pass M=None for an identity mass matrix."""
    return DenseOperator(A, M=M, theta1_hint=theta1_hint)


def _axis_mass(u, axis):
    # compact-FD mass stencil (1/12, 5/6, 1/12), periodic
    return (np.roll(u, 1, axis) + np.roll(u, -1, axis)) / 12.0 + 5.0 * u / 6.0


def _axis_lap(u, axis, eta):
    return (np.roll(u, 1, axis) - 2.0 * u + np.roll(u, -1, axis)) / eta**2


class PeriodicCompactFD3D(OperatorFamily):
    """Fourth-order compact-FD Laplacian on a periodic (2 pi)^3 grid.

    One-dimensional blocks A1 = circulant(1,-2,1)/eta^2 and
    M1 = circulant(1/12, 5/6, 1/12) composed by Kronecker sums:
    A3 = A1 x M1 x M1 + M1 x A1 x M1 + M1 x M1 x A1, M3 = M1 x M1 x M1.
    Both are diagonalized by the 3D DFT, so solve() is three FFTs and a
    pointwise division by the symbol.
    """

    has_mass = True
    theta1_hint = np.pi / 2

    def __init__(self, n_per_dim: int):
        if n_per_dim < 4:
            raise ConfigError(f"need at least 4 grid points per axis, got {n_per_dim}")
        self.n = int(n_per_dim)
        self.eta = 2.0 * np.pi / self.n
        self.dim = self.n**3
        xi = 2.0 * np.pi * np.fft.fftfreq(self.n)
        a = (2.0 * np.cos(xi) - 2.0) / self.eta**2
        m = 5.0 / 6.0 + np.cos(xi) / 6.0
        self._mass_symbol = (
            m[:, None, None] * m[None, :, None] * m[None, None, :]
        )
        self._op_symbol = (
            a[:, None, None] * m[None, :, None] * m[None, None, :]
            + m[:, None, None] * a[None, :, None] * m[None, None, :]
            + m[:, None, None] * m[None, :, None] * a[None, None, :]
        )

    def grid(self):
        """Flattened meshgrid coordinates (x, y, z), C order."""
        x1 = self.eta * np.arange(self.n)
        x, y, z = np.meshgrid(x1, x1, x1, indexing="ij")
        return x.ravel(), y.ravel(), z.ravel()

    def _shape3(self, y):
        y = np.asarray(y, dtype=complex)
        cols = 1 if y.ndim == 1 else y.shape[1]
        return y.reshape(self.n, self.n, self.n, cols), y.ndim == 1

    def solve(self, nu, y):
        cube, vector = self._shape3(y)
        denom = nu * self._mass_symbol - self._op_symbol
        if np.any(denom == 0.0):
            raise SolverError(f"symbol vanishes at nu={nu}", frequency=nu)
        hat = np.fft.fftn(cube, axes=(0, 1, 2))
        out = np.fft.ifftn(hat / denom[..., None], axes=(0, 1, 2))
        out = out.reshape(self.dim, -1)
        return out[:, 0] if vector else out

    def apply_op(self, y):
        u = np.asarray(y, dtype=complex).reshape(self.n, self.n, self.n)
        out = np.zeros_like(u)
        for axis in range(3):
            t = _axis_lap(u, axis, self.eta)
            for other in range(3):
                if other != axis:
                    t = _axis_mass(t, other)
            out += t
        return out.ravel()

    def apply_mass(self, y):
        u = np.asarray(y, dtype=complex).reshape(self.n, self.n, self.n)
        for axis in range(3):
            u = _axis_mass(u, axis)
        return u.ravel()


def periodic_compact_fd_3d(n_per_dim: int) -> PeriodicCompactFD3D:
    return PeriodicCompactFD3D(n_per_dim)


class SchrodingerTBC1D(OperatorFamily):
    """i*Laplacian on [-a, a] with transparent compact-FD boundary rows.

    Interior rows of (nu*M - i*A) are the constant tridiagonal
    (phi, psi, phi) with phi = nu/12 - i/eta^2 and psi = 5 nu/6 + 2 i/eta^2.
    The exterior decaying solution u_out = z1 * u_boundary (|z1| < 1, root
    of phi z^2 + psi z + phi = 0) folds into the two corner rows.
    """

    has_mass = True

    def __init__(self, a_half: float, n_points: int, alpha: float):
        if n_points < 5:
            raise ConfigError(f"need at least 5 grid points, got {n_points}")
        if not 0.0 < alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
        self.a_half = float(a_half)
        self.n = int(n_points)
        self.dim = self.n
        self.alpha = float(alpha)
        self.eta = 2.0 * self.a_half / (self.n - 1)
        self.x = np.linspace(-self.a_half, self.a_half, self.n)
        self.theta1_hint = contour.theta1(alpha, 0.0)
        self._cache = {}
        self._lock = threading.Lock()

    def roots(self, nu):
        """Both roots of phi z^2 + psi z + phi = 0, decaying one first.

        The larger-magnitude numerator of the quadratic formula gives one
        root accurately; the other follows from the unit product of roots.
        """
        phi = nu / 12.0 - 1j / self.eta**2
        psi = 5.0 * nu / 6.0 + 2j / self.eta**2
        if phi == 0.0:
            raise SolverError(f"phi vanishes at nu={nu}", frequency=nu)
        disc = np.sqrt(complex(psi * psi - 4.0 * phi * phi))
        num = -psi + disc if abs(-psi + disc) >= abs(-psi - disc) else -psi - disc
        z_a = num / (2.0 * phi)
        z_b = 1.0 / z_a
        if abs(abs(z_a) - 1.0) < 1e-10 and abs(abs(z_b) - 1.0) < 1e-10:
            raise SolverError(
                f"degenerate boundary roots |z| = 1 at nu={nu}", frequency=nu
            )
        z1, z2 = (z_a, z_b) if abs(z_a) < 1.0 else (z_b, z_a)
        return z1, z2

    def _coeffs(self, nu):
        phi = nu / 12.0 - 1j / self.eta**2
        psi = 5.0 * nu / 6.0 + 2j / self.eta**2
        return phi, psi

    def _factor(self, nu):
        """Thomas factorization of the closed tridiagonal system at nu."""
        fac = self._cache.get(nu)
        if fac is None:
            phi, psi = self._coeffs(nu)
            z1, _ = self.roots(nu)
            diag = np.full(self.n, psi, dtype=complex)
            diag[0] += phi * z1
            diag[-1] += phi * z1
            dtil = np.empty(self.n, dtype=complex)
            mult = np.empty(self.n, dtype=complex)
            dtil[0] = diag[0]
            scale = max(abs(phi), abs(psi))
            for i in range(1, self.n):
                if abs(dtil[i - 1]) < 1e-30 * scale:
                    raise SolverError(
                        f"tridiagonal pivot breakdown at row {i - 1}, nu={nu}",
                        frequency=nu,
                    )
                mult[i] = phi / dtil[i - 1]
                dtil[i] = diag[i] - mult[i] * phi
            if abs(dtil[-1]) < 1e-30 * scale:
                raise SolverError(f"tridiagonal pivot breakdown at last row, nu={nu}",
                                  frequency=nu)
            fac = (phi, mult, dtil, z1)
            with self._lock:
                fac = self._cache.setdefault(nu, fac)
        return fac

    def solve(self, nu, y):
        phi, mult, dtil, _ = self._factor(complex(nu))
        y = np.asarray(y, dtype=complex)
        vector = y.ndim == 1
        w = y.reshape(self.n, -1).copy()
        for i in range(1, self.n):
            w[i] -= mult[i] * w[i - 1]
        w[-1] /= dtil[-1]
        for i in range(self.n - 2, -1, -1):
            w[i] = (w[i] - phi * w[i + 1]) / dtil[i]
        return w[:, 0] if vector else w

    def closed_rows(self, nu):
        """(sub, diag, super) of the boundary-closed tridiagonal at nu."""
        phi, psi = self._coeffs(nu)
        z1, _ = self.roots(nu)
        diag = np.full(self.n, psi, dtype=complex)
        diag[0] += phi * z1
        diag[-1] += phi * z1
        return phi, diag

    def apply_op(self, y):
        # i * second difference with zero ghost values; valid for data
        # supported away from the boundary
        u = np.asarray(y, dtype=complex)
        lap = -2.0 * u.copy()
        lap[1:] += u[:-1]
        lap[:-1] += u[1:]
        return 1j * lap / self.eta**2

    def apply_mass(self, y):
        u = np.asarray(y, dtype=complex)
        out = 5.0 * u / 6.0
        out[1:] += u[:-1] / 12.0
        out[:-1] += u[1:] / 12.0
        return out

    def validate_initial(self, u0):
        u0 = np.asarray(u0)
        edge = np.max(np.abs(np.concatenate((u0[:2], u0[-2:]))))
        if edge > _SUPPORT_ABS:
            raise SupportError(
                f"initial data reaches the boundary cells (|u0| = {edge:.3e} "
                f"> {_SUPPORT_ABS:g}); enlarge the domain"
            )


def schrodinger_tbc_1d(a_half: float, n_points: int, alpha: float) -> SchrodingerTBC1D:
    return SchrodingerTBC1D(a_half, n_points, alpha)


def sector_probe(family: OperatorFamily, samples, trials: int = 4, seed: int = 0) -> float:
    """Largest observed |nu| * ||solve(nu, y)|| / ||M y|| over the samples.

    A finite, stable value across a wide |nu| sweep is the practical
    sectoriality certificate used by the property tests.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for nu in samples:
        for _ in range(trials):
            y = rng.standard_normal(family.dim) + 1j * rng.standard_normal(family.dim)
            y /= np.linalg.norm(y)
            x = family.solve(nu, y)
            ratio = abs(nu) * np.linalg.norm(x) / np.linalg.norm(family.apply_mass(y))
            worst = max(worst, float(ratio))
    return worst


# ---------------------------------------------------------------------------
# Inhomogeneity sampling


class StageTable(ABC):
    """Read-only stage samples G_n, n = 0..N-1, each of shape (s, dim)."""

    N: int
    s: int
    dim: int

    @abstractmethod
    def block(self, n0: int, n1: int, cols=None):
        """Samples for steps n0..n1-1 as an (n1-n0, s, ncols) array."""

    def row(self, n):
        return self.block(n, n + 1)[0]


class DenseStageTable(StageTable):
    def __init__(self, data):
        self._data = np.ascontiguousarray(data, dtype=complex)
        self.N, self.s, self.dim = self._data.shape

    def block(self, n0, n1, cols=None):
        blk = self._data[n0:n1]
        return blk if cols is None else blk[:, :, cols]


class SeparableStageTable(StageTable):
    """G_n = sum_r time[n, :, r] * spatial[r, :], stored in factored form."""

    def __init__(self, time_factors, spatial):
        self._time = np.ascontiguousarray(time_factors, dtype=complex)
        self._spatial = np.ascontiguousarray(spatial, dtype=complex)
        self.N, self.s, _ = self._time.shape
        self.dim = self._spatial.shape[1]

    def block(self, n0, n1, cols=None):
        spatial = self._spatial if cols is None else self._spatial[:, cols]
        return np.tensordot(self._time[n0:n1], spatial, axes=([2], [0]))


class ConstantStageTable(StageTable):
    def __init__(self, vec, N, s):
        self._vec = np.ascontiguousarray(vec, dtype=complex)
        self.N, self.s, self.dim = int(N), int(s), self._vec.shape[0]

    def block(self, n0, n1, cols=None):
        v = self._vec if cols is None else self._vec[cols]
        return np.broadcast_to(v, (n1 - n0, self.s, v.shape[0]))


class Inhomogeneity(ABC):
    """Sampler for the (mass-form) inhomogeneity of a problem."""

    dim: int

    @abstractmethod
    def sample(self, t: float):
        """Value at time t as a (dim,) array."""

    @abstractmethod
    def table(self, N: int, h: float, c) -> StageTable:
        """Materialize stage samples at times (n + c_k) h, n = 0..N-1."""

    @abstractmethod
    def shifted(self, offset) -> "Inhomogeneity":
        """The sampler for g(t) + offset."""


class ConstantInhomogeneity(Inhomogeneity):
    def __init__(self, vec):
        self.vec = np.asarray(vec, dtype=complex)
        self.dim = self.vec.shape[0]

    def sample(self, t):
        return self.vec

    def table(self, N, h, c):
        return ConstantStageTable(self.vec, N, len(c))

    def shifted(self, offset):
        return ConstantInhomogeneity(self.vec + np.asarray(offset, dtype=complex))


class CallableInhomogeneity(Inhomogeneity):
    """Pointwise sampler around a callable t -> (dim,), with memoization.

    Sampling can be expensive (each value may hide an adaptive quadrature),
    so values are cached per time; tables are built once, sequentially,
    before any parallel phase reads them.
    """

    def __init__(self, fn: Callable[[float], np.ndarray], dim: int, memoize: bool = True):
        self._fn = fn
        self.dim = int(dim)
        self._memo = {} if memoize else None

    def sample(self, t):
        t = float(t)
        if self._memo is None:
            return np.asarray(self._fn(t), dtype=complex)
        hit = self._memo.get(t)
        if hit is None:
            hit = np.asarray(self._fn(t), dtype=complex)
            self._memo[t] = hit
        return hit

    def table(self, N, h, c):
        s = len(c)
        data = np.empty((N, s, self.dim), dtype=complex)
        for n in range(N):
            for k, ck in enumerate(c):
                data[n, k] = self.sample((n + ck) * h)
        return DenseStageTable(data)

    def shifted(self, offset):
        offset = np.asarray(offset, dtype=complex)
        return CallableInhomogeneity(lambda t: self.sample(t) + offset, self.dim)


class SeparableInhomogeneity(Inhomogeneity):
    """g(t) = sum_r time_factors(t)[r] * spatial[r, :].

    time_factors takes an array of times (m,) and returns (m, r); tables
    never materialize the full (N, s, dim) block.
    """

    def __init__(self, spatial, time_factors: Callable[[np.ndarray], np.ndarray]):
        self.spatial = np.asarray(spatial, dtype=complex)
        self._time_factors = time_factors
        self.dim = self.spatial.shape[1]
        self.rank = self.spatial.shape[0]

    def sample(self, t):
        fac = np.asarray(self._time_factors(np.array([float(t)])), dtype=complex)
        return fac[0] @ self.spatial

    def table(self, N, h, c):
        c = np.asarray(c, dtype=float)
        times = ((np.arange(N)[:, None] + c[None, :]) * h).ravel()
        fac = np.asarray(self._time_factors(times), dtype=complex)
        return SeparableStageTable(fac.reshape(N, len(c), self.rank), self.spatial)

    def shifted(self, offset):
        offset = np.asarray(offset, dtype=complex).reshape(1, -1)
        spatial = np.vstack([self.spatial, offset])
        base = self._time_factors

        def factors(ts):
            f = np.asarray(base(ts), dtype=complex)
            return np.hstack([f, np.ones((f.shape[0], 1))])

        return SeparableInhomogeneity(spatial, factors)


@dataclass(frozen=True)
class Problem:
    """Evolution problem: operator family, fractional order, data samplers."""

    family: OperatorFamily
    alpha: float
    g: Inhomogeneity
    u_exact: Callable[[float], np.ndarray] | None = None
    u0: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.g.dim != self.family.dim:
            raise ConfigError(
                f"inhomogeneity dim {self.g.dim} != operator dim {self.family.dim}"
            )

    def g_stage(self, n: int, c, h: float):
        """Stage sample vector G_n at times (n + c_k) h, shape (s, dim)."""
        return np.stack([self.g.sample((n + ck) * h) for ck in np.asarray(c)])

    @property
    def has_initial(self) -> bool:
        return self.u0 is not None and bool(np.any(self.u0 != 0))
