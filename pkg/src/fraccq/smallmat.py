"""Complex dense linear algebra for very small systems.

Everything here targets the s x s stage space of the Runge-Kutta schemes
(s <= 3), plus a DFT helper for the circle-quadrature block. Eigenvalues
come from the closed-form characteristic polynomial with one Newton polish
per root, so the results are deterministic and there is no dependency on a
general eigensolver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BranchCutError, DecompositionError, DomainError, SingularMatrixError

_PIVOT_FLOOR = 1e-30
_GAP_REL = 1e-8
_RECON_REL = 1e-10
_COND_FLAG = 1e8

_CUBE_ROOT_UNITY = np.exp(2j * np.pi / 3)


class LUFactor:
    """Reusable LU factorization with partial pivoting (complex arithmetic).

    Raises SingularMatrixError when a pivot falls below 1e-30 in modulus.
    """

    def __init__(self, mtx):
        a = np.array(mtx, dtype=complex)
        n = a.shape[0]
        if a.shape != (n, n):
            raise DomainError(f"expected a square matrix, got shape {a.shape}")
        piv = np.arange(n)
        for k in range(n):
            p = k + int(np.argmax(np.abs(a[k:, k])))
            if abs(a[p, k]) < _PIVOT_FLOOR:
                raise SingularMatrixError(
                    f"pivot {abs(a[p, k]):.3e} below {_PIVOT_FLOOR:g} in column {k}"
                )
            if p != k:
                a[[k, p]] = a[[p, k]]
                piv[[k, p]] = piv[[p, k]]
            a[k + 1:, k] /= a[k, k]
            a[k + 1:, k + 1:] -= np.outer(a[k + 1:, k], a[k, k + 1:])
        self._lu = a
        self._piv = piv
        self.n = n

    def solve(self, rhs):
        """Solve A @ X = rhs; rhs may be a vector or a matrix of columns."""
        rhs = np.asarray(rhs, dtype=complex)
        vector = rhs.ndim == 1
        x = rhs.reshape(self.n, -1)[self._piv].copy()
        lu = self._lu
        for k in range(1, self.n):
            x[k] -= lu[k, :k] @ x[:k]
        for k in range(self.n - 1, -1, -1):
            x[k] -= lu[k, k + 1:] @ x[k + 1:]
            x[k] /= lu[k, k]
        return x[:, 0] if vector else x

    @property
    def det(self):
        d = np.prod(np.diagonal(self._lu))
        # sign of the row permutation via its cycle decomposition
        seen = np.zeros(self.n, dtype=bool)
        sign = 1
        for i in range(self.n):
            if seen[i]:
                continue
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = self._piv[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
        return sign * d


def lu_solve(mtx, rhs):
    """Solve mtx @ X = rhs by LU with partial pivoting."""
    return LUFactor(mtx).solve(rhs)


@dataclass(frozen=True)
class EigDecomp:
    """Right eigendecomposition M = U diag(d) U_inv of a small matrix."""

    U: np.ndarray
    d: np.ndarray
    U_inv: np.ndarray
    cond_estimate: float
    flagged: bool


def _char_roots(m):
    """Roots of the characteristic polynomial of a 1x1 .. 3x3 matrix.

    Closed quadratic/cubic formulas followed by two Newton polish steps on
    the monic polynomial. Output sorted by (real, imag) for determinism.
    """
    s = m.shape[0]
    if s == 1:
        return m[0, :1].astype(complex)
    if s == 2:
        tr = m[0, 0] + m[1, 1]
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        disc = np.sqrt(complex(tr * tr - 4 * det))
        roots = np.array([(tr + disc) / 2, (tr - disc) / 2], dtype=complex)
        coeffs = (1.0, -tr, det)
    elif s == 3:
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        minors = (
            m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
            + m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
            + m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        )
        det = (
            m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )
        # monic p(x) = x^3 + a x^2 + b x + c, depressed via x = t - a/3
        a, b, c = -tr, minors, -det
        p = b - a * a / 3
        q = 2 * a**3 / 27 - a * b / 3 + c
        sq = np.sqrt(complex(q * q + 4 * p**3 / 27))
        # pick the branch that avoids cancellation in -q +- sq
        u3 = (-q + sq) / 2 if abs(-q + sq) >= abs(-q - sq) else (-q - sq) / 2
        if abs(u3) == 0.0:
            # u3 vanishes only when p = q = 0: triple root of the depressed cubic
            ts = np.zeros(3, dtype=complex)
        else:
            u = u3 ** (1.0 / 3.0)
            ts = np.array([u * _CUBE_ROOT_UNITY**k for k in range(3)])
            ts = ts - p / (3 * ts)
        roots = ts + tr / 3
        coeffs = (1.0, a, b, c)
    else:
        raise DomainError(f"closed-form eigenvalues support s <= 3, got s={s}")

    # Newton polish on the monic characteristic polynomial
    cf = np.array(coeffs, dtype=complex)
    dcf = cf[:-1] * np.arange(len(cf) - 1, 0, -1)
    for _ in range(2):
        pv = np.polyval(cf, roots)
        dv = np.polyval(dcf, roots)
        safe = np.abs(dv) > 0
        roots = np.where(safe, roots - pv / np.where(safe, dv, 1), roots)
    order = np.lexsort((roots.imag, roots.real))
    return roots[order]


def _null_vector(b):
    """A null vector of a (numerically rank-deficient) small matrix.

    Gaussian elimination with complete pivoting; the final pivot column
    spans the kernel. Normalized so the largest entry is exactly 1.
    """
    b = np.array(b, dtype=complex)
    n = b.shape[0]
    colperm = np.arange(n)
    for k in range(n - 1):
        sub = np.abs(b[k:, k:])
        i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        i += k
        j += k
        if i != k:
            b[[k, i]] = b[[i, k]]
        if j != k:
            b[:, [k, j]] = b[:, [j, k]]
            colperm[[k, j]] = colperm[[j, k]]
        if abs(b[k, k]) == 0.0:
            break
        b[k + 1:, k:] -= np.outer(b[k + 1:, k] / b[k, k], b[k, k:])
    x = np.zeros(n, dtype=complex)
    x[n - 1] = 1.0
    for i in range(n - 2, -1, -1):
        if abs(b[i, i]) == 0.0:
            raise DecompositionError("rank deficiency above the last pivot")
        x[i] = -(b[i, i + 1:] @ x[i + 1:]) / b[i, i]
    out = np.zeros(n, dtype=complex)
    out[colperm] = x
    out = out / out[np.argmax(np.abs(out))]
    return out


def eig_small(mtx):
    """Eigendecomposition of an s x s complex matrix, s <= 3.

    Returns an EigDecomp whose reconstruction residual is verified to be
    below 1e-10 relative in max norm. Raises DecompositionError for
    (near-)defective input; callers holding a circle-quadrature node are
    expected to perturb it radially and retry.
    """
    m = np.asarray(mtx, dtype=complex)
    s = m.shape[0]
    if m.shape != (s, s) or s > 3:
        raise DomainError(f"eig_small expects square s<=3, got shape {m.shape}")
    d = _char_roots(m)
    scale = max(float(np.max(np.abs(d))), float(np.max(np.abs(m))), 1e-300)
    if s > 1:
        gaps = [abs(d[i] - d[j]) for i in range(s) for j in range(i + 1, s)]
        if min(gaps) < _GAP_REL * scale:
            raise DecompositionError(
                f"eigenvalue gap {min(gaps):.3e} below {_GAP_REL:g} * {scale:.3e}; "
                "near-defective matrix, perturb the quadrature node and retry"
            )
    cols = []
    for lam in d:
        cols.append(_null_vector(m - lam * np.eye(s)))
    u = np.array(cols, dtype=complex).T
    try:
        u_inv = lu_solve(u, np.eye(s))
    except SingularMatrixError as exc:
        raise DecompositionError(f"eigenvector matrix singular: {exc}") from exc
    recon = (u * d) @ u_inv
    resid = float(np.max(np.abs(recon - m)))
    bound = _RECON_REL * max(float(np.max(np.abs(m))), 1e-300)
    if resid > bound:
        raise DecompositionError(
            f"reconstruction residual {resid:.3e} exceeds {bound:.3e}; "
            "perturb the quadrature node and retry"
        )
    cond = float(np.linalg.norm(u) * np.linalg.norm(u_inv))
    return EigDecomp(U=u, d=d, U_inv=u_inv, cond_estimate=cond, flagged=cond > _COND_FLAG)


def power_alpha(d, alpha):
    """Principal-branch fractional power d_i^alpha, arg in (-pi, pi).

    alpha = 1 is admitted as the exact classical limit.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    arr = np.atleast_1d(np.asarray(d, dtype=complex))
    on_cut = (arr.imag == 0.0) & (arr.real <= 0.0)
    if np.any(on_cut):
        bad = arr[on_cut][0]
        raise BranchCutError(f"entry {bad} lies on the closed negative real axis")
    if alpha == 1.0:
        out = arr.copy()
    else:
        out = np.exp(alpha * np.log(arr))
    return out if np.ndim(d) else out[0]


def dft(x, sign, axis=0):
    """Discrete Fourier transform X_j = sum_n x_n exp(sign*2*pi*i*n*j/J).

    sign=-1 is the analysis direction used by the first-weights block.
    Backed by the FFT, which handles arbitrary lengths.
    """
    if sign not in (-1, 1):
        raise DomainError(f"sign must be +-1, got {sign}")
    x = np.asarray(x, dtype=complex)
    if x.shape[axis] < 1:
        raise DomainError("dft needs at least one sample")
    if sign == -1:
        return np.fft.fft(x, axis=axis)
    return np.fft.ifft(x, axis=axis) * x.shape[axis]
