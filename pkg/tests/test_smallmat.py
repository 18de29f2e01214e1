import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraccq import radau_iia
from fraccq.errors import BranchCutError, DecompositionError, DomainError, SingularMatrixError
from fraccq.smallmat import LUFactor, dft, eig_small, lu_solve, power_alpha
from fraccq.tableau import delta


def test_eig_diagonal_matrix():
    dec = eig_small(np.diag([2.0, 3.0j]))
    assert sorted(dec.d, key=lambda z: (z.real, z.imag)) == pytest.approx([3.0j, 2.0])
    recon = (dec.U * dec.d) @ dec.U_inv
    assert np.max(np.abs(recon - np.diag([2.0, 3.0j]))) < 1e-12


def test_eig_rotation_generator():
    dec = eig_small(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert sorted(dec.d, key=lambda z: z.imag) == pytest.approx([-1j, 1j])


def test_eig_delta_reconstruction():
    b = delta(0.01, radau_iia(2)) / 0.1
    dec = eig_small(b)
    recon = (dec.U * dec.d) @ dec.U_inv
    assert np.max(np.abs(recon - b)) <= 1e-10 * np.max(np.abs(b))


def test_eig_3x3_random_reconstruction():
    rng = np.random.default_rng(5)
    for _ in range(25):
        m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        dec = eig_small(m)
        recon = (dec.U * dec.d) @ dec.U_inv
        assert np.max(np.abs(recon - m)) <= 1e-10 * np.max(np.abs(m))


def test_eig_defective_raises():
    with pytest.raises(DecompositionError):
        eig_small(np.array([[1.0, 1.0], [0.0, 1.0]]))


def test_eig_rejects_large_matrices():
    with pytest.raises(DomainError):
        eig_small(np.eye(4))


def test_lu_identity():
    y = np.array([1.0, 2.0, 3.0])
    assert lu_solve(np.eye(3), y) == pytest.approx(y)


def test_lu_diagonal():
    x = lu_solve(np.array([[2.0, 0.0], [0.0, 4.0]]), np.array([2.0, 4.0]))
    assert x == pytest.approx([1.0, 1.0])


def test_lu_random_residual():
    rng = np.random.default_rng(12)
    for _ in range(10):
        m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
        y = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        x = lu_solve(m, y)
        assert np.max(np.abs(m @ x - y)) <= 1e-10 * np.max(np.abs(y)) * np.linalg.cond(m)


def test_lu_singular_raises():
    with pytest.raises(SingularMatrixError):
        lu_solve(np.zeros((2, 2)), np.ones(2))


def test_lu_det_sign():
    m = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert LUFactor(m).det == pytest.approx(-1.0)


def test_power_alpha_values():
    assert power_alpha(np.array([1.0 + 0j]), 0.5) == pytest.approx([1.0])
    assert power_alpha(np.array([4.0 + 0j]), 0.5) == pytest.approx([2.0])
    assert power_alpha(np.array([1j]), 0.5) == pytest.approx([np.exp(1j * np.pi / 4)])


def test_power_alpha_classical_limit_identity():
    d = np.array([2.0 + 1.0j, 0.5 - 3.0j])
    assert np.array_equal(power_alpha(d, 1.0), d)


def test_power_alpha_branch_cut():
    with pytest.raises(BranchCutError):
        power_alpha(np.array([-1.0 + 0j]), 0.5)
    with pytest.raises(BranchCutError):
        power_alpha(np.array([0.0 + 0j]), 0.5)


def test_power_alpha_domain():
    with pytest.raises(DomainError):
        power_alpha(np.array([1.0 + 0j]), 1.5)


def test_matrix_power_against_contour_oracle():
    """U d^alpha U^-1 must agree with the contour-integral matrix power."""
    rng = np.random.default_rng(99)
    alpha = 0.6
    done = 0
    while done < 20:
        # well-conditioned 2x2 with spectrum in the right half-plane
        d = rng.uniform(1.0, 3.0, 2) + 1j * rng.uniform(-0.7, 0.7, 2)
        if abs(d[0] - d[1]) < 0.3:
            d[1] += 0.5
        center = d.mean()
        radius = 1.4 * max(abs(d[0] - center), abs(d[1] - center)) + 0.4
        if center.real - radius < 0.05:
            continue  # circle would cross the branch cut; redraw
        v = rng.standard_normal((2, 2)) + 0.2j * rng.standard_normal((2, 2))
        while abs(np.linalg.det(v)) < 0.3:
            v = rng.standard_normal((2, 2)) + 0.2j * rng.standard_normal((2, 2))
        m = v @ np.diag(d) @ np.linalg.inv(v)
        dec = eig_small(m)
        via_eig = (dec.U * power_alpha(dec.d, alpha)) @ dec.U_inv
        # trapezoidal contour integral of z^alpha (z Id - M)^-1 / (2 pi i)
        nodes = center + radius * np.exp(2j * np.pi * np.arange(512) / 512)
        acc = np.zeros((2, 2), dtype=complex)
        for z in nodes:
            acc += z**alpha * np.linalg.inv(z * np.eye(2) - m) * (z - center)
        oracle = acc / 512
        assert np.max(np.abs(via_eig - oracle)) <= 1e-8
        done += 1


def test_dft_delta_and_pair():
    assert dft(np.array([1.0, 0, 0, 0]), -1) == pytest.approx([1, 1, 1, 1])
    assert dft(np.array([1.0, 1.0]), -1) == pytest.approx([2.0, 0.0])


def test_dft_parseval():
    rng = np.random.default_rng(4)
    x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    X = dft(x, -1)
    assert np.sum(np.abs(X) ** 2) / 16 == pytest.approx(np.sum(np.abs(x) ** 2), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=1, max_value=200), st.integers(min_value=0, max_value=2**32 - 1))
def test_dft_roundtrip_property(J, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(J) + 1j * rng.standard_normal(J)
    back = dft(dft(x, -1), 1) / J
    assert np.max(np.abs(back - x)) <= 1e-12 * J


def test_eig_condition_flag():
    good = eig_small(np.array([[2.0, 0.3], [0.1, -1.0]]))
    assert not good.flagged
    # nearly parallel eigenvectors, but eigenvalue gap still above the
    # defectiveness threshold: decomposes, with the conditioning flagged
    skewed = eig_small(np.array([[1.0, 8e7], [0.0, 2.0]]))
    assert skewed.flagged and skewed.cond_estimate > 1e8
