import numpy as np
import pytest
from hypothesis import given, strategies as st

from nearincl.algebra import block_algebra, full_matrix_algebra
from nearincl.diagonal import (
    TensorElement,
    module_act,
    multiply,
    projective_norm_upper_bound,
    regroup,
    transport,
    verify_diagonal,
    weyl_diagonal,
    weyl_matrices,
)
from nearincl.errors import InvalidInputError

from conftest import random_matrix, random_unitary

E11 = np.array([[1, 0], [0, 0]], dtype=complex)
E12 = np.array([[0, 1], [0, 0]], dtype=complex)
PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]


def test_multiply_examples():
    m2 = full_matrix_algebra(2)
    assert np.allclose(multiply(TensorElement.from_pairs(m2, [(np.eye(2), np.eye(2))])), np.eye(2))
    assert np.allclose(multiply(TensorElement.from_pairs(m2, [(E11, E12)])), E12)


def test_module_action():
    m2 = full_matrix_algebra(2)
    t = TensorElement.from_pairs(m2, [(E12, E11)])
    same = module_act("left", np.eye(2), t)
    assert np.array_equal(same.left, t.left) and np.array_equal(same.right, t.right)
    acted = module_act("left", E11, t)
    assert np.allclose(acted.left[0], E12) and np.allclose(acted.right[0], E11)
    with pytest.raises(InvalidInputError):
        module_act("left", np.eye(3), t)
    with pytest.raises(InvalidInputError):
        module_act("middle", E11, t)


def test_weyl_matrices_are_unitary_and_span():
    for n in (2, 3, 4):
        w = weyl_matrices(n)
        assert len(w) == n * n
        for u in w:
            assert np.allclose(u.conj().T @ u, np.eye(n))
        assert np.linalg.matrix_rank(np.array([u.ravel() for u in w])) == n * n


def test_weyl_diagonal_m2_is_pauli_average():
    u = weyl_diagonal([2])
    expected = TensorElement.from_pairs(u.algebra, [(p / 4, np.asarray(p).conj().T) for p in PAULI])
    assert np.allclose(u.coefficient_matrix(), expected.coefficient_matrix(), atol=1e-14)
    assert np.allclose(multiply(u), np.eye(2), atol=1e-14)


def test_weyl_diagonal_c2():
    u = weyl_diagonal([1, 1])
    p1, p2 = np.diag([1.0, 0]), np.diag([0, 1.0])
    ref = TensorElement.from_pairs(u.algebra, [(p1, p1), (p2, p2)])
    assert np.allclose(u.coefficient_matrix(), ref.coefficient_matrix(), atol=1e-14)
    assert u.norm_bound == 1.0
    assert projective_norm_upper_bound(ref) == pytest.approx(1.0)
    assert ref.norm_bound == pytest.approx(2.0)
    assert regroup(ref) is not None


@pytest.mark.parametrize("blocks", [[1], [2], [3], [4], [2, 2], [1, 1], [2, 3], [1, 2, 3], [2, 2, 2, 2]])
def test_weyl_diagonal_axioms(blocks):
    u = weyl_diagonal(blocks)
    check = verify_diagonal(u)
    assert check.passed
    assert check.commutation_residual <= 1e-12 and check.multiplication_residual <= 1e-12
    assert projective_norm_upper_bound(u) == 1.0


def test_weyl_diagonal_with_multiplicities():
    u = weyl_diagonal([2, 1], [1, 2], ambient_dim=5)
    assert u.algebra.ambient_dim == 5
    assert verify_diagonal(u).passed


def test_weyl_diagonal_empty():
    with pytest.raises(InvalidInputError):
        weyl_diagonal([])


def test_trivial_tensor_is_not_a_diagonal():
    m2 = full_matrix_algebra(2)
    check = verify_diagonal(TensorElement.from_pairs(m2, [(np.eye(2), np.eye(2))]))
    assert check.commutation_residual > 0.5 and not check.passed


def test_transport_identity_and_unitary(rng):
    u = weyl_diagonal([2, 1])
    same = transport(u, np.eye(3), u.algebra)
    assert np.array_equal(same.left, u.left) and same.norm_bound == u.norm_bound
    v = random_unitary(rng, 3)
    target = block_algebra([2, 1], similarity=v)
    moved = transport(u, v, target)
    assert moved.norm_bound == pytest.approx(1.0, abs=1e-12)
    assert verify_diagonal(moved).passed


def test_transport_diag21_gives_bound_four():
    u = weyl_diagonal([2])
    s = np.diag([2.0, 1.0])
    target = block_algebra([2], similarity=s)
    moved = transport(u, s, target)
    assert moved.norm_bound == pytest.approx(4.0)
    assert verify_diagonal(moved).passed


@given(st.integers(0, 1000))
def test_transport_random_similarity(seed):
    rng = np.random.default_rng(seed)
    g = random_matrix(rng, 4)
    s = np.eye(4) + 0.3 * g / np.linalg.norm(g, 2)  # kappa <= 1.3 / 0.7 < 4
    u = weyl_diagonal([2, 1, 1])
    moved = transport(u, s, block_algebra([2, 1, 1], similarity=s))
    check = verify_diagonal(moved)
    assert check.commutation_residual <= 1e-9 and check.multiplication_residual <= 1e-9


def test_transport_wrong_target(rng):
    u = weyl_diagonal([1, 1])
    with pytest.raises(InvalidInputError):
        transport(u, np.eye(2) + 0.5 * E12, u.algebra)


@given(st.integers(0, 1000))
def test_projective_bound_dominates_multiply(seed):
    rng = np.random.default_rng(seed)
    m2 = full_matrix_algebra(2)
    t = TensorElement.from_pairs(m2, [(random_matrix(rng, 2), random_matrix(rng, 2)) for _ in range(3)])
    assert projective_norm_upper_bound(t) >= np.linalg.norm(multiply(t), 2) - 1e-12


def test_tensor_json_round_trip():
    u = weyl_diagonal([2])
    back = TensorElement.from_json(u.to_json(), u.algebra)
    assert np.array_equal(back.left, u.left) and back.norm_bound == u.norm_bound


def test_factor_outside_algebra_rejected():
    diag = block_algebra([1, 1])
    with pytest.raises(InvalidInputError):
        TensorElement.from_pairs(diag, [(E12, np.eye(2))])
