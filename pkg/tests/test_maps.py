import numpy as np
import pytest
from hypothesis import given, strategies as st

from nearincl.algebra import block_algebra, full_matrix_algebra, pattern_algebra
from nearincl.diagonal import TensorElement, weyl_diagonal
from nearincl.errors import InvalidInputError
from nearincl.linalg import operator_norm
from nearincl.maps import (
    AlgebraMap,
    Bracket,
    compress,
    conjugation_map,
    defect,
    defect_norm,
    defect_upper,
    frobenius_projection,
    identity_map,
    identity_projection,
    map_from_function,
    map_norm,
    norm_upper,
    psi_apply,
)

from conftest import random_matrix, random_unitary

E11 = np.array([[1, 0], [0, 0]], dtype=complex)
E12 = np.array([[0, 1], [0, 0]], dtype=complex)


def test_bracket_intersection():
    b = Bracket(0.1, 2.0).intersect(Bracket(0.5, 1.0))
    assert tuple(b) == (0.5, 1.0)


def test_map_arithmetic_and_membership(rng):
    a = full_matrix_algebra(2)
    l = identity_map(a)
    x = random_matrix(rng, 2)
    assert np.allclose((2 * l - l)(x), x)
    assert np.allclose((-l)(x), -x)
    diag = block_algebra([1, 1])
    with pytest.raises(InvalidInputError):
        identity_map(diag)(E12)


def test_map_json_round_trip(rng):
    a = block_algebra([2, 1])
    l = AlgebraMap(a, a.basis + 0.01 * random_matrix(rng, 3))
    back = AlgebraMap.from_json(l.to_json(), a)
    assert np.array_equal(back.images, l.images)


def test_defect_examples():
    a = full_matrix_algebra(2)
    l = 2 * identity_map(a)
    assert np.allclose(defect(l, np.eye(2), np.eye(2)), -2 * np.eye(2))
    assert np.max(np.abs(defect(identity_map(a), E11, E12))) <= 1e-12


@given(st.integers(0, 1000))
def test_defect_matches_expansion_oracle(seed):
    rng = np.random.default_rng(seed)
    a = block_algebra([2, 1])
    l = AlgebraMap(a, np.array([random_matrix(rng, 3) for _ in range(a.dim)]))
    x, y = a.project(random_matrix(rng, 3)), a.project(random_matrix(rng, 3))
    # oracle: expand x, y, xy in the basis and apply L coordinate by coordinate
    lx = np.einsum("i,iab->ab", a.coefficients(x), l.images)
    ly = np.einsum("i,iab->ab", a.coefficients(y), l.images)
    lxy = np.einsum("i,iab->ab", a.coefficients(x @ y), l.images)
    assert np.allclose(defect(l, x, y), lxy - lx @ ly, atol=1e-10)


def test_homomorphism_defect_bracket_is_zero(rng):
    a = block_algebra([2, 1])
    v = np.eye(3) + 0.1 * random_matrix(rng, 3)
    for l in (identity_map(a), conjugation_map(identity_map(a), v)):
        assert defect_upper(l) <= 1e-10
        b = defect_norm(l, samples=16, steps=5)
        assert b.lower <= b.upper <= 1e-10


def test_defect_of_twice_identity():
    b = defect_norm(2 * identity_map(full_matrix_algebra(2)), samples=32, steps=10)
    assert b.lower >= 2 - 1e-6 and b.upper >= 2


def test_defect_witness_replays():
    t = compress(frobenius_projection(block_algebra([2, 2])), full_matrix_algebra(4))
    b = defect_norm(t, seed=0, samples=32, steps=10)
    x, y = b.witness
    assert operator_norm(defect(t, x, y)) == pytest.approx(b.lower, rel=1e-9)
    assert 0 < b.lower <= b.upper


def test_identity_norm_bracket():
    b = map_norm(identity_map(block_algebra([2, 1])), samples=16, steps=5)
    assert b.lower <= 1 <= b.upper and b.upper - b.lower <= 1e-6


@given(st.floats(-3, 3).filter(lambda c: abs(c) > 1e-3))
def test_norm_is_homogeneous(c):
    b = map_norm(c * identity_map(full_matrix_algebra(2)), samples=16, steps=5)
    assert b.lower - 1e-9 <= abs(c) <= b.upper + 1e-9


@given(st.integers(0, 1000))
def test_difference_of_conjugates_obeys_submultiplicative_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 4))
    a = full_matrix_algebra(n)
    g = random_matrix(rng, n)
    v = np.eye(n) + 0.1 * g / operator_norm(g)
    l = identity_map(a) - conjugation_map(identity_map(a), v)
    oracle = 2 * operator_norm(v - np.eye(n)) * operator_norm(np.linalg.inv(v))
    b = map_norm(l, seed=seed, samples=64, steps=10)
    assert b.lower <= b.upper <= oracle + 1e-9
    assert operator_norm(l(b.witness)) == pytest.approx(b.lower, rel=1e-9)
    assert operator_norm(b.witness) <= 1 + 1e-9


def test_pattern_projections():
    cases = [
        (block_algebra([1, 1, 1]), 1.0),
        (block_algebra([2, 2]), 1.0),
        (pattern_algebra([2, 2], [(0, 0), (0, 1), (1, 1)]), 2.0),
        (pattern_algebra([1, 1, 1], [(i, j) for i in range(3) for j in range(3) if i <= j]), 3.0),
        (full_matrix_algebra(3), 1.0),
    ]
    for alg, bound in cases:
        p = frobenius_projection(alg)
        assert p.norm_upper == bound
        assert p.idempotency_residual() <= 1e-12 and p.range_residual() <= 1e-12


def test_projection_norm_is_an_upper_bound(rng):
    p = frobenius_projection(pattern_algebra([1, 1], [(0, 0), (0, 1), (1, 1)]))
    for _ in range(200):
        x = random_matrix(rng, 2)
        assert operator_norm(p(x)) <= p.norm_upper * operator_norm(x) * (1 + 1e-12)


def test_compress_examples():
    a = block_algebra([1, 2])
    t = compress(identity_projection(3), a)
    assert np.allclose(t.images, a.basis)
    diag = block_algebra([1, 1])
    t = compress(frobenius_projection(diag), diag)
    assert np.allclose(t.images, diag.basis)
    with pytest.raises(InvalidInputError):
        compress(identity_projection(2), a)


def test_compress_t_minus_id_bound():
    from nearincl.scenario import estimate_gamma

    v = np.eye(2) + 0.01 * E12
    a = block_algebra([1, 1], similarity=v)
    n = block_algebra([1, 1])
    p = frobenius_projection(n)
    gamma = estimate_gamma(a, n)
    t = compress(p, a)
    assert norm_upper(t - identity_map(a)) <= (1 + p.norm_upper) * gamma.upper + 1e-12
    assert defect_norm(t, samples=32, steps=10).upper <= (2 + p.norm_upper) * (1 + p.norm_upper) * gamma.upper + 1e-9


def test_psi_examples(rng):
    m2 = full_matrix_algebra(2)
    t = TensorElement.from_pairs(m2, [(E11, E12)])
    assert np.allclose(psi_apply(identity_map(m2), identity_map(m2), t), E12)
    u = weyl_diagonal([2, 1])
    pi = conjugation_map(identity_map(u.algebra), np.eye(3) + 0.2 * random_matrix(rng, 3))
    assert np.allclose(psi_apply(pi, pi, u), np.eye(3), atol=1e-10)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_weyl_twirl(n, rng):
    u = weyl_diagonal([n])
    v = random_unitary(rng, n)
    s = psi_apply(identity_map(u.algebra), conjugation_map(identity_map(u.algebra), v), u)
    assert np.allclose(s, np.trace(v) / n * np.linalg.inv(v), atol=1e-10)


@given(st.integers(0, 1000))
def test_psi_is_bilinear(seed):
    rng = np.random.default_rng(seed)
    a = block_algebra([2])
    f = AlgebraMap(a, rng.standard_normal((4, 2, 2)))
    g1 = AlgebraMap(a, rng.standard_normal((4, 2, 2)))
    g2 = AlgebraMap(a, rng.standard_normal((4, 2, 2)))
    u = weyl_diagonal([2])
    c = complex(rng.standard_normal(), rng.standard_normal())
    lhs = psi_apply(f, g1 + c * g2, u)
    assert np.allclose(lhs, psi_apply(f, g1, u) + c * psi_apply(f, g2, u))


def test_psi_domain_mismatch():
    with pytest.raises(InvalidInputError):
        psi_apply(identity_map(full_matrix_algebra(2)), identity_map(full_matrix_algebra(2)), weyl_diagonal([1, 1]))


def test_norm_upper_uses_stored_bracket():
    a = full_matrix_algebra(2)
    l = map_from_function(a, lambda x: 3 * x)
    assert norm_upper(l) == pytest.approx(3.0, rel=1e-6)
    assert norm_upper(l.with_brackets(norm=(0.0, 3.5))) <= 3.5
