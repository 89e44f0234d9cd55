import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nearincl.algebra import block_algebra, full_matrix_algebra
from nearincl.diagonal import transport, weyl_diagonal
from nearincl.errors import InvalidInputError, PremiseNotCertifiedError, ThresholdError
from nearincl.linalg import operator_norm
from nearincl.maps import AlgebraMap, conjugation_map, frobenius_projection, identity_map, identity_projection
from nearincl.scenario import estimate_gamma
from nearincl.similarity import (
    Certificate,
    corollary_bound,
    digamma,
    intertwiner,
    near_inclusion_pipeline,
    unitarize,
)

from conftest import random_matrix, random_unitary


def test_digamma_constants():
    assert digamma(1, 1) == 74
    assert digamma(2, 1) == 435
    assert isinstance(digamma(1, 1), int)


@given(st.floats(1, 4), st.floats(1, 4))
def test_digamma_at_least_74(x, y):
    assert digamma(x, y) >= 74


@given(st.floats(1, 4), st.floats(1, 4), st.floats(0.01, 1))
def test_digamma_monotone(x, y, h):
    assert digamma(x + h, y) > digamma(x, y) and digamma(x, y + h) > digamma(x, y)


def test_digamma_domain():
    with pytest.raises(InvalidInputError):
        digamma(0.5, 1)


def test_corollary_bound_small_gamma_limit():
    g = 1e-6
    assert corollary_bound(1, g) == pytest.approx(74 * g, rel=1e-9)
    with pytest.raises(InvalidInputError):
        corollary_bound(1, 1 / 74)


def homomorphism(u, v):
    pi = conjugation_map(identity_map(u.algebra), v)
    return AlgebraMap(u.algebra, pi.images, unital=True)


def test_intertwiner_of_equal_maps_is_identity(rng):
    u = weyl_diagonal([2, 1])
    pi = homomorphism(u, np.eye(3) + 0.1 * random_matrix(rng, 3))
    s, diag = intertwiner(pi, pi, u)
    assert np.allclose(s, np.eye(3), atol=1e-10)
    assert diag.premise_certified and diag.intertwining_residual <= 1e-10


@pytest.mark.filterwarnings("ignore:premise not certified")  # a random unitary is far from I
@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_intertwiner_weyl_closed_form(n, rng):
    u = weyl_diagonal([n])
    v = random_unitary(rng, n)
    s, diag = intertwiner(identity_map(u.algebra), homomorphism(u, v), u, membership=False)
    assert np.allclose(s, np.trace(v) / n * np.linalg.inv(v), atol=1e-10)
    assert diag.intertwining_residual <= 1e-10


def test_intertwiner_premise_failure(rng):
    u = weyl_diagonal([2])
    v = random_unitary(rng, 2)
    with pytest.raises(PremiseNotCertifiedError) as info:
        intertwiner(identity_map(u.algebra), homomorphism(u, v), u, strict=True)
    s, diag = info.value.payload
    assert not diag.premise_certified
    with pytest.warns(UserWarning):
        intertwiner(identity_map(u.algebra), homomorphism(u, v), u)


def test_intertwiner_rejects_non_homomorphisms():
    u = weyl_diagonal([2])
    with pytest.raises(InvalidInputError):
        intertwiner(identity_map(u.algebra), 2 * identity_map(u.algebra), u)


@given(st.integers(0, 10_000))
def test_intertwiner_inequalities(seed):
    rng = np.random.default_rng(seed)
    blocks = [[2], [3], [1, 1], [2, 1], [1, 1, 1]][seed % 5]
    u = weyl_diagonal(blocks)
    n = u.algebra.ambient_dim
    g = random_matrix(rng, n)
    v = np.eye(n) + rng.uniform(0, 0.05) * g / operator_norm(g)
    pi1 = homomorphism(u, np.eye(n) + 0.05 * random_matrix(rng, n) / n)
    pi2 = AlgebraMap(u.algebra, v @ pi1.images @ np.linalg.inv(v), unital=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s, d = intertwiner(pi1, pi2, u)
    assert d.intertwining_residual <= 1e-9
    assert d.sigma_min >= 1 - d.similarity_bound - 1e-9
    assert d.s_minus_identity <= d.similarity_bound + 1e-9
    assert d.membership_residual <= 1e-8


def diagonal_scenario(strength, rng, n=4):
    g = random_matrix(rng, n)
    v = np.eye(n) + strength * g / operator_norm(g)
    model = weyl_diagonal([1] * n)
    a = block_algebra([1] * n, similarity=v)
    u = transport(model, v, a)
    nn = block_algebra([1] * n)
    return a, nn, frobenius_projection(nn), u


def test_pipeline_trivial_inclusion():
    u = weyl_diagonal([2, 1])
    a = u.algebra
    cert = near_inclusion_pipeline(a, full_matrix_algebra(3), identity_projection(3), u, 0.0)
    assert cert.outcome == "pass" and cert.exit_code == 0
    assert np.allclose(cert.similarity, np.eye(3), atol=1e-10)
    assert cert.conjugation_residual <= 1e-10


def test_pipeline_diagonal_example(rng):
    a, n, p, u = diagonal_scenario(1e-4, rng)
    gamma = estimate_gamma(a, n, projection=p)
    cert = near_inclusion_pipeline(a, n, p, u, gamma.upper)
    assert cert.threshold_ok and cert.bound_satisfied and cert.passed
    assert cert.s_minus_identity <= cert.digamma_value * cert.gamma_upper + 1e-9
    assert cert.conjugation_residual <= 1e-8


def test_pipeline_threshold(rng):
    a, n, p, u = diagonal_scenario(0.2, rng)
    gamma = estimate_gamma(a, n, projection=p)
    with pytest.raises(ThresholdError) as info:
        near_inclusion_pipeline(a, n, p, u, gamma.upper)
    assert info.value.margin >= 0
    assert info.value.payload.outcome == "threshold"


def test_pipeline_is_deterministic(rng):
    a, n, p, u = diagonal_scenario(1e-5, rng)
    runs = [json.dumps(near_inclusion_pipeline(a, n, p, u, 1e-4, seed=3).to_json()) for _ in range(2)]
    assert runs[0] == runs[1]


def test_pipeline_rejects_bad_gamma():
    u = weyl_diagonal([2])
    with pytest.raises(InvalidInputError):
        near_inclusion_pipeline(u.algebra, u.algebra, identity_projection(2), u, -1.0)


def test_unitarize_diagonal_scenario(rng):
    n = 4
    h = random_matrix(rng, n)
    h = 0.5 * (h + h.conj().T)
    lam, w = np.linalg.eigh(h)
    v = (w * np.exp(1e-4j * lam / np.max(np.abs(lam)))) @ w.conj().T
    model = weyl_diagonal([2, 2])
    a = block_algebra([2, 2], similarity=v)
    u = transport(model, v, a)
    nn = block_algebra([2, 2])
    p = frobenius_projection(nn)
    gamma = estimate_gamma(a, nn, projection=p)
    cert = unitarize(near_inclusion_pipeline(a, nn, p, u, gamma.upper), a, nn)
    uni = cert.unitary
    assert uni["unitarity_residual"] <= 1e-10
    assert uni["conjugation_residual"] <= 1e-8
    assert uni["u_minus_identity"] <= corollary_bound(cert.p_norm_upper, cert.gamma_upper) + 1e-9
    assert cert.outcome == "pass"


def test_unitarize_of_unitary_keeps_it():
    u = weyl_diagonal([2])
    cert = near_inclusion_pipeline(u.algebra, u.algebra, identity_projection(2), u, 0.0)
    out = unitarize(cert, u.algebra, u.algebra)
    assert np.allclose(out.unitary["matrix"], cert.similarity)


def test_unitarize_needs_self_adjoint(rng):
    a, n, p, u = diagonal_scenario(1e-4, rng)
    cert = near_inclusion_pipeline(a, n, p, u, estimate_gamma(a, n).upper)
    with pytest.raises(InvalidInputError):
        unitarize(cert, a, n)


def test_certificate_json_round_trip(rng):
    a, n, p, u = diagonal_scenario(1e-4, rng)
    cert = near_inclusion_pipeline(a, n, p, u, 1e-3)
    back = Certificate.from_json(json.loads(json.dumps(cert.to_json())))
    assert back.decisions() == cert.decisions()
    assert np.array_equal(back.similarity, cert.similarity)
