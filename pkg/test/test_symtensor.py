import math
from itertools import permutations

import numpy as np
import pytest

from app.services.algebra.symtensor import (
    SignatureKind,
    SymTensor,
    degree_signatures,
    expand,
    frame,
    frame_basis_matrix,
    frame_tensor,
    multiplicities,
    pair,
    pair_dense,
    signature_kind,
    sym_basis,
    sym_dimension,
    sym_product,
    symmetrize,
    vector_power,
)
from app.utils.errors import DimensionMismatchError


def random_tensor(rng, n, m):
    return SymTensor(n, m, rng.normal(size=sym_dimension(n, m)))


@pytest.mark.parametrize('n', [1, 2, 3])
@pytest.mark.parametrize('m', [0, 1, 2, 3, 4])
def test_basis_size_and_order(n, m):
    basis = sym_basis(n, m)
    assert len(basis) == math.comb(m + n - 1, m)
    assert basis == sorted(basis)
    assert all(list(index) == sorted(index) for index in basis)


def test_basis_examples():
    assert sym_basis(2, 2) == [(0, 0), (0, 1), (1, 1)]
    assert sym_basis(3, 0) == [()]
    with pytest.raises(ValueError):
        sym_basis(0, 1)


@pytest.mark.parametrize('n,m', [(2, 2), (3, 3), (2, 4), (3, 2)])
def test_expand_is_symmetric(rng, n, m):
    dense = random_tensor(rng, n, m).expand()
    for perm in permutations(range(m)):
        np.testing.assert_array_equal(dense, np.transpose(dense, perm))


def test_multiplicities_count_permutations():
    np.testing.assert_array_equal(multiplicities(2, 2), [1, 2, 1])
    for n, m in [(2, 3), (3, 3), (3, 4)]:
        assert multiplicities(n, m).sum() == n ** m


@pytest.mark.parametrize('n,m', [(2, 2), (3, 3), (2, 4)])
def test_symmetrize_idempotent_and_fixes_symmetric(rng, n, m):
    dense = rng.normal(size=(n,) * m)
    once = symmetrize(dense)
    twice = symmetrize(once.expand())
    np.testing.assert_allclose(once.coeffs, twice.coeffs, atol=1e-14)

    t = random_tensor(rng, n, m)
    np.testing.assert_allclose(symmetrize(t.expand()).coeffs, t.coeffs, atol=1e-14)


def test_symmetrize_needs_dimension_for_scalars():
    assert symmetrize(np.array(2.5), n=3).coeffs[0] == 2.5
    with pytest.raises(DimensionMismatchError):
        symmetrize(np.array(1.0))
    with pytest.raises(DimensionMismatchError):
        symmetrize(np.zeros((2, 3)))


def test_pair_matches_dense_contraction(rng):
    for n, m in [(2, 1), (2, 3), (3, 2), (3, 4)]:
        f, g = random_tensor(rng, n, m), random_tensor(rng, n, m)
        assert pair(f, g) == pytest.approx(np.sum(f.expand() * g.expand()), rel=1e-12)


def test_pair_with_dense_tensor_sees_only_its_symmetric_part(rng):
    f = random_tensor(rng, 3, 3)
    dense = rng.normal(size=(3, 3, 3))
    expected = pair(f, symmetrize(dense))
    assert pair_dense(f, dense) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(DimensionMismatchError):
        pair_dense(f, np.zeros((3, 3)))


def test_pair_rejects_mixed_spaces():
    with pytest.raises(DimensionMismatchError):
        pair(SymTensor.zeros(2, 1), SymTensor.zeros(2, 2))


def test_sym_product_commutative_and_associative(rng):
    a, b, c = random_tensor(rng, 3, 1), random_tensor(rng, 3, 2), random_tensor(rng, 3, 1)
    np.testing.assert_allclose(sym_product(a, b).coeffs, sym_product(b, a).coeffs, atol=1e-13)
    left = sym_product(sym_product(a, b), c)
    right = sym_product(a, sym_product(b, c))
    np.testing.assert_allclose(left.coeffs, right.coeffs, atol=1e-13)


def test_sym_product_with_scalar_is_scaling(rng):
    a = random_tensor(rng, 2, 3)
    np.testing.assert_allclose(sym_product(SymTensor.scalar(2, 3.0), a).coeffs, 3.0 * a.coeffs)


def test_sym_product_of_vectors_is_symmetrized_outer_product(rng):
    u, v = rng.normal(size=3), rng.normal(size=3)
    product = sym_product(SymTensor.from_vector(u), SymTensor.from_vector(v))
    expected = 0.5 * (np.outer(u, v) + np.outer(v, u))
    np.testing.assert_allclose(product.expand(), expected, atol=1e-14)


def test_vector_power_pairs_to_polynomial(rng):
    # <f, x^m> evaluates the homogeneous polynomial f(x)
    x = rng.normal(size=3)
    f = random_tensor(rng, 3, 3)
    power = SymTensor(3, 3, vector_power(x, 3))
    assert pair(f, power) == pytest.approx(np.einsum("ijk,i,j,k->", f.expand(), x, x, x), rel=1e-12)


def test_frame_is_orthonormal_and_deterministic(rng):
    for n in (2, 3):
        for _ in range(20):
            omega = rng.normal(size=n)
            omega /= np.linalg.norm(omega)
            basis = frame(omega)
            np.testing.assert_allclose(basis.gram(), np.eye(n), atol=1e-12)
            np.testing.assert_array_equal(frame(omega).matrix(), basis.matrix())
            opposite = frame(-omega)
            for t1, t2 in zip(basis.tangent, opposite.tangent):
                np.testing.assert_allclose(t1, t2, atol=1e-14)


def test_frame_tie_break_and_validation():
    omega = np.array([1.0, 1.0]) / math.sqrt(2.0)
    # |omega_0| = |omega_1|: the first axis is dropped, e_2 is orthonormalized
    np.testing.assert_allclose(frame(omega).tangent[0], np.array([-1.0, 1.0]) / math.sqrt(2.0), atol=1e-14)
    with pytest.raises(ValueError):
        frame([1.0, 1.0])


@pytest.mark.parametrize('n', [2, 3])
@pytest.mark.parametrize('m', [0, 1, 2, 3])
def test_frame_tensors_span_symmetric_space(rng, n, m):
    omega = rng.normal(size=n)
    omega /= np.linalg.norm(omega)
    matrix = frame_basis_matrix(frame(omega), m)
    assert matrix.shape == (sym_dimension(n, m),) * 2
    assert np.linalg.matrix_rank(matrix, tol=1e-8) == sym_dimension(n, m)
    assert np.isfinite(np.linalg.cond(matrix))


def test_frame_tensor_signature_length_checked():
    with pytest.raises(DimensionMismatchError):
        frame_tensor(frame([0.0, 1.0]), (1, 0, 0))


def test_signatures_and_kinds():
    assert degree_signatures(2, 2) == [(0, 2), (1, 1), (2, 0)]
    assert len(degree_signatures(3, 2)) == sym_dimension(3, 2)
    assert signature_kind((2, 0)) == SignatureKind.longitudinal
    assert signature_kind((0, 2)) == SignatureKind.transverse
    assert signature_kind((1, 1)) == SignatureKind.mixed


def test_symtensor_shape_checked():
    with pytest.raises(DimensionMismatchError):
        SymTensor(2, 2, np.zeros(4))
    with pytest.raises(DimensionMismatchError):
        expand(np.zeros(5), 2, 2)
