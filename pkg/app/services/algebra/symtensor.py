"""
Symmetric Tensor Algebra Service.

This module provides exact finite-dimensional algebra of symmetric tensors
on R^n: compressed bases indexed by non-decreasing multi-indices,
symmetrization, the symmetric product, the full-contraction pairing and the
deterministic orthonormal frames that every transform is built from.

Coefficient arrays always carry the symmetric coefficient index on the last
axis, so every routine below also works on stacks of tensors (grid nodes,
frequencies, directions) through numpy broadcasting.
"""
import logging
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from itertools import combinations_with_replacement, permutations, product
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.utils.errors import DimensionMismatchError

# Configure logging
logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
DegreeSignature = Tuple[int, ...]

UNIT_TOLERANCE = 1e-10


class SignatureKind(str, Enum):
    longitudinal = "longitudinal"
    transverse = "transverse"
    mixed = "mixed"


def sym_dimension(n: int, m: int) -> int:
    """Number of independent components of a symmetric m-tensor on R^n."""
    return math.comb(m + n - 1, m)


@lru_cache(maxsize=None)
def _basis(n: int, m: int) -> Tuple[MultiIndex, ...]:
    return tuple(combinations_with_replacement(range(n), m))


def sym_basis(n: int, m: int) -> List[MultiIndex]:
    """
    Enumerate the non-decreasing multi-indices of length m over {0..n-1}.

    Args:
        n: Ambient dimension
        m: Tensor order

    Returns:
        Multi-indices in lexicographic order, C(m+n-1, m) of them
    """
    if n < 1 or m < 0:
        raise ValueError(f"sym_basis needs n >= 1 and m >= 0, got n={n}, m={m}")
    return list(_basis(n, m))


@lru_cache(maxsize=None)
def basis_array(n: int, m: int) -> np.ndarray:
    """Basis multi-indices as an integer array of shape (C, m)."""
    basis = _basis(n, m)
    table = np.array(basis, dtype=np.intp).reshape(len(basis), m)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def multiplicities(n: int, m: int) -> np.ndarray:
    """Number of index permutations represented by each stored coefficient."""
    counts = []
    for index in _basis(n, m):
        repeats = Counter(index).values()
        counts.append(math.factorial(m) / math.prod(math.factorial(r) for r in repeats))
    table = np.array(counts, dtype=float)
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def dense_index(n: int, m: int) -> np.ndarray:
    """Array of shape (n,)*m holding the stored position of every dense index."""
    lookup = {index: position for position, index in enumerate(_basis(n, m))}
    table = np.empty((n,) * m, dtype=np.intp)
    for index in product(range(n), repeat=m):
        table[index] = lookup[tuple(sorted(index))]
    table.setflags(write=False)
    return table


def expand(coeffs: np.ndarray, n: int, m: int) -> np.ndarray:
    """Dense expansion of compressed coefficients; trailing m axes of extent n."""
    coeffs = np.asarray(coeffs)
    if coeffs.shape[-1] != sym_dimension(n, m):
        raise DimensionMismatchError(
            f"Expected {sym_dimension(n, m)} coefficients for n={n}, m={m}, got {coeffs.shape[-1]}"
        )
    return coeffs[..., dense_index(n, m)]


def compress(dense: np.ndarray, n: int, m: int) -> np.ndarray:
    """Read the stored coefficients off a dense array that is already symmetric."""
    dense = np.asarray(dense)
    if m == 0:
        return dense[..., np.newaxis]
    if dense.shape[-m:] != (n,) * m:
        raise DimensionMismatchError(f"Dense tensor trailing shape {dense.shape[-m:]} is not {(n,) * m}")
    return dense[(Ellipsis,) + tuple(basis_array(n, m).T)]


def _average_permutations(dense: np.ndarray, m: int) -> np.ndarray:
    if m < 2:
        return dense
    lead = tuple(range(dense.ndim - m))
    total = np.zeros(dense.shape, dtype=np.result_type(dense.dtype, float))
    for perm in permutations(range(m)):
        total += np.transpose(dense, lead + tuple(len(lead) + p for p in perm))
    return total / math.factorial(m)


@dataclass(frozen=True)
class SymTensor:
    """A symmetric m-tensor on R^n stored by non-decreasing multi-index."""
    n: int
    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs)
        if coeffs.shape != (sym_dimension(self.n, self.m),):
            raise DimensionMismatchError(
                f"SymTensor(n={self.n}, m={self.m}) needs {sym_dimension(self.n, self.m)} "
                f"coefficients, got shape {coeffs.shape}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, n: int, m: int) -> "SymTensor":
        return cls(n, m, np.zeros(sym_dimension(n, m)))

    @classmethod
    def scalar(cls, n: int, value: float = 1.0) -> "SymTensor":
        return cls(n, 0, np.array([value]))

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "SymTensor":
        v = np.asarray(v)
        return cls(v.shape[0], 1, v.copy())

    def expand(self) -> np.ndarray:
        return expand(self.coeffs, self.n, self.m)

    def __add__(self, other: "SymTensor") -> "SymTensor":
        _check_same_space(self, other)
        return SymTensor(self.n, self.m, self.coeffs + other.coeffs)

    def __mul__(self, factor: complex) -> "SymTensor":
        return SymTensor(self.n, self.m, self.coeffs * factor)

    __rmul__ = __mul__


def _check_same_space(a: SymTensor, b: SymTensor):
    if a.n != b.n or a.m != b.m:
        raise DimensionMismatchError(f"Tensor spaces differ: (n={a.n}, m={a.m}) vs (n={b.n}, m={b.m})")


def symmetrize(tensor: np.ndarray, n: Optional[int] = None) -> SymTensor:
    """
    Apply the symmetrization operator to a dense tensor.

    Args:
        tensor: Dense real or complex array with m axes of equal extent
        n: Dimension, only needed for order-0 input

    Returns:
        The permutation average, compressed to symmetric storage
    """
    tensor = np.asarray(tensor)
    m = tensor.ndim
    if m == 0:
        if n is None:
            raise DimensionMismatchError("Dimension n must be given for an order-0 tensor")
        return SymTensor(n, 0, tensor.reshape(1))
    extents = set(tensor.shape)
    if len(extents) != 1 or (n is not None and extents != {n}):
        raise DimensionMismatchError(f"Dense tensor shape {tensor.shape} is not (n,)*m")
    dim = tensor.shape[0]
    return SymTensor(dim, m, compress(_average_permutations(tensor, m), dim, m))


@lru_cache(maxsize=None)
def product_table(n: int, ma: int, mb: int) -> np.ndarray:
    """Structure constants of the symmetric product, shape (Ca, Cb, C(ma+mb))."""
    ca, cb = sym_dimension(n, ma), sym_dimension(n, mb)
    left = expand(np.eye(ca), n, ma).reshape((ca, 1) + (n,) * ma + (1,) * mb)
    right = expand(np.eye(cb), n, mb).reshape((1, cb) + (1,) * ma + (n,) * mb)
    table = compress(_average_permutations(left * right, ma + mb), n, ma + mb)
    table.setflags(write=False)
    return table


def sym_product_coeffs(a: np.ndarray, b: np.ndarray, n: int, ma: int, mb: int) -> np.ndarray:
    """Symmetric product of coefficient stacks; leading axes broadcast."""
    return np.einsum("...j,...k,jkc->...c", a, b, product_table(n, ma, mb))


def sym_product(a: SymTensor, b: SymTensor) -> SymTensor:
    """Return sigma(a (x) b), the symmetric product of two tensors."""
    if a.n != b.n:
        raise DimensionMismatchError(f"Cannot multiply tensors on R^{a.n} and R^{b.n}")
    return SymTensor(a.n, a.m + b.m, sym_product_coeffs(a.coeffs, b.coeffs, a.n, a.m, b.m))


def pair_coeffs(f: np.ndarray, g: np.ndarray, n: int, m: int) -> np.ndarray:
    """Full contraction of two coefficient stacks (bilinear, no conjugation)."""
    return np.einsum("...c,...c,c->...", f, g, multiplicities(n, m))


def pair(f: SymTensor, g: SymTensor) -> complex:
    """Full contraction sum over all n^m dense index tuples."""
    _check_same_space(f, g)
    return pair_coeffs(f.coeffs, g.coeffs, f.n, f.m)[()]


def pair_dense(f: SymTensor, tensor: np.ndarray) -> complex:
    """Contract a symmetric tensor against an arbitrary dense tensor."""
    tensor = np.asarray(tensor)
    if tensor.shape != (f.n,) * f.m:
        raise DimensionMismatchError(f"Dense tensor shape {tensor.shape} does not match order {f.m}")
    return np.sum(f.expand() * tensor)


def vector_power(v: np.ndarray, power: int) -> np.ndarray:
    """Coefficients of v^{(.)power} for a stack of vectors v[..., n]."""
    v = np.asarray(v)
    return np.prod(v[..., basis_array(v.shape[-1], power)], axis=-1)


@lru_cache(maxsize=None)
def contraction_table(n: int, k: int) -> np.ndarray:
    """Table T[c, i, d] = 1 when index d of order k-1 with i appended sorts to c."""
    lookup = {index: position for position, index in enumerate(_basis(n, k))}
    table = np.zeros((sym_dimension(n, k), n, sym_dimension(n, k - 1)))
    for d, index in enumerate(_basis(n, k - 1)):
        for i in range(n):
            table[lookup[tuple(sorted(index + (i,)))], i, d] = 1.0
    table.setflags(write=False)
    return table


def contract_vector(u: np.ndarray, xi: np.ndarray, n: int, k: int) -> np.ndarray:
    """Contract the last index of order-k tensors u with vectors xi."""
    if k < 1:
        raise DimensionMismatchError("Cannot contract an order-0 tensor")
    return np.einsum("...c,...i,cid->...d", u, xi, contraction_table(n, k))


def degree_signatures(n: int, m: int) -> List[DegreeSignature]:
    """All (l_1..l_n) with non-negative entries summing to m, lexicographic."""
    return [s for s in product(range(m + 1), repeat=n) if sum(s) == m]


def signature_kind(degrees: Sequence[int]) -> SignatureKind:
    """Longitudinal when l_n = 0, transverse when l_n = m, mixed otherwise."""
    if degrees[-1] == 0:
        return SignatureKind.longitudinal
    if degrees[-1] == sum(degrees):
        return SignatureKind.transverse
    return SignatureKind.mixed


@dataclass(frozen=True)
class Frame:
    """Orthonormal frame {omega_1, .., omega_{n-1}, omega}."""
    omega: np.ndarray
    tangent: Tuple[np.ndarray, ...]

    def matrix(self) -> np.ndarray:
        """Rows omega_1, .., omega_{n-1}, omega."""
        return np.vstack(self.tangent + (self.omega,))

    def gram(self) -> np.ndarray:
        rows = self.matrix()
        return rows @ rows.T


@lru_cache(maxsize=None)
def _kept_axes(n: int) -> np.ndarray:
    return np.array([[j for j in range(n) if j != dropped] for dropped in range(n)], dtype=np.intp)


def tangent_frames(omegas: np.ndarray) -> np.ndarray:
    """
    Deterministic tangent frames for a stack of unit vectors.

    The standard basis vector most aligned with omega (smallest index on
    ties) is dropped; the others are orthonormalized against omega in index
    order. omega and -omega get identical tangents.

    Args:
        omegas: Unit vectors, shape (..., n)

    Returns:
        Tangent vectors, shape (..., n-1, n)
    """
    omegas = np.asarray(omegas, dtype=float)
    n = omegas.shape[-1]
    flat = omegas.reshape(-1, n)
    dropped = np.argmax(np.abs(flat), axis=1)
    candidates = np.eye(n)[_kept_axes(n)[dropped]]
    tangents = []
    for j in range(n - 1):
        vec = candidates[:, j, :]
        vec = vec - np.sum(vec * flat, axis=1, keepdims=True) * flat
        for previous in tangents:
            vec = vec - np.sum(vec * previous, axis=1, keepdims=True) * previous
        tangents.append(vec / np.linalg.norm(vec, axis=1, keepdims=True))
    return np.stack(tangents, axis=1).reshape(omegas.shape[:-1] + (n - 1, n))


def frame(omega: Sequence[float]) -> Frame:
    """
    Build the deterministic orthonormal frame attached to a unit vector.

    Args:
        omega: Unit vector in R^n

    Returns:
        Frame whose tangent vectors complete omega to an orthonormal basis
    """
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > UNIT_TOLERANCE:
        raise ValueError(f"frame() needs a unit vector, |omega| = {np.linalg.norm(omega)!r}")
    tangents = tangent_frames(omega)
    return Frame(omega=omega.copy(), tangent=tuple(tangents[j] for j in range(omega.shape[0] - 1)))


def frame_tensor_coeffs(tangents: np.ndarray, omegas: np.ndarray, degrees: Sequence[int]) -> np.ndarray:
    """
    Coefficients of omega_1^{l_1} (.) .. (.) omega_{n-1}^{l_{n-1}} (.) omega^{l_n}.

    Args:
        tangents: Stack of tangent frames, shape (..., n-1, n)
        omegas: Matching normals, shape (..., n)
        degrees: Signature (l_1, .., l_n); a shorter tuple leaves out the
            trailing vectors

    Returns:
        Coefficient stack of order sum(degrees)
    """
    omegas = np.asarray(omegas, dtype=float)
    n = omegas.shape[-1]
    vectors = [tangents[..., j, :] for j in range(n - 1)] + [omegas]
    result = np.ones(omegas.shape[:-1] + (1,))
    order = 0
    for vec, power in zip(vectors, degrees):
        if power == 0:
            continue
        result = sym_product_coeffs(result, vector_power(vec, power), n, order, power)
        order += power
    return result


def frame_tensor(basis: Frame, degrees: Sequence[int]) -> SymTensor:
    """Frame tensor of a single frame, see frame_tensor_coeffs."""
    if len(degrees) != basis.omega.shape[0]:
        raise DimensionMismatchError(f"Signature {tuple(degrees)} does not have n={basis.omega.shape[0]} entries")
    tangents = np.stack(basis.tangent)
    coeffs = frame_tensor_coeffs(tangents, basis.omega, degrees)
    return SymTensor(basis.omega.shape[0], int(sum(degrees)), coeffs)


def direction_tensor_coeffs(omegas: np.ndarray, us: np.ndarray, l1: int, l2: int) -> np.ndarray:
    """Coefficients of omega^{l1} (.) u^{l2}; omegas (..., n) broadcast against us."""
    n = omegas.shape[-1]
    return sym_product_coeffs(vector_power(omegas, l1), vector_power(us, l2), n, l1, l2)


def frame_basis_matrix(basis: Frame, m: int) -> np.ndarray:
    """Square matrix whose columns are all order-m frame tensors."""
    n = basis.omega.shape[0]
    columns = [frame_tensor(basis, degrees).coeffs for degrees in degree_signatures(n, m)]
    return np.stack(columns, axis=1)
