"""
Phantom Service.

This module provides functionality to build smooth, rapidly decaying tensor
phantoms (polynomial times Gaussian components) on a grid, together with
their Fourier transforms in closed form for use as test oracles.
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np
from scipy.special import comb, erf, eval_hermite

from app.config.settings import PHANTOM_MASS_TOLERANCE
from app.models.phantom import ComponentPolynomial, Monomial, PhantomSpec, PhantomTerm
from app.services.algebra.symtensor import sym_basis, sym_dimension
from app.services.fields.field import Grid, TensorField
from app.utils.errors import DimensionMismatchError, PhantomSupportError

# Configure logging
logger = logging.getLogger(__name__)


def _component_position(n: int, index) -> int:
    return sym_basis(n, len(index)).index(tuple(index))


def _hermite_factor(powers: int, center: float, width: float, xi: np.ndarray) -> np.ndarray:
    """1-D transform of x^a exp(-(x-c)^2/w^2) under the (2 pi)^{-1/2} convention."""
    envelope = math.sqrt(math.pi) * width * np.exp(-(width * xi) ** 2 / 4.0)
    total = np.zeros_like(xi, dtype=complex)
    for b in range(powers + 1):
        total += (
            comb(powers, b, exact=True)
            * center ** (powers - b)
            * (-0.5j * width) ** b
            * eval_hermite(b, width * xi / 2.0)
        )
    return np.exp(-1j * center * xi) * envelope * total / math.sqrt(2.0 * math.pi)


class PhantomService:
    """Service for building phantoms and their analytic spectra"""

    def __init__(self, mass_tolerance: float = PHANTOM_MASS_TOLERANCE):
        self.mass_tolerance = mass_tolerance

    def gaussian_mass(self, grid: Grid, term: PhantomTerm) -> float:
        """Fraction of the term's Gaussian mass that lies inside the grid cube."""
        L = grid.half_width
        mass = 1.0
        for c in term.center:
            mass *= 0.5 * (erf((L - c) / term.width) - erf((-L - c) / term.width))
        return mass

    def check_support(self, grid: Grid, spec: PhantomSpec):
        for number, term in enumerate(spec.terms):
            mass = self.gaussian_mass(grid, term)
            if mass < 1.0 - self.mass_tolerance:
                logger.error(f"Phantom term {number} keeps only {mass:.12f} of its mass inside [-L, L]^n")
                raise PhantomSupportError(
                    f"Phantom term {number} (center {term.center}, width {term.width}) is not supported "
                    f"in the cube of half width {grid.half_width}: mass {mass:.12f}"
                )

    def make_phantom(self, grid: Grid, spec: PhantomSpec) -> TensorField:
        """
        Sample a phantom on a grid.

        Args:
            grid: Target grid
            spec: Terms of polynomial components times Gaussian envelopes

        Returns:
            TensorField of order spec.m
        """
        if spec.n != grid.n:
            raise DimensionMismatchError(f"Phantom is defined on R^{spec.n}, grid is on R^{grid.n}")
        self.check_support(grid, spec)

        x = grid.coordinates()
        data = np.zeros(grid.shape + (sym_dimension(grid.n, spec.m),))
        for term in spec.terms:
            shift = x - np.asarray(term.center)
            envelope = np.exp(-np.sum(shift ** 2, axis=-1) / term.width ** 2)
            for component in term.components:
                poly = np.zeros(grid.shape)
                for monomial in component.monomials:
                    poly += monomial.coefficient * np.prod(x ** np.asarray(monomial.powers), axis=-1)
                data[..., _component_position(grid.n, component.index)] += poly * envelope
        return TensorField(grid, spec.m, data)

    def fourier_transform(self, spec: PhantomSpec, xi: np.ndarray) -> np.ndarray:
        """
        Closed-form spectrum of a phantom.

        Args:
            spec: Phantom description
            xi: Frequencies, shape (..., n)

        Returns:
            Complex coefficients, shape (..., C)
        """
        xi = np.asarray(xi, dtype=float)
        result = np.zeros(xi.shape[:-1] + (sym_dimension(spec.n, spec.m),), dtype=complex)
        for term in spec.terms:
            for component in term.components:
                position = _component_position(spec.n, component.index)
                for monomial in component.monomials:
                    value = monomial.coefficient * np.ones(xi.shape[:-1], dtype=complex)
                    for axis in range(spec.n):
                        value = value * _hermite_factor(
                            monomial.powers[axis], term.center[axis], term.width, xi[..., axis]
                        )
                    result[..., position] += value
        return result

    def random_spec(
        self,
        n: int,
        m: int,
        rng: np.random.Generator,
        terms: int = 2,
        spread: float = 1.0,
        width_range: Tuple[float, float] = (0.6, 1.0),
        linear_scale: float = 0.5,
    ) -> PhantomSpec:
        """Random phantom: Gaussians with affine polynomial components."""
        phantom_terms = []
        for _ in range(terms):
            direction = rng.normal(size=n)
            direction /= np.linalg.norm(direction)
            center = direction * spread * rng.uniform() ** (1.0 / n)
            components = []
            for index in sym_basis(n, m):
                monomials = [Monomial(powers=[0] * n, coefficient=float(rng.normal()))]
                for axis in range(n):
                    powers = [0] * n
                    powers[axis] = 1
                    monomials.append(Monomial(powers=powers, coefficient=float(linear_scale * rng.normal())))
                components.append(ComponentPolynomial(index=list(index), monomials=monomials))
            phantom_terms.append(
                PhantomTerm(
                    center=[float(c) for c in center],
                    width=float(rng.uniform(*width_range)),
                    components=components,
                )
            )
        return PhantomSpec(n=n, m=m, terms=phantom_terms)


def gaussian_spec(n: int, m: int = 0, index: Optional[Tuple[int, ...]] = None,
                  center: Optional[Tuple[float, ...]] = None, width: float = 1.0) -> PhantomSpec:
    """Single Gaussian exp(-|x - c|^2 / w^2) placed in one tensor component."""
    index = tuple(index) if index is not None else (0,) * m
    center = list(center) if center is not None else [0.0] * n
    component = ComponentPolynomial(index=list(index), monomials=[Monomial(powers=[0] * n, coefficient=1.0)])
    return PhantomSpec(n=n, m=m, terms=[PhantomTerm(center=center, width=width, components=[component])])


# Create a default instance of the service
phantom_service = PhantomService()


# Functions for backward compatibility
def make_phantom(grid: Grid, m: int, spec: PhantomSpec) -> TensorField:
    if spec.m != m:
        raise DimensionMismatchError(f"Phantom spec has order {spec.m}, requested order {m}")
    return phantom_service.make_phantom(grid, spec)


def phantom_spectrum(spec: PhantomSpec, xi: np.ndarray) -> np.ndarray:
    return phantom_service.fourier_transform(spec, xi)


def random_phantom_spec(n: int, m: int, rng: np.random.Generator, **kwargs) -> PhantomSpec:
    return phantom_service.random_spec(n, m, rng, **kwargs)
