import logging
from typing import List

from pydantic import BaseModel, Field, field_validator, model_validator

logger = logging.getLogger(__name__)


# A single monomial coefficient * x_1^{a_1} .. x_n^{a_n}
class Monomial(BaseModel):
    powers: List[int]
    coefficient: float = 1.0

    @field_validator('powers')
    def check_powers(cls, v):
        if any(p < 0 for p in v):
            raise ValueError(f"Monomial powers must be non-negative: {v}")
        return v


# Polynomial attached to one stored tensor component (0-based multi-index)
class ComponentPolynomial(BaseModel):
    index: List[int] = Field(default_factory=list)
    monomials: List[Monomial] = Field(default_factory=list)

    @field_validator('index')
    def check_sorted(cls, v):
        if list(v) != sorted(v):
            raise ValueError(f"Component index must be non-decreasing: {v}")
        return v


# One Gaussian envelope exp(-|x - c|^2 / w^2) with polynomial components
class PhantomTerm(BaseModel):
    center: List[float]
    width: float
    components: List[ComponentPolynomial] = Field(default_factory=list)

    @field_validator('width')
    def check_width(cls, v):
        if not v > 0:
            raise ValueError(f"Gaussian width must be positive, got {v}")
        return v


class PhantomSpec(BaseModel):
    n: int
    m: int
    terms: List[PhantomTerm] = Field(default_factory=list)

    @model_validator(mode='after')
    def check_shapes(self):
        for term in self.terms:
            if len(term.center) != self.n:
                raise ValueError(f"Center {term.center} does not have {self.n} coordinates")
            for component in term.components:
                if len(component.index) != self.m or any(i >= self.n for i in component.index):
                    raise ValueError(f"Component index {component.index} is not an order-{self.m} index on R^{self.n}")
                for monomial in component.monomials:
                    if len(monomial.powers) != self.n:
                        raise ValueError(f"Monomial powers {monomial.powers} do not have {self.n} entries")
        return self
