import logging
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, field_validator

logger = logging.getLogger(__name__)


# Define the verdict Enum
class Verdict(str, Enum):
    passed = "pass"
    failed = "fail"


def verdict_of(ok: bool) -> Verdict:
    return Verdict.passed if ok else Verdict.failed


# Smoothness order s and weight order t of H^s_t; t > -n/2 is checked where n is known
class SobolevIndex(BaseModel):
    s: float = 0.0
    t: float = 0.0

    def check_dimension(self, n: int):
        if not self.t > -n / 2.0:
            raise ValueError(f"Weight order t={self.t} must exceed -n/2 = {-n / 2.0}")

    def shifted(self, amount: float) -> "SobolevIndex":
        return SobolevIndex(s=self.s + amount, t=self.t + amount)


class MomentFit(BaseModel):
    k: int
    coefficients: List[float] = Field(default_factory=list)
    residual: float


class RangeReport(BaseModel):
    degree: List[int] = Field(default_factory=list)
    parity_defect: float
    moment_fits: List[MomentFit] = Field(default_factory=list)
    threshold: float
    verdict: Verdict

    @field_validator('parity_defect', 'threshold')
    def check_non_negative(cls, v):
        if v < 0:
            raise ValueError(f"Defects and thresholds are non-negative, got {v}")
        return v


class UcpRegion(BaseModel):
    center: List[float]
    radius: float = 1.0


class UcpReport(BaseModel):
    experiment: str
    n: int
    m: int
    component: int
    region: UcpRegion
    interior_norm: float
    exterior_norm: float
    data_norm_on_U_planes: float
    verdict: Verdict
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator('interior_norm', 'exterior_norm', 'data_norm_on_U_planes')
    def check_norms(cls, v):
        if v < 0:
            raise ValueError(f"Norms are non-negative, got {v}")
        return v


class ReshetnyakReport(BaseModel):
    degree: List[int]
    index: SobolevIndex
    lhs: float
    rhs: float
    rel_gap: float


class KernelReport(BaseModel):
    degree: List[int]
    removed_component: int
    defect: float
    scale: float
    verdict: Verdict


class SuiteResult(BaseModel):
    suite: str
    metric: str
    value: float
    threshold: float
    verdict: Verdict
    seconds: float = 0.0
    note: Optional[str] = None


# One measured discrepancy per signature
class SignatureCheck(BaseModel):
    degree: List[int]
    parametrization: str
    value: float


class SliceReport(BaseModel):
    checks: List[SignatureCheck] = Field(default_factory=list)
    threshold: float
    verdict: Verdict


class DecompositionReport(BaseModel):
    m: int
    residual: float
    solenoidality: List[float] = Field(default_factory=list)
    norm_ratios: List[float] = Field(default_factory=list)


class InversionReport(BaseModel):
    m: int
    stages: List[Dict[str, Any]] = Field(default_factory=list)
    relative_error: Optional[float] = None
    threshold: float
    verdict: Verdict
