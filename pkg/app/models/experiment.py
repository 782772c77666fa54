import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config.settings import (
    DEFAULT_SEED,
    GRID_DIMENSION,
    GRID_HALF_WIDTH,
    GRID_SIZE,
    IDENTITY_THRESHOLD,
    INVERSION_RANGE_TOLERANCE,
    INVERSION_THRESHOLD,
    KERNEL_THRESHOLD,
    OUTPUT_DIR,
    RADON_IMAG_TOLERANCE,
    RANGE_K_MAX,
    RANGE_THRESHOLD,
    RESHETNYAK_THRESHOLD,
    SLICE_THRESHOLD,
    TANGENTS_3D,
    UCP_EXTERIOR_FLOOR,
    UCP_MARGIN_THRESHOLD,
    UCP_RATIO_THRESHOLD,
)

logger = logging.getLogger(__name__)

COMMANDS = (
    "phantom", "forward", "invert", "decompose", "slice-check", "reshetnyak",
    "range-check", "ucp-odd", "ucp-even", "selftest",
)
SECTIONS = ("grid", "transform", "directions", "tolerances")

CommandName = Literal[
    "phantom", "forward", "invert", "decompose", "slice-check", "reshetnyak",
    "range-check", "ucp-odd", "ucp-even", "selftest",
]


class GridConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    n: int = GRID_DIMENSION
    N: int = GRID_SIZE
    L: float = GRID_HALF_WIDTH

    @field_validator('n')
    def check_dimension(cls, v):
        if v < 2:
            raise ValueError(f"Dimension must be at least 2, got {v}")
        return v

    @field_validator('N')
    def check_size(cls, v):
        if v < 8 or v % 2:
            raise ValueError(f"Grid size must be even and at least 8, got {v}")
        return v

    @field_validator('L')
    def check_half_width(cls, v):
        if not v > 0:
            raise ValueError(f"Half width must be positive, got {v}")
        return v


# Signatures are "all" or a list like [[1, 0], [0, 1]]; the text form is "1,0;0,1"
class TransformConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    m: int = 1
    signatures: Union[Literal["all"], List[List[int]]] = "all"
    parametrization: Literal["frame", "tangent"] = "frame"
    method: Literal["quadrature", "fourier"] = "quadrature"

    @field_validator('m')
    def check_order(cls, v):
        if v < 0:
            raise ValueError(f"Tensor order must be non-negative, got {v}")
        return v

    @field_validator('signatures', mode='before')
    def parse_signatures(cls, v):
        if isinstance(v, str) and v.strip() != "all":
            try:
                return [[int(l) for l in part.split(",")] for part in v.split(";") if part.strip()]
            except ValueError as e:
                raise ValueError(f"Cannot read signatures {v!r}; expected 'all' or '1,0;0,1'") from e
        return v


class DirectionConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    count: Optional[int] = None
    tangents: bool = True
    tangent_count: int = TANGENTS_3D
    p_count: Optional[int] = None
    p_spacing: Optional[float] = None

    @field_validator('count', 'tangent_count')
    def check_even(cls, v):
        if v is not None and (v < 2 or v % 2):
            raise ValueError(f"Direction and tangent counts must be even, got {v}")
        return v


class ToleranceConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    imag: float = RADON_IMAG_TOLERANCE
    inversion_range: float = INVERSION_RANGE_TOLERANCE
    range: float = RANGE_THRESHOLD
    range_k_max: int = RANGE_K_MAX
    ucp_ratio: float = UCP_RATIO_THRESHOLD
    ucp_floor: float = UCP_EXTERIOR_FLOOR
    ucp_margin: float = UCP_MARGIN_THRESHOLD
    kernel: float = KERNEL_THRESHOLD
    slice: float = SLICE_THRESHOLD
    identity: float = IDENTITY_THRESHOLD
    reshetnyak: float = RESHETNYAK_THRESHOLD
    inversion: float = INVERSION_THRESHOLD


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    command: CommandName
    grid: GridConfig = Field(default_factory=GridConfig)
    transform: TransformConfig = Field(default_factory=TransformConfig)
    directions: DirectionConfig = Field(default_factory=DirectionConfig)
    tolerances: ToleranceConfig = Field(default_factory=ToleranceConfig)
    phantom: Literal["random", "gaussian", "zero"] = "random"
    input: Optional[str] = None
    reference: Optional[str] = None
    output: str = OUTPUT_DIR
    seed: int = DEFAULT_SEED
    s: float = 0.0
    t: float = 0.0
    component: int = 0
    a: float = 2.0
    family: Literal["single", "all"] = "single"
    corpus: int = 10
    quick: bool = False

    @model_validator(mode='after')
    def check_references(self):
        for name in ("input", "reference"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ValueError(f"{name.capitalize()} path {path} does not exist")
        if not 0 <= self.component <= self.transform.m and self.command in ("ucp-odd", "ucp-even"):
            raise ValueError(f"Component {self.component} is not in 0..{self.transform.m}")
        return self

    def signature_list(self) -> Optional[List[tuple]]:
        """Requested signatures as tuples; None means every signature."""
        if self.transform.signatures == "all":
            return None
        return [tuple(s) for s in self.transform.signatures]


def nest_flat_config(flat: Dict[str, Optional[str]], command: str) -> Dict:
    """
    Turn dotted keys into the nested ExperimentConfig mapping.

    Keys prefixed by a subcommand name apply only to that subcommand;
    "grid.N" goes to the grid section, bare keys to the top level.
    """
    nested: Dict = {}
    # subcommand-prefixed keys override bare ones
    for key, value in sorted(flat.items(), key=lambda item: item[0].strip().split(".")[0] in COMMANDS):
        if value is None:
            continue
        parts = key.strip().split(".")
        if parts[0] in COMMANDS:
            if parts[0] != command:
                continue
            parts = parts[1:]
        if not parts:
            continue
        if len(parts) == 2 and parts[0] in SECTIONS:
            nested.setdefault(parts[0], {})[parts[1]] = value
        elif len(parts) == 1:
            nested[parts[0]] = value
        else:
            raise ValueError(f"Unknown configuration key {key!r}")
    return nested
