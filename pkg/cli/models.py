"""
Pydantic models for command configuration and spec-file validation
"""

from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, validator

from calculus.lattice import is_power_of_two

COMMANDS = (
    "validate-algebra",
    "check-filtration",
    "cosymbol",
    "compose",
    "zoom-test",
    "expand",
    "parametrix",
    "demo-heisenberg",
    "demo-log-kernel",
)


def parse_rational(v) -> Fraction:
    """Accept ints, exact decimal strings and "p/q" strings."""
    if isinstance(v, bool):
        raise ValueError("booleans are not rationals")
    if isinstance(v, int):
        return Fraction(v)
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational: {v!r}") from exc
    raise ValueError(f"rationals are given as integers or 'p/q' strings, got {v!r}")


class RunConfig(BaseModel):
    """Resolved configuration of one command run."""
    command: str = Field(..., description="Subcommand name")
    inputs: List[str] = Field(default_factory=list, description="Input spec files")
    grid_x: Optional[int] = Field(None, description="x-samples per axis; defaults per torus dimension")
    grid_eta: Optional[int] = Field(None, description="Lattice points per axis; defaults per torus dimension")
    t_levels: int = Field(12, ge=1, le=30, description="Dyadic t-levels K")
    t_up: int = Field(0, ge=0, le=8, description="Dyadic levels above t = 1")
    tol: float = Field(1e-6, gt=0, description="Check tolerance")
    out: str = Field("artifacts", min_length=1, description="Output directory")
    seed: int = Field(0, ge=0, description="Seed for randomized sweeps")
    k: int = Field(3, ge=0, le=12, description="Neumann iterations")
    terms: int = Field(3, ge=1, le=8, description="Expansion terms")
    verbose: bool = False

    @validator('command')
    def validate_command(cls, v):
        if v not in COMMANDS:
            raise ValueError(f"Command must be one of: {', '.join(COMMANDS)}")
        return v

    @validator('grid_x')
    def validate_grid_x(cls, v):
        if v is not None and v != 1 and not is_power_of_two(v):
            raise ValueError("grid_x must be 1 or a power of two")
        return v

    @validator('grid_eta')
    def validate_grid_eta(cls, v):
        if v is not None and (not is_power_of_two(v) or v < 16):
            raise ValueError("grid_eta must be a power of two >= 16")
        return v


class BracketEntry(BaseModel):
    """[e_i, e_j] = sum_k coefficients[k] e_k."""
    i: int = Field(..., ge=0)
    j: int = Field(..., ge=0)
    coefficients: Dict[int, str]

    @validator('coefficients', pre=True)
    def validate_coefficients(cls, v):
        if not isinstance(v, dict) or not v:
            raise ValueError("coefficients must be a non-empty mapping")
        out = {}
        for key, value in v.items():
            out[int(key)] = str(parse_rational(value))
        return out


class AlgebraSpec(BaseModel):
    """Graded nilpotent Lie algebra spec file."""
    kind: str = Field("algebra")
    name: str = Field(..., min_length=1, max_length=64)
    weights: List[int] = Field(..., min_length=1)
    names: List[str] = Field(default_factory=list)
    brackets: List[BracketEntry] = Field(default_factory=list)

    @validator('weights')
    def validate_weights(cls, v):
        if any(w < 1 for w in v):
            raise ValueError("weights must be positive integers")
        return v

    @validator('names')
    def validate_names(cls, v, values):
        if v and 'weights' in values and len(v) != len(values['weights']):
            raise ValueError("names must match the number of weights")
        return v


class PatchSpec(BaseModel):
    """Filtered patch spec file: either a catalog reference or an explicit frame."""
    kind: str = Field("patch")
    name: str = Field(..., min_length=1, max_length=64)
    catalog: Optional[str] = Field(None, description="Shipped patch name")
    coords: List[str] = Field(default_factory=list)
    frame: List[List[str]] = Field(default_factory=list, description="frame[j][k]: coefficient of d/dx_k in X_j")
    orders: List[int] = Field(default_factory=list)
    depth: Optional[int] = Field(None, ge=1)
    periodic: bool = False
    extent: List[Tuple[float, float]] = Field(default_factory=list)
    injectivity_radius: float = Field(1.0, gt=0)
    frame_names: List[str] = Field(default_factory=list)

    @validator('frame')
    def validate_frame(cls, v, values):
        n = len(values.get('coords') or [])
        if v and (len(v) != n or any(len(row) != n for row in v)):
            raise ValueError(f"frame must be {n} x {n}")
        return v

    @validator('frame_names')
    def validate_frame_names(cls, v, values):
        n = len(values.get('coords') or [])
        if v and len(v) != n:
            raise ValueError("frame_names must match the number of coordinates")
        return v


class OperatorTerm(BaseModel):
    multi_index: List[int]
    coefficient: str = Field(..., min_length=1, max_length=500)

    @validator('multi_index')
    def validate_multi_index(cls, v):
        if any(a < 0 for a in v):
            raise ValueError("multi-index entries must be non-negative")
        return v


class OperatorSpec(BaseModel):
    """Filtered differential operator spec: a patch reference plus PBW terms."""
    kind: str = Field("operator")
    name: str = Field(..., min_length=1, max_length=64)
    patch: str = Field(..., description="Patch catalog name or spec file path")
    sublaplacian: bool = Field(False, description="Use -(sum of squares of degree-1 fields)")
    terms: List[OperatorTerm] = Field(default_factory=list)

    @validator('terms')
    def validate_terms(cls, v, values):
        if not v and not values.get('sublaplacian'):
            raise ValueError("operator needs terms or sublaplacian = true")
        return v


class SymbolSpec(BaseModel):
    """Symbol family spec: expression, shipped profile, or operator symbol."""
    kind: str = Field("symbol")
    name: str = Field(..., min_length=1, max_length=64)
    family: str = Field(..., description="expression | sqrt | log_kernel | operator")
    d: int = Field(1, ge=1, le=3)
    expression: Optional[str] = Field(None, max_length=500)
    operator: Optional[str] = Field(None, description="Operator spec path for family = operator")
    weight: float = 0.0
    weights: List[int] = Field(default_factory=list)
    cutoff_radius: Optional[float] = Field(None, gt=0)
    grid_x: Optional[int] = None
    grid_eta: Optional[int] = None
    homogeneous_weight: Optional[float] = Field(None, description="Weight to test instead of the declared one")

    @validator('family')
    def validate_family(cls, v):
        allowed = {"expression", "sqrt", "log_kernel", "operator"}
        if v not in allowed:
            raise ValueError(f"family must be one of: {sorted(allowed)}")
        return v

    @validator('expression')
    def validate_expression(cls, v, values):
        if values.get('family') == "expression" and not v:
            raise ValueError("expression families need an expression")
        return v

    @validator('weights')
    def validate_weights(cls, v, values):
        if v and len(v) != values.get('d', 1):
            raise ValueError("weights must have one entry per torus dimension")
        if any(w < 1 for w in v):
            raise ValueError("weights must be positive")
        return v


SPEC_MODELS = {
    "algebra": AlgebraSpec,
    "patch": PatchSpec,
    "operator": OperatorSpec,
    "symbol": SymbolSpec,
}
