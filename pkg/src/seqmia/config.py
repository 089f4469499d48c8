"""Configuration models (pydantic) and the enumerations shared across modules."""

from enum import Enum
from pathlib import Path
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ConfigConflictError, ReductionError


class DType(str, Enum):
    FLOAT32 = "float32"
    FLOAT64 = "float64"


class ScoreKind(str, Enum):
    NEG_LOG_LIKELIHOOD = "neg_log_likelihood"
    LOGIT = "logit"
    RAW = "raw"


class CanaryKind(str, Enum):
    AVERAGE_CASE = "average_case"
    WORST_CASE = "worst_case"
    SYNTHETIC = "synthetic"


class TransformKind(str, Enum):
    IDENTITY = "identity"
    NEGATE = "negate"
    LOGIT_FROM_NLL = "logit"


class ReductionKind(str, Enum):
    NONE = "none"
    GROUP = "group"
    MIN_K = "min"
    MAX_K = "max"


class Estimator(str, Enum):
    """Covariance model of the attack: sigma^2 on the mean, diagonal, OAS or full MLE."""

    UNIVARIATE = "univariate"
    INDEPENDENT = "independent"
    OAS = "oas"
    FULL = "full"


class Pooling(str, Enum):
    CLASS_WISE = "classwise"
    SHARED = "shared"


class CovModel(str, Enum):
    ISOTROPIC = "isotropic"
    DIAGONAL = "diagonal"
    DENSE = "dense"
    AR1 = "ar1"


class ShiftPattern(str, Enum):
    CONSTANT = "constant"
    ALTERNATING = "alternating"
    RANDOM = "random"


class RelativeMode(str, Enum):
    PER_CANARY = "per_canary"
    RATIO_OF_MEANS = "ratio_of_means"


# binary container codes
DTYPE_CODES = {DType.FLOAT32: 0, DType.FLOAT64: 1}
SCORE_KIND_CODES = {ScoreKind.NEG_LOG_LIKELIHOOD: 0, ScoreKind.LOGIT: 1, ScoreKind.RAW: 2}


class DatasetManifest(BaseModel):
    """Metadata stored next to the score payload."""

    model_config = ConfigDict(frozen=True)

    version: int = 1
    dims: Tuple[int, int, int]
    dtype: DType = DType.FLOAT64
    score_kind: ScoreKind = ScoreKind.RAW
    canary_kind: CanaryKind = CanaryKind.AVERAGE_CASE
    seed: Optional[int] = None
    notes: str = ""

    @field_validator("dims")
    @classmethod
    def _check_dims(cls, dims: Tuple[int, int, int]) -> Tuple[int, int, int]:
        m, n, t = dims
        if m < 2 or n < 1 or t < 1:
            raise ValueError(f"dims must satisfy M >= 2, N >= 1, T >= 1, got {dims}")
        return dims


class TransformSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: TransformKind = TransformKind.IDENTITY


class ReductionSpec(BaseModel):
    """Length reduction applied before fitting; param is the chunk size or k."""

    model_config = ConfigDict(frozen=True)

    kind: ReductionKind = ReductionKind.NONE
    param: int = Field(1, ge=1)

    def check_length(self, t: int) -> None:
        """Raise ReductionError if the reduction cannot be applied to length t."""
        if self.kind in (ReductionKind.MIN_K, ReductionKind.MAX_K, ReductionKind.GROUP) and self.param > t:
            raise ReductionError(f"{self.kind.value} parameter {self.param} exceeds sequence length {t}")

    def output_length(self, t: int) -> int:
        if self.kind == ReductionKind.GROUP:
            return -(-t // self.param)
        if self.kind in (ReductionKind.MIN_K, ReductionKind.MAX_K):
            return self.param
        return t

    @property
    def label(self) -> str:
        if self.kind == ReductionKind.NONE:
            return ""
        return f"{self.kind.value}{self.param}"


class AttackConfig(BaseModel):
    """One attack variant."""

    model_config = ConfigDict(frozen=True)

    estimator: Estimator = Estimator.OAS
    pooling: Pooling = Pooling.SHARED
    reduction: ReductionSpec = ReductionSpec()
    transform: TransformSpec = TransformSpec()
    max_shadow_models: Optional[int] = Field(None, ge=2)
    seed: int = 0

    @model_validator(mode="after")
    def _univariate_needs_scalar_input(self) -> "AttackConfig":
        if self.estimator == Estimator.UNIVARIATE and self.reduction.kind != ReductionKind.NONE:
            raise ConfigConflictError(
                f"univariate estimator needs scalar input; it cannot be combined with --reduce {self.reduction.kind.value}"
            )
        return self

    def check_dims(self, m: int, t: int) -> None:
        """Validate the dimension-dependent constraints against a loaded dataset."""
        self.reduction.check_length(t)
        if self.max_shadow_models is not None and self.max_shadow_models > m - 1:
            raise ConfigConflictError(
                f"max_shadow_models={self.max_shadow_models} exceeds the {m - 1} available shadow models"
            )


class SyntheticSpec(BaseModel):
    """Ground-truth generator settings."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(64, ge=2)
    n: int = Field(1000, ge=1)
    t: int = Field(32, ge=1)
    cov: CovModel = CovModel.AR1
    sigma: float = Field(1.0, gt=0)
    rho: float = Field(0.9, gt=-1, lt=1)
    condition_number: float = Field(10.0, ge=1)
    shift: float = 0.3
    pattern: ShiftPattern = ShiftPattern.ALTERNATING
    base_spread: float = Field(0.0, ge=0)
    heteroscedastic: bool = False
    in_scale: float = Field(0.5, gt=0)
    dtype: DType = DType.FLOAT64
    seed: int = 0


class RunConfig(BaseModel):
    """Global CLI options."""

    threads: int = Field(1, ge=1)
    verbose: bool = False
    out_dir: Optional[Path] = None

    def resolve(self, path: Path) -> Path:
        """Place relative output paths under out_dir."""
        if self.out_dir is None or path.is_absolute():
            return path
        return self.out_dir / path
