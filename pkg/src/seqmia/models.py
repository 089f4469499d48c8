"""Data models for seqmia: score tensors, membership masks, Gaussian fits and results."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np

from .config import AttackConfig, DType, RelativeMode
from .errors import DataError, DatasetValidationError


def _readonly(array: np.ndarray) -> np.ndarray:
    """Read-only array that callers holding the input cannot mutate."""
    view = array.copy() if array.flags.writeable else array.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class ScoreTensor:
    """Per-token scores with dims [models M, canaries N, tokens T]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype not in (np.float32, np.float64):
            data = data.astype(np.float64)
        if data.ndim != 3:
            raise DatasetValidationError(f"score tensor must be 3-D [M, N, T], got shape {data.shape}")
        m, n, t = data.shape
        if m < 2 or n < 1 or t < 1:
            raise DatasetValidationError(f"score tensor needs M >= 2, N >= 1, T >= 1, got {data.shape}")
        finite = np.isfinite(data)
        if not finite.all():
            index = tuple(int(i) for i in np.argwhere(~finite)[0])
            raise DataError(f"non-finite score at index {index}", index=index)
        object.__setattr__(self, "data", _readonly(data))

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def M(self) -> int:
        return self.data.shape[0]

    @property
    def N(self) -> int:
        return self.data.shape[1]

    @property
    def T(self) -> int:
        return self.data.shape[2]

    @property
    def dtype(self) -> DType:
        return DType.FLOAT32 if self.data.dtype == np.float32 else DType.FLOAT64


@dataclass(frozen=True)
class MembershipMask:
    """mask[m, n] is True when canary n was in model m's training set."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.asarray(self.mask)
        if mask.ndim != 2:
            raise DatasetValidationError(f"membership mask must be 2-D [M, N], got shape {mask.shape}")
        if mask.dtype != np.bool_:
            if not np.isin(mask, (0, 1)).all():
                raise DatasetValidationError("membership mask entries must be 0 or 1")
            mask = mask.astype(np.bool_)
        object.__setattr__(self, "mask", _readonly(mask))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape  # type: ignore[return-value]

    @property
    def in_counts(self) -> np.ndarray:
        """Number of IN models per canary."""
        return self.mask.sum(axis=0)

    def check_against(self, tensor: ScoreTensor) -> None:
        if self.shape != tensor.shape[:2]:
            raise DatasetValidationError(
                f"mask shape {self.shape} does not match score tensor [M, N] = {tensor.shape[:2]}"
            )


@dataclass(frozen=True)
class LooSplit:
    """One model held out as attack target, the rest acting as shadow models."""

    target_index: int
    target_scores: np.ndarray  # [N, T]
    shadow_scores: np.ndarray  # [M-1, N, T]
    shadow_mask: np.ndarray  # [M-1, N]
    target_labels: np.ndarray  # [N]
    shadow_indices: np.ndarray  # [M-1]
    in_counts: np.ndarray  # [N]
    out_counts: np.ndarray  # [N]
    degenerate: np.ndarray  # [N], fewer than 2 IN or 2 OUT shadow rows


class CovKind(str, Enum):
    SCALAR = "scalar"
    DIAGONAL = "diagonal"
    FULL = "full"


@dataclass(frozen=True)
class CovRepr:
    """Covariance as sigma^2 * I, diag(sigma_i^2) or a dense symmetric matrix."""

    kind: CovKind
    values: np.ndarray
    dim: int

    def to_dense(self) -> np.ndarray:
        if self.kind == CovKind.SCALAR:
            return float(self.values) * np.eye(self.dim)
        if self.kind == CovKind.DIAGONAL:
            return np.diag(self.values)
        return np.array(self.values, dtype=np.float64)


@dataclass(frozen=True)
class GaussianSpec:
    """Mean vector plus covariance with its cached factorization."""

    mean: np.ndarray
    cov: CovRepr
    log_det: float
    chol: Optional[np.ndarray] = None  # lower Cholesky factor, full kind only

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class ShrinkageResult:
    cov: CovRepr
    alpha: float


@dataclass
class AttackResult:
    """Leave-one-out log-likelihood-ratio scores for every (target model, canary)."""

    scores: np.ndarray  # [M, N]
    labels: np.ndarray  # [M, N]
    fallback: np.ndarray  # [M, N]
    per_canary_fallbacks: List[Tuple[int, int, str]]
    config: AttackConfig

    def rows(self) -> Iterator[Dict[str, Any]]:
        """Long-format rows ordered by target then canary."""
        m, n = self.scores.shape
        for i in range(m):
            for j in range(n):
                yield {
                    "target_index": i,
                    "canary_index": j,
                    "score": float(self.scores[i, j]),
                    "label": int(self.labels[i, j]),
                    "fallback_flag": int(self.fallback[i, j]),
                }


@dataclass(frozen=True)
class RocCurve:
    """Empirical step ROC; point k predicts positive iff score > thresholds[k]."""

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int


# (estimator, pooling, class, shadow_count)
ErrorKey = Tuple[str, str, str, int]
# (estimator, class, shadow_count)
RelativeKey = Tuple[str, str, int]


@dataclass
class CovStudyReport:
    """Mean Frobenius error to the gold-standard covariance per estimator and shadow count."""

    grid: List[int]
    gold_count: int
    errors: Dict[ErrorKey, float] = field(default_factory=dict)
    n_canaries: Dict[ErrorKey, int] = field(default_factory=dict)
    relative_error: Dict[RelativeKey, float] = field(default_factory=dict)
    relative_mode: RelativeMode = RelativeMode.PER_CANARY

    def rows(self) -> List[Dict[str, Any]]:
        """Rows sorted by key; unavailable cells carry NaN."""
        out = []
        for key in sorted(self.errors):
            estimator, pooling, cls, count = key
            out.append(
                {
                    "estimator": estimator,
                    "pooling": pooling,
                    "class": cls,
                    "shadow_count": count,
                    "mean_error": self.errors[key],
                    "relative_error": (
                        self.relative_error.get((estimator, cls, count), float("nan"))
                        if pooling == "classwise"
                        else float("nan")
                    ),
                    "n_canaries": self.n_canaries.get(key, 0),
                }
            )
        return out
