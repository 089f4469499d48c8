"""Per-token score transforms and length reductions.

All functions act on the last axis, so they accept a single [T] sequence as
well as a whole [M, N, T] tensor.
"""

from typing import Union

import numpy as np

from .config import ReductionKind, ReductionSpec, TransformKind, TransformSpec
from .errors import ReductionError, TransformDomainError

P_CLAMP = 1e-12


def apply_transform(scores: np.ndarray, spec: Union[TransformSpec, TransformKind]) -> np.ndarray:
    """Element-wise score map: identity, negation, or logit of p = exp(-nll)."""
    kind = spec.kind if isinstance(spec, TransformSpec) else TransformKind(spec)
    scores = np.asarray(scores, dtype=np.float64)
    if kind == TransformKind.IDENTITY:
        return scores
    if kind == TransformKind.NEGATE:
        return -scores
    bad = scores <= 0
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise TransformDomainError(
            f"logit transform needs positive negative-log-likelihoods, got {scores[index]} at {index}"
        )
    p = np.clip(np.exp(-scores), P_CLAMP, 1.0 - P_CLAMP)
    return np.log(p) - np.log1p(-p)


def reduce_group(scores: np.ndarray, chunk: int) -> np.ndarray:
    """Average consecutive chunks of tokens; the last chunk may be short."""
    scores = np.asarray(scores, dtype=np.float64)
    t = scores.shape[-1]
    if chunk < 1 or chunk > t:
        raise ReductionError(f"group chunk must lie in [1, {t}], got {chunk}")
    if chunk == 1:
        return scores
    starts = np.arange(0, t, chunk)
    lengths = np.minimum(starts + chunk, t) - starts
    return np.add.reduceat(scores, starts, axis=-1) / lengths


def reduce_order_stats(scores: np.ndarray, k: int, kind: Union[ReductionKind, str]) -> np.ndarray:
    """The k smallest scores ascending (min) or the k largest descending (max)."""
    kind = ReductionKind(kind)
    scores = np.asarray(scores, dtype=np.float64)
    t = scores.shape[-1]
    if k < 1 or k > t:
        raise ReductionError(f"k must lie in [1, {t}], got {k}")
    ordered = np.sort(scores, axis=-1)
    if kind == ReductionKind.MIN_K:
        return ordered[..., :k]
    if kind == ReductionKind.MAX_K:
        return ordered[..., ::-1][..., :k]
    raise ReductionError(f"order statistics need min or max, got {kind.value}")


def apply_reduction(scores: np.ndarray, spec: ReductionSpec) -> np.ndarray:
    if spec.kind == ReductionKind.NONE:
        return np.asarray(scores, dtype=np.float64)
    if spec.kind == ReductionKind.GROUP:
        return reduce_group(scores, spec.param)
    return reduce_order_stats(scores, spec.param, spec.kind)


def featurize(scores: np.ndarray, transform: TransformSpec, reduction: ReductionSpec) -> np.ndarray:
    """Transform then reduce; this is the feature vector the Gaussians are fitted on."""
    return apply_reduction(apply_transform(scores, transform), reduction)
