"""Likelihood-ratio membership attack over leave-one-out shadow models."""

from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import AttackConfig, Estimator, Pooling, ReductionKind, ReductionSpec, TransformSpec
from .dataset import loo_indices
from .errors import DatasetValidationError, DegenerateFitError, DimensionError
from .estimators import fit_class_models, log_density
from .log import get_logger
from .models import AttackResult, GaussianSpec, MembershipMask, ScoreTensor
from .parallel import map_ordered
from .transform import featurize

log = get_logger(__name__)

FALLBACK_DEGENERATE_SPLIT = "degenerate_split"
FALLBACK_POOLED_SHARED = "pooled_shared"
FALLBACK_UNINFORMATIVE = "uninformative"


def lira_score(
    target_vec: np.ndarray, spec_in: GaussianSpec, spec_out: GaussianSpec
) -> Union[float, np.ndarray]:
    """log N(x | in) - log N(x | out); higher means more likely a member."""
    if spec_in.dim != spec_out.dim:
        raise DimensionError(f"IN and OUT Gaussians differ in dimension: {spec_in.dim} vs {spec_out.dim}")
    return log_density(target_vec, spec_in) - log_density(target_vec, spec_out)


def variant_label(config: AttackConfig) -> str:
    """Stable name such as 'oas-shared' or 'independent-classwise+min2'."""
    label = f"{config.estimator.value}-{config.pooling.value}"
    if config.reduction.label:
        label += f"+{config.reduction.label}"
    return label


def all_variants(
    reduction: Optional[ReductionSpec] = None,
    transform: Optional[TransformSpec] = None,
    max_shadow_models: Optional[int] = None,
    seed: int = 0,
) -> List[AttackConfig]:
    """Every estimator x pooling combination; univariate is skipped when a reduction is set."""
    reduction = reduction or ReductionSpec()
    transform = transform or TransformSpec()
    configs = []
    for estimator in Estimator:
        if estimator == Estimator.UNIVARIATE and reduction.kind != ReductionKind.NONE:
            continue
        for pooling in (Pooling.CLASS_WISE, Pooling.SHARED):
            configs.append(
                AttackConfig(
                    estimator=estimator,
                    pooling=pooling,
                    reduction=reduction,
                    transform=transform,
                    max_shadow_models=max_shadow_models,
                    seed=seed,
                )
            )
    return configs


def shadow_subset(m: int, target_index: int, count: Optional[int], seed: int) -> np.ndarray:
    """Shadow rows for one target: all others, or the first count of a per-(seed, M) permutation.

    The selection is returned in ascending model order, so count = M - 1 gives
    exactly the unrestricted leave-one-out rows.
    """
    if count is None:
        return loo_indices(m, target_index)
    perm = np.random.default_rng(seed).permutation(m)
    chosen = perm[perm != target_index][:count]
    return np.sort(chosen)


def _attack_features(tensor: ScoreTensor, config: AttackConfig) -> np.ndarray:
    reduction = config.reduction
    if config.estimator == Estimator.UNIVARIATE:
        reduction = ReductionSpec(kind=ReductionKind.GROUP, param=tensor.T)
    return featurize(tensor.data, config.transform, reduction)


def _score_one(
    x: np.ndarray, x_in: np.ndarray, x_out: np.ndarray, config: AttackConfig
) -> Tuple[float, Optional[str]]:
    """Score one target vector; returns (score, fallback reason or None)."""
    degenerate = len(x_in) < 2 or len(x_out) < 2
    if not degenerate:
        try:
            spec_in, spec_out = fit_class_models(x_in, x_out, config.estimator, config.pooling)
            return float(lira_score(x, spec_in, spec_out)), None
        except DegenerateFitError:
            if config.pooling == Pooling.SHARED:
                return 0.0, FALLBACK_UNINFORMATIVE
    try:
        spec_in, spec_out = fit_class_models(x_in, x_out, config.estimator, Pooling.SHARED)
    except DegenerateFitError:
        return 0.0, FALLBACK_UNINFORMATIVE
    return float(lira_score(x, spec_in, spec_out)), (
        FALLBACK_DEGENERATE_SPLIT if degenerate else FALLBACK_POOLED_SHARED
    )


def run_attack(
    tensor: ScoreTensor,
    mask: MembershipMask,
    config: AttackConfig,
    threads: Optional[int] = 1,
) -> AttackResult:
    """Score every (target model, canary) pair, each model in turn acting as the target."""
    m, n = tensor.M, tensor.N
    if m < 3:
        raise DatasetValidationError(f"leave-one-out attack needs at least 3 models, got {m}")
    mask.check_against(tensor)
    config.check_dims(m, tensor.T)

    features = _attack_features(tensor, config)
    membership = np.asarray(mask.mask)
    shadows = [shadow_subset(m, target, config.max_shadow_models, config.seed) for target in range(m)]

    def attack_canary(canary: int) -> Tuple[np.ndarray, List[Tuple[int, int, str]]]:
        feats = features[:, canary, :]
        member = membership[:, canary]
        scores = np.zeros(m)
        flagged = []
        for target in range(m):
            idx = shadows[target]
            rows = feats[idx]
            is_in = member[idx]
            score, reason = _score_one(feats[target], rows[is_in], rows[~is_in], config)
            if not np.isfinite(score):
                score, reason = 0.0, FALLBACK_UNINFORMATIVE
            scores[target] = score
            if reason is not None:
                flagged.append((target, canary, reason))
        return scores, flagged

    results = map_ordered(attack_canary, range(n), threads)

    scores = np.empty((m, n))
    fallback = np.zeros((m, n), dtype=bool)
    per_canary_fallbacks = []
    for canary, (column, flagged) in enumerate(results):
        scores[:, canary] = column
        for target, _, reason in flagged:
            fallback[target, canary] = True
            per_canary_fallbacks.append((target, canary, reason))
    per_canary_fallbacks.sort()

    if per_canary_fallbacks:
        log.warning(
            "%s: %d of %d (target, canary) scores used a fallback fit",
            variant_label(config),
            len(per_canary_fallbacks),
            m * n,
        )
    log.info("%s: scored %d targets x %d canaries (d=%d)", variant_label(config), m, n, features.shape[-1])
    return AttackResult(
        scores=scores,
        labels=membership.copy(),
        fallback=fallback,
        per_canary_fallbacks=per_canary_fallbacks,
        config=config,
    )


def scores_for(result: AttackResult, targets: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened (scores, labels) for the chosen targets, pooled over canaries."""
    rows = slice(None) if targets is None else np.asarray(targets)
    return result.scores[rows].reshape(-1), result.labels[rows].reshape(-1)
