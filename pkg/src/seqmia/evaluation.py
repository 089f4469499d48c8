"""ROC analysis, TPR at low FPR, covariance-approximation studies and shadow-count sweeps."""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .attack import run_attack, variant_label
from .config import AttackConfig, Estimator, Pooling, RelativeMode, ReductionKind, ReductionSpec
from .errors import ConfigConflictError, EvaluationError
from .estimators import frobenius_error, oas_shrinkage, shrink
from .log import get_logger
from .models import AttackResult, CovStudyReport, MembershipMask, RocCurve, ScoreTensor
from .parallel import map_ordered

log = get_logger(__name__)

DEFAULT_FPR_TARGETS = (1e-3, 1e-4)
RELATIVE_ERROR_GUARD = 1e-15


def roc(scores: np.ndarray, labels: np.ndarray) -> RocCurve:
    """Empirical ROC over all distinct thresholds; equal scores flip together."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=bool).reshape(-1)
    if scores.shape != labels.shape:
        raise EvaluationError(f"{scores.size} scores but {labels.size} labels")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError(f"ROC needs both classes, got {n_pos} positives and {n_neg} negatives")

    order = np.argsort(-scores, kind="stable")
    ordered = scores[order]
    y = labels[order]
    ends = np.append(np.flatnonzero(np.diff(ordered) != 0), ordered.size - 1)
    starts = np.concatenate([[0], ends[:-1] + 1])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    return RocCurve(
        thresholds=np.append(ordered[starts], -np.inf),
        fpr=np.concatenate([[0.0], fp / n_neg]),
        tpr=np.concatenate([[0.0], tp / n_pos]),
        n_pos=n_pos,
        n_neg=n_neg,
    )


def tpr_at_fpr(curve: RocCurve, fpr_target: float) -> float:
    """TPR at the curve point with the largest FPR not above the target (no interpolation)."""
    if not 0.0 < fpr_target < 1.0:
        raise EvaluationError(f"fpr_target must lie in (0, 1), got {fpr_target}")
    k = int(np.searchsorted(curve.fpr, fpr_target, side="right")) - 1
    return float(curve.tpr[k])


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the step ROC (ties count one half)."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def score_metrics(scores: np.ndarray, labels: np.ndarray, fpr_targets: Sequence[float]) -> Dict[str, Any]:
    curve = roc(scores, labels)
    metrics: Dict[str, Any] = {"n_pos": curve.n_pos, "n_neg": curve.n_neg, "auc": auc(curve)}
    for target in fpr_targets:
        metrics[f"tpr@{target!r}"] = tpr_at_fpr(curve, target)
    return metrics


def per_target_metrics(
    scores: np.ndarray, labels: np.ndarray, targets: np.ndarray, fpr_targets: Sequence[float]
) -> List[Dict[str, Any]]:
    """Pooled metrics first, then one row per target model (single-class targets skipped)."""
    rows = [{"scope": "pooled", **score_metrics(scores, labels, fpr_targets)}]
    for target in np.unique(targets):
        sel = targets == target
        if labels[sel].all() or not labels[sel].any():
            log.warning("target %d has a single class; skipped in per-target metrics", int(target))
            continue
        rows.append({"scope": str(int(target)), **score_metrics(scores[sel], labels[sel], fpr_targets)})
    return rows


def result_metrics(result: AttackResult, fpr_targets: Sequence[float]) -> List[Dict[str, Any]]:
    m, n = result.scores.shape
    targets = np.repeat(np.arange(m), n)
    return per_target_metrics(result.scores.reshape(-1), result.labels.reshape(-1), targets, fpr_targets)


class StudyEstimator(str, Enum):
    """Covariance structures compared against the gold standard."""

    SCALAR = "scalar"
    DIAGONAL = "diagonal"
    OAS = "oas"
    FULL = "full"


def study_covariance(centered: np.ndarray, estimator: StudyEstimator) -> np.ndarray:
    """Dense covariance estimate from centered rows, without floors or jitter."""
    n, d = centered.shape
    s = centered.T @ centered / n
    s = (s + s.T) / 2.0
    if estimator == StudyEstimator.FULL:
        return s
    if estimator == StudyEstimator.OAS:
        return shrink(s, oas_shrinkage(s, n))
    if estimator == StudyEstimator.DIAGONAL:
        return np.diag(np.diag(s))
    return (np.trace(s) / d) * np.eye(d)


def _centered(x: np.ndarray) -> np.ndarray:
    return x - x.mean(axis=0)


def covariance_study(
    tensor: ScoreTensor,
    mask: MembershipMask,
    canary_subset: Optional[Sequence[int]],
    grid: Sequence[int],
    gold_count: int,
    seed: int = 0,
    relative_mode: RelativeMode = RelativeMode.PER_CANARY,
    estimators: Sequence[StudyEstimator] = tuple(StudyEstimator),
    threads: Optional[int] = 1,
) -> CovStudyReport:
    """Frobenius error of each estimator to the full-MLE gold standard, per class and shadow count.

    Counts are in rows of one class. The gold standard uses the first gold_count
    rows of the class; a count s uses the rows at the first s positions of a
    seeded permutation of those gold positions. Shared estimates pool s rows of
    each class after per-class centering.
    """
    m = tensor.M
    grid = sorted(set(int(s) for s in grid))
    if gold_count < 2 or gold_count > m:
        raise ConfigConflictError(f"gold_count must lie in [2, {m}], got {gold_count}")
    if not grid or grid[0] < 2 or grid[-1] > m:
        raise ConfigConflictError(f"grid counts must lie in [2, {m}], got {grid}")
    canaries = np.unique(np.arange(tensor.N) if canary_subset is None else np.asarray(canary_subset, dtype=int))
    if canaries.size == 0 or canaries[0] < 0 or canaries[-1] >= tensor.N:
        raise ConfigConflictError("canary subset is empty or out of range")
    perm = np.random.default_rng(seed).permutation(gold_count)
    estimators = [StudyEstimator(e) for e in estimators]
    membership = np.asarray(mask.mask)

    def positions(available: int, count: int) -> Optional[np.ndarray]:
        if count > available:
            return None
        return np.sort(perm[perm < available][:count])

    def study_canary(canary: int) -> Dict[Tuple[str, str, str, int], float]:
        x = np.asarray(tensor.data[:, canary, :], dtype=np.float64)
        gold_rows = {
            "in": np.flatnonzero(membership[:, canary])[:gold_count],
            "out": np.flatnonzero(~membership[:, canary])[:gold_count],
        }
        errors = {}
        for cls, other in (("in", "out"), ("out", "in")):
            rows = gold_rows[cls]
            if rows.size < 2:
                continue
            gold = study_covariance(_centered(x[rows]), StudyEstimator.FULL)
            for count in grid:
                own = positions(rows.size, count)
                if own is None:
                    continue
                own_centered = _centered(x[rows[own]])
                theirs = positions(gold_rows[other].size, count)
                pooled = None
                if theirs is not None:
                    pooled = np.concatenate([own_centered, _centered(x[gold_rows[other][theirs]])])
                for estimator in estimators:
                    errors[(estimator.value, Pooling.CLASS_WISE.value, cls, count)] = frobenius_error(
                        study_covariance(own_centered, estimator), gold
                    )
                    if pooled is not None:
                        errors[(estimator.value, Pooling.SHARED.value, cls, count)] = frobenius_error(
                            study_covariance(pooled, estimator), gold
                        )
        return errors

    per_canary = map_ordered(study_canary, canaries.tolist(), threads)

    report = CovStudyReport(grid=list(grid), gold_count=gold_count, relative_mode=RelativeMode(relative_mode))
    keys = [
        (estimator.value, pooling.value, cls, count)
        for estimator in estimators
        for pooling in (Pooling.CLASS_WISE, Pooling.SHARED)
        for cls in ("in", "out")
        for count in grid
    ]
    unavailable = 0
    for key in keys:
        values = [errors[key] for errors in per_canary if key in errors]
        report.n_canaries[key] = len(values)
        report.errors[key] = float(np.mean(values)) if values else float("nan")
        unavailable += not values

    for estimator in estimators:
        for cls in ("in", "out"):
            for count in grid:
                cw_key = (estimator.value, Pooling.CLASS_WISE.value, cls, count)
                sh_key = (estimator.value, Pooling.SHARED.value, cls, count)
                pairs = [(e[cw_key], e[sh_key]) for e in per_canary if cw_key in e and sh_key in e]
                report.relative_error[(estimator.value, cls, count)] = _relative_error(pairs, report.relative_mode)

    if unavailable:
        log.warning("%d study cells unavailable: grid count exceeds the rows of a class", unavailable)
    log.info("covariance study over %d canaries, grid %s, gold %d", canaries.size, grid, gold_count)
    return report


def _relative_error(pairs: List[Tuple[float, float]], mode: RelativeMode) -> float:
    """(class-wise - shared) / shared; NaN where the shared error vanishes."""
    if not pairs:
        return float("nan")
    cw = np.array([p[0] for p in pairs])
    sh = np.array([p[1] for p in pairs])
    if mode == RelativeMode.RATIO_OF_MEANS:
        denom = sh.mean()
        return float((cw.mean() - denom) / denom) if denom >= RELATIVE_ERROR_GUARD else float("nan")
    ok = sh >= RELATIVE_ERROR_GUARD
    if not ok.any():
        return float("nan")
    return float(np.mean((cw[ok] - sh[ok]) / sh[ok]))


def _pooled_curve(result: AttackResult) -> Tuple[RocCurve, float]:
    curve = roc(result.scores.reshape(-1), result.labels.reshape(-1))
    return curve, auc(curve)


def sweep_shadow_models(
    tensor: ScoreTensor,
    mask: MembershipMask,
    configs: Sequence[AttackConfig],
    grid: Sequence[int],
    fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
    threads: Optional[int] = 1,
) -> List[Dict[str, Any]]:
    """TPR@FPR of each attack variant as the number of shadow models grows."""
    limit = tensor.M - 1
    bad = [s for s in grid if s < 2 or s > limit]
    if bad:
        raise ConfigConflictError(f"shadow counts must lie in [2, {limit}], got {bad}")
    rows = []
    for config in configs:
        for count in sorted(set(int(s) for s in grid)):
            result = run_attack(tensor, mask, config.model_copy(update={"max_shadow_models": count}), threads)
            curve, area = _pooled_curve(result)
            for target in fpr_targets:
                rows.append(
                    {
                        "variant": variant_label(config),
                        "shadow_count": count,
                        "fpr": target,
                        "tpr": tpr_at_fpr(curve, target),
                        "auc": area,
                    }
                )
    return rows


def compare_variants(
    tensor: ScoreTensor,
    mask: MembershipMask,
    configs: Sequence[AttackConfig],
    fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
    threads: Optional[int] = 1,
) -> Tuple[List[Dict[str, Any]], Dict[str, RocCurve]]:
    """TPR at each FPR target and AUC per variant, plus the pooled ROC of each variant."""
    rows = []
    curves = {}
    for config in configs:
        result = run_attack(tensor, mask, config, threads)
        curve, area = _pooled_curve(result)
        label = variant_label(config)
        curves[label] = curve
        for target in fpr_targets:
            rows.append(
                {
                    "variant": label,
                    "fpr": target,
                    "tpr": tpr_at_fpr(curve, target),
                    "auc": area,
                    "n_fallbacks": len(result.per_canary_fallbacks),
                }
            )
    return rows, curves


def sweep_length_reduction(
    tensor: ScoreTensor,
    mask: MembershipMask,
    base_configs: Sequence[AttackConfig],
    kinds: Sequence[ReductionKind],
    params: Sequence[int],
    fpr_targets: Sequence[float] = DEFAULT_FPR_TARGETS,
    threads: Optional[int] = 1,
) -> List[Dict[str, Any]]:
    """Group/Min/Max reductions over a grid of parameters, with the unreduced attack as baseline."""
    rows = []
    for base in base_configs:
        if base.estimator == Estimator.UNIVARIATE:
            log.warning("univariate variants take no length reduction; skipped")
            continue
        settings = [ReductionSpec()]
        for kind in kinds:
            kind = ReductionKind(kind)
            for param in sorted(set(int(p) for p in params)):
                if param > tensor.T:
                    log.warning("%s parameter %d exceeds sequence length %d; skipped", kind.value, param, tensor.T)
                    continue
                settings.append(ReductionSpec(kind=kind, param=param))
        for reduction in settings:
            config = base.model_copy(update={"reduction": reduction})
            result = run_attack(tensor, mask, config, threads)
            curve, area = _pooled_curve(result)
            for target in fpr_targets:
                rows.append(
                    {
                        "variant": variant_label(base),
                        "reduction": reduction.kind.value,
                        "param": reduction.param if reduction.kind != ReductionKind.NONE else tensor.T,
                        "fpr": target,
                        "tpr": tpr_at_fpr(curve, target),
                        "auc": area,
                    }
                )
    return rows
