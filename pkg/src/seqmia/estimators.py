"""Gaussian fitting for per-token score vectors.

Covariances use the biased 1/n normalization everywhere. Scalar and diagonal
variances are floored; dense covariances are factorized with a jitter policy
so that n < d fits still yield a usable density.
"""

import math
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import solve_triangular

from .config import Estimator, Pooling
from .errors import DegenerateFitError, DimensionError
from .log import get_logger
from .models import CovKind, CovRepr, GaussianSpec, ShrinkageResult

log = get_logger(__name__)

VARIANCE_FLOOR = 1e-10
JITTER_START = 1e-10
JITTER_CAP = 1e-2
LOG_2PI = math.log(2.0 * math.pi)


def _as_matrix(samples: np.ndarray, min_rows: int) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionError(f"samples must be [n, d], got shape {x.shape}")
    if x.shape[0] < min_rows:
        raise DegenerateFitError(f"need at least {min_rows} samples, got {x.shape[0]}")
    return x


def _scatter(centered: np.ndarray) -> np.ndarray:
    s = centered.T @ centered / centered.shape[0]
    return (s + s.T) / 2.0


def mle_covariance(samples: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Column means and the 1/n scatter matrix, without jitter."""
    x = _as_matrix(samples, 1)
    mean = x.mean(axis=0)
    return mean, _scatter(x - mean)


def oas_shrinkage(s: np.ndarray, n: int) -> float:
    """Oracle approximating shrinkage intensity for a 1/n sample covariance s from n rows."""
    d = s.shape[0]
    tr = float(np.trace(s))
    tr2 = float(np.sum(s * s))
    num = (1.0 - 2.0 / d) * tr2 + tr**2
    den = (n + 1.0 - 2.0 / d) * (tr2 - tr**2 / d)
    alpha = num / max(den, np.finfo(np.float64).eps)
    return float(min(max(alpha, 0.0), 1.0))


def shrink(s: np.ndarray, alpha: float) -> np.ndarray:
    """(1 - alpha) * s + alpha * tr(s)/d * I"""
    d = s.shape[0]
    return (1.0 - alpha) * s + alpha * (np.trace(s) / d) * np.eye(d)


def factorize(cov: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    """Cholesky factor of cov, adding doubling ridge jitter while it is not positive definite.

    Returns the (possibly jittered) covariance, its lower factor and log-determinant.
    """
    d = cov.shape[0]
    scale = max(1.0, float(np.trace(cov)) / d)
    lam = 0.0
    step = JITTER_START * scale
    cap = JITTER_CAP * scale
    while True:
        candidate = cov if lam == 0.0 else cov + lam * np.eye(d)
        try:
            chol = np.linalg.cholesky(candidate)
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None and np.all(np.diag(chol) > 0):
            if lam:
                log.debug("covariance jittered with %.3g", lam)
            return candidate, chol, 2.0 * float(np.sum(np.log(np.diag(chol))))
        lam = step if lam == 0.0 else lam * 2.0
        if lam > cap:
            raise DegenerateFitError(f"covariance not positive definite with jitter up to {cap:.3g}")


def _scalar_spec(mean: np.ndarray, var: float) -> GaussianSpec:
    var = max(float(var), VARIANCE_FLOOR)
    d = mean.shape[0]
    return GaussianSpec(mean=mean, cov=CovRepr(CovKind.SCALAR, np.asarray(var), d), log_det=d * math.log(var))


def _diagonal_spec(mean: np.ndarray, var: np.ndarray) -> GaussianSpec:
    var = np.maximum(var, VARIANCE_FLOOR)
    return GaussianSpec(
        mean=mean, cov=CovRepr(CovKind.DIAGONAL, var, var.shape[0]), log_det=float(np.sum(np.log(var)))
    )


def _full_spec(mean: np.ndarray, cov: np.ndarray) -> GaussianSpec:
    cov, chol, log_det = factorize(cov)
    return GaussianSpec(mean=mean, cov=CovRepr(CovKind.FULL, cov, cov.shape[0]), log_det=log_det, chol=chol)


def gaussian_from_cov(mean: np.ndarray, cov: np.ndarray) -> GaussianSpec:
    """Full-covariance Gaussian from known parameters."""
    return _full_spec(np.asarray(mean, dtype=np.float64), np.asarray(cov, dtype=np.float64))


def _with_mean(spec: GaussianSpec, mean: np.ndarray) -> GaussianSpec:
    return GaussianSpec(mean=mean, cov=spec.cov, log_det=spec.log_det, chol=spec.chol)


def fit_mean_var(samples: np.ndarray) -> GaussianSpec:
    """Univariate Gaussian: sample mean and floored 1/n variance."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise DegenerateFitError("cannot fit a Gaussian to zero samples")
    mean = x.mean()
    return _scalar_spec(np.array([mean]), np.mean((x - mean) ** 2))


def fit_diagonal(samples: np.ndarray) -> GaussianSpec:
    """Per-coordinate means and floored variances; correlations are ignored."""
    x = _as_matrix(samples, 2)
    mean = x.mean(axis=0)
    return _diagonal_spec(mean, np.mean((x - mean) ** 2, axis=0))


def fit_mle_full(samples: np.ndarray) -> GaussianSpec:
    x = _as_matrix(samples, 2)
    mean = x.mean(axis=0)
    return _full_spec(mean, _scatter(x - mean))


def fit_oas(samples: np.ndarray, shrinkage: Optional[float] = None) -> ShrinkageResult:
    """OAS covariance; pass shrinkage to force the intensity instead of estimating it."""
    x = _as_matrix(samples, 2)
    s = _scatter(x - x.mean(axis=0))
    alpha = oas_shrinkage(s, x.shape[0]) if shrinkage is None else float(shrinkage)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {alpha}")
    cov = shrink(s, alpha)
    if cov.shape[0] == 1:
        cov = np.maximum(cov, VARIANCE_FLOOR)
    return ShrinkageResult(cov=CovRepr(CovKind.FULL, cov, cov.shape[0]), alpha=alpha)


def _fit_centered(mean: np.ndarray, centered: np.ndarray, estimator: Estimator) -> GaussianSpec:
    """Fit the covariance model on rows that are already centered."""
    n, d = centered.shape
    if estimator == Estimator.UNIVARIATE:
        if d != 1:
            raise DimensionError(f"univariate estimator needs 1-D features, got d={d}")
        return _scalar_spec(mean, float(np.mean(centered[:, 0] ** 2)))
    if estimator == Estimator.INDEPENDENT:
        return _diagonal_spec(mean, np.mean(centered**2, axis=0))
    s = _scatter(centered)
    if estimator == Estimator.OAS:
        s = shrink(s, oas_shrinkage(s, n))
    return _full_spec(mean, s)


def fit_class_models(
    in_samples: np.ndarray,
    out_samples: np.ndarray,
    estimator: Union[Estimator, str],
    pooling: Union[Pooling, str],
) -> Tuple[GaussianSpec, GaussianSpec]:
    """Fit the IN and OUT Gaussians of one canary, class-wise or with a shared covariance."""
    estimator = Estimator(estimator)
    pooling = Pooling(pooling)
    x_in = _as_matrix(in_samples, 0)
    x_out = _as_matrix(out_samples, 0)
    if x_in.shape[1] != x_out.shape[1]:
        raise DimensionError(f"IN and OUT samples differ in dimension: {x_in.shape[1]} vs {x_out.shape[1]}")
    n_in, n_out = x_in.shape[0], x_out.shape[0]

    if pooling == Pooling.CLASS_WISE:
        if n_in < 2 or n_out < 2:
            raise DegenerateFitError(f"class-wise fit needs 2 IN and 2 OUT samples, got {n_in} and {n_out}")
        mean_in = x_in.mean(axis=0)
        mean_out = x_out.mean(axis=0)
        return (
            _fit_centered(mean_in, x_in - mean_in, estimator),
            _fit_centered(mean_out, x_out - mean_out, estimator),
        )

    if n_in < 1 or n_out < 1 or n_in + n_out < 2:
        raise DegenerateFitError(f"shared fit needs samples of both classes, got {n_in} IN and {n_out} OUT")
    mean_in = x_in.mean(axis=0)
    mean_out = x_out.mean(axis=0)
    residuals = np.concatenate([x_in - mean_in, x_out - mean_out], axis=0)
    spec = _fit_centered(mean_in, residuals, estimator)
    return spec, _with_mean(spec, mean_out)


def quadratic_form(diff: np.ndarray, spec: GaussianSpec) -> np.ndarray:
    """Mahalanobis term diff^T Sigma^-1 diff over the last axis."""
    kind = spec.cov.kind
    if kind == CovKind.SCALAR:
        return np.sum(diff**2, axis=-1) / float(spec.cov.values)
    if kind == CovKind.DIAGONAL:
        return np.sum(diff**2 / spec.cov.values, axis=-1)
    if spec.chol is None:
        raise DegenerateFitError("full covariance has no cached factorization")
    flat = diff.reshape(-1, spec.dim)
    z = solve_triangular(spec.chol, flat.T, lower=True, check_finite=False)
    return np.sum(z**2, axis=0).reshape(diff.shape[:-1])


def log_density(x: np.ndarray, spec: GaussianSpec) -> Union[float, np.ndarray]:
    """Gaussian log-density of x (shape [d] or [..., d])."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != spec.dim:
        raise DimensionError(f"point has dimension {x.shape[-1]}, Gaussian has {spec.dim}")
    quad = quadratic_form(x - spec.mean, spec)
    value = -0.5 * (spec.dim * LOG_2PI + spec.log_det + quad)
    return float(value) if np.ndim(value) == 0 else value


def frobenius_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"matrix shapes differ: {a.shape} vs {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def correlation_matrix(cov: Union[np.ndarray, GaussianSpec]) -> np.ndarray:
    """Normalize a covariance to unit diagonal."""
    if isinstance(cov, GaussianSpec):
        cov = cov.cov.to_dense()
    sd = np.sqrt(np.maximum(np.diag(cov), VARIANCE_FLOOR))
    return cov / np.outer(sd, sd)
