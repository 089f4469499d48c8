"""Synthetic shadow-model score tensors with known IN/OUT Gaussians.

Each canary gets its own child seed, so generation does not depend on the
order in which canaries are produced.
"""

from typing import List, Tuple, Union

import numpy as np
from scipy.stats import norm

from .attack import lira_score
from .config import CanaryKind, CovModel, DatasetManifest, DType, ScoreKind, ShiftPattern, SyntheticSpec
from .estimators import gaussian_from_cov
from .models import GaussianSpec, MembershipMask, ScoreTensor

GroundTruth = List[Tuple[GaussianSpec, GaussianSpec]]


def _log_uniform_spectrum(rng: np.random.Generator, t: int, sigma2: float, condition_number: float) -> np.ndarray:
    """Eigenvalues between sigma2 / condition_number and sigma2, both endpoints attained."""
    u = rng.uniform(size=t)
    if t >= 2:
        u[np.argmin(u)] = 0.0
        u[np.argmax(u)] = 1.0
    else:
        u[:] = 0.0
    return sigma2 * condition_number ** (-u)


def covariance_matrix(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """True per-token covariance of the OUT distribution."""
    t = spec.t
    sigma2 = spec.sigma**2
    if spec.cov == CovModel.ISOTROPIC:
        return sigma2 * np.eye(t)
    if spec.cov == CovModel.AR1:
        lags = np.abs(np.subtract.outer(np.arange(t), np.arange(t)))
        return sigma2 * spec.rho**lags
    spectrum = _log_uniform_spectrum(rng, t, sigma2, spec.condition_number)
    if spec.cov == CovModel.DIAGONAL:
        return np.diag(spectrum)
    q, r = np.linalg.qr(rng.standard_normal((t, t)))
    q = q * np.sign(np.diag(r))
    cov = (q * spectrum) @ q.T
    return (cov + cov.T) / 2.0


def shift_vector(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """mu_in - mu_out for one canary."""
    t = spec.t
    if spec.pattern == ShiftPattern.CONSTANT:
        return np.full(t, spec.shift)
    if spec.pattern == ShiftPattern.ALTERNATING:
        return spec.shift / 2.0 * np.where(np.arange(t) % 2 == 0, 1.0, -1.0)
    return spec.shift * rng.standard_normal(t)


def generate(spec: SyntheticSpec) -> Tuple[ScoreTensor, MembershipMask, GroundTruth]:
    """Sample an [M, N, T] score tensor with floor(M/2) IN models per canary."""
    m, n, t = spec.m, spec.n, spec.t
    cov_seq, *canary_seqs = np.random.SeedSequence(spec.seed).spawn(n + 1)
    cov_out = covariance_matrix(spec, np.random.default_rng(cov_seq))
    in_scale = spec.in_scale if spec.heteroscedastic else 1.0
    chol_out = np.linalg.cholesky(cov_out)
    chol_in = np.sqrt(in_scale) * chol_out

    data = np.empty((m, n, t))
    membership = np.zeros((m, n), dtype=bool)
    truth: GroundTruth = []
    for canary, seq in enumerate(canary_seqs):
        rng = np.random.default_rng(seq)
        is_in = np.zeros(m, dtype=bool)
        is_in[rng.permutation(m)[: m // 2]] = True
        base = spec.base_spread * rng.standard_normal(t)
        mu_in = base + shift_vector(spec, rng)
        z = rng.standard_normal((m, t))
        rows = base + z @ chol_out.T
        rows[is_in] = mu_in + z[is_in] @ chol_in.T
        data[:, canary, :] = rows
        membership[:, canary] = is_in
        truth.append((gaussian_from_cov(mu_in, in_scale * cov_out), gaussian_from_cov(base, cov_out)))

    if spec.dtype == DType.FLOAT32:
        data = data.astype(np.float32)
    return ScoreTensor(data), MembershipMask(membership), truth


def synthetic_manifest(spec: SyntheticSpec) -> DatasetManifest:
    return DatasetManifest(
        dims=(spec.m, spec.n, spec.t),
        dtype=spec.dtype,
        score_kind=ScoreKind.RAW,
        canary_kind=CanaryKind.SYNTHETIC,
        seed=spec.seed,
        notes=spec.model_dump_json(),
    )


def analytic_lira_scores(rows: Union[ScoreTensor, np.ndarray], ground_truth: GroundTruth) -> np.ndarray:
    """Exact log-likelihood ratios under the true parameters, shape [M, N]."""
    data = rows.data if isinstance(rows, ScoreTensor) else np.asarray(rows)
    scores = np.empty(data.shape[:2])
    for canary, (spec_in, spec_out) in enumerate(ground_truth):
        scores[:, canary] = lira_score(np.asarray(data[:, canary, :], dtype=np.float64), spec_in, spec_out)
    return scores


def closed_form_auc(delta: np.ndarray, cov: np.ndarray) -> float:
    """AUC of the optimal test between N(0, cov) and N(delta, cov): Phi(sqrt(delta' cov^-1 delta / 2))."""
    delta = np.asarray(delta, dtype=np.float64)
    mahalanobis2 = float(delta @ np.linalg.solve(cov, delta))
    return float(norm.cdf(np.sqrt(mahalanobis2 / 2.0)))
