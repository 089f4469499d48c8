"""Command-line interface for seqmia."""

import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence, TypeVar

import click
import numpy as np
import typer
from pydantic import ValidationError

try:  # typer >= 0.26 vendors its own copy of click
    from typer._click import exceptions as click_exceptions
except ImportError:
    click_exceptions = click.exceptions

from .attack import all_variants, run_attack, variant_label
from .config import (
    AttackConfig,
    CovModel,
    DType,
    Estimator,
    Pooling,
    ReductionKind,
    ReductionSpec,
    RelativeMode,
    RunConfig,
    ShiftPattern,
    SyntheticSpec,
    TransformKind,
    TransformSpec,
)
from .dataset import load_any, membership_summary, save_dataset
from .errors import VALIDATION_ERRORS, FormatError, SeqMiaError
from .estimators import correlation_matrix, mle_covariance
from .evaluation import (
    StudyEstimator,
    auc,
    compare_variants,
    covariance_study,
    per_target_metrics,
    roc,
    sweep_length_reduction,
    sweep_shadow_models,
)
from .log import configure_logging, get_logger
from .models import AttackResult
from .parallel import THREADS_ENV, resolve_threads
from .plots import plot_report
from .report import (
    ATTACK_COLUMNS,
    COMPARE_COLUMNS,
    COVSTUDY_COLUMNS,
    REDUCE_SWEEP_COLUMNS,
    ROC_COLUMNS,
    SWEEP_COLUMNS,
    ReportWorkbook,
    metric_columns,
    read_csv,
    roc_rows,
    write_csv,
    write_matrix_csv,
)
from .synthetic import analytic_lira_scores, generate, synthetic_manifest
from .transform import apply_transform

log = get_logger(__name__)

app = typer.Typer(help="seqmia - membership inference auditing from per-token shadow-model scores")

T = TypeVar("T")


def _parse_list(text: str, cast: Callable[[str], T], flag: str) -> List[T]:
    try:
        values = [cast(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise typer.BadParameter(f"cannot parse {text!r}: {exc}", param_hint=flag) from exc
    if not values:
        raise typer.BadParameter("expected a comma-separated list", param_hint=flag)
    return values


def _parse_fpr(text: str) -> List[float]:
    targets = _parse_list(text, float, "--fpr")
    bad = [t for t in targets if not 0.0 < t < 1.0]
    if bad:
        raise typer.BadParameter(f"FPR targets must lie in (0, 1), got {bad}", param_hint="--fpr")
    return targets


def _run_config(ctx: typer.Context) -> RunConfig:
    return ctx.obj if isinstance(ctx.obj, RunConfig) else RunConfig()


def _out(ctx: typer.Context, path: Path) -> Path:
    """Resolve an output path against --out-dir and create its directory."""
    path = _run_config(ctx).resolve(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _reduction(kind: ReductionKind, param: Optional[int]) -> ReductionSpec:
    if kind != ReductionKind.NONE and param is None:
        raise typer.BadParameter(f"--reduce {kind.value} needs --reduce-param", param_hint="--reduce-param")
    return ReductionSpec(kind=kind, param=1 if param is None else param)


def _select_variants(
    names: Optional[str], reduction: ReductionSpec, transform: TransformSpec, max_shadow: Optional[int], seed: int
) -> List[AttackConfig]:
    configs = all_variants(reduction, transform, max_shadow, seed)
    if not names:
        return configs
    by_name = {f"{c.estimator.value}-{c.pooling.value}": c for c in configs}
    wanted = _parse_list(names, str, "--variants")
    unknown = [w for w in wanted if w not in by_name]
    if unknown:
        raise typer.BadParameter(f"unknown variants {unknown}; choose from {sorted(by_name)}", param_hint="--variants")
    return [by_name[w] for w in wanted]


@app.callback()
def main_options(
    ctx: typer.Context,
    threads: Optional[int] = typer.Option(
        None, "--threads", "-j", envvar=THREADS_ENV, min=1, help="Worker threads (wall time only)"
    ),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging to stderr"),
    out_dir: Optional[Path] = typer.Option(None, "--out-dir", help="Directory for relative output paths"),
):
    """Global options shared by every command."""
    configure_logging(verbose)
    ctx.obj = RunConfig(threads=resolve_threads(threads), verbose=verbose, out_dir=out_dir)


@app.command()
def synth(
    ctx: typer.Context,
    m: int = typer.Option(64, "--m", help="Number of models"),
    n: int = typer.Option(1000, "--n", help="Number of canaries"),
    t: int = typer.Option(32, "--t", help="Tokens per canary"),
    cov: CovModel = typer.Option(CovModel.AR1, "--cov", help="Per-token covariance model"),
    sigma: float = typer.Option(1.0, "--sigma"),
    rho: float = typer.Option(0.9, "--rho", help="AR(1) correlation"),
    condition_number: float = typer.Option(10.0, "--condition-number", help="Spectrum range of diagonal/dense"),
    shift: float = typer.Option(0.3, "--shift", help="Mean shift between IN and OUT"),
    pattern: ShiftPattern = typer.Option(ShiftPattern.ALTERNATING, "--pattern"),
    base_spread: float = typer.Option(0.0, "--base-spread", help="Spread of per-canary OUT means"),
    heteroscedastic: bool = typer.Option(False, "--heteroscedastic", help="Scale the IN covariance"),
    in_scale: float = typer.Option(0.5, "--in-scale"),
    dtype: DType = typer.Option(DType.FLOAT64, "--dtype"),
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(..., "--out", "-o", help="Output .sqmi container"),
    oracle_out: Optional[Path] = typer.Option(None, "--oracle-out", help="Also write exact log-LR scores as CSV"),
):
    """Generate a synthetic dataset with known IN/OUT Gaussians."""
    spec = SyntheticSpec(
        m=m,
        n=n,
        t=t,
        cov=cov,
        sigma=sigma,
        rho=rho,
        condition_number=condition_number,
        shift=shift,
        pattern=pattern,
        base_spread=base_spread,
        heteroscedastic=heteroscedastic,
        in_scale=in_scale,
        dtype=dtype,
        seed=seed,
    )
    tensor, mask, truth = generate(spec)
    out = _out(ctx, out)
    save_dataset(tensor, mask, synthetic_manifest(spec), out)
    typer.echo(f"Saved: {out} (M={m}, N={n}, T={t}, {cov.value})")
    if oracle_out is not None:
        scores = analytic_lira_scores(tensor, truth)
        oracle = AttackResult(
            scores=scores,
            labels=np.asarray(mask.mask).copy(),
            fallback=np.zeros(scores.shape, dtype=bool),
            per_canary_fallbacks=[],
            config=AttackConfig(estimator=Estimator.FULL, pooling=Pooling.CLASS_WISE),
        )
        oracle_out = _out(ctx, oracle_out)
        write_csv(oracle_out, oracle.rows(), ATTACK_COLUMNS)
        typer.echo(f"Oracle scores: {oracle_out}")


@app.command()
def validate(
    input_path: Path = typer.Option(..., "--input", "-i", help="Container file or CSV fixture directory"),
):
    """Load a dataset and report its dimensions and membership balance."""
    tensor, mask, manifest = load_any(input_path)
    m, n, t = tensor.shape
    typer.echo(f"{input_path}: M={m} N={n} T={t} dtype={manifest.dtype.value} scores={manifest.score_kind.value}")
    typer.echo(f"canary kind: {manifest.canary_kind.value}")
    messages = membership_summary(mask)
    for message in messages:
        typer.echo(f"warning: {message}")
    if not messages:
        typer.echo("membership: balanced")


@app.command()
def attack(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="Container file or CSV fixture directory"),
    estimator: Estimator = typer.Option(Estimator.OAS, "--estimator"),
    pooling: Pooling = typer.Option(Pooling.SHARED, "--pooling"),
    reduce: ReductionKind = typer.Option(ReductionKind.NONE, "--reduce"),
    reduce_param: Optional[int] = typer.Option(None, "--reduce-param", help="Chunk size or k"),
    transform: TransformKind = typer.Option(TransformKind.IDENTITY, "--transform"),
    max_shadow: Optional[int] = typer.Option(None, "--max-shadow", help="Shadow models per target"),
    seed: int = typer.Option(0, "--seed", help="Seed of the shadow subsample"),
    out: Path = typer.Option(Path("scores.csv"), "--out", "-o"),
):
    """Run the leave-one-out likelihood-ratio attack and write per-(target, canary) scores."""
    config = AttackConfig(
        estimator=estimator,
        pooling=pooling,
        reduction=_reduction(reduce, reduce_param),
        transform=TransformSpec(kind=transform),
        max_shadow_models=max_shadow,
        seed=seed,
    )
    tensor, mask, _ = load_any(input_path)
    result = run_attack(tensor, mask, config, _run_config(ctx).threads)
    out = _out(ctx, out)
    write_csv(out, result.rows(), ATTACK_COLUMNS)
    typer.echo(
        f"{variant_label(config)}: {result.scores.size} scores, "
        f"{len(result.per_canary_fallbacks)} fallbacks -> {out}"
    )


@app.command("eval")
def evaluate(
    ctx: typer.Context,
    scores_path: Path = typer.Option(..., "--scores", "-s", help="Scores CSV written by attack"),
    fpr: str = typer.Option("1e-3,1e-4", "--fpr", help="Comma-separated FPR targets"),
    out: Path = typer.Option(Path("metrics.csv"), "--out", "-o"),
    roc_out: Optional[Path] = typer.Option(None, "--roc-out", help="Pooled ROC curve CSV"),
):
    """AUC and TPR at low FPR, pooled and per target model."""
    fpr_targets = _parse_fpr(fpr)
    rows = read_csv(scores_path)
    missing = {"target_index", "score", "label"} - set(rows[0] if rows else {})
    if missing:
        raise FormatError(f"{scores_path}: missing columns {sorted(missing)}")
    scores = np.array([float(r["score"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows], dtype=bool)
    targets = np.array([int(r["target_index"]) for r in rows])

    metrics = per_target_metrics(scores, labels, targets, fpr_targets)
    out = _out(ctx, out)
    write_csv(out, metrics, metric_columns(fpr_targets))
    pooled = metrics[0]
    summary = ", ".join(f"TPR@{t!r}={pooled[f'tpr@{t!r}']:.4g}" for t in fpr_targets)
    typer.echo(f"AUC={pooled['auc']:.4f}, {summary} -> {out}")
    if roc_out is not None:
        roc_out = _out(ctx, roc_out)
        write_csv(roc_out, roc_rows(roc(scores, labels)), ROC_COLUMNS)
        typer.echo(f"ROC: {roc_out}")


@app.command()
def covstudy(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i"),
    grid: str = typer.Option("4,8,16,32,64", "--grid", help="Shadow models per class"),
    gold: Optional[int] = typer.Option(None, "--gold", help="Rows per class of the gold standard (default M)"),
    canaries: Optional[int] = typer.Option(None, "--canaries", help="Use the first K canaries"),
    estimators: str = typer.Option(",".join(e.value for e in StudyEstimator), "--estimators"),
    seed: int = typer.Option(0, "--seed"),
    relative_mode: RelativeMode = typer.Option(RelativeMode.PER_CANARY, "--relative-mode"),
    out: Path = typer.Option(Path("covstudy.csv"), "--out", "-o"),
):
    """Covariance approximation error of each estimator against the full-MLE gold standard."""
    counts = _parse_list(grid, int, "--grid")
    try:
        chosen = [StudyEstimator(e) for e in _parse_list(estimators, str, "--estimators")]
    except ValueError as exc:
        raise typer.BadParameter(str(exc), param_hint="--estimators") from exc
    tensor, mask, _ = load_any(input_path)
    subset = None if canaries is None else range(min(canaries, tensor.N))
    report = covariance_study(
        tensor,
        mask,
        subset,
        counts,
        gold if gold is not None else tensor.M,
        seed=seed,
        relative_mode=relative_mode,
        estimators=chosen,
        threads=_run_config(ctx).threads,
    )
    out = _out(ctx, out)
    write_csv(out, report.rows(), COVSTUDY_COLUMNS)
    typer.echo(f"covariance study: {len(report.errors)} cells -> {out}")


@app.command()
def sweep(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i"),
    grid: str = typer.Option("4,8,16,32", "--grid", help="Shadow model counts"),
    variants: Optional[str] = typer.Option(None, "--variants", help="e.g. oas-shared,univariate-shared"),
    reduce: ReductionKind = typer.Option(ReductionKind.NONE, "--reduce"),
    reduce_param: Optional[int] = typer.Option(None, "--reduce-param"),
    transform: TransformKind = typer.Option(TransformKind.IDENTITY, "--transform"),
    fpr: str = typer.Option("1e-3,1e-4", "--fpr"),
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(Path("sweep.csv"), "--out", "-o"),
):
    """TPR at low FPR of each variant as the number of shadow models grows."""
    counts = _parse_list(grid, int, "--grid")
    fpr_targets = _parse_fpr(fpr)
    configs = _select_variants(variants, _reduction(reduce, reduce_param), TransformSpec(kind=transform), None, seed)
    tensor, mask, _ = load_any(input_path)
    for config in configs:
        config.check_dims(tensor.M, tensor.T)
    rows = sweep_shadow_models(tensor, mask, configs, counts, fpr_targets, _run_config(ctx).threads)
    out = _out(ctx, out)
    write_csv(out, rows, SWEEP_COLUMNS)
    typer.echo(f"sweep: {len(configs)} variants x {len(set(counts))} counts -> {out}")


@app.command()
def compare(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i"),
    variants: Optional[str] = typer.Option(None, "--variants"),
    reduce: ReductionKind = typer.Option(ReductionKind.NONE, "--reduce"),
    reduce_param: Optional[int] = typer.Option(None, "--reduce-param"),
    transform: TransformKind = typer.Option(TransformKind.IDENTITY, "--transform"),
    max_shadow: Optional[int] = typer.Option(None, "--max-shadow"),
    fpr: str = typer.Option("1e-3,1e-4", "--fpr"),
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(Path("compare.csv"), "--out", "-o"),
    xlsx: Optional[Path] = typer.Option(None, "--xlsx", help="Also write a spreadsheet report"),
    roc_dir: Optional[Path] = typer.Option(None, "--roc-dir", help="Write one ROC CSV per variant here"),
):
    """TPR at each FPR target and AUC for every attack variant."""
    fpr_targets = _parse_fpr(fpr)
    configs = _select_variants(
        variants, _reduction(reduce, reduce_param), TransformSpec(kind=transform), max_shadow, seed
    )
    tensor, mask, manifest = load_any(input_path)
    for config in configs:
        config.check_dims(tensor.M, tensor.T)
    rows, curves = compare_variants(tensor, mask, configs, fpr_targets, _run_config(ctx).threads)
    out = _out(ctx, out)
    write_csv(out, rows, COMPARE_COLUMNS)
    typer.echo(f"compare: {len(configs)} variants -> {out}")

    if roc_dir is not None:
        for label, curve in curves.items():
            write_csv(_out(ctx, roc_dir / f"roc_{label}.csv"), roc_rows(curve), ROC_COLUMNS)
        typer.echo(f"ROC curves: {_run_config(ctx).resolve(roc_dir)}")
    if xlsx is not None:
        context = {
            "Dataset": input_path,
            "Dimensions": f"M={tensor.M} N={tensor.N} T={tensor.T}",
            "Canary kind": manifest.canary_kind.value,
            "AUC range": f"{min(auc(c) for c in curves.values()):.4f} - {max(auc(c) for c in curves.values()):.4f}",
        }
        xlsx = _out(ctx, xlsx)
        ReportWorkbook().write(rows, fpr_targets, context, xlsx)
        typer.echo(f"Workbook: {xlsx}")


@app.command("reduce-sweep")
def reduce_sweep(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i"),
    variants: Optional[str] = typer.Option(None, "--variants"),
    kinds: str = typer.Option("group,min,max", "--kinds"),
    params: str = typer.Option("1,2,4,8,16", "--params", help="Reduced lengths (chunk size for group)"),
    transform: TransformKind = typer.Option(TransformKind.IDENTITY, "--transform"),
    fpr: str = typer.Option("1e-3,1e-4", "--fpr"),
    seed: int = typer.Option(0, "--seed"),
    out: Path = typer.Option(Path("reduce_sweep.csv"), "--out", "-o"),
):
    """Attack performance under Group/Min/Max length reduction."""
    fpr_targets = _parse_fpr(fpr)
    try:
        reduction_kinds = [ReductionKind(k) for k in _parse_list(kinds, str, "--kinds")]
    except ValueError as exc:
        raise typer.BadParameter(str(exc), param_hint="--kinds") from exc
    if ReductionKind.NONE in reduction_kinds:
        raise typer.BadParameter("the unreduced baseline is always included", param_hint="--kinds")
    lengths = _parse_list(params, int, "--params")
    configs = _select_variants(variants, ReductionSpec(), TransformSpec(kind=transform), None, seed)
    tensor, mask, _ = load_any(input_path)
    rows = sweep_length_reduction(
        tensor, mask, configs, reduction_kinds, lengths, fpr_targets, _run_config(ctx).threads
    )
    out = _out(ctx, out)
    write_csv(out, rows, REDUCE_SWEEP_COLUMNS)
    typer.echo(f"reduce-sweep: {len(rows)} rows -> {out}")


@app.command()
def covmatrix(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i"),
    canary: int = typer.Option(0, "--canary"),
    member: bool = typer.Option(False, "--in/--out-class", help="Use IN rows instead of OUT rows"),
    correlation: bool = typer.Option(False, "--correlation", help="Normalize to unit diagonal"),
    transform: TransformKind = typer.Option(TransformKind.IDENTITY, "--transform"),
    out: Path = typer.Option(Path("covmatrix.csv"), "--out", "-o"),
):
    """Full-MLE per-token covariance of one canary over the models of one class."""
    tensor, mask, _ = load_any(input_path)
    if not 0 <= canary < tensor.N:
        raise typer.BadParameter(f"canary must lie in [0, {tensor.N - 1}]", param_hint="--canary")
    rows = np.asarray(mask.mask[:, canary]) == member
    samples = apply_transform(tensor.data[rows, canary, :], TransformSpec(kind=transform))
    _, matrix = mle_covariance(samples)
    if correlation:
        matrix = correlation_matrix(matrix)
    cls = "IN" if member else "OUT"
    out = _out(ctx, out)
    write_matrix_csv(out, matrix)
    typer.echo(f"{cls} covariance of canary {canary} from {int(rows.sum())} models -> {out}")


@app.command()
def plot(
    ctx: typer.Context,
    inputs: List[Path] = typer.Option(..., "--in", help="Report CSV; repeat to overlay ROC curves"),
    out: Path = typer.Option(..., "--out", "-o", help="Output SVG"),
):
    """Render a report CSV as a static SVG chart."""
    out = _out(ctx, out)
    kind = plot_report(inputs, out)
    typer.echo(f"{kind} chart -> {out}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and map errors to exit codes: 1 validation, 2 runtime."""
    command = typer.main.get_command(app)
    try:
        command.main(args=list(argv) if argv is not None else None, prog_name="seqmia", standalone_mode=False)
    except click_exceptions.Exit as exc:
        return exc.exit_code
    except click_exceptions.Abort:
        typer.echo("Aborted.", err=True)
        return 1
    except click_exceptions.ClickException as exc:
        exc.show()
        return 1
    except VALIDATION_ERRORS as exc:
        typer.echo(f"error: {exc}", err=True)
        return 1
    except ValidationError as exc:
        typer.echo(f"invalid configuration: {exc}", err=True)
        return 1
    except (SeqMiaError, OSError) as exc:
        log.debug("runtime failure", exc_info=True)
        typer.echo(f"error: {exc}", err=True)
        return 2
    return 0


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
