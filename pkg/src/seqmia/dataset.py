"""Score containers: the SQMI binary format, CSV fixture directories and leave-one-out splits.

Binary layout (little-endian)::

    "SQMI" | u32 version | u32 M | u32 N | u32 T | u8 dtype | u8 score_kind | 2 zero bytes
    M*N*T scores (model, canary, token order)
    M*N mask bytes (0/1)
    u32 manifest length | UTF-8 JSON manifest
"""

import json
import re
import struct
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .config import DTYPE_CODES, SCORE_KIND_CODES, DatasetManifest, DType
from .errors import DatasetValidationError, FormatError, TruncationError
from .fileio import atomic_write
from .log import get_logger
from .models import LooSplit, MembershipMask, ScoreTensor

log = get_logger(__name__)

MAGIC = b"SQMI"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIBB2s")
_U32 = struct.Struct("<I")

_NUMPY_DTYPES = {DType.FLOAT32: np.dtype("<f4"), DType.FLOAT64: np.dtype("<f8")}
_DTYPE_BY_CODE = {code: dtype for dtype, code in DTYPE_CODES.items()}
_SCORE_KIND_BY_CODE = {code: kind for kind, code in SCORE_KIND_CODES.items()}

Dataset = Tuple[ScoreTensor, MembershipMask, DatasetManifest]


def membership_summary(mask: MembershipMask) -> List[str]:
    """Describe membership columns that deviate from the balanced half-in design."""
    m, n = mask.shape
    counts = mask.in_counts
    messages = []
    if np.all(counts == m):
        messages.append("no nonmember observations: every canary is IN for every model")
    elif np.all(counts == 0):
        messages.append("no member observations: every canary is OUT for every model")
    balanced = (counts == m // 2) | (counts == (m + 1) // 2)
    n_bad = int(n - balanced.sum())
    if n_bad:
        first = int(np.flatnonzero(~balanced)[0])
        messages.append(
            f"{n_bad} of {n} canaries have imbalanced membership "
            f"(expected {m // 2} or {(m + 1) // 2} IN models; canary {first} has {int(counts[first])})"
        )
    return messages


def _warn_membership(mask: MembershipMask) -> None:
    for message in membership_summary(mask):
        log.warning(message)


def _check_consistent(tensor: ScoreTensor, mask: MembershipMask, manifest: DatasetManifest) -> None:
    mask.check_against(tensor)
    if tuple(manifest.dims) != tensor.shape:
        raise DatasetValidationError(f"manifest dims {manifest.dims} do not match tensor shape {tensor.shape}")
    if manifest.dtype != tensor.dtype:
        raise DatasetValidationError(
            f"manifest dtype {manifest.dtype.value} does not match tensor dtype {tensor.dtype.value}"
        )


def make_manifest(tensor: ScoreTensor, **fields) -> DatasetManifest:
    """Build a manifest whose dims and dtype follow the tensor."""
    return DatasetManifest(dims=tensor.shape, dtype=tensor.dtype, **fields)


def save_dataset(tensor: ScoreTensor, mask: MembershipMask, manifest: DatasetManifest, path: Path) -> None:
    """Write a dataset to an SQMI container."""
    _check_consistent(tensor, mask, manifest)
    m, n, t = tensor.shape
    header = _HEADER.pack(
        MAGIC, VERSION, m, n, t, DTYPE_CODES[manifest.dtype], SCORE_KIND_CODES[manifest.score_kind], b"\x00\x00"
    )
    payload = np.ascontiguousarray(tensor.data, dtype=_NUMPY_DTYPES[manifest.dtype])
    manifest_bytes = manifest.model_dump_json().encode("utf-8")
    with atomic_write(Path(path), binary=True) as handle:
        handle.write(header)
        handle.write(payload.tobytes(order="C"))
        handle.write(np.ascontiguousarray(mask.mask, dtype=np.uint8).tobytes(order="C"))
        handle.write(_U32.pack(len(manifest_bytes)))
        handle.write(manifest_bytes)
    log.debug("saved %s with dims %s", path, tensor.shape)


def load_dataset(path: Path) -> Dataset:
    """Read and validate an SQMI container."""
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise FormatError(f"{path}: not an SQMI container (bad magic)")
    if len(buf) < _HEADER.size:
        raise TruncationError(f"{path}: header is truncated")
    _, version, m, n, t, dtype_code, kind_code, pad = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported container version {version}")
    if dtype_code not in _DTYPE_BY_CODE:
        raise FormatError(f"{path}: unknown dtype code {dtype_code}")
    if kind_code not in _SCORE_KIND_BY_CODE:
        raise FormatError(f"{path}: unknown score kind code {kind_code}")
    if pad != b"\x00\x00":
        raise FormatError(f"{path}: nonzero header padding")
    dtype = _DTYPE_BY_CODE[dtype_code]
    np_dtype = _NUMPY_DTYPES[dtype]

    n_scores = m * n * t
    scores_end = _HEADER.size + n_scores * np_dtype.itemsize
    mask_end = scores_end + m * n
    if len(buf) < mask_end + _U32.size:
        raise TruncationError(
            f"{path}: payload holds {len(buf) - _HEADER.size} bytes, dims ({m}, {n}, {t}) need more"
        )
    (json_len,) = _U32.unpack_from(buf, mask_end)
    json_end = mask_end + _U32.size + json_len
    if len(buf) < json_end:
        raise TruncationError(f"{path}: manifest is truncated")
    if len(buf) > json_end:
        raise FormatError(f"{path}: {len(buf) - json_end} trailing bytes after manifest")

    try:
        manifest = DatasetManifest.model_validate_json(buf[mask_end + _U32.size : json_end].decode("utf-8"))
    except (ValidationError, UnicodeDecodeError) as exc:
        raise FormatError(f"{path}: invalid manifest: {exc}") from exc
    if tuple(manifest.dims) != (m, n, t):
        raise FormatError(f"{path}: manifest dims {manifest.dims} disagree with header dims {(m, n, t)}")
    if manifest.dtype != dtype or manifest.score_kind != _SCORE_KIND_BY_CODE[kind_code]:
        raise FormatError(f"{path}: manifest dtype/score_kind disagree with header codes")

    data = np.frombuffer(buf, dtype=np_dtype, count=n_scores, offset=_HEADER.size).reshape(m, n, t)
    tensor = ScoreTensor(data)
    mask = MembershipMask(np.frombuffer(buf, dtype=np.uint8, count=m * n, offset=scores_end).reshape(m, n))
    _warn_membership(mask)
    log.debug("loaded %s with dims %s (%s)", path, tensor.shape, dtype.value)
    return tensor, mask, manifest


_TRAILING_INDEX = re.compile(r"(\d+)$")


def _model_order(path: Path) -> Tuple[int, int, str]:
    """Numbered files by their trailing integer (model_2 before model_10), the rest by name after them."""
    match = _TRAILING_INDEX.search(path.stem)
    if match is None:
        return (1, 0, path.name)
    return (0, int(match.group(1)), path.name)


def load_csv_dir(path: Path) -> Dataset:
    """Read a hand-made fixture: one CSV per model (rows canaries, cols tokens) plus mask.csv."""
    path = Path(path)
    mask_file = path / "mask.csv"
    if not mask_file.exists():
        raise FormatError(f"{path}: CSV fixture directory needs a mask.csv")
    model_files = sorted((p for p in path.glob("*.csv") if p.name != "mask.csv"), key=_model_order)
    if not model_files:
        raise FormatError(f"{path}: no model CSV files found")
    rows = [np.loadtxt(p, delimiter=",", ndmin=2, dtype=np.float64) for p in model_files]
    if len({r.shape for r in rows}) != 1:
        raise DatasetValidationError(f"{path}: model CSV files have differing shapes")
    tensor = ScoreTensor(np.stack(rows))
    mask = MembershipMask(np.loadtxt(mask_file, delimiter=",", ndmin=2, dtype=np.int64))
    mask.check_against(tensor)

    extra = {}
    manifest_file = path / "manifest.json"
    if manifest_file.exists():
        extra = json.loads(manifest_file.read_text(encoding="utf-8"))
        declared = extra.pop("dims", None)
        if declared is not None and tuple(declared) != tensor.shape:
            raise FormatError(f"{path}: manifest dims {declared} disagree with CSV shape {tensor.shape}")
        extra.pop("dtype", None)
    try:
        manifest = make_manifest(tensor, **extra)
    except ValidationError as exc:
        raise FormatError(f"{path}: invalid manifest.json: {exc}") from exc
    _warn_membership(mask)
    return tensor, mask, manifest


def load_any(path: Union[str, Path]) -> Dataset:
    """Load a container file or a CSV fixture directory."""
    path = Path(path)
    if path.is_dir():
        return load_csv_dir(path)
    return load_dataset(path)


def loo_indices(m: int, target_index: int) -> np.ndarray:
    """Shadow model indices for one target, ascending."""
    return np.concatenate([np.arange(target_index), np.arange(target_index + 1, m)])


def split_leave_one_out(
    tensor: ScoreTensor,
    mask: MembershipMask,
    target_index: int,
    shadow_indices: Optional[np.ndarray] = None,
) -> LooSplit:
    """Hold out one model as the attack target; the others become shadow models."""
    m = tensor.M
    if m < 3:
        raise DatasetValidationError(f"leave-one-out needs at least 3 models, got {m}")
    if not 0 <= target_index < m:
        raise IndexError(f"target_index {target_index} out of range for {m} models")
    if shadow_indices is None:
        shadow_indices = loo_indices(m, target_index)
    elif target_index in shadow_indices:
        raise DatasetValidationError("the target model cannot also be a shadow model")

    shadow_mask = mask.mask[shadow_indices]
    in_counts = shadow_mask.sum(axis=0)
    out_counts = len(shadow_indices) - in_counts
    degenerate = (in_counts < 2) | (out_counts < 2)
    if degenerate.any():
        log.debug("target %d: %d canaries with a degenerate split", target_index, int(degenerate.sum()))
    return LooSplit(
        target_index=target_index,
        target_scores=tensor.data[target_index],
        shadow_scores=tensor.data[shadow_indices],
        shadow_mask=shadow_mask,
        target_labels=mask.mask[target_index].copy(),
        shadow_indices=shadow_indices,
        in_counts=in_counts,
        out_counts=out_counts,
        degenerate=degenerate,
    )
