"""On-disk artifacts: dense tensor files and JSON manifests.

Tensor file layout (little-endian throughout)::

    bytes 0-7    magic "ANCHTNSR"
    byte  8      dtype: 0 = f32, 1 = u16
    byte  9      rank (at most 4)
    bytes 10..   rank u32 extents, each >= 1
    payload      row-major values

The payload offset is therefore ``10 + 4 * rank``. Label maps use u16 with
65535 reserved as the ignore value; features and probabilities use f32.

Manifests are UTF-8 JSON files listing samples and the tensors backing
them; all paths resolve relative to the manifest's directory. Reads are
pure and safe to run concurrently; concurrent writes to one path are not
supported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimOverflow,
    DuplicateId,
    InvalidValue,
    IoFailure,
    MissingField,
    TruncatedPayload,
    UnresolvablePath,
)

TENSOR_MAGIC = b"ANCHTNSR"
MAX_RANK = 4
IGNORE_LABEL = 65535

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<u2")}


def _header_size(rank: int) -> int:
    return 10 + 4 * rank


def read_tensor(path) -> np.ndarray:
    """Read a tensor file, returning a float32 or uint16 array."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(raw) < 10:
        raise TruncatedPayload(f"{path}: header needs 10 bytes, file has {len(raw)}")
    if raw[:8] != TENSOR_MAGIC:
        raise BadMagic(f"{path}: magic is {raw[:8]!r}, expected {TENSOR_MAGIC!r}")

    dtype_code = raw[8]
    if dtype_code not in _DTYPE_CODES:
        raise InvalidValue(f"{path}: dtype byte is {dtype_code}, expected 0 (f32) or 1 (u16)")
    dtype = _DTYPE_CODES[dtype_code]

    rank = raw[9]
    if not 1 <= rank <= MAX_RANK:
        raise DimOverflow(f"{path}: rank is {rank}, must be in [1, {MAX_RANK}]")

    offset = _header_size(rank)
    if len(raw) < offset:
        raise TruncatedPayload(f"{path}: dims need {offset} bytes, file has {len(raw)}")
    dims = np.frombuffer(raw, dtype="<u4", count=rank, offset=10)
    for axis, extent in enumerate(dims):
        if extent < 1:
            raise DimOverflow(f"{path}: dims[{axis}] is {extent}, must be >= 1")

    expected = int(np.prod(dims.astype(np.int64))) * dtype.itemsize
    payload = raw[offset:]
    if len(payload) != expected:
        raise TruncatedPayload(
            f"{path}: payload is {len(payload)} bytes, dims {tuple(int(d) for d in dims)} "
            f"require {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(tuple(int(d) for d in dims)).copy()


def write_tensor(path, tensor: np.ndarray) -> None:
    """Write an array as a tensor file; floats become f32, integers u16."""
    tensor = np.asarray(tensor)
    if tensor.ndim < 1 or tensor.ndim > MAX_RANK:
        raise DimOverflow(f"rank is {tensor.ndim}, must be in [1, {MAX_RANK}]")
    for axis, extent in enumerate(tensor.shape):
        if extent < 1:
            raise DimOverflow(f"dims[{axis}] is {extent}, must be >= 1")

    if np.issubdtype(tensor.dtype, np.floating):
        payload = np.ascontiguousarray(tensor, dtype="<f4")
        dtype_code = 0
    elif np.issubdtype(tensor.dtype, np.integer) or tensor.dtype == np.bool_:
        as_int = tensor.astype(np.int64)
        if as_int.min() < 0 or as_int.max() > IGNORE_LABEL:
            raise InvalidValue(
                f"integer values must fit u16 [0, {IGNORE_LABEL}], got range "
                f"[{as_int.min()}, {as_int.max()}]"
            )
        payload = np.ascontiguousarray(as_int, dtype="<u2")
        dtype_code = 1
    else:
        raise InvalidValue(f"unsupported dtype {tensor.dtype}")

    header = bytearray(TENSOR_MAGIC)
    header.append(dtype_code)
    header.append(tensor.ndim)
    header.extend(np.asarray(tensor.shape, dtype="<u4").tobytes())
    try:
        Path(path).write_bytes(bytes(header) + payload.tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


@dataclass(frozen=True)
class ManifestSample:
    id: str
    feature_path: Path
    label_path: Path | None = None
    prediction_path: Path | None = None
    probability_path: Path | None = None
    discriminator_score: float | None = None


@dataclass(frozen=True)
class Manifest:
    schema_version: int
    samples: tuple[ManifestSample, ...]
    num_categories: int
    feature_channels: int
    root: Path = field(default_factory=Path)

    def sample_by_id(self, sample_id: str) -> ManifestSample:
        for sample in self.samples:
            if sample.id == sample_id:
                return sample
        raise KeyError(sample_id)


_REQUIRED_TOP = ("schema_version", "samples", "num_categories", "feature_channels")
_PATH_FIELDS = ("feature_path", "label_path", "prediction_path", "probability_path")


def load_manifest(path) -> Manifest:
    """Load and validate a manifest; referenced files must exist."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidValue(f"{path}: not valid JSON: {exc}") from exc

    for key in _REQUIRED_TOP:
        if key not in data:
            raise MissingField(f"{path}: manifest field {key!r} is missing")

    num_categories = int(data["num_categories"])
    if num_categories < 2:
        raise InvalidValue(f"{path}: num_categories is {num_categories}, must be >= 2")
    feature_channels = int(data["feature_channels"])
    if feature_channels < 1:
        raise InvalidValue(f"{path}: feature_channels is {feature_channels}, must be >= 1")

    root = path.parent
    samples = []
    seen: set[str] = set()
    for index, entry in enumerate(data["samples"]):
        if "id" not in entry:
            raise MissingField(f"{path}: samples[{index}] has no 'id'")
        sample_id = str(entry["id"])
        if sample_id in seen:
            raise DuplicateId(f"{path}: sample id {sample_id!r} appears more than once")
        seen.add(sample_id)
        if "feature_path" not in entry:
            raise MissingField(f"{path}: sample {sample_id!r} has no 'feature_path'")

        resolved: dict[str, Path | None] = {}
        for field_name in _PATH_FIELDS:
            value = entry.get(field_name)
            if value is None:
                resolved[field_name] = None
                continue
            candidate = (root / value).resolve()
            if not candidate.is_file():
                raise UnresolvablePath(
                    f"{path}: sample {sample_id!r} {field_name} -> {value!r} does not exist"
                )
            resolved[field_name] = candidate

        score = entry.get("discriminator_score")
        if score is not None:
            score = float(score)
            if not 0.0 <= score <= 1.0:
                raise InvalidValue(
                    f"{path}: sample {sample_id!r} discriminator_score is {score}, "
                    f"must be in [0, 1]"
                )

        samples.append(
            ManifestSample(
                id=sample_id,
                feature_path=resolved["feature_path"],
                label_path=resolved["label_path"],
                prediction_path=resolved["prediction_path"],
                probability_path=resolved["probability_path"],
                discriminator_score=score,
            )
        )

    return Manifest(
        schema_version=int(data["schema_version"]),
        samples=tuple(samples),
        num_categories=num_categories,
        feature_channels=feature_channels,
        root=root,
    )


def save_manifest(manifest: Manifest, path) -> None:
    """Write a manifest back to JSON with paths relative to its new location."""
    path = Path(path)
    root = path.parent.resolve()
    entries = []
    for sample in manifest.samples:
        entry: dict = {"id": sample.id}
        for field_name in _PATH_FIELDS:
            value = getattr(sample, field_name)
            if value is not None:
                try:
                    entry[field_name] = str(Path(value).resolve().relative_to(root))
                except ValueError:
                    entry[field_name] = str(Path(value).resolve())
        if sample.discriminator_score is not None:
            entry["discriminator_score"] = sample.discriminator_score
        entries.append(entry)
    payload = {
        "schema_version": manifest.schema_version,
        "samples": entries,
        "num_categories": manifest.num_categories,
        "feature_channels": manifest.feature_channels,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
