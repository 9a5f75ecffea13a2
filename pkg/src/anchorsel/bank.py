"""Persistent anchor banks with exponential-moving-average updates.

A bank holds one domain's anchors as a V x D matrix plus per-anchor update
counters. Updating with a feature vector moves only the nearest anchor,
to ``alpha * anchor + (1 - alpha) * feature``; with the default
alpha = 0.999 the bank drifts smoothly instead of being re-clustered,
which keeps anchor identities stable across an epoch.

Bank file layout (little-endian)::

    bytes 0-7   magic "ANCHBANK"
    u16         format version (currently 1)
    u8          domain tag: 0 = source, 1 = target_warmup, 2 = target
    f32         alpha
    u32         V (anchor count), u32 D (anchor width)
    f32 x V*D   anchors, row-major
    u32 x V     update counters
    u32 + json  creation metadata (length-prefixed UTF-8 JSON)

Anchors are kept in float64 in memory for numerical fidelity of long EMA
chains and stored as f32 on disk; a bank that has been through one
save/load cycle round-trips bit-exactly thereafter.

Concurrency: ``ema_update`` mutates the bank and needs exclusive access;
``nearest`` is safe for concurrent readers between updates.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import ImageVector
from .clustering import Clustering
from .errors import BadMagic, InvalidValue, IoFailure, ShapeMismatch, TruncatedPayload, VersionMismatch

BANK_MAGIC = b"ANCHBANK"
BANK_VERSION = 1

_DOMAIN_TAGS = ("source", "target_warmup", "target")


@dataclass
class AnchorBank:
    domain_tag: str
    anchors: np.ndarray  # V x D float64
    alpha: float
    update_count: np.ndarray = field(default=None)  # V uint32
    created_from: dict | None = None

    def __post_init__(self):
        if self.domain_tag not in _DOMAIN_TAGS:
            raise InvalidValue(f"domain_tag {self.domain_tag!r} not in {_DOMAIN_TAGS}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidValue(f"alpha is {self.alpha}, must be in [0, 1]")
        self.anchors = np.asarray(self.anchors, dtype=np.float64)
        if self.anchors.ndim != 2 or self.anchors.shape[0] < 1:
            raise InvalidValue(f"anchors must be a V x D matrix with V >= 1, got {self.anchors.shape}")
        if not np.all(np.isfinite(self.anchors)):
            raise InvalidValue("anchors contain non-finite values")
        if self.update_count is None:
            self.update_count = np.zeros(self.anchors.shape[0], dtype=np.uint32)
        else:
            self.update_count = np.asarray(self.update_count, dtype=np.uint32)

    @property
    def num_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def width(self) -> int:
        return self.anchors.shape[1]


def init_from_clustering(clustering: Clustering, domain_tag: str, alpha: float) -> AnchorBank:
    """Bank whose anchors are a clustering's centroids, counters zeroed."""
    meta = None
    if clustering.config is not None:
        meta = {
            "seed": clustering.config.seed,
            "K": clustering.config.K,
            "tol": clustering.config.tol,
            "normalize": clustering.config.normalize,
            "sse": clustering.sse,
            "iterations_run": clustering.iterations_run,
        }
    return AnchorBank(
        domain_tag=domain_tag,
        anchors=clustering.anchors.copy(),
        alpha=alpha,
        created_from=meta,
    )


def _as_vector(feature) -> np.ndarray:
    if isinstance(feature, ImageVector):
        return feature.values
    return np.asarray(feature, dtype=np.float64)


def nearest(bank: AnchorBank, feature) -> tuple[int, float]:
    """Index of the nearest anchor (ties to the smallest index) and squared distance."""
    vec = _as_vector(feature)
    if vec.shape != (bank.width,):
        raise ShapeMismatch(f"feature has shape {vec.shape}, bank width is {bank.width}")
    sq = ((bank.anchors - vec) ** 2).sum(axis=1)
    idx = int(sq.argmin())
    return idx, float(sq[idx])


def ema_update(bank: AnchorBank, feature) -> int:
    """Pull the nearest anchor toward the feature; returns the anchor index.

    Only that anchor changes, its counter increments, and the new value is
    the convex combination alpha * old + (1 - alpha) * feature.
    """
    vec = _as_vector(feature)
    idx, _ = nearest(bank, vec)
    bank.anchors[idx] = bank.alpha * bank.anchors[idx] + (1.0 - bank.alpha) * vec
    bank.update_count[idx] += 1
    return idx


def save_bank(bank: AnchorBank, path) -> None:
    path = Path(path)
    meta = json.dumps(bank.created_from or {}, sort_keys=True).encode("utf-8")
    blob = bytearray(BANK_MAGIC)
    blob += struct.pack("<HBf", BANK_VERSION, _DOMAIN_TAGS.index(bank.domain_tag), bank.alpha)
    blob += struct.pack("<II", bank.num_anchors, bank.width)
    blob += np.ascontiguousarray(bank.anchors, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(bank.update_count, dtype="<u4").tobytes()
    blob += struct.pack("<I", len(meta)) + meta
    try:
        path.write_bytes(bytes(blob))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_bank(path) -> AnchorBank:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    if len(raw) < 8:
        raise TruncatedPayload(f"{path}: file shorter than the magic field")
    if raw[:8] != BANK_MAGIC:
        raise BadMagic(f"{path}: magic is {raw[:8]!r}, expected {BANK_MAGIC!r}")
    if len(raw) < 23:
        raise TruncatedPayload(f"{path}: header needs 23 bytes, file has {len(raw)}")

    version, tag_code, alpha = struct.unpack_from("<HBf", raw, 8)
    if version != BANK_VERSION:
        raise VersionMismatch(f"{path}: version is {version}, expected {BANK_VERSION}")
    if tag_code >= len(_DOMAIN_TAGS):
        raise InvalidValue(f"{path}: domain_tag byte is {tag_code}")
    v, d = struct.unpack_from("<II", raw, 15)
    offset = 23

    need = v * d * 4
    if len(raw) < offset + need:
        raise TruncatedPayload(f"{path}: anchors need {need} bytes at offset {offset}")
    anchors = np.frombuffer(raw, dtype="<f4", count=v * d, offset=offset).reshape(v, d)
    offset += need

    if len(raw) < offset + v * 4:
        raise TruncatedPayload(f"{path}: counters need {v * 4} bytes at offset {offset}")
    counters = np.frombuffer(raw, dtype="<u4", count=v, offset=offset).copy()
    offset += v * 4

    if len(raw) < offset + 4:
        raise TruncatedPayload(f"{path}: metadata length field missing at offset {offset}")
    (meta_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if len(raw) < offset + meta_len:
        raise TruncatedPayload(f"{path}: metadata needs {meta_len} bytes at offset {offset}")
    meta = json.loads(raw[offset:offset + meta_len].decode("utf-8"))

    return AnchorBank(
        domain_tag=_DOMAIN_TAGS[tag_code],
        anchors=anchors.astype(np.float64),
        alpha=float(np.float32(alpha)),
        update_count=counters,
        created_from=meta or None,
    )


def bank_fingerprint(bank: AnchorBank) -> str:
    """Short content hash used to tie reports to the banks that produced them."""
    h = hashlib.sha256()
    h.update(bank.domain_tag.encode())
    h.update(np.ascontiguousarray(bank.anchors, dtype="<f8").tobytes())
    h.update(np.float64(bank.alpha).tobytes())
    return h.hexdigest()[:16]
