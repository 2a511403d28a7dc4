"""UBND bundle container.

A bundle binds one image's Monte-Carlo dropout evidence (T stochastic
softmax passes), an optional ground-truth label raster, and an optional
source image into a single binary file that moves between the exporter,
the batch CLI, and the review service.

File layout (UBND version 1), in order:

  1. magic bytes ``UBND1\\n``
  2. unsigned 32-bit little-endian header length
  3. UTF-8 JSON header (version, image_id, t, c, h, w, class_names,
     background_index, has_label, has_source_image, prob_dtype,
     payload_crc32, optional meta)
  4. probability payload: T*C*H*W float32 LE, t-major then c, h, w
  5. if has_label: H*W unsigned bytes, row-major
  6. if has_source_image: H*W*3 unsigned bytes, row-major RGB

The header's ``payload_crc32`` is a CRC32 over sections 4-6 concatenated;
any single corrupted payload byte is detected on read.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

MAGIC = b"UBND1\n"
FORMAT_VERSION = 1
PROB_DTYPE = "f32le"
PROB_SUM_TOLERANCE = 1e-4

_REQUIRED_HEADER_KEYS = (
    "version",
    "image_id",
    "t",
    "c",
    "h",
    "w",
    "class_names",
    "background_index",
    "has_label",
    "has_source_image",
    "prob_dtype",
    "payload_crc32",
)

# Cap on per-field violation messages so a garbage payload does not
# produce a report with one line per pixel.
_MAX_REPORTED = 5


class BundleError(Exception):
    """Base class for every bundle read/write/validation failure."""


class BadMagicError(BundleError):
    """Stream does not start with the UBND magic bytes."""


class UnsupportedVersionError(BundleError):
    """Header declares a format version this reader does not support."""


class TruncatedPayloadError(BundleError):
    """Stream ended before the declared payload was complete."""


class ChecksumMismatchError(BundleError):
    """Payload CRC32 does not match the header checksum."""


class HeaderError(BundleError):
    """Header is not valid JSON or is missing/mistyping required keys."""


class BundleValidationError(BundleError):
    """One or more bundle invariants are violated.

    ``violations`` holds one human-readable entry per violated invariant,
    naming the offending field and index.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class ClassSpec:
    """Class layout of a segmentation problem: C names plus which index
    plays the role of background."""

    num_classes: int
    class_names: tuple[str, ...]
    background_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        problems = self.violations()
        if problems:
            raise BundleValidationError(problems)

    def violations(self) -> list[str]:
        out = []
        if self.num_classes < 2:
            out.append(f"class_spec: num_classes {self.num_classes} < 2")
        if self.num_classes > 255:
            out.append(
                f"class_spec: num_classes {self.num_classes} > 255 "
                "(labels are stored as unsigned bytes)"
            )
        if len(self.class_names) != self.num_classes:
            out.append(
                f"class_spec: {len(self.class_names)} class_names for "
                f"num_classes {self.num_classes}"
            )
        for i, name in enumerate(self.class_names):
            if not isinstance(name, str) or not name:
                out.append(f"class_spec: class_names[{i}] is empty")
        if len(set(self.class_names)) != len(self.class_names):
            out.append("class_spec: class_names are not distinct")
        if not 0 <= self.background_index < self.num_classes:
            out.append(
                f"class_spec: background_index {self.background_index} "
                f"not in [0, {self.num_classes})"
            )
        return out


@dataclass
class ProbabilityStack:
    """T stochastic softmax passes over an H x W image with C classes.

    Values are canonically float32 (the on-disk dtype); every pass is a
    per-pixel distribution over classes, summing to 1 within
    ``PROB_SUM_TOLERANCE``.
    """

    values: np.ndarray  # (T, C, H, W) float32

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 4:
            raise BundleValidationError(
                [f"probabilities: expected 4 dims (T,C,H,W), got shape {arr.shape}"]
            )
        t, c, h, w = arr.shape
        if t < 1 or c < 2 or h < 1 or w < 1:
            raise BundleValidationError(
                [f"probabilities: illegal dims T={t} C={c} H={h} W={w}"]
            )
        self.values = arr

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.values.shape

    def violations(self) -> list[str]:
        out = []
        vals = self.values
        finite = np.isfinite(vals)
        if not finite.all():
            for idx in np.argwhere(~finite)[:_MAX_REPORTED]:
                out.append(f"probabilities: non-finite value at (t,c,h,w)={tuple(idx)}")
        in_range = (vals >= 0.0) & (vals <= 1.0)
        bad_range = finite & ~in_range
        if bad_range.any():
            for idx in np.argwhere(bad_range)[:_MAX_REPORTED]:
                out.append(
                    f"probabilities: value {vals[tuple(idx)]!r} outside [0,1] "
                    f"at (t,c,h,w)={tuple(idx)}"
                )
        if not out:
            sums = vals.astype(np.float64).sum(axis=1)  # (T, H, W)
            off = np.abs(sums - 1.0) > PROB_SUM_TOLERANCE
            if off.any():
                for idx in np.argwhere(off)[:_MAX_REPORTED]:
                    t, h, w = (int(v) for v in idx)
                    out.append(
                        f"probabilities: class sum {sums[t, h, w]:.6f} at pass {t} "
                        f"pixel ({h},{w}) outside {PROB_SUM_TOLERANCE} of 1"
                    )
        return out

    def __eq__(self, other):
        if not isinstance(other, ProbabilityStack):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass
class LabelMap:
    """H x W raster of ground-truth class indices."""

    values: np.ndarray  # (H, W) uint8

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise BundleValidationError(
                [f"label: expected 2 dims (H,W), got shape {arr.shape}"]
            )
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise BundleValidationError(["label: values do not fit in uint8"])
            arr = arr.astype(np.uint8)
        self.values = arr

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, LabelMap):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass
class Bundle:
    """One image's worth of evidence: probability stack plus optional
    label and source imagery, keyed by ``image_id``."""

    image_id: str
    class_spec: ClassSpec
    probabilities: ProbabilityStack
    label: LabelMap | None = None
    source_image: np.ndarray | None = None  # (H, W, 3) uint8
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.source_image is not None:
            self.source_image = np.asarray(self.source_image, dtype=np.uint8)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        """(T, C, H, W)."""
        return self.probabilities.shape

    def violations(self) -> list[str]:
        out = []
        if not self.image_id:
            out.append("image_id: empty")
        out.extend(self.class_spec.violations())
        t, c, h, w = self.dims
        if c != self.class_spec.num_classes:
            out.append(
                f"probabilities: C={c} does not match class_spec.num_classes="
                f"{self.class_spec.num_classes}"
            )
        out.extend(self.probabilities.violations())
        if self.label is not None:
            if self.label.shape != (h, w):
                out.append(
                    f"label: shape {self.label.shape} does not match "
                    f"probabilities (H,W)=({h},{w})"
                )
            else:
                too_big = self.label.values >= self.class_spec.num_classes
                if too_big.any():
                    for idx in np.argwhere(too_big)[:_MAX_REPORTED]:
                        hh, ww = (int(v) for v in idx)
                        out.append(
                            f"label: value {int(self.label.values[hh, ww])} at "
                            f"({hh},{ww}) >= num_classes {self.class_spec.num_classes}"
                        )
        if self.source_image is not None and self.source_image.shape != (h, w, 3):
            out.append(
                f"source_image: shape {self.source_image.shape} is not ({h},{w},3)"
            )
        for k, v in self.meta.items():
            if not isinstance(k, str) or not isinstance(v, str):
                out.append(f"meta: entry {k!r} is not a string->string pair")
        return out

    def validate(self) -> None:
        problems = self.violations()
        if problems:
            raise BundleValidationError(problems)

    def __eq__(self, other):
        if not isinstance(other, Bundle):
            return NotImplemented
        if self.source_image is None or other.source_image is None:
            same_src = self.source_image is None and other.source_image is None
        else:
            same_src = np.array_equal(self.source_image, other.source_image)
        return (
            self.image_id == other.image_id
            and self.class_spec == other.class_spec
            and self.probabilities == other.probabilities
            and self.label == other.label
            and same_src
            and self.meta == other.meta
        )


@dataclass
class ValidationReport:
    """Result of :func:`validate_bundle`: empty iff the stream reads cleanly."""

    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def _payload_bytes(bundle: Bundle) -> tuple[bytes, bytes, bytes]:
    prob = np.ascontiguousarray(bundle.probabilities.values, dtype="<f4").tobytes()
    label = b"" if bundle.label is None else bundle.label.values.tobytes()
    src = b"" if bundle.source_image is None else bundle.source_image.tobytes()
    return prob, label, src


def write_bundle(bundle: Bundle, sink: BinaryIO) -> int:
    """Serialize a validated bundle to ``sink``; returns bytes written.

    Serialization is canonical (sorted, compact header JSON) so that
    write -> read -> write is byte-identical.
    """
    bundle.validate()
    prob, label, src = _payload_bytes(bundle)
    crc = zlib.crc32(prob)
    crc = zlib.crc32(label, crc)
    crc = zlib.crc32(src, crc)
    t, c, h, w = bundle.dims
    header = {
        "version": FORMAT_VERSION,
        "image_id": bundle.image_id,
        "t": t,
        "c": c,
        "h": h,
        "w": w,
        "class_names": list(bundle.class_spec.class_names),
        "background_index": bundle.class_spec.background_index,
        "has_label": bundle.label is not None,
        "has_source_image": bundle.source_image is not None,
        "prob_dtype": PROB_DTYPE,
        "payload_crc32": crc,
    }
    if bundle.meta:
        header["meta"] = dict(sorted(bundle.meta.items()))
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )
    written = 0
    for chunk in (MAGIC, struct.pack("<I", len(header_bytes)), header_bytes, prob, label, src):
        sink.write(chunk)
        written += len(chunk)
    return written


def _read_exact(source: BinaryIO, n: int, what: str) -> bytes:
    data = source.read(n)
    if data is None or len(data) != n:
        got = 0 if data is None else len(data)
        raise TruncatedPayloadError(f"expected {n} bytes of {what}, got {got}")
    return data


def _parse_header(raw: bytes) -> dict:
    try:
        header = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"header is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise HeaderError("header is not a JSON object")
    missing = [k for k in _REQUIRED_HEADER_KEYS if k not in header]
    if missing:
        raise HeaderError(f"header missing required keys: {', '.join(missing)}")
    if header["version"] != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"unsupported bundle version {header['version']!r}, expected {FORMAT_VERSION}"
        )
    if header["prob_dtype"] != PROB_DTYPE:
        raise HeaderError(f"unsupported prob_dtype {header['prob_dtype']!r}")
    for key in ("t", "c", "h", "w"):
        if not isinstance(header[key], int) or header[key] < 1:
            raise HeaderError(f"header field {key!r} must be a positive integer")
    if header["c"] < 2:
        raise HeaderError("header field 'c' must be >= 2")
    meta = header.get("meta", {})
    if not isinstance(meta, dict):
        raise HeaderError("header field 'meta' must be an object")
    return header


def read_bundle(source: BinaryIO) -> Bundle:
    """Parse and fully validate one bundle from ``source``.

    Never returns a bundle violating invariants; raises a distinct error
    for bad magic, version mismatch, truncation, checksum mismatch, and
    invariant violations.
    """
    magic = source.read(len(MAGIC))
    if magic is None or len(magic) < len(MAGIC) or magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (header_len,) = struct.unpack("<I", _read_exact(source, 4, "header length"))
    header = _parse_header(_read_exact(source, header_len, "header"))

    t, c, h, w = header["t"], header["c"], header["h"], header["w"]
    prob_bytes = _read_exact(source, t * c * h * w * 4, "probability payload")
    label_bytes = (
        _read_exact(source, h * w, "label payload") if header["has_label"] else b""
    )
    src_bytes = (
        _read_exact(source, h * w * 3, "source image payload")
        if header["has_source_image"]
        else b""
    )

    crc = zlib.crc32(prob_bytes)
    crc = zlib.crc32(label_bytes, crc)
    crc = zlib.crc32(src_bytes, crc)
    if crc != header["payload_crc32"]:
        raise ChecksumMismatchError(
            f"payload CRC32 {crc:#010x} does not match header "
            f"{header['payload_crc32']:#010x}"
        )

    probabilities = ProbabilityStack(
        np.frombuffer(prob_bytes, dtype="<f4").reshape(t, c, h, w).copy()
    )
    label = (
        LabelMap(np.frombuffer(label_bytes, dtype=np.uint8).reshape(h, w).copy())
        if header["has_label"]
        else None
    )
    source_image = (
        np.frombuffer(src_bytes, dtype=np.uint8).reshape(h, w, 3).copy()
        if header["has_source_image"]
        else None
    )
    try:
        class_spec = ClassSpec(
            num_classes=c,
            class_names=tuple(str(n) for n in header["class_names"]),
            background_index=int(header["background_index"]),
        )
    except BundleValidationError:
        raise
    bundle = Bundle(
        image_id=str(header["image_id"]),
        class_spec=class_spec,
        probabilities=probabilities,
        label=label,
        source_image=source_image,
        meta={str(k): str(v) for k, v in header.get("meta", {}).items()},
    )
    bundle.validate()
    return bundle


def validate_bundle(source: BinaryIO) -> ValidationReport:
    """Collect every invariant violation readable from ``source``.

    The report is empty exactly when :func:`read_bundle` would succeed.
    """
    try:
        read_bundle(source)
    except BundleValidationError as exc:
        return ValidationReport(list(exc.violations))
    except BundleError as exc:
        return ValidationReport([f"{type(exc).__name__}: {exc}"])
    return ValidationReport([])
