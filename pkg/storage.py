from __future__ import annotations

import csv
import hashlib
import os
import struct
from io import BytesIO, StringIO
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from PIL import Image as PILImage

from errors import ArtifactExistsError, FormatError, MissingInputError
from phantoms.image import Image


"""
Binary containers and tabular files written by the pipeline.

 - weights / measurements: "MPFW" magic, u32 version, u32 tensor count, then per tensor:
   u32 name length, UTF-8 name, u32 rank, rank x u64 dims, raw little-endian f64 payload.
 - images and masks: "MPIMG" magic, u32 version, u64 H, u64 W, little-endian f64 pixels
   in row-major order.
 - PGM exports are linear [0, 1] -> [0, 255] 8-bit greyscale, for eyeballing only.

ArtifactStore wraps these for one run directory: it refuses to overwrite unless created
with force=True and reports every written file to the artifact registry when one is given.
"""


WEIGHTS_MAGIC = b"MPFW"
IMAGE_MAGIC = b"MPIMG"
FORMAT_VERSION = 1


# ===== codecs =====

def encode_weights(tensors: Mapping[str, np.ndarray]) -> bytes:
    chunks = [WEIGHTS_MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, value in tensors.items():
        # np.require keeps rank-0 arrays rank-0
        array = np.require(np.asarray(value, dtype="<f8"), requirements="C")
        encoded_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.tobytes())
    return b"".join(chunks)


def decode_weights(payload: bytes) -> dict[str, np.ndarray]:
    if payload[:4] != WEIGHTS_MAGIC:
        raise FormatError("not an MPFW weight file")
    version, count = struct.unpack_from("<II", payload, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported MPFW version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        name = payload[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", payload, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}Q", payload, offset)
        offset += 8 * rank
        n_bytes = 8 * int(np.prod(dims, dtype=np.int64))
        if offset + n_bytes > len(payload):
            raise FormatError(f"MPFW tensor {name!r} is truncated")
        tensors[name] = np.frombuffer(payload, dtype="<f8", count=n_bytes // 8, offset=offset).reshape(dims).astype(np.float64)
        offset += n_bytes
    return tensors


def encode_image(pixels: np.ndarray) -> bytes:
    array = np.ascontiguousarray(pixels, dtype="<f8")
    if array.ndim != 2:
        raise FormatError(f"MPIMG stores 2-D grids, got shape {array.shape}")
    return IMAGE_MAGIC + struct.pack("<IQQ", FORMAT_VERSION, *array.shape) + array.tobytes()


def decode_image(payload: bytes) -> np.ndarray:
    if payload[:5] != IMAGE_MAGIC:
        raise FormatError("not an MPIMG image file")
    version, h, w = struct.unpack_from("<IQQ", payload, 5)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported MPIMG version {version}")
    offset = 5 + 4 + 16
    if len(payload) - offset != 8 * h * w:
        raise FormatError(f"MPIMG payload size does not match {h}x{w}")
    return np.frombuffer(payload, dtype="<f8", offset=offset).reshape(h, w).astype(np.float64)


def to_pil_grey(pixels: np.ndarray) -> PILImage.Image:
    grey = np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return PILImage.fromarray(grey)  # uint8 2-D -> mode "L"


# ===== readers (no registry involvement) =====

def _read_bytes(path: str | os.PathLike) -> bytes:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing input file: {path}")
    return path.read_bytes()


def read_weights(path: str | os.PathLike) -> dict[str, np.ndarray]:
    return decode_weights(_read_bytes(path))


def read_image(path: str | os.PathLike, modality: str = "target") -> Image:
    return Image(decode_image(_read_bytes(path)), modality)


def read_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(f"missing input file: {path}")
    with open(path, "r", encoding="utf-8", newline="") as file:
        return list(csv.DictReader(file))


class ArtifactStore:
    """
    Writes artifacts under one run directory. Every write goes through _write_bytes,
    which enforces overwrite-only-with-force and records the artifact (path, kind, sha256)
    in the registry when one is attached.
    """

    def __init__(self, root: str | os.PathLike, force: bool = False, registry=None, run_id: int | None = None):
        self.root = Path(root)
        self.force = force
        self.registry = registry
        self.run_id = run_id
        self.written: list[Path] = []

    def path(self, *parts: str) -> Path:
        return self.root.joinpath(*parts)

    def _write_bytes(self, relative: str, payload: bytes, kind: str) -> Path:
        target = self.path(relative)
        if target.exists() and not self.force:
            raise ArtifactExistsError(f"artifact exists (use --force to overwrite): {target}")
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(payload)
        self.written.append(target)
        if self.registry is not None and self.run_id is not None:
            self.registry.record_artifact(self.run_id, str(target), kind, hashlib.sha256(payload).hexdigest())
        return target

    def write_weights(self, relative: str, tensors: Mapping[str, np.ndarray]) -> Path:
        return self._write_bytes(relative, encode_weights(tensors), "weights")

    def write_image(self, relative: str, pixels: np.ndarray, kind: str = "image") -> Path:
        return self._write_bytes(relative, encode_image(pixels), kind)

    def write_text(self, relative: str, text: str, kind: str = "text") -> Path:
        return self._write_bytes(relative, text.encode("utf-8"), kind)

    def write_csv(self, relative: str, fieldnames: Sequence[str], rows: Iterable[Mapping]) -> Path:
        buffer = StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({name: _csv_cell(row.get(name, "")) for name in fieldnames})
        return self._write_bytes(relative, buffer.getvalue().encode("utf-8"), "csv")

    def write_pgm(self, relative: str, pixels: np.ndarray) -> Path:
        buffer = BytesIO()
        to_pil_grey(pixels).save(buffer, format="PPM")
        return self._write_bytes(relative, buffer.getvalue(), "pgm")

    def write_panel(self, relative: str, images: Sequence[np.ndarray], gap: int = 2) -> Path:
        """Side-by-side PGM panel (e.g. truth | baseline | reconstruction | aux)."""
        height = max(image.shape[0] for image in images)
        columns = []
        for image in images:
            column = np.ones((height, image.shape[1]))
            column[:image.shape[0]] = image
            columns.append(column)
            columns.append(np.ones((height, gap)))
        return self.write_pgm(relative, np.concatenate(columns[:-1], axis=1))


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)
