"""Readers for external datasets: IDX (MNIST/FashionMNIST layout) and CSV.

IDX layout, all integers big-endian::

    images: [0x00000803][n][rows][cols] then n*rows*cols unsigned bytes
    labels: [0x00000801][n]             then n unsigned bytes

Files ending in ``.gz`` are decompressed transparently.
"""

from __future__ import annotations

import csv
import gzip
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .data import LabeledDataset
from .errors import FormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        return fh.read()


def _header(buf, path, magic, n_dims):
    size = 4 * (1 + n_dims)
    if len(buf) < size:
        raise FormatError(f"truncated header: need {size} bytes, have {len(buf)}", path, len(buf))
    fields = struct.unpack(f">{1 + n_dims}I", buf[:size])
    if fields[0] != magic:
        raise FormatError(f"bad magic 0x{fields[0]:08x}, expected 0x{magic:08x}", path, 0)
    return fields[1:], size


def _payload(buf, path, offset, count):
    if len(buf) < offset + count:
        raise FormatError(
            f"truncated payload: expected {count} bytes, found {len(buf) - offset}",
            path,
            len(buf),
        )
    return np.frombuffer(buf, dtype=np.uint8, count=count, offset=offset)


def load_idx(path_images, path_labels, num_classes: Optional[int] = None) -> LabeledDataset:
    """Parse an IDX image/label pair; pixels are scaled to ``[0, 1]``.

    ``num_classes`` defaults to ``max(label) + 1``.
    """
    img = _read_bytes(path_images)
    lab = _read_bytes(path_labels)
    (n_img, rows, cols), img_off = _header(img, path_images, IDX_IMAGES_MAGIC, 3)
    (n_lab,), lab_off = _header(lab, path_labels, IDX_LABELS_MAGIC, 1)
    if n_img != n_lab:
        raise FormatError(f"{n_img} images but {n_lab} labels", path_labels, 4)
    pixels = _payload(img, path_images, img_off, n_img * rows * cols)
    labels = _payload(lab, path_labels, lab_off, n_lab).astype(np.int64)
    if n_img == 0:
        raise FormatError("file holds zero samples", path_labels, 4)
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    bad = np.flatnonzero(labels >= num_classes)
    if bad.size:
        raise FormatError(
            f"label {labels[bad[0]]} out of range for {num_classes} classes",
            path_labels,
            lab_off + int(bad[0]),
        )
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    return LabeledDataset(features, labels, num_classes)


def write_idx(path_images, path_labels, images, labels):
    """Write uint8 images ``(n, rows, cols)`` and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path_images, "wb") as fh:
        fh.write(struct.pack(">4I", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images.tobytes())
    with open(path_labels, "wb") as fh:
        fh.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.size))
        fh.write(labels.tobytes())


def load_csv(path, num_classes: int, header: bool = False) -> LabeledDataset:
    """Rows are ``label, feature_1, ..., feature_d``; an optional header row is skipped."""
    features, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}", path) from None
            label = values[0]
            if label != int(label) or not 0 <= label < num_classes:
                raise FormatError(f"line {lineno}: label {row[0]!r} not in [0, {num_classes})", path)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise FormatError(f"line {lineno}: {len(values)} columns, expected {width}", path)
            if width < 2:
                raise FormatError(f"line {lineno}: no feature columns", path)
            labels.append(int(label))
            features.append(values[1:])
    if not labels:
        raise FormatError("no data rows", path)
    return LabeledDataset(np.array(features), np.array(labels), num_classes)
