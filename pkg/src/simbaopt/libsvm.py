"""Reader and writer for the LIBSVM sparse text format.

One sample per line: ``label idx:val idx:val ...`` with 1-based, increasing
feature indices. Blank lines and ``#`` comments are skipped.
"""
from __future__ import annotations

import os

import numpy as np

from .linalg import InvalidInputError
from .problems import Dataset

__all__ = ["LibsvmParseError", "parse_libsvm", "write_libsvm"]


class LibsvmParseError(ValueError):
    def __init__(self, lineno, msg):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _parse_line(line, lineno):
    parts = line.split()
    try:
        label = float(parts[0])
    except ValueError:
        raise LibsvmParseError(lineno, f"bad label {parts[0]!r}") from None
    cols, vals = [], []
    last = 0
    for tok in parts[1:]:
        idx, sep, val = tok.partition(":")
        if not sep:
            raise LibsvmParseError(lineno, f"expected idx:val, got {tok!r}")
        try:
            j = int(idx)
            v = float(val)
        except ValueError:
            raise LibsvmParseError(lineno, f"bad entry {tok!r}") from None
        if j < 1:
            raise LibsvmParseError(lineno, f"feature index {j} is not 1-based")
        if j <= last:
            raise LibsvmParseError(lineno, f"feature index {j} is not increasing")
        if not np.isfinite(v):
            raise LibsvmParseError(lineno, f"non-finite value in {tok!r}")
        last = j
        cols.append(j - 1)
        vals.append(v)
    return label, cols, vals


def parse_libsvm(path, n_features=None, binary_remap=True) -> Dataset:
    """Read a LIBSVM file into a dense :class:`Dataset`.

    Binary labels ``{-1, +1}`` become ``{0, 1}`` when ``binary_remap`` is set.
    The feature count is the largest index seen unless ``n_features`` is given.
    """
    labels, rows = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            label, cols, vals = _parse_line(line, lineno)
            labels.append(label)
            rows.append((lineno, cols, vals))
    if not rows:
        raise InvalidInputError(f"{os.fspath(path)}: no samples")

    width = max((c[-1] + 1 for _, c, _ in rows if c), default=0)
    if n_features is not None:
        if width > n_features:
            bad = next(ln for ln, c, _ in rows if c and c[-1] >= n_features)
            raise LibsvmParseError(bad, f"feature index exceeds n_features={n_features}")
        width = n_features
    X = np.zeros((len(rows), width))
    for i, (_, cols, vals) in enumerate(rows):
        X[i, cols] = vals
    y = np.array(labels)
    if binary_remap and set(np.unique(y)) <= {-1.0, 1.0}:
        y = (y > 0).astype(float)
    return Dataset(X, y)


def write_libsvm(data: Dataset, path):
    """Write ``data`` in LIBSVM format; values are written with ``repr`` so they round-trip."""
    with open(path, "w") as fh:
        for x, b in zip(data.features, data.labels):
            nz = np.flatnonzero(x)
            entries = " ".join(f"{j + 1}:{float(x[j])!r}" for j in nz)
            fh.write(f"{float(b)!r} {entries}".rstrip() + "\n")
