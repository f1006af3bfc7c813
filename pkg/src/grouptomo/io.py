"""Serialization: matrix JSON documents and measurement-record CSV files.

Matrix JSON form: ``{"dim": n, "re": [[...]], "im": [[...]]}`` row-major.
Floats are emitted with Python's shortest round-trip repr, so reading a
written file reproduces every finite double bit-exactly.

Record CSV files carry one scheme per file.  Columns by scheme:

    spin-sphere      scheme,theta,phi,m,count
    spin-finite      scheme,label_index,m,count
    homodyne         scheme,phi,x,count
    displaced-count  scheme,alpha_re,alpha_im,n,count
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .validation import ValidationError, as_operator

__all__ = [
    "matrix_to_json_dict",
    "matrix_from_json_dict",
    "write_matrix_json",
    "read_matrix_json",
    "RECORD_COLUMNS",
    "RecordBatch",
    "write_records_csv",
    "read_records_csv",
]


def matrix_to_json_dict(m) -> dict:
    a = as_operator(m, "matrix")
    return {
        "dim": a.shape[0],
        "re": a.real.tolist(),
        "im": a.imag.tolist(),
    }


def matrix_from_json_dict(d: dict) -> np.ndarray:
    try:
        dim = int(d["dim"])
        re = np.asarray(d["re"], dtype=np.float64)
        im = np.asarray(d["im"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix document: {exc}") from exc
    if re.shape != (dim, dim) or im.shape != (dim, dim):
        raise ValidationError(
            f"matrix document shape mismatch: dim={dim}, re{re.shape}, im{im.shape}")
    return as_operator(re + 1j * im, "matrix")


def write_matrix_json(path, m) -> None:
    doc = matrix_to_json_dict(m)
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def read_matrix_json(path) -> np.ndarray:
    return matrix_from_json_dict(json.loads(Path(path).read_text()))


# setting columns per scheme; the outcome column is last
RECORD_COLUMNS = {
    "spin-sphere": ("theta", "phi", "m"),
    "spin-finite": ("label_index", "m"),
    "homodyne": ("phi", "x"),
    "displaced-count": ("alpha_re", "alpha_im", "n"),
}


@dataclass
class RecordBatch:
    """Measurement records for one scheme.

    ``columns`` holds the setting and outcome values row by row (float64,
    shape (n, k) per RECORD_COLUMNS); ``counts`` the nonnegative
    multiplicity of each row.
    """

    scheme: str
    columns: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if self.scheme not in RECORD_COLUMNS:
            raise ValidationError(f"unknown record scheme {self.scheme!r}")
        self.columns = np.asarray(self.columns, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.float64).ravel()
        want = len(RECORD_COLUMNS[self.scheme])
        if self.columns.ndim != 2 or self.columns.shape[1] != want:
            raise ValidationError(
                f"{self.scheme} records need {want} columns, got shape {self.columns.shape}")
        if self.columns.shape[0] != self.counts.shape[0]:
            raise ValidationError("record rows and counts disagree in length")
        if not np.all(np.isfinite(self.columns)) or not np.all(np.isfinite(self.counts)):
            raise ValidationError("records contain non-finite values")
        if np.any(self.counts < 0):
            raise ValidationError("record counts must be nonnegative")

    def __len__(self) -> int:
        return self.columns.shape[0]

    @property
    def total_count(self) -> float:
        return float(self.counts.sum())


def write_records_csv(path, batch: RecordBatch) -> None:
    names = RECORD_COLUMNS[batch.scheme]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("scheme",) + names + ("count",))
        for row, count in zip(batch.columns, batch.counts):
            writer.writerow([batch.scheme] + [repr(float(v)) for v in row]
                            + [repr(float(count))])


def read_records_csv(path) -> RecordBatch:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"records file {path} is empty") from None
        rows = list(reader)
    if not rows:
        raise ValidationError(f"records file {path} holds no records")
    schemes = {row[0] for row in rows}
    if len(schemes) != 1:
        raise ValidationError(f"records file mixes schemes: {sorted(schemes)}")
    scheme = rows[0][0]
    if scheme not in RECORD_COLUMNS:
        raise ValidationError(f"unknown record scheme {scheme!r}")
    names = RECORD_COLUMNS[scheme]
    expected_header = ["scheme", *names, "count"]
    if [h.strip() for h in header] != expected_header:
        raise ValidationError(
            f"records header {header} does not match {expected_header}")
    try:
        columns = np.array([[float(v) for v in row[1:-1]] for row in rows])
        counts = np.array([float(row[-1]) for row in rows])
    except (ValueError, IndexError) as exc:
        raise ValidationError(f"malformed record row: {exc}") from exc
    return RecordBatch(scheme, columns, counts)
