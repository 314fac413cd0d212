"""Dataset container and the CSV exchange format.

CSV layout: a header row with columns ``x1..xd``, ``y``, an optional
``label`` column and an optional constant ``trials`` column.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exp_family import Family


class DataError(ValueError):
    """Malformed data file or data inconsistent with the model family."""


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    labels: np.ndarray | None = None
    trials: int | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DataError(f"X has shape {X.shape} but y has shape {y.shape}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != y.shape:
                raise DataError("labels length differs from y")
            object.__setattr__(self, "labels", labels.astype(int))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def check_family(self, family: Family) -> None:
        """Raise ``DataError`` naming the first row outside the family support."""
        if family.kind == "binomial" and self.trials is not None and self.trials != family.trials:
            raise DataError(f"data has {self.trials} trials but family expects {family.trials}")
        try:
            family.check_support(self.y)
        except ValueError as exc:
            raise DataError(str(exc)) from None


_XCOL = re.compile(r"^x(\d+)$")


def read_csv(path, label_column: str | None = "label") -> Dataset:
    """Read a dataset CSV.

    ``label_column`` names the optional true-label column; labels are None
    when the column is absent.  NaN or infinite cells are rejected with
    their row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    xcols = sorted(
        ((int(m.group(1)), i) for i, h in enumerate(header) if (m := _XCOL.match(h))),
    )
    if not xcols or [k for k, _ in xcols] != list(range(1, len(xcols) + 1)):
        raise DataError(f"{path}: expected covariate columns x1..xd, got {header}")
    if "y" not in header:
        raise DataError(f"{path}: missing 'y' column")
    values = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column {header[c]!r}: cannot parse {cell!r}") from None
            if not np.isfinite(v):
                raise DataError(f"{path}: row {r}, column {header[c]!r}: non-finite value {cell!r}")
            values[r - 1, c] = v
    if len(body) == 0:
        raise DataError(f"{path}: no data rows")
    X = values[:, [i for _, i in xcols]]
    y = values[:, header.index("y")]
    labels = None
    if label_column is not None and label_column in header:
        lab = values[:, header.index(label_column)]
        if np.any(lab != np.round(lab)):
            raise DataError(f"{path}: label column {label_column!r} must hold integers")
        labels = lab.astype(int)
    trials = None
    if "trials" in header:
        t = values[:, header.index("trials")]
        if np.any(t != t[0]) or t[0] < 1 or t[0] != round(t[0]):
            raise DataError(f"{path}: 'trials' must be a constant positive integer column")
        trials = int(t[0])
    return Dataset(X, y, labels, trials)


def has_column(path, name: str) -> bool:
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), [])
    return name in [h.strip() for h in header]


def _fmt(v: float) -> str:
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(float(v))


def to_csv_text(data: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"x{j + 1}" for j in range(data.d)] + ["y"]
    if data.labels is not None:
        header.append("label")
    if data.trials is not None:
        header.append("trials")
    writer.writerow(header)
    for n in range(data.n):
        row = [repr(float(v)) for v in data.X[n]] + [_fmt(data.y[n])]
        if data.labels is not None:
            row.append(str(int(data.labels[n])))
        if data.trials is not None:
            row.append(str(data.trials))
        writer.writerow(row)
    return buf.getvalue()


def write_csv(data: Dataset, path) -> None:
    Path(path).write_text(to_csv_text(data), encoding="utf-8")
