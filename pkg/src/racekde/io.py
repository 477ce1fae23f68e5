"""Dataset readers and evaluation CSV output.

Two text formats are supported:

* dense  -- one vector per line, whitespace-separated decimal reals.
  Blank lines and lines starting with '#' are skipped.
* sparse -- per line, an optional leading label token (discarded) followed
  by index:value pairs. Indices are 1-BASED in the file and mapped to
  0-based in memory; an index of 0 is a format error.

Readers stream: they yield one vector at a time and never buffer the file.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Union

import numpy as np

from .vectors import DataVector

__all__ = ["DatasetFormatError", "EvalRecord", "read_dense", "read_sparse", "write_eval_csv"]

Source = Union[str, IO[str], Iterable[str]]


class DatasetFormatError(ValueError):
    """Raised for malformed dataset lines; carries the 1-based line number."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def _lines(source: Source):
    if isinstance(source, str):
        with open(source) as f:
            yield from f
    else:
        yield from source


def read_dense(source: Source, dim: Optional[int] = None) -> Iterator[DataVector]:
    """Yield dense vectors from a dense text source.

    The dimension is taken from the first data line unless given; every
    later line must match it.
    """
    for lineno, line in enumerate(_lines(source), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            values = np.array([float(tok) for tok in stripped.split()])
        except ValueError as exc:
            raise DatasetFormatError(lineno, f"malformed number: {exc}") from None
        if dim is None:
            dim = values.size
        elif values.size != dim:
            raise DatasetFormatError(
                lineno, f"expected {dim} entries, found {values.size}"
            )
        yield DataVector.dense(values)


def read_sparse(source: Source, dim: int) -> Iterator[DataVector]:
    """Yield sparse vectors of the declared dimension from index:value lines."""
    if dim <= 0:
        raise ValueError("declared dimension must be positive")
    for lineno, line in enumerate(_lines(source), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if tokens and ":" not in tokens[0]:
            tokens = tokens[1:]  # leading label, discarded
        indices = []
        values = []
        for tok in tokens:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DatasetFormatError(lineno, f"malformed token {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise DatasetFormatError(lineno, f"malformed token {tok!r}") from None
            if idx < 1:
                raise DatasetFormatError(
                    lineno, f"index {idx} out of range (file indices are 1-based)"
                )
            if idx > dim:
                raise DatasetFormatError(
                    lineno, f"index {idx} exceeds declared dimension {dim}"
                )
            if indices and idx - 1 <= indices[-1]:
                raise DatasetFormatError(lineno, "indices must be strictly increasing")
            if val != 0.0:
                indices.append(idx - 1)
                values.append(val)
        yield DataVector.sparse(dim, indices, values)


@dataclass(frozen=True)
class EvalRecord:
    """One evaluation row: a query's exact density, an estimate, and the
    byte cost of the structure that produced it.

    ``exact`` may be None when no ground truth is available (the query
    command); then, as when exact == 0, the relative error is left blank.
    """

    query_id: int
    method: str
    params: str
    bytes: int
    exact: Optional[float]
    estimate: float

    @property
    def rel_error(self) -> Optional[float]:
        if self.exact is None or self.exact == 0.0:
            return None
        return (self.estimate - self.exact) / self.exact


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.17g}"


def write_eval_csv(records: Iterable[EvalRecord], sink: Union[str, IO[str]]) -> None:
    """Write records as CSV, sorted by (query_id, method, params).

    Floats are rendered with 17 significant digits so parsing them back
    recovers the exact doubles.
    """
    rows = sorted(records, key=lambda r: (r.query_id, r.method, r.params))

    def emit(out):
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            ["query_id", "method", "params", "bytes", "exact", "estimate", "rel_error"]
        )
        for r in rows:
            writer.writerow(
                [
                    r.query_id,
                    r.method,
                    r.params,
                    r.bytes,
                    _fmt(r.exact),
                    _fmt(r.estimate),
                    _fmt(r.rel_error),
                ]
            )

    if isinstance(sink, str):
        with open(sink, "w", newline="") as f:
            emit(f)
    else:
        emit(sink)
