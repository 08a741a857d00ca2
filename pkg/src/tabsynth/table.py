"""Raw string tables and their CSV interchange."""

import csv
import io
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from ._validation import ValidationError


@dataclass
class RawTable:
    """Column-oriented table of string cells; ``None`` marks a missing cell."""

    columns: list
    data: dict

    def __post_init__(self):
        self.columns = list(self.columns)
        if len(set(self.columns)) != len(self.columns):
            dupes = sorted({c for c in self.columns if self.columns.count(c) > 1})
            raise ValidationError(f"duplicate column names: {dupes}")
        if set(self.data) != set(self.columns):
            raise ValidationError("data keys do not match column names")
        lengths = {len(self.data[c]) for c in self.columns}
        if len(lengths) > 1:
            raise ValidationError("table is not rectangular")
        self.data = {c: np.asarray(self.data[c], dtype=object) for c in self.columns}

    @classmethod
    def from_rows(cls, columns, rows):
        columns = list(columns)
        for i, row in enumerate(rows):
            if len(row) != len(columns):
                raise ValidationError(
                    f"row {i} has {len(row)} cells, expected {len(columns)}"
                )
        cols = list(zip(*rows)) if rows else [() for _ in columns]
        return cls(columns, {c: list(v) for c, v in zip(columns, cols)})

    @classmethod
    def empty(cls, columns):
        return cls(columns, {c: [] for c in columns})

    @property
    def n_rows(self):
        return len(self.data[self.columns[0]]) if self.columns else 0

    def __len__(self):
        return self.n_rows

    def __getitem__(self, name):
        return self.data[name]

    def rows(self):
        return [list(r) for r in zip(*(self.data[c] for c in self.columns))]

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return RawTable(self.columns, {c: self.data[c][idx] for c in self.columns})

    def equals(self, other):
        return (self.columns == other.columns
                and all(list(self.data[c]) == list(other.data[c]) for c in self.columns))


def read_csv(path, schema=None):
    """Read a UTF-8, comma-separated CSV with a header row.

    Empty fields become missing, as do cells matching a column's declared
    sentinels when ``schema`` is given.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ValidationError(f"{path}: file is empty") from None
            rows = []
            for i, row in enumerate(reader):
                if len(row) != len(header):
                    raise ValidationError(
                        f"{path}: data row {i} has {len(row)} fields, expected {len(header)}"
                    )
                rows.append([cell if cell != "" else None for cell in row])
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    table = RawTable.from_rows(header, rows)
    if schema is not None:
        table = schema.apply_sentinels(table)
    return table


def _atomic_open(path):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    return fd, tmp


def atomic_write_bytes(path, payload):
    fd, tmp = _atomic_open(path)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def table_to_csv_text(table):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows():
        writer.writerow(["" if v is None else v for v in row])
    return buf.getvalue()


def write_csv(table, path):
    atomic_write_text(path, table_to_csv_text(table))
