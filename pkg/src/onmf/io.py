"""Text matrix files and trace CSV output.

Matrix files start with a ``F K`` line followed by ``F`` rows of ``K``
numbers. The loader also accepts headerless comma- or whitespace-separated
numeric files.
"""

import csv
import io
import os

import numpy as np

TRACE_FIELDS = ("t", "samples_seen", "empirical_loss", "eta", "stationarity_residual", "wall_ms")


class DataError(ValueError):
    """Malformed or unreadable input data."""


def save_matrix(path, M):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]} {M.shape[1]}\n")
        for row in M:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def _split(line):
    return line.replace(",", " ").split()


def load_matrix(path):
    try:
        with open(path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as err:
        raise DataError(f"cannot read matrix file {path}: {err}") from None
    if not lines:
        raise DataError(f"empty matrix file {path}")
    rows = [_split(ln) for ln in lines]
    head = rows[0]
    if len(head) == 2 and all(tok.isdigit() for tok in head):
        F, K = int(head[0]), int(head[1])
        body = rows[1:]
        if len(body) == F and all(len(r) == K for r in body):
            rows = body
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"ragged rows in {path}")
    try:
        M = np.array([[float(tok) for tok in r] for r in rows])
    except ValueError as err:
        raise DataError(f"non-numeric entry in {path}: {err}") from None
    if not np.all(np.isfinite(M)):
        raise DataError(f"non-finite entry in {path}")
    return M


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".12g")


def trace_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for rec in records:
        w.writerow([_fmt(getattr(rec, name)) for name in TRACE_FIELDS])
    return buf.getvalue()


def write_trace(path, records):
    with open(path, "w", newline="") as fh:
        fh.write(trace_csv(records))


def read_trace(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
