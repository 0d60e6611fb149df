"""File formats: binary cubes, spectra tables, JSON documents and run reports.

Binary cube layout (all little-endian)::

    b"HSB1" | uint32 n_bands | uint32 rows_px | uint32 cols_px
    | float32[n_bands * rows_px * cols_px] band-sequential
    | optional: uint32 length | UTF-8 text of "key=<json>" lines

Band-sequential means band-major with raster row-major pixels inside each
band, which is exactly ``cube.data`` in C order.  The optional metadata
block carries ``wavelengths`` and ``band_names``.
"""

from __future__ import annotations

import csv
import json
import math
import os
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    NonFiniteValue,
    ParseError,
    RaggedRows,
    TruncatedFile,
    WriteFailure,
)
from .model import SpectralCube, as_array

MAGIC = b"HSB1"
_HEADER = struct.Struct("<4sIII")
_LEN = struct.Struct("<I")
TRACE_HEADER = ("iteration", "objective", "fit", "avg_excess_kurtosis")


def _write_bytes(path, payload: bytes) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(payload)
    except OSError as exc:
        raise WriteFailure(f"cannot write {path}: {exc}") from exc


def _write_text(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise WriteFailure(f"cannot write {path}: {exc}") from exc


# -- binary cubes ---------------------------------------------------------

def cube_to_bytes(cube: SpectralCube) -> bytes:
    with np.errstate(over="ignore"):
        data = np.ascontiguousarray(cube.data, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue("cube does not fit float32 without overflow")
    parts = [_HEADER.pack(MAGIC, cube.n_bands, cube.rows_px, cube.cols_px), data.tobytes()]
    meta = []
    if cube.wavelengths is not None:
        meta.append("wavelengths=" + json.dumps([float(w) for w in cube.wavelengths]))
    if cube.band_names is not None:
        meta.append("band_names=" + json.dumps(list(cube.band_names)))
    if meta:
        text = "\n".join(meta).encode("utf-8")
        parts += [_LEN.pack(len(text)), text]
    return b"".join(parts)


def cube_from_bytes(buf: bytes) -> SpectralCube:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {bytes(buf[:4])!r}")
    if len(buf) < _HEADER.size:
        raise TruncatedFile("header is incomplete")
    _, n, rows, cols = _HEADER.unpack_from(buf)
    count = n * rows * cols
    end = _HEADER.size + 4 * count
    if len(buf) < end:
        raise TruncatedFile(f"header promises {count} values, file holds {(len(buf) - _HEADER.size) // 4}")
    data = np.frombuffer(buf, dtype="<f4", count=count, offset=_HEADER.size)
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue("cube contains NaN or infinite values")
    meta = {}
    if len(buf) > end:
        if len(buf) < end + _LEN.size:
            raise TruncatedFile("metadata length is incomplete")
        (size,) = _LEN.unpack_from(buf, end)
        start = end + _LEN.size
        if len(buf) < start + size:
            raise TruncatedFile("metadata block is shorter than its length prefix")
        meta = _parse_meta(buf[start:start + size].decode("utf-8"))
    return SpectralCube(
        data.astype(np.float64).reshape(n, rows * cols), rows, cols,
        wavelengths=meta.get("wavelengths"), band_names=meta.get("band_names"),
    )


def _parse_meta(text: str) -> dict:
    meta = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError("metadata line lacks '='", line=lineno)
        try:
            meta[key.strip()] = json.loads(value)
        except json.JSONDecodeError as exc:
            raise ParseError(f"bad metadata value for {key!r}: {exc}", line=lineno) from exc
    return meta


def write_cube(cube: SpectralCube, path) -> None:
    _write_bytes(path, cube_to_bytes(cube))


def read_cube(path) -> SpectralCube:
    return cube_from_bytes(Path(path).read_bytes())


# -- spectra tables -------------------------------------------------------

def write_spectra(library, path) -> None:
    """Write named spectra as ``band_index,Name1,...`` with one row per band."""
    names = list(library.names)
    spectra = as_array(library.spectra)
    lines = [",".join(["band_index"] + names)]
    for b, row in enumerate(spectra):
        lines.append(",".join([str(b)] + ["%.17g" % v for v in row]))
    _write_text(path, "\n".join(lines) + "\n")


def read_spectra(path):
    """Read a spectra table into a :class:`~kbunmix.synth.SpectralLibrary`."""
    from .synth import SpectralLibrary

    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty spectra file", line=1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "band_index":
        raise ParseError("header must start with 'band_index' and name one spectrum or more", line=1)
    names = header[1:]
    values = []
    for lineno, row in enumerate(rows[1:], 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise RaggedRows(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            vals = [float(c) for c in row[1:]]
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", line=lineno)
        values.append(vals)
    if not values:
        raise ParseError("no data rows", line=2)
    return SpectralLibrary(tuple(names), np.array(values))


# -- JSON documents -------------------------------------------------------

def write_json(obj, path) -> None:
    _write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc


# -- reports --------------------------------------------------------------

def trace_rows(result):
    for t, (obj, fit, k) in enumerate(zip(result.objective_trace, result.fit_trace,
                                          result.kurtosis_trace)):
        yield t, obj, fit, k


def write_traces(result, path) -> None:
    """One header line plus ``iterations_run + 1`` rows, initial point first."""
    lines = [",".join(TRACE_HEADER)]
    for t, obj, fit, k in trace_rows(result):
        lines.append(f"{t},{float(obj)!r},{float(fit)!r},{float(k)!r}")
    _write_text(path, "\n".join(lines) + "\n")


def read_traces(path) -> np.ndarray:
    """Trace table as an array with columns ``TRACE_HEADER``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRACE_HEADER:
            raise ParseError(f"unexpected trace header {header}", line=1)
        return np.loadtxt(fh, delimiter=",", ndmin=2)


def result_summary(result) -> dict:
    return {
        "config": result.config.to_dict(),
        "iterations_run": result.iterations_run,
        "termination": result.termination,
        "floored_count": result.floored_count,
        "clamped_count": result.clamped_count,
        "degenerate_kurtosis": result.degenerate_kurtosis,
        "final_objective": result.objective_trace[-1],
        "final_fit": result.fit_trace[-1],
        "final_avg_excess_kurtosis": result.kurtosis_trace[-1],
        "extra": {k: v for k, v in result.extra.items() if _jsonable(v)},
    }


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


def write_report(path, report=None, result=None) -> dict:
    """Write an evaluation and/or run report as JSON.

    When ``result`` is given, its traces go to ``<stem>.traces.csv`` next
    to ``path`` and that file name is recorded under ``"traces"``.
    Returns the document that was written.
    """
    path = Path(path)
    if not path.parent.exists():
        raise WriteFailure(f"directory {path.parent} does not exist")
    doc = {}
    if report is not None:
        doc["evaluation"] = report.to_dict()
    if result is not None:
        doc["run"] = result_summary(result)
        traces = path.with_name(path.stem + ".traces.csv")
        write_traces(result, traces)
        doc["traces"] = traces.name
    write_json(doc, path)
    return doc


def read_report(path) -> dict:
    doc = read_json(path)
    if "evaluation" in doc:
        from .metrics import EvaluationReport

        doc["evaluation"] = EvaluationReport.from_dict(doc["evaluation"])
    return doc


def ensure_dir(path) -> Path:
    path = Path(path)
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise WriteFailure(f"cannot create {path}: {exc}") from exc
    return path
