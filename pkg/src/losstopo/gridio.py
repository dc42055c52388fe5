"""LLG grid files and CSV ingestion.

Binary layout::

    b"LLG1" | u32 little-endian header length | UTF-8 JSON header | N float64 LE

The header is ``{"version": 1, "shape": [...], "axes": [{"range", "steps",
"eigenvalue"?}], "meta": {...}}``; values follow in row-major order, last axis
fastest. The JSON variant is the same header with an inline ``"values"`` list.
Files whose first byte is ``{`` are read as the JSON variant.
"""

from __future__ import annotations

import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, NumericError, UsageError
from .sampler import LandscapeGrid

__all__ = ["MAGIC", "write_llg", "read_llg", "read_csv_grid", "atomic_write", "header_of"]

MAGIC = b"LLG1"
VERSION = 1


def atomic_write(path, data: bytes | str) -> None:
    """Write to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def header_of(grid: LandscapeGrid) -> dict:
    axes = []
    for i, (r, k) in enumerate(zip(grid.ranges, grid.shape)):
        ax = {"range": r, "steps": k}
        if grid.eigenvalues is not None and grid.eigenvalues[i] is not None:
            ax["eigenvalue"] = float(grid.eigenvalues[i])
        axes.append(ax)
    return {"version": VERSION, "shape": list(grid.shape), "axes": axes, "meta": grid.meta}


def _dump_header(header: dict) -> str:
    return json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_llg(grid: LandscapeGrid, path, fmt: str | None = None) -> None:
    """Write ``grid``; ``fmt`` is ``"binary"`` or ``"json"`` (default: by the ``.json`` suffix)."""
    path = Path(path)
    fmt = fmt or ("json" if path.suffix.lower() == ".json" else "binary")
    header = header_of(grid)
    if fmt == "json":
        doc = dict(header, values=[float(v) for v in grid.values])
        atomic_write(path, _dump_header(doc) + "\n")
        return
    if fmt != "binary":
        raise UsageError(f"unknown LLG format {fmt!r}")
    head = _dump_header(header).encode("utf-8")
    payload = MAGIC + struct.pack("<I", len(head)) + head
    payload += np.ascontiguousarray(grid.values, dtype="<f8").tobytes()
    atomic_write(path, payload)


def _grid_from_header(header: dict, values: np.ndarray, source) -> LandscapeGrid:
    try:
        version = header["version"]
        shape = [int(k) for k in header["shape"]]
        axes = header["axes"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{source}: malformed LLG header ({exc})") from exc
    if version != VERSION:
        raise FormatError(f"{source}: unsupported LLG version {version!r}")
    if len(axes) != len(shape) or any(int(a.get("steps", -1)) != k for a, k in zip(axes, shape)):
        raise FormatError(f"{source}: axes do not match shape {shape}")
    n_expected = math.prod(shape)
    if values.shape[0] != n_expected:
        raise FormatError(
            f"{source}: shape {shape} needs N={n_expected} values but the file holds {values.shape[0]}"
        )
    if not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericError(f"{source}: non-finite value {values[bad]} at flat index {bad}")
    eig = [a.get("eigenvalue") for a in axes]
    return LandscapeGrid(
        shape=tuple(shape),
        values=values,
        ranges=tuple(float(a["range"]) for a in axes),
        eigenvalues=None if all(e is None for e in eig) else tuple(eig),
        meta=header.get("meta") or {},
    )


def read_llg(path) -> LandscapeGrid:
    """Read a binary or JSON LLG file.

    Raises:
        FormatError: bad magic, malformed header, or a value count that does
            not match the shape (the message names both counts).
        NumericError: the file contains NaN or infinite values.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if raw[:1] == b"{":
        try:
            doc = json.loads(raw.decode("utf-8"))
            values = np.asarray(doc.pop("values"), dtype=float).ravel()
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}: not an LLG file ({exc})") from exc
        return _grid_from_header(doc, values, path)
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not an LLG file (bad magic {raw[:4]!r})")
    if len(raw) < 8:
        raise FormatError(f"{path}: truncated LLG header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise FormatError(f"{path}: header claims {hlen} bytes, file has {len(raw) - 8}")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed LLG header ({exc})") from exc
    body = raw[8 + hlen :]
    try:
        n_expected = math.prod(int(k) for k in header["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed LLG header ({exc})") from exc
    if len(body) % 8:
        raise FormatError(
            f"{path}: value section is {len(body)} bytes, not a whole number of float64; "
            f"expected N={n_expected} values ({8 * n_expected} bytes)"
        )
    values = np.frombuffer(body, dtype="<f8").astype(float)
    return _grid_from_header(header, values, path)


def read_csv_grid(path, ranges: float = 1.0, delimiter: str = ",") -> LandscapeGrid:
    """2D grid from a CSV table: row ``i`` holds axis-0 index ``i``, columns run along axis 1."""
    path = Path(path)
    try:
        table = np.loadtxt(path, delimiter=delimiter, ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: cannot parse CSV grid ({exc})") from exc
    if not np.all(np.isfinite(table)):
        raise NumericError(f"{path}: CSV grid contains non-finite values")
    return LandscapeGrid.from_array(table, ranges=ranges, meta={"source": "csv"})
