"""ASCII PLY / PCD point cloud reading and writing.

Only the x, y, z columns are kept; other per-point attributes are skipped.
Binary encodings are refused with :class:`UnsupportedFormatError`.  Every
malformed input raises :class:`ParseError` carrying a 1-based line number.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import ParseError, UnsupportedFormatError, WriteError

_PLY_SCALARS = {
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double",
    "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64",
}


def _decode(data) -> list[str]:
    if isinstance(data, str):
        text = data
    else:
        try:
            text = bytes(data).decode("ascii")
        except UnicodeDecodeError as exc:
            line = bytes(data)[: exc.start].count(b"\n") + 1
            raise ParseError("non-ASCII byte in file", line) from None
    return text.splitlines()


def _parse_body(lines, first: int, n: int, ncols: int, xyz: tuple) -> np.ndarray:
    """Parse ``n`` rows of ``ncols`` numbers starting at index ``first``."""
    if n == 0:
        return np.empty((0, 3))
    body = lines[first:first + n]
    if len(body) < n:
        raise ParseError(f"expected {n} points, file ends after {len(body)}", first + len(body) + 1)
    # fast path; fall back to a line scan to report where parsing failed
    try:
        flat = np.array(" ".join(body).split(), dtype=float)
        ok = flat.size == n * ncols
    except ValueError:
        ok = False
    if ok:
        pts = flat.reshape(n, ncols)[:, list(xyz)]
        if np.all(np.isfinite(pts)):
            return pts.copy()
    for i, line in enumerate(body):
        tok = line.split()
        lineno = first + i + 1
        if len(tok) != ncols:
            raise ParseError(f"expected {ncols} values, found {len(tok)}", lineno)
        for k in xyz:
            try:
                v = float(tok[k])
            except ValueError:
                raise ParseError(f"non-numeric coordinate {tok[k]!r}", lineno) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite coordinate {tok[k]!r}", lineno)
        for k, t in enumerate(tok):
            try:
                float(t)
            except ValueError:
                raise ParseError(f"non-numeric value {t!r}", lineno) from None
    raise ParseError("could not parse point data", first + 1)


def _check_trailing(lines, start: int):
    for i in range(start, len(lines)):
        if lines[i].strip():
            raise ParseError("unexpected data after the declared points", i + 1)


def parse_ply(data) -> np.ndarray:
    lines = _decode(data)
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    elements = []  # [name, count, [(prop, is_list)]]
    fmt = None
    end = None
    for i in range(1, len(lines)):
        tok = lines[i].split()
        lineno = i + 1
        if not tok:
            continue
        key = tok[0]
        if key == "format":
            if len(tok) != 3:
                raise ParseError("malformed format line", lineno)
            fmt = tok[1]
            if fmt in ("binary_little_endian", "binary_big_endian"):
                raise UnsupportedFormatError(f"binary PLY ({fmt}) is not supported", lineno)
            if fmt != "ascii":
                raise ParseError(f"unknown PLY format {fmt!r}", lineno)
        elif key in ("comment", "obj_info"):
            continue
        elif key == "element":
            if len(tok) != 3:
                raise ParseError("malformed element line", lineno)
            try:
                count = int(tok[2])
            except ValueError:
                raise ParseError(f"bad element count {tok[2]!r}", lineno) from None
            if count < 0:
                raise ParseError("negative element count", lineno)
            elements.append([tok[1], count, []])
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", lineno)
            if len(tok) == 3 and tok[1] in _PLY_SCALARS:
                elements[-1][2].append((tok[2], False))
            elif len(tok) == 5 and tok[1] == "list" and tok[2] in _PLY_SCALARS and tok[3] in _PLY_SCALARS:
                elements[-1][2].append((tok[4], True))
            else:
                raise ParseError("malformed property line", lineno)
        elif key == "end_header":
            end = i
            break
        else:
            raise ParseError(f"unknown header keyword {key!r}", lineno)
    if end is None:
        raise ParseError("missing end_header", len(lines) + 1)
    if fmt is None:
        raise ParseError("missing format line", end + 1)

    row = end + 1
    points = None
    for name, count, props in elements:
        if name == "vertex":
            if points is not None:
                raise ParseError("duplicate vertex element", row + 1)
            if any(is_list for _, is_list in props):
                raise ParseError("list properties in the vertex element are not supported", row + 1)
            names = [p for p, _ in props]
            try:
                xyz = tuple(names.index(c) for c in "xyz")
            except ValueError:
                raise ParseError("vertex element lacks x, y, z properties", end + 1) from None
            points = _parse_body(lines, row, count, len(names), xyz)
        else:
            if len(lines) - row < count:
                raise ParseError(f"element {name!r} truncated", len(lines) + 1)
        row += count
    if points is None:
        raise ParseError("no vertex element", end + 1)
    _check_trailing(lines, row)
    return points


_PCD_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT", "VIEWPOINT", "POINTS", "DATA")


def parse_pcd(data) -> np.ndarray:
    lines = _decode(data)
    header: dict[str, tuple[list[str], int]] = {}
    end = None
    for i, line in enumerate(lines):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tok = s.split()
        key = tok[0].upper()
        if key not in _PCD_KEYS:
            raise ParseError(f"unknown header keyword {tok[0]!r}", i + 1)
        if key in header:
            raise ParseError(f"duplicate {key} line", i + 1)
        header[key] = (tok[1:], i + 1)
        if key == "DATA":
            end = i
            break
    if end is None:
        raise ParseError("missing DATA line", len(lines) + 1)
    data_tok, data_line = header["DATA"]
    if len(data_tok) != 1:
        raise ParseError("malformed DATA line", data_line)
    if data_tok[0].lower() in ("binary", "binary_compressed"):
        raise UnsupportedFormatError(f"{data_tok[0]} PCD data is not supported", data_line)
    if data_tok[0].lower() != "ascii":
        raise ParseError(f"unknown PCD data encoding {data_tok[0]!r}", data_line)
    if "FIELDS" not in header:
        raise ParseError("missing FIELDS line", data_line)
    fields, fields_line = header["FIELDS"]
    if not fields:
        raise ParseError("empty FIELDS line", fields_line)

    def ints(key, default):
        if key not in header:
            return default
        tok, ln = header[key]
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise ParseError(f"non-integer value in {key}", ln) from None
        if any(v < 0 for v in vals):
            raise ParseError(f"negative value in {key}", ln)
        return vals

    counts = ints("COUNT", [1] * len(fields))
    if len(counts) != len(fields):
        raise ParseError("COUNT does not match FIELDS", header["COUNT"][1])
    width = ints("WIDTH", None)
    height = ints("HEIGHT", [1])
    npts = ints("POINTS", None)
    if npts is not None:
        if len(npts) != 1:
            raise ParseError("malformed POINTS line", header["POINTS"][1])
        n = npts[0]
    elif width is not None and len(width) == 1 and len(height) == 1:
        n = width[0] * height[0]
    else:
        raise ParseError("missing POINTS line", data_line)
    if width is not None and len(width) == 1 and len(height) == 1 and width[0] * height[0] != n:
        raise ParseError("WIDTH * HEIGHT disagrees with POINTS", header["POINTS"][1] if npts else data_line)

    offsets = np.concatenate([[0], np.cumsum(counts)])
    try:
        xyz = tuple(int(offsets[fields.index(c)]) for c in "xyz")
    except ValueError:
        raise ParseError("FIELDS lacks x, y, z", fields_line) from None
    for c in "xyz":
        if counts[fields.index(c)] != 1:
            raise ParseError(f"field {c} must have COUNT 1", header.get("COUNT", (None, fields_line))[1])
    ncols = int(offsets[-1])
    points = _parse_body(lines, end + 1, n, ncols, xyz)
    _check_trailing(lines, end + 1 + n)
    return points


def detect_format(path, data: bytes | None = None) -> str:
    ext = Path(path).suffix.lower().lstrip(".")
    if ext in ("ply", "pcd"):
        return ext
    if data is not None and data[:3] == b"ply":
        return "ply"
    if data is not None:
        return "pcd"
    raise ParseError(f"cannot infer cloud format from {str(path)!r}")


def parse_cloud(data, fmt: str) -> np.ndarray:
    if fmt == "ply":
        return parse_ply(data)
    if fmt == "pcd":
        return parse_pcd(data)
    raise ParseError(f"unknown cloud format {fmt!r}")


def load_cloud(path) -> np.ndarray:
    """Read an ASCII PLY or PCD file into an ``(N, 3)`` array."""
    data = Path(path).read_bytes()
    return parse_cloud(data, detect_format(path, data))


def format_cloud(cloud, fmt: str) -> str:
    pts = np.asarray(cloud, dtype=float).reshape(-1, 3)
    n = len(pts)
    if fmt == "ply":
        header = [
            "ply", "format ascii 1.0", f"element vertex {n}",
            "property double x", "property double y", "property double z", "end_header",
        ]
    elif fmt == "pcd":
        header = [
            "# .PCD v0.7 - Point Cloud Data file format", "VERSION 0.7", "FIELDS x y z",
            "SIZE 8 8 8", "TYPE F F F", "COUNT 1 1 1", f"WIDTH {n}", "HEIGHT 1",
            "VIEWPOINT 0 0 0 1 0 0 0", f"POINTS {n}", "DATA ascii",
        ]
    else:
        raise ValueError(f"unknown cloud format {fmt!r}")
    rows = [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in pts.tolist()]
    return "\n".join(header + rows) + "\n"


def save_cloud(cloud, path, fmt: str | None = None) -> None:
    """Write ``cloud`` as ASCII PLY or PCD (format from ``fmt`` or the suffix)."""
    fmt = fmt or Path(path).suffix.lower().lstrip(".")
    text = format_cloud(cloud, fmt)
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise WriteError(f"cannot write {os.fspath(path)}: {exc.strerror or exc}") from exc
