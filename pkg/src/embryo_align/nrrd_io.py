"""Strict reader/writer for the NRRD subset used by this package.

Header: `NRRD0004`, then exactly, in order: type (float or uint8),
dimension: 3, sizes, diagonal space directions, endian: little,
encoding: raw, a blank line, then the raw little-endian payload with axis0
fastest-varying. Anything else is rejected, on purpose: files we did not
write should fail loudly rather than half-load.
"""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ParseError, TruncationError
from .volume import Mask3D, Volume3D

_FIELD_ORDER = ("type", "dimension", "sizes", "space directions", "endian",
                "encoding")
_DIRECTIONS_RE = re.compile(
    r"^\(([^,() ]+),0,0\) \(0,([^,() ]+),0\) \(0,0,([^,() ]+)\)$")


def write_volume(path, vol: Volume3D | Mask3D) -> None:
    """Write a volume or mask; the round trip through read_volume is bit-exact."""
    if isinstance(vol, Mask3D):
        type_name = "uint8"
        payload = np.ascontiguousarray(vol.data, dtype=np.uint8)
    elif isinstance(vol, Volume3D):
        type_name = "float"
        payload = np.asarray(vol.data, dtype="<f4")
    else:
        raise ArgumentError(f"cannot write object of type {type(vol).__name__}")
    nx, ny, nz = vol.dims
    sx, sy, sz = (repr(float(s)) for s in vol.spacing)
    header = (
        "NRRD0004\n"
        f"type: {type_name}\n"
        "dimension: 3\n"
        f"sizes: {nx} {ny} {nz}\n"
        f"space directions: ({sx},0,0) (0,{sy},0) (0,0,{sz})\n"
        "endian: little\n"
        "encoding: raw\n"
        "\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(payload.ravel(order="F").tobytes())


def read_volume(path) -> Volume3D | Mask3D:
    """Read a file written by write_volume; uint8 files load as Mask3D."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n\n", 1)
    if len(parts) != 2:
        raise ParseError(f"{path}: missing blank line after header")
    try:
        header = parts[0].decode("ascii")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: non-ASCII header") from e
    payload = parts[1]
    lines = header.split("\n")
    if lines[0] != "NRRD0004":
        raise ParseError(f"{path}: bad magic {lines[0]!r}")
    fields = {}
    for pos, line in enumerate(lines[1:]):
        name, sep, value = line.partition(": ")
        if not sep or name not in _FIELD_ORDER:
            raise ParseError(f"{path}: unknown field {line!r}")
        if pos >= len(_FIELD_ORDER) or name != _FIELD_ORDER[pos]:
            raise ParseError(f"{path}: field {name!r} out of order")
        fields[name] = value
    if len(fields) != len(_FIELD_ORDER):
        raise ParseError(f"{path}: missing field "
                         f"{_FIELD_ORDER[len(fields)]!r}")

    if fields["type"] not in ("float", "uint8"):
        raise ParseError(f"{path}: unsupported type {fields['type']!r}")
    if fields["dimension"] != "3":
        raise ParseError(f"{path}: dimension must be 3")
    if fields["endian"] != "little":
        raise ParseError(f"{path}: endian must be little")
    if fields["encoding"] != "raw":
        raise ParseError(f"{path}: encoding must be raw")
    try:
        dims = tuple(int(v) for v in fields["sizes"].split())
    except ValueError as e:
        raise ParseError(f"{path}: bad sizes {fields['sizes']!r}") from e
    if len(dims) != 3 or min(dims) < 1:
        raise ParseError(f"{path}: bad sizes {fields['sizes']!r}")
    m = _DIRECTIONS_RE.match(fields["space directions"])
    if not m:
        raise ParseError(f"{path}: bad space directions "
                         f"{fields['space directions']!r}")
    try:
        spacing = tuple(float(g) for g in m.groups())
    except ValueError as e:
        raise ParseError(f"{path}: bad space directions") from e
    if not all(np.isfinite(s) and s > 0 for s in spacing):
        raise ParseError(f"{path}: spacing must be positive and finite")

    itemsize = 1 if fields["type"] == "uint8" else 4
    expected = dims[0] * dims[1] * dims[2] * itemsize
    if len(payload) != expected:
        raise TruncationError(
            f"{path}: payload has {len(payload)} bytes, header promises {expected}")
    if fields["type"] == "uint8":
        data = np.frombuffer(payload, dtype=np.uint8)
        data = data.reshape(dims, order="F").copy()
        return Mask3D(data=data, spacing=spacing)
    data = np.frombuffer(payload, dtype="<f4").reshape(dims, order="F")
    data = np.ascontiguousarray(data)
    try:
        return Volume3D(data=data, spacing=spacing)
    except ArgumentError as e:
        raise ParseError(f"{path}: {e}") from e
